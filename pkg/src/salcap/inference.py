"""Greedy caption generation and the per-timestep attention-path trace.

Decoding starts from BOS and feeds back the argmax word of each step
until EOS or the step cap.  For the two-path variants the trace records,
per emitted word, the spatial means of the salient and contextual path
scores together with the combined attention distribution.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import decoder as dec
from . import numerics as nm
from .attention import TWO_PATH_VARIANTS, attend
from .vocab import BOS_ID, EOS_ID, PAD_ID


class UnsupportedVariantError(ValueError):
    """The requested operation needs a two-path attention variant."""


@dataclass
class DecodeResult:
    ids: list  # caption body: no BOS/EOS/PAD
    truncated: bool


@dataclass
class TraceStep:
    t: int
    token_id: int
    mean_e_sal: float
    mean_e_ctx: float
    alpha: np.ndarray


@dataclass
class AttentionTrace:
    steps: list = field(default_factory=list)

    def __len__(self):
        return len(self.steps)


def _decode_loop(params, raw, sal, max_len, capture_trace):
    config = params.config
    grid = dec.project_features(nm.as_tensor(raw), params)
    state = dec.LstmState.initial(config.hidden_size)
    trace = AttentionTrace() if capture_trace else None
    body = []
    previous = BOS_ID
    truncated = True
    for t in range(1, max_len + 1):
        out = attend(config.variant, grid, sal, state.h, params.attention)
        w = dec.embed_word(previous, params)
        state = dec.lstm_step(out.v_hat, w, state, params.lstm)
        probs = dec.output_distribution(state.h, params)
        emitted = int(np.argmax(probs.data))  # ties resolve to the lowest id
        if capture_trace:
            trace.steps.append(
                TraceStep(
                    t=t,
                    token_id=emitted,
                    mean_e_sal=float(out.e_sal.data.mean()),
                    mean_e_ctx=float(out.e_ctx.data.mean()),
                    alpha=out.alpha.data.copy(),
                )
            )
        if emitted == EOS_ID:
            truncated = False
            break
        if emitted not in (BOS_ID, PAD_ID):
            body.append(emitted)
        previous = emitted
    return DecodeResult(ids=body, truncated=truncated), trace


def greedy_decode(raw, sal, params, max_len=20):
    """Most-probable-word decoding; returns the caption body and a cap flag."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    result, _ = _decode_loop(params, raw, sal, max_len, capture_trace=False)
    return result


def trace_attention(raw, sal, params, max_len=20):
    """Greedy decode plus the per-step path-score record (two-path variants)."""
    if params.config.variant not in TWO_PATH_VARIANTS:
        raise UnsupportedVariantError(
            "attention tracing needs a two-path variant, not %r" % params.config.variant
        )
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    return _decode_loop(params, raw, sal, max_len, capture_trace=True)


def write_trace_csv(trace, vocabulary, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "word", "mean_e_sal", "mean_e_ctx"])
        for step in trace.steps:
            writer.writerow(
                [
                    step.t,
                    vocabulary.word(step.token_id),
                    "%.12g" % step.mean_e_sal,
                    "%.12g" % step.mean_e_ctx,
                ]
            )


def write_trace_alphas(trace, path):
    """Dump the per-step attention distributions as one T x L tensor file."""
    from . import data_io

    if not trace.steps:
        raise ValueError("cannot export an empty trace")
    data_io.write_tensor(nm.Tensor(np.stack([step.alpha for step in trace.steps])), path)
