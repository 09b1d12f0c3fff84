"""Training objective, Adam/Nadam optimizer, epoch loop, gradient checking.

The objective is the mean negative log-likelihood of the target words
under teacher forcing: at step t the ground-truth word y_{t-1} is fed as
input and the model is scored on y_t.  PAD targets are masked out and
the sum is normalized by the number of scored tokens.
"""

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import decoder as dec
from . import numerics as nm
from .attention import SaliencyGrid, attend
from .vocab import BOS_ID, EOS_ID, PAD_ID

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 8  # the published setting is 64; 8 suits desk-scale runs
    epochs: int = 1
    seed: int = 0
    optimizer: str = "nadam"
    grad_clip_norm: float = 0.0  # 0 disables clipping
    max_caption_len: int = 20
    checkpoint_every: int = 0  # 0 disables periodic checkpoints

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("nadam", "adam"):
            raise ValueError("optimizer must be 'nadam' or 'adam', got %r" % self.optimizer)
        if self.max_caption_len < 1:
            raise ValueError("max_caption_len must be >= 1")


class OptimizerState:
    """Per-parameter first/second moments and the shared step counter."""

    def __init__(self):
        self.m = {}
        self.v = {}
        self.t = 0

    def moments(self, slot):
        if slot.name not in self.m:
            self.m[slot.name] = np.zeros_like(slot.value.data)
            self.v[slot.name] = np.zeros_like(slot.value.data)
        return self.m[slot.name], self.v[slot.name]


def sequence_nll(step_probs, targets, pad_mask=None):
    """Scalar mean NLL over non-pad targets; a recorded graph node.

    ``step_probs[t]`` is the vocabulary distribution scoring target
    ``targets[t]``.  PAD targets (or positions with a false mask) are
    skipped and do not count toward the normalizer.
    """
    if len(step_probs) != len(targets):
        raise ValueError(
            "got %d distributions for %d targets" % (len(step_probs), len(targets))
        )
    if pad_mask is None:
        pad_mask = [t != PAD_ID for t in targets]
    total = None
    count = 0
    for probs, target, keep in zip(step_probs, targets, pad_mask):
        if not keep or target == PAD_ID:
            continue
        term = nm.log(nm.pick(probs, target))
        total = term if total is None else nm.add(total, term)
        count += 1
    if count == 0:
        raise ValueError("sequence_nll needs at least one non-pad target")
    return nm.scale(total, -1.0 / count)


def forward_caption(params, raw, sal, token_ids):
    """Teacher-forced rollout; returns per-step distributions and targets.

    ``token_ids`` is BOS + words + EOS (+ optional right PADs, which end
    the rollout).  Attention at step t uses the state from step t-1.
    """
    grid = dec.project_features(nm.as_tensor(raw), params)
    state = dec.LstmState.initial(params.config.hidden_size)
    probs, targets = [], []
    for t in range(1, len(token_ids)):
        target = token_ids[t]
        if target == PAD_ID:
            break
        out = attend(params.config.variant, grid, sal, state.h, params.attention)
        w = dec.embed_word(token_ids[t - 1], params)
        state = dec.lstm_step(out.v_hat, w, state, params.lstm)
        probs.append(dec.output_distribution(state.h, params))
        targets.append(target)
    return probs, targets


def caption_loss(params, raw, sal, token_ids):
    probs, targets = forward_caption(params, raw, sal, token_ids)
    return sequence_nll(probs, targets)


def optimizer_step(slots, opt_state, config):
    """One Adam or Nadam update over all slots; gradients are zeroed after."""
    slots = list(slots)
    if not slots or all(not np.any(slot.grad) for slot in slots):
        warnings.warn("optimizer step with all-zero gradients: skipping")
        return

    clip = config.grad_clip_norm
    clip_scale = 1.0
    if clip and clip > 0:
        total = np.sqrt(sum(float(np.sum(slot.grad * slot.grad)) for slot in slots))
        if total > clip:
            clip_scale = clip / total

    opt_state.t += 1
    t = opt_state.t
    bc1 = 1.0 - ADAM_BETA1 ** t
    bc2 = 1.0 - ADAM_BETA2 ** t
    for slot in slots:
        g = slot.grad * clip_scale
        m, v = opt_state.moments(slot)
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        if config.optimizer == "nadam":
            step_dir = (ADAM_BETA1 * m_hat + (1.0 - ADAM_BETA1) * g / bc1) / (
                np.sqrt(v_hat) + ADAM_EPS
            )
        else:
            step_dir = m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        slot.value.data -= config.learning_rate * step_dir
        slot.zero_grad()


# ---------------------------------------------------------------------------
# dataset preparation and the epoch loop
# ---------------------------------------------------------------------------

@dataclass
class Example:
    image_id: str
    raw: np.ndarray
    sal: SaliencyGrid
    token_ids: list
    truncated: bool = False


def make_example(image_id, raw, sal, caption, vocabulary, max_caption_len):
    ids = vocabulary.encode(caption)
    words = ids[1:-1]
    truncated = len(words) > max_caption_len
    if truncated:
        words = words[:max_caption_len]
    return Example(image_id, raw, sal, [BOS_ID] + words + [EOS_ID], truncated)


def build_examples(manifest, vocabulary, split, config):
    """One training example per (image, caption) pair of the split."""
    from . import data_io

    examples = []
    for entry in manifest.split_entries(split):
        raw, sal = data_io.load_entry(manifest, entry)
        for caption in entry.captions:
            examples.append(
                make_example(entry.id, raw, sal, caption, vocabulary, config.max_caption_len)
            )
    return examples


def _batches(examples, config, epoch_index):
    """Length-bucketed batches in a seed-determined order."""
    order = sorted(range(len(examples)), key=lambda i: (len(examples[i].token_ids), i))
    chunks = [order[i:i + config.batch_size] for i in range(0, len(order), config.batch_size)]
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, epoch_index]))
    rng.shuffle(chunks)
    return chunks


@dataclass
class EpochStats:
    mean_loss: float
    tokens_per_sec: float
    num_tokens: int
    num_truncated: int


def train_epoch(examples, params, opt_state, config, epoch_index=0):
    """One pass over the examples: forward, backward, optimizer step per batch."""
    if not examples:
        raise ValueError("train_epoch needs a non-empty dataset")
    started = time.perf_counter()
    epoch_nll = 0.0
    epoch_tokens = 0
    for batch in _batches(examples, config, epoch_index):
        params.store.zero_grads()
        total = None
        tokens = 0
        for index in batch:
            ex = examples[index]
            probs, targets = forward_caption(params, ex.raw, ex.sal, ex.token_ids)
            for p, y in zip(probs, targets):
                term = nm.log(nm.pick(p, y))
                total = term if total is None else nm.add(total, term)
                tokens += 1
        loss = nm.scale(total, -1.0 / tokens)
        nm.backward(loss)
        if config.learning_rate > 0:
            optimizer_step(params.store.slots(), opt_state, config)
        else:
            params.store.zero_grads()
        epoch_nll += loss.item() * tokens
        epoch_tokens += tokens
    elapsed = max(time.perf_counter() - started, 1e-9)
    return EpochStats(
        mean_loss=epoch_nll / epoch_tokens,
        tokens_per_sec=epoch_tokens / elapsed,
        num_tokens=epoch_tokens,
        num_truncated=sum(1 for e in examples if e.truncated),
    )


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckEntry:
    name: str
    max_rel_err: float


@dataclass
class GradCheckReport:
    max_rel_err: float
    tolerance: float
    entries: list = field(default_factory=list)

    @property
    def passed(self):
        return self.max_rel_err < self.tolerance


def finite_difference_check(loss_fn, slots, tolerance, h=1e-4, analytic=None):
    """Compare analytic slot gradients against central finite differences.

    ``loss_fn`` recomputes the scalar loss from current slot values.
    ``analytic`` maps slot name to its gradient array; if omitted, the
    gradients currently stored on the slots are used.  An empty slot
    list passes vacuously.
    """
    report = GradCheckReport(max_rel_err=0.0, tolerance=tolerance)
    for slot in slots:
        grad = analytic[slot.name] if analytic is not None else slot.grad
        worst = 0.0
        flat = slot.value.data.reshape(-1)
        gflat = np.asarray(grad).reshape(-1)
        for k in range(flat.size):
            saved = flat[k]
            flat[k] = saved + h
            f_plus = loss_fn()
            flat[k] = saved - h
            f_minus = loss_fn()
            flat[k] = saved
            numeric = (f_plus - f_minus) / (2.0 * h)
            denom = max(abs(gflat[k]), abs(numeric), 1e-8)
            worst = max(worst, abs(gflat[k] - numeric) / denom)
        report.entries.append(GradCheckEntry(slot.name, worst))
        report.max_rel_err = max(report.max_rel_err, worst)
    return report


def grad_check(model_config, tolerance=1e-4, seed=0):
    """Finite-difference check of the full captioning loss for one variant.

    Builds a model at the given (tiny) sizes, a random feature grid,
    saliency grid and caption, then perturbs every scalar parameter.
    """
    params = dec.init_params(model_config, rng_seed=seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    raw = rng.normal(0.0, 1.0, (model_config.num_locations, model_config.raw_feature_size))
    sal = SaliencyGrid(rng.uniform(0.0, 1.0, model_config.num_locations))
    n_words = 4
    words = [int(w) for w in rng.integers(4, model_config.vocab_size, n_words)]
    token_ids = [BOS_ID] + words + [EOS_ID]

    # At the N(0, 0.01^2) init many gradients sit below the relative-error
    # floor, where central-difference rounding noise (~eps*|loss|/h)
    # dominates; a moderate random kick keeps the check well conditioned.
    for slot in params.store.slots():
        slot.value.data += rng.normal(0.0, 0.25, slot.value.data.shape)

    def loss_fn():
        return caption_loss(params, raw, sal, token_ids).item()

    params.store.zero_grads()
    nm.backward(caption_loss(params, raw, sal, token_ids))
    analytic = {slot.name: slot.grad.copy() for slot in params.store.slots()}
    params.store.zero_grads()
    return finite_difference_check(loss_fn, params.store.slots(), tolerance, analytic=analytic)
