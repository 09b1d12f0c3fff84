import zlib

import numpy as np
import numpy.testing as npt
import pytest

from salcap import numerics as nm
from salcap.numerics import ParamSlot, ParamStore, ShapeError, Tensor


def matmul_oracle(a, b):
    """Element-by-element triple loop."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for l in range(k):
                out[i, j] += a[i, l] * b[l, j]
    return out


def fd_grad(f, x, h=1e-4):
    """Central finite differences of scalar f at array x."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + h
        fp = f()
        flat[i] = saved - h
        fm = f()
        flat[i] = saved
        gf[i] = (fp - fm) / (2 * h)
    return g


def assert_grads_close(analytic, numeric, tol=1e-4):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    worst = np.max(np.abs(analytic - numeric) / denom)
    assert worst < tol, "max relative error %g" % worst


class TestMatmul:
    def test_identity(self):
        out = nm.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor(np.eye(2)))
        npt.assert_array_equal(out.data, [[1.0, 2.0], [3.0, 4.0]])

    def test_dot_product(self):
        out = nm.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        npt.assert_array_equal(out.data, [[11.0]])

    def test_matches_triple_loop(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        npt.assert_allclose(nm.matmul(Tensor(a), Tensor(b)).data, matmul_oracle(a, b), atol=1e-12)

    def test_random_sizes_against_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            m, k, n = rng.integers(1, 17, size=3)
            a = rng.normal(size=(m, k))
            b = rng.normal(size=(k, n))
            npt.assert_allclose(
                nm.matmul(Tensor(a), Tensor(b)).data, matmul_oracle(a, b), atol=1e-12
            )

    def test_shape_error_names_operands(self):
        with pytest.raises(ShapeError, match=r"\[2, 3\].*\[2, 2\]"):
            nm.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))

    def test_matrix_vector(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(3, 4))
        v = rng.normal(size=4)
        npt.assert_allclose(nm.matmul(Tensor(a), Tensor(v)).data, a @ v, atol=1e-12)


class TestElementwise:
    def test_sigmoid_at_zero(self):
        assert nm.sigmoid(Tensor([0.0])).data[0] == 0.5

    def test_tanh_at_zero(self):
        assert nm.tanh(Tensor([0.0])).data[0] == 0.0

    def test_hadamard(self):
        out = nm.hadamard(Tensor([1.0, 2.0, 3.0]), Tensor([4.0, 5.0, 6.0]))
        npt.assert_array_equal(out.data, [4.0, 10.0, 18.0])

    def test_relu(self):
        npt.assert_array_equal(nm.relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])

    def test_mismatched_dims(self):
        with pytest.raises(ShapeError):
            nm.add(Tensor([1.0]), Tensor([1.0, 2.0]))
        with pytest.raises(ShapeError):
            nm.hadamard(Tensor([1.0]), Tensor([1.0, 2.0]))

    def test_dispatcher(self):
        assert nm.elementwise("sigmoid", Tensor([0.0])).data[0] == 0.5
        with pytest.raises(ValueError, match="unknown elementwise"):
            nm.elementwise("exp", Tensor([0.0]))


class TestSoftmax:
    def test_uniform(self):
        npt.assert_allclose(nm.softmax_vec(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, atol=1e-15)

    def test_log_inputs(self):
        out = nm.softmax_vec(Tensor(np.log([1.0, 2.0, 3.0])))
        npt.assert_allclose(out.data, [1 / 6, 1 / 3, 1 / 2], atol=1e-15)

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            e = rng.normal(size=7)
            c = rng.normal()
            npt.assert_allclose(
                nm.softmax_vec(Tensor(e)).data, nm.softmax_vec(Tensor(e + c)).data, atol=1e-12
            )

    def test_simplex_contract(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            y = nm.softmax_vec(Tensor(rng.normal(size=rng.integers(1, 12)) * 10)).data
            assert abs(y.sum() - 1.0) < 1e-9
            assert np.all(y >= 0.0) and np.all(y <= 1.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            nm.softmax_vec(Tensor(np.zeros(0)))


class TestBackward:
    def test_sigmoid_sum_at_zero(self):
        x = Tensor(np.zeros(5))
        nm.backward(nm.tsum(nm.sigmoid(x)))
        npt.assert_allclose(x.grad, 0.25 * np.ones(5), atol=1e-15)

    def test_matmul_grad_matches_fd(self):
        rng = np.random.default_rng(5)
        w = Tensor(rng.normal(size=(3, 4)))
        x = rng.normal(size=4)
        nm.backward(nm.tsum(nm.matmul(w, Tensor(x))))
        numeric = fd_grad(lambda: np.sum(w.data @ x), w.data)
        assert_grads_close(w.grad, numeric)

    def test_accumulation_doubles(self):
        x = Tensor(np.ones(3))
        loss = nm.tsum(nm.hadamard(x, x))
        nm.backward(loss)
        first = x.grad.copy()
        nm.backward(loss)
        npt.assert_array_equal(x.grad, 2 * first)

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(ValueError, match="scalar"):
            nm.backward(Tensor([1.0, 2.0]))

    def test_reused_operand(self):
        x = Tensor([3.0])
        nm.backward(nm.tsum(nm.hadamard(x, x)))  # d(x^2)/dx = 2x
        npt.assert_allclose(x.grad, [6.0], atol=1e-12)


def _random_composite_cases():
    """(name, builder) pairs; builder(rng) -> (leaf list, loss closure)."""

    def unary(op):
        def build(rng):
            x = Tensor(rng.normal(size=rng.integers(1, 5)))
            return [x], lambda: nm.tsum(op(x))

        return build

    def binary(op):
        def build(rng):
            n = rng.integers(1, 5)
            x, y = Tensor(rng.normal(size=n)), Tensor(rng.normal(size=n))
            return [x, y], lambda: nm.tsum(op(x, y))

        return build

    def build_matmul(rng):
        m, k, n = rng.integers(1, 4, size=3)
        a, b = Tensor(rng.normal(size=(m, k))), Tensor(rng.normal(size=(k, n)))
        return [a, b], lambda: nm.tsum(nm.matmul(a, b))

    def build_softmax(rng):
        x = Tensor(rng.normal(size=rng.integers(1, 6)))
        w = rng.normal(size=x.data.size)
        return [x], lambda: nm.tsum(nm.hadamard(nm.softmax_vec(x), Tensor(w)))

    def build_log_pick(rng):
        x = Tensor(rng.uniform(0.5, 2.0, size=4))
        i = int(rng.integers(0, 4))
        return [x], lambda: nm.log(nm.pick(x, i))

    def build_row(rng):
        m = Tensor(rng.normal(size=(3, 4)))
        i = int(rng.integers(0, 3))
        return [m], lambda: nm.tsum(nm.tanh(nm.row(m, i)))

    def build_add_rowvec(rng):
        m = Tensor(rng.normal(size=(3, 2)))
        v = Tensor(rng.normal(size=2))
        return [m, v], lambda: nm.tsum(nm.sigmoid(nm.add_rowvec(m, v)))

    def build_transpose(rng):
        m = Tensor(rng.normal(size=(2, 3)))
        return [m], lambda: nm.tsum(nm.matmul(nm.transpose(m), m))

    return [
        ("sigmoid", unary(nm.sigmoid)),
        ("tanh", unary(nm.tanh)),
        ("scale", unary(lambda x: nm.scale(x, 1.7))),
        ("add", binary(nm.add)),
        ("sub", binary(nm.sub)),
        ("hadamard", binary(nm.hadamard)),
        ("matmul", build_matmul),
        ("softmax", build_softmax),
        ("log_pick", build_log_pick),
        ("row", build_row),
        ("add_rowvec", build_add_rowvec),
        ("transpose", build_transpose),
    ]


@pytest.mark.parametrize("name,builder", _random_composite_cases(), ids=lambda c: c if isinstance(c, str) else "")
def test_gradients_match_finite_differences(name, builder):
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    for _ in range(200):
        leaves, loss_fn = builder(rng)
        nm.backward(loss_fn())
        for leaf in leaves:
            analytic = leaf.grad.copy()
            leaf.grad = None
            numeric = fd_grad(lambda: loss_fn().item(), leaf.data)
            assert_grads_close(analytic, numeric)


class TestCheckedMode:
    def test_rejects_nan_when_checked(self):
        prev = nm.set_checked(True)
        try:
            with pytest.raises(ValueError, match="non-finite"):
                Tensor([np.nan])
        finally:
            nm.set_checked(prev)

    def test_allows_nan_when_unchecked(self):
        prev = nm.set_checked(False)
        try:
            Tensor([np.nan])
        finally:
            nm.set_checked(prev)


class TestParamStore:
    def test_slot_grad_shape_and_zero(self):
        slot = ParamSlot("w", np.ones((2, 3)))
        assert slot.grad.shape == (2, 3)
        slot.grad[...] = 1.0
        slot.zero_grad()
        npt.assert_array_equal(slot.grad, np.zeros((2, 3)))

    def test_duplicate_name_rejected(self):
        store = ParamStore()
        store.add("w", np.zeros(2))
        with pytest.raises(ValueError, match="duplicate"):
            store.add("w", np.zeros(3))

    def test_backward_accumulates_into_slots(self):
        store = ParamStore()
        w = store.add("w", np.ones(4))
        nm.backward(nm.tsum(nm.hadamard(w, w)))
        npt.assert_allclose(store["w"].grad, 2 * np.ones(4))
        store.zero_grads()
        npt.assert_array_equal(store["w"].grad, np.zeros(4))
