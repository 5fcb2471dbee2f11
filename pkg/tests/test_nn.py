"""Finite-difference checks of every op, plus optimizer and checkpoint tests."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from npbe.nn import tensor as T
from npbe.nn.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from npbe.nn.gradcheck import check_gradients, relative_error
from npbe.nn.optim import RMSProp, RMSPropConfig, clip_grad_norm, global_norm, glorot_uniform

OP_TOL = 1e-4


def p64(rng, *shape):
    return T.parameter(rng.normal(size=shape).astype(np.float64))


def weighted(y: T.Tensor, rng) -> T.Tensor:
    """Scalar loss sum(y * r) with fixed random r so every output coordinate matters."""
    r = T.Tensor(np.random.default_rng(99).normal(size=y.shape))
    return T.sum_all(T.mul(y, r))


def _cases():
    """name -> (builder(rng) -> (loss_fn, tensors))."""
    cases = {}

    def reg(name):
        def deco(f):
            cases[name] = f
            return f
        return deco

    @reg("add")
    def _(rng):
        a, b = p64(rng, 3, 4), p64(rng, 3, 4)
        return lambda: weighted(T.add(a, b), rng), [a, b]

    @reg("add_bias")
    def _(rng):
        a, b = p64(rng, 2, 3, 4), p64(rng, 4)
        return lambda: weighted(T.add(a, b), rng), [a, b]

    @reg("sub")
    def _(rng):
        a, b = p64(rng, 3, 4), p64(rng, 3, 4)
        return lambda: weighted(T.sub(a, b), rng), [a, b]

    @reg("mul")
    def _(rng):
        a, b = p64(rng, 3, 4), p64(rng, 3, 4)
        return lambda: weighted(T.mul(a, b), rng), [a, b]

    @reg("scale")
    def _(rng):
        a = p64(rng, 3, 4)
        return lambda: weighted(T.scale(a, -1.7), rng), [a]

    @reg("matmul")
    def _(rng):
        x, w = p64(rng, 2, 3, 4), p64(rng, 4, 5)
        return lambda: weighted(T.matmul(x, w), rng), [x, w]

    @reg("dense")
    def _(rng):
        x, w, b = p64(rng, 3, 4), p64(rng, 4, 5), p64(rng, 5)
        return lambda: weighted(T.dense(x, w, b), rng), [x, w, b]

    @reg("tanh")
    def _(rng):
        a = p64(rng, 3, 4)
        return lambda: weighted(T.tanh(a), rng), [a]

    @reg("sigmoid")
    def _(rng):
        a = p64(rng, 3, 4)
        return lambda: weighted(T.sigmoid(a), rng), [a]

    @reg("elem_max")
    def _(rng):
        a, b = p64(rng, 3, 4), p64(rng, 3, 4)
        return lambda: weighted(T.elem_max(a, b), rng), [a, b]

    @reg("concat")
    def _(rng):
        a, b = p64(rng, 2, 3), p64(rng, 2, 5)
        return lambda: weighted(T.concat([a, b]), rng), [a, b]

    @reg("slice_last")
    def _(rng):
        a = p64(rng, 2, 7)
        return lambda: weighted(T.slice_last(a, 2, 5), rng), [a]

    @reg("take")
    def _(rng):
        a = p64(rng, 2, 4, 3)
        return lambda: weighted(T.take(a, 1, axis=1), rng), [a]

    @reg("stack")
    def _(rng):
        a, b = p64(rng, 2, 3), p64(rng, 2, 3)
        return lambda: weighted(T.stack([a, b], axis=1), rng), [a, b]

    @reg("reshape")
    def _(rng):
        a = p64(rng, 2, 6)
        return lambda: weighted(T.reshape(a, (3, 4)), rng), [a]

    @reg("expand")
    def _(rng):
        a = p64(rng, 2, 3)
        return lambda: weighted(T.expand(a, 1, 4), rng), [a]

    @reg("embedding")
    def _(rng):
        table = p64(rng, 6, 3)
        ids = np.array([[0, 2, 2], [5, 1, 0]])
        return lambda: weighted(T.embedding(ids, table), rng), [table]

    @reg("sum_all")
    def _(rng):
        a = p64(rng, 3, 4)
        return lambda: T.sum_all(T.mul(a, a)), [a]

    @reg("mean_all")
    def _(rng):
        a = p64(rng, 3, 4)
        return lambda: T.mean_all(T.mul(a, a)), [a]

    @reg("softmax")
    def _(rng):
        a = p64(rng, 3, 5)
        mask = np.ones((3, 5), dtype=bool)
        mask[0, 3:] = False
        return lambda: weighted(T.softmax(a, mask), rng), [a]

    @reg("log_softmax")
    def _(rng):
        a = p64(rng, 3, 5)
        return lambda: weighted(T.log_softmax(a), rng), [a]

    @reg("nll")
    def _(rng):
        a = p64(rng, 4, 5)
        tgt = np.array([0, 4, 2, 2])
        return lambda: weighted(T.nll(a, tgt), rng), [a]

    @reg("weighted_sum")
    def _(rng):
        w, v = p64(rng, 2, 3), p64(rng, 2, 3, 4)
        return lambda: weighted(T.weighted_sum(w, v), rng), [w, v]

    @reg("blend")
    def _(rng):
        a, b = p64(rng, 3, 4), p64(rng, 3, 4)
        m = np.array([[1], [0], [1]], dtype=bool)
        return lambda: weighted(T.blend(m, a, b), rng), [a, b]

    @reg("add_gaussian_noise")
    def _(rng):
        a = p64(rng, 3, 4)
        # a fresh generator per call makes the noise a fixed offset
        return lambda: weighted(T.add_gaussian_noise(a, 0.1, np.random.default_rng(5), True), rng), [a]

    @reg("lstm_cell")
    def _(rng):
        x, h, c = p64(rng, 3, 2), p64(rng, 3, 4), p64(rng, 3, 4)
        w, b = p64(rng, 6, 16), p64(rng, 16)
        mask = np.array([1, 0, 1], dtype=bool)

        def loss():
            s = T.lstm_cell(x, h, c, w, b, mask)
            return T.add(weighted(s.h, rng), weighted(T.scale(s.c, 0.5), rng))

        return loss, [x, h, c, w, b]

    @reg("lstm_sequence")
    def _(rng):
        x, w, b = p64(rng, 3, 5, 2), p64(rng, 6, 16), p64(rng, 16)
        mask = np.array([[1, 1, 1, 1, 1], [1, 1, 0, 0, 0], [1, 1, 1, 1, 0]], dtype=bool)
        return lambda: weighted(T.lstm_sequence(x, w, b, mask), rng), [x, w, b]

    @reg("lstm_sequence_reverse")
    def _(rng):
        x, w, b = p64(rng, 3, 5, 2), p64(rng, 6, 16), p64(rng, 16)
        mask = np.array([[1, 1, 1, 1, 1], [1, 1, 0, 0, 0], [1, 1, 1, 1, 0]], dtype=bool)
        return lambda: weighted(T.lstm_sequence(x, w, b, mask, reverse=True), rng), [x, w, b]

    return cases


CASES = _cases()


@pytest.mark.parametrize("name", sorted(CASES))
def test_op_gradient(name):
    rng = np.random.default_rng(abs(hash(name)) % 2**32)
    loss_fn, tensors = CASES[name](rng)
    err = check_gradients(loss_fn, tensors, np.random.default_rng(0), probes=20, h=1e-5)
    assert err < OP_TOL, f"{name}: relative error {err:.2e}"


def test_gradcheck_detects_wrong_gradient():
    a = T.parameter(np.array([0.3, -1.2, 2.0]))

    def broken():
        def fn(g):
            a.accumulate(2.5 * g * a.data)  # true derivative of a^2 is 2a
        return T.sum_all(T._node(a.data ** 2, (a,), fn))

    assert check_gradients(broken, [a], np.random.default_rng(0), probes=5) > 0.1


def test_relative_error_floor():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1e-9, 2e-9) == pytest.approx(1e-3)  # floor, not 0.5
    assert relative_error(1.0, 1.1) == pytest.approx(0.1 / 1.1)


def test_lstm_sequence_matches_chained_cells():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(3, 6, 4))
    w = rng.normal(size=(4 + 5, 20))
    b = rng.normal(size=20)
    mask = np.array([[1] * 6, [1, 1, 1, 0, 0, 0], [1] * 5 + [0]], dtype=bool)
    seq = T.lstm_sequence(T.Tensor(x), T.Tensor(w), T.Tensor(b), mask).data
    for reverse in (False, True):
        seq = T.lstm_sequence(T.Tensor(x), T.Tensor(w), T.Tensor(b), mask, reverse=reverse).data
        h, c = T.zero_state(3, 5, np.float64)
        order = range(5, -1, -1) if reverse else range(6)
        for i in order:
            h, c = T.lstm_cell(T.Tensor(x[:, i]), h, c, T.Tensor(w), T.Tensor(b), mask[:, i])
            np.testing.assert_allclose(seq[:, i], h.data, atol=1e-12)


def test_lstm_masked_rows_carry_state():
    rng = np.random.default_rng(2)
    h = T.Tensor(rng.normal(size=(2, 3)))
    c = T.Tensor(rng.normal(size=(2, 3)))
    s = T.lstm_cell(T.Tensor(rng.normal(size=(2, 2))), h, c, T.Tensor(rng.normal(size=(5, 12))),
                    T.Tensor(np.zeros(12)), np.array([0, 1], dtype=bool))
    np.testing.assert_array_equal(s.h.data[0], h.data[0])
    np.testing.assert_array_equal(s.c.data[0], c.data[0])
    assert not np.allclose(s.h.data[1], h.data[1])


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8))
def test_softmax_is_a_distribution(values):
    z = np.array([values])
    p = T.softmax_np(z)
    assert np.all(p >= 0)
    assert p.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(np.exp(T.log_softmax_np(z)), p, rtol=1e-9, atol=1e-12)


def test_softmax_mask_zeroes_excluded():
    p = T.softmax_np(np.array([[5.0, 1.0, 2.0]]), np.array([[False, True, True]]))
    assert p[0, 0] == 0 and p.sum() == pytest.approx(1.0)


def test_nll_matches_log_softmax():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(4, 7))
    tgt = np.array([1, 6, 0, 3])
    out = T.nll(T.Tensor(z), tgt).data
    np.testing.assert_allclose(out, -T.log_softmax_np(z)[np.arange(4), tgt])
    with pytest.raises(IndexError):
        T.nll(T.Tensor(z), np.array([0, 0, 0, 7]))


def test_shape_errors():
    a = T.Tensor(np.zeros((2, 3)))
    with pytest.raises(T.ShapeError):
        T.add(a, T.Tensor(np.zeros((3, 2))))
    with pytest.raises(T.ShapeError):
        T.matmul(a, T.Tensor(np.zeros((2, 2))))


def test_backward_requires_scalar():
    a = T.parameter(np.ones((2, 2)))
    with pytest.raises(ValueError):
        T.backward(T.mul(a, a), [a])


def test_shared_subgraph_accumulates():
    a = T.parameter(np.array([1.5, -2.0]))
    y = T.mul(a, a)
    loss = T.sum_all(T.add(y, y))  # d/da 2a^2 = 4a
    T.backward(loss, [a])
    np.testing.assert_allclose(a.grad, 4 * a.data)


def test_backward_resets_previous_gradients():
    a = T.parameter(np.array([1.0, 2.0]))
    for _ in range(2):
        T.backward(T.sum_all(T.mul(a, a)), [a])
    np.testing.assert_allclose(a.grad, 2 * a.data)


def test_noise_only_in_training():
    a = T.Tensor(np.zeros((2, 3)))
    rng = np.random.default_rng(0)
    assert T.add_gaussian_noise(a, 0.5, rng, training=False) is a
    assert not np.allclose(T.add_gaussian_noise(a, 0.5, rng, training=True).data, 0)


# --------------------------------------------------------------------- optim


def test_rmsprop_matches_closed_form():
    p = T.parameter(np.array([1.0, -2.0, 0.5]))
    cfg = RMSPropConfig(lr=0.01, rho=0.9, eps=1e-8)
    opt = RMSProp({"p": p}, cfg)
    acc = np.zeros(3)
    ref = p.data.copy()
    rng = np.random.default_rng(0)
    for _ in range(5):
        g = rng.normal(size=3)
        p.grad = g.copy()
        opt.step()
        acc = 0.9 * acc + 0.1 * g * g
        ref = ref - 0.01 * g / np.sqrt(acc + 1e-8)
    np.testing.assert_allclose(p.data, ref, rtol=1e-12)


def test_rmsprop_decreases_quadratic():
    p = T.parameter(np.array([3.0, -4.0]))
    opt = RMSProp({"p": p}, RMSPropConfig(lr=0.05))
    for _ in range(300):
        T.backward(T.sum_all(T.mul(p, p)), [p])
        opt.step()
    assert np.abs(p.data).max() < 0.1


def test_clip_grad_norm():
    a, b = T.parameter(np.zeros(2)), T.parameter(np.zeros(1))
    a.grad, b.grad = np.array([3.0, 0.0]), np.array([4.0])
    norm, clipped = clip_grad_norm([a, b], 1.0)
    assert norm == pytest.approx(5.0) and clipped
    assert global_norm([a, b]) == pytest.approx(1.0)
    np.testing.assert_allclose(a.grad, [0.6, 0.0])
    norm, clipped = clip_grad_norm([a, b], 10.0)
    assert not clipped


def test_glorot_bounds():
    w = glorot_uniform(np.random.default_rng(0), (30, 50))
    r = np.sqrt(6 / 80)
    assert w.shape == (30, 50) and np.abs(w).max() <= r
    assert abs(w.std() - r / np.sqrt(3)) < 0.01


# ---------------------------------------------------------------- checkpoint


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    params = {"a/W": rng.normal(size=(3, 4)).astype(np.float32), "b": np.arange(5, dtype=np.float32)}
    optim = {"a/W": np.ones((3, 4), np.float32)}
    path = save_checkpoint(tmp_path / "ck", params, optim, {"epoch": 3, "dims": {"x": 1}})
    p2, o2, meta = load_checkpoint(path)
    assert meta == {"epoch": 3, "dims": {"x": 1}}
    for k in params:
        np.testing.assert_array_equal(p2[k], params[k])
    np.testing.assert_array_equal(o2["a/W"], optim["a/W"])
    assert not list(tmp_path.glob("*.tmp"))


def test_checkpoint_detects_corruption(tmp_path):
    path = save_checkpoint(tmp_path / "ck", {"w": np.ones(8, np.float32)})
    raw = bytearray(path.read_bytes())
    raw[-3] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    (tmp_path / "junk").write_bytes(b"hello world, not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "junk")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing")
