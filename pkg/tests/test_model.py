"""Model shapes, full-model gradient check and the uniform-loss identity."""

from __future__ import annotations

import numpy as np
import pytest

from npbe.dsl.syntax import parse
from npbe.model import (
    N_POSITIONS,
    ModelDims,
    NPBEModel,
    batch_chars,
    sequence_loss,
    uniform_loss,
)
from npbe.nn.gradcheck import check_gradients
from npbe.nn.tensor import backward

PAIRS = [("john@example.com", "john"), ("25/11/16", "25:11:16"), ("ab", "AB")]


def targets_for(texts):
    return np.array([parse(t)[0].encode() for t in texts])


TARGETS = targets_for([
    "Select(Split(x, '@'), 0)",
    "Join(Split(x, '/'), ':')",
    "ToUpper(x)",
])


def test_uniform_loss_closed_form():
    assert uniform_loss() == pytest.approx(5 * np.log(8) + 25 * np.log(25))


@pytest.mark.parametrize("scale", ["tiny", "toy"])
def test_zeroed_logits_give_uniform_loss(scale):
    model = NPBEModel(ModelDims.preset(scale), seed=1)
    model.zero_logits()
    xs, ys = zip(*PAIRS)
    loss = float(sequence_loss(model.forward(xs, ys), TARGETS).data)
    assert loss == pytest.approx(uniform_loss(), rel=1e-6)


def test_output_shapes_and_distributions():
    dims = ModelDims.tiny()
    model = NPBEModel(dims, seed=0)
    xs, ys = zip(*PAIRS)
    out = model.forward(xs, ys)
    logits = out.position_logits()
    assert len(logits) == N_POSITIONS
    for k, lg in enumerate(logits):
        assert lg.shape == (3, dims.n_funcs if k % 6 == 0 else dims.n_args)
    for p in out.probs():
        np.testing.assert_allclose(p.sum(axis=1), 1.0, rtol=1e-5)
    for w in out.attention_in:
        np.testing.assert_allclose(w.data.sum(axis=1), 1.0, rtol=1e-5)


def test_attention_ignores_padding():
    model = NPBEModel(ModelDims.tiny(), seed=0)
    out = model.forward(["a", "a much longer input"], ["b", "x"])
    w = out.attention_in[0].data
    assert np.all(w[0, 1:] == 0)


def test_rows_are_independent_of_batch():
    model = NPBEModel(ModelDims.tiny(), seed=3, dtype=np.float64)
    xs, ys = zip(*PAIRS)
    together = model.forward(xs, ys).log_probs()
    alone = model.forward([xs[1]], [ys[1]]).log_probs()
    for a, b in zip(together, alone):
        np.testing.assert_allclose(a[1], b[0], atol=1e-12)


def test_inference_is_deterministic_and_noise_free():
    model = NPBEModel(ModelDims.tiny(), seed=0)
    xs, ys = zip(*PAIRS)
    a = model.forward(xs, ys, training=False, noise=0.5, rng=np.random.default_rng(0)).log_probs()
    b = model.forward(xs, ys).log_probs()
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_full_model_gradient(seed):
    model = NPBEModel(ModelDims.tiny(4), seed=seed, dtype=np.float64)
    xs, ys = zip(*PAIRS)
    params = model.parameter_list()

    def loss_fn():
        return sequence_loss(model.forward(xs, ys), TARGETS)

    err = check_gradients(loss_fn, params, np.random.default_rng(seed), probes=20, h=1e-3, order=4)
    assert err < 1e-3


def test_state_dict_round_trip():
    a = NPBEModel(ModelDims.tiny(), seed=0)
    b = NPBEModel(ModelDims.tiny(), seed=1)
    b.load_state_dict(a.state_dict())
    xs, ys = zip(*PAIRS)
    for u, v in zip(a.forward(xs, ys).log_probs(), b.forward(xs, ys).log_probs()):
        np.testing.assert_array_equal(u, v)
    with pytest.raises((KeyError, ValueError)):
        b.load_state_dict({"nope": np.zeros(1)})


def test_parameter_counts():
    assert NPBEModel(ModelDims.toy()).n_parameters() == 72_576
    assert 1_000_000 < NPBEModel(ModelDims.paper()).n_parameters() < 1_300_000


def test_dims_validation_and_round_trip():
    with pytest.raises(ValueError):
        ModelDims(transform=32, history=64)
    with pytest.raises(ValueError):
        ModelDims.preset("huge")
    d = ModelDims.toy()
    assert ModelDims.from_dict(d.to_dict()) == d


def test_batch_chars_validation():
    ids, mask = batch_chars(["ab", "c"])
    assert ids.shape == (2, 2) and mask.tolist() == [[True, True], [True, False]]
    with pytest.raises(ValueError):
        batch_chars([""])
    with pytest.raises(ValueError):
        batch_chars(["x" * 63])
    with pytest.raises(ValueError):
        batch_chars(["café"])


def test_training_step_reduces_loss():
    from npbe.nn.optim import RMSProp, RMSPropConfig

    model = NPBEModel(ModelDims.tiny(8), seed=0)
    opt = RMSProp(model.params, RMSPropConfig(lr=1e-2))
    xs, ys = zip(*PAIRS)
    first = None
    for _ in range(30):
        loss = sequence_loss(model.forward(xs, ys), TARGETS)
        first = first if first is not None else float(loss.data)
        backward(loss, model.parameter_list())
        opt.step()
    assert float(loss.data) < 0.5 * first
