import numpy as np
import pytest
from _gradcheck import CASES, check_case, draw_case
from hypothesis import given, settings
from hypothesis import strategies as st

from losgen import autodiff as ad
from losgen.autodiff import GradientTape, Tensor, backward
from losgen.nn import (
    ACTIVATIONS,
    AdamState,
    DenseLayer,
    adam_step,
    forward,
    gaussian_reparameterize,
    gumbel_softmax,
    mlp,
    parameters,
)


def layer(w, b, activation="identity", groups=None):
    return DenseLayer(Tensor(np.array(w, float)), Tensor(np.array(b, float)), activation, groups)


# -- forward -----------------------------------------------------------------


def test_identity_and_relu_layers():
    x = np.array([0.3, -0.7])
    assert np.array_equal(forward([layer(np.eye(2), [0, 0])], x), x)
    assert np.array_equal(forward([layer(np.eye(2), [0, 0], "relu")], np.array([-1.0, 2.0])), [0, 2])


def test_forward_matches_hand_rolled_oracle():
    rng = np.random.default_rng(0)
    net = mlp([5, 7, 3], hidden="tanh", final="sigmoid", rng=rng)
    x = rng.normal(size=(4, 5))
    w1, b1 = net[0].weights.data, net[0].bias.data
    w2, b2 = net[1].weights.data, net[1].bias.data
    expected = np.empty((4, 3))
    for r in range(4):
        h = [np.tanh(sum(w1[i, j] * x[r, j] for j in range(5)) + b1[i]) for i in range(7)]
        for i in range(3):
            z = sum(w2[i, j] * h[j] for j in range(7)) + b2[i]
            expected[r, i] = 1 / (1 + np.exp(-z))
    assert np.allclose(forward(net, x), expected, rtol=0, atol=1e-12)
    assert np.allclose(forward(net, x[0]), expected[0], rtol=0, atol=1e-12)


def test_forward_shape_mismatch():
    net = mlp([3, 2], rng=np.random.default_rng(0))
    with pytest.raises(ValueError, match="expected 3, got 4"):
        forward(net, np.ones(4))


def test_layer_rejects_inconsistent_shapes():
    with pytest.raises(ValueError):
        layer(np.ones((2, 3)), np.ones(3))
    with pytest.raises(ValueError):
        layer(np.ones((3, 3)), np.ones(3), "softmax", groups=(2, 2))


@settings(max_examples=60)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=4), st.floats(0, 800))
def test_softmax_groups_sum_to_one(sizes, scale):
    rng = np.random.default_rng(len(sizes))
    x = rng.normal(size=(3, sum(sizes))) * scale
    y = ad.softmax_groups(x, sizes).data
    start = 0
    assert np.all(y >= 0)
    for s in sizes:
        assert np.allclose(y[:, start : start + s].sum(axis=1), 1.0, atol=1e-9, rtol=0)
        start += s


# -- backward -----------------------------------------------------------------


def test_backward_simple_product():
    w = Tensor(np.array(3.0), requires_grad=True)
    with GradientTape() as tape:
        loss = w * 2.0
    assert backward(tape, loss, [w])[0] == pytest.approx(2.0)


def test_gradient_of_unused_parameter_is_zero():
    w = Tensor(np.ones(3), requires_grad=True)
    p = Tensor(np.ones(2), requires_grad=True)
    with GradientTape() as tape:
        loss = ad.sum(ad.square(w))
    gw, gp = tape.gradient(loss, [w, p])
    assert np.array_equal(gw, 2 * np.ones(3))
    assert np.array_equal(gp, np.zeros(2))


def test_loss_not_on_tape():
    w = Tensor(np.ones(2), requires_grad=True)
    with GradientTape():
        loss = ad.sum(w)
    with GradientTape() as other:
        pass
    with pytest.raises(ValueError, match="not recorded"):
        other.gradient(loss, [w])


def test_nothing_recorded_without_tape():
    w = Tensor(np.ones(2), requires_grad=True)
    with GradientTape() as tape:
        pass
    ad.sum(w)
    assert len(tape) == 0


def test_random_three_layer_net_against_finite_differences():
    rng = np.random.default_rng(20)
    net = mlp([4, 3, 2, 1], hidden="tanh", rng=rng)
    assert sum(p.data.size for p in parameters(net)) == 15 + 8 + 3
    x = rng.normal(size=(3, 4))

    def loss():
        return ad.mean(ad.square(forward(net, Tensor(x))))

    assert check_case(parameters(net), loss, rng, per_tensor=20) < 1e-4


@pytest.mark.parametrize("activation", ACTIVATIONS)
def test_gradcheck_each_activation(activation):
    rng = np.random.default_rng(abs(hash(activation)) % 2**32)
    for _ in range(5):
        params, loss = draw_case("layer", rng, activation=activation)
        assert check_case(params, loss, rng) < 1e-4


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(sorted(CASES)), st.integers(0, 2**32 - 1))
def test_gradcheck_property(kind, seed):
    rng = np.random.default_rng(seed)
    params, loss = draw_case(kind, rng)
    assert check_case(params, loss, rng) < 1e-4


# -- Adam ---------------------------------------------------------------------


def test_adam_zero_gradient_leaves_params():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    state = AdamState(lr=0.1)
    adam_step(state, [p], [np.zeros(2)])
    assert np.array_equal(p.data, [1.0, -2.0])
    assert state.step_count == 1


def test_adam_first_step_is_minus_lr():
    p = Tensor(np.array([0.5]), requires_grad=True)
    state = AdamState(lr=2e-4)
    state.step([p], [np.array([1.0])])
    # bias-corrected m/sqrt(v) = 1 on the first step, up to eps
    assert p.data[0] - 0.5 == pytest.approx(-2e-4 / (1 + 1e-8), rel=1e-12)


def test_adam_is_stateful():
    p = Tensor(np.array([0.0]), requires_grad=True)
    q = Tensor(np.array([0.0]), requires_grad=True)
    s1, s2 = AdamState(lr=0.01), AdamState(lr=0.01)
    s1.step([p], [np.array([1.0])])
    s1.step([p], [np.array([-3.0])])
    s2.step([q], [np.array([-3.0])])
    assert s1.step_count == 2
    assert p.data[0] - (-0.01) != pytest.approx(q.data[0])
    assert len(s1.first_moment) == 1 and s1.first_moment[0].shape == (1,)


def test_adam_rejects_non_finite():
    p = Tensor(np.zeros(2), requires_grad=True)
    with pytest.raises(FloatingPointError, match="non-finite gradient"):
        AdamState().step([p], [np.array([np.nan, 0.0])])
    with pytest.raises(ValueError):
        AdamState(lr=0)


def test_adam_minimises_quadratic():
    p = Tensor(np.array([3.0, -4.0]), requires_grad=True)
    state = AdamState(lr=0.05)
    for _ in range(2000):
        with GradientTape() as tape:
            loss = ad.sum(ad.square(p))
        state.step([p], tape.gradient(loss, [p]))
    assert np.all(np.abs(p.data) < 1e-2)


# -- stochastic relaxations -----------------------------------------------------


def test_gumbel_softmax_saturates():
    logits = np.array([0.0, 50.0, 0.0])
    y = gumbel_softmax(logits, 0.2, seed=1)
    assert y.max() > 0.999 and y.argmax() == 1


def test_gumbel_softmax_high_temperature_is_uniform():
    y = gumbel_softmax(np.zeros(4), 1e6, seed=2)
    assert np.allclose(y, 0.25, atol=1e-5)


def test_gumbel_softmax_groups_and_determinism():
    logits = np.random.default_rng(0).normal(size=(5, 6))
    y = gumbel_softmax(logits, 0.3, seed=3, groups=(2, 2, 2))
    assert np.allclose(y.reshape(5, 3, 2).sum(-1), 1.0)
    assert np.array_equal(y, gumbel_softmax(logits, 0.3, seed=3, groups=(2, 2, 2)))
    with pytest.raises(ValueError):
        gumbel_softmax(logits, 0.0, seed=3)


def test_gumbel_max_frequencies():
    # argmax of the relaxed sample is a categorical draw from softmax(logits)
    logits = np.tile([np.log(3.0), 0.0], (100_000, 1))
    y = gumbel_softmax(logits, 0.2, seed=4)
    assert np.mean(y.argmax(axis=1) == 0) == pytest.approx(0.75, abs=0.01)


def test_gumbel_softmax_is_differentiable():
    logits = Tensor(np.array([[0.2, -0.1, 0.4]]), requires_grad=True)
    with GradientTape() as tape:
        loss = ad.sum(ad.mul(gumbel_softmax(logits, 0.5, seed=5), np.array([1.0, 2.0, 3.0])))
    (g,) = tape.gradient(loss, [logits])
    assert np.all(np.isfinite(g)) and np.any(g != 0)


def test_reparameterize_moments_and_limits():
    z = gaussian_reparameterize(np.zeros(100_000), np.zeros(100_000), seed=6)
    assert abs(z.mean()) < 0.01
    assert z.var() == pytest.approx(1.0, abs=0.02)
    mu = np.array([0.3, -1.2])
    assert np.array_equal(gaussian_reparameterize(mu, np.full(2, -1e4), seed=7), mu)
    assert np.array_equal(
        gaussian_reparameterize(mu, np.zeros(2), seed=8), gaussian_reparameterize(mu, np.zeros(2), seed=8)
    )
    with pytest.raises(ValueError):
        gaussian_reparameterize(np.zeros(2), np.zeros(3), seed=9)
