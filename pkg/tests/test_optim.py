"""Optimizer update rules against independently computed closed forms."""

import numpy as np
import pytest
from conftest import random_mlp

from adann import optim
from adann.errors import ConfigError, ShapeError
from adann.nn import Architecture, Gradients, Mlp

ARCH = Architecture(3, 4, 4, 2)

# Three-step traces on a scalar problem (theta_0 = 1, gradients 2, -1, 0.5,
# alpha = 0.1, beta = 0.9, Adam (0.9, 0.999, 1e-8)), computed with a
# standalone textbook implementation and frozen here.
SCALAR_TRACES = {
    optim.OptimizerKind.SGD: [0.8, 0.9, 0.85],
    optim.OptimizerKind.MOMENTUM: [0.8, 0.72, 0.598],
    optim.OptimizerKind.NESTEROV: [0.62, 0.648, 0.48819999999999997],
    optim.OptimizerKind.ADAGRAD: [0.9000000005, 0.9447213598499957,
                                  0.9228995709216345],
    optim.OptimizerKind.RMSPROP: [0.683772238983162, 0.8312141929641461,
                                  0.7557505550439755],
    optim.OptimizerKind.ADAM: [0.9000000005, 0.8733662967024315,
                               0.8393233821389426],
}


def scalar_mlp(theta: float) -> Mlp:
    """Network whose first weight entry acts as the scalar parameter."""
    arch = Architecture(1, 1, 3, 2)
    shapes = arch.weight_shapes
    weights = [np.zeros(s) for s in shapes]
    weights[0][0, 0] = theta
    return Mlp(arch, tuple(weights), tuple(np.zeros(s[0]) for s in shapes))


def scalar_grads(g: float) -> Gradients:
    arch = Architecture(1, 1, 3, 2)
    shapes = arch.weight_shapes
    dws = [np.zeros(s) for s in shapes]
    dws[0][0, 0] = g
    return Gradients(tuple(dws), tuple(np.zeros(s[0]) for s in shapes))


@pytest.mark.parametrize("kind", list(optim.OptimizerKind))
def test_three_step_scalar_traces(kind):
    cfg = optim.OptimizerConfig(kind, learning_rate=0.1, beta=0.9,
                                beta1=0.9, beta2=0.999, eps=1e-8)
    model = scalar_mlp(1.0)
    state = optim.make_state(model.arch)
    seen = []
    for g in (2.0, -1.0, 0.5):
        model, state = optim.step(state, model, scalar_grads(g), cfg)
        seen.append(model.weights[0][0, 0])
    np.testing.assert_allclose(seen, SCALAR_TRACES[kind], rtol=1e-13)


def test_momentum_beta_zero_is_sgd_bitwise():
    mlp = random_mlp(ARCH, 0)
    grads = Gradients(
        tuple(np.random.default_rng(1).standard_normal(w.shape) for w in mlp.weights),
        tuple(np.random.default_rng(2).standard_normal(b.shape) for b in mlp.biases))
    sgd_cfg = optim.OptimizerConfig(optim.OptimizerKind.SGD, 0.05)
    mom_cfg = optim.OptimizerConfig(optim.OptimizerKind.MOMENTUM, 0.05, beta=0.0)
    a, _ = optim.step(optim.make_state(ARCH), mlp, grads, sgd_cfg)
    b, _ = optim.step(optim.make_state(ARCH), mlp, grads, mom_cfg)
    for wa, wb in zip(a.weights + a.biases, b.weights + b.biases):
        assert wa.tobytes() == wb.tobytes()


def test_adam_first_step_hand_value():
    cfg = optim.OptimizerConfig(optim.OptimizerKind.ADAM, 0.01,
                                beta1=0.9, beta2=0.999, eps=1e-8)
    model = scalar_mlp(0.0)
    new, state = optim.step(optim.make_state(model.arch), model,
                            scalar_grads(1.0), cfg)
    assert abs(new.weights[0][0, 0] + 0.01) < 1e-8
    assert state.step_count == 1


@pytest.mark.parametrize("kind", list(optim.OptimizerKind))
def test_zero_gradient_is_fixed_point(kind):
    cfg = optim.OptimizerConfig(kind, learning_rate=0.1)
    mlp = random_mlp(ARCH, 3)
    zeros = Gradients(tuple(np.zeros(w.shape) for w in mlp.weights),
                      tuple(np.zeros(b.shape) for b in mlp.biases))
    new, _ = optim.step(optim.make_state(ARCH), mlp, zeros, cfg)
    for wa, wb in zip(new.weights + new.biases, mlp.weights + mlp.biases):
        np.testing.assert_array_equal(wa, wb)


def test_adam_step_size_bounded():
    alpha = 0.03
    cfg = optim.OptimizerConfig(optim.OptimizerKind.ADAM, alpha)
    model = random_mlp(ARCH, 4)
    state = optim.make_state(ARCH)
    rng = np.random.default_rng(5)
    for _ in range(25):
        grads = Gradients(
            tuple(rng.normal(0, 3, w.shape) for w in model.weights),
            tuple(rng.normal(0, 3, b.shape) for b in model.biases))
        new, state = optim.step(state, model, grads, cfg)
        for wa, wb in zip(new.weights + new.biases,
                          model.weights + model.biases):
            assert np.abs(wa - wb).max() <= 10 * alpha
        model = new


def test_step_is_pure():
    mlp = random_mlp(ARCH, 6)
    before = [w.copy() for w in mlp.weights]
    grads = Gradients(tuple(np.ones(w.shape) for w in mlp.weights),
                      tuple(np.ones(b.shape) for b in mlp.biases))
    state = optim.make_state(ARCH)
    cfg = optim.OptimizerConfig(optim.OptimizerKind.ADAM, 0.01)
    optim.step(state, mlp, grads, cfg)
    for w, orig in zip(mlp.weights, before):
        np.testing.assert_array_equal(w, orig)
    assert state.step_count == 0
    for m in state.m:
        np.testing.assert_array_equal(m, 0.0)


def test_make_state_zeroed_and_deterministic():
    s1 = optim.make_state(ARCH)
    s2 = optim.make_state(ARCH)
    assert s1.step_count == 0
    shapes = ARCH.weight_shapes
    expected = [s for s in shapes] + [(s[0],) for s in shapes]
    assert [m.shape for m in s1.m] == expected
    for a, b in zip(s1.m + s1.s, s2.m + s2.s):
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(a, 0.0)


def test_shape_mismatch_rejected():
    mlp = random_mlp(ARCH, 7)
    bad = Gradients(tuple(np.zeros((2, 2)) for _ in mlp.weights),
                    tuple(np.zeros(2) for _ in mlp.biases))
    cfg = optim.OptimizerConfig(optim.OptimizerKind.SGD, 0.1)
    with pytest.raises(ShapeError):
        optim.step(optim.make_state(ARCH), mlp, bad, cfg)


def test_config_validation():
    with pytest.raises(ConfigError):
        optim.OptimizerConfig(optim.OptimizerKind.SGD, learning_rate=0.0)
    with pytest.raises(ConfigError):
        optim.OptimizerConfig(optim.OptimizerKind.ADAM, 0.1, beta1=1.0)
