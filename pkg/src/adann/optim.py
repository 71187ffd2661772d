"""Stateful gradient-based optimizers.

All six rules share the update template

    theta_{t+1} = theta_t - (alpha / psi(g_1..g_t)) * phi(g_1..g_t)

with ``phi`` the gradient estimate and ``alpha/psi`` the (possibly adaptive)
learning rate:

==========  =============================  ==========================
kind        phi                            psi
==========  =============================  ==========================
sgd         g_t                            1
momentum    m_t = beta m_{t-1} + g_t       1
nesterov    g_t + beta m_t                 1
adagrad     g_t                            sqrt(sum g^2) + eps
rmsprop     g_t                            sqrt(EMA of g^2) + eps
adam        bias-corrected m_t             sqrt(bias-corrected s_t) + eps
==========  =============================  ==========================

``step`` is pure: it returns fresh parameter and state values.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import Architecture, Gradients, Mlp


class OptimizerKind(Enum):
    SGD = "sgd"
    MOMENTUM = "momentum"
    NESTEROV = "nesterov"
    ADAGRAD = "adagrad"
    RMSPROP = "rmsprop"
    ADAM = "adam"


@dataclass(frozen=True)
class OptimizerConfig:
    kind: OptimizerKind
    learning_rate: float
    beta: float = 0.9      # momentum / RMSprop decay
    beta1: float = 0.9     # Adam first-moment decay
    beta2: float = 0.999   # Adam second-moment decay
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name in ("beta", "beta1", "beta2"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {v}")
        if not self.eps > 0:
            raise ConfigError(f"eps must be > 0, got {self.eps}")


@dataclass(frozen=True)
class OptimizerState:
    """Step count plus first/second-moment accumulators (weights then biases)."""

    step_count: int
    m: tuple
    s: tuple


def make_state(arch: Architecture) -> OptimizerState:
    """Fresh zeroed state for a network of the given architecture."""
    shapes = arch.weight_shapes
    zeros = [np.zeros(s) for s in shapes] + [np.zeros(s[0]) for s in shapes]
    return OptimizerState(0, tuple(np.zeros_like(z) for z in zeros),
                          tuple(zeros))


def _flatten_params(mlp: Mlp):
    return list(mlp.weights) + list(mlp.biases)


def _flatten_grads(grads: Gradients):
    return list(grads.d_weights) + list(grads.d_biases)


def step(state: OptimizerState, params: Mlp, grads: Gradients,
         cfg: OptimizerConfig):
    """One optimizer update. Returns ``(new_params, new_state)``."""
    theta = _flatten_params(params)
    g = _flatten_grads(grads)
    if len(g) != len(theta):
        raise ShapeError("gradient structure does not match parameters")
    for p, gi in zip(theta, g):
        if p.shape != np.asarray(gi).shape:
            raise ShapeError(
                f"gradient shape {np.asarray(gi).shape} does not match "
                f"parameter shape {p.shape}")

    t = state.step_count + 1
    alpha = cfg.learning_rate
    new_theta, new_m, new_s = [], [], []
    for p, gi, mi, si in zip(theta, g, state.m, state.s):
        gi = np.asarray(gi, dtype=np.float64)
        if cfg.kind is OptimizerKind.SGD:
            new_theta.append(p - alpha * gi)
            new_m.append(mi)
            new_s.append(si)
        elif cfg.kind is OptimizerKind.MOMENTUM:
            m2 = cfg.beta * mi + gi
            new_theta.append(p - alpha * m2)
            new_m.append(m2)
            new_s.append(si)
        elif cfg.kind is OptimizerKind.NESTEROV:
            m2 = cfg.beta * mi + gi
            new_theta.append(p - alpha * (gi + cfg.beta * m2))
            new_m.append(m2)
            new_s.append(si)
        elif cfg.kind is OptimizerKind.ADAGRAD:
            s2 = si + gi * gi
            new_theta.append(p - alpha * gi / (np.sqrt(s2) + cfg.eps))
            new_m.append(mi)
            new_s.append(s2)
        elif cfg.kind is OptimizerKind.RMSPROP:
            s2 = cfg.beta * si + (1.0 - cfg.beta) * gi * gi
            new_theta.append(p - alpha * gi / (np.sqrt(s2) + cfg.eps))
            new_m.append(mi)
            new_s.append(s2)
        elif cfg.kind is OptimizerKind.ADAM:
            m2 = cfg.beta1 * mi + (1.0 - cfg.beta1) * gi
            s2 = cfg.beta2 * si + (1.0 - cfg.beta2) * gi * gi
            m_hat = m2 / (1.0 - cfg.beta1 ** t)
            s_hat = s2 / (1.0 - cfg.beta2 ** t)
            new_theta.append(p - alpha * m_hat / (np.sqrt(s_hat) + cfg.eps))
            new_m.append(m2)
            new_s.append(s2)
        else:  # pragma: no cover
            raise ConfigError(f"unknown optimizer kind: {cfg.kind}")

    n_w = len(params.weights)
    new_params = Mlp(params.arch, tuple(new_theta[:n_w]), tuple(new_theta[n_w:]))
    return new_params, OptimizerState(t, tuple(new_m), tuple(new_s))
