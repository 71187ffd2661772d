"""Shared test helpers: random networks and finite-difference oracles."""

import numpy as np

from adann.nn import Architecture, Mlp

FD_STEP = 1e-5
FD_RTOL = 1e-4
FD_FLOOR = 1e-6


def random_mlp(arch: Architecture, seed) -> Mlp:
    """Gaussian weights and (nonzero) biases for gradient checking."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for (n_out, n_in) in arch.weight_shapes:
        weights.append(rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_out, n_in)))
        biases.append(rng.normal(0.0, 0.1, size=n_out))
    return Mlp(arch, tuple(weights), tuple(biases))


def perturb_param(mlp: Mlp, which: str, k: int, idx, delta: float) -> Mlp:
    """Copy of mlp with one weight/bias entry shifted by delta."""
    weights = [w.copy() for w in mlp.weights]
    biases = [b.copy() for b in mlp.biases]
    if which == "w":
        weights[k][idx] += delta
    else:
        biases[k][idx] += delta
    return Mlp(mlp.arch, tuple(weights), tuple(biases))


def fd_param_grads(loss_fn, mlp: Mlp, step: float = FD_STEP):
    """Central finite differences of ``loss_fn(mlp)`` for every parameter."""
    d_weights, d_biases = [], []
    for k, w in enumerate(mlp.weights):
        dw = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            up = loss_fn(perturb_param(mlp, "w", k, idx, step))
            dn = loss_fn(perturb_param(mlp, "w", k, idx, -step))
            dw[idx] = (up - dn) / (2 * step)
        d_weights.append(dw)
    for k, b in enumerate(mlp.biases):
        db = np.zeros_like(b)
        for idx in np.ndindex(b.shape):
            up = loss_fn(perturb_param(mlp, "b", k, idx, step))
            dn = loss_fn(perturb_param(mlp, "b", k, idx, -step))
            db[idx] = (up - dn) / (2 * step)
        d_biases.append(db)
    return d_weights, d_biases


def assert_grads_close(analytic, fd, rtol: float = FD_RTOL,
                       floor: float = FD_FLOOR):
    """Relative error against the FD oracle, floored for near-zero entries."""
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(fd, dtype=np.float64)
    rel = np.abs(a - b) / np.maximum(np.abs(b), floor)
    worst = rel.max() if rel.size else 0.0
    assert worst < rtol, f"gradient mismatch: worst relative error {worst:.3e}"
