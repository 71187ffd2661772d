"""NumPy reference implementations of the hot numerical kernels.

The compiled extension ``adann._core`` provides the same five functions with
identical signatures and semantics; ``adann.backend`` picks one at import
time.  Everything here is float64.  Weight matrix ``k`` has shape
``(n_out, n_in)`` so a batch ``x`` of shape ``(N, n_in)`` maps to
``x @ w.T + b``.

Conventions shared by both backends:

* ``batch_forward`` returns pre-activations, post-activations and softmax
  probabilities; softmax is computed with row-max subtraction.
* ReLU derivative at exactly zero is 0, so the backward masks can be taken
  from the post-activations (``h > 0``).
* Viterbi states encode the ``len(taps) - 1`` most recent symbols in base
  ``M`` with the most recent symbol in the least significant digit; ties in
  path metrics resolve to the lowest candidate index.
"""

import numpy as np

NAME = "python"


def batch_forward(weights, biases, x):
    """Forward pass of a ReLU MLP with softmax output over a batch.

    Parameters
    ----------
    weights, biases : sequences of float64 arrays
        ``weights[k]`` has shape ``(n_out_k, n_in_k)``.
    x : ndarray, shape (N, input_dim)

    Returns
    -------
    pre_acts : list of ndarray
        ``pre_acts[k]`` is the pre-activation of layer ``k + 1``.
    post_acts : list of ndarray
        ``post_acts[k]`` is the input fed into weight matrix ``k``
        (``post_acts[0] is x``).
    probs : ndarray, shape (N, n_classes)
    """
    n_mats = len(weights)
    pre_acts = []
    post_acts = [x]
    h = x
    for k in range(n_mats):
        a = h @ weights[k].T + biases[k]
        pre_acts.append(a)
        if k < n_mats - 1:
            h = np.maximum(a, 0.0)
            post_acts.append(h)
    logits = pre_acts[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    return pre_acts, post_acts, probs


def batch_backward_params(weights, post_acts, g_last):
    """Backpropagate ``g_last = dL/d(last pre-activation)`` to all parameters.

    Returns ``(d_weights, d_biases, d_input)`` where the parameter gradients
    are summed over the batch and ``d_input`` has the shape of the input
    batch.
    """
    n_mats = len(weights)
    d_weights = [None] * n_mats
    d_biases = [None] * n_mats
    g = g_last
    for k in range(n_mats - 1, -1, -1):
        d_weights[k] = g.T @ post_acts[k]
        d_biases[k] = g.sum(axis=0)
        g = g @ weights[k]
        if k > 0:
            g = g * (post_acts[k] > 0.0)
    return d_weights, d_biases, g


def batch_backward_input(weights, post_acts, g_last):
    """Backpropagate ``g_last`` to the input batch only (no parameter grads)."""
    n_mats = len(weights)
    g = g_last
    for k in range(n_mats - 1, -1, -1):
        g = g @ weights[k]
        if k > 0:
            g = g * (post_acts[k] > 0.0)
    return g


def lms_block(amps_ext, observed, taps, mu):
    """Run sequential LMS tap updates over a block of symbols.

    Parameters
    ----------
    amps_ext : ndarray, shape (N + n_taps - 1,)
        Symbol amplitudes with ``n_taps - 1`` history values prepended, so
        the regression window for step ``n`` is
        ``amps_ext[n + n_taps - 1 - j]`` for tap ``j``.
    observed : ndarray, shape (N,)
        Received symbol-rate samples.
    taps : ndarray, shape (n_taps,)
        Initial taps; not modified.
    mu : float
        LMS step size.

    Returns
    -------
    ndarray
        Updated taps after processing all N symbols.
    """
    n_taps = len(taps)
    # Plain-float inner loop: cheaper than per-step numpy dispatch for
    # the tap counts used here (<= 7).
    h = [float(v) for v in taps]
    x = [float(v) for v in amps_ext]
    y = [float(v) for v in observed]
    for n in range(len(y)):
        base = n + n_taps - 1
        acc = 0.0
        for j in range(n_taps):
            acc += h[j] * x[base - j]
        step = mu * (y[n] - acc)
        for j in range(n_taps):
            h[j] += step * x[base - j]
    return np.array(h, dtype=np.float64)


def viterbi_block(observed, taps, levels, init_metrics=None):
    """Maximum-likelihood sequence detection over one block of symbols.

    Branch metric is the squared difference between the observed sample and
    ``taps @ (candidate symbol history)``.  Survivor metrics may be carried
    across blocks via ``init_metrics``.

    Returns
    -------
    decisions : ndarray of int64, shape (N,)
        Level indices of the maximum-likelihood sequence.
    final_metrics : ndarray, shape (M ** (n_taps - 1),)
        Survivor path metrics after the last symbol.
    """
    observed = np.asarray(observed, dtype=np.float64)
    taps = np.asarray(taps, dtype=np.float64)
    levels = np.asarray(levels, dtype=np.float64)
    n = len(observed)
    n_taps = len(taps)
    m = len(levels)

    if n_taps == 1:
        pred = taps[0] * levels
        cost = (observed[:, None] - pred[None, :]) ** 2
        decisions = np.argmin(cost, axis=1).astype(np.int64)
        total = cost[np.arange(n), decisions].sum()
        base = 0.0 if init_metrics is None else float(init_metrics[0])
        return decisions, np.array([base + total])

    n_states = m ** (n_taps - 1)
    metrics = (np.zeros(n_states) if init_metrics is None
               else np.asarray(init_metrics, dtype=np.float64).copy())

    # pred[s, a]: predicted sample when state s (previous symbols) is
    # extended with new symbol index a.
    digits = np.empty((n_states, n_taps - 1), dtype=np.int64)
    scratch = np.arange(n_states)
    for j in range(n_taps - 1):
        digits[:, j] = scratch % m
        scratch = scratch // m
    pred = levels[np.newaxis, :] * taps[0] + (levels[digits] @ taps[1:])[:, np.newaxis]

    # Incoming transitions: new state s' receives symbol a = s' % m from
    # source states (s' // m) + t * m**(n_taps - 2), t = 0..m-1.
    new_states = np.arange(n_states)
    new_sym = new_states % m
    src = (new_states // m)[:, None] + np.arange(m)[None, :] * (m ** (n_taps - 2))
    branch_pred = pred[src, new_sym[:, None]]  # (n_states, m)

    backptr = np.empty((n, n_states), dtype=np.uint8)
    for i in range(n):
        cand = metrics[src] + (observed[i] - branch_pred) ** 2
        t = np.argmin(cand, axis=1)
        backptr[i] = t
        metrics = cand[new_states, t]

    decisions = np.empty(n, dtype=np.int64)
    state = int(np.argmin(metrics))
    for i in range(n - 1, -1, -1):
        decisions[i] = state % m
        state = (state // m) + int(backptr[i, state]) * (m ** (n_taps - 2))
    return decisions, metrics
