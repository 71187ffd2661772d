"""Selects the kernel implementation at import time.

The compiled extension (``adann._core``, built from ``_core.pyx``) is used
when importable; otherwise the NumPy reference module ``adann.kernels_ref``
serves as a drop-in fallback.  Set ``ADANN_BACKEND=python`` or
``ADANN_BACKEND=compiled`` to force a choice (``compiled`` raises if the
extension is missing).
"""

import os

from . import kernels_ref
from .errors import ConfigError


def _load_compiled():
    from . import _core  # noqa: PLC0415 - deliberate optional import

    return _core


_choice = os.environ.get("ADANN_BACKEND", "auto").strip().lower() or "auto"
if _choice == "auto":
    try:
        kernels = _load_compiled()
    except ImportError:
        kernels = kernels_ref
elif _choice in ("python", "numpy", "ref"):
    kernels = kernels_ref
elif _choice == "compiled":
    kernels = _load_compiled()
else:
    raise ConfigError(f"unknown ADANN_BACKEND value: {_choice!r}")

NAME = kernels.NAME

batch_forward = kernels.batch_forward
batch_backward_params = kernels.batch_backward_params
batch_backward_input = kernels.batch_backward_input
lms_block = kernels.lms_block
viterbi_block = kernels.viterbi_block


def available_backends():
    """Return name -> kernel module for every importable backend."""
    found = {kernels_ref.NAME: kernels_ref}
    try:
        compiled = _load_compiled()
    except ImportError:
        pass
    else:
        found[compiled.NAME] = compiled
    return found
