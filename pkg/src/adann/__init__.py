"""Adaptive NN equalizer with online semi-supervised fine-tuning.

Subpackages are imported lazily by the CLI so that thread-count environment
variables can take effect before NumPy loads; library users just import the
modules they need (``adann.nn``, ``adann.pipeline``, ...).
"""

__version__ = "0.1.0"
