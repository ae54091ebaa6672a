"""Wideband hybrid near/far-field channel estimation under beam squint.

Modules: :mod:`geometry` (arrays, steering, channels), :mod:`frontend`
(pilots and the impaired receive chain), :mod:`dictionary` (wideband
redundant dictionaries), :mod:`estimators` (MMSE shrinkage, AMP, SOMP),
:mod:`lamp` (the unrolled trainable network), :mod:`feedback` (bit-vector
CSI codec) and :mod:`harness` (datasets, sweeps, operation counts).
"""

__version__ = "0.1.0"
