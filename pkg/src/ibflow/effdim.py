"""Effective dimensionality of a representation from its covariance spectrum.

d_eff(Z; M) = exp(M(p)), with p the covariance eigenvalues normalized to sum
to one and M a Schur-concave spectral measure. Two measures ship:

* ``SHANNON``: M(p) = -sum p log p, giving the entropy effective rank.
* ``L2``: M(p) = log(1 / sum p^2), giving the participation ratio
  (sum lambda)^2 / sum lambda^2. This is the default.

All logarithms are natural.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .errors import DegenerateSpectrumError
from .linalg import pca_spectrum

REL_FLOOR = 1e-10
# a largest eigenvalue below this is treated as an all-zero spectrum
ABS_FLOOR = 1e-20


class SpectralMeasure(str, Enum):
    SHANNON = "shannon"
    L2 = "l2"


def normalize_spectrum(eigenvalues, rel_floor: float = REL_FLOOR) -> np.ndarray:
    """Drop eigenvalues at or below ``rel_floor * max`` and rescale to sum 1.

    The result is sorted descending. Negative round-off values fall below the
    floor and are dropped with the zeros.
    """
    lam = np.sort(np.asarray(eigenvalues, dtype=np.float64).ravel())[::-1]
    if lam.size == 0 or not np.all(np.isfinite(lam)):
        raise DegenerateSpectrumError("degenerate spectrum: empty or non-finite eigenvalues")
    top = lam[0]
    if top <= ABS_FLOOR:
        raise DegenerateSpectrumError("degenerate spectrum: eigenvalues are numerically zero")
    kept = lam[lam > rel_floor * top]
    return kept / kept.sum()


def _log_excess(p: np.ndarray, m: SpectralMeasure) -> float:
    """log n - M(p) >= 0, computed so that a uniform p gives exactly 0."""
    n = p.size
    if np.all(p == p[0]):
        return 0.0
    if m is SpectralMeasure.SHANNON:
        nz = p[p > 0]
        # KL divergence from the uniform distribution on n points
        gap = float((nz * np.log(n * nz)).sum())
    else:
        gap = float(np.log(n * (p * p).sum()))
    return max(gap, 0.0)


def measure(p, m: SpectralMeasure | str = SpectralMeasure.L2) -> float:
    """Spectral measure M(p) in nats; always within [0, log n]."""
    p = np.asarray(p, dtype=np.float64)
    m = SpectralMeasure(m)
    return max(float(np.log(p.size)) - _log_excess(p, m), 0.0)


def d_eff(eigenvalues, m: SpectralMeasure | str = SpectralMeasure.L2,
          rel_floor: float = REL_FLOOR) -> float:
    """Effective dimensionality exp(M(p)) of a spectrum under measure `m`.

    For the L2 measure this equals (sum lambda)^2 / sum lambda^2 over the
    retained eigenvalues.
    """
    m = SpectralMeasure(m)
    p = normalize_spectrum(eigenvalues, rel_floor)
    if np.all(p == p[0]):
        return float(p.size)
    if m is SpectralMeasure.L2:
        lam = np.sort(np.asarray(eigenvalues, dtype=np.float64).ravel())[::-1][: p.size]
        value = float(lam.sum() ** 2 / (lam * lam).sum())
    else:
        value = p.size * float(np.exp(-_log_excess(p, m)))
    return min(max(value, 1.0), float(p.size))


def d_eff_of_data(x, m: SpectralMeasure | str = SpectralMeasure.L2) -> float:
    return d_eff(pca_spectrum(x), m)
