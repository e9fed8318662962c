"""Information-plane tables built from layer traces.

A plane point is (I(X; Z_l), I(Z_l; Y)) for one layer at one epoch. Exported
x-values may carry a per-layer offset purely for visual separation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IBFlowError
from .flownib import LayerTrace

FITTING = "fitting"
COMPRESSION = "compression"
UNLABELED = "unlabeled"


@dataclass(frozen=True)
class PlanePoint:
    layer: int
    epoch: int
    i_xz: float
    i_zy: float
    alpha: float
    phase: str = UNLABELED


@dataclass(frozen=True)
class PhaseLabel:
    start: int  # first epoch, inclusive
    stop: int  # last epoch, inclusive
    label: str


def _window_slopes(values: np.ndarray, window: int) -> np.ndarray:
    """Least-squares slope over a centered window (clipped at the ends)."""
    n = values.size
    half = window // 2
    out = np.empty(n)
    for i in range(n):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        if hi - lo < 2:
            lo, hi = max(0, hi - 2), max(2, hi)
        t = np.arange(lo, hi, dtype=np.float64)
        v = values[lo:hi]
        tc = t - t.mean()
        out[i] = float((tc * (v - v.mean())).sum() / (tc * tc).sum())
    return out


def epoch_phases(trace: LayerTrace, window: int = 5, tol: float = 1e-4,
                 normalized: bool = False) -> list[str]:
    """One phase label per epoch from windowed slopes of both MI series."""
    if window < 1:
        raise IBFlowError(f"window must be >= 1, got {window}")
    if len(trace.records) < 2 * window:
        raise IBFlowError(
            f"trace too short: {len(trace.records)} epochs, need >= {2 * window} for window {window}")
    suffix = "norm" if normalized else "raw"
    s_xz = _window_slopes(trace.series(f"i_xz_{suffix}"), max(window, 2))
    s_zy = _window_slopes(trace.series(f"i_zy_{suffix}"), max(window, 2))
    labels = []
    for a, b in zip(s_xz, s_zy):
        if a > tol and b > tol:
            labels.append(FITTING)
        elif a < -tol and b >= -tol:
            labels.append(COMPRESSION)
        else:
            labels.append(UNLABELED)
    return labels


def detect_phases(trace: LayerTrace, window: int = 5, tol: float = 1e-4,
                  normalized: bool = False) -> list[PhaseLabel]:
    """Contiguous epoch ranges sharing a phase label; they partition the epochs."""
    labels = epoch_phases(trace, window, tol, normalized)
    epochs = [r.epoch for r in trace.records]
    out: list[PhaseLabel] = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            out.append(PhaseLabel(epochs[start], epochs[i - 1], labels[start]))
            start = i
    return out


def export_plane(traces: list[LayerTrace], layer_offset: float = 0.0, normalized: bool = False,
                 phases: bool = False, window: int = 5) -> list[PlanePoint]:
    """Plane points for every (layer, epoch); x shifted by layer * layer_offset.

    The traces themselves are never modified. Phase labels are attached only
    when requested and the trace is long enough for the window.
    """
    if not traces:
        raise IBFlowError("no traces")
    suffix = "norm" if normalized else "raw"
    points = []
    for tr in traces:
        labels = None
        if phases and len(tr.records) >= 2 * window:
            labels = epoch_phases(tr, window, normalized=normalized)
        for k, rec in enumerate(tr.records):
            points.append(PlanePoint(
                layer=tr.layer,
                epoch=rec.epoch,
                i_xz=getattr(rec, f"i_xz_{suffix}") + tr.layer * layer_offset,
                i_zy=getattr(rec, f"i_zy_{suffix}"),
                alpha=rec.alpha,
                phase=labels[k] if labels else UNLABELED,
            ))
    return points


def mic_score(i_xz: float, i_zy: float, how: str = "min") -> float:
    """Scalar summary of a plane coordinate: min (default) or harmonic mean.

    Floored at zero; negative MI estimates are estimator noise.
    """
    if how == "min":
        return max(min(i_xz, i_zy), 0.0)
    if how == "harmonic":
        if i_xz <= 0 or i_zy <= 0:
            return 0.0
        return 2.0 * i_xz * i_zy / (i_xz + i_zy)
    raise IBFlowError(f"unknown MIC summary {how!r}")


def mic_summary(traces: list[LayerTrace], how: str = "min") -> list[dict]:
    if not traces:
        raise IBFlowError("no traces")
    out = []
    for tr in traces:
        last = tr.records[-1]
        out.append({
            "layer": tr.layer,
            "i_xz_norm": last.i_xz_norm,
            "i_zy_norm": last.i_zy_norm,
            "mic_score": mic_score(last.i_xz_norm, last.i_zy_norm, how),
        })
    return out
