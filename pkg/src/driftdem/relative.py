"""Single-pass relative (overlapping-window) estimation of instantaneous rates.

Two windows of sizes W and W+1 share the interval [t_l - W, t_l); the
longer one additionally covers cycle t_l, so the weighted difference
(W+1) * p_{W+1}(t_l + 1) - W * p_W(t_l) isolates the rate at cycle t_l
exactly for noiseless window means. On sampled data the difference
amplifies statistical noise by a factor of order W, which the
Savitzky-Golay pre-smoothing of both window series suppresses.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.signal import savgol_filter

from .code_models import EdgeClass
from .estimator import EstimatedSeries, EstimationError, sliding_series
from .sim import DetectionData

DEFAULT_SG_WINDOW = 301
DEFAULT_SG_ORDER = 3


def savitzky_golay(series: np.ndarray, sg_window: int, order: int) -> np.ndarray:
    """Least-squares local polynomial smoothing, length preserving.

    Endpoints are handled by fitting a polynomial to the edge window
    (scipy's ``interp`` mode). Polynomials of degree <= order pass
    through unchanged.
    """
    x = np.asarray(series, dtype=np.float64)
    if sg_window % 2 == 0 or sg_window < order + 2:
        raise EstimationError(
            f"sg_window must be odd and >= order + 2, got window {sg_window}, order {order}"
        )
    if x.size < sg_window:
        raise EstimationError(f"series of {x.size} points is shorter than the {sg_window} window")
    return savgol_filter(x, sg_window, order, mode="interp")


def difference_windows(short_values: np.ndarray, long_values: np.ndarray, W: int) -> np.ndarray:
    """(W+1) * p_{W+1}(t+1) - W * p_W(t) for aligned window series.

    ``short_values[i]`` is the W-window estimate at t = W + i and
    ``long_values[i]`` the (W+1)-window estimate at t = W + 1 + i. For
    exact window averages the weighted difference telescopes to the
    instantaneous value at t = W + i.
    """
    n = min(short_values.size, long_values.size)
    return (W + 1) * np.asarray(long_values[:n], dtype=np.float64) \
        - W * np.asarray(short_values[:n], dtype=np.float64)


def relative_estimate(data: DetectionData, classes: Sequence[EdgeClass], W: int,
                      sg_window: int = DEFAULT_SG_WINDOW, order: int = DEFAULT_SG_ORDER,
                      smooth: bool = True,
                      ancilla_order: Sequence[str] | None = None) -> dict[str, EstimatedSeries]:
    """Instantaneous per-class rates from overlapping windows W and W+1.

    Both window series are smoothed before differencing (smoothing after
    would defeat its purpose: the difference is what amplifies the noise).
    The attached sigma is the pre-smoothing independence bound
    sqrt((W+1)^2 sigma_{W+1}^2 + W^2 sigma_W^2), conservative because the
    two windows share W cycles.
    """
    if data.cycles < W + 2:
        raise EstimationError(f"need at least W + 2 = {W + 2} cycles, got {data.cycles}")
    short = sliding_series(data, classes, W, ancilla_order=ancilla_order)
    long_ = sliding_series(data, classes, W + 1, ancilla_order=ancilla_order)
    out: dict[str, EstimatedSeries] = {}
    for cls in classes:
        s0 = short[cls.cid]  # grid W .. N
        s1 = long_[cls.cid]  # grid W+1 .. N
        # instantaneous estimate at t_l for t_l = W .. N-1
        t = s0.t[:-1]
        v0 = s0.values[:-1]
        v1 = s1.values  # s1.t == t + 1
        if smooth:
            v0 = _smooth_valid(v0, sg_window, order)
            v1 = _smooth_valid(v1, sg_window, order)
        values = difference_windows(v0, v1, W)
        sigma = np.sqrt((W + 1) ** 2 * s1.sigma ** 2 + W ** 2 * s0.sigma[:-1] ** 2)
        flags = s0.flags[:-1] | s1.flags
        out[cls.cid] = EstimatedSeries(
            cid=cls.cid, t=t, values=values, sigma=sigma, W=W,
            M=s0.M[:-1], flags=flags,
        )
    return out


def _smooth_valid(values: np.ndarray, sg_window: int, order: int) -> np.ndarray:
    """Smooth around dropped samples: NaNs are bridged by interpolation first."""
    v = values.copy()
    bad = ~np.isfinite(v)
    if bad.all():
        return v
    if bad.any():
        idx = np.arange(v.size)
        v[bad] = np.interp(idx[bad], idx[~bad], v[~bad])
    return savitzky_golay(v, sg_window, order)
