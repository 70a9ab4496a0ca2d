"""Window statistics, correlator-to-probability conversion, and spectral tools.

The estimators work on detector coincidence statistics restricted to a
moving window of W cycles, [t_l - W, t_l). A window average of the
per-cycle event probabilities behaves as a boxcar low-pass filter whose
gain and phase follow the Dirichlet kernel; those response functions and
the optimal-window solver live here as well.

Grid convention: the estimate labelled t_l covers cycles t_l-W .. t_l-1,
so the first grid point of a length-N data set is t_l = W and the last is
t_l = N. Pair placement is counted by the later detector of a class.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .code_models import EdgeClass
from .sim import DetectionData

FLAG_BAD_DENOMINATOR = 1  # Eq. (1) denominator <= 0: sample dropped
FLAG_CLAMPED_RADICAND = 2  # Eq. (1) radicand < 0: clamped to 0
FLAG_BAD_BOUNDARY_PRODUCT = 4  # Eq. (2) product too close to 0: dropped
FLAG_FILLED = 8  # dropped point imputed from a neighbor (DEM building only)

_PROD_FLOOR = 1e-9


class EstimationError(ValueError):
    pass


@dataclass(frozen=True)
class WindowStats:
    """Detector means for one edge class within one window.

    ``M`` is the sample count (shots times valid pair placements). For
    boundary classes only ``v_i`` is populated.
    """

    cid: str
    M: int
    v_i: float
    v_j: float | None = None
    v_ij: float | None = None


@dataclass
class EstimatedSeries:
    """Windowed probability estimates for one edge class.

    Dropped samples keep their grid slot with value NaN and a nonzero flag
    so that per-point bookkeeping survives export.
    """

    cid: str
    t: np.ndarray
    values: np.ndarray
    sigma: np.ndarray
    W: int
    M: np.ndarray
    flags: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.values)

    def dropped(self) -> int:
        return int(np.count_nonzero(~self.valid))


def natural_ancilla_order(classes: Sequence[EdgeClass]) -> list[str]:
    """Ancilla names sorted by numeric suffix (a1, a2, ...)."""
    names = {a for cls in classes for a, _ in cls.offsets}

    def key(name: str):
        m = re.match(r"([a-zA-Z]+)(\d+)$", name)
        return (m.group(1), int(m.group(2))) if m else (name, 0)

    return sorted(names, key=key)


def _pair_sums(bits: np.ndarray, ai: int, aj: int, delta: int):
    """Cross-shot sums of v_i, v_j and v_i v_j per anchor cycle."""
    n = bits.shape[1]
    vi = bits[:, : n - delta, ai] if delta else bits[:, :, ai]
    vj = bits[:, delta:, aj] if delta else bits[:, :, aj]
    return (
        vi.sum(axis=0, dtype=np.int64),
        vj.sum(axis=0, dtype=np.int64),
        (vi & vj).sum(axis=0, dtype=np.int64),
    )


def _window_slices(t_grid: np.ndarray, W: int, delta: int, n_anchors: int):
    """Anchor index ranges [lo, hi) whose later detector lies in the window."""
    lo = np.clip(t_grid - W - delta, 0, n_anchors)
    hi = np.clip(t_grid - delta, 0, n_anchors)
    return lo, hi


def bulk_probability(v_i, v_j, v_ij, flags_out: np.ndarray | None = None):
    """Invert the covariance relation for a bulk edge.

    p = 1/2 - sqrt(1/4 - (<vivj> - <vi><vj>) / (1 - 2(<vi>+<vj>) + 4<vivj>)).
    A non-positive denominator drops the sample (NaN); a negative radicand
    is clamped to zero, returning 1/2. Flags are OR-ed into ``flags_out``
    when given. Scalar or array inputs.
    """
    vi = np.asarray(v_i, dtype=np.float64)
    vj = np.asarray(v_j, dtype=np.float64)
    vij = np.asarray(v_ij, dtype=np.float64)
    den = 1.0 - 2.0 * (vi + vj) + 4.0 * vij
    cov = vij - vi * vj
    bad_den = den <= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        radicand = 0.25 - cov / np.where(bad_den, np.nan, den)
    clamped = radicand < 0.0
    radicand = np.where(clamped, 0.0, radicand)
    p = 0.5 - np.sqrt(radicand)
    p = np.where(bad_den, np.nan, p)
    if flags_out is not None:
        flags_out |= np.where(bad_den, FLAG_BAD_DENOMINATOR, 0).astype(flags_out.dtype)
        flags_out |= np.where(clamped & ~bad_den, FLAG_CLAMPED_RADICAND, 0).astype(flags_out.dtype)
    if np.isscalar(v_i):
        return float(p)
    return p


def boundary_probability(v_i, incident, flags_out: np.ndarray | None = None):
    """Boundary-edge probability from the singles mean and incident bulk edges.

    p = 1/2 + (<v_i> - 1/2) / prod_j (1 - 2 p_ij), the product running over
    every bulk edge of the decoding graph incident to the detector (an
    incident class contributes once per matching offset). Samples where the
    product collapses (some p_ij at or beyond 1/2) are dropped.
    """
    vi = np.asarray(v_i, dtype=np.float64)
    prod = np.ones_like(vi)
    for p_ij, mult in incident:
        prod = prod * (1.0 - 2.0 * np.asarray(p_ij, dtype=np.float64)) ** mult
    bad = ~np.isfinite(prod) | (np.abs(prod) < _PROD_FLOOR)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = 0.5 + (vi - 0.5) / np.where(bad, np.nan, prod)
    if flags_out is not None:
        flags_out |= np.where(bad, FLAG_BAD_BOUNDARY_PRODUCT, 0).astype(flags_out.dtype)
    if np.isscalar(v_i):
        return float(p)
    return p


def sigma_from_estimate(p_hat, M):
    """Binomial standard error of a windowed estimate: sqrt(p(1-p)/M)."""
    p = np.asarray(p_hat, dtype=np.float64)
    m = np.asarray(M, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.sqrt(np.clip(p * (1.0 - p), 0.0, None) / m)
    return float(s) if np.isscalar(p_hat) else s


def window_sigma(p_values, W: int | None = None):
    """Predicted deviation of the window average of known per-cycle rates.

    sigma_W = (1/W) * sqrt(sum_k p_k (1 - p_k)); W defaults to the number
    of supplied values.
    """
    p = np.asarray(p_values, dtype=np.float64)
    if np.any((p < 0.0) | (p > 1.0)):
        raise EstimationError("rates must lie in [0, 1]")
    w = p.size if W is None else W
    return float(np.sqrt(np.sum(p * (1.0 - p))) / w)


def sliding_series(data: DetectionData, classes: Sequence[EdgeClass], W: int,
                   stride: int = 1, ancilla_order: Sequence[str] | None = None,
                   ) -> dict[str, EstimatedSeries]:
    """Windowed probability series for every edge class.

    Bulk (two-detector) classes go through the covariance inversion;
    boundary classes follow, consuming the bulk estimates at the same grid
    points. Estimates are labelled by the window's exclusive right edge
    t_l, on the grid W, W+stride, ..., <= N.
    """
    if W < 2:
        raise EstimationError(f"window must be >= 2 cycles, got {W}")
    if stride < 1:
        raise EstimationError(f"stride must be >= 1, got {stride}")
    N = data.cycles
    if W > N:
        raise EstimationError(f"window of {W} cycles exceeds the {N}-cycle data range")
    order = list(ancilla_order) if ancilla_order is not None else natural_ancilla_order(classes)
    if len(order) != data.num_detectors:
        raise EstimationError(
            f"classes reference {len(order)} ancillas but data has {data.num_detectors} detectors"
        )
    a_idx = {a: i for i, a in enumerate(order)}
    bits = data.unpack()
    t_grid = np.arange(W, N + 1, stride, dtype=np.int64)
    out: dict[str, EstimatedSeries] = {}

    bulk = [c for c in classes if not c.is_boundary]
    for cls in bulk:
        (an_i, off_i), (an_j, off_j) = cls.offsets
        delta = off_j - off_i  # offsets are normalized: off_i == 0
        si, sj, sij = _pair_sums(bits, a_idx[an_i], a_idx[an_j], delta)
        csi = np.concatenate(([0], np.cumsum(si)))
        csj = np.concatenate(([0], np.cumsum(sj)))
        csij = np.concatenate(([0], np.cumsum(sij)))
        lo, hi = _window_slices(t_grid, W, delta, si.size)
        count = hi - lo
        M = count * data.shots
        flags = np.zeros(t_grid.size, dtype=np.uint8)
        with np.errstate(invalid="ignore"):
            vi = (csi[hi] - csi[lo]) / M
            vj = (csj[hi] - csj[lo]) / M
            vij = (csij[hi] - csij[lo]) / M
        p = bulk_probability(vi, vj, vij, flags)
        out[cls.cid] = EstimatedSeries(
            cid=cls.cid, t=t_grid, values=p, sigma=sigma_from_estimate(p, M),
            W=W, M=M, flags=flags,
        )

    for cls in classes:
        if not cls.is_boundary:
            continue
        (anc, _), = cls.offsets
        s = bits[:, :, a_idx[anc]].sum(axis=0, dtype=np.int64)
        cs = np.concatenate(([0], np.cumsum(s)))
        lo, hi = _window_slices(t_grid, W, 0, s.size)
        M = (hi - lo) * data.shots
        vi = (cs[hi] - cs[lo]) / M
        incident = []
        flags = np.zeros(t_grid.size, dtype=np.uint8)
        for other in bulk:
            mult = sum(1 for a, _ in other.offsets if a == anc)
            if mult:
                est = out[other.cid]
                incident.append((est.values, mult))
                flags |= est.flags
        p = boundary_probability(vi, incident, flags)
        out[cls.cid] = EstimatedSeries(
            cid=cls.cid, t=t_grid, values=p, sigma=sigma_from_estimate(p, M),
            W=W, M=M, flags=flags,
        )
    return out


def window_counts(data: DetectionData, classes: Sequence[EdgeClass], t_l: int, W: int,
                  ancilla_order: Sequence[str] | None = None) -> dict[str, WindowStats]:
    """Raw window means for every class at a single window position."""
    if W < 2:
        raise EstimationError(f"window must be >= 2 cycles, got {W}")
    if t_l - W < 0 or t_l > data.cycles:
        raise EstimationError(
            f"window [{t_l - W}, {t_l}) exceeds the data range [0, {data.cycles})"
        )
    order = list(ancilla_order) if ancilla_order is not None else natural_ancilla_order(classes)
    a_idx = {a: i for i, a in enumerate(order)}
    bits = data.unpack()
    out: dict[str, WindowStats] = {}
    for cls in classes:
        if cls.is_boundary:
            (anc, _), = cls.offsets
            col = bits[:, t_l - W: t_l, a_idx[anc]]
            out[cls.cid] = WindowStats(cls.cid, col.size, float(col.mean()))
        else:
            (an_i, off_i), (an_j, off_j) = cls.offsets
            delta = off_j - off_i
            lo = max(0, t_l - W - delta)
            hi = min(data.cycles - delta, t_l - delta)
            vi = bits[:, lo:hi, a_idx[an_i]]
            vj = bits[:, lo + delta: hi + delta, a_idx[an_j]]
            out[cls.cid] = WindowStats(
                cls.cid, vi.size, float(vi.mean()), float(vj.mean()),
                float((vi & vj).mean()),
            )
    return out


# --- spectral response of the boxcar window ------------------------------

def dirichlet_ratio(W: int, m, N: int):
    """Signed kernel ratio sin(pi m W / N) / sin(pi m / N), with the m=0 limit W."""
    m_arr = np.asarray(m, dtype=np.float64)
    num = np.sin(np.pi * m_arr * W / N)
    den = np.sin(np.pi * m_arr / N)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den == 0.0, float(W), num / den)
    return float(r) if np.isscalar(m) else r


def dirichlet_gain(W: int, m, N: int):
    """Magnitude attenuation of frequency bin m under a W-cycle boxcar."""
    r = dirichlet_ratio(W, m, N)
    return np.abs(r) / W


def dirichlet_phase(W: int, m, N: int):
    """Phase lag pi m (W - 1) / N (mod 2 pi) of the windowed estimate.

    This is the lag when the estimate is labelled by the centre convention
    of the source analysis; the half-open window labelling used by
    :func:`sliding_series` adds one further cycle of delay, exposed exactly
    by :func:`dirichlet_response`. The difference (2 pi m / N) is far below
    every tolerance used here.
    """
    m_arr = np.asarray(m, dtype=np.float64)
    ph = np.mod(np.pi * m_arr * (W - 1) / N, 2.0 * np.pi)
    return float(ph) if np.isscalar(m) else ph


def dirichlet_response(W: int, m, N: int):
    """Exact complex transfer of bin m for a window covering [t-W, t).

    H(m) = (1/W) * [sin(pi m W/N)/sin(pi m/N)] * exp(-i pi m (W+1) / N),
    so that dft(boxcar_filter(x, W)) == H * dft(x) identically.
    """
    m_arr = np.asarray(m, dtype=np.float64)
    r = dirichlet_ratio(W, m, N) / W
    h = r * np.exp(-1j * np.pi * m_arr * (W + 1) / N)
    return complex(h) if np.isscalar(m) else h


def effective_lag(W: int, m: int, N: int) -> float:
    """Observable phase lag of the damped sinusoid, sign lobe folded in."""
    lag = np.pi * m * (W + 1) / N
    if dirichlet_ratio(W, m, N) < 0:
        lag += np.pi
    return float(np.mod(lag, 2.0 * np.pi))


def boxcar_filter(x: np.ndarray, W: int) -> np.ndarray:
    """Circular boxcar average: y[t] = mean of x[(t-W) mod N .. (t-1) mod N]."""
    x = np.asarray(x, dtype=np.float64)
    acc = np.zeros_like(x)
    for j in range(1, W + 1):
        acc += np.roll(x, j)
    return acc / W


@dataclass(frozen=True)
class SpectralResponse:
    """Gain and phase of every bin for one (N, W) pair."""

    N: int
    W: int
    gain: np.ndarray = field(repr=False)
    phase: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, N: int, W: int) -> "SpectralResponse":
        m = np.arange(N)
        return cls(N=N, W=W, gain=dirichlet_gain(W, m, N), phase=dirichlet_phase(W, m, N))


def optimal_window(epsilon: float, m_c: int, N: int) -> int:
    """Largest W whose first-lobe gain at bin m_c still reaches 1 - epsilon.

    The gain is monotone decreasing in W across the first lobe
    (W < N/m_c), so a bisection finds the boundary. epsilon -> 0 collapses
    to the trivial window W = 1.
    """
    if not 0.0 < epsilon < 1.0:
        raise EstimationError(f"epsilon must be in (0, 1), got {epsilon}")
    if not 1 <= m_c < N / 2:
        raise EstimationError(f"m_c must satisfy 1 <= m_c < N/2, got {m_c}")
    target = 1.0 - epsilon
    w_hi = int(np.floor(N / m_c))
    if dirichlet_gain(2, m_c, N) < target:
        if dirichlet_gain(1, m_c, N) >= target:
            return 1
        raise EstimationError(f"no window of >= 2 cycles keeps gain above {target}")
    lo, hi = 2, w_hi
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if dirichlet_gain(mid, m_c, N) >= target:
            lo = mid
        else:
            hi = mid - 1
    return lo


def fit_sinusoid(t: np.ndarray, values: np.ndarray, omega: float) -> tuple[float, float, float]:
    """Least-squares fit of dc + a sin(omega t) + b cos(omega t)."""
    t = np.asarray(t, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    ok = np.isfinite(v)
    design = np.column_stack([np.ones(ok.sum()), np.sin(omega * t[ok]), np.cos(omega * t[ok])])
    coef, *_ = np.linalg.lstsq(design, v[ok], rcond=None)
    return float(coef[0]), float(coef[1]), float(coef[2])


MIN_CORRECTION_GAIN = 1e-3


def correct_single_frequency(series: EstimatedSeries, m: int, N: int) -> EstimatedSeries:
    """Undo the boxcar damping and lag of a single dominant frequency bin.

    Fits dc + sinusoid at bin m to the series, divides the fitted complex
    amplitude by the exact window response, and rebuilds the series. The
    DC term is untouched. Refuses when the gain is below
    ``MIN_CORRECTION_GAIN`` (the inverse would amplify noise unboundedly).
    """
    h = dirichlet_response(series.W, m, N)
    if abs(h) < MIN_CORRECTION_GAIN:
        raise EstimationError(
            f"bin {m} gain {abs(h):.2e} below {MIN_CORRECTION_GAIN}; refusing to amplify"
        )
    omega = 2.0 * np.pi * m / N
    dc, a, b = fit_sinusoid(series.t, series.values, omega)
    c_est = complex(b, -a)  # y_ac(t) = Re[c * exp(i omega t)]
    c_true = c_est / h
    corrected = dc + (-c_true.imag) * np.sin(omega * series.t) + c_true.real * np.cos(omega * series.t)
    residual = series.values - (dc + a * np.sin(omega * series.t) + b * np.cos(omega * series.t))
    return EstimatedSeries(
        cid=series.cid, t=series.t.copy(), values=corrected + residual,
        sigma=series.sigma.copy(), W=series.W, M=series.M.copy(), flags=series.flags.copy(),
    )


def dft(series: np.ndarray) -> np.ndarray:
    """Forward DFT, X[m] = sum_n x[n] exp(-i 2 pi m n / N)."""
    x = np.asarray(series)
    if x.size == 0:
        raise EstimationError("empty series")
    return np.fft.fft(x)


def idft(spectrum: np.ndarray) -> np.ndarray:
    return np.fft.ifft(np.asarray(spectrum))


# --- series export -------------------------------------------------------

def series_to_csv(estimates: Mapping[str, EstimatedSeries], path) -> None:
    """Tabular export: class id, t_l, p_est, sigma, W, flags."""
    with open(path, "w") as fh:
        fh.write("class_id,t_l,p_est,sigma,W,flags\n")
        for cid in sorted(estimates):
            est = estimates[cid]
            for i in range(est.t.size):
                v = est.values[i]
                s = est.sigma[i]
                fh.write(
                    f"{cid},{est.t[i]},{'' if not np.isfinite(v) else repr(float(v))},"
                    f"{'' if not np.isfinite(s) else repr(float(s))},{est.W},{est.flags[i]}\n"
                )


def dem_from_estimates(classes: Sequence[EdgeClass], estimates: Mapping[str, EstimatedSeries],
                       provenance: str, p_min: float | None = None,
                       layout_hash: bytes = b"") -> "TimeVaryingDem":
    """Assemble a DEM from per-class estimates sharing one grid.

    Dropped (NaN) samples are filled from the nearest valid neighbor so
    the DEM grid stays rectangular; fills are flagged and counted through
    the DEM's clip counter.
    """
    from .dem import DEFAULT_P_MIN, DemGrid, make_dem

    cids = [c.cid for c in classes]
    grids = {tuple(estimates[cid].t[:2]) for cid in cids}
    if len(grids) != 1:
        raise EstimationError("estimates do not share a common grid")
    t = estimates[cids[0]].t
    stride = int(t[1] - t[0]) if t.size > 1 else 1
    grid = DemGrid(start=int(t[0]), stride=stride, count=int(t.size))
    series = {}
    sigma = {}
    for cid in cids:
        est = estimates[cid]
        vals = est.values.copy()
        bad = ~np.isfinite(vals)
        if bad.all():
            raise EstimationError(f"class {cid} has no valid estimates")
        if bad.any():
            idx = np.arange(vals.size)
            vals[bad] = np.interp(idx[bad], idx[~bad], vals[~bad])
            est.flags[bad] |= FLAG_FILLED
        series[cid] = vals
        sigma[cid] = est.sigma
    return make_dem(classes, grid, series, sigma=sigma, provenance=provenance,
                    p_min=DEFAULT_P_MIN if p_min is None else p_min, layout_hash=layout_hash)
