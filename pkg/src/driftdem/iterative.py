"""Iterative sliding-window decomposition into discrete frequency bins.

Large windows resolve the low-frequency bins; the window is then shrunk
step by step, raising the cutoff bin passed by the boxcar filter. Bins
already solved at earlier (larger) windows enter later fits as fixed
priors; when two consecutive windows share a cutoff, their solutions for
the shared bins are averaged.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .code_models import EdgeClass
from .estimator import EstimatedSeries, EstimationError, dirichlet_gain, dirichlet_ratio, sliding_series
from .sim import DetectionData


class IterativeError(ValueError):
    pass


@dataclass(frozen=True)
class WindowSchedule:
    """Strictly decreasing window sizes with a gain threshold mu."""

    windows: tuple[int, ...]
    mu: float = 0.22
    w_min: int = 1000

    def __post_init__(self) -> None:
        if not self.windows:
            raise IterativeError("empty window schedule")
        if any(w1 <= w2 for w1, w2 in zip(self.windows[1:], self.windows[:-1])):
            pass  # windows are given largest first; check the proper direction below
        if any(self.windows[i] <= self.windows[i + 1] for i in range(len(self.windows) - 1)):
            raise IterativeError(f"window sizes must be strictly decreasing: {self.windows}")
        if self.windows[-1] < self.w_min:
            raise IterativeError(
                f"smallest window {self.windows[-1]} is below the floor {self.w_min}"
            )
        if not 0.0 < self.mu < 1.0:
            raise IterativeError(f"mu must be in (0, 1), got {self.mu}")

    @classmethod
    def descending(cls, w0: int, w_last: int, step: int, mu: float = 0.22,
                   w_min: int | None = None) -> "WindowSchedule":
        ws = tuple(range(w0, w_last - 1, -step))
        return cls(ws, mu=mu, w_min=w_last if w_min is None else w_min)


@dataclass
class ClassFourier:
    """Recovered coefficients for one edge class: p(t) = dc + sums."""

    dc: float = 0.0
    coeffs: dict[int, tuple[float, float]] = field(default_factory=dict)  # m -> (a_m, b_m)


@dataclass
class FourierModel:
    """Per-class Fourier coefficients on the N-cycle frequency grid."""

    N: int
    per_class: dict[str, ClassFourier] = field(default_factory=dict)
    condition_numbers: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "format": "driftdem-fourier",
            "version": 1,
            "N": self.N,
            "classes": {
                cid: {"dc": cf.dc, "coeffs": [[m, a, b] for m, (a, b) in sorted(cf.coeffs.items())]}
                for cid, cf in self.per_class.items()
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FourierModel":
        if doc.get("format") != "driftdem-fourier":
            raise IterativeError("not a fourier-model document")
        model = cls(N=int(doc["N"]))
        for cid, item in doc["classes"].items():
            model.per_class[cid] = ClassFourier(
                dc=float(item["dc"]),
                coeffs={int(m): (float(a), float(b)) for m, a, b in item["coeffs"]},
            )
        return model


def cutoff_index(W: int, mu: float, N: int) -> int:
    """Largest first-lobe bin whose boxcar gain still reaches mu.

    The gain is monotone decreasing in m across the first lobe (m < N/W),
    so smaller windows always pass at least as many bins.
    """
    if not 0.0 < mu < 1.0:
        raise IterativeError(f"mu must be in (0, 1), got {mu}")
    if not 1 <= W <= N:
        raise IterativeError(f"window must be in [1, {N}], got {W}")
    cap = (N - 1) // 2
    hi = min(cap, int(np.ceil(N / W)) - 1) if W > 1 else cap
    m = 0
    while m < hi and dirichlet_gain(W, m + 1, N) >= mu:
        m += 1
    return m


def _forward_columns(t: np.ndarray, W: int, m: int, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Design columns of the windowed sinusoid at bin m.

    A window average over [t-W, t) of a_m sin(w t) + b_m cos(w t) equals
    R * [a_m sin(w (t - (W+1)/2)) + b_m cos(w (t - (W+1)/2))] with R the
    signed Dirichlet ratio over W.
    """
    omega = 2.0 * np.pi * m / N
    r = dirichlet_ratio(W, m, N) / W
    centre = t - (W + 1) / 2.0
    return r * np.sin(omega * centre), r * np.cos(omega * centre)


def fit_window(series: EstimatedSeries, W: int, m_c: int, known: ClassFourier | None,
               N: int, rcond: float = 1e-10) -> tuple[ClassFourier, float]:
    """Least-squares solve for the bins up to m_c not already known.

    Known coefficients (including a known DC) are evaluated through the
    forward model and subtracted from the target; the remaining bins are
    solved by SVD-backed least squares. Returns the solved increment and
    the design's condition number. A rank-deficient design raises, naming
    the first unresolved bin.
    """
    t = series.t.astype(np.float64)
    ok = np.isfinite(series.values)
    y = series.values[ok].copy()
    t = t[ok]
    if t.size == 0:
        raise IterativeError("series has no valid samples")

    known_dc = known is not None and known.dc is not None and not np.isnan(known.dc)
    cols = []
    labels: list[tuple[str, int]] = []
    if not known_dc:
        cols.append(np.ones_like(t))
        labels.append(("dc", 0))
    else:
        y -= known.dc
    for m in range(1, m_c + 1):
        s_col, c_col = _forward_columns(t, W, m, N)
        if known is not None and m in known.coeffs:
            a, b = known.coeffs[m]
            y -= a * s_col + b * c_col
        else:
            cols.extend([s_col, c_col])
            labels.extend([("a", m), ("b", m)])
    if not cols:
        return ClassFourier(dc=float("nan"), coeffs={}), 1.0

    design = np.column_stack(cols)
    sol, _, rank, sv = np.linalg.lstsq(design, y, rcond=rcond)
    if rank < design.shape[1]:
        dead = labels[int(rank)][1]
        raise IterativeError(
            f"design is rank deficient at window {W}: bin m={dead} is not "
            "resolvable from this series (series too short or gain zero)"
        )
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")

    inc = ClassFourier(dc=float("nan"), coeffs={})
    for (kind, m), value in zip(labels, sol):
        if kind == "dc":
            inc.dc = float(value)
        elif kind == "a":
            a, b = inc.coeffs.get(m, (0.0, 0.0))
            inc.coeffs[m] = (float(value), b)
        else:
            a, b = inc.coeffs.get(m, (0.0, 0.0))
            inc.coeffs[m] = (a, float(value))
    return inc, cond


#: A bin enters a window's fit only once the window's grid spans this many
#: periods of it. Short grid arcs cannot pin a sinusoid against the leakage
#: of out-of-cutoff content, which the tiny in-cutoff gains then amplify.
MIN_SPAN_PERIODS = 0.5


def decompose(data: DetectionData, classes: Sequence[EdgeClass], schedule: WindowSchedule,
              ancilla_order: Sequence[str] | None = None, freeze: bool = False,
              min_span_periods: float = MIN_SPAN_PERIODS) -> FourierModel:
    """Run the full large-to-small window schedule over the data.

    Per class and window, every admitted bin (gain above mu, grid span
    above the coverage floor) is fit jointly; solutions accumulate into an
    unweighted per-bin average across windows, which is what suppresses
    the per-window leakage of out-of-cutoff content. With ``freeze``
    enabled, bins lock at their running average as soon as a later window
    admits new bins and enter subsequent fits as fixed priors; the default
    keeps every admitted bin in every fit, measurably more accurate when
    the drift has non-bin frequency content.
    """
    N = data.cycles
    if schedule.windows[0] > N:
        raise IterativeError(f"largest window {schedule.windows[0]} exceeds the data ({N} cycles)")

    def provider(W: int) -> dict[str, EstimatedSeries]:
        return sliding_series(data, classes, W, ancilla_order=ancilla_order)

    return decompose_series(provider, [c.cid for c in classes], schedule, N,
                            freeze=freeze, min_span_periods=min_span_periods)


def decompose_series(series_provider, cids: Sequence[str], schedule: WindowSchedule,
                     N: int, freeze: bool = False,
                     min_span_periods: float = MIN_SPAN_PERIODS) -> FourierModel:
    """Schedule driver over a callable ``W -> {cid: EstimatedSeries}``.

    Split out from :func:`decompose` so noiseless synthetic series can
    exercise the exact same admission/freezing/averaging logic.
    """
    model = FourierModel(N=N)
    acc: dict[str, dict] = {cid: {"dc": [], "coeffs": {}} for cid in cids}
    frozen: dict[str, ClassFourier] = {cid: ClassFourier(dc=float("nan")) for cid in cids}
    prev_admitted: tuple[int, ...] | None = None

    for W in schedule.windows:
        m_c = cutoff_index(W, schedule.mu, N)
        span = N - W
        admitted = tuple(
            m for m in range(1, m_c + 1) if span * m >= min_span_periods * N
        )
        estimates = series_provider(W)
        grew = prev_admitted is not None and set(admitted) - set(prev_admitted)
        if freeze and grew:
            # lock previously admitted bins at their running averages
            for cid in cids:
                a = acc[cid]
                for m in list(a["coeffs"]):
                    arr = np.asarray(a["coeffs"].pop(m))
                    frozen[cid].coeffs[m] = (float(arr[:, 0].mean()), float(arr[:, 1].mean()))
        for cid in cids:
            known = ClassFourier(dc=frozen[cid].dc, coeffs=dict(frozen[cid].coeffs))
            # bins past the coverage floor stay out of the design entirely
            for m in range(1, m_c + 1):
                if m not in admitted and m not in known.coeffs:
                    known.coeffs[m] = (0.0, 0.0)
            inc, cond = fit_window(estimates[cid], W, m_c, known, N)
            model.condition_numbers.append(cond)
            if not np.isnan(inc.dc):
                acc[cid]["dc"].append(inc.dc)
            for m, ab in inc.coeffs.items():
                acc[cid]["coeffs"].setdefault(m, []).append(ab)
        prev_admitted = admitted

    for cid in cids:
        a = acc[cid]
        cf = frozen[cid]
        if a["dc"]:
            cf.dc = float(np.mean(a["dc"]))
        for m, pairs in a["coeffs"].items():
            arr = np.asarray(pairs)
            cf.coeffs[m] = (float(arr[:, 0].mean()), float(arr[:, 1].mean()))
        if np.isnan(cf.dc):
            raise IterativeError(f"schedule never solved the DC term for class {cid}")
        model.per_class[cid] = cf
    return model


def reconstruct(model: FourierModel, cid: str, t, p_min: float = 1e-6) -> np.ndarray:
    """Plain Fourier synthesis of one class series, clipped to [p_min, 1/2)."""
    cf = model.per_class[cid]
    t_arr = np.asarray(t, dtype=np.float64)
    out = np.full(t_arr.shape, cf.dc)
    for m, (a, b) in cf.coeffs.items():
        omega = 2.0 * np.pi * m / model.N
        out += a * np.sin(omega * t_arr) + b * np.cos(omega * t_arr)
    return np.clip(out, p_min, 0.5 - p_min)


def model_to_dem(model: FourierModel, classes: Sequence[EdgeClass], grid,
                 layout_hash: bytes = b"") -> "TimeVaryingDem":
    from .dem import make_dem

    t = grid.times()
    series = {c.cid: reconstruct(model, c.cid, t) for c in classes}
    return make_dem(classes, grid, series, provenance="iterative", layout_hash=layout_hash)
