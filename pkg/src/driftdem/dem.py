"""Detector-error-model containers, edge weights, and decoding-graph instances.

A :class:`TimeVaryingDem` holds a per-edge-class probability series on a
common grid of anchor cycles; :func:`instantiate` turns it into a concrete
weighted decoding graph over a cycle range. Probabilities are clipped into
[p_min, 1/2 - p_min] so all edge weights stay finite and positive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .code_models import EdgeClass, classes_from_dict, classes_to_dict

DEFAULT_P_MIN = 1e-6

PROVENANCES = ("ground-truth", "sliding", "iterative", "relative", "static")


class DemError(ValueError):
    """Malformed DEM or a request outside its grid."""


def clip_probabilities(values: np.ndarray, p_min: float = DEFAULT_P_MIN) -> tuple[np.ndarray, int]:
    """Clip into [p_min, 1/2 - p_min]; returns (clipped, number clipped).

    NaN entries (flagged samples that were imputed upstream) also count.
    """
    v = np.asarray(values, dtype=np.float64)
    bad = ~np.isfinite(v)
    out = np.where(bad, 0.25, v)
    clipped = np.clip(out, p_min, 0.5 - p_min)
    n = int(np.count_nonzero(bad | (out != clipped)))
    return clipped, n


def edge_weight(p) -> np.ndarray | float:
    """w = ln((1 - p)/p); requires 0 < p < 1."""
    arr = np.asarray(p, dtype=np.float64)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise DemError("edge_weight needs probabilities strictly inside (0, 1)")
    w = np.log((1.0 - arr) / arr)
    return float(w) if np.isscalar(p) else w


@dataclass(frozen=True)
class DemGrid:
    """Anchor-cycle grid: start, start+stride, ..., count points."""

    start: int
    stride: int
    count: int

    def __post_init__(self) -> None:
        if self.stride < 1 or self.count < 1:
            raise DemError(f"invalid grid {self}")

    def times(self) -> np.ndarray:
        return self.start + self.stride * np.arange(self.count, dtype=np.int64)

    @property
    def last(self) -> int:
        return self.start + self.stride * (self.count - 1)


@dataclass(frozen=True)
class TimeVaryingDem:
    """Edge classes plus per-class probability series on a shared grid."""

    classes: tuple[EdgeClass, ...]
    grid: DemGrid
    series: Mapping[str, np.ndarray]
    sigma: Mapping[str, np.ndarray] | None = None
    provenance: str = "ground-truth"
    clip_events: int = 0
    layout_hash: bytes = b""

    def __post_init__(self) -> None:
        if self.provenance not in PROVENANCES:
            raise DemError(f"unknown provenance {self.provenance!r}")
        for cls in self.classes:
            if cls.cid not in self.series:
                raise DemError(f"missing series for class {cls.cid}")
            if len(self.series[cls.cid]) != self.grid.count:
                raise DemError(f"series for {cls.cid} does not match the grid")

    def cls(self, cid: str) -> EdgeClass:
        for c in self.classes:
            if c.cid == cid:
                return c
        raise DemError(f"no class {cid!r}")

    def value_at(self, cid: str, cycles: np.ndarray, interpolation: str = "hold") -> np.ndarray:
        """Series evaluated at arbitrary anchor cycles inside the grid."""
        g = self.grid
        c = np.asarray(cycles, dtype=np.int64)
        if np.any(c < g.start) or np.any(c > g.last):
            raise DemError(
                f"cycles [{c.min()}, {c.max()}] outside DEM grid [{g.start}, {g.last}]"
            )
        vals = np.asarray(self.series[cid])
        if interpolation == "hold":
            idx = (c - g.start) // g.stride
            return vals[idx]
        if interpolation == "linear":
            return np.interp(c, g.times(), vals)
        raise DemError(f"unknown interpolation {interpolation!r}")


def make_dem(classes: Sequence[EdgeClass], grid: DemGrid, series: Mapping[str, np.ndarray],
             sigma: Mapping[str, np.ndarray] | None = None, provenance: str = "ground-truth",
             p_min: float = DEFAULT_P_MIN, layout_hash: bytes = b"") -> TimeVaryingDem:
    """Clip all series into the valid band and count clip events."""
    clipped = {}
    events = 0
    for cls in classes:
        vals, n = clip_probabilities(np.asarray(series[cls.cid], dtype=np.float64), p_min)
        clipped[cls.cid] = vals
        events += n
    sig = None
    if sigma is not None:
        sig = {c.cid: np.asarray(sigma[c.cid], dtype=np.float64) for c in classes}
    return TimeVaryingDem(
        classes=tuple(classes), grid=grid, series=clipped, sigma=sig,
        provenance=provenance, clip_events=events, layout_hash=layout_hash,
    )


def ground_truth_dem(classes: Sequence[EdgeClass], assignment, grid: DemGrid,
                     layout_hash: bytes = b"") -> TimeVaryingDem:
    from .code_models import ground_truth_edge_series

    series = ground_truth_edge_series(classes, assignment, grid.times())
    return make_dem(classes, grid, series, provenance="ground-truth", layout_hash=layout_hash)


def static_collapse(dem: TimeVaryingDem) -> TimeVaryingDem:
    """Replace every series by its time mean (constant series)."""
    if not dem.classes:
        raise DemError("empty DEM")
    series = {cid: np.full(dem.grid.count, float(np.mean(v))) for cid, v in dem.series.items()}
    return TimeVaryingDem(
        classes=dem.classes, grid=dem.grid, series=series, sigma=None,
        provenance="static", clip_events=dem.clip_events, layout_hash=dem.layout_hash,
    )


def slice_dem(dem: TimeVaryingDem, n0: int, n1: int, new_start: int | None = None) -> TimeVaryingDem:
    """Restrict to anchor cycles [n0, n1), optionally re-anchoring the grid.

    ``new_start`` relabels the first kept cycle (used when decoding a
    segment of a long run as a standalone experiment starting at cycle 0).
    Requires stride 1.
    """
    if dem.grid.stride != 1:
        raise DemError("slice_dem requires a stride-1 grid")
    if n0 < dem.grid.start or n1 > dem.grid.last + 1 or n1 <= n0:
        raise DemError(f"slice [{n0}, {n1}) outside grid [{dem.grid.start}, {dem.grid.last}]")
    i0 = n0 - dem.grid.start
    i1 = n1 - dem.grid.start
    start = n0 if new_start is None else new_start
    grid = DemGrid(start=start, stride=1, count=n1 - n0)
    series = {cid: np.asarray(v)[i0:i1].copy() for cid, v in dem.series.items()}
    sigma = None
    if dem.sigma is not None:
        sigma = {cid: np.asarray(v)[i0:i1].copy() for cid, v in dem.sigma.items()}
    return TimeVaryingDem(
        classes=dem.classes, grid=grid, series=series, sigma=sigma,
        provenance=dem.provenance, clip_events=dem.clip_events, layout_hash=dem.layout_hash,
    )


@dataclass
class DecodingGraphInstance:
    """Concrete weighted decoding graph over cycles [n0, n1).

    Detector (ancilla index a, cycle n) maps to node a + (n - n0) * A;
    the virtual boundary is node -1. Edges with one detector outside the
    range are truncated to boundary edges at the same probability.
    """

    n0: int
    n1: int
    num_ancillas: int
    edges_u: np.ndarray
    edges_v: np.ndarray
    probabilities: np.ndarray
    weights: np.ndarray
    observable: np.ndarray
    class_ids: list[str]
    anchors: np.ndarray

    @property
    def num_nodes(self) -> int:
        return (self.n1 - self.n0) * self.num_ancillas

    def node(self, ancilla_index: int, cycle: int) -> int:
        return ancilla_index + (cycle - self.n0) * self.num_ancillas


def instantiate(dem: TimeVaryingDem, cycle_range: tuple[int, int],
                interpolation: str = "hold", truncate_start: bool = False,
                ancilla_order: Sequence[str] | None = None) -> DecodingGraphInstance:
    """One weighted edge per (class, anchor cycle) over the range.

    Edges whose later detector falls at or beyond n1 are truncated to the
    in-range detector as boundary edges (open time boundary; the data past
    the range, including any final readout, is not decoded). With
    ``truncate_start`` the same happens for edges reaching before n0, for
    decoding a window out of a longer run.
    """
    n0, n1 = cycle_range
    if n1 <= n0:
        raise DemError(f"empty cycle range [{n0}, {n1})")
    if ancilla_order is None:
        order: list[str] = []
        for cls in dem.classes:
            for a, _ in cls.offsets:
                if a not in order:
                    order.append(a)
    else:
        order = list(ancilla_order)
    a_idx = {a: i for i, a in enumerate(order)}
    A = len(order)

    us, vs, ps, obs, cids, anchors = [], [], [], [], [], []
    for cls in dem.classes:
        offs = [(a_idx[a], o) for a, o in cls.offsets]
        max_off = max(o for _, o in offs)
        lo = n0 - max_off if truncate_start else n0
        cycles = np.arange(lo, n1, dtype=np.int64)
        if cycles.size == 0:
            continue
        vals = dem.value_at(cls.cid, np.clip(cycles, dem.grid.start, dem.grid.last), interpolation)
        # clamp anchors outside the grid to the nearest grid value (hold)
        for c, p in zip(cycles, vals):
            nodes = []
            for ai, o in offs:
                cyc = c + o
                nodes.append(ai + (cyc - n0) * A if n0 <= cyc < n1 else -1)
            in_range = [nd for nd in nodes if nd >= 0]
            if not in_range:
                continue
            if len(in_range) == 1:
                u, v = in_range[0], -1
            else:
                u, v = in_range
            us.append(u)
            vs.append(v)
            ps.append(p)
            obs.append(cls.observable)
            cids.append(cls.cid)
            anchors.append(c)

    p_arr = np.asarray(ps, dtype=np.float64)
    return DecodingGraphInstance(
        n0=n0, n1=n1, num_ancillas=A,
        edges_u=np.asarray(us, dtype=np.int64),
        edges_v=np.asarray(vs, dtype=np.int64),
        probabilities=p_arr,
        weights=edge_weight(p_arr) if p_arr.size else np.zeros(0),
        observable=np.asarray(obs, dtype=bool),
        class_ids=cids,
        anchors=np.asarray(anchors, dtype=np.int64),
    )


# --- file format ---------------------------------------------------------

def dem_to_dict(dem: TimeVaryingDem) -> dict:
    return {
        "format": "driftdem-dem",
        "version": 1,
        "provenance": dem.provenance,
        "grid": {"start": dem.grid.start, "stride": dem.grid.stride, "count": dem.grid.count},
        "classes": classes_to_dict(dem.classes),
        "series": {cid: np.asarray(v).tolist() for cid, v in dem.series.items()},
        "sigma": None if dem.sigma is None else {cid: np.asarray(v).tolist() for cid, v in dem.sigma.items()},
        "clip_events": dem.clip_events,
        "layout_hash": dem.layout_hash.hex(),
    }


def dem_from_dict(doc: dict) -> TimeVaryingDem:
    if doc.get("format") != "driftdem-dem" or doc.get("version") != 1:
        raise DemError("not a driftdem DEM file (or unsupported version)")
    classes = tuple(classes_from_dict(doc["classes"]))
    grid = DemGrid(**doc["grid"])
    series = {cid: np.asarray(v, dtype=np.float64) for cid, v in doc["series"].items()}
    sigma = doc.get("sigma")
    if sigma is not None:
        sigma = {cid: np.asarray(v, dtype=np.float64) for cid, v in sigma.items()}
    return TimeVaryingDem(
        classes=classes, grid=grid, series=series, sigma=sigma,
        provenance=doc["provenance"], clip_events=int(doc.get("clip_events", 0)),
        layout_hash=bytes.fromhex(doc.get("layout_hash", "")),
    )


def save_dem(dem: TimeVaryingDem, path) -> None:
    with open(path, "w") as fh:
        json.dump(dem_to_dict(dem), fh)


def load_dem(path) -> TimeVaryingDem:
    with open(path) as fh:
        return dem_from_dict(json.load(fh))
