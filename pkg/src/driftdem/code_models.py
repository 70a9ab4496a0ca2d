"""Code layouts, detectors, and edge-class derivation by single-fault propagation.

The supported memory experiments are the distance-d repetition code (Z basis)
and the distance-d rotated surface code restricted to its X stabilizers.
Edge classes are the time-translation-invariant error mechanisms of the
detector error model; they are derived here by propagating every elementary
fault through a slow, obviously-correct reference implementation of the
syndrome-extraction circuit. The vectorized Monte-Carlo simulator lives in
:mod:`driftdem.sim` and is validated against this reference in the tests.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .noise import NoiseAssignment, flip_groups, sample_rate

PHENOMENOLOGICAL = "phenomenological"
CIRCUIT_LEVEL = "circuit_level"
MODELS = (PHENOMENOLOGICAL, CIRCUIT_LEVEL)


class LayoutError(ValueError):
    """Invalid code parameters or malformed layout."""


class HypergraphError(ValueError):
    """A single fault flipped more than two detectors (non-graph-like DEM)."""


@dataclass(frozen=True)
class Cnot:
    """One CNOT of the syndrome-extraction schedule (data control, ancilla target)."""

    data: str
    ancilla: str
    gate_id: str


@dataclass(frozen=True)
class CodeLayout:
    """Static description of one code's memory experiment.

    ``stabilizers`` maps each ancilla to the data qubits it checks, in the
    order they are coupled. ``cnots`` is the per-cycle gate schedule, executed
    sequentially (one gate per time slot, so no qubit is used twice in a
    slot). ``basis`` is the memory/measurement basis ("Z" or "X");
    ``logical_support`` lists the data qubits whose flip toggles the logical
    readout.
    """

    name: str
    distance: int
    data_qubits: tuple[str, ...]
    ancillas: tuple[str, ...]
    stabilizers: dict[str, tuple[str, ...]]
    cnots: tuple[Cnot, ...]
    basis: str
    logical_support: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.basis not in ("Z", "X"):
            raise LayoutError(f"basis must be 'Z' or 'X', got {self.basis!r}")
        data = set(self.data_qubits)
        for cn in self.cnots:
            if cn.data not in data or cn.ancilla not in self.stabilizers:
                raise LayoutError(f"CNOT {cn} does not touch one data and one ancilla qubit")

    @property
    def num_detectors_per_cycle(self) -> int:
        return len(self.ancillas)

    def ancilla_index(self, ancilla: str) -> int:
        return self.ancillas.index(ancilla)

    def fault_locations(self, model: str) -> tuple[tuple[str, str], ...]:
        """(location id, channel kind) pairs implied by the error model."""
        if model not in MODELS:
            raise LayoutError(f"unknown error model {model!r}")
        locs = [(q, "depolarize1") for q in self.data_qubits]
        locs += [(a, "depolarize1") for a in self.ancillas]
        if model == CIRCUIT_LEVEL:
            locs += [(cn.gate_id, "depolarize2") for cn in self.cnots]
        return tuple(locs)

    def canonical_dict(self) -> dict:
        return {
            "name": self.name,
            "distance": self.distance,
            "data_qubits": list(self.data_qubits),
            "ancillas": list(self.ancillas),
            "stabilizers": {a: list(q) for a, q in self.stabilizers.items()},
            "cnots": [[c.data, c.ancilla, c.gate_id] for c in self.cnots],
            "basis": self.basis,
            "logical_support": list(self.logical_support),
        }

    def hash_bytes(self) -> bytes:
        blob = json.dumps(self.canonical_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).digest()


@dataclass(frozen=True)
class DetectorSpec:
    """One detector: a stabilizer compared across adjacent cycles.

    ``final`` marks the comparison of the last ancilla measurement against
    the transversal data readout.
    """

    detector_id: int
    ancilla: str
    cycle: int
    final: bool = False


def enumerate_detectors(layout: CodeLayout, cycles: int, include_final: bool = False) -> list[DetectorSpec]:
    dets = []
    did = 0
    for n in range(cycles):
        for a in layout.ancillas:
            dets.append(DetectorSpec(did, a, n))
            did += 1
    if include_final:
        for a in layout.ancillas:
            dets.append(DetectorSpec(did, a, cycles, final=True))
            did += 1
    return dets


def build_repetition(d: int) -> CodeLayout:
    """Distance-d repetition code, Z-basis memory, Z_i Z_{i+1} stabilizers.

    Schedule per cycle: for each stabilizer left to right, couple its left
    then right data qubit (d1a1, d2a1, d2a2, d3a2 for d=3).
    """
    if d < 3 or d % 2 == 0:
        raise LayoutError(f"repetition distance must be odd and >= 3, got {d}")
    data = tuple(f"d{i + 1}" for i in range(d))
    anc = tuple(f"a{i + 1}" for i in range(d - 1))
    stabs = {f"a{i + 1}": (f"d{i + 1}", f"d{i + 2}") for i in range(d - 1)}
    cnots = []
    gate_no = 0
    for i in range(d - 1):
        for q in stabs[f"a{i + 1}"]:
            gate_no += 1
            cnots.append(Cnot(q, f"a{i + 1}", f"g{gate_no}"))
    return CodeLayout(
        name=f"repetition_d{d}",
        distance=d,
        data_qubits=data,
        ancillas=anc,
        stabilizers=stabs,
        cnots=tuple(cnots),
        basis="Z",
        logical_support=("d1",),
    )


def build_rotated_surface_x(d: int) -> CodeLayout:
    """X-stabilizer half of the distance-d rotated surface code (X memory).

    Data qubits sit on a d x d grid (row-major ids d1..d{d^2}); X plaquettes
    occupy the (row+col)-odd checkerboard positions plus weight-2 halves on
    the top and bottom rows, giving (d^2-1)/2 X ancillas. The logical X
    support is the left data column. The CNOT order within a stabilizer is
    row-major over its support; it is unused by the phenomenological model,
    which is the only error model supported for this layout.
    """
    if d < 3 or d % 2 == 0:
        raise LayoutError(f"surface code distance must be odd and >= 3, got {d}")

    def qid(r: int, c: int) -> str:
        return f"d{r * d + c + 1}"

    supports: list[tuple[str, ...]] = []
    # interior full plaquettes
    for r in range(d - 1):
        for c in range(d - 1):
            if (r + c) % 2 == 1:
                supports.append((qid(r, c), qid(r, c + 1), qid(r + 1, c), qid(r + 1, c + 1)))
    # top halves (r = -1) and bottom halves (r = d-1)
    for c in range(d - 1):
        if (-1 + c) % 2 == 1:
            supports.append((qid(0, c), qid(0, c + 1)))
        if (d - 1 + c) % 2 == 1:
            supports.append((qid(d - 1, c), qid(d - 1, c + 1)))

    def sort_key(sup: tuple[str, ...]) -> int:
        return min(int(q[1:]) for q in sup)

    supports.sort(key=sort_key)
    anc = tuple(f"a{i + 1}" for i in range(len(supports)))
    stabs = {a: sup for a, sup in zip(anc, supports)}
    cnots = []
    gate_no = 0
    for a in anc:
        for q in stabs[a]:
            gate_no += 1
            cnots.append(Cnot(q, a, f"g{gate_no}"))
    expected = (d * d - 1) // 2
    if len(anc) != expected:
        raise LayoutError(f"internal: built {len(anc)} X ancillas, expected {expected}")
    return CodeLayout(
        name=f"rotated_surface_x_d{d}",
        distance=d,
        data_qubits=tuple(f"d{i + 1}" for i in range(d * d)),
        ancillas=anc,
        stabilizers=stabs,
        cnots=tuple(cnots),
        basis="X",
        logical_support=tuple(qid(r, 0) for r in range(d)),
    )


# --- reference single-fault propagation ---------------------------------
#
# A fault is a set of flip actions:
#   ("data", qubit)    flip the tracked frame bit of a data qubit
#   ("meas", ancilla)  flip this cycle's measurement outcome of an ancilla
# For circuit-level faults the flips take effect at a position within the
# CNOT sequence; phenomenological faults act at the start of the cycle
# (position -1).


@dataclass(frozen=True)
class Fault:
    """Elementary fault: flips applied after CNOT ``position`` of one cycle."""

    location: str
    fraction: float  # share of that location's g(t)
    position: int  # -1 = start of cycle, k = after k-th CNOT (0-based)
    data_flips: tuple[str, ...] = ()
    meas_flips: tuple[str, ...] = ()


def elementary_faults(layout: CodeLayout, model: str) -> list[Fault]:
    """All distinct detectable flip patterns with their channel fractions."""
    if model not in MODELS:
        raise LayoutError(f"unknown error model {model!r}")
    if model == CIRCUIT_LEVEL and layout.basis != "Z":
        raise LayoutError("circuit-level noise is only modeled for Z-basis repetition layouts")
    faults: list[Fault] = []
    g1 = flip_groups(1, layout.basis)
    frac1 = g1[(True,)]
    for q in layout.data_qubits:
        faults.append(Fault(q, frac1, -1, data_flips=(q,)))
    for a in layout.ancillas:
        faults.append(Fault(a, frac1, -1, meas_flips=(a,)))
    if model == CIRCUIT_LEVEL:
        g2 = flip_groups(2, layout.basis)
        for pos, cn in enumerate(layout.cnots):
            for pattern, frac in g2.items():
                faults.append(
                    Fault(
                        cn.gate_id,
                        frac,
                        pos,
                        data_flips=(cn.data,) if pattern[0] else (),
                        meas_flips=(cn.ancilla,) if pattern[1] else (),
                    )
                )
    return faults


def propagate_fault(layout: CodeLayout, fault: Fault, inject_cycle: int = 1,
                    cycles: int = 4) -> tuple[frozenset[tuple[str, int]], bool]:
    """Reference propagation of a single fault through a noiseless run.

    Returns the set of fired detectors as (ancilla, cycle) pairs, cycle
    ``cycles`` meaning the final-readout comparison, plus the logical flip.
    Slow and explicit on purpose: this is the oracle the fast simulator is
    checked against, and the source of edge-class signatures.
    """
    frame = {q: 0 for q in layout.data_qubits}
    syndromes: list[dict[str, int]] = []
    for n in range(cycles):
        meas_err = {a: 0 for a in layout.ancillas}
        if n == inject_cycle and fault.position == -1:
            for q in fault.data_flips:
                frame[q] ^= 1
            for a in fault.meas_flips:
                meas_err[a] ^= 1
        acc = {a: 0 for a in layout.ancillas}
        for pos, cn in enumerate(layout.cnots):
            acc[cn.ancilla] ^= frame[cn.data]
            if n == inject_cycle and fault.position == pos:
                for q in fault.data_flips:
                    frame[q] ^= 1
                for a in fault.meas_flips:
                    meas_err[a] ^= 1
        syndromes.append({a: acc[a] ^ meas_err[a] for a in layout.ancillas})

    fired: set[tuple[str, int]] = set()
    for n in range(cycles):
        prev = syndromes[n - 1] if n > 0 else {a: 0 for a in layout.ancillas}
        for a in layout.ancillas:
            if syndromes[n][a] ^ prev[a]:
                fired.add((a, n))
    # final-readout detectors: data-parity readout vs last syndrome
    for a in layout.ancillas:
        parity = 0
        for q in layout.stabilizers[a]:
            parity ^= frame[q]
        if parity ^ syndromes[cycles - 1][a]:
            fired.add((a, cycles))
    obs = 0
    for q in layout.logical_support:
        obs ^= frame[q]
    return frozenset(fired), bool(obs)


EDGE_KINDS = ("time-like", "bulk-space", "boundary-space", "diagonal")


@dataclass(frozen=True)
class FaultContribution:
    """One fault term feeding an edge class.

    ``shift`` is the cycle offset between the fault's cycle and the class
    anchor cycle (the cycle of the earliest flipped detector): a fault at
    cycle n contributes to the class series at n + shift... inverted at
    evaluation time, the class rate at anchor cycle m draws g(m - shift).
    """

    location: str
    fraction: float
    shift: int


@dataclass(frozen=True)
class EdgeClass:
    """Time-translation-invariant error mechanism of the DEM.

    ``offsets`` is the normalized detector signature: (ancilla, cycle
    offset) pairs with the earliest offset at 0.
    """

    cid: str
    kind: str
    offsets: tuple[tuple[str, int], ...]
    observable: bool
    faults: tuple[FaultContribution, ...]

    @property
    def is_boundary(self) -> bool:
        return len(self.offsets) == 1

    @property
    def max_offset(self) -> int:
        return max(off for _, off in self.offsets)


def _classify(layout: CodeLayout, offsets: tuple[tuple[str, int], ...]) -> str:
    if len(offsets) == 1:
        return "boundary-space"
    (a1, o1), (a2, o2) = offsets
    if a1 == a2:
        return "time-like"
    if o1 == o2:
        return "bulk-space"
    return "diagonal"


def _class_id(kind: str, offsets: tuple[tuple[str, int], ...]) -> str:
    parts = [f"{a}+{o}" if o else a for a, o in offsets]
    prefix = {"time-like": "t", "bulk-space": "s", "boundary-space": "b", "diagonal": "x"}[kind]
    return f"{prefix}:" + "-".join(parts)


def derive_edge_classes(layout: CodeLayout, assignment: NoiseAssignment, model: str) -> list[EdgeClass]:
    """Derive the DEM structure by propagating every elementary fault.

    Faults are grouped by their normalized detector signature; a signature
    with more than two detectors raises :class:`HypergraphError`. The
    assignment must cover every fault location of the model.
    """
    for loc, kind in layout.fault_locations(model):
        ch = assignment.channel(loc)
        if ch.kind != kind:
            raise LayoutError(
                f"location {loc!r} needs channel kind {kind!r}, got {ch.kind!r}"
            )

    inject = 2  # interior cycle: one cycle of history on each side plus final margin
    grouped: dict[tuple[tuple[tuple[str, int], ...], bool], list[FaultContribution]] = {}
    for fault in elementary_faults(layout, model):
        fired, obs = propagate_fault(layout, fault, inject_cycle=inject, cycles=inject + 3)
        fired2, obs2 = propagate_fault(layout, fault, inject_cycle=inject, cycles=inject + 3)
        if fired != fired2 or obs != obs2:
            raise AssertionError("reference propagation is not deterministic")
        if not fired:
            continue
        if len(fired) > 2:
            raise HypergraphError(
                f"fault at {fault.location!r} flips {len(fired)} detectors; only "
                "graph-like DEMs (<= 2 detectors per mechanism) are supported"
            )
        anchor = min(n for _, n in fired)
        offsets = tuple(sorted(((a, n - anchor) for a, n in fired),
                               key=lambda t: (t[1], layout.ancilla_index(t[0]))))
        shift = anchor - inject
        key = (offsets, obs)
        grouped.setdefault(key, []).append(FaultContribution(fault.location, fault.fraction, shift))

    # a signature must not appear with both observable flags
    sigs = [k[0] for k in grouped]
    if len(set(sigs)) != len(sigs):
        raise HypergraphError("same detector signature produced with conflicting observable flags")

    classes = []
    for (offsets, obs), contribs in grouped.items():
        kind = _classify(layout, offsets)
        contribs = sorted(contribs, key=lambda f: (f.location, f.shift))
        classes.append(EdgeClass(_class_id(kind, offsets), kind, offsets, obs, tuple(contribs)))
    classes.sort(key=lambda c: (EDGE_KINDS.index(c.kind), c.cid))
    return classes


def ground_truth_edge_series(classes: Sequence[EdgeClass], assignment: NoiseAssignment,
                             n) -> dict[str, np.ndarray | float]:
    """Exact per-class probability at anchor cycle(s) ``n``.

    Independent contributing faults combine through the odd-count rule
    p = (1 - prod_k (1 - 2 p_k)) / 2, with each p_k drawn from its
    location's drift profile at the fault's own cycle (anchor minus shift).
    Anchors whose shifted fault cycle would be negative contribute nothing
    for that fault.
    """
    n_arr = np.asarray(n, dtype=np.int64)
    out: dict[str, np.ndarray | float] = {}
    for cls in classes:
        prod = np.ones(n_arr.shape, dtype=np.float64)
        for fc in cls.faults:
            cyc = n_arr - fc.shift
            g = np.asarray(sample_rate(assignment.channel(fc.location).profile, cyc))
            pk = np.where(cyc >= 0, fc.fraction * g, 0.0)
            prod *= 1.0 - 2.0 * pk
        p = 0.5 * (1.0 - prod)
        out[cls.cid] = float(p) if np.isscalar(n) or n_arr.ndim == 0 else p
    return out


def classes_to_dict(classes: Sequence[EdgeClass]) -> list[dict]:
    return [
        {
            "id": c.cid,
            "kind": c.kind,
            "offsets": [[a, o] for a, o in c.offsets],
            "observable": c.observable,
            "faults": [[f.location, f.fraction, f.shift] for f in c.faults],
        }
        for c in classes
    ]


def classes_from_dict(items: Iterable[dict]) -> list[EdgeClass]:
    out = []
    for item in items:
        out.append(
            EdgeClass(
                cid=item["id"],
                kind=item["kind"],
                offsets=tuple((a, int(o)) for a, o in item["offsets"]),
                observable=bool(item["observable"]),
                faults=tuple(FaultContribution(l, float(fr), int(sh)) for l, fr, sh in item["faults"]),
            )
        )
    return out
