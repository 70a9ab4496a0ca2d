"""Vectorized Pauli-frame Monte-Carlo simulator for memory experiments.

Shots are simulated in fixed-size blocks, each drawing from its own
counter-based Philox stream keyed by (seed, block index). The draw order
inside a stream is fixed by (cycle, location), so the output is a pure
function of the configuration and seed, independent of how blocks are
scheduled across worker threads.

Detector bits are stored bit-packed, one row per (shot, cycle), LSB-first
within each byte, matching the on-disk format.
"""

from __future__ import annotations

import hashlib
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .code_models import CIRCUIT_LEVEL, PHENOMENOLOGICAL, CodeLayout, LayoutError
from .noise import NoiseAssignment, count_clamps, flip_groups, sample_rate

MAGIC = b"DDEM"
VERSION = 1
_HEADER = struct.Struct("<4sHQQIQ32s32s")

#: Shots per RNG block. Fixed: changing it changes the sampled bits.
BLOCK_SHOTS = 4096

#: Refuse runs whose packed detector tensor would exceed this many bits.
DEFAULT_MEMORY_BUDGET_BITS = 2 * 10**9


class DataFormatError(ValueError):
    """Corrupt, truncated, or mismatched detection-event file."""


class MemoryBudgetError(RuntimeError):
    """Requested run exceeds the configured detector-tensor budget."""


def assignment_hash(assignment: NoiseAssignment) -> bytes:
    from .noise import assignment_to_config

    blob = json.dumps(assignment_to_config(assignment), sort_keys=True).encode()
    return hashlib.sha256(blob).digest()


@dataclass
class DetectionData:
    """Bit tensor of detector outcomes plus per-shot observable flips.

    ``dets`` has shape (shots, cycles, row_bytes) with detector d of a cycle
    at bit d (LSB-first) of its row. ``observables`` holds one byte per shot
    (0 or 1).
    """

    dets: np.ndarray
    observables: np.ndarray
    shots: int
    cycles: int
    num_detectors: int
    seed: int
    layout_hash: bytes
    assignment_hash: bytes
    clamped_rates: int = 0

    def __post_init__(self) -> None:
        rb = (self.num_detectors + 7) // 8
        if self.dets.shape != (self.shots, self.cycles, rb):
            raise DataFormatError(
                f"detector tensor shape {self.dets.shape} does not match "
                f"(S={self.shots}, N={self.cycles}, {rb} row bytes)"
            )
        if self.observables.shape != (self.shots,):
            raise DataFormatError("observable array must have one entry per shot")

    def unpack(self) -> np.ndarray:
        """Detector bits as a bool array of shape (shots, cycles, D)."""
        bits = np.unpackbits(self.dets, axis=-1, bitorder="little")
        return bits[:, :, : self.num_detectors].astype(bool)

    def cycle_patterns(self) -> np.ndarray:
        """Per-(shot, cycle) detector bitmask as integers (needs D <= 16)."""
        if self.num_detectors > 16:
            raise DataFormatError("cycle_patterns supports at most 16 detectors per cycle")
        pat = self.dets[:, :, 0].astype(np.uint16)
        if self.dets.shape[2] > 1:
            pat |= self.dets[:, :, 1].astype(np.uint16) << 8
        mask = np.uint16((1 << self.num_detectors) - 1)
        return pat & mask


def _block_rng(seed: int, block: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, block ^ 0x9E3779B97F4A7C15], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _prob_tables(layout: CodeLayout, assignment: NoiseAssignment, model: str,
                 cycles: int) -> dict:
    """Per-cycle flip probabilities for every sampled location."""
    ns = np.arange(cycles)
    frac1 = flip_groups(1, layout.basis)[(True,)]
    p_data = np.stack(
        [frac1 * np.asarray(sample_rate(assignment.channel(q).profile, ns)) for q in layout.data_qubits],
        axis=1,
    )
    p_meas = np.stack(
        [frac1 * np.asarray(sample_rate(assignment.channel(a).profile, ns)) for a in layout.ancillas],
        axis=1,
    )
    tables = {"data": p_data, "meas": p_meas}
    if model == CIRCUIT_LEVEL:
        # exclusive outcome thresholds per gate: data-only / anc-only / both
        g2 = flip_groups(2, layout.basis)
        f_d, f_a, f_b = g2[(True, False)], g2[(False, True)], g2[(True, True)]
        g_gate = np.stack(
            [np.asarray(sample_rate(assignment.channel(c.gate_id).profile, ns)) for c in layout.cnots],
            axis=1,
        )
        tables["gate_thresholds"] = np.stack(
            [f_d * g_gate, (f_d + f_a) * g_gate, (f_d + f_a + f_b) * g_gate], axis=2
        )
    return tables


def _simulate_block(layout: CodeLayout, model: str, tables: dict, cycles: int,
                    block_size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    nd = len(layout.data_qubits)
    na = len(layout.ancillas)
    data_idx = {q: i for i, q in enumerate(layout.data_qubits)}
    anc_idx = {a: i for i, a in enumerate(layout.ancillas)}
    supp = np.zeros((na, nd), dtype=np.uint8)
    for a, qs in layout.stabilizers.items():
        for q in qs:
            supp[anc_idx[a], data_idx[q]] = 1

    frame = np.zeros((block_size, nd), dtype=np.uint8)
    prev = np.zeros((block_size, na), dtype=np.uint8)
    rb = (na + 7) // 8
    det = np.zeros((block_size, cycles, rb), dtype=np.uint8)
    circuit = model == CIRCUIT_LEVEL

    for n in range(cycles):
        u = rng.random((block_size, nd + na))
        frame ^= u[:, :nd] < tables["data"][n]
        meas = (u[:, nd:] < tables["meas"][n]).astype(np.uint8)
        if circuit:
            ug = rng.random((block_size, len(layout.cnots)))
            thr = tables["gate_thresholds"][n]  # (gates, 3)
            acc = np.zeros((block_size, na), dtype=np.uint8)
            for k, cn in enumerate(layout.cnots):
                acc[:, anc_idx[cn.ancilla]] ^= frame[:, data_idx[cn.data]]
                uk = ug[:, k]
                d_flip = (uk < thr[k, 0]) | ((uk >= thr[k, 1]) & (uk < thr[k, 2]))
                a_flip = (uk >= thr[k, 0]) & (uk < thr[k, 2])
                frame[:, data_idx[cn.data]] ^= d_flip
                meas[:, anc_idx[cn.ancilla]] ^= a_flip
            syn = acc ^ meas
        else:
            syn = ((frame @ supp.T) & 1) ^ meas
        fired = syn ^ prev
        det[:, n] = np.packbits(fired, axis=-1, bitorder="little")[:, :rb]
        prev = syn

    obs = np.zeros(block_size, dtype=np.uint8)
    for q in layout.logical_support:
        obs ^= frame[:, data_idx[q]]
    return det, obs


def run_memory(layout: CodeLayout, assignment: NoiseAssignment, model: str,
               cycles: int, shots: int, seed: int, threads: int = 1,
               memory_budget_bits: int = DEFAULT_MEMORY_BUDGET_BITS) -> DetectionData:
    """Simulate ``shots`` runs of ``cycles`` syndrome-extraction cycles.

    The result is deterministic for a given (layout, assignment, model,
    cycles, shots, seed) and independent of ``threads``.
    """
    if cycles < 2:
        raise ValueError(f"need at least 2 cycles, got {cycles}")
    if shots < 1:
        raise ValueError(f"need at least 1 shot, got {shots}")
    if model not in (PHENOMENOLOGICAL, CIRCUIT_LEVEL):
        raise LayoutError(f"unknown error model {model!r}")
    for loc, kind in layout.fault_locations(model):
        ch = assignment.channel(loc)
        if ch.kind != kind:
            raise LayoutError(f"location {loc!r} needs channel kind {kind!r}, got {ch.kind!r}")

    na = len(layout.ancillas)
    rb = (na + 7) // 8
    total_bits = shots * cycles * rb * 8
    if total_bits > memory_budget_bits:
        raise MemoryBudgetError(
            f"run needs {total_bits} detector bits, over the budget of "
            f"{memory_budget_bits}; raise memory_budget_bits explicitly if intended"
        )

    tables = _prob_tables(layout, assignment, model, cycles)
    ns = np.arange(cycles)
    clamped = sum(
        count_clamps(assignment.channel(loc).profile, ns)
        for loc, _ in layout.fault_locations(model)
    )

    det = np.zeros((shots, cycles, rb), dtype=np.uint8)
    obs = np.zeros(shots, dtype=np.uint8)
    blocks = [(b, s0, min(s0 + BLOCK_SHOTS, shots))
              for b, s0 in enumerate(range(0, shots, BLOCK_SHOTS))]

    def work(job):
        b, s0, s1 = job
        d, o = _simulate_block(layout, model, tables, cycles, s1 - s0, _block_rng(seed, b))
        det[s0:s1] = d
        obs[s0:s1] = o

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, blocks))
    else:
        for job in blocks:
            work(job)

    return DetectionData(
        dets=det,
        observables=obs,
        shots=shots,
        cycles=cycles,
        num_detectors=na,
        seed=seed,
        layout_hash=layout.hash_bytes(),
        assignment_hash=assignment_hash(assignment),
        clamped_rates=clamped,
    )


def write_detections(data: DetectionData, path) -> None:
    """Binary format: header, S*N packed detector rows, S observable bytes."""
    header = _HEADER.pack(
        MAGIC, VERSION, data.shots, data.cycles, data.num_detectors,
        data.seed, data.layout_hash, data.assignment_hash,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(data.dets).tobytes())
        fh.write(data.observables.astype(np.uint8).tobytes())


def read_detections(path) -> DetectionData:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise DataFormatError("file shorter than header")
    magic, version, shots, cycles, nd, seed, lh, ah = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise DataFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise DataFormatError(f"unsupported version {version}")
    if nd == 0 or shots == 0 or cycles == 0:
        raise DataFormatError("header declares zero-sized dimensions")
    rb = (nd + 7) // 8
    need = _HEADER.size + shots * cycles * rb + shots
    if len(blob) != need:
        raise DataFormatError(f"payload length {len(blob)} does not match header (want {need})")
    dets = np.frombuffer(blob, dtype=np.uint8, count=shots * cycles * rb,
                         offset=_HEADER.size).reshape(shots, cycles, rb).copy()
    obs = np.frombuffer(blob, dtype=np.uint8, count=shots, offset=_HEADER.size + shots * cycles * rb).copy()
    if np.any(obs > 1):
        raise DataFormatError("observable bytes must be 0 or 1")
    return DetectionData(
        dets=dets, observables=obs, shots=shots, cycles=cycles,
        num_detectors=nd, seed=seed, layout_hash=lh, assignment_hash=ah,
    )
