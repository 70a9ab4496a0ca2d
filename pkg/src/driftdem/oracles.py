"""Brute-force reference implementations used to cross-check the fast paths.

These are deliberately naive: exhaustive bitstring enumeration for window
moments, direct-sum DFT, exhaustive matching over all defect pairings, and
an exhaustive maximum-likelihood decoder for tiny instances. Production
code never calls them; the CLI exposes them through ``driftdem verify``
and the test suite uses them as oracles.
"""

from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np

from .code_models import CodeLayout, Fault, elementary_faults, propagate_fault

MAX_ENUM_WINDOW = 12
MAX_BRUTE_DEFECTS = 8


class OracleError(ValueError):
    pass


def enumerate_window(p_values: Sequence[float]) -> tuple[float, float]:
    """Exact (E[n]/W, Var(n)/W^2) by summing over all 2^W window bitstrings.

    Each cycle k of the window fires independently with probability p_k;
    n counts the fired cycles.
    """
    p = np.asarray(p_values, dtype=np.float64)
    W = p.size
    if W == 0 or W > MAX_ENUM_WINDOW:
        raise OracleError(f"window length must be in [1, {MAX_ENUM_WINDOW}], got {W}")
    if np.any((p < 0) | (p > 1)):
        raise OracleError("probabilities must lie in [0, 1]")
    mean = 0.0
    second = 0.0
    for bits in itertools.product((0, 1), repeat=W):
        prob = 1.0
        for b, pk in zip(bits, p):
            prob *= pk if b else 1.0 - pk
        n = sum(bits)
        mean += n * prob
        second += n * n * prob
    var = second - mean * mean
    return mean / W, var / (W * W)


def dft_direct(x: Sequence[complex]) -> np.ndarray:
    """O(N^2) DFT with the same sign convention as estimator.dft."""
    x = np.asarray(x)
    n = x.size
    ks = np.arange(n)
    return np.array([np.sum(x * np.exp(-2j * np.pi * m * ks / n)) for m in range(n)])


def brute_matching(dist: np.ndarray, boundary: np.ndarray | None = None
                   ) -> tuple[float, list[tuple[int, int]]]:
    """Minimum-weight pairing of defects by exhaustive recursion.

    ``dist[i, j]`` gives defect-defect distances; ``boundary[i]``, when
    supplied, the cost of sending defect i to the boundary alone (pairs
    (i, -1) in the result). Without a boundary an odd defect count is a
    parity error.
    """
    dist = np.asarray(dist, dtype=np.float64)
    k = dist.shape[0]
    if dist.shape != (k, k):
        raise OracleError("distance matrix must be square")
    if k > MAX_BRUTE_DEFECTS:
        raise OracleError(f"at most {MAX_BRUTE_DEFECTS} defects, got {k}")
    if boundary is None and k % 2 == 1:
        raise OracleError("odd defect count needs boundary images")

    best = [np.inf, []]

    def recurse(remaining: tuple[int, ...], weight: float, pairs: list[tuple[int, int]]):
        if weight >= best[0]:
            return
        if not remaining:
            best[0] = weight
            best[1] = list(pairs)
            return
        i = remaining[0]
        rest = remaining[1:]
        if boundary is not None:
            pairs.append((i, -1))
            recurse(rest, weight + boundary[i], pairs)
            pairs.pop()
        for pos, j in enumerate(rest):
            pairs.append((i, j))
            recurse(rest[:pos] + rest[pos + 1:], weight + dist[i, j], pairs)
            pairs.pop()

    recurse(tuple(range(k)), 0.0, [])
    if not np.isfinite(best[0]):
        raise OracleError("no finite-weight pairing exists")
    return best[0], best[1]


def fire_rate_oracle(layout: CodeLayout, assignment, model: str, ancilla: str,
                     cycle: int) -> float:
    """Exact probability that detector (ancilla, cycle) fires.

    Every elementary fault of nearby cycles is propagated through the
    reference circuit. Fault categories drawn at the same site (one
    location in one cycle, e.g. the three flip patterns of one two-qubit
    depolarizing draw) are mutually exclusive, so their flip probabilities
    add within the site; distinct sites are independent and combine by the
    odd-count rule. Independent of the vectorized simulator.
    """
    from .noise import sample_rate

    site_flip: dict[tuple[str, int], float] = {}
    for fault in elementary_faults(layout, model):
        for inject in range(max(0, cycle - 2), cycle + 1):
            fired, _ = propagate_fault(layout, fault, inject_cycle=inject, cycles=cycle + 3)
            if (ancilla, cycle) in fired:
                g = sample_rate(assignment.channel(fault.location).profile, inject)
                key = (fault.location, inject)
                site_flip[key] = site_flip.get(key, 0.0) + fault.fraction * g
    prod = 1.0
    for p in site_flip.values():
        prod *= 1.0 - 2.0 * p
    return 0.5 * (1.0 - prod)


def exhaustive_ml_decode(layout: CodeLayout, assignment, model: str, cycles: int,
                         ) -> dict[tuple, int]:
    """Maximum-likelihood prediction table for a tiny memory experiment.

    Enumerates every combination of per-site fault outcomes over
    ``cycles`` cycles (a site draws one of its exclusive flip categories
    or nothing), accumulates the probability of each (detector outcome,
    observable) pair, and returns the most likely observable flip per
    detector outcome. The outcome key is the tuple of in-range detector
    bits, matching the open-boundary decoding of the production decoder.
    """
    from .noise import sample_rate

    # group exclusive categories per (location, cycle) site
    sites: dict[tuple[str, int], list] = {}
    for n in range(cycles):
        for f in elementary_faults(layout, model):
            fired, obs = propagate_fault(layout, f, inject_cycle=n, cycles=cycles)
            in_range = frozenset((a, c) for a, c in fired if c < cycles)
            g = sample_rate(assignment.channel(f.location).profile, n)
            sites.setdefault((f.location, n), []).append((in_range, obs, f.fraction * g))

    options = []
    for cats in sites.values():
        p_none = 1.0 - sum(p for _, _, p in cats)
        options.append([(frozenset(), False, p_none)] + cats)
    total_combos = 1
    for opt in options:
        total_combos *= len(opt)
    if total_combos > 4_000_000:
        raise OracleError(f"{total_combos} fault combinations is too many to enumerate")

    table: dict[tuple, dict[int, float]] = {}
    ancillas = layout.ancillas
    for combo in itertools.product(*options):
        prob = 1.0
        fired: set = set()
        obs = 0
        for sig, o, p in combo:
            prob *= p
            fired ^= set(sig)
            obs ^= o
        key = tuple(1 if (a, c) in fired else 0 for c in range(cycles) for a in ancillas)
        table.setdefault(key, {0: 0.0, 1: 0.0})[obs] += prob

    return {key: (1 if probs[1] > probs[0] else 0) for key, probs in table.items()}


def exhaustive_joint_table(layout: CodeLayout, assignment, model: str, cycles: int
                           ) -> dict[tuple, dict[int, float]]:
    """Exact joint probabilities P(detector outcome, observable flip).

    Same enumeration as :func:`exhaustive_ml_decode` but returning the raw
    table, so exact (Monte-Carlo-free) failure probabilities of any
    prediction rule can be computed.
    """
    from .noise import sample_rate

    sites: dict[tuple[str, int], list] = {}
    for n in range(cycles):
        for f in elementary_faults(layout, model):
            fired, obs = propagate_fault(layout, f, inject_cycle=n, cycles=cycles)
            in_range = frozenset((a, c) for a, c in fired if c < cycles)
            g = sample_rate(assignment.channel(f.location).profile, n)
            sites.setdefault((f.location, n), []).append((in_range, obs, f.fraction * g))
    options = []
    for cats in sites.values():
        p_none = 1.0 - sum(p for _, _, p in cats)
        options.append([(frozenset(), False, p_none)] + cats)
    table: dict[tuple, dict[int, float]] = {}
    ancillas = layout.ancillas
    for combo in itertools.product(*options):
        prob = 1.0
        fired: set = set()
        obs = 0
        for sig, o, p in combo:
            prob *= p
            fired ^= set(sig)
            obs ^= o
        key = tuple(1 if (a, c) in fired else 0 for c in range(cycles) for a in ancillas)
        table.setdefault(key, {0: 0.0, 1: 0.0})[obs] += prob
    return table
