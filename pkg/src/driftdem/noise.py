"""Time-varying error-rate profiles and elementary depolarizing channels.

A :class:`DriftProfile` describes a per-fault-location error rate
``g(n) = g0 + sum_m g_m * sin(omega_m * n + phase_m)`` sampled at integer
syndrome-extraction cycles (the cycle period is the abstract time unit).
A :class:`NoiseAssignment` maps every fault location of a circuit to one
profile plus a channel kind.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

TWO_PI = 2.0 * np.pi

#: Channel kinds accepted by :class:`LocationChannel`.
CHANNEL_KINDS = ("depolarize1", "depolarize2")

_PAULIS_1Q = ("X", "Y", "Z")
_PAULIS_2Q = tuple(
    a + b for a in ("I", "X", "Y", "Z") for b in ("I", "X", "Y", "Z") if a + b != "II"
)


class NoiseConfigError(ValueError):
    """Raised for invalid profile or assignment parameters."""


@dataclass(frozen=True)
class SineComponent:
    """One sinusoidal drift term: ``amplitude * sin(omega * n + phase)``."""

    amplitude: float
    omega: float
    phase: float = 0.0

    @property
    def period(self) -> float:
        """Period in cycles (inf for a zero-frequency component)."""
        return np.inf if self.omega == 0.0 else TWO_PI / self.omega


@dataclass(frozen=True)
class DriftProfile:
    """Base rate plus sinusoidal drift components for one fault location.

    Parameters
    ----------
    g0 : float
        Static (DC) error rate, must be >= 0.
    components : tuple of SineComponent
        Sinusoidal terms added to ``g0``.
    dt : float
        Cycle period; fixed to 1 internally, kept as a field so exported
        configs are explicit about the unit.
    """

    g0: float
    components: tuple[SineComponent, ...] = ()
    dt: float = 1.0

    def __post_init__(self) -> None:
        if self.g0 < 0.0:
            raise NoiseConfigError(f"g0 must be >= 0, got {self.g0}")
        for comp in self.components:
            if comp.amplitude < 0.0:
                raise NoiseConfigError(
                    f"component amplitude must be >= 0, got {comp.amplitude}"
                )
        peak = self.g0 + sum(c.amplitude for c in self.components)
        if peak > 0.75:
            raise NoiseConfigError(
                f"g0 + sum of amplitudes = {peak:.4g} exceeds 0.75; rates this "
                "large are outside the validity of the correlator inversion"
            )
        if peak > 0.5:
            warnings.warn(
                f"g0 + sum of amplitudes = {peak:.4g} exceeds 0.5; the "
                "correlator equations assume rates below 1/2",
                stacklevel=2,
            )

    @property
    def peak(self) -> float:
        return self.g0 + sum(c.amplitude for c in self.components)


def static_profile(g0: float) -> DriftProfile:
    """Profile with no drift components."""
    return DriftProfile(g0=g0)


def sine_profile(g0: float, amplitudes: Iterable[float], periods: Iterable[float],
                 phases: Iterable[float] | None = None) -> DriftProfile:
    """Build a profile from (amplitude, period-in-cycles) pairs.

    Frequencies are specified as periods, converted to ``omega = 2*pi/period``.
    """
    amplitudes = list(amplitudes)
    periods = list(periods)
    if phases is None:
        phases = [0.0] * len(amplitudes)
    else:
        phases = list(phases)
    if not (len(amplitudes) == len(periods) == len(phases)):
        raise NoiseConfigError("amplitudes, periods and phases must have equal length")
    comps = tuple(
        SineComponent(amplitude=a, omega=TWO_PI / p, phase=ph)
        for a, p, ph in zip(amplitudes, periods, phases)
    )
    return DriftProfile(g0=g0, components=comps)


def shift_profile(profile: DriftProfile, cycles: float) -> DriftProfile:
    """Profile whose rate at n equals the original rate at ``n + cycles``.

    Used to re-anchor an experiment so its cycle 0 corresponds to a later
    absolute time of a longer reference run.
    """
    comps = tuple(
        SineComponent(c.amplitude, c.omega, c.phase + c.omega * cycles)
        for c in profile.components
    )
    return DriftProfile(g0=profile.g0, components=comps, dt=profile.dt)


def sample_rate(profile: DriftProfile, n) -> np.ndarray | float:
    """Evaluate g(n), clamped to [0, 1].

    ``n`` may be a scalar cycle index or an integer array; the return type
    matches. Use :func:`count_clamps` to check whether clamping occurred.
    """
    n_arr = np.asarray(n, dtype=np.float64)
    g = np.full(n_arr.shape, profile.g0, dtype=np.float64)
    for comp in profile.components:
        g += comp.amplitude * np.sin(comp.omega * n_arr * profile.dt + comp.phase)
    g = np.clip(g, 0.0, 1.0)
    if np.isscalar(n) or n_arr.ndim == 0:
        return float(g)
    return g


def count_clamps(profile: DriftProfile, n) -> int:
    """Number of cycle indices in ``n`` where g(n) falls outside [0, 1]."""
    n_arr = np.asarray(n, dtype=np.float64)
    g = np.full(n_arr.shape, profile.g0, dtype=np.float64)
    for comp in profile.components:
        g += comp.amplitude * np.sin(comp.omega * n_arr * profile.dt + comp.phase)
    return int(np.count_nonzero((g < 0.0) | (g > 1.0)))


def depolarize_probabilities(g: float, arity: int) -> list[tuple[str, float]]:
    """Pauli terms of a uniform depolarizing channel of total weight ``g``.

    arity 1 gives X, Y, Z at g/3 each; arity 2 gives the 15 non-identity
    two-qubit Paulis at g/15 each. ``g = 0`` returns an empty list.
    """
    if not 0.0 <= g <= 1.0:
        raise NoiseConfigError(f"g must be in [0, 1], got {g}")
    if g == 0.0:
        return []
    if arity == 1:
        return [(p, g / 3.0) for p in _PAULIS_1Q]
    if arity == 2:
        return [(p, g / 15.0) for p in _PAULIS_2Q]
    raise NoiseConfigError(f"arity must be 1 or 2, got {arity}")


def _anticommutes(pauli: str, basis: str) -> bool:
    return pauli != "I" and pauli != basis


def flip_groups(arity: int, basis: str) -> dict[tuple[bool, ...], float]:
    """Group the depolarizing Pauli terms by which qubits they flip.

    A single-qubit Pauli "flips" a qubit when it anticommutes with the
    observation basis (``Z`` for Z-type stabilizers/readout, ``X`` for
    X-type). Returns the fraction of the channel weight per non-trivial
    flip pattern; for arity 2 the pattern is (data flip, ancilla flip).
    """
    groups: dict[tuple[bool, ...], float] = {}
    for label, p in depolarize_probabilities(1.0, arity):
        pattern = tuple(_anticommutes(ch, basis) for ch in label)
        if not any(pattern):
            continue
        groups[pattern] = groups.get(pattern, 0.0) + p
    return groups


@dataclass(frozen=True)
class LocationChannel:
    """Channel kind plus drift profile assigned to one fault location."""

    kind: str
    profile: DriftProfile

    def __post_init__(self) -> None:
        if self.kind not in CHANNEL_KINDS:
            raise NoiseConfigError(f"unknown channel kind {self.kind!r}")


@dataclass(frozen=True)
class NoiseAssignment:
    """Map from fault location id to its noise channel.

    The location ids must cover every fault location implied by the target
    circuit and error model; coverage is validated by the consumers
    (simulator and edge-class derivation) which know the circuit.
    """

    entries: Mapping[str, LocationChannel] = field(default_factory=dict)

    def channel(self, location: str) -> LocationChannel:
        try:
            return self.entries[location]
        except KeyError:
            raise NoiseConfigError(f"no noise entry for fault location {location!r}") from None

    def locations(self) -> tuple[str, ...]:
        return tuple(self.entries)

    def shifted(self, cycles: float) -> "NoiseAssignment":
        """Assignment with every profile advanced by ``cycles`` (see shift_profile)."""
        return NoiseAssignment(
            {
                loc: LocationChannel(ch.kind, shift_profile(ch.profile, cycles))
                for loc, ch in self.entries.items()
            }
        )


def uniform_assignment(locations: Iterable[tuple[str, str]], profile: DriftProfile) -> NoiseAssignment:
    """Assign the same profile to every (location, kind) pair."""
    return NoiseAssignment(
        {loc: LocationChannel(kind, profile) for loc, kind in locations}
    )


# --- config file schema -------------------------------------------------

def assignment_to_config(assignment: NoiseAssignment) -> dict:
    """Serializable config: per-location {location, kind, g0, components}."""
    out = []
    for loc, ch in assignment.entries.items():
        out.append(
            {
                "location": loc,
                "kind": ch.kind,
                "g0": ch.profile.g0,
                "components": [
                    {
                        "amplitude": c.amplitude,
                        "period_cycles": (None if c.omega == 0.0 else TWO_PI / c.omega),
                        "phase": c.phase,
                    }
                    for c in ch.profile.components
                ],
            }
        )
    return {"locations": out}


def assignment_from_config(config: dict) -> NoiseAssignment:
    entries: dict[str, LocationChannel] = {}
    try:
        locs = config["locations"]
    except KeyError:
        raise NoiseConfigError("config missing 'locations' list") from None
    for item in locs:
        try:
            loc = item["location"]
            kind = item["kind"]
            g0 = float(item["g0"])
        except KeyError as exc:
            raise NoiseConfigError(f"location entry missing field {exc}") from None
        comps = []
        for c in item.get("components", ()):
            period = c["period_cycles"]
            omega = 0.0 if period in (None, 0) else TWO_PI / float(period)
            comps.append(
                SineComponent(
                    amplitude=float(c["amplitude"]),
                    omega=omega,
                    phase=float(c.get("phase", 0.0)),
                )
            )
        if loc in entries:
            raise NoiseConfigError(f"duplicate entry for location {loc!r}")
        entries[loc] = LocationChannel(kind, DriftProfile(g0=g0, components=tuple(comps)))
    return NoiseAssignment(entries)


def save_assignment(assignment: NoiseAssignment, path) -> None:
    with open(path, "w") as fh:
        json.dump(assignment_to_config(assignment), fh, indent=1)


def load_assignment(path) -> NoiseAssignment:
    with open(path) as fh:
        return assignment_from_config(json.load(fh))
