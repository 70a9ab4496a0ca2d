"""Experiment protocols: configs, estimation trials, and blocked paired decoding.

A recipe is a JSON document with the experiment pieces (code, error model,
noise, run lengths) plus optional estimation and decode sections; one file
per reproduced scenario lives in recipes/. The decode protocol simulates
independent short blocks that tile a span of the (long) estimation run:
block b starts at absolute cycle offset + b * block_cycles, realized by
phase-shifting every drift profile so the block's cycle 0 aligns with that
absolute time. All candidate DEMs decode the same detection events, paired
against the ground truth of each block.

Whole-run failure probabilities saturate at 1/2 once eps_per_cycle *
cycles is large (the observable decorrelates from the syndrome), so the
block length is part of the protocol: it keeps every block's failure
probability resolvable while the total decoded volume matches the target.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .code_models import (
    CIRCUIT_LEVEL,
    PHENOMENOLOGICAL,
    CodeLayout,
    build_repetition,
    build_rotated_surface_x,
    derive_edge_classes,
)
from .decoder import DecodeReport, logical_error_rate, per_cycle_rate, relative_delta
from .dem import DemGrid, TimeVaryingDem, ground_truth_dem, slice_dem
from .estimator import EstimatedSeries, dem_from_estimates, sliding_series
from .iterative import WindowSchedule, decompose, model_to_dem
from .noise import NoiseAssignment, NoiseConfigError, assignment_from_config, sine_profile, uniform_assignment
from .relative import relative_estimate
from .sim import DetectionData, run_memory

RECIPE_DIR = Path(__file__).resolve().parents[2] / "recipes"


def build_layout(config: Mapping) -> CodeLayout:
    code = config["code"]
    kind = code["kind"]
    if kind == "repetition":
        return build_repetition(int(code["d"]))
    if kind == "surface_x":
        return build_rotated_surface_x(int(code["d"]))
    raise NoiseConfigError(f"unknown code kind {kind!r}")


def expand_noise(noise_cfg: Mapping, layout: CodeLayout, model: str) -> NoiseAssignment:
    """Noise config to assignment; {"uniform": profile} covers all locations."""
    if "uniform" in noise_cfg:
        prof_cfg = noise_cfg["uniform"]
        profile = sine_profile(
            float(prof_cfg["g0"]),
            [float(c["amplitude"]) for c in prof_cfg.get("components", ())],
            [float(c["period_cycles"]) for c in prof_cfg.get("components", ())],
            [float(c.get("phase", 0.0)) for c in prof_cfg.get("components", ())],
        )
        return uniform_assignment(layout.fault_locations(model), profile)
    return assignment_from_config(noise_cfg)


def load_recipe(path) -> dict:
    with open(path) as fh:
        config = json.load(fh)
    for key in ("code", "model", "noise"):
        if key not in config:
            raise NoiseConfigError(f"recipe missing required field {key!r}")
    if config["model"] not in (PHENOMENOLOGICAL, CIRCUIT_LEVEL):
        raise NoiseConfigError(f"unknown error model {config['model']!r}")
    return config


def recipe_pieces(config: Mapping):
    layout = build_layout(config)
    assignment = expand_noise(config["noise"], layout, config["model"])
    covered = set(assignment.locations())
    missing = [loc for loc, _ in layout.fault_locations(config["model"]) if loc not in covered]
    if missing:
        raise NoiseConfigError(f"noise config misses fault locations: {missing}")
    classes = derive_edge_classes(layout, assignment, config["model"])
    return layout, assignment, classes


# --- estimation protocols -------------------------------------------------


def average_series(runs: Sequence[Mapping[str, EstimatedSeries]]) -> dict[str, EstimatedSeries]:
    """Pointwise mean of per-trial estimates (the multi-trial convention)."""
    out: dict[str, EstimatedSeries] = {}
    for cid in runs[0]:
        stack = np.stack([r[cid].values for r in runs])
        with np.errstate(invalid="ignore"):
            mean = np.nanmean(stack, axis=0)
        sig = np.stack([r[cid].sigma for r in runs])
        flags = runs[0][cid].flags.copy()
        for r in runs[1:]:
            flags |= r[cid].flags
        first = runs[0][cid]
        out[cid] = EstimatedSeries(
            cid=cid, t=first.t.copy(), values=mean,
            sigma=np.sqrt(np.nanmean(sig**2, axis=0) / len(runs)),
            W=first.W, M=first.M * len(runs), flags=flags,
        )
    return out


def estimate_dem_trials(config: Mapping, layout, assignment, classes,
                        threads: int = 1) -> tuple[TimeVaryingDem, list[dict[str, EstimatedSeries]]]:
    """Run the recipe's estimation section over its trials; average the series."""
    est_cfg = config["estimation"]
    mode = est_cfg["mode"]
    trials = int(est_cfg.get("trials", 1))
    cycles = int(config["cycles"])
    shots = int(config["shots"])
    seed = int(config.get("seed", 0))
    order = list(layout.ancillas)

    per_trial = []
    for trial in range(trials):
        data = run_memory(layout, assignment, config["model"], cycles, shots,
                          seed + trial, threads=threads)
        if mode == "sliding":
            est = sliding_series(data, classes, int(est_cfg["window"]), ancilla_order=order)
        elif mode == "relative":
            est = relative_estimate(
                data, classes, int(est_cfg["window"]),
                sg_window=int(est_cfg.get("sg_window", 301)),
                order=int(est_cfg.get("sg_order", 3)), ancilla_order=order)
        elif mode == "iterative":
            sched = WindowSchedule.descending(
                int(est_cfg["w0"]), int(est_cfg["w_last"]), int(est_cfg["step"]),
                mu=float(est_cfg.get("mu", 0.22)),
                w_min=int(est_cfg.get("w_min", min(1000, int(est_cfg["w_last"])))))
            model = decompose(data, classes, sched, ancilla_order=order)
            grid = DemGrid(start=0, stride=1, count=cycles)
            dem = model_to_dem(model, classes, grid, layout_hash=layout.hash_bytes())
            per_trial.append({c.cid: EstimatedSeries(
                cid=c.cid, t=grid.times(), values=dem.series[c.cid],
                sigma=np.zeros(cycles), W=sched.windows[-1],
                M=np.ones(cycles, dtype=np.int64), flags=np.zeros(cycles, np.uint8))
                for c in classes})
            continue
        else:
            raise NoiseConfigError(f"unknown estimation mode {mode!r}")
        per_trial.append(est)

    averaged = average_series(per_trial)
    provenance = {"sliding": "sliding", "relative": "relative", "iterative": "iterative"}[mode]
    dem = dem_from_estimates(classes, averaged, provenance, layout_hash=layout.hash_bytes())
    return dem, per_trial


# --- blocked paired decoding ------------------------------------------------


@dataclass
class AggregateReport:
    """Failure statistics pooled over the decode blocks of one DEM."""

    name: str
    shots: int = 0
    failures: int = 0
    block_cycles: int = 0
    paired_diff_sum: float = 0.0  # sum of (fail - fail_ref) over shots
    paired_diff_sq: float = 0.0

    @property
    def p_fail(self) -> float:
        return self.failures / self.shots if self.shots else 0.0

    @property
    def eps_per_cycle(self) -> float:
        return per_cycle_rate(self.p_fail, self.block_cycles)[0]

    @property
    def saturated(self) -> bool:
        return per_cycle_rate(self.p_fail, self.block_cycles)[1]

    def paired_stats(self) -> tuple[float, float]:
        """Mean and standard error of the per-shot failure difference vs the reference."""
        n = self.shots
        mean = self.paired_diff_sum / n
        var = self.paired_diff_sq / n - mean**2
        return mean, float(np.sqrt(max(var, 0.0) / n))

    def to_dict(self) -> dict:
        mean, sig = self.paired_stats() if self.shots else (0.0, 0.0)
        return {
            "name": self.name, "shots": self.shots, "failures": self.failures,
            "block_cycles": self.block_cycles, "p_fail": self.p_fail,
            "eps_per_cycle": self.eps_per_cycle, "saturated": self.saturated,
            "paired_fail_diff": mean, "paired_fail_sigma": sig,
        }


def blocked_paired_decode(layout, assignment: NoiseAssignment, model: str,
                          candidate_dems: Mapping[str, TimeVaryingDem],
                          offset: int, block_cycles: int, blocks: int,
                          shots: int, seed: int, threads: int = 1,
                          ) -> dict[str, AggregateReport]:
    """Decode every candidate DEM against freshly simulated decode blocks.

    Candidate DEMs live on the absolute cycle grid of the estimation run
    and are sliced per block; the ground truth ('ground-truth' key of the
    result) is built per block from the shifted assignment and is the
    reference for the paired statistics.
    """
    results: dict[str, AggregateReport] = {
        "ground-truth": AggregateReport("ground-truth", block_cycles=block_cycles)}
    for name in candidate_dems:
        results[name] = AggregateReport(name, block_cycles=block_cycles)

    classes = derive_edge_classes(layout, assignment, model)
    for b in range(blocks):
        abs0 = offset + b * block_cycles
        shifted = assignment.shifted(abs0)
        data = run_memory(layout, shifted, model, block_cycles, shots,
                          seed + 7919 * (b + 1), threads=threads)
        actual = data.observables.astype(bool)
        gt = ground_truth_dem(classes, shifted, DemGrid(0, 1, block_cycles),
                              layout_hash=layout.hash_bytes())
        ref_report = logical_error_rate(data, gt)
        ref_fail = (ref_report.predicted != actual).astype(np.float64)
        agg = results["ground-truth"]
        agg.shots += data.shots
        agg.failures += ref_report.failures
        for name, dem in candidate_dems.items():
            block_dem = slice_dem(dem, abs0, abs0 + block_cycles, new_start=0)
            report = logical_error_rate(data, block_dem)
            fail = (report.predicted != actual).astype(np.float64)
            agg = results[name]
            agg.shots += data.shots
            agg.failures += report.failures
            d = fail - ref_fail
            agg.paired_diff_sum += float(d.sum())
            agg.paired_diff_sq += float((d * d).sum())
    return results


def delta_vs_ground_truth(results: Mapping[str, AggregateReport], name: str) -> float:
    return relative_delta(results[name].eps_per_cycle, results["ground-truth"].eps_per_cycle)


# --- named noise tables -------------------------------------------------


def table_one_noise() -> dict:
    """Inhomogeneous circuit-level parameters for the d=3 repetition code."""
    rows = {
        "d1": (0.07, 0.035, 1e4),
        "d2": (0.07, 0.035, 8e3),
        "d3": (0.06, 0.03, 9e3),
        "a1": (0.04, 0.025, 9e3),
        "a2": (0.04, 0.03, 6e3),
        "g1": (0.045, 0.03, 9e3),
        "g2": (0.045, 0.03, 9e3),
        "g3": (0.045, 0.03, 1e4),
        "g4": (0.045, 0.03, 1e4),
    }
    return {
        "locations": [
            {
                "location": loc,
                "kind": "depolarize2" if loc.startswith("g") else "depolarize1",
                "g0": g0,
                "components": [{"amplitude": g1, "period_cycles": period, "phase": 0.0}],
            }
            for loc, (g0, g1, period) in rows.items()
        ]
    }


#: Per-qubit drift periods of the d=3 X-memory surface-code experiment.
TABLE_TWO_PERIODS = {
    "d1": 5800, "d2": 9800, "d3": 4800, "d4": 8800, "d5": 12800,
    "d6": 7800, "d7": 11800, "d8": 6800, "d9": 10800,
    "a1": 5800, "a2": 9800, "a3": 4800, "a4": 8800,
}


def surface_sweep_noise(g_star: float, g1_scale: float = 1.0) -> dict:
    """Table-II frequencies with g0 = g*, g1 = g1_scale * g*."""
    return {
        "locations": [
            {
                "location": loc,
                "kind": "depolarize1",
                "g0": g_star,
                "components": [
                    {"amplitude": g1_scale * g_star, "period_cycles": period, "phase": 0.0}
                ],
            }
            for loc, period in TABLE_TWO_PERIODS.items()
        ]
    }


def repetition_sweep_noise(g_star: float, period: float = 1e4, g1_scale: float = 0.5) -> dict:
    return {
        "uniform": {
            "g0": g_star,
            "components": [{"amplitude": g1_scale * g_star, "period_cycles": period}],
        }
    }
