"""Command-line orchestration: simulate, estimate, decode, sweep, verify.

Experiment configs are declarative JSON files (see recipes/); every
command is deterministic given its inputs and seed. Exit codes: 0 success,
2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .code_models import HypergraphError, LayoutError
from .decoder import DecodingError, logical_error_rate, paired_failure_stats, relative_delta
from .dem import DemError, DemGrid, ground_truth_dem, load_dem, save_dem, slice_dem, static_collapse
from .estimator import EstimationError, dem_from_estimates, series_to_csv, sliding_series
from .iterative import IterativeError, WindowSchedule, decompose, model_to_dem
from .noise import NoiseConfigError
from .relative import relative_estimate
from .sim import DataFormatError, MemoryBudgetError, read_detections, run_memory, write_detections

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

_CONFIG_ERRORS = (NoiseConfigError, LayoutError, IterativeError, KeyError, ValueError)
_DATA_ERRORS = (DataFormatError, MemoryBudgetError, DemError, FileNotFoundError)
_NUMERICAL_ERRORS = (EstimationError, DecodingError, HypergraphError)


def _fail(code: int, exc: BaseException) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


from .recipes import load_recipe as load_experiment, recipe_pieces as experiment_pieces


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Drift-aware detector-error-model estimation toolkit."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--threads", type=int, default=1)
def simulate(config_path, out_path, seed, threads) -> None:
    """Run a memory experiment and write a binary detection-event file."""
    try:
        config = load_experiment(config_path)
        layout, assignment, classes = experiment_pieces(config)
        cycles = int(config["cycles"])
        shots = int(config["shots"])
        use_seed = int(config.get("seed", 0)) if seed is None else seed
        if shots < 1:
            raise NoiseConfigError(f"shots must be >= 1, got {shots}")
    except _CONFIG_ERRORS as exc:
        _fail(EXIT_CONFIG, exc)
    try:
        data = run_memory(layout, assignment, config["model"], cycles, shots, use_seed,
                          threads=threads)
        write_detections(data, out_path)
        sidecar = {
            "config": config,
            "seed": use_seed,
            "layout": layout.canonical_dict(),
            "classes": [c.cid for c in classes],
            "clamped_rates": data.clamped_rates,
        }
        Path(str(out_path) + ".json").write_text(json.dumps(sidecar, indent=1))
    except _DATA_ERRORS as exc:
        _fail(EXIT_DATA, exc)
    click.echo(f"wrote {shots} shots x {cycles} cycles to {out_path}")


@main.command()
@click.option("--mode", type=click.Choice(["sliding", "iterative", "relative"]), required=True)
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="Experiment config describing code/model/noise (for the DEM structure).")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--window", type=int, default=None)
@click.option("--schedule", type=str, default=None,
              help="Iterative windows as start:stop:step, e.g. 10000:1000:1000.")
@click.option("--mu", type=float, default=0.22)
@click.option("--sg-window", type=int, default=301)
@click.option("--sg-order", type=int, default=3)
@click.option("--stride", type=int, default=1)
def estimate(mode, data_path, config_path, out_path, window, schedule, mu,
             sg_window, sg_order, stride) -> None:
    """Estimate per-class probability series from a detection file.

    Writes a CSV series; iterative mode also writes <out>.fourier.json and
    sliding/relative write <out>.dem.json with the assembled DEM.
    """
    try:
        config = load_experiment(config_path)
        layout, assignment, classes = experiment_pieces(config)
    except _CONFIG_ERRORS as exc:
        _fail(EXIT_CONFIG, exc)
    try:
        data = read_detections(data_path)
        if data.layout_hash != layout.hash_bytes():
            raise DataFormatError("detection file does not match the config's layout")
    except _DATA_ERRORS as exc:
        _fail(EXIT_DATA, exc)
    try:
        order = list(layout.ancillas)
        if mode == "sliding":
            if window is None:
                raise EstimationError("sliding mode needs --window")
            est = sliding_series(data, classes, window, stride=stride, ancilla_order=order)
            dem = dem_from_estimates(classes, est, "sliding", layout_hash=layout.hash_bytes())
            save_dem(dem, str(out_path) + ".dem.json")
        elif mode == "relative":
            if window is None:
                raise EstimationError("relative mode needs --window")
            est = relative_estimate(data, classes, window, sg_window=sg_window,
                                    order=sg_order, ancilla_order=order)
            dem = dem_from_estimates(classes, est, "relative", layout_hash=layout.hash_bytes())
            save_dem(dem, str(out_path) + ".dem.json")
        else:
            if schedule is None:
                raise EstimationError("iterative mode needs --schedule start:stop:step")
            w0, w_last, step = (int(x) for x in schedule.split(":"))
            sched = WindowSchedule.descending(w0, w_last, step, mu=mu, w_min=min(w_last, 1000))
            model = decompose(data, classes, sched, ancilla_order=order)
            Path(str(out_path) + ".fourier.json").write_text(json.dumps(model.to_dict(), indent=1))
            grid = DemGrid(start=0, stride=1, count=data.cycles)
            dem = model_to_dem(model, classes, grid, layout_hash=layout.hash_bytes())
            save_dem(dem, str(out_path) + ".dem.json")
            est = sliding_series(data, classes, sched.windows[-1], stride=stride,
                                 ancilla_order=order)
        series_to_csv(est, out_path)
    except _NUMERICAL_ERRORS as exc:
        _fail(EXIT_NUMERICAL, exc)
    except _CONFIG_ERRORS as exc:
        _fail(EXIT_CONFIG, exc)
    click.echo(f"wrote series to {out_path}")


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--dem", "dem_paths", multiple=True, required=True, type=click.Path(exists=True),
              help="One or more DEM files; the first is the reference for delta.")
@click.option("--range", "cycle_range", type=str, default=None, help="n0:n1 (defaults to full run)")
@click.option("--out", "out_path", required=True, type=click.Path())
def decode(data_path, dem_paths, cycle_range, out_path) -> None:
    """Decode detection events against one or more DEMs (paired)."""
    try:
        data = read_detections(data_path)
        dems = [load_dem(p) for p in dem_paths]
        for p, dem in zip(dem_paths, dems):
            if dem.layout_hash and dem.layout_hash != data.layout_hash:
                raise DataFormatError(f"DEM {p} was built for a different layout than the data")
    except _DATA_ERRORS as exc:
        _fail(EXIT_DATA, exc)
    try:
        rng = (0, data.cycles) if cycle_range is None else tuple(int(x) for x in cycle_range.split(":"))
        reports = [logical_error_rate(data, dem, rng) for dem in dems]
        doc = {"reports": [r.to_dict() for r in reports], "deltas": []}
        for r in reports[1:]:
            delta = relative_delta(r.eps_per_cycle, reports[0].eps_per_cycle)
            d_fail, sigma_d = paired_failure_stats(r, reports[0], data.observables)
            doc["deltas"].append({
                "provenance": r.provenance, "delta": delta,
                "paired_fail_diff": d_fail, "paired_fail_sigma": sigma_d,
            })
        Path(out_path).write_text(json.dumps(doc, indent=1))
    except _NUMERICAL_ERRORS as exc:
        _fail(EXIT_NUMERICAL, exc)
    click.echo(f"wrote decode report to {out_path}")


@main.command("sweep-window")
@click.option("--est-data", "est_path", required=True, type=click.Path(exists=True),
              help="Long low-shot run used for the sliding estimates.")
@click.option("--decode-data", "dec_path", required=True, type=click.Path(exists=True),
              help="Many-shot run whose cycles continue the estimation run at --offset.")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--windows", required=True, type=str, help="Comma-separated window sizes.")
@click.option("--offset", type=int, required=True,
              help="Absolute estimation-run cycle at which the decode run starts.")
@click.option("--out", "out_path", required=True, type=click.Path())
def sweep_window(est_path, dec_path, config_path, windows, offset, out_path) -> None:
    """|delta| versus sliding-window size, decoded against the ground truth."""
    try:
        config = load_experiment(config_path)
        layout, assignment, classes = experiment_pieces(config)
        w_list = [int(w) for w in windows.split(",")]
    except _CONFIG_ERRORS as exc:
        _fail(EXIT_CONFIG, exc)
    try:
        est_data = read_detections(est_path)
        dec_data = read_detections(dec_path)
        for d in (est_data, dec_data):
            if d.layout_hash != layout.hash_bytes():
                raise DataFormatError("detection file does not match the config's layout")
        for w in w_list:
            if w > est_data.cycles:
                raise DataFormatError(f"window {w} exceeds the {est_data.cycles}-cycle estimation run")
            if offset < w:
                raise DataFormatError(f"offset {offset} lies before the first estimate of window {w}")
    except _DATA_ERRORS as exc:
        _fail(EXIT_DATA, exc)
    try:
        n_dec = dec_data.cycles
        gt = ground_truth_dem(classes, assignment.shifted(offset),
                              DemGrid(0, 1, n_dec), layout_hash=layout.hash_bytes())
        gt_report = logical_error_rate(dec_data, gt)
        rows = []
        for w in w_list:
            est = sliding_series(est_data, classes, w, ancilla_order=list(layout.ancillas))
            dem = dem_from_estimates(classes, est, "sliding", layout_hash=layout.hash_bytes())
            dem = slice_dem(dem, offset, offset + n_dec, new_start=0)
            report = logical_error_rate(dec_data, dem)
            delta = relative_delta(report.eps_per_cycle, gt_report.eps_per_cycle)
            rows.append((w, abs(delta), report.eps_per_cycle, gt_report.eps_per_cycle))
        with open(out_path, "w") as fh:
            fh.write("W,abs_delta,eps_est,eps_gt\n")
            for w, ad, ee, eg in rows:
                fh.write(f"{w},{ad!r},{ee!r},{eg!r}\n")
    except _NUMERICAL_ERRORS as exc:
        _fail(EXIT_NUMERICAL, exc)
    click.echo(f"wrote sweep table to {out_path}")


@main.command()
def verify() -> None:
    """Run the brute-force oracle self-checks (fast subset)."""
    from .oracles import brute_matching, dft_direct, enumerate_window

    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    for _ in range(20):
        w = int(rng.integers(1, 9))
        ps = rng.random(w)
        mean, var = enumerate_window(ps)
        assert abs(mean - ps.mean()) < 1e-12
        assert abs(var - np.sum(ps * (1 - ps)) / w**2) < 1e-12
    x = rng.random(16)
    assert np.allclose(dft_direct(x), np.fft.fft(x), atol=1e-10)
    d = rng.random((4, 4))
    d = d + d.T
    w, pairs = brute_matching(d, boundary=rng.random(4) * 3)
    assert len(pairs) >= 2
    click.echo(f"oracle self-checks passed in {time.perf_counter() - t0:.2f}s")


if __name__ == "__main__":
    main()
