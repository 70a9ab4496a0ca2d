import numpy as np
import pytest

from driftdem.code_models import PHENOMENOLOGICAL, build_repetition, derive_edge_classes, ground_truth_edge_series
from driftdem.estimator import EstimatedSeries, boxcar_filter, dirichlet_gain
from driftdem.iterative import (
    ClassFourier,
    FourierModel,
    IterativeError,
    WindowSchedule,
    cutoff_index,
    decompose,
    decompose_series,
    fit_window,
    reconstruct,
)
from driftdem.noise import sine_profile, static_profile, uniform_assignment
from driftdem.sim import run_memory


def exact_series(truth: np.ndarray, W: int) -> EstimatedSeries:
    """Noiseless sliding-window series of a known per-cycle truth."""
    N = truth.size
    csum = np.concatenate(([0.0], np.cumsum(truth)))
    t = np.arange(W, N + 1)
    vals = (csum[t] - csum[t - W]) / W
    return EstimatedSeries("x", t, vals, np.full(t.size, 1e-9), W,
                           np.full(t.size, 1), np.zeros(t.size, np.uint8))


def synth(N, dc, terms):
    t = np.arange(N, dtype=float)
    x = np.full(N, dc)
    for m, a, b in terms:
        w = 2 * np.pi * m / N
        x += a * np.sin(w * t) + b * np.cos(w * t)
    return x


# --- schedule / cutoff -------------------------------------------------------

def test_schedule_validation():
    with pytest.raises(IterativeError):
        WindowSchedule((1000, 2000), mu=0.2)
    with pytest.raises(IterativeError):
        WindowSchedule((2000, 1000), mu=1.5)
    with pytest.raises(IterativeError):
        WindowSchedule((2000, 500), mu=0.2, w_min=1000)
    sched = WindowSchedule.descending(10000, 1000, 1000, mu=0.22)
    assert sched.windows == tuple(range(10000, 999, -1000))


def test_cutoff_unit_window_passes_everything():
    assert cutoff_index(1, 0.22, 1000) == 499


def test_cutoff_full_window_kills_all_ac():
    assert cutoff_index(10000, 0.22, 10000) == 0


def test_cutoff_respects_gain_threshold():
    # W = 5000, N = 5e4: gain at m=5 is 0.636 >= 0.22, so m_c >= 5
    assert cutoff_index(5000, 0.22, 50000) >= 5
    m_c = cutoff_index(5000, 0.22, 50000)
    assert dirichlet_gain(5000, m_c, 50000) >= 0.22
    assert dirichlet_gain(5000, m_c + 1, 50000) < 0.22


def test_cutoff_monotone_in_window():
    N = 10000
    cuts = [cutoff_index(W, 0.22, N) for W in range(N, 999, -1000)]
    assert all(c2 >= c1 for c1, c2 in zip(cuts, cuts[1:]))


# --- fit_window ---------------------------------------------------------------

def test_fit_recovers_single_frequency_exactly():
    N, W = 8000, 2500
    truth = synth(N, 0.08, [(3, 0.02, -0.01)])
    series = exact_series(truth, W)
    inc, cond = fit_window(series, W, m_c=3, known=None, N=N)
    assert inc.dc == pytest.approx(0.08, rel=1e-6)
    a, b = inc.coeffs[3]
    assert a == pytest.approx(0.02, rel=1e-6)
    assert b == pytest.approx(-0.01, rel=1e-6)
    assert cond < 1e6


def test_fit_constant_series_dc_only():
    series = exact_series(np.full(3000, 0.123), 800)
    inc, _ = fit_window(series, 800, m_c=0, known=None, N=3000)
    assert inc.dc == pytest.approx(0.123, abs=1e-12)
    assert inc.coeffs == {}


def test_fit_with_fixed_dc_prior_returns_ac_only():
    N, W = 6000, 1500
    truth = synth(N, 0.07, [(2, 0.015, 0.0)])
    series = exact_series(truth, W)
    known = ClassFourier(dc=0.07)
    inc, _ = fit_window(series, W, m_c=2, known=known, N=N)
    assert np.isnan(inc.dc)
    assert inc.coeffs[2][0] == pytest.approx(0.015, rel=1e-6)
    assert 1 in inc.coeffs  # bin 1 solved too, near zero
    assert abs(inc.coeffs[1][0]) < 1e-9


def test_fit_rank_deficiency_names_bin():
    # W = N/m zeroes the Dirichlet ratio at bin m: that column vanishes
    N, W, m = 6000, 3000, 2
    truth = synth(N, 0.05, [(2, 0.01, 0.0)])
    series = exact_series(truth, W)
    with pytest.raises(IterativeError, match="m=2"):
        fit_window(series, W, m_c=m, known=None, N=N)


def test_prior_freezing_consistency():
    # seeding the true coefficients leaves only ~zero residual unknowns
    N, W = 8000, 2000
    truth = synth(N, 0.06, [(1, 0.012, 0.004), (2, 0.008, -0.006)])
    series = exact_series(truth, W)
    known = ClassFourier(dc=0.06, coeffs={1: (0.012, 0.004), 2: (0.008, -0.006)})
    inc, _ = fit_window(series, W, m_c=3, known=known, N=N)
    a, b = inc.coeffs[3]
    assert abs(a) < 1e-6 and abs(b) < 1e-6


# --- decompose ----------------------------------------------------------------

def test_decompose_static_data_is_dc_only():
    # any recovered AC amplitude must be explainable by sampling noise
    lay = build_repetition(3)
    assign = uniform_assignment(lay.fault_locations(PHENOMENOLOGICAL), static_profile(0.09))
    classes = derive_edge_classes(lay, assign, PHENOMENOLOGICAL)
    data = run_memory(lay, assign, PHENOMENOLOGICAL, cycles=4000, shots=64, seed=61)
    sched = WindowSchedule.descending(4000, 1000, 1000, mu=0.22)
    model = decompose(data, classes, sched)
    gt = ground_truth_edge_series(classes, assign, 0)
    for cid, cf in model.per_class.items():
        assert cf.dc == pytest.approx(gt[cid], abs=2e-3)
        for a, b in cf.coeffs.values():
            assert np.hypot(a, b) < 6e-3


def test_decompose_series_round_trip_noiseless():
    # forward synthesis -> exact window series -> decompose -> reconstruct
    N = 10000
    truth = synth(N, 0.04, [(1, 0.0133, 0.0), (2, 0.0167, 0.0)])
    sched = WindowSchedule.descending(10000, 1000, 1000, mu=0.22)

    def provider(W):
        return {"x": exact_series(truth, W)}

    model = decompose_series(provider, ["x"], sched, N)
    recon = reconstruct(model, "x", np.arange(N))
    assert np.max(np.abs(recon - truth)) <= 1e-4
    assert 1 in model.per_class["x"].coeffs
    assert 2 in model.per_class["x"].coeffs


def test_decompose_averaging_is_mean_of_shared_cutoff_fits():
    # two windows sharing a cutoff: final coefficient equals the mean of
    # their individual fits
    N = 6000
    truth = synth(N, 0.05, [(1, 0.01, 0.002)])
    w1, w2 = 5900, 5800
    sched = WindowSchedule((w1, w2), mu=0.5, w_min=1000)
    assert cutoff_index(w1, 0.5, N) == cutoff_index(w2, 0.5, N) == 0

    def provider(W):
        return {"x": exact_series(truth, W)}

    model = decompose_series(provider, ["x"], sched, N)
    f1, _ = fit_window(exact_series(truth, w1), w1, 0, None, N)
    f2, _ = fit_window(exact_series(truth, w2), w2, 0, None, N)
    assert model.per_class["x"].dc == pytest.approx((f1.dc + f2.dc) / 2, rel=1e-12)


def test_reconstruct_examples():
    model = FourierModel(N=10000)
    model.per_class["x"] = ClassFourier(dc=0.06, coeffs={})
    assert np.allclose(reconstruct(model, "x", np.arange(10)), 0.06)
    model.per_class["y"] = ClassFourier(dc=0.06, coeffs={1: (0.02, 0.0)})
    assert reconstruct(model, "y", 2500) == pytest.approx(0.08)


def test_model_dict_round_trip():
    model = FourierModel(N=5000)
    model.per_class["a"] = ClassFourier(dc=0.1, coeffs={2: (0.01, -0.02)})
    back = FourierModel.from_dict(model.to_dict())
    assert back.N == 5000
    assert back.per_class["a"].dc == 0.1
    assert back.per_class["a"].coeffs == {2: (0.01, -0.02)}


def test_decompose_tracks_two_frequency_drift():
    # small Monte-Carlo version of the two-frequency scenario
    lay = build_repetition(3)
    assign = uniform_assignment(
        lay.fault_locations(PHENOMENOLOGICAL), sine_profile(0.06, [0.02, 0.025], [4000, 2800]))
    classes = derive_edge_classes(lay, assign, PHENOMENOLOGICAL)
    N = 4000
    data = run_memory(lay, assign, PHENOMENOLOGICAL, cycles=N, shots=40, seed=67)
    sched = WindowSchedule.descending(4000, 400, 400, mu=0.22, w_min=400)
    model = decompose(data, classes, sched)
    ts = np.arange(N)
    gt = ground_truth_edge_series(classes, assign, ts)
    bulk = next(c.cid for c in classes if c.kind == "bulk-space")
    recon = reconstruct(model, bulk, ts)
    rmse = np.sqrt(np.mean((recon - gt[bulk]) ** 2))
    amp_sum = (0.02 + 0.025) * 2 / 3
    assert rmse <= 0.15 * amp_sum
