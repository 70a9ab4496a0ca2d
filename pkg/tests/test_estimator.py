import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from driftdem.code_models import PHENOMENOLOGICAL, build_repetition, derive_edge_classes, ground_truth_edge_series
from driftdem.estimator import (
    EstimationError,
    boundary_probability,
    boxcar_filter,
    bulk_probability,
    correct_single_frequency,
    dem_from_estimates,
    dft,
    dirichlet_gain,
    dirichlet_phase,
    dirichlet_response,
    idft,
    optimal_window,
    sigma_from_estimate,
    sliding_series,
    window_counts,
    window_sigma,
    EstimatedSeries,
    SpectralResponse,
)
from driftdem.noise import sine_profile, static_profile, uniform_assignment
from driftdem.oracles import dft_direct, enumerate_window
from driftdem.sim import DetectionData, run_memory


def make_data(det_bits: np.ndarray, obs=None) -> DetectionData:
    """Detection data from a (shots, cycles, D) bool array."""
    det_bits = np.asarray(det_bits, dtype=np.uint8)
    s, n, d = det_bits.shape
    packed = np.packbits(det_bits, axis=-1, bitorder="little")
    return DetectionData(
        dets=packed, observables=np.zeros(s, np.uint8) if obs is None else obs,
        shots=s, cycles=n, num_detectors=d, seed=0,
        layout_hash=b"\0" * 32, assignment_hash=b"\0" * 32,
    )


@pytest.fixture(scope="module")
def rep3():
    lay = build_repetition(3)
    assign = uniform_assignment(lay.fault_locations(PHENOMENOLOGICAL), static_profile(0.1))
    classes = derive_edge_classes(lay, assign, PHENOMENOLOGICAL)
    return lay, assign, classes


# --- Eq. (1): bulk inversion ---------------------------------------------

def test_bulk_probability_zero_stats():
    assert bulk_probability(0.0, 0.0, 0.0) == pytest.approx(0.0)


def test_bulk_probability_independent_detectors():
    assert bulk_probability(0.2, 0.3, 0.06) == pytest.approx(0.0, abs=1e-12)


def test_bulk_probability_direct_substitution():
    assert bulk_probability(0.1, 0.1, 0.1) == pytest.approx(0.1)


@given(st.floats(min_value=1e-4, max_value=0.49))
def test_bulk_probability_inverts_single_edge(p):
    # one isolated mechanism: <vi> = <vj> = <vivj> = p
    assert bulk_probability(p, p, p) == pytest.approx(p, rel=1e-9)


def test_bulk_probability_flags():
    flags = np.zeros(2, dtype=np.uint8)
    p = bulk_probability(np.array([0.45, 0.1]), np.array([0.45, 0.1]),
                         np.array([0.176, 0.005]), flags)
    # first: denominator 1 - 1.8 + 0.704 < 0 -> dropped
    assert np.isnan(p[0]) and flags[0] & 1
    # second: cov < 0 small -> radicand fine, no flag
    assert np.isfinite(p[1]) and flags[1] == 0


def test_bulk_probability_clamps_negative_radicand():
    # radicand = (vi - 1/2)(vj - 1/2)/den: negative when exactly one singles
    # mean exceeds 1/2 (a sampling-noise situation)
    flags = np.zeros(1, dtype=np.uint8)
    p = bulk_probability(np.array([0.55]), np.array([0.3]), np.array([0.3]), flags)
    assert p[0] == pytest.approx(0.5)
    assert flags[0] & 2


# --- Eq. (2): boundary -----------------------------------------------------

def test_boundary_probability_no_incident_edges():
    assert boundary_probability(0.07, []) == pytest.approx(0.07)


def test_boundary_probability_examples():
    assert boundary_probability(0.1, [(0.1, 1)]) == pytest.approx(0.0)
    assert boundary_probability(0.18, [(0.1, 1)]) == pytest.approx(0.1)


def test_boundary_probability_exact_composition():
    # edges at detector: boundary p_b, two time-like at p_t, space at p_s
    p_b, p_t, p_s = 0.04, 0.06, 0.05
    prod = (1 - 2 * p_t) ** 2 * (1 - 2 * p_s) * (1 - 2 * p_b)
    v = 0.5 * (1 - prod)
    assert boundary_probability(v, [(p_t, 2), (p_s, 1)]) == pytest.approx(p_b, abs=1e-12)


# --- window counting -------------------------------------------------------

def test_window_counts_all_zero(rep3):
    _, _, classes = rep3
    data = make_data(np.zeros((3, 10, 2)))
    stats = window_counts(data, classes, t_l=10, W=5)
    for ws in stats.values():
        assert ws.v_i == 0.0
        assert ws.v_j in (None, 0.0)


def test_window_counts_always_fired(rep3):
    _, _, classes = rep3
    data = make_data(np.ones((1, 8, 2)))
    stats = window_counts(data, classes, t_l=8, W=4)
    for ws in stats.values():
        assert ws.v_i == 1.0
        if ws.v_j is not None:
            assert ws.v_j == 1.0 and ws.v_ij == 1.0


def test_window_counts_hand_built_toy(rep3):
    _, _, classes = rep3
    # 1 shot, 4 cycles, 2 detectors; hand-enumerable
    bits = np.array([[[1, 0], [0, 1], [1, 1], [0, 0]]])
    data = make_data(bits)
    stats = window_counts(data, classes, t_l=4, W=4)
    space = stats["s:a1-a2"]
    assert space.M == 4
    assert space.v_i == pytest.approx(2 / 4)
    assert space.v_j == pytest.approx(2 / 4)
    assert space.v_ij == pytest.approx(1 / 4)
    tl = stats["t:a1-a1+1"]  # pairs (c, c+1) with later in window: c in {0,1,2}
    assert tl.M == 3
    assert tl.v_i == pytest.approx(2 / 3)
    assert tl.v_j == pytest.approx(1 / 3)
    assert tl.v_ij == 0.0  # a1 never fires in two consecutive cycles here


def test_window_counts_range_validation(rep3):
    _, _, classes = rep3
    data = make_data(np.zeros((1, 10, 2)))
    with pytest.raises(EstimationError):
        window_counts(data, classes, t_l=4, W=5)
    with pytest.raises(EstimationError):
        window_counts(data, classes, t_l=11, W=5)


# --- Eq. (4) ---------------------------------------------------------------

def test_window_sigma_constant():
    p = 0.3
    assert window_sigma([p] * 8) == pytest.approx(np.sqrt(p * (1 - p) / 8))


def test_window_sigma_zero():
    assert window_sigma([0.0] * 5) == 0.0


def test_window_sigma_two_cycle_example():
    assert window_sigma([0.1, 0.2]) == pytest.approx(0.25)


def test_window_sigma_w_scaling():
    p = 0.2
    s1 = window_sigma([p] * 100)
    s2 = window_sigma([p] * 400)
    assert s1 / s2 == pytest.approx(2.0)


def test_sigma_from_estimate():
    assert sigma_from_estimate(0.1, 900) == pytest.approx(np.sqrt(0.09 / 900))


# --- appendix exactness ----------------------------------------------------

def test_window_mean_and_sigma_match_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(25):
        w = int(rng.integers(1, 13))
        ps = rng.random(w) * 0.9
        mean, var = enumerate_window(ps)
        assert mean == pytest.approx(np.mean(ps), abs=1e-12)
        assert var == pytest.approx(window_sigma(ps) ** 2, abs=1e-12)


# --- sliding series --------------------------------------------------------

def test_sliding_series_static_recovers_rate(rep3):
    lay, assign, classes = rep3
    data = run_memory(lay, assign, PHENOMENOLOGICAL, cycles=4000, shots=20, seed=21)
    est = sliding_series(data, classes, W=1000)
    gt = ground_truth_edge_series(classes, assign, 2000)
    for cid, series in est.items():
        assert series.t[0] == 1000 and series.t[-1] == 4000
        dev = np.abs(np.nanmean(series.values) - gt[cid])
        # ~4 independent windows plus the small nonlinear-inversion bias
        assert dev < 3 * series.sigma[0] / 2 + 0.015 * gt[cid]


def test_sliding_series_grid_and_stride(rep3):
    lay, assign, classes = rep3
    data = run_memory(lay, assign, PHENOMENOLOGICAL, cycles=100, shots=5, seed=22)
    est = sliding_series(data, classes, W=10, stride=7)
    t = est["s:a1-a2"].t
    assert t[0] == 10 and np.all(np.diff(t) == 7) and t[-1] <= 100
    full = sliding_series(data, classes, W=10)
    sub = full["s:a1-a2"].values[::7]
    assert np.allclose(sub[: len(t)], est["s:a1-a2"].values, equal_nan=True)


def test_sliding_series_rejects_oversized_window(rep3):
    lay, assign, classes = rep3
    data = run_memory(lay, assign, PHENOMENOLOGICAL, cycles=50, shots=2, seed=23)
    with pytest.raises(EstimationError):
        sliding_series(data, classes, W=51)


def test_aggregation_bias_is_second_order(rep3):
    # Eq. (1) applied to window-averaged statistics of a drifting rate has
    # O((amplitude)^2) bias; measure it on exact expectations
    p_lo, p_hi = 0.02, 0.12  # rate alternates inside the window
    vi = vj = vij_mean = None
    # exact per-cycle expectations for a single isolated edge: vi=vj=vij=p
    ps = np.array([p_lo, p_hi] * 50)
    vi = vj = vij = ps.mean()
    est = bulk_probability(vi, vj, vij)
    assert est == pytest.approx(ps.mean(), abs=2e-3)
    assert abs(est - ps.mean()) < (0.5 * (p_hi - p_lo)) ** 2


# --- Dirichlet response ----------------------------------------------------

@pytest.mark.parametrize("W,expected", [(1500, 0.964), (5000, 0.636), (12000, 0.156)])
def test_dirichlet_gain_paper_values(W, expected):
    # m/N = 1e-4: use N = 5e4, m = 5 (source quotes 3 digits)
    assert dirichlet_gain(W, 5, 50000) == pytest.approx(expected, abs=1e-3)


def test_dirichlet_gain_dc():
    assert dirichlet_gain(777, 0, 4096) == 1.0
    assert dirichlet_phase(777, 0, 4096) == 0.0


def test_dirichlet_phase_values():
    assert dirichlet_phase(5000, 5, 50000) == pytest.approx(np.pi * 5 * 4999 / 50000)
    assert dirichlet_phase(5000, 5, 50000) == pytest.approx(np.pi / 2, abs=2e-3)


def test_spectral_response_symmetry_and_dc():
    sr = SpectralResponse.build(N=256, W=32)
    assert sr.gain[0] == 1.0
    assert np.allclose(sr.gain[1:], sr.gain[-1:0:-1], atol=1e-12)
    assert np.allclose(sr.phase, np.mod(np.pi * np.arange(256) * 31 / 256, 2 * np.pi))


def test_filter_property_exact():
    # spectrum of the boxcar-filtered series = response x input spectrum
    rng = np.random.default_rng(3)
    N, W = 512, 37
    x = rng.random(N)
    y = boxcar_filter(x, W)
    hx = dirichlet_response(W, np.arange(N), N) * dft(x)
    hy = dft(y)
    scale = np.abs(dft(x)).max()
    assert np.max(np.abs(hy - hx)) / scale < 1e-8


def test_dft_constant_and_sinusoid():
    x = np.full(64, 3.0)
    spec = dft(x)
    assert abs(spec[0]) == pytest.approx(192.0)
    assert np.max(np.abs(spec[1:])) < 1e-10
    t = np.arange(64)
    s = np.sin(2 * np.pi * 5 * t / 64)
    spec = np.abs(dft(s))
    assert spec[5] == pytest.approx(32.0) and spec[59] == pytest.approx(32.0)
    assert np.partition(spec, -3)[-3] < 1e-9


def test_dft_matches_direct_sum_oracle():
    rng = np.random.default_rng(9)
    x = rng.random(16)
    assert np.max(np.abs(dft(x) - dft_direct(x))) < 1e-10


def test_dft_round_trip():
    rng = np.random.default_rng(10)
    x = rng.random(100)
    assert np.max(np.abs(idft(dft(x)).real - x)) < 1e-10
    with pytest.raises(EstimationError):
        dft(np.array([]))


# --- optimal window --------------------------------------------------------

def test_optimal_window_epsilon_to_zero_is_trivial():
    assert optimal_window(1e-12, 5, 50000) == 1


def test_optimal_window_matches_dense_scan():
    # independent oracle: dense scan over the first lobe
    eps, m_c, N = 0.05, 5, 50000
    target = 1 - eps
    ws = np.arange(1, N // m_c + 1)
    gains = np.array([dirichlet_gain(w, m_c, N) for w in ws])
    expected = int(ws[gains >= target].max())
    got = optimal_window(eps, m_c, N)
    assert got == expected
    # sinc-level solution sits near 0.1757 * N / m_c (the derived constant;
    # the source text's quoted prefactor 0.12 is not reproducible from the
    # stated equation and is recorded as a discrepancy)
    assert abs(got - 0.17574 * N / m_c) <= 2


def test_optimal_window_validation():
    with pytest.raises(EstimationError):
        optimal_window(0.0, 5, 100)
    with pytest.raises(EstimationError):
        optimal_window(0.05, 60, 100)


# --- single-frequency correction -------------------------------------------

def test_correct_single_frequency_identity_for_dc():
    t = np.arange(100, 200)
    series = EstimatedSeries("x", t, np.full(100, 0.2), np.full(100, 1e-3), 2,
                             np.full(100, 10), np.zeros(100, np.uint8))
    out = correct_single_frequency(series, 3, 1000)
    assert np.allclose(out.values, series.values, atol=1e-12)


def test_correct_single_frequency_recovers_damped_series():
    N, W, m = 4000, 600, 4
    omega = 2 * np.pi * m / N
    t_all = np.arange(N, dtype=float)
    truth = 0.1 + 0.03 * np.sin(omega * t_all)
    damped = boxcar_filter(truth, W)
    t = np.arange(W, N)
    series = EstimatedSeries("x", t, damped[t], np.full(t.size, 1e-4), W,
                             np.full(t.size, 1), np.zeros(t.size, np.uint8))
    out = correct_single_frequency(series, m, N)
    assert np.max(np.abs(out.values - truth[t])) < 1e-6


def test_correct_single_frequency_gain_floor():
    N, m = 10000, 10
    W = 1000  # sin(pi m W / N) = sin(pi) = 0 -> zero gain at that bin
    t = np.arange(W, N)
    series = EstimatedSeries("x", t, np.full(t.size, 0.1), np.full(t.size, 1e-4),
                             W, np.full(t.size, 1), np.zeros(t.size, np.uint8))
    with pytest.raises(EstimationError):
        correct_single_frequency(series, m, N)


# --- DEM assembly -----------------------------------------------------------

def test_dem_from_estimates_fills_dropped_points(rep3):
    lay, assign, classes = rep3
    data = run_memory(lay, assign, PHENOMENOLOGICAL, cycles=300, shots=10, seed=30)
    est = sliding_series(data, classes, W=50)
    cid = "s:a1-a2"
    est[cid].values[7] = np.nan
    dem = dem_from_estimates(classes, est, "sliding")
    assert np.isfinite(dem.series[cid]).all()
    assert est[cid].flags[7] & 8
