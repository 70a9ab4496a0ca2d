import numpy as np
import pytest
from hypothesis import given, strategies as st

from driftdem.code_models import CIRCUIT_LEVEL, PHENOMENOLOGICAL, build_repetition, derive_edge_classes
from driftdem.dem import (
    DemError,
    DemGrid,
    clip_probabilities,
    dem_from_dict,
    dem_to_dict,
    edge_weight,
    ground_truth_dem,
    instantiate,
    load_dem,
    make_dem,
    save_dem,
    slice_dem,
    static_collapse,
)
from driftdem.noise import sine_profile, static_profile, uniform_assignment


@pytest.fixture(scope="module")
def rep3_gt():
    lay = build_repetition(3)
    assign = uniform_assignment(lay.fault_locations(PHENOMENOLOGICAL), sine_profile(0.1, [0.05], [100]))
    classes = derive_edge_classes(lay, assign, PHENOMENOLOGICAL)
    dem = ground_truth_dem(classes, assign, DemGrid(0, 1, 400), layout_hash=lay.hash_bytes())
    return lay, assign, classes, dem


def test_edge_weight_examples():
    assert edge_weight(0.5) == pytest.approx(0.0)
    assert edge_weight(0.1) == pytest.approx(np.log(9.0))
    with pytest.raises(DemError):
        edge_weight(0.0)
    with pytest.raises(DemError):
        edge_weight(1.0)


@given(st.floats(min_value=1e-9, max_value=1 - 1e-9))
def test_edge_weight_antisymmetry(p):
    assert edge_weight(p) == pytest.approx(-edge_weight(1 - p), rel=1e-6, abs=1e-9)


def test_edge_weight_strictly_decreasing():
    ps = np.linspace(0.001, 0.999, 400)
    w = edge_weight(ps)
    assert np.all(np.diff(w) < 0)


def test_clipping_counts_and_band():
    vals, n = clip_probabilities(np.array([0.0, 0.3, 0.6, np.nan]))
    assert n == 3
    assert vals[0] == pytest.approx(1e-6)
    assert vals[2] == pytest.approx(0.5 - 1e-6)
    assert np.all((vals >= 1e-6) & (vals <= 0.5 - 1e-6))


def test_instantiate_static_weights_identical(rep3_gt):
    lay, assign, classes, dem = rep3_gt
    static = static_collapse(dem)
    graph = instantiate(static, (0, 50), ancilla_order=list(lay.ancillas))
    for cid in {c.cid for c in classes}:
        ws = [w for w, c in zip(graph.weights, graph.class_ids) if c == cid]
        assert np.ptp(ws) == 0.0


def test_instantiate_hold_matches_series(rep3_gt):
    lay, assign, classes, dem = rep3_gt
    graph = instantiate(dem, (10, 20), ancilla_order=list(lay.ancillas))
    for p, cid, anchor in zip(graph.probabilities, graph.class_ids, graph.anchors):
        if 0 <= anchor < 400:
            assert p == pytest.approx(dem.series[cid][anchor])


def test_instantiate_truncates_end_to_boundary(rep3_gt):
    lay, assign, classes, dem = rep3_gt
    graph = instantiate(dem, (0, 30), ancilla_order=list(lay.ancillas))
    tl = next(c.cid for c in classes if c.kind == "time-like")
    rows = [(u, v, a) for u, v, c, a in
            zip(graph.edges_u, graph.edges_v, graph.class_ids, graph.anchors) if c == tl]
    last = [r for r in rows if r[2] == 29]
    assert len(last) == 1 and last[0][1] == -1  # truncated to boundary
    mid = [r for r in rows if r[2] == 10]
    assert len(mid) == 1 and last[0][0] >= 0 and mid[0][1] >= 0


def test_instantiate_range_outside_grid_errors(rep3_gt):
    _, _, _, dem = rep3_gt
    with pytest.raises(DemError):
        dem.value_at("b:a1", np.array([1000]))


def test_drifting_gt_differs_between_cycles():
    # gate drift at two distinct frequencies, as in the inhomogeneous setup:
    # the diagonal class mixes both, so its rate differs across the run
    from driftdem.noise import LocationChannel, NoiseAssignment
    lay = build_repetition(3)
    entries = {}
    for loc, kind in lay.fault_locations(CIRCUIT_LEVEL):
        period = 9000 if loc in ("g1", "g2") else 10000
        entries[loc] = LocationChannel(kind, sine_profile(0.045, [0.03], [period]))
    assign = NoiseAssignment(entries)
    classes = derive_edge_classes(lay, assign, CIRCUIT_LEVEL)
    dem = ground_truth_dem(classes, assign, DemGrid(0, 1, 5000))
    diag = next(c.cid for c in classes if c.kind == "diagonal")
    assert abs(dem.series[diag][0] - dem.series[diag][4500]) > 1e-3


def test_static_collapse_idempotent_and_mean(rep3_gt):
    _, _, _, dem = rep3_gt
    static = static_collapse(dem)
    again = static_collapse(static)
    for cid in dem.series:
        assert np.allclose(static.series[cid], np.mean(dem.series[cid]))
        assert np.array_equal(static.series[cid], again.series[cid])
    assert static.provenance == "static"


def test_static_collapse_two_point_mean():
    lay = build_repetition(3)
    assign = uniform_assignment(lay.fault_locations(PHENOMENOLOGICAL), static_profile(0.1))
    classes = derive_edge_classes(lay, assign, PHENOMENOLOGICAL)
    series = {c.cid: np.array([0.1, 0.2]) for c in classes}
    dem = make_dem(classes, DemGrid(0, 1, 2), series)
    static = static_collapse(dem)
    for cid in series:
        assert np.allclose(static.series[cid], 0.15)


def test_slice_and_reanchor(rep3_gt):
    _, _, _, dem = rep3_gt
    sl = slice_dem(dem, 100, 150, new_start=0)
    assert sl.grid.start == 0 and sl.grid.count == 50
    for cid in dem.series:
        assert np.array_equal(sl.series[cid], dem.series[cid][100:150])
    with pytest.raises(DemError):
        slice_dem(dem, 390, 450)


def test_dem_file_round_trip(tmp_path, rep3_gt):
    _, _, _, dem = rep3_gt
    path = tmp_path / "model.dem.json"
    save_dem(dem, path)
    back = load_dem(path)
    assert back.provenance == dem.provenance
    assert back.grid == dem.grid
    assert back.layout_hash == dem.layout_hash
    for cid in dem.series:
        assert np.allclose(back.series[cid], dem.series[cid], atol=1e-15)
    assert [c.cid for c in back.classes] == [c.cid for c in dem.classes]


def test_dem_from_dict_rejects_wrong_format(rep3_gt):
    _, _, _, dem = rep3_gt
    doc = dem_to_dict(dem)
    doc["format"] = "something-else"
    with pytest.raises(DemError):
        dem_from_dict(doc)
