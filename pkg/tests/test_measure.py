"""Cascade measures: conservation, window consistency, sampling, persistence."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2

from sceneryflow.errors import (
    CorruptFileError,
    DegenerateMeasureError,
    InvalidRuleError,
    InvalidSubspaceError,
    ResolutionExhaustedError,
)
from sceneryflow.measure import (
    MASS_RTOL,
    DyadicMeasure,
    PlaneRule,
    RandomWeightRule,
    ShiftedRule,
    SubsetRule,
    UniformRule,
    ball_mass,
    build_cascade,
    build_lebesgue,
    build_plane,
    fnv1a64,
    load_measure,
    sample_point,
    sample_points,
    save_measure,
)

RULES = st.one_of(
    st.just(UniformRule()),
    st.builds(
        SubsetRule,
        children=st.sets(st.integers(0, 3), min_size=1, max_size=4).map(
            lambda s: tuple(sorted(s))
        ),
    ),
    st.builds(RandomWeightRule, seed=st.integers(0, 2**32 - 1)),
    st.builds(
        RandomWeightRule,
        seed=st.integers(0, 2**32 - 1),
        concentration=st.floats(0.3, 8.0),
    ),
    st.just(PlaneRule(frame=((1.0, 0.0),))),
    st.just(PlaneRule(frame=((0.0, 1.0),))),
)


@settings(max_examples=40, deadline=None)
@given(rule=RULES, depth=st.integers(1, 4))
def test_mass_conservation_under_refinement(rule, depth):
    mu = build_cascade(rule, d=2)
    mu.refine_to_depth(depth)
    assert mu.check_conservation() <= MASS_RTOL
    leaf_total = sum(mu.masses[p] for p in mu.leaves())
    assert leaf_total == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(
    rule=RULES,
    depth=st.integers(1, 5),
    data=st.data(),
)
def test_window_reads_match_tree_walk(rule, depth, data):
    n = 1 << depth
    lo = [data.draw(st.integers(0, n - 1)) for _ in range(2)]
    shape = [data.draw(st.integers(1, n - lo[j])) for j in range(2)]
    mu_fast = build_cascade(rule, d=2)
    fast = mu_fast.window_masses(depth, np.array(lo), tuple(shape))
    mu_tree = build_cascade(rule, d=2)
    tree = mu_tree._window_from_tree(depth, np.array(lo), tuple(shape))
    np.testing.assert_allclose(fast, tree, rtol=1e-10, atol=1e-15)


@settings(max_examples=20, deadline=None)
@given(rule=RULES, depth=st.integers(1, 4))
def test_refinement_does_not_move_coarse_mass(rule, depth):
    mu = build_cascade(rule, d=2)
    before = mu.window_masses(depth, np.array([0, 0]), (1 << depth,) * 2)
    mu.refine_to_depth(depth + 2)
    after = mu.window_masses(depth, np.array([0, 0]), (1 << depth,) * 2)
    np.testing.assert_allclose(before, after, rtol=1e-10, atol=1e-15)


def test_plane_depth_one_children():
    # the axis line feeds the two lower cells, upper cells stay empty
    mu = build_plane(2, 1)
    mu.refine(())
    got = [mu.masses[(c,)] for c in range(4)]
    assert got == pytest.approx([0.5, 0.5, 0.0, 0.0], abs=1e-15)


def test_plane_rotated_masses_sum_to_one():
    theta = 0.37
    frame = np.array([[np.cos(theta)], [np.sin(theta)]])
    mu = build_plane(2, 1, frame=frame)
    win = mu.window_masses(5, np.array([0, 0]), (32, 32))
    assert win.sum() == pytest.approx(1.0, rel=1e-10)


def test_plane_d3_rotated_masses_sum_to_one():
    q, _ = np.linalg.qr(np.random.default_rng(3).normal(size=(3, 3)))
    mu = build_plane(3, 2, frame=q[:, :2])
    win = mu.window_masses(4, np.array([0, 0, 0]), (16, 16, 16))
    assert win.sum() == pytest.approx(1.0, rel=1e-10)


def test_plane_rejects_non_orthonormal_frame():
    with pytest.raises(InvalidSubspaceError):
        build_plane(2, 1, frame=np.array([[1.0], [1.0]]))


def test_subset_rule_rejects_bad_children():
    with pytest.raises(InvalidRuleError):
        build_cascade(SubsetRule(children=()), d=2)
    with pytest.raises(InvalidRuleError):
        build_cascade(SubsetRule(children=(0, 7)), d=2)


def test_random_rule_is_reproducible():
    a = RandomWeightRule(seed=1234).weights((0, 3, 1), 2)
    b = RandomWeightRule(seed=1234).weights((0, 3, 1), 2)
    c = RandomWeightRule(seed=1235).weights((0, 3, 1), 2)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_shifted_rule_matches_base_branch():
    base = RandomWeightRule(seed=77)
    sh = ShiftedRule(base=base, prefix=(1, 2))
    np.testing.assert_allclose(sh.weights((3, 0), 2), base.weights((1, 2, 3, 0), 2))
    mu = build_cascade(sh, d=2)
    win = mu.window_masses(3, np.array([0, 0]), (8, 8))
    assert win.sum() == pytest.approx(1.0, rel=1e-10)


def test_sampling_matches_cell_masses():
    # depth-2 occupancy of a sampled batch against the exact multinomial
    mu = build_cascade(RandomWeightRule(seed=21), d=2)
    n = 20000
    pts = sample_points(mu, n, depth=2, seed=900)
    assert pts.shape == (n, 2)
    expected = mu.window_masses(2, np.array([0, 0]), (4, 4)).reshape(-1)
    idx = np.floor((pts + 1.0) * 2).astype(int)
    counts = np.zeros((4, 4))
    np.add.at(counts, (idx[:, 0], idx[:, 1]), 1.0)
    counts = counts.reshape(-1)
    keep = expected > 0
    stat = np.sum((counts[keep] - n * expected[keep]) ** 2 / (n * expected[keep]))
    assert counts[~keep].sum() == 0
    p_value = chi2.sf(stat, df=keep.sum() - 1)
    assert p_value > 1e-3


def test_scalar_sampling_stays_on_support():
    mu = build_plane(2, 1)
    for s in range(5):
        x = sample_point(mu, depth=6, seed=s)
        assert abs(x[1]) < 2.0 ** (1 - 6)  # cell centre hugs the line


def test_sample_from_dead_measure_raises():
    mu = DyadicMeasure(d=2, masses={(): 0.0})
    with pytest.raises(DegenerateMeasureError):
        sample_point(mu, depth=2, seed=0)


def test_ball_mass_on_lebesgue_matches_volume():
    mu = build_lebesgue(2)
    for x, r in [((0.0, 0.0), 0.5), ((0.3, -0.2), 0.4), ((0.0, 0.0), 1.0)]:
        got = ball_mass(mu, np.array(x), r)
        expect = np.pi * r**2 / 4.0
        assert got == pytest.approx(expect, rel=1e-9)


def test_ball_mass_zero_radius():
    assert ball_mass(build_lebesgue(2), np.array([0.0, 0.0]), 0.0) == 0.0


def test_ball_mass_on_line_measure():
    # length fraction of the axis line; in-cell uniformity error shrinks
    # with the working depth
    mu = build_plane(2, 1)
    got = ball_mass(mu, np.array([0.0, 0.0]), 0.5, detail=5)
    assert got == pytest.approx(0.5, rel=2e-2)


def test_ball_mass_d3():
    mu = build_lebesgue(3)
    got = ball_mass(mu, np.zeros(3), 0.6)
    expect = (4.0 / 3.0) * np.pi * 0.6**3 / 8.0
    assert got == pytest.approx(expect, rel=1e-6)


def test_rule_free_measure_cannot_refine():
    mu = DyadicMeasure(d=2, masses={(): 1.0})
    with pytest.raises(ResolutionExhaustedError):
        mu.refine(())


def test_persistence_roundtrip(tmp_path):
    mu = build_cascade(RandomWeightRule(seed=55), d=2)
    mu.refine_to_depth(4)
    path = tmp_path / "measure.json"
    save_measure(mu, path)
    back = load_measure(path)
    assert back.d == 2
    assert sorted(back.leaves()) == sorted(mu.leaves())
    w0 = mu.window_masses(4, np.array([0, 0]), (16, 16))
    w1 = back.window_masses(4, np.array([0, 0]), (16, 16))
    np.testing.assert_allclose(w0, w1, rtol=1e-12)
    # the restored rule keeps refining identically
    back.refine_to_depth(6)
    mu.refine_to_depth(6)
    w2 = mu.window_masses(6, np.array([0, 0]), (64, 64))
    w3 = back.window_masses(6, np.array([0, 0]), (64, 64))
    np.testing.assert_allclose(w2, w3, rtol=1e-12)


def test_persistence_detects_edited_mass(tmp_path):
    mu = build_lebesgue(2)
    mu.refine_to_depth(2)
    path = tmp_path / "m.json"
    save_measure(mu, path)
    doc = json.loads(path.read_text())
    doc["leaves"][3]["mass"] += 1e-7
    path.write_text(json.dumps(doc))
    with pytest.raises(CorruptFileError):
        load_measure(path)


def test_persistence_detects_truncation(tmp_path):
    mu = build_lebesgue(2)
    mu.refine_to_depth(1)
    path = tmp_path / "m.json"
    save_measure(mu, path)
    raw = path.read_text()
    path.write_text(raw[: len(raw) // 2])
    with pytest.raises(CorruptFileError):
        load_measure(path)


def test_persistence_rejects_non_tiling_leaves(tmp_path):
    from sceneryflow.measure import _canonical_bytes

    doc = {
        "version": 1,
        "d": 2,
        "kind": "custom",
        "rule": None,
        "seed": None,
        "leaves": [
            {"path": [0], "mass": 0.5},
            {"path": [1], "mass": 0.5},
        ],
    }
    doc["checksum"] = f"{fnv1a64(_canonical_bytes(doc)):016x}"
    path = tmp_path / "m.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(CorruptFileError):
        load_measure(path)


def test_persistence_rejects_subnormalised_measure(tmp_path):
    mu = DyadicMeasure(d=2, masses={(): 0.7})
    with pytest.raises(DegenerateMeasureError):
        save_measure(mu, tmp_path / "m.json")


def test_fnv_reference_values():
    # published FNV-1a 64-bit test vectors
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8
