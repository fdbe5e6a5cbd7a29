"""Tests for scale schedules and the two-regime spliced cascade.

Oracle notes
------------
Product-structure table: with schedule L,L,L,H,H,H,H on d=2, k=1,
axes=(0,), the perpendicular digit sequence forced by the H run is
0,1,1,1 (lower child at the run start, then upper children), so at
depth 7 a cell's row index r = b0*64 + b1*32 + b2*16 + 0*8 + 4 + 2 + 1
with free bits b0..b2, i.e. occupied rows are exactly r % 16 == 7
(eight of them).  Columns are free.  Each occupied leaf carries
(1/4)^3 * (1/2)^4 = 2**-10: uniform levels give 1/4 per child, plane
levels give 1/2 to each of the two admissible children.  1024 occupied
cells * 2**-10 = 1 checks total mass.

Deep-regime scenery oracle: at a support point whose digits below the
inspected level are adapted to the schedule (see chain_point), zooming
to a level well inside an L run shows a window indistinguishable from
Lebesgue, and well inside an H run a window indistinguishable from the
plane.  Measured distances for the growth-48 half-and-half schedule:
0.0024 / 0.0173 (levels 5, 7 vs Lebesgue) and 0.0000 / 0.0005
(levels 17, 19 vs the plane), all frozen here under a 0.05 gate.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sceneryflow.errors import (
    InvalidConfigError,
    InvalidRuleError,
    ResolutionExhaustedError,
    ScheduleTooShortError,
)
from sceneryflow.cones import Subspace
from sceneryflow.measure import (
    build_lebesgue,
    build_plane,
    load_measure,
    sample_points,
    save_measure,
)
from sceneryflow.scenery import LOG2, scenery_at
from sceneryflow.splice import (
    SpliceSchedule,
    SplicedRule,
    build_spliced,
    schedule_for_theta,
)
from sceneryflow.stats import (
    conical_statistic,
    measure_dimension,
    snapshot_distance,
)


# ---------------------------------------------------------------------------
# schedule construction and validation


def test_schedule_normalizes_blocks():
    sch = SpliceSchedule(blocks=[("L", 2), ("H", 3)])
    assert sch.blocks == (("L", 2), ("H", 3))
    assert sch.levels == 5
    assert sch.theta is None


def test_schedule_rejects_unknown_rule_id():
    with pytest.raises(InvalidConfigError, match="unknown rule id"):
        SpliceSchedule(blocks=[("L", 2), ("Q", 1)])


def test_schedule_rejects_nonpositive_length():
    with pytest.raises(InvalidConfigError, match="positive"):
        SpliceSchedule(blocks=[("L", 0)])
    with pytest.raises(InvalidConfigError, match="positive"):
        SpliceSchedule(blocks=[("L", 2), ("H", -1)])


def test_schedule_rejects_shrinking_block_of_same_rule():
    with pytest.raises(InvalidConfigError, match="nondecreasing"):
        SpliceSchedule(blocks=[("L", 3), ("H", 2), ("L", 2)])


def test_schedule_allows_interleaved_growth():
    sch = SpliceSchedule(blocks=[("L", 1), ("H", 1), ("L", 2), ("H", 2)])
    assert sch.levels == 6


def test_schedule_rejects_theta_outside_unit_interval():
    with pytest.raises(InvalidConfigError, match="theta"):
        SpliceSchedule(blocks=[("L", 1)], theta=1.5)


def test_schedule_rejects_empty():
    with pytest.raises(InvalidConfigError, match="no blocks"):
        SpliceSchedule(blocks=[])


def test_letters_prefix_and_full():
    sch = SpliceSchedule(blocks=[("L", 2), ("H", 3)])
    assert list(sch.letters(3)) == ["L", "L", "H"]
    assert list(sch.letters(5)) == ["L", "L", "H", "H", "H"]


def test_letters_beyond_finite_schedule_raises():
    sch = SpliceSchedule(blocks=[("L", 2), ("H", 3)])
    with pytest.raises(ScheduleTooShortError, match="5 levels"):
        sch.letters(6)


def test_running_frequency_matches_manual_count():
    sch = SpliceSchedule(blocks=[("L", 1), ("H", 2), ("L", 3)])
    freq = sch.running_frequency(6)
    manual = np.cumsum([1, 0, 0, 1, 1, 1]) / np.arange(1, 7)
    assert np.array_equal(freq, manual)


# ---------------------------------------------------------------------------
# schedule_for_theta


def test_theta_one_is_all_l():
    sch = schedule_for_theta(1.0, 10)
    assert np.all(sch.letters(10) == "L")


def test_theta_zero_is_all_h():
    sch = schedule_for_theta(0.0, 10)
    assert np.all(sch.letters(10) == "H")


def test_frequency_example_half():
    # theta = 1/2 with the default growth lands 25 L levels in the
    # first 48, a 0.021 deviation.
    sch = schedule_for_theta(0.5, 48, growth=4)
    final = sch.running_frequency(48)[-1]
    assert final == pytest.approx(25.0 / 48.0)
    assert abs(final - 0.5) <= 0.05


def test_super_block_l_share_matches_rounding():
    theta, growth = 0.3, 4
    sch = schedule_for_theta(theta, 60, growth=growth)
    letters = sch.letters(sch.levels)
    start = 0
    j = 1
    while start < sch.levels:
        size = growth * j
        chunk = letters[start : start + size]
        want_l = int(np.floor(theta * size + 0.5))
        assert int(np.sum(chunk == "L")) == want_l
        start += size
        j += 1


def test_block_lengths_grow_per_rule():
    sch = schedule_for_theta(0.5, 48, growth=4)
    for rule_id in ("L", "H"):
        lengths = [n for r, n in sch.blocks if r == rule_id]
        assert lengths == sorted(lengths)
        assert lengths[-1] > lengths[0]


def test_generated_schedule_extends_past_its_blocks():
    sch = schedule_for_theta(0.5, 20, growth=4)
    letters = sch.letters(100)
    assert len(letters) == 100
    assert abs(float(np.mean(letters == "L")) - 0.5) < 0.1


def test_extension_is_deterministic():
    sch = schedule_for_theta(0.37, 30, growth=4)
    assert np.array_equal(sch.letters(200), sch.letters(200))
    assert np.array_equal(sch.letters(200)[:80], sch.letters(80))


@pytest.mark.parametrize("theta", [0.2, 0.5, 0.8])
@pytest.mark.parametrize("growth", [4, 16])
def test_frequency_report_stays_within_bound(theta, growth):
    rep = schedule_for_theta(theta, 200, growth=growth).frequency_report()
    assert rep["within_bound"]
    assert rep["final_frequency"] == pytest.approx(theta)


def test_frequency_report_needs_theta():
    sch = SpliceSchedule(blocks=[("L", 2), ("H", 3)])
    with pytest.raises(InvalidConfigError, match="theta"):
        sch.frequency_report()


def test_schedule_for_theta_validation():
    with pytest.raises(InvalidConfigError, match="theta"):
        schedule_for_theta(-0.1, 10)
    with pytest.raises(InvalidConfigError, match="levels"):
        schedule_for_theta(0.5, 0)
    with pytest.raises(InvalidConfigError, match="growth"):
        schedule_for_theta(0.5, 10, growth=0)


# ---------------------------------------------------------------------------
# spliced rule: degenerate schedules reproduce the basic measures


def test_all_l_equals_lebesgue():
    mu = build_spliced(2, 1, schedule=SpliceSchedule(blocks=[("L", 6)]))
    leb = build_lebesgue(2)
    got = mu.window_masses(6, (0, 0), (64, 64))
    want = leb.window_masses(6, (0, 0), (64, 64))
    assert np.array_equal(got, want)


def test_all_h_equals_plane():
    mu = build_spliced(2, 1, schedule=SpliceSchedule(blocks=[("H", 6)]))
    plane = build_plane(2, 1)
    got = mu.window_masses(6, (0, 0), (64, 64))
    want = plane.window_masses(6, (0, 0), (64, 64))
    assert np.array_equal(got, want)


def test_all_h_equals_plane_3d_two_axes():
    sch = SpliceSchedule(blocks=[("H", 4)])
    mu = build_spliced(3, 2, schedule=sch)
    plane = build_plane(3, 2)
    got = mu.window_masses(4, (0, 0, 0), (16, 16, 16))
    want = plane.window_masses(4, (0, 0, 0), (16, 16, 16))
    assert np.array_equal(got, want)


# ---------------------------------------------------------------------------
# spliced rule: product structure of a mixed schedule


@pytest.fixture(scope="module")
def mixed_rule():
    return SplicedRule(
        schedule=SpliceSchedule(blocks=[("L", 3), ("H", 4)]), axes=(0,)
    )


def test_mixed_schedule_leaf_table(mixed_rule):
    w = mixed_rule.window_masses(7, (0, 0), (128, 128), 2)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    perp = np.nonzero(w.sum(axis=0))[0]
    assert np.array_equal(perp, np.arange(7, 128, 16))
    occupied = w[w > 0]
    assert occupied.size == 1024
    assert np.all(occupied == 2.0**-10)
    # the in-plane axis stays uniform: every index along it is occupied
    assert np.all(w.sum(axis=1) > 0)


def test_window_masses_match_separable_factors(mixed_rule):
    lo = (16, 40)
    shape = (32, 32)
    factors = mixed_rule.separable_factors(7, lo, shape, 2)
    outer = np.multiply.outer(factors[0], factors[1])
    assert np.array_equal(mixed_rule.window_masses(7, lo, shape, 2), outer)


def test_h_weights_select_perpendicular_digit():
    # Run start pastes through the lower child (perpendicular bit 0),
    # continuation levels ride the upper child (bit 1).
    rule = SplicedRule(
        schedule=SpliceSchedule(blocks=[("L", 1), ("H", 2)]), axes=(0,)
    )
    w_l = rule.weights((), 2)
    assert np.array_equal(w_l, np.full(4, 0.25))
    w_start = rule.weights((0,), 2)  # level 1: first H of the run
    assert np.array_equal(w_start, np.array([0.5, 0.5, 0.0, 0.0]))
    w_cont = rule.weights((0, 0), 2)  # level 2: continuation
    assert np.array_equal(w_cont, np.array([0.0, 0.0, 0.5, 0.5]))


def test_materialized_tree_matches_rule_windows():
    sch = SpliceSchedule(blocks=[("L", 3), ("H", 4)])
    lazy = build_spliced(2, 1, schedule=sch)
    tree = build_spliced(2, 1, schedule=sch, depth=5)
    got = tree.window_masses(7, (0, 0), (128, 128))
    want = lazy.window_masses(7, (0, 0), (128, 128))
    assert np.array_equal(got, want)


def test_detail_below_finite_schedule_is_uniform(mixed_rule):
    # Window reads deeper than the schedule refine each leaf uniformly.
    w7 = mixed_rule.window_masses(7, (0, 0), (128, 128), 2)
    w9 = mixed_rule.window_masses(9, (0, 0), (512, 512), 2)
    blocks = w9.reshape(128, 4, 128, 4)
    assert np.array_equal(blocks.sum(axis=(1, 3)), w7)
    assert np.all(blocks == blocks[:, :1, :, :1])


# ---------------------------------------------------------------------------
# build_spliced validation and persistence


def test_build_spliced_needs_schedule():
    with pytest.raises(InvalidConfigError, match="schedule"):
        build_spliced(2, 1)


def test_build_spliced_k_range():
    sch = SpliceSchedule(blocks=[("L", 4)])
    with pytest.raises(InvalidConfigError, match="k = 0"):
        build_spliced(2, 0, schedule=sch)
    with pytest.raises(InvalidConfigError, match="k = 2"):
        build_spliced(2, 2, schedule=sch)


def test_build_spliced_axes_must_match_k():
    sch = SpliceSchedule(blocks=[("L", 4)])
    with pytest.raises(InvalidConfigError, match="!= k"):
        build_spliced(3, 2, subspace=(0,), schedule=sch)


def test_build_spliced_rejects_rotated_subspace():
    sch = SpliceSchedule(blocks=[("L", 4)])
    frame = np.array([[1.0], [1.0]]) / np.sqrt(2.0)
    with pytest.raises(InvalidRuleError, match="axis-aligned"):
        build_spliced(2, 1, subspace=Subspace(frame), schedule=sch)


def test_build_spliced_accepts_axis_aligned_subspace():
    sch = SpliceSchedule(blocks=[("H", 3)])
    via_frame = build_spliced(
        2, 1, subspace=Subspace(np.array([[0.0], [1.0]])), schedule=sch
    )
    via_axes = build_spliced(2, 1, subspace=(1,), schedule=sch)
    got = via_frame.window_masses(3, (0, 0), (8, 8))
    want = via_axes.window_masses(3, (0, 0), (8, 8))
    assert np.array_equal(got, want)


def test_build_spliced_depth_beyond_finite_schedule():
    sch = SpliceSchedule(blocks=[("L", 2), ("H", 3)])
    with pytest.raises(ScheduleTooShortError):
        build_spliced(2, 1, schedule=sch, depth=6)


def test_persistence_roundtrip_finite(tmp_path):
    sch = SpliceSchedule(blocks=[("L", 3), ("H", 4)])
    mu = build_spliced(2, 1, schedule=sch, depth=3)
    path = tmp_path / "spliced.json"
    save_measure(mu, path)
    back = load_measure(path)
    assert back.kind == mu.kind
    assert back.rule.axes == (0,)
    assert back.rule.schedule.blocks == sch.blocks
    assert back.rule.max_depth == 7
    got = back.window_masses(7, (0, 0), (128, 128))
    want = mu.window_masses(7, (0, 0), (128, 128))
    assert np.array_equal(got, want)


def test_persistence_roundtrip_generated(tmp_path):
    sch = schedule_for_theta(0.5, 20, growth=4)
    mu = build_spliced(2, 1, schedule=sch, depth=2)
    path = tmp_path / "spliced_gen.json"
    save_measure(mu, path)
    back = load_measure(path)
    assert back.rule.schedule.theta == 0.5
    assert back.rule.schedule.growth == 4
    assert back.rule.max_depth is None
    assert np.array_equal(
        back.rule.schedule.letters(100), sch.letters(100)
    )


# ---------------------------------------------------------------------------
# scenery flow over a spliced measure


def test_flow_stops_at_finite_schedule_depth():
    sch = SpliceSchedule(blocks=[("L", 3), ("H", 4)])
    mu = build_spliced(2, 1, schedule=sch)
    x = np.array([2.0**-8, 2.0**-8])
    snap = scenery_at(mu, x, 3 * LOG2)
    assert snap.grid.sum() == pytest.approx(1.0)
    with pytest.raises(ResolutionExhaustedError, match="depth 7"):
        scenery_at(mu, x, 9 * LOG2)


def chain_point(schedule, depth, ones_after):
    """Support point whose digits are adapted to the schedule.

    Follows the mass chain: at an H run start take the lower
    perpendicular child, inside the run the upper one, and alternate
    digits during L levels so the point stays off cell boundaries.
    From level `ones_after` on, every digit is 1, which parks the
    point at the top of its current band so windows at earlier levels
    sit flush with the band instead of straddling two dyadic rows.
    """
    letters = schedule.letters(depth)
    lo = np.array([-1.0, -1.0])
    w = 2.0
    prev_h = False
    for i in range(depth):
        w /= 2.0
        if i >= ones_after:
            bit_x = bit_y = 1
        else:
            bit_x = i % 2
            if letters[i] == "H" and not prev_h:
                bit_y = 0
            elif letters[i] == "H":
                bit_y = 1
            else:
                bit_y = i % 2
        prev_h = letters[i] == "H"
        lo[0] += bit_x * w
        lo[1] += bit_y * w
    return np.array([lo[0] + w, lo[1] + w])


@pytest.fixture(scope="module")
def spliced_half():
    sch = schedule_for_theta(0.5, 48, growth=48)
    return build_spliced(2, 1, schedule=sch, depth=48, seed=0)


def test_deep_l_scenery_looks_like_lebesgue(spliced_half):
    x = chain_point(spliced_half.rule.schedule, 40, ones_after=24)
    leb = scenery_at(build_lebesgue(2), np.zeros(2), 0.0)
    for level in (5, 7):
        snap = scenery_at(spliced_half, x, level * LOG2)
        assert snapshot_distance(snap, leb) < 0.05


def test_deep_h_scenery_looks_like_plane(spliced_half):
    x = chain_point(spliced_half.rule.schedule, 40, ones_after=24)
    plane = scenery_at(build_plane(2, 1), np.zeros(2), 0.0)
    for level in (17, 19):
        snap = scenery_at(spliced_half, x, level * LOG2)
        assert snapshot_distance(snap, plane) < 0.05


def test_spliced_dimension_is_mean_of_regimes(spliced_half):
    est = measure_dimension(
        spliced_half,
        n_points=12,
        r_min=2.0**-45,
        r_max=0.25,
        seed=7,
        sample_depth=48,
    )
    mean_dim = float(np.mean(est.points))
    assert 1.45 <= mean_dim <= 1.55
    assert max(est.points) - min(est.points) < 0.01


def test_conical_statistic_tracks_l_frequency(spliced_half):
    # Over the first 24 zoom levels the schedule is exactly half L, and
    # the small-eps conical statistic counts the L-looking share of the
    # flow.  Measured per-point values: 0.536, 0.536, 0.515.
    pts = sample_points(spliced_half, 3, 36, seed=5)
    stats = [
        conical_statistic(
            spliced_half, x, 24 * LOG2, 1, 0.5, 0.1, dt=LOG2 / 4, m=8
        )
        for x in pts
    ]
    for s in stats:
        assert abs(s - 0.5) <= 0.06
    assert abs(float(np.mean(stats)) - 0.5) <= 0.05


# ---------------------------------------------------------------------------
# property tests


@st.composite
def interleaved_schedules(draw):
    n_pairs = draw(st.integers(min_value=1, max_value=4))
    l_steps = draw(
        st.lists(
            st.integers(min_value=0, max_value=3),
            min_size=n_pairs,
            max_size=n_pairs,
        )
    )
    h_steps = draw(
        st.lists(
            st.integers(min_value=0, max_value=3),
            min_size=n_pairs,
            max_size=n_pairs,
        )
    )
    blocks = []
    l_len, h_len = 1, 1
    for dl, dh in zip(l_steps, h_steps):
        l_len += dl
        h_len += dh
        blocks.append(("L", l_len))
        blocks.append(("H", h_len))
    return SpliceSchedule(blocks=tuple(blocks))


@given(sch=interleaved_schedules())
@settings(max_examples=60, deadline=None)
def test_letters_account_for_every_block(sch):
    letters = sch.letters(sch.levels)
    assert len(letters) == sch.levels
    want_l = sum(n for r, n in sch.blocks if r == "L")
    assert int(np.sum(letters == "L")) == want_l
    freq = sch.running_frequency(sch.levels)
    assert np.all((freq >= 0.0) & (freq <= 1.0))


@given(sch=interleaved_schedules(), data=st.data())
@settings(max_examples=60, deadline=None)
def test_spliced_weights_conserve_mass(sch, data):
    rule = SplicedRule(schedule=sch, axes=(0,))
    depth = data.draw(st.integers(min_value=0, max_value=sch.levels - 1))
    path = tuple(
        data.draw(st.integers(min_value=0, max_value=3)) for _ in range(depth)
    )
    w = rule.weights(path, 2)
    assert w.shape == (4,)
    assert np.all(w >= 0.0)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)


@given(sch=interleaved_schedules())
@settings(max_examples=25, deadline=None)
def test_spliced_window_total_mass(sch):
    rule = SplicedRule(schedule=sch, axes=(0,))
    depth = min(sch.levels, 6)
    side = 1 << depth
    w = rule.window_masses(depth, (0, 0), (side, side), 2)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
