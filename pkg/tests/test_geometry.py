"""Cell addressing and overlap kernels, checked against brute-force oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sceneryflow import geometry as geo


def mc_ball_fraction(lo, hi, center, r, n=200_000, seed=0):
    """Monte Carlo oracle for the box-ball overlap fraction."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(n, len(lo)))
    return np.mean(np.sum((pts - np.asarray(center)) ** 2, axis=1) <= r * r)


# ---------------------------------------------------------------------------
# addressing


@given(st.integers(1, 4), st.integers(0, 6), st.data())
@settings(max_examples=200, deadline=None)
def test_path_index_roundtrip(d, depth, data):
    path = tuple(
        data.draw(st.integers(0, 2**d - 1), label=f"digit{i}") for i in range(depth)
    )
    idx = geo.path_to_indices(path, d)
    assert geo.indices_to_path(idx, depth, d) == path


@given(st.integers(1, 3), st.integers(1, 8), st.data())
@settings(max_examples=200, deadline=None)
def test_cell_contains_its_center(d, depth, data):
    idx = np.array(
        [data.draw(st.integers(0, 2**depth - 1)) for _ in range(d)], dtype=np.int64
    )
    lo, hi = geo.cell_bounds(idx, depth)
    center = (lo + hi) / 2
    assert np.array_equal(geo.point_to_indices(center, depth), idx)


def test_point_on_shared_face_goes_to_lower_cell():
    # y = 0 is the face between index 1 (upper face) and index 2 at depth 2
    assert geo.point_to_indices(np.array([0.0]), 2)[0] == 1
    assert geo.point_to_indices(np.array([-1.0]), 2)[0] == 0
    assert geo.point_to_indices(np.array([1.0]), 2)[0] == 3
    assert geo.point_to_indices(np.array([-0.5]), 2)[0] == 0


def test_cell_bounds_depth1():
    lo, hi = geo.cell_bounds(np.array([0, 1]), 1)
    assert np.allclose(lo, [-1.0, 0.0])
    assert np.allclose(hi, [0.0, 1.0])


def test_dyadic_cell_object():
    cell = geo.DyadicCell.containing(np.array([-0.5, -0.5]), 1)
    assert cell.path == (0,)
    assert np.allclose(cell.center, [-0.5, -0.5])
    assert cell.contains(np.array([-0.5, -0.5]))
    assert cell.contains(np.array([0.0, 0.0]))  # upper face belongs to it
    assert not cell.contains(np.array([0.1, 0.0]))


# ---------------------------------------------------------------------------
# ball overlap


def test_disk_corner_special_values():
    r = 0.7
    full = geo._disk_corner_area(r, r, r)
    assert np.isclose(full, np.pi * r * r, atol=1e-12)
    half = geo._disk_corner_area(r, 0.0, r)
    assert np.isclose(half, np.pi * r * r / 2, atol=1e-12)
    quadrant = geo._disk_corner_area(0.0, 0.0, r)
    assert np.isclose(quadrant, np.pi * r * r / 4, atol=1e-12)
    assert geo._disk_corner_area(-r, 0.3, r) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_ball_overlap_matches_monte_carlo(d):
    rng = np.random.default_rng(7 + d)
    r = 0.8
    for trial in range(6):
        lo = rng.uniform(-1.0, 0.4, size=d)
        hi = lo + rng.uniform(0.2, 0.6, size=d)
        center = rng.uniform(-0.2, 0.2, size=d)
        got = geo.box_ball_overlap_fraction(lo[None], hi[None], center, r)[0]
        oracle = mc_ball_fraction(lo, hi, center, r, seed=trial)
        assert got == pytest.approx(oracle, abs=5e-3)


def test_ball_overlap_classifies_inside_outside():
    lo = np.array([[0.1, 0.1], [5.0, 5.0]])
    hi = lo + 0.1
    frac = geo.box_ball_overlap_fraction(lo, hi, np.zeros(2), 1.0)
    assert frac[0] == 1.0
    assert frac[1] == 0.0
    assert np.all(geo.box_ball_overlap_fraction(lo, hi, np.zeros(2), 0.0) == 0.0)


def test_ball_overlap_high_dim_sampled():
    d = 5
    lo = -0.2 * np.ones((1, d))
    hi = 0.9 * np.ones((1, d))
    got = geo.box_ball_overlap_fraction(lo, hi, np.zeros(d), 1.0)[0]
    oracle = mc_ball_fraction(lo[0], hi[0], np.zeros(d), 1.0, n=400_000)
    # the frozen 64-point budget carries ~0.06 standard error by design
    assert got == pytest.approx(oracle, abs=0.12)


def test_ball_volume():
    assert geo.ball_volume(2) == pytest.approx(np.pi)
    assert geo.ball_volume(3, 2.0) == pytest.approx(4 / 3 * np.pi * 8)


# ---------------------------------------------------------------------------
# plane sections


def test_axis_line_depth1_lower_cells_carry_length():
    # x-axis in d=2; depth-1 cells. The two lower cells own the segment.
    idx = np.array([[0, 0], [1, 0], [0, 1], [1, 1]])
    lo, hi = geo.cell_bounds(idx, 1)
    frame = np.array([[1.0], [0.0]])
    vol = geo.plane_box_volume(frame, np.zeros(2), lo, hi)
    assert np.allclose(vol, [1.0, 1.0, 0.0, 0.0])


def test_axis_line_offset_copy():
    # line y = 0.5 through cell centers at depth 2
    idx = np.stack(
        np.meshgrid(np.arange(4), np.arange(4), indexing="ij"), axis=-1
    ).reshape(-1, 2)
    lo, hi = geo.cell_bounds(idx, 2)
    vol = geo.axis_plane_box_volume((0,), np.array([0.0, 0.5]), lo, hi)
    rows = idx[vol > 0][:, 1]
    assert set(rows.tolist()) == {2}  # y in (0, 0.5] row owns its upper face
    assert vol.sum() == pytest.approx(2.0)


def test_diagonal_line_volume():
    # 45-degree line through the origin: length sqrt(2) in each lower/upper cell
    frame = np.array([[1.0], [1.0]]) / np.sqrt(2)
    idx = np.array([[0, 0], [1, 1], [1, 0], [0, 1]])
    lo, hi = geo.cell_bounds(idx, 1)
    vol = geo.plane_box_volume(frame, np.zeros(2), lo, hi)
    assert vol[0] == pytest.approx(np.sqrt(2))
    assert vol[1] == pytest.approx(np.sqrt(2))
    assert vol[2] == 0.0
    assert vol[3] == 0.0


def test_general_plane_matches_axis_product_d3():
    # the plane z = 0.25 described by a rotated in-plane frame
    c, s = np.cos(0.3), np.sin(0.3)
    frame = np.array([[c, -s], [s, c], [0.0, 0.0]])
    lo = np.array([-0.5, -0.25, 0.0])
    hi = np.array([0.5, 0.5, 0.5])
    vol = geo.general_plane_box_volume(frame, np.array([0.0, 0.0, 0.25]), lo, hi)
    assert vol == pytest.approx(1.0 * 0.75, rel=1e-9)


def test_line_missing_box_is_zero():
    frame = np.array([[1.0], [0.0]])
    lo = np.array([[0.2, 0.3]])
    hi = np.array([[0.4, 0.6]])
    assert geo.plane_box_volume(frame, np.zeros(2), lo, hi)[0] == 0.0


def test_subcell_offsets_budget():
    for d in (1, 2, 3, 4):
        offs = geo.subcell_offsets(d)
        assert offs.shape == (geo.SUBCELL_POINTS, d)
        assert np.all((offs > 0) & (offs < 1))
