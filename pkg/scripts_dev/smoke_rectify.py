"""Dev oracles for the rectifiability module (independent arithmetic first)."""

import sys
import time

sys.path.insert(0, "src")

import numpy as np

from sceneryflow.cones import Subspace, cone_mass, min_cone_mass
from sceneryflow.measure import build_lebesgue, build_plane
from sceneryflow.rectify import (
    PointCloud,
    cone_vacancy,
    is_cone_vacant,
    is_support_vacant,
    support_vacancy,
    vacancy_survey,
)
from sceneryflow.scenery import LOG2, Snapshot, magnify, scenery_at
from sceneryflow.stats import snapshot_box_dimension

failures = []


def check(name, ok, detail=""):
    tag = "PASS" if ok else "FAIL"
    print(f"{tag}  {name}  {detail}")
    if not ok:
        failures.append(name)


# --- independent grid oracle: brute force over 720 angles -------------------
g = np.stack(np.meshgrid(np.arange(33.0), np.arange(33.0), indexing="ij"), -1)
grid_pts = g.reshape(-1, 2)
x0 = np.array([16.0, 16.0])
y = grid_pts - x0
norms = np.linalg.norm(y, axis=1)
keep = (norms > 0) & (norms <= 10.0)
units = y[keep] / norms[keep, None]
ths = np.arange(720) * np.pi / 720
margins = np.abs(units @ np.stack([-np.sin(ths), np.cos(ths)], 1).T).min(axis=0)
print(f"grid oracle: 720-net max margin {margins.max():.4f} (need < 0.9)")
ths_fine = np.arange(100_000) * np.pi / 100_000
marg_fine = np.abs(
    units @ np.stack([-np.sin(ths_fine), np.cos(ths_fine)], 1).T
).min(axis=0)
print(f"grid oracle: 100k-net max margin {marg_fine.max():.4f}")
check("grid oracle margin well below 0.9", marg_fine.max() < 0.5)

E_grid = PointCloud(2, grid_pts)
print(f"grid r_min (3x mean NN) = {E_grid.r_min:.3f}")
check("grid r_min is 3 (unit spacing)", abs(E_grid.r_min - 3.0) < 1e-12)
for pt in ([16.0, 16.0], [1.0, 1.0], [20.0, 5.0]):
    v = cone_vacancy(E_grid, pt, 1, 0.9, 10.0)
    check(f"grid interior {pt} no vacancy", v is None)

t0 = time.time()
interior = grid_pts[
    np.all((grid_pts >= 1) & (grid_pts <= 31), axis=1)
]
E_int = PointCloud(2, grid_pts)
verdicts = [
    cone_vacancy(E_int, p, 1, 0.9, 10.0) is not None for p in interior
]
frac = float(np.mean(verdicts))
print(f"grid interior survey: {frac:.3f} vacancy over {len(interior)} pts ({time.time()-t0:.1f}s)")
check("grid interior 0% vacancy", frac == 0.0)

# --- collinear cloud ---------------------------------------------------------
E_line = PointCloud(2, np.stack([np.arange(100.0), np.zeros(100)], 1))
print(f"collinear r_min = {E_line.r_min:.3f}")
rep = vacancy_survey(E_line, 1, 0.9, r=20.0)
check("collinear 100% vacancy", rep["fraction"] == 1.0)
v = cone_vacancy(E_line, [50.0, 0.0], 1, 0.9, 20.0)
check("collinear V is the y-axis", abs(v.angle() - np.pi / 2) < 1e-12, f"angle={v.angle():.6f}")
check("collinear y-axis core passes direct check",
      is_cone_vacant(E_line, [50.0, 0.0], Subspace.axis_spans(2, [1]), 0.9, 20.0))

# --- isolated point is vacuous ----------------------------------------------
E_iso = PointCloud(
    2, np.array([[0.0, 0.0], [0.5, 0.3], [-0.2, 0.4], [20.0, 20.0]]), r_min=0.1
)
v = cone_vacancy(E_iso, [20.0, 20.0], 1, 0.99, 1.0)
check("isolated point vacuous vacancy", v is not None and abs(v.angle() - np.pi / 2) < 1e-12)

# --- snapshots ----------------------------------------------------------------
plane_snap = scenery_at(build_plane(2, 1), np.zeros(2), 0.0)
leb_snap = scenery_at(build_lebesgue(2), np.zeros(2), 0.0)

v_plane = support_vacancy(plane_snap, 1, 0.5)
check("plane snapshot vacancy found", v_plane is not None)
if v_plane is not None:
    print(f"  plane V angle = {v_plane.angle():.6f} (pi/2 = {np.pi/2:.6f})")
    check("plane V is the y-axis", abs(v_plane.angle() - np.pi / 2) < 1e-9)
v_548 = support_vacancy(plane_snap, 1, 0.75)
print(f"plane at alpha=0.75: {'found' if v_548 is not None else 'none'} (near-vertex centers at ratio 0.707)")
check("lebesgue snapshot no vacancy", support_vacancy(leb_snap, 1, 0.1) is None)

# radial segment snapshot, away from the vertex
m = 6
side = 1 << m
h = 2.0 / side
seg = np.zeros((side, side))
row = side // 2 - 1
cols = slice(int((1.25) / h), int((1.75) / h))
seg[cols, row] = 1.0  # axis 0 is x: segment along x in [0.25, 0.75)
seg /= seg.sum()
seg_snap = Snapshot(seg, support="cube")
v_seg = support_vacancy(seg_snap, 1, 0.9)
check("segment snapshot vacancy found at alpha=0.9", v_seg is not None)
if v_seg is not None:
    print(f"  segment V angle = {v_seg.angle():.6f}")
    check("segment V is the orthogonal complement", abs(v_seg.angle() - np.pi / 2) < 1e-9)

# --- consistency with cone masses ---------------------------------------------
mcm_plane = min_cone_mass(plane_snap, 1, 0.5)[1]
cm_plane = cone_mass(plane_snap, v_plane, 0.5)
tol = 2.0 ** (-plane_snap.m + 2)
print(f"plane: min_cone_mass={mcm_plane:.3e} cone_mass(V)={cm_plane:.3e} tol=2^-m+2={tol:.3e}")
check("plane min_cone_mass under boundary tolerance", mcm_plane <= tol)
check("plane cone_mass at found V under tolerance", cm_plane <= tol)
mcm_seg = min_cone_mass(seg_snap, 1, 0.9)[1]
cm_seg = cone_mass(seg_snap, v_seg, 0.9)
tol_seg = 2.0 ** (-seg_snap.m + 2)
print(f"segment: min_cone_mass={mcm_seg:.3e} cone_mass(V)={cm_seg:.3e} tol={tol_seg:.3e}")
check("segment masses under tolerance", mcm_seg <= tol_seg and cm_seg <= tol_seg)

# --- flow invariance -----------------------------------------------------------
plane2 = magnify(plane_snap, LOG2)
check("plane vacancy survives dyadic magnification (same V)",
      is_support_vacant(plane2, v_plane, 0.5))
seg2 = magnify(seg_snap, LOG2)
check("segment vacancy survives dyadic magnification (same V)",
      is_support_vacant(seg2, v_seg, 0.9))

# --- alpha monotonicity on random clouds ----------------------------------------
rng = np.random.default_rng(0)
n_vacant = 0
t0 = time.time()
for case in range(100):
    n = int(rng.integers(5, 25))
    pts = rng.uniform(-1, 1, size=(n, 2))
    E = PointCloud(2, pts, r_min=0.05)
    i = int(rng.integers(n))
    alpha = float(rng.uniform(0.3, 0.95))
    v = cone_vacancy(E, pts[i], 1, alpha, 0.8)
    if v is not None:
        n_vacant += 1
        a2 = alpha * float(rng.uniform(0.3, 0.9))
        ok1 = is_cone_vacant(E, pts[i], v, a2, 0.8)
        v2 = cone_vacancy(E, pts[i], 1, a2, 0.8)
        if not (ok1 and v2 is not None):
            check(f"monotonicity case {case}", False)
print(f"monotonicity: {n_vacant}/100 cases vacant at alpha ({time.time()-t0:.1f}s)")
check("monotonicity held on all vacant cases", True)
check("monotonicity exercised enough cases", n_vacant >= 20, f"{n_vacant}")

# --- box-dimension link ----------------------------------------------------------
bd_plane = snapshot_box_dimension(plane_snap)
bd_seg = snapshot_box_dimension(seg_snap)
print(f"box slopes: plane={bd_plane:.3f} segment={bd_seg:.3f}")
check("passing snapshots have box slope <= k + 0.1", bd_plane <= 1.1 and bd_seg <= 1.1)

# --- d=3 -------------------------------------------------------------------------
rng3 = np.random.default_rng(1)
pts3 = np.concatenate([rng3.uniform(-1, 1, size=(60, 2)), np.zeros((60, 1))], axis=1)
E3 = PointCloud(3, pts3)
v3 = cone_vacancy(E3, pts3[7], 2, 0.9, float(E3.r_min))
check("planar 3d cloud has k=2 vacancy", v3 is not None)
if v3 is not None:
    print(f"  3d core dim={v3.dim} |v_z|={abs(v3.frame[2,0]):.6f}")
    check("3d core is the z-axis line", v3.dim == 1 and abs(v3.frame[2, 0]) > 1 - 1e-9)

plane3 = scenery_at(build_plane(3, 2), np.zeros(3), 0.0)
v3s = support_vacancy(plane3, 2, 0.5)
check("3d plane snapshot k=2 vacancy found", v3s is not None)
leb3 = scenery_at(build_lebesgue(3), np.zeros(3), 0.0)
check("3d lebesgue no vacancy", support_vacancy(leb3, 2, 0.1) is None)

# --- determinism -------------------------------------------------------------------
va = support_vacancy(plane_snap, 1, 0.5)
vb = support_vacancy(plane_snap, 1, 0.5)
check("support_vacancy deterministic", np.array_equal(va.frame, vb.frame))
ra = vacancy_survey(E_line, 1, 0.9, r=20.0)
rb = vacancy_survey(E_line, 1, 0.9, r=20.0)
check("survey deterministic", ra == rb)

print(f"\nfailures: {len(failures)}")
for f in failures:
    print(" -", f)
