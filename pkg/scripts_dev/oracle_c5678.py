"""Re-measure criteria 5-8 quantities with frozen leaf tables (fast reads)."""

import math
import sys
import time

sys.path.insert(0, "src")

import numpy as np
from scipy.stats import chi2

from sceneryflow.cones import Subspace, cone_mass
from sceneryflow.measure import (
    DyadicMeasure,
    RandomWeightRule,
    build_cascade,
    build_lebesgue,
    build_plane,
    sample_points,
)
from sceneryflow.rectify import PointCloud, vacancy_survey
from sceneryflow.scenery import (
    MeasurePoint,
    cp_magnify,
    magnify,
    orbit_snapshot,
    scenery_at,
)
from sceneryflow.stats import snapshot_box_dimension

LOG2 = math.log(2.0)
ORIGIN = np.zeros(2)


def frozen_cascade(seed, depth):
    src = build_cascade(RandomWeightRule(seed=seed), 2, seed=seed)
    src.refine_to_depth(depth)
    return DyadicMeasure(d=2, masses=dict(src.masses), rule=None, kind="frozen")


def tv(a, b):
    return 0.5 * float(np.abs(a - b).sum())


def coarsen2(grid):
    n = grid.shape[0] // 2
    return grid.reshape(n, 2, n, 2).sum(axis=(1, 3))


t0 = time.time()

print("== c5 dyadic: frozen leaf tables ==")
t1 = time.time()
worst_pair = 0.0
worst_direct = 0.0
for seed in range(100):
    mu = frozen_cascade(seed, 6)
    j, jp = (1, 1) if seed % 2 == 0 else (1, 2)
    s0 = scenery_at(mu, ORIGIN, 0.0, m=6)
    once = magnify(s0, (j + jp) * LOG2)
    twice = magnify(magnify(s0, j * LOG2), jp * LOG2)
    direct = scenery_at(mu, ORIGIN, (j + jp) * LOG2, m=6)
    worst_pair = max(worst_pair, float(np.abs(once.grid - twice.grid).max()))
    worst_direct = max(worst_direct, float(np.abs(twice.grid - direct.grid).max()))
print(f"  once-vs-twice max = {worst_pair!r}")
print(f"  twice-vs-direct max = {worst_direct!r}  ({time.time() - t1:.1f}s)")

print("== c5 non-dyadic: gap vs refinement-increment bound (m=6) ==")
t1 = time.time()
rng = np.random.default_rng(7)
gaps, bounds, ratios = [], [], []
for trial in range(100):
    mu = frozen_cascade(1000 + trial, 8)
    t, tp = rng.uniform(0.15, 0.65, size=2)
    s_m = scenery_at(mu, ORIGIN, t, m=6)
    s_m1 = scenery_at(mu, ORIGIN, t, m=7)
    two_step = magnify(s_m, tp)
    finer = coarsen2(magnify(s_m1, tp).grid)
    bound = tv(two_step.grid, finer)
    one_shot = scenery_at(mu, ORIGIN, t + tp, m=6)
    gap = tv(two_step.grid, one_shot.grid)
    gaps.append(gap)
    bounds.append(bound)
    ratios.append(gap / bound if bound > 1e-15 else (np.inf if gap > 1e-12 else 0.0))
ratios = np.array(ratios)
print(f"  ({time.time() - t1:.1f}s)")
print(f"  gap   min/med/max = {np.min(gaps):.4f} {np.median(gaps):.4f} "
      f"{np.max(gaps):.4f}")
print(f"  bound min/med/max = {np.min(bounds):.4f} {np.median(bounds):.4f} "
      f"{np.max(bounds):.4f}")
print(f"  ratio med/p90/max = {np.median(ratios):.3f} "
      f"{np.percentile(ratios, 90):.3f} {np.max(ratios):.3f}")
print(f"  pairs over 3x: {int(np.sum(ratios > 3.0))}")

print("== c6: CP fixed point and adaptedness ==")
leb = build_lebesgue(2)
worst = 0.0
for x in ([-0.5, -0.5], [0.3, 0.7], [0.1, -0.9]):
    mp = MeasurePoint(measure=leb, point=tuple(x))
    nxt = cp_magnify(mp)
    g0 = orbit_snapshot(mp.measure, 6).grid
    g1 = orbit_snapshot(nxt.measure, 6).grid
    worst = max(worst, float(np.abs(g1 - g0).max()))
print(f"  lebesgue fixed point max |diff| = {worst!r}")

mu = build_cascade(RandomWeightRule(seed=42), 2)
n = 100_000
pts = sample_points(mu, n, 8, seed=0)


def digits2(xs):
    b1 = (xs > 0.0).astype(np.int64)
    ys = 2.0 * xs - (2.0 * b1 - 1.0)
    b2 = (ys > 0.0).astype(np.int64)
    idx = 2 * b1 + b2
    return idx[:, 0] * 4 + idx[:, 1]


cells = digits2(pts)
mu_spot = frozen_cascade(42, 4)
ok = 0
for x in pts[:50]:
    mp = MeasurePoint(measure=mu_spot, point=tuple(x))
    d1 = sum((1 << j) for j in range(2) if x[j] > 0.0)
    step = cp_magnify(mp)
    y = np.array(step.point)
    d2 = sum((1 << j) for j in range(2) if y[j] > 0.0)
    ix = 2 * ((d1 >> 0) & 1) + ((d2 >> 0) & 1)
    iy = 2 * ((d1 >> 1) & 1) + ((d2 >> 1) & 1)
    ok += int(digits2(x[None, :])[0] == ix * 4 + iy)
print(f"  digit spot-check vs cp_magnify: {ok}/50 agree")

w2 = mu.window_masses(2, np.zeros(2, dtype=np.int64), (4, 4))
expected = np.array([n * w2[ix, iy] for ix in range(4) for iy in range(4)])
observed = np.bincount(cells, minlength=16).astype(float)
keep = expected > 0
stat = float(((observed[keep] - expected[keep]) ** 2 / expected[keep]).sum())
p = float(chi2.sf(stat, df=int(keep.sum()) - 1))
print(f"  adaptedness chi2 stat={stat:.2f} df={int(keep.sum()) - 1} p={p:.4f}")

print("== c7: vacancy at r = 10 steps ==")
t1 = time.time()
step = 2.0 / 32.0
ax = np.linspace(-1.0, 1.0, 33)
gx, gy = np.meshgrid(ax, ax, indexing="ij")
grid_pts = np.column_stack([gx.ravel(), gy.ravel()])
E = PointCloud(2, grid_pts)
print(f"  r_min = {E.r_min:.4f}  r = 10h = {10 * step:.4f}")
interior = [
    i for i, p in enumerate(grid_pts)
    if np.max(np.abs(p)) <= 1.0 - 10 * step + 1e-12
]
print(f"  interior points: {len(interior)}")
thetas = np.arange(720) * math.pi / 720.0
normals = np.stack([-np.sin(thetas), np.cos(thetas)], axis=1)
worst_margin = 0.0
for i in interior:
    y = grid_pts - grid_pts[i]
    nrm = np.linalg.norm(y, axis=1)
    keep = (nrm > 0.0) & (nrm <= 10 * step)
    units = y[keep] / nrm[keep, None]
    margins = np.abs(units @ normals.T).min(axis=0)
    worst_margin = max(worst_margin, float(margins.max()))
print(f"  720-net max margin over interior = {worst_margin:.4f} "
      f"({time.time() - t1:.1f}s)")
t1 = time.time()
survey = vacancy_survey(E, 1, 0.9, r=10 * step)
inter_frac = float(np.mean([survey["verdicts"][i] for i in interior]))
print(f"  survey interior vacancy fraction = {inter_frac} "
      f"(full fraction {survey['fraction']:.4f}, {time.time() - t1:.1f}s)")

line_pts = np.column_stack([np.linspace(-0.9, 0.9, 100), np.zeros(100)])
sv = vacancy_survey(PointCloud(2, line_pts), 1, 0.9)
print(f"  collinear fraction = {sv['fraction']}")

plane = build_plane(2, 1)
snap_p = scenery_at(plane, ORIGIN, 0.0, m=8)
print(f"  plane box slope = {snapshot_box_dimension(snap_p):.4f}")

print("== c8 spot: alpha monotonicity violations ==")
rng = np.random.default_rng(3)
viol = 0
t1 = time.time()
for c in range(200):
    mu = frozen_cascade(2000 + c, 5)
    snap = scenery_at(mu, ORIGIN, 0.0, m=5)
    v = Subspace.line_at_angle(rng.uniform(0.0, math.pi))
    a1 = rng.uniform(0.05, 0.95)
    a2 = rng.uniform(a1, 1.0)
    if cone_mass(snap, v, a1) > cone_mass(snap, v, a2) + 1e-12:
        viol += 1
print(f"  violations: {viol}/200 ({time.time() - t1:.1f}s)")

print(f"TOTAL {time.time() - t0:.1f}s")
