"""Measure every quantity the acceptance tests will pin, before writing them."""

import math
import sys
import time

sys.path.insert(0, "src")

import numpy as np
from scipy.stats import chi2

from sceneryflow.cones import (
    Subspace,
    cone_mass,
    epsilon_critical,
    epsilon_critical_mc,
    min_cone_mass,
)
from sceneryflow.measure import (
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
from sceneryflow.splice import build_spliced, schedule_for_theta
from sceneryflow.stats import (
    cone_minima_over_flow,
    measure_dimension,
    snapshot_box_dimension,
)

LOG2 = math.log(2.0)
ORIGIN = np.zeros(2)


def tv(a, b):
    return 0.5 * float(np.abs(a - b).sum())


def coarsen2(grid):
    n = grid.shape[0] // 2
    return grid.reshape(n, 2, n, 2).sum(axis=(1, 3))


t0 = time.time()

print("== c2: threshold ==")
v = epsilon_critical(2, 1, 0.5)
print(f"  quadrature(2,1,0.5) = {v!r}  analytic 1/3, in [0.331,0.335]: "
      f"{0.331 <= v <= 0.335}")
print(f"  analytic (2/pi)asin(0.5) = {2.0 / math.pi * math.asin(0.5)!r}")
print(f"  quadrature(2,1,1) = {epsilon_critical(2, 1, 1.0)!r}")
mc, err = epsilon_critical_mc(2, 1, 0.5, n=1_000_000, seed=0)
print(f"  mc 1e6 = {mc:.6f} +- {err:.6f}  dev/sigma = {abs(mc - 1/3)/err:.2f}")

print("== c3: degenerate statistics (T=24 log2, m=8) ==")
T, dt = 24 * LOG2, LOG2 / 4
plane = build_plane(2, 1)
leb = build_lebesgue(2)
t1 = time.time()
_, vals_p = cone_minima_over_flow(plane, ORIGIN, T, 1, 0.5, dt=dt)
print(f"  plane sweep {time.time() - t1:.1f}s  min={vals_p.min():.3e} "
      f"max={vals_p.max():.3e}")
for eps in (0.01, 0.1):
    print(f"  plane statistic eps={eps}: {float(np.mean(vals_p > eps))}")
_, vals_l = cone_minima_over_flow(leb, ORIGIN, T, 1, 0.5, dt=dt)
print(f"  lebesgue min={vals_l.min():.4f} max={vals_l.max():.4f} "
      f"statistic eps=0.1: {float(np.mean(vals_l > 0.1))}")
print(f"  cell-boundary tol 2^-6 = {2.0 ** -6}")

print("== c4: dimensions at 50 points ==")
t1 = time.time()
est = measure_dimension(leb, n_points=50, seed=0)
print(f"  lebesgue mean={np.mean(est.points):.4f} ({time.time() - t1:.1f}s)")
t1 = time.time()
est = measure_dimension(plane, n_points=50, seed=0)
print(f"  plane mean={np.mean(est.points):.4f} min={min(est.points):.3f} "
      f"max={max(est.points):.3f} ({time.time() - t1:.1f}s)")
t1 = time.time()
spl = build_spliced(2, 1, schedule=schedule_for_theta(0.5, 48, growth=48),
                    depth=48, seed=0)
est = measure_dimension(spl, n_points=50, r_min=2.0 ** -45, r_max=0.25,
                        seed=0, sample_depth=48)
print(f"  spliced mean={np.mean(est.points):.4f} sd={np.std(est.points):.4f} "
      f"({time.time() - t1:.1f}s)")

print("== c5: semigroup ==")
t1 = time.time()
worst = 0.0
for seed in range(100):
    mu = build_cascade(RandomWeightRule(seed=seed), 2)
    j, jp = (1, 1) if seed % 2 == 0 else (1, 2)
    s0 = scenery_at(mu, ORIGIN, 0.0, m=6)
    twice = magnify(magnify(s0, j * LOG2), jp * LOG2)
    direct = scenery_at(mu, ORIGIN, (j + jp) * LOG2, m=6)
    worst = max(worst, float(np.abs(twice.grid - direct.grid).max()))
print(f"  dyadic: max |diff| over 100 cascades = {worst!r} "
      f"({time.time() - t1:.1f}s)")

t1 = time.time()
rng = np.random.default_rng(7)
ratios, bounds, gaps = [], [], []
for trial in range(100):
    mu = build_cascade(RandomWeightRule(seed=1000 + trial), 2)
    t, tp = rng.uniform(0.15, 0.65, size=2)
    s_m = scenery_at(mu, ORIGIN, t, m=8)
    s_m1 = scenery_at(mu, ORIGIN, t, m=9)
    two_step = magnify(s_m, tp)
    finer = coarsen2(magnify(s_m1, tp).grid)
    bound = tv(two_step.grid, finer)
    one_shot = scenery_at(mu, ORIGIN, t + tp, m=8)
    gap = tv(two_step.grid, one_shot.grid)
    bounds.append(bound)
    gaps.append(gap)
    ratios.append(gap / bound if bound > 1e-15 else np.inf if gap > 1e-12 else 0.0)
ratios = np.array(ratios)
print(f"  non-dyadic over 100 pairs ({time.time() - t1:.1f}s):")
print(f"    gap   min/med/max = {np.min(gaps):.4f} {np.median(gaps):.4f} "
      f"{np.max(gaps):.4f}")
print(f"    bound min/med/max = {np.min(bounds):.4f} {np.median(bounds):.4f} "
      f"{np.max(bounds):.4f}")
print(f"    ratio med/p90/max = {np.median(ratios):.3f} "
      f"{np.percentile(ratios, 90):.3f} {np.max(ratios):.3f}")
print(f"    pairs over 3x: {int(np.sum(ratios > 3.0))}")

print("== c6: CP fixed point and adaptedness ==")
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
    idx = 2 * b1 + b2  # per-axis index at depth 2, upper-bit first
    return idx[:, 0] * 4 + idx[:, 1], ys


cells, _ = digits2(pts)
# spot-check the vectorized digit rule against the real chain
for x in pts[:50]:
    mp = MeasurePoint(measure=mu, point=tuple(x))
    d1 = sum((1 << j) for j in range(2) if x[j] > 0.0)
    step = cp_magnify(mp)
    y = np.array(step.point)
    d2 = sum((1 << j) for j in range(2) if y[j] > 0.0)
    ix = 2 * ((d1 >> 0) & 1) + ((d2 >> 0) & 1)
    iy = 2 * ((d1 >> 1) & 1) + ((d2 >> 1) & 1)
    want = ix * 4 + iy
    got, _ = digits2(x[None, :])
    assert got[0] == want, (x, got[0], want)
print("  digit spot-check vs cp_magnify: 50/50 agree")

w2 = mu.window_masses(2, np.zeros(2, dtype=np.int64), (4, 4))
expected = np.array(
    [n * w2[ix, iy] for ix in range(4) for iy in range(4)]
)
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
# exhaustive 720-angle oracle for the best achievable margin
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

print("== c7: box slopes of support-vacant snapshots ==")
snap_p = scenery_at(plane, ORIGIN, 0.0, m=8)
print(f"  plane slope = {snapshot_box_dimension(snap_p):.4f}")

print("== c8 spot: alpha monotonicity violations ==")
rng = np.random.default_rng(3)
viol = 0
for c in range(200):
    mu = build_cascade(RandomWeightRule(seed=2000 + c), 2)
    snap = scenery_at(mu, ORIGIN, 0.0, m=6)
    v = Subspace.line_at_angle(rng.uniform(0.0, math.pi))
    a1 = rng.uniform(0.05, 0.95)
    a2 = rng.uniform(a1, 1.0)
    if cone_mass(snap, v, a1) > cone_mass(snap, v, a2) + 1e-12:
        viol += 1
print(f"  violations: {viol}/200")

print(f"TOTAL {time.time() - t0:.1f}s")
