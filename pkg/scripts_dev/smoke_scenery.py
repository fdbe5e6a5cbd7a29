"""Smoke checks for scenery.py semantics before the test suite."""

import math
import sys

import numpy as np

sys.path.insert(0, "/root/pkg/src")

from sceneryflow.measure import (
    DyadicMeasure,
    RandomWeightRule,
    SubsetRule,
    ball_mass,
    build_cascade,
    build_lebesgue,
    build_plane,
)
from sceneryflow.scenery import (
    LOG2,
    MeasurePoint,
    Snapshot,
    cp_magnify,
    magnify,
    orbit_snapshot,
    scenery_at,
    scenery_sequence,
    snapshot_from_csv,
    snapshot_to_csv,
    translate,
)

LOG = math.log


def check(name, ok, detail=""):
    print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
    if not ok:
        global FAILURES
        FAILURES += 1


FAILURES = 0

# 1. Lebesgue homogeneity: scenery at interior x, admissible t (ball in cube),
# equals the origin t=0 snapshot
leb = build_lebesgue(2)
base = scenery_at(leb, [0.0, 0.0], 0.0, m=8)
for t in [0.3, LOG2, 1.7, 3 * LOG2, 5.0]:
    s = scenery_at(leb, [0.1875, -0.25], t, m=8)
    err = np.abs(s.grid - base.grid).max()
    check(f"lebesgue homogeneity t={t:.3f}", err < 1e-9, f"max cell err {err:.2e}")

# 2. plane measure invariance (d=2, x-axis line)
pl = build_plane(2, 1)
pbase = scenery_at(pl, [0.0, 0.0], 0.0, m=8)
for t in [0.45, LOG2, 2.2]:
    s = scenery_at(pl, [0.0, 0.0], t, m=8)
    err = np.abs(s.grid - pbase.grid).max()
    check(f"plane invariance t={t:.3f}", err < 1e-9, f"max cell err {err:.2e}")

# 3. corner cascade fixed point: subset {0} cascade, x = (-1,-1), t = n log2
corner = build_cascade(SubsetRule(children=(0,)), 2)
snaps = [scenery_at(corner, [-1.0, -1.0], n * LOG2, m=6) for n in range(0, 4)]
errs = [np.abs(s.grid - snaps[0].grid).max() for s in snaps[1:]]
check("corner cascade fixed point", max(errs) == 0.0, f"errs {errs}")

# 4. semigroup at dyadic times on a frozen random cascade
rng_rule = RandomWeightRule(seed=7)
casc = build_cascade(rng_rule, 2, seed=7)
casc.refine_to_depth(5)
frozen = DyadicMeasure(d=2, masses=dict(casc.masses), rule=None, kind="frozen")
worst = 0.0
for j, jp in [(0, 1), (1, 1), (1, 2), (2, 1), (0, 3), (3, 0)]:
    lhs = scenery_at(frozen, [0.0, 0.0], (j + jp) * LOG2, m=8)
    rhs = magnify(scenery_at(frozen, [0.0, 0.0], j * LOG2, m=8), jp * LOG2)
    worst = max(worst, float(np.abs(lhs.grid - rhs.grid).max()))
check("dyadic semigroup exact (frozen cascade)", worst < 1e-15, f"worst {worst:.2e}")

# 4b. semigroup within tolerance at non-dyadic times
worst = 0.0
for t, tp in [(0.37, 0.55), (0.9, 1.3), (1.1, 0.2)]:
    lhs = scenery_at(leb, [0.0, 0.0], t + tp, m=8)
    rhs = magnify(scenery_at(leb, [0.0, 0.0], t, m=8), tp)
    worst = max(worst, float(np.abs(lhs.grid - rhs.grid).sum()) / 2)
check("non-dyadic semigroup (lebesgue, TV)", worst < 1e-9, f"worst TV {worst:.2e}")

worst = 0.0
for t, tp in [(0.37, 0.55), (0.9, 0.43)]:
    lhs = scenery_at(casc, [0.0, 0.0], t + tp, m=8)
    rhs = magnify(scenery_at(casc, [0.0, 0.0], t, m=8), tp)
    worst = max(worst, float(np.abs(lhs.grid - rhs.grid).sum()) / 2)
check("non-dyadic semigroup (cascade, TV)", worst < 0.35, f"worst TV {worst:.3f}")

# 5. translate: identity, invariance, composition
t0 = translate(leb, [0.0, 0.0])
check("translate identity", t0.masses == leb.masses and t0.rule is leb.rule)
tr = translate(leb, [0.25, -0.125])
a = ball_mass(tr, [0.0, 0.0], 0.4)
b = ball_mass(leb, [0.25, -0.125], 0.4)
check("translate lebesgue ball mass", abs(a - b) < 1e-9, f"{a:.6f} vs {b:.6f}")

t1 = translate(translate(casc, [0.25, 0.0]), [0.0, -0.375])
t2 = translate(casc, [0.25, -0.375])
a = ball_mass(t1, [0.1, 0.1], 0.3)
b = ball_mass(t2, [0.1, 0.1], 0.3)
check("translate composition (dyadic)", abs(a - b) < 1e-9, f"{a:.6f} vs {b:.6f}")

# 6. t=0 consistency: scenery_at(mu, x, 0) vs translate-restrict-normalise;
# exact at dyadic x, one overlap-policy error apart at generic x
lhs = scenery_at(casc, [0.25, -0.5], 0.0, m=6)
rhs = magnify(translate(casc, [0.25, -0.5]), 0.0, m=6)
tv = float(np.abs(lhs.grid - rhs.grid).sum()) / 2
check("t=0 consistency dyadic x", tv < 1e-12, f"TV {tv:.2e}")
lhs = scenery_at(casc, [0.2, 0.33], 0.0, m=6)
rhs = magnify(translate(casc, [0.2, 0.33]), 0.0, m=6)
tv = float(np.abs(lhs.grid - rhs.grid).sum()) / 2
check("t=0 consistency generic x", tv < 0.2, f"TV {tv:.4f}")

# 7. cp chain: Lebesgue fixed point
mp = MeasurePoint(measure=build_lebesgue(2), point=(-0.5, -0.5))
nxt = cp_magnify(mp)
check("cp lebesgue point", nxt.point == (0.0, 0.0), f"{nxt.point}")
g0 = orbit_snapshot(mp.measure, 4).grid
g1 = orbit_snapshot(nxt.measure, 4).grid
check("cp lebesgue measure", float(np.abs(g1 - g0).max()) < 1e-12)

# 7b. cp digit tracking: x = (-0.3, 0.6) in d=2; digits from base-2 expansion
xx = np.array([-0.3, 0.6])
mpd = MeasurePoint(measure=build_lebesgue(2), point=tuple(xx))
pts = [np.array(mpd.point)]
for _ in range(5):
    mpd = cp_magnify(mpd)
    pts.append(np.array(mpd.point))
ok = True
z = xx.copy()
for kk in range(1, 6):
    bits = z > 0
    z = 2 * z - (2 * bits.astype(float) - 1)
    if np.abs(z - pts[kk]).max() > 1e-12:
        ok = False
check("cp digit tracking", ok)

# 7c. cp on rule-backed cascade composes ShiftedRule and stays normalised
mpc = MeasurePoint(measure=build_cascade(rng_rule, 2, seed=7), point=(0.3, -0.2))
for _ in range(6):
    mpc = cp_magnify(mpc)
check("cp cascade normalised", abs(mpc.measure.total_mass - 1.0) < 1e-9)
snap_deep = orbit_snapshot(mpc.measure, 5)
check("cp cascade snapshot", abs(float(snap_deep.grid.sum()) - 1.0) < 1e-9)

# 7d. corner subset cascade: cp orbit is a fixed point, cube snapshots work
mpk = MeasurePoint(measure=build_cascade(SubsetRule(children=(0,)), 2), point=(-1.0, -1.0))
s0 = orbit_snapshot(mpk.measure, 5)
mpk2 = cp_magnify(mpk)
s1 = orbit_snapshot(mpk2.measure, 5)
check(
    "corner cp fixed point (cube support)",
    s0.support == "cube" and float(np.abs(s1.grid - s0.grid).max()) == 0.0,
)

# 8. snapshot CSV roundtrip
s = scenery_at(casc, [0.11, -0.37], 0.9, m=5)
s2 = snapshot_from_csv(snapshot_to_csv(s))
check(
    "csv roundtrip",
    s2.support == "ball"
    and np.array_equal(s2.grid, s.grid)
    and s2.t == s.t
    and np.allclose(s2.x, s.x),
)
sc = orbit_snapshot(mpk.measure, 5)
sc2 = snapshot_from_csv(snapshot_to_csv(sc))
check("csv roundtrip cube", sc2.support == "cube" and np.array_equal(sc2.grid, sc.grid))

# 9. scenery_sequence equals per-time sceneries
times = [0.0, 0.31, 0.9, LOG2, 1.9, 2.3]
seq = scenery_sequence(casc, [0.05, 0.05], times, m=6)
worst = 0.0
for t, s in zip(times, seq):
    ref = scenery_at(casc, [0.05, 0.05], t, m=6)
    worst = max(worst, float(np.abs(ref.grid - s.grid).max()))
check("sequence matches pointwise", worst < 1e-12, f"worst {worst:.2e}")

# 10. errors
from sceneryflow.errors import (
    OutOfDomainError,
    OutsideSupportError,
    ResolutionExhaustedError,
)

try:
    scenery_at(leb, [1.5, 0.0], 0.0)
    check("out of domain raises", False)
except OutOfDomainError:
    check("out of domain raises", True)

try:
    scenery_at(frozen, [0.0, 0.0], 9 * LOG2, m=8)
    check("resolution exhausted raises (frozen too shallow)", False)
except ResolutionExhaustedError:
    check("resolution exhausted raises (frozen too shallow)", True)

try:
    # subset cascade keeps all mass at the lower corner; view ball at (1,1)
    scenery_at(corner, [1.0, 1.0], 2 * LOG2, m=5)
    check("outside support raises", False)
except OutsideSupportError:
    check("outside support raises", True)

print()
print("failures:", FAILURES)
sys.exit(1 if FAILURES else 0)
