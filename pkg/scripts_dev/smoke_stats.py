"""Smoke checks for stats.py before the test suite."""

import math
import sys

import numpy as np

sys.path.insert(0, "/root/pkg/src")

from sceneryflow.measure import (
    RandomWeightRule,
    build_cascade,
    build_lebesgue,
    build_plane,
)
from sceneryflow.scenery import LOG2, empirical_cp, scenery_at
from sceneryflow.stats import (
    DimensionEstimate,
    EmpiricalDistribution,
    conical_statistic,
    cone_minima_over_flow,
    dimension_of_distribution,
    distribution_distance,
    empirical_td,
    flow_times,
    intensity_measure,
    local_dimension,
    measure_dimension,
    snapshot_box_dimension,
    snapshot_distance,
)

FAILURES = 0


def check(name, ok, detail=""):
    global FAILURES
    print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
    if not ok:
        FAILURES += 1


leb = build_lebesgue(2)
pl = build_plane(2, 1)
casc = build_cascade(RandomWeightRule(seed=3), 2, seed=3)

# flow grid
ts = flow_times(24 * LOG2, LOG2 / 4)
check("flow grid count", len(ts) == 97, f"{len(ts)}")

# empirical_td on Lebesgue: identical entries, weights sum 1.  At the
# origin every view ball stays inside the cube and equality is strict; at
# a generic interior point the t=0 ball clips the cube edge slightly.
e = empirical_td(leb, [0.0, 0.0], 4 * LOG2, dt=LOG2 / 2, m=6)
ref = scenery_at(leb, [0.0, 0.0], 0.0, m=6)
worst = max(float(np.abs(s.grid - ref.grid).max()) for s in e.snapshots)
check("td lebesgue identical", worst < 1e-9, f"worst {worst:.2e}")
check("td weights", abs(float(e.weights.sum()) - 1.0) < 1e-12)
e2 = empirical_td(leb, [0.1, -0.2], 4 * LOG2, dt=LOG2 / 2, m=6)
admissible = [
    s for s in e2.snapshots if math.exp(-s.t) <= 1.0 - 0.2
]
worst = max(snapshot_distance(s, ref) for s in admissible)
check("td lebesgue generic admissible times", worst < 1e-12, f"worst {worst:.2e}")
clipped = max(snapshot_distance(s, ref) for s in e2.snapshots)
check("td lebesgue clipped t=0 stays small", clipped < 0.15, f"worst {clipped:.3f}")

# distances
pls = scenery_at(pl, [0.0, 0.0], 0.0, m=8)
lbs = scenery_at(leb, [0.0, 0.0], 0.0, m=8)
dd = snapshot_distance(lbs, pls)
check("leb-plane snapshot distance > 0.2", dd > 0.2, f"{dd:.4f}")
check("distance identity", snapshot_distance(lbs, lbs) == 0.0)
check(
    "distribution distance sym",
    distribution_distance(e, EmpiricalDistribution(((pls, 1.0),)))
    == distribution_distance(EmpiricalDistribution(((pls, 1.0),)), e),
)
check("distribution identity", distribution_distance(e, e) == 0.0)
mix1 = EmpiricalDistribution(((lbs, 0.5), (pls, 0.5)))
mix2 = EmpiricalDistribution(((pls, 0.5), (lbs, 0.5)))
check("distribution order-free", distribution_distance(mix1, mix2) == 0.0)

# conical statistic: Lebesgue stays out of A_eps, plane lives in it
stat = conical_statistic(leb, [0.0, 0.0], 2 * LOG2, 1, 0.5, 0.1, dt=LOG2 / 2, m=8)
check("conical lebesgue eps=0.1", stat == 1.0, f"{stat}")
for eps in (0.01, 0.1):
    stat = conical_statistic(pl, [0.0, 0.0], 2 * LOG2, 1, 0.5, eps, dt=LOG2 / 2, m=8)
    check(f"conical plane eps={eps}", stat == 0.0, f"{stat}")

_, vals = cone_minima_over_flow(leb, [0.0, 0.0], 2 * LOG2, 1, 0.5, dt=LOG2 / 2, m=8)
check(
    "lebesgue minima near 1/3",
    float(np.abs(vals - 1 / 3).max()) < 5e-3,
    f"max dev {float(np.abs(vals - 1/3).max()):.2e}",
)

# local dimension
est = local_dimension(leb, [0.1, 0.1], 0.01, 0.64)
check("leb local dim", abs(est.slope - 2.0) < 0.02, f"{est.slope:.4f}")
est = local_dimension(pl, [0.3, 0.0], 0.01, 0.64)
check("plane local dim", abs(est.slope - 1.0) < 0.02, f"{est.slope:.4f}")
check("estimate carries data", len(est.radii) == len(est.log_masses) >= 2)

agg = measure_dimension(leb, n_points=10, r_min=0.01, r_max=0.25, seed=1)
check("aggregate leb", abs(agg.slope - 2.0) < 0.05, f"{agg.slope:.4f}")
check("aggregate points", len(agg.points) == 10)

# box dimension and distribution dimension
bd = snapshot_box_dimension(lbs)
check("box dim leb ~2", 1.85 < bd <= 2.0, f"{bd:.3f}")
bd = snapshot_box_dimension(pls)
check("box dim plane ~1", 0.9 < bd < 1.1, f"{bd:.3f}")
mix = EmpiricalDistribution(((lbs, 0.5), (pls, 0.5)))
val = dimension_of_distribution(mix, dim_oracle=lambda s: 2.0 if s is lbs else 1.0)
check("dim of distribution mix", val == 1.5, f"{val}")
val = dimension_of_distribution(e, dim_oracle=lambda s: 2.0)
check("dim of distribution const", abs(val - 2.0) < 1e-12, f"{val}")

# empirical_cp integration (lazy import resolved) and intensity
orbit = empirical_cp(leb, [0.3, 0.7], 6, m=4)
check("cp orbit weights", abs(float(orbit.weights.sum()) - 1.0) < 1e-12)
vals = [intensity_measure(orbit, (c,)) for c in range(4)]
check(
    "cp lebesgue intensity depth-1",
    max(abs(v - 0.25) for v in vals) < 1e-9,
    f"{vals}",
)
cell_vals = [intensity_measure(orbit, (a, b)) for a in range(4) for b in range(4)]
check(
    "cp lebesgue intensity depth-2",
    max(abs(v - 1 / 16) for v in cell_vals) < 1e-3,
    f"max dev {max(abs(v - 1/16) for v in cell_vals):.2e}",
)

# cascade orbit: truncation never triggers for positive rules; entries count
orbit = empirical_cp(casc, [0.2, -0.4], 5, m=5)
check("cp cascade entries", len(orbit.entries) == 5)

print()
print("failures:", FAILURES)
sys.exit(1 if FAILURES else 0)
