"""Dev smoke for splice.py: degenerate regimes, frequency, sceneries, dims."""

import math
import sys
import tempfile

import numpy as np

sys.path.insert(0, "src")

from sceneryflow.measure import (
    build_lebesgue,
    build_plane,
    load_measure,
    sample_points,
    save_measure,
)
from sceneryflow.scenery import LOG2, scenery_at
from sceneryflow.splice import SpliceSchedule, build_spliced, schedule_for_theta
from sceneryflow.stats import (
    conical_statistic,
    local_dimension,
    measure_dimension,
    snapshot_distance,
)

failures = 0


def check(name, ok, detail=""):
    global failures
    tag = "PASS" if ok else "FAIL"
    if not ok:
        failures += 1
    print(f"{tag}  {name}  {detail}")


# --- schedule arithmetic -----------------------------------------------------
sch = schedule_for_theta(0.5, 48, growth=4)
freq = sch.running_frequency(48)
check("freq(48) within 0.05 of 0.5", abs(freq[-1] - 0.5) <= 0.05, f"{freq[-1]:.4f}")
rep = sch.frequency_report(200)
check("frequency report within bound", rep["within_bound"], str(rep))

lengths = {}
ok = True
for r, n in sch.blocks:
    if r in lengths and n < lengths[r]:
        ok = False
    lengths[r] = n
check("per-letter block lengths nondecreasing", ok)

all_l = schedule_for_theta(1.0, 20, growth=4)
check("theta=1 all L", set(r for r, _ in all_l.blocks) == {"L"})
all_h = schedule_for_theta(0.0, 20, growth=4)
check("theta=0 all H", set(r for r, _ in all_h.blocks) == {"H"})

# --- degenerate leaf tables --------------------------------------------------
leb = build_lebesgue(2)
plane = build_plane(2, 1)

mu_l = build_spliced(2, 1, schedule=schedule_for_theta(1.0, 30, growth=4), depth=12)
w_leb = leb.window_masses(6, np.zeros(2, dtype=np.int64), (64, 64))
w_l = mu_l.window_masses(6, np.zeros(2, dtype=np.int64), (64, 64))
check("theta=1 leaf table equals lebesgue", np.abs(w_l - w_leb).max() < 1e-15,
      f"{np.abs(w_l - w_leb).max():.2e}")

mu_h = build_spliced(2, 1, schedule=schedule_for_theta(0.0, 30, growth=4), depth=12)
w_pl = plane.window_masses(6, np.zeros(2, dtype=np.int64), (64, 64))
w_h = mu_h.window_masses(6, np.zeros(2, dtype=np.int64), (64, 64))
check("theta=0 leaf table equals plane", np.abs(w_h - w_pl).max() < 1e-15,
      f"{np.abs(w_h - w_pl).max():.2e}")

# --- product structure oracle ------------------------------------------------
# schedule: L block of 3 then H block of 4 (d=2, k=1, W = x-axis).
sch_lh = SpliceSchedule(blocks=(("L", 3), ("H", 4)))
mu = build_spliced(2, 1, schedule=sch_lh, depth=7)
# oracle bookkeeping: depth 3: every cell 2^-6.  Depth 7: H run levels 3..6,
# run start at 3: perp digit 0 then 1,1,1; along x halve each level.
w7 = mu.window_masses(7, np.zeros(2, dtype=np.int64), (128, 128))
col_mass = w7.sum(axis=0)  # perp profile summed over x
expect_cell = (2.0**-6) * (2.0**-4)  # L block 2^-2len, H block 2^-len along W
nz = w7[w7 > 0]
check("spliced cell masses = 2^-6 * 2^-4", np.allclose(nz, expect_cell, rtol=1e-12),
      f"{nz.min():.3e}..{nz.max():.3e} vs {expect_cell:.3e}")
# within each depth-3 perp strip of 16 rows the occupied row is lo+0 digit 0
# then digit 1: rows lo + 0b0111 = lo + 7
rows = np.flatnonzero(w7.sum(axis=0) > 0)
check("H-run rows at offset 7 of each 16-strip", np.all(rows % 16 == 7),
      str(rows[:6]))
check("one row per strip, all 8 strips", len(rows) == 8)

# weights() vs window path: refine the tree and compare
mu2 = build_spliced(2, 1, schedule=sch_lh, depth=7)
mu2.refine_to_depth(7)
w7_tree = mu2.window_masses(7, np.zeros(2, dtype=np.int64), (128, 128))
check("tree refinement matches rule windows", np.abs(w7 - w7_tree).max() < 1e-15,
      f"{np.abs(w7 - w7_tree).max():.2e}")

# --- schedule exhaustion -----------------------------------------------------
try:
    scenery_at(mu, [0.1, 0.1], 9 * LOG2, m=4)
    check("finite schedule exhausts", False, "no error")
except Exception as exc:
    check("finite schedule exhausts", type(exc).__name__ == "ResolutionExhaustedError",
          type(exc).__name__)
s_fill = scenery_at(mu, [0.1, 0.1], 2 * LOG2, m=4, detail=3)
check("uniform fill below finite schedule", abs(float(s_fill.grid.sum()) - 1) < 1e-9)

# --- persistence roundtrip ---------------------------------------------------
with tempfile.NamedTemporaryFile(suffix=".json", delete=False) as fh:
    path = fh.name
save_measure(mu_h, path)
mu_h2 = load_measure(path)
w_h2 = mu_h2.window_masses(6, np.zeros(2, dtype=np.int64), (64, 64))
check("persistence roundtrip", np.abs(w_h2 - w_h).max() < 1e-15)

# --- canonical chain point ---------------------------------------------------
def chain_point(schedule, depth, ones_after):
    """Support point adapted to blocks before `ones_after`.

    perp digit 0 at H-run starts, 1 during runs, alternating during L;
    all digits 1 from `ones_after` on, so the point rides the top of the
    mass band of the last tested block (one-sided band in its views).
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


# growth=48: SB1 = L12 H12 L12 H12 covering levels 0..47
sch48 = schedule_for_theta(0.5, 48, growth=48)
mu48 = build_spliced(2, 1, schedule=sch48, depth=48)
x = chain_point(sch48, 40, ones_after=24)
leb_ref = scenery_at(leb, np.zeros(2), 0.0, m=8)
plane_ref = scenery_at(plane, np.zeros(2), 0.0, m=8)

# t deep inside L run [0,12): levels 4..7; deep inside H run [12,24): 16..19
for lev in (5, 7):
    s = scenery_at(mu48, x, lev * LOG2, m=8)
    dist = snapshot_distance(s, leb_ref)
    check(f"deep-L scenery at level {lev} ~ lebesgue", dist < 0.05, f"{dist:.4f}")
for lev in (17, 19):
    s = scenery_at(mu48, x, lev * LOG2, m=8)
    dist = snapshot_distance(s, plane_ref)
    check(f"deep-H scenery at level {lev} ~ plane", dist < 0.05, f"{dist:.4f}")

# --- dimension ---------------------------------------------------------------
est = measure_dimension(mu48, n_points=20, r_min=2.0**-45, r_max=0.25, seed=7,
                        sample_depth=48)
mean_dim = float(np.mean(est.points))
check("spliced mean local dimension ~ 1.5", 1.45 <= mean_dim <= 1.55,
      f"{mean_dim:.4f}")

# --- conical statistic tracks frequency (calibration sweep) -------------------
rng = np.random.default_rng(5)
for growth in (48,):
    schg = schedule_for_theta(0.5, 48, growth=growth)
    mug = build_spliced(2, 1, schedule=schg, depth=48)
    pts = sample_points(mug, 12, 36, seed=9)
    stats = [
        conical_statistic(mug, p, 24 * LOG2, 1, 0.5, 0.1, dt=LOG2 / 4, m=8)
        for p in pts
    ]
    stats_hi = [
        conical_statistic(mug, p, 24 * LOG2, 1, 0.5, 0.5, dt=LOG2 / 4, m=8)
        for p in pts
    ]
    print(
        f"growth={growth}: eps=0.1 mean={np.mean(stats):.3f} sd={np.std(stats):.3f} "
        f"| eps=0.5 mean={np.mean(stats_hi):.3f}"
    )

print(f"\nfailures: {failures}")
sys.exit(1 if failures else 0)
