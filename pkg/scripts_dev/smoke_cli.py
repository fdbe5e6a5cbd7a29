"""Dev smoke for experiments.py and cli.py before tests are written."""

import math
import os
import shutil
import subprocess
import sys
import tempfile

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import numpy as np

from sceneryflow import cli
from sceneryflow.errors import InvalidConfigError
from sceneryflow.experiments import (
    ExperimentConfig,
    config_from_mapping,
    verify_lower_bound,
    verify_sharpness,
)

LOG2 = math.log(2.0)
TINY = dict(depth=16, growth=4, n_points=2, T=4 * LOG2)


def check(label, fn, exc, frag):
    try:
        fn()
    except exc as e:
        assert frag in str(e), f"{label}: message {e!r} lacks {frag!r}"
        print(f"  ok   {label}: {e}")
    else:
        raise AssertionError(f"{label}: no error raised")


print("== config validation ==")
check("bad k", lambda: ExperimentConfig(d=2, k=2), InvalidConfigError, "outside 1..1")
check("bad alpha", lambda: ExperimentConfig(alpha=1.5), InvalidConfigError, "(0, 1]")
check("s/theta clash", lambda: ExperimentConfig(s=1.2, theta=0.9),
      InvalidConfigError, "disagree")
check("s too small", lambda: ExperimentConfig(s=1.0), InvalidConfigError,
      "must satisfy")
check("eps on threshold",
      lambda: ExperimentConfig(eps=(0.33333333333333337, 0.5)),
      InvalidConfigError, "critical threshold")

cfg = ExperimentConfig()
print(f"  defaults: s={cfg.s} theta={cfg.theta} eps_crit={cfg.eps_critical:.6f} "
      f"m={cfg.snapshot_depth}")
assert cfg.s == 1.5 and cfg.theta == 0.5

m = config_from_mapping({"T_log2": "4", "dt_log2": "0.25", "eps": "0.1, 0.5",
                         "theta": "0.3", "depth": "16"})
assert abs(m.T - 4 * LOG2) < 1e-12 and abs(m.dt - LOG2 / 4) < 1e-12
assert m.eps == (0.1, 0.5) and m.theta == 0.3 and m.depth == 16
check("unknown key", lambda: config_from_mapping({"bogus": "1"}),
      InvalidConfigError, "unknown config key")
print("  ok   config_from_mapping conversions")

print("== verify_sharpness (tiny) ==")
rep = verify_sharpness(ExperimentConfig(**TINY))
assert rep["experiment"] == "sharpness"
for r in rep["results"]:
    print(f"  eps={r['eps']} side={r['side']} target={r['target']} "
          f"mean={r['mean']:.3f} sd={r['sd']:.3f} pass={r['pass']}")
print(f"  status={rep['status']} points={len(rep['points'])}")
assert set(rep) == {"experiment", "status", "config", "results", "points"}

print("== verify_lower_bound lebesgue s=2 ==")
rep = verify_lower_bound(ExperimentConfig(s=2.0, eps=(0.1,), measure="lebesgue",
                                          **TINY))
print(f"  status={rep['status']} dim={rep['dimension_estimate']:.3f} "
      f"fraction={rep.get('fraction_holding')}")
assert rep["status"] == "pass", rep

print("== verify_lower_bound plane s=2 -> not-applicable ==")
rep = verify_lower_bound(ExperimentConfig(s=2.0, eps=(0.1,), measure="plane",
                                          **TINY))
print(f"  status={rep['status']} dim={rep['dimension_estimate']:.3f}")
assert rep["status"] == "not-applicable" and "hypothesis fails" in rep["reason"]

print("== CLI ==")
tmp = tempfile.mkdtemp()
os.chdir(tmp)

rc = cli.main(["gen", "--kind", "lebesgue", "--d", "2", "--out", "leb.json"])
assert rc == 0 and os.path.exists("leb.json")
rc = cli.main(["gen", "--kind", "cascade", "--d", "2", "--depth", "2",
               "--seed", "7", "--out", "casc.json"])
assert rc == 0
rc = cli.main(["splice", "--d", "2", "--k", "1", "--theta", "0.5",
               "--depth", "16", "--growth", "4", "--out", "spl.json"])
assert rc == 0

rc = cli.main(["flow", "--measure", "spl.json", "--x", "0.1,0.1", "--t", "0.0",
               "--out", "snap.csv"])
assert rc == 0
head = open("snap.csv").read().splitlines()[:3]
print(f"  flow header: {head[0]!r} / {head[1]!r}")

rc = cli.main(["epsilon", "--d", "2", "--k", "1", "--alpha", "0.5,1.0",
               "--out", "eps.csv"])
assert rc == 0
print("  epsilon:", *open("eps.csv").read().splitlines(), sep="\n    ")
rc = cli.main(["epsilon", "--d", "2", "--k", "1", "--alpha", "0.5",
               "--method", "monte-carlo", "--n", "20000", "--seed", "1",
               "--out", "epsmc.csv"])
assert rc == 0
print("  epsilon mc:", open("epsmc.csv").read().splitlines()[-1])

rc = cli.main(["dim", "--measure", "leb.json", "--n-points", "5",
               "--out", "dim.csv"])
assert rc == 0
print("  dim tail:", *open("dim.csv").read().splitlines()[-3:], sep="\n    ")

with open("exp.cfg", "w") as fh:
    fh.write("# tiny experiment\nT_log2 = 4\ndt_log2 = 0.25\n"
             "n_points = 2\ndepth = 16\ngrowth = 4\n")

rc = cli.main(["conical", "--config", "exp.cfg", "--measure", "spl.json",
               "--eps", "0.1,0.5", "--out", "con.csv"])
assert rc == 0
print("  conical:", *open("con.csv").read().splitlines(), sep="\n    ")

np.savetxt("cloud.csv", np.column_stack(
    [np.linspace(-0.9, 0.9, 40), np.zeros(40)]), delimiter=",")
rc = cli.main(["rectify", "cloud.csv", "--k", "1", "--alpha", "0.9",
               "--out", "rect.csv"])
assert rc == 0
tail = open("rect.csv").read().splitlines()
print("  rectify meta:", [ln for ln in tail if ln.startswith("#")][-1])

rc = cli.main(["verify-sharpness", "--config", "exp.cfg", "--out", "sharp.csv"])
print(f"  verify-sharpness rc={rc}")
assert rc in (0, 2)
rc = cli.main(["verify-sharpness", "--config", "exp.cfg", "--format", "json",
               "--out", "sharp.json"])
assert rc in (0, 2)
import json as _json
_json.loads(open("sharp.json").read())

rc = cli.main(["verify-lower-bound", "--config", "exp.cfg", "--measure",
               "lebesgue", "--s", "2", "--eps", "0.1", "--out", "lb.csv"])
print(f"  verify-lower-bound lebesgue rc={rc}")
assert rc == 0
rc = cli.main(["verify-lower-bound", "--config", "exp.cfg", "--measure",
               "plane", "--s", "2", "--eps", "0.1", "--out", "lbna.csv"])
print(f"  verify-lower-bound plane (n/a) rc={rc}")
assert rc == 0
print("  n/a meta:", [ln for ln in open("lbna.csv").read().splitlines()
                      if ln.startswith("# reason")])

print("== determinism ==")
for pair in (["epsilon", "--d", "2", "--k", "1", "--alpha", "0.3,0.7"],
             ["conical", "--config", "exp.cfg", "--measure", "spl.json",
              "--eps", "0.1"]):
    cli.main(pair + ["--out", "a.out"])
    cli.main(pair + ["--out", "b.out"])
    assert open("a.out", "rb").read() == open("b.out", "rb").read(), pair
print("  byte-identical reruns ok")

print("== error exits ==")
rc = cli.main(["epsilon", "--d", "2", "--k", "1", "--alpha", "1.5"])
assert rc == 1, rc
rc = cli.main(["dim", "--measure", "missing.json"])
assert rc == 1, rc
rc = cli.main(["verify-sharpness", "--eps", "0.9", "--n-points", "1",
               "--depth", "16", "--growth", "4", "--T", str(2 * LOG2)])
print(f"  sharpness eps=0.9-only rc={rc} (above-threshold check only)")

print("ALL SMOKE OK")
