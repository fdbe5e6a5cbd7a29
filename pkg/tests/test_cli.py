"""End-to-end checks of the command line verbs.

Every test drives `cli.main(argv)` in-process and reads the exit code
directly: 0 for success or pass, 2 for a quantitative fail, 1 for
errors.  Measure files and reports live in tmp_path.  Scales are tiny;
the full-scale statistics are the acceptance suite's job.
"""

import json
import math

import numpy as np
import pytest

from sceneryflow import cli
from sceneryflow.measure import load_measure
from sceneryflow.scenery import snapshot_from_csv

LOG2 = math.log(2.0)


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(autouse=True)
def in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)


@pytest.fixture(scope="module")
def measure_dir(tmp_path_factory):
    """Lebesgue and spliced measure files shared across tests."""
    root = tmp_path_factory.mktemp("measures")
    assert run("gen", "--kind", "lebesgue", "--d", "2",
               "--out", root / "leb.json") == 0
    assert run("splice", "--d", "2", "--k", "1", "--theta", "0.5",
               "--depth", "16", "--growth", "4", "--seed", "0",
               "--out", root / "spl.json") == 0
    return root


def table(path):
    """(meta dict, header list, rows as string lists) of a report CSV."""
    meta, header, rows = {}, None, []
    for line in path.read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
        elif header is None:
            header = line.split(",")
        elif line:
            rows.append(line.split(","))
    return meta, header, rows


# ---------------------------------------------------------------------------
# measure generation


def test_gen_default_output_name(tmp_path):
    assert run("gen", "--kind", "lebesgue", "--d", "2") == 0
    mu = load_measure(tmp_path / "lebesgue.json")
    assert mu.d == 2


def test_gen_cascade_is_seed_deterministic(tmp_path):
    for name in ("a.json", "b.json"):
        assert run("gen", "--kind", "cascade", "--d", "2", "--depth", "3",
                   "--seed", "11", "--out", name) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert run("gen", "--kind", "cascade", "--d", "2", "--depth", "3",
               "--seed", "12", "--out", "c.json") == 0
    assert (tmp_path / "a.json").read_bytes() != (tmp_path / "c.json").read_bytes()


def test_gen_plane(tmp_path):
    assert run("gen", "--kind", "plane", "--d", "3", "--k", "2",
               "--out", "pl.json") == 0
    mu = load_measure(tmp_path / "pl.json")
    assert mu.d == 3


def test_splice_summary_line(tmp_path, capsys):
    assert run("splice", "--theta", "0.25", "--depth", "8", "--growth", "2",
               "--out", "s.json") == 0
    line = capsys.readouterr().out
    assert "theta=0.25" in line and "s=1.25" in line and "depth=8" in line
    assert load_measure(tmp_path / "s.json").d == 2


def test_splice_accepts_s_instead_of_theta(tmp_path):
    assert run("splice", "--s", "1.25", "--depth", "8", "--growth", "2",
               "--out", "s.json") == 0


# ---------------------------------------------------------------------------
# flow / epsilon / dim verbs


def test_flow_snapshot_roundtrip(measure_dir, tmp_path):
    assert run("flow", "--measure", measure_dir / "spl.json",
               "--x", "0.1,0.1", "--t", str(LOG2), "--m", "6",
               "--out", "snap.csv") == 0
    snap = snapshot_from_csv((tmp_path / "snap.csv").read_text())
    assert snap.d == 2 and snap.m == 6
    assert snap.t == pytest.approx(LOG2)
    assert snap.grid.sum() == pytest.approx(1.0)


def test_flow_rejects_time_beyond_resolution(measure_dir, capsys):
    rc = run("flow", "--measure", measure_dir / "spl.json",
             "--x", "0.1,0.1", "--t", str(40 * LOG2))
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_epsilon_quadrature_values(tmp_path):
    assert run("epsilon", "--d", "2", "--k", "1", "--alpha", "0.5,1.0",
               "--out", "eps.csv") == 0
    _, header, rows = table(tmp_path / "eps.csv")
    assert header == ["d", "k", "alpha", "value", "method", "error_estimate"]
    assert [r[4] for r in rows] == ["quadrature", "quadrature"]
    assert float(rows[0][3]) == pytest.approx(1.0 / 3.0, abs=1e-9)
    assert float(rows[1][3]) == 1.0
    assert float(rows[0][5]) == 0.0


def test_epsilon_monte_carlo(tmp_path):
    assert run("epsilon", "--d", "2", "--k", "1", "--alpha", "0.5",
               "--method", "monte-carlo", "--n", "20000", "--seed", "1",
               "--out", "eps.csv") == 0
    _, _, rows = table(tmp_path / "eps.csv")
    value, err = float(rows[0][3]), float(rows[0][5])
    assert err > 0.0
    assert abs(value - 1.0 / 3.0) < 5 * err


def test_epsilon_json(tmp_path):
    assert run("epsilon", "--d", "3", "--k", "1", "--alpha", "0.5",
               "--format", "json", "--out", "eps.json") == 0
    rows = json.loads((tmp_path / "eps.json").read_text())["rows"]
    assert rows[0]["value"] == pytest.approx(0.5, abs=1e-9)
    assert rows[0]["method"] == "quadrature"


def test_dim_lebesgue(measure_dir, tmp_path):
    assert run("dim", "--measure", measure_dir / "leb.json",
               "--n-points", "5", "--out", "dim.csv") == 0
    meta, header, rows = table(tmp_path / "dim.csv")
    assert header == ["point_id", "slope"]
    slopes = [float(r[1]) for r in rows if r[0].isdigit()]
    assert len(slopes) == 5
    assert np.allclose(slopes, 2.0, atol=0.02)
    assert float(meta["aggregate_p05"]) == pytest.approx(2.0, abs=0.02)
    assert rows[-2][0] == "aggregate_p05"
    assert rows[-1][0] == "aggregate_liminf"


def test_dim_json(measure_dir, tmp_path):
    assert run("dim", "--measure", measure_dir / "leb.json",
               "--n-points", "3", "--format", "json",
               "--out", "dim.json") == 0
    doc = json.loads((tmp_path / "dim.json").read_text())
    assert len(doc["slopes"]) == 3
    assert doc["meta"]["aggregate_p05"] == pytest.approx(2.0, abs=0.02)


# ---------------------------------------------------------------------------
# conical


@pytest.fixture(scope="module")
def conical_csv(measure_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("conical") / "con.csv"
    rc = run("conical", "--measure", measure_dir / "spl.json",
             "--n-points", "2", "--T", str(4 * LOG2), "--eps", "0.1,0.5",
             "--seed", "3", "--out", out)
    assert rc == 0
    return out


def test_conical_table_layout(conical_csv):
    meta, header, rows = table(conical_csv)
    assert header == ["point_id", "x0", "x1", "T", "eps", "alpha", "k",
                      "statistic", "min_over_t", "mean_over_t"]
    assert len(rows) == 4  # 2 points x 2 eps
    assert {r[0] for r in rows} == {"0", "1"}
    for r in rows:
        assert 0.0 <= float(r[7]) <= 1.0
        assert float(r[8]) <= float(r[9])
    assert meta["seed"] == "3"
    assert float(meta["eps_critical"]) == pytest.approx(1.0 / 3.0)
    assert float(meta["dt"]) == pytest.approx(LOG2 / 4)


def test_conical_minima_shared_across_eps(conical_csv):
    _, _, rows = table(conical_csv)
    by_point = {}
    for r in rows:
        by_point.setdefault(r[0], set()).add((r[8], r[9]))
    for curves in by_point.values():
        assert len(curves) == 1


def test_conical_statistic_monotone_in_eps(conical_csv):
    _, _, rows = table(conical_csv)
    for pid in ("0", "1"):
        stats = {float(r[4]): float(r[7]) for r in rows if r[0] == pid}
        assert stats[0.5] <= stats[0.1]


def test_conical_explicit_points(measure_dir, tmp_path):
    assert run("conical", "--measure", measure_dir / "leb.json",
               "--points", "0.1,0.1;-0.5,0.25", "--T", str(2 * LOG2),
               "--eps", "0.1", "--out", "con.csv") == 0
    _, _, rows = table(tmp_path / "con.csv")
    assert len(rows) == 2
    assert float(rows[0][1]) == 0.1 and float(rows[1][2]) == 0.25
    # Lebesgue scenery never dips into the low-cone set at eps = 0.1
    assert float(rows[0][7]) == 1.0 and float(rows[1][7]) == 1.0


def test_conical_deterministic_bytes(measure_dir, tmp_path):
    args = ("conical", "--measure", measure_dir / "spl.json",
            "--n-points", "1", "--T", str(2 * LOG2), "--eps", "0.2")
    assert run(*args, "--out", "a.csv") == 0
    assert run(*args, "--out", "b.csv") == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_conical_json(measure_dir, tmp_path):
    assert run("conical", "--measure", measure_dir / "leb.json",
               "--points", "0.0,0.0", "--T", str(2 * LOG2),
               "--eps", "0.1", "--format", "json",
               "--out", "con.json") == 0
    doc = json.loads((tmp_path / "con.json").read_text())
    assert doc["rows"][0]["statistic"] == 1.0
    assert doc["meta"]["eps_critical"] == pytest.approx(1.0 / 3.0)


# ---------------------------------------------------------------------------
# rectify


def test_rectify_collinear_cloud(tmp_path, capsys):
    pts = np.column_stack([np.linspace(-0.9, 0.9, 40), np.zeros(40)])
    np.savetxt(tmp_path / "cloud.csv", pts, delimiter=",")
    assert run("rectify", tmp_path / "cloud.csv", "--k", "1",
               "--alpha", "0.9", "--out", "rect.csv") == 0
    meta, header, rows = table(tmp_path / "rect.csv")
    assert header == ["point_id", "x0", "x1", "vacant"]
    assert meta["fraction"] == "1"
    assert all(r[3] == "true" for r in rows)
    assert "vacancy fraction: 1" in capsys.readouterr().out


def test_rectify_cross_cloud_mixed_verdicts(tmp_path):
    arm = np.linspace(-0.9, 0.9, 19)
    horiz = np.column_stack([arm, np.zeros(19)])
    vert = np.column_stack([np.zeros(18), arm[arm != 0.0]])
    np.savetxt(tmp_path / "cross.csv", np.vstack([horiz, vert]),
               delimiter=",")
    assert run("rectify", tmp_path / "cross.csv", "--alpha", "0.9",
               "--format", "json", "--out", "rect.json") == 0
    doc = json.loads((tmp_path / "rect.json").read_text())
    verdicts = doc["verdicts"]
    # the crossing kills vacancy near the origin; arm tips keep it
    assert 0.0 < doc["meta"]["fraction"] < 1.0
    assert verdicts[0] and verdicts[18]
    assert not verdicts[9]  # the origin row


def test_rectify_respects_rmin_flag(tmp_path, capsys):
    pts = np.column_stack([np.linspace(-0.9, 0.9, 40), np.zeros(40)])
    np.savetxt(tmp_path / "cloud.csv", pts, delimiter=",")
    rc = run("rectify", tmp_path / "cloud.csv", "--rmin", "0.5",
             "--r", "0.1", "--out", "r.csv")
    assert rc == 1
    assert "undercuts the scale floor" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# config files and the verification verbs


def write_config(path, text):
    path.write_text(text)
    return path


def test_config_file_parsing(tmp_path):
    cfg = write_config(tmp_path / "exp.cfg", (
        "# tiny experiment\n"
        "T_log2 = 2\n"
        "dt_log2 = 0.25\n"
        "n_points: 1\n"
        "depth = 16   # with an inline comment\n"
        "growth = 4\n"
        "\n"
        "eps = 0.5\n"
    ))
    assert run("verify-sharpness", "--config", cfg, "--out", "rep.json",
               "--format", "json") == 0
    doc = json.loads((tmp_path / "rep.json").read_text())
    assert doc["config"]["T"] == pytest.approx(2 * LOG2)
    assert doc["config"]["depth"] == 16
    assert doc["config"]["eps"] == [0.5]


def test_config_file_malformed_line(tmp_path, capsys):
    cfg = write_config(tmp_path / "bad.cfg", "depth 16\n")
    assert run("verify-sharpness", "--config", cfg) == 1
    assert "expected 'key = value'" in capsys.readouterr().err


def test_config_file_unknown_key(tmp_path, capsys):
    cfg = write_config(tmp_path / "bad.cfg", "depht = 16\n")
    assert run("verify-sharpness", "--config", cfg) == 1
    assert "unknown config key" in capsys.readouterr().err


def test_cli_flags_override_config_file(tmp_path):
    cfg = write_config(tmp_path / "exp.cfg", (
        "theta = 0.3\nT_log2 = 2\nn_points = 1\ndepth = 16\ngrowth = 4\n"
        "eps = 0.5\nseed = 5\n"
    ))
    assert run("verify-sharpness", "--config", cfg, "--theta", "1.0",
               "--seed", "7", "--format", "json", "--out", "rep.json") == 0
    doc = json.loads((tmp_path / "rep.json").read_text())
    assert doc["config"]["theta"] == 1.0
    assert doc["config"]["s"] == 2.0
    assert doc["config"]["seed"] == 7


def test_verify_sharpness_exit_codes(tmp_path):
    # above-threshold side alone passes even at tiny scale
    assert run("verify-sharpness", "--eps", "0.5", "--n-points", "1",
               "--depth", "16", "--growth", "4", "--T", str(2 * LOG2),
               "--out", "pass.csv") == 0
    meta, _, rows = table(tmp_path / "pass.csv")
    assert meta["status"] == "pass"
    assert rows[0][-1] == "true"
    # growth 4 at depth 16 is far off calibration, so the below side
    # lands well away from theta and the quantitative check fails
    assert run("verify-sharpness", "--eps", "0.1", "--n-points", "2",
               "--depth", "16", "--growth", "4", "--T", str(4 * LOG2),
               "--out", "fail.csv") == 2
    meta, _, rows = table(tmp_path / "fail.csv")
    assert meta["status"] == "fail"
    assert rows[0][-1] == "false"


def test_verify_sharpness_stdout_summary(capsys):
    assert run("verify-sharpness", "--eps", "0.5", "--n-points", "1",
               "--depth", "16", "--growth", "4", "--T", str(2 * LOG2),
               "--out", "rep.csv") == 0
    out = capsys.readouterr().out
    assert "eps=0.5 [above]" in out
    assert "sharpness: PASS" in out


def test_verify_lower_bound_lebesgue_passes(tmp_path):
    assert run("verify-lower-bound", "--measure", "lebesgue", "--s", "2",
               "--eps", "0.1", "--n-points", "2", "--depth", "16",
               "--growth", "4", "--T", str(2 * LOG2),
               "--format", "json", "--out", "lb.json") == 0
    doc = json.loads((tmp_path / "lb.json").read_text())
    assert doc["status"] == "pass"
    assert doc["fraction_holding"] == 1.0
    assert doc["statistics"] == [1.0, 1.0]


def test_verify_lower_bound_not_applicable(tmp_path, capsys):
    assert run("verify-lower-bound", "--measure", "plane", "--s", "2",
               "--eps", "0.1", "--n-points", "1", "--depth", "16",
               "--growth", "4", "--T", str(2 * LOG2),
               "--out", "lb.csv") == 0
    meta, _, rows = table(tmp_path / "lb.csv")
    assert meta["status"] == "not-applicable"
    assert "hypothesis fails" in meta["reason"]
    assert rows == []
    assert "not applicable" in capsys.readouterr().out


def test_verify_lower_bound_needs_subcritical_eps(capsys):
    assert run("verify-lower-bound", "--eps", "0.5", "--n-points", "1",
               "--depth", "16", "--growth", "4", "--T", str(2 * LOG2)) == 1
    assert "below the critical threshold" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# error handling


def test_missing_measure_file_exits_one(capsys):
    assert run("dim", "--measure", "nowhere.json") == 1
    assert "error:" in capsys.readouterr().err


def test_invalid_alpha_exits_one(capsys):
    assert run("epsilon", "--d", "2", "--k", "1", "--alpha", "1.5") == 1
    assert "alpha" in capsys.readouterr().err


def test_unknown_verb_is_a_usage_error():
    with pytest.raises(SystemExit) as err:
        cli.main(["transmogrify"])
    assert err.value.code == 2


def test_entry_point_is_exposed():
    import sceneryflow.cli as mod
    assert callable(mod.main)
