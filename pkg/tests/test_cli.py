import csv
import io
import json

import pytest

from seedbank.cli import main


def _csv(text):
    return list(csv.reader(io.StringIO(text)))


def test_tmrca_stdout(capsys):
    main(["tmrca", "--n", "3", "--reps", "5", "--seed", "1"])
    rows = _csv(capsys.readouterr().out)
    assert rows[0] == ["replicate", "t_mrca", "deactivations", "absorbed"]
    assert len(rows) == 6 and all(r[3] == "1" for r in rows[1:])


def test_tmrca_file_and_sidecar(tmp_path):
    out = tmp_path / "t.csv"
    main(["tmrca", "--n", "4", "--m", "2", "--reps", "8", "--seed", "2", "--out", str(out),
          "--variant", "decelerated", "--alpha", "0.6"])
    assert len(_csv(out.read_text())) == 9
    side = json.loads(out.with_suffix(".json").read_text())
    assert side["variant"] == "decelerated" and side["seed"] == 2


def test_tmrca_deterministic_across_workers(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["tmrca", "--n", "5", "--reps", "30", "--seed", "9", "--out", str(a)])
    main(["tmrca", "--n", "5", "--reps", "30", "--seed", "9", "--out", str(b), "--workers", "3"])
    assert a.read_text() == b.read_text()


def test_partition_log(capsys):
    main(["partition", "--K", "4", "--horizon", "2.0", "--snapshot", "0", "--snapshot", "2.0",
          "--seed", "3"])
    rows = _csv(capsys.readouterr().out)
    assert rows[0] == ["time", "kind", "detail"]
    snaps = [r for r in rows[1:] if r[1] == "snapshot"]
    assert len(snaps) == 2 and snaps[0][2].startswith("{1}")


@pytest.mark.parametrize("formula,extra,expected", [
    ("tmrca2", ["--c", "1", "--lam", "1"], 6.0),
    ("rw", ["--p", "0.6666666666666666", "--j", "0", "--m", "2"], 3.0),
])
def test_oracle_formulas(capsys, formula, extra, expected):
    main(["oracle", "--formula", formula, *extra])
    assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(expected)


def test_oracle_report(capsys):
    main(["oracle", "--t", "1.0", "5.0"])
    rep = json.loads(capsys.readouterr().out)
    assert rep["ancestral_active_limit"] == pytest.approx(0.5)
    assert rep["tmrca_active_pair"] == pytest.approx(4.0)
    assert set(rep["active_prob"]) == {"1.0", "5.0"}


def test_duality_json(capsys):
    main(["duality", "--n", "1", "--m", "1", "--t", "0.5", "--dt", "0.01", "--reps", "2000",
          "--seed", "1"])
    out = json.loads(capsys.readouterr().out)
    assert {"lhs", "rhs", "se_lhs", "se_rhs", "pass"} <= set(out)
    assert out["pass"]


def test_config_commands_with_overrides(tmp_path, capsys):
    cfg = tmp_path / "g.json"
    cfg.write_text(json.dumps({"schedule": [[30, 10]], "reps": 20, "seed": 5}))
    main(["grid", "--config", str(cfg)])
    rows = _csv(capsys.readouterr().out)
    assert rows[0][:3] == ["n", "m_size", "mean_tmrca"] and rows[1][-1] == "20"
    main(["grid", "--config", str(cfg), "--reps", "12"])
    assert _csv(capsys.readouterr().out)[1][-1] == "12"

    out = tmp_path / "nc.csv"
    main(["notcdi", "--t", "0", "--reps", "10", "--out", str(out)])
    rows = _csv(out.read_text())
    assert [float(r[1]) for r in rows[1:]] == [100.0, 1000.0, 10000.0]
    assert json.loads(out.with_suffix(".json").read_text())["command"] == "notcdi"

    main(["an", "--n", "10", "--reps", "50", "--seed", "1"])
    rows = _csv(capsys.readouterr().out)
    assert rows[0][0] == "n" and rows[1][0] == "10"


def test_unknown_subcommand_exits():
    with pytest.raises(SystemExit):
        main(["nope"])
