import csv
import json

import pytest

from lattice_hall import cli, models
from lattice_hall.geometry import LatticeWindow


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


PARA = {"schema_version": 1, "model": {"name": "paramagnet"}, "window": {"x_range": [-1, 0], "y_range": [-1, 0]}}


def test_schema_error_reports_pointer(tmp_path, capsys):
    bad = {"model": {"name": "paramagnet", "params": {"lamda": 0.1}}}
    code = cli.main(["hall", "--config", write(tmp_path, bad), "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_SCHEMA
    assert "config error at /model/params" in capsys.readouterr().err


def test_unparsable_and_missing_config(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert cli.main(["hall", "--config", str(p), "--out", str(tmp_path)]) == cli.EXIT_SCHEMA
    assert cli.main(["hall", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == cli.EXIT_SCHEMA


def test_oracle_model_needs_oracle_subcommand(tmp_path):
    doc = {"model": {"name": "hofstadter_q4"}}
    assert cli.main(["hall", "--config", write(tmp_path, doc), "--out", str(tmp_path)]) == cli.EXIT_SCHEMA


def test_hall_outputs_and_determinism(tmp_path):
    cfg = write(tmp_path, PARA)
    shas = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert cli.main(["hall", "--config", cfg, "--out", str(out)]) == cli.EXIT_OK
        rep = json.loads((out / "hall.json").read_text())
        man = json.loads((out / "manifest.json").read_text())
        shas.append(man["report_sha256"])
        assert rep["schema_version"] == 1 and rep["passed"]
        assert rep["kappa"]["value"] == 0.0
        assert set(rep) >= {"model", "N", "g", "kappa", "kappa_times_2pi", "omega_J0", "residuals"}
        assert man["seed"] == 0 and man["filter_profile_digest"]
        rows = list(csv.reader(open(out / "hall_sweep.csv")))
        assert rows[0][0] == "n_sites" and len(rows) == 2
    assert shas[0] == shas[1]


def test_degenerate_model_exit_code(tmp_path):
    inter = models.paramagnet(LatticeWindow.rect((0, 1), (0, 0))).h.scaled(0.0)
    (tmp_path / "h.json").write_text(inter.dumps())
    doc = {
        "model": {"name": "custom", "interaction_file": str(tmp_path / "h.json")},
        "window": {"x_range": [0, 1], "y_range": [0, 0]},
    }
    assert cli.main(["hall", "--config", write(tmp_path, doc), "--out", str(tmp_path / "o")]) == cli.EXIT_ASSUMPTION


def test_custom_model_roundtrip(tmp_path):
    W = LatticeWindow.rect((-1, 0), (-1, 0))
    m = models.perturbed_paramagnet(W, lam=0.1, seed=2)
    (tmp_path / "h.json").write_text(m.h.dumps())
    doc = {"model": {"name": "custom", "interaction_file": str(tmp_path / "h.json")}, "window": W.to_json()}
    assert cli.main(["hall", "--config", write(tmp_path, doc), "--out", str(tmp_path / "o")]) == cli.EXIT_OK
    missing = {"model": {"name": "custom"}}
    with pytest.raises(cli.ConfigError):
        cli.load_config(write(tmp_path, missing, "m.json"))


def test_oracle_subcommand(tmp_path):
    doc = {"model": {"name": "hofstadter_q4"}, "oracle": {"sizes": [12, 16]}}
    out = tmp_path / "o"
    assert cli.main(["oracle", "--config", write(tmp_path, doc), "--out", str(out)]) == cli.EXIT_OK
    rep = json.loads((out / "oracle.json").read_text())
    assert rep["chern_number"] == 1 and rep["monotone"]
    assert rep["time_reversal"]["pass"]


def test_sweep_parallel_matches_serial(tmp_path):
    doc = dict(PARA, sweep={"windows": [{"x_range": [-1, 0], "y_range": [0, 0]}, PARA["window"]]})
    cfg = write(tmp_path, doc)
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "s1")]) == cli.EXIT_OK
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "s2"), "--threads", "2"]) == cli.EXIT_OK
    a = json.loads((tmp_path / "s1" / "sweep.json").read_text())["jobs"]
    b = json.loads((tmp_path / "s2" / "sweep.json").read_text())["jobs"]
    assert a == b


def test_scalar_record():
    assert cli.scalar(1.0, 0.1, 0.2) == {"value": 1.0, "residual": 0.1, "tol": 0.2, "pass": True}
    assert cli.scalar(1j, 0.0)["value"] == {"re": 0.0, "im": 1.0}
    assert cli.scalar(1.0, 0.3, 0.2)["pass"] is False
