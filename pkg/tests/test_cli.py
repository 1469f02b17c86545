import json
import os
import subprocess
import sys

import numpy as np
import pytest

from finsler_liouville.cli import main, parse_domain_spec
from finsler_liouville.experiments import (EXPERIMENTS, list_experiments,
                                           run_experiment)
from finsler_liouville.gauges import parse_gauge_spec
from finsler_liouville.grid import load_field

CATALOG = ["props2_1", "coarea", "isoperimetric", "polya_szego", "talenti",
           "maxprinciple", "comparison", "mvp", "green", "thm11", "thm12",
           "thm13", "thm14", "d0"]


def test_catalog_stable():
    ids = list(list_experiments())
    assert ids == CATALOG
    assert len(ids) == 14
    for desc in list_experiments().values():
        assert desc


def test_list_command(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    for name in CATALOG:
        assert name in out


def test_unknown_experiment(tmp_path, capsys):
    assert main(["run", "nope", "--out", str(tmp_path)]) == 2
    status = run_experiment("nope", out_dir=str(tmp_path))
    assert status == 2
    rep = json.loads((tmp_path / "nope_report.json").read_text())
    assert "unknown experiment" in rep["error"]


def test_run_writes_artifacts(tmp_path):
    out = tmp_path / "mvp"
    assert main(["run", "mvp", "--out", str(out)]) == 0
    names = sorted(os.listdir(out))
    assert "MANIFEST.json" in names
    assert "mvp_report.json" in names
    assert "mvp_deviation.csv" in names
    manifest = json.loads((out / "MANIFEST.json").read_text())
    assert manifest["status"] == "ok"
    assert "achieved" in manifest
    assert manifest["config"]["seed"] == 0


def test_run_config_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"samples": 40, "seed": 7}))
    out = tmp_path / "props"
    assert main(["run", "props2_1", "--config", str(cfg), "--out",
                 str(out)]) == 0
    manifest = json.loads((out / "MANIFEST.json").read_text())
    assert manifest["config"]["samples"] == 40
    assert manifest["config"]["seed"] == 7


def test_determinism_identical_bytes(tmp_path):
    cfg = {"resolution": 48, "fields": 3, "seed": 5}
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert run_experiment("coarea", cfg, str(out)) == 0
        outs.append((out / "coarea.csv").read_bytes())
    assert outs[0] == outs[1]


def test_env_var_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("FINSLER_LIOUVILLE_OUT", str(tmp_path / "envout"))
    assert run_experiment("mvp") == 0
    assert (tmp_path / "envout" / "mvp_report.json").exists()


def test_parse_domain_specs(euclid2):
    box = parse_domain_spec("shape=box;lo=0,0;hi=2,1;cells=64", euclid2)
    assert box.measure == pytest.approx(2.0)
    ball = parse_domain_spec("shape=wulff;R=1;cells=48", euclid2)
    assert ball.measure == pytest.approx(np.pi, abs=5 * ball.h)
    ann = parse_domain_spec("shape=annulus;R=1;R_inner=0.5;cells=48", euclid2)
    assert ann.measure == pytest.approx(0.75 * np.pi, abs=6 * ann.h)
    with pytest.raises(ValueError):
        parse_domain_spec("shape=simplex", euclid2)


def test_solve_command_roundtrip(tmp_path):
    out = tmp_path / "u.csv"
    report = tmp_path / "report.json"
    rc = main(["solve", "--gauge", "family=euclidean;dimension=2",
               "--domain", "shape=wulff;R=1;cells=48",
               "--source", "const:1", "--bc", "const:0",
               "--out", str(out), "--report", str(report)])
    assert rc == 0
    rep = json.loads(report.read_text())
    assert rep["converged"]
    u = load_field(str(out))
    # quick sanity against the radial solution peak value 1/4
    assert abs(u.values.max() - 0.25) <= 3 * u.domain.h


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "finsler_liouville.cli",
                           "list"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "thm14" in proc.stdout


def test_run_multiple_ids(tmp_path):
    rc = main(["run", "mvp", "green", "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "mvp" / "mvp_report.json").exists()
    assert (tmp_path / "green" / "green_report.json").exists()
