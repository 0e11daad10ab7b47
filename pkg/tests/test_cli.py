import copy
import json
import os

import pytest

from fricfem.campaigns import builtin_config, save_config
from fricfem.cli import main
from fricfem.mesh import write_mesh
from fricfem.campaigns import initial_mesh


@pytest.fixture()
def small_cfg(tmp_path):
    cfg = copy.deepcopy(builtin_config("tresca-rect"))
    cfg["geometry"]["nx"] = 4
    cfg["geometry"]["ny"] = 2
    cfg["adaptive"]["max_levels"] = 2
    cfg["uniform"]["max_levels"] = 2
    cfg["reference"]["h"] = 0.25
    path = tmp_path / "small.json"
    save_config(cfg, str(path))
    return cfg, str(path)


def read_lines(path):
    with open(path) as f:
        return f.read().splitlines()


def test_run_writes_declared_outputs(small_cfg, tmp_path, monkeypatch):
    monkeypatch.delenv("FRICFEM_OUTPUT_DIR", raising=False)
    cfg, cfg_path = small_cfg
    out = tmp_path / "out"
    rc = main(["run", cfg_path, "--output-dir", str(out), "--quiet"])
    assert rc == 0
    with open(out / "manifest.json") as f:
        manifest = json.load(f)
    assert manifest["files"]
    for name in manifest["files"]:
        p = out / name
        assert p.exists() and p.stat().st_size > 0
    # every CSV starts with the config-hash comment, then a header row
    for name in manifest["files"]:
        if not name.endswith(".csv"):
            continue
        lines = read_lines(out / name)
        assert lines[0] == f"# config {manifest['config_hash']}"
        assert "," in lines[1]
    assert (out / "convergence.png").exists()
    assert (out / "report_adaptive.csv").exists()
    assert (out / "report_uniform.csv").exists()


def test_run_round_trip_reports_identical(small_cfg, tmp_path, monkeypatch):
    monkeypatch.delenv("FRICFEM_OUTPUT_DIR", raising=False)
    cfg, cfg_path = small_cfg
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    assert main(["run", cfg_path, "--output-dir", str(out1), "--quiet",
                 "--no-figures"]) == 0
    # the second run starts from the config the first one serialized
    assert main(["run", str(out1 / "config.json"), "--output-dir", str(out2),
                 "--quiet", "--no-figures"]) == 0
    for name in ("report_adaptive.csv", "report_uniform.csv"):
        assert read_lines(out1 / name) == read_lines(out2 / name)


def test_env_var_overrides_output_dir(small_cfg, tmp_path, monkeypatch):
    cfg, cfg_path = small_cfg
    target = tmp_path / "env_out"
    monkeypatch.setenv("FRICFEM_OUTPUT_DIR", str(target))
    rc = main(["run", cfg_path, "--mode", "adaptive", "--quiet",
               "--skip-reference", "--no-figures",
               "--output-dir", str(tmp_path / "ignored")])
    assert rc == 0
    assert (target / "report_adaptive.csv").exists()
    assert not (tmp_path / "ignored").exists()


def test_skip_reference_drops_error_columns(small_cfg, tmp_path, monkeypatch):
    monkeypatch.delenv("FRICFEM_OUTPUT_DIR", raising=False)
    cfg, cfg_path = small_cfg
    out = tmp_path / "nr"
    assert main(["run", cfg_path, "--output-dir", str(out), "--quiet",
                 "--skip-reference", "--no-figures", "--mode", "adaptive"]) == 0
    header = read_lines(out / "report_adaptive.csv")[1]
    assert "h1_error" not in header
    assert "eta_tot" in header


def test_verify_builtin(capsys):
    rc = main(["verify", "--builtin", "tresca-rect"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "all properties pass" in out
    assert "[pass]" in out


def test_verify_fault_detected(capsys):
    rc = main(["verify", "--builtin", "tresca-rect", "--fault", "equilibrium"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "[FAIL] elementwise equilibrium" in out


def test_mesh_info(tmp_path, capsys):
    cfg = builtin_config("tresca-rect")
    path = tmp_path / "m.txt"
    write_mesh(initial_mesh(cfg), str(path))
    rc = main(["mesh-info", str(path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "triangles  100" in out
    assert "area       2" in out
    assert "boundary C" in out


def test_missing_config_errors():
    with pytest.raises(SystemExit):
        main(["run"])
