import json

import pytest
import yaml

from hierosc import cli
from hierosc.config import ConfigError, default_config, dump_config, load_config


def write_yaml(path, data):
    with open(path, "w") as fh:
        yaml.safe_dump(data, fh)
    return str(path)


def test_config_round_trip(tmp_path):
    cfg = default_config()
    path = tmp_path / "cfg.yaml"
    dump_config(cfg, path)
    again = load_config(str(path))
    assert again.as_dict() == cfg.as_dict()


def test_config_rejects_unknown_keys(tmp_path):
    path = write_yaml(tmp_path / "bad.yaml", {"schema_version": 1, "nonsense": 3})
    with pytest.raises(ConfigError, match="nonsense"):
        load_config(path)


def test_config_rejects_bad_values(tmp_path):
    path = write_yaml(tmp_path / "bad.yaml", {"schema_version": 1, "hierarchy": {"kappa": 1, "delta": 0.25}})
    with pytest.raises(ConfigError, match="hierarchy.kappa"):
        load_config(path)
    path = write_yaml(tmp_path / "bad2.yaml", {"schema_version": 2})
    with pytest.raises(ConfigError, match="schema_version"):
        load_config(path)


def test_config_yaml_error_carries_line(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("hierarchy: {kappa: 2\n  delta: oops\n")
    with pytest.raises(ConfigError, match="line"):
        load_config(str(path))


def test_cli_exit_code_on_missing_config():
    assert cli.main(["spectral", "--config", "/nonexistent/x.yaml"]) == cli.EXIT_CONFIG


def test_cli_spectral_default_harmonic(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["spectral", "--out", str(out)])
    assert code == cli.EXIT_OK
    rows = (out / "spectral.csv").read_text().splitlines()
    assert rows[0].startswith("beta,u_hat0")
    rec = json.loads((out / "spectral.json").read_text())
    (beta_key,) = rec.keys()
    assert rec[beta_key]["u_hat"]["0"] == pytest.approx(1.0, rel=1e-9)
    assert (out / "meta.json").exists() and (out / "config_used.yaml").exists()


def test_cli_betastar_infeasible_on_harmonic(tmp_path):
    # constant u0 = 1/a never crosses v_bar: infeasibility exit code
    code = cli.main(["betastar", "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_INFEASIBLE


def test_cli_lattice_rerun_byte_identical(tmp_path):
    cfg = default_config()
    cfg.mc["sweeps"] = 10000
    cfg.mc["n_slices"] = 16
    cfg.mc["seeds"] = [3]
    path = tmp_path / "cfg.yaml"
    dump_config(cfg, path)
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert cli.main(["lattice", "--config", str(path), "--out", str(out1)]) == cli.EXIT_OK
    assert cli.main(["lattice", "--config", str(path), "--out", str(out2)]) == cli.EXIT_OK
    csv1 = (out1 / "lattice_seed3.csv").read_bytes()
    csv2 = (out2 / "lattice_seed3.csv").read_bytes()
    assert csv1 == csv2
    # metadata may differ (timestamp lives there, not in the CSV)
    meta1 = json.loads((out1 / "meta.json").read_text())
    assert "timestamp" in meta1


def test_cli_rgflow_runs(tmp_path):
    cfg = default_config()
    cfg.rg.update({"pop": 2000, "cutoff": 4, "n_max": 2, "seeds": [1, 2]})
    path = tmp_path / "cfg.yaml"
    dump_config(cfg, path)
    out = tmp_path / "flow"
    assert cli.main(["rgflow", "--config", str(path), "--out", str(out)]) == cli.EXIT_OK
    assert (out / "rgflow.csv").exists()


def test_cli_bounds_runs(tmp_path):
    cfg = default_config()
    cfg.model.update({"mass": 1.0, "a": -0.25, "b": 0.05, "gaussian_mode": False})
    cfg.beta = 1.0
    path = tmp_path / "cfg.yaml"
    dump_config(cfg, path)
    out = tmp_path / "bounds"
    assert cli.main(["bounds", "--config", str(path), "--out", str(out)]) == cli.EXIT_OK
    cert = json.loads((out / "bounds.json").read_text())
    assert "classification" in cert and "window" in cert


def test_seed_override_changes_streams(tmp_path):
    cfg = default_config()
    cfg.mc["sweeps"] = 10000
    cfg.mc["n_slices"] = 16
    path = tmp_path / "cfg.yaml"
    dump_config(cfg, path)
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    assert cli.main(["lattice", "--config", str(path), "--out", str(out1), "--seed", "11"]) == 0
    assert cli.main(["lattice", "--config", str(path), "--out", str(out2), "--seed", "12"]) == 0
    assert (out1 / "lattice_seed11.csv").read_bytes() != (out2 / "lattice_seed12.csv").read_bytes()
