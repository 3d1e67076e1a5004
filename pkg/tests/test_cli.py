import json

import pytest

from ksfield.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, main
from ksfield.config import config_to_dict

from conftest import make_config


def _write_cfg(tmp_path, **kw):
    cfg = make_config(**kw)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(config_to_dict(cfg)))
    return p


def test_run_command_single_step(tmp_path):
    cfgp = _write_cfg(tmp_path, P=40, R=5, dt=1e-4, T=1e-4)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfgp), "--out", str(out)]) == EXIT_OK
    names = {p.name for p in out.iterdir()}
    assert {"config.json", "manifest.json", "diagnostics.csv",
            "particles_1.bin", "field_1.bin", "field_0.bin"} <= names
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "run"
    assert manifest["final_step"] == 1
    assert manifest["config"]["particles"] == 40
    assert "wall_time_s" in manifest


def test_run_then_resume(tmp_path):
    cfgp = _write_cfg(tmp_path, P=30, R=5, dt=1e-4, T=6e-4)
    full_out = tmp_path / "full"
    assert main(["run", "--config", str(cfgp), "--out", str(full_out)]) == EXIT_OK

    half = make_config(P=30, R=5, dt=1e-4, T=3e-4)
    half_p = tmp_path / "half.json"
    half_p.write_text(json.dumps(config_to_dict(half)))
    half_out = tmp_path / "halfout"
    assert main(["run", "--config", str(half_p), "--out", str(half_out)]) == EXIT_OK
    # extend the stored config, then resume to the full horizon
    doc = json.loads((half_out / "config.json").read_text())
    doc["t_final"] = 6e-4
    (half_out / "config.json").write_text(json.dumps(doc))
    assert main(["resume", "--out", str(half_out)]) == EXIT_OK
    a = (full_out / "particles_6.bin").read_bytes()
    b = (half_out / "particles_6.bin").read_bytes()
    assert a == b


def test_invalid_config_exit_code(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"mu": 1.0}))
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    p2 = tmp_path / "notjson.json"
    p2.write_text("{nope")
    assert main(["run", "--config", str(p2), "--out", str(tmp_path / "o2")]) == EXIT_CONFIG


def test_unreadable_config_is_io_error(tmp_path):
    missing = tmp_path / "missing.json"
    assert main(["run", "--config", str(missing), "--out", str(tmp_path / "o")]) == EXIT_IO


def test_numerical_abort_exit_code(tmp_path, monkeypatch):
    import ksfield.cli as cli
    from ksfield.simulation import NonFiniteFieldError

    cfgp = _write_cfg(tmp_path, P=10, R=2)

    def boom(args, cfg, out):
        raise NonFiniteFieldError(3, 3e-4)

    monkeypatch.setitem(cli._COMMANDS, "run", boom)
    assert main(["run", "--config", str(cfgp), "--out", str(tmp_path / "o")]) == EXIT_NUMERICAL


def test_unknown_command_usage_error():
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2


def test_out_root_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("KSFIELD_OUT_ROOT", str(tmp_path / "root"))
    cfgp = _write_cfg(tmp_path, P=20, R=5, dt=1e-4, T=1e-4)
    assert main(["run", "--config", str(cfgp), "--out", "rel"]) == EXIT_OK
    assert (tmp_path / "root" / "rel" / "manifest.json").exists()


def test_seed_override_changes_outputs(tmp_path):
    cfgp = _write_cfg(tmp_path, P=30, R=5, dt=1e-4, T=2e-4)
    o1, o2, o3 = (tmp_path / n for n in ("a", "b", "c"))
    main(["run", "--config", str(cfgp), "--out", str(o1)])
    main(["run", "--config", str(cfgp), "--out", str(o2), "--seed", "99"])
    main(["run", "--config", str(cfgp), "--out", str(o3)])
    assert (o1 / "particles_2.bin").read_bytes() == (o3 / "particles_2.bin").read_bytes()
    assert (o1 / "particles_2.bin").read_bytes() != (o2 / "particles_2.bin").read_bytes()


def test_threads_flag_does_not_change_artifacts(tmp_path):
    cfgp = _write_cfg(tmp_path, P=40, R=8, dt=1e-4, T=4e-4)
    o1, o2 = tmp_path / "t1", tmp_path / "t4"
    assert main(["run", "--config", str(cfgp), "--out", str(o1), "--threads", "1"]) == EXIT_OK
    assert main(["run", "--config", str(cfgp), "--out", str(o2), "--threads", "4"]) == EXIT_OK
    for name in ("particles_4.bin", "field_4.bin", "field_3.bin"):
        assert (o1 / name).read_bytes() == (o2 / name).read_bytes()


def test_validate_fdm_writes_csv(tmp_path):
    cfgp = _write_cfg(tmp_path, P=10, R=2, T=2e-3)
    out = tmp_path / "fdm"
    assert main(["validate-fdm", "--config", str(cfgp), "--out", str(out),
                 "--nr", "200", "--dt-fdm", "1e-5"]) == EXIT_OK
    rows = (out / "fdm_solution.csv").read_text().strip().splitlines()
    assert rows[0] == "r,rho,c,F"
    assert len(rows) == 201


def test_validate_command_smoke(tmp_path, capsys):
    cfgp = _write_cfg(tmp_path, H=8, P=200, R=14, dt=1e-3, T=5e-3, trials=2)
    out = tmp_path / "val"
    assert main(["validate", "--config", str(cfgp), "--out", str(out),
                 "--nr", "300", "--dt-fdm", "5e-5"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "mean relative CDF error" in text
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["errors"]) == 2
    assert manifest["reference_mean_error"] == pytest.approx(0.05512)


def test_convergence_dt_command(tmp_path, capsys):
    cfgp = _write_cfg(tmp_path, H=6, P=24, R=24, dt=2e-3, T=8e-3, trials=2)
    out = tmp_path / "conv"
    rc = main(["convergence-dt", "--config", str(cfgp), "--out", str(out),
               "--dt-list", "1e-3,2e-3,4e-3", "--dt-ref", "5e-4"])
    assert rc == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["errors"]) == 3
    assert (out / "convergence_dt.csv").exists()


def test_convergence_batch_command(tmp_path):
    cfgp = _write_cfg(tmp_path, H=6, P=32, R=8, dt=2e-3, T=6e-3, trials=1)
    out = tmp_path / "convb"
    rc = main(["convergence-batch", "--config", str(cfgp), "--out", str(out),
               "--batch-sizes", "4,8,16"])
    assert rc == EXIT_OK
    rows = (out / "convergence_batch.csv").read_text().strip().splitlines()
    assert len(rows) == 4  # header + 3


def test_blowup_scan_command(tmp_path, capsys):
    cfgp = _write_cfg(tmp_path, H=6, P=100, R=10, dt=1e-3, T=5e-3, M0=5.0)
    out = tmp_path / "bs"
    rc = main(["blowup-scan", "--config", str(cfgp), "--out", str(out),
               "--masses", "5,10", "--modes", "6,8", "--t-final", "5e-3"])
    assert rc == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["classification"]) == {"5.0", "10.0"}
    assert (out / "blowup_scan.csv").exists()


def test_lipschitz_command(tmp_path, capsys):
    cfgp = _write_cfg(tmp_path, H=8, P=100, R=10, dt=1e-3, T=4e-3)
    out = tmp_path / "lip"
    rc = main(["lipschitz", "--config", str(cfgp), "--out", str(out),
               "--modes", "6,8", "--pairs", "100"])
    assert rc == EXIT_OK
    rows = (out / "lipschitz.csv").read_text().strip().splitlines()
    assert rows[0] == "H,lipschitz_constant"
    assert len(rows) == 3
