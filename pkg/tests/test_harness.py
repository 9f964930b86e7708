import csv
import dataclasses
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from otfs_jrc import cli
from otfs_jrc.harness import (CSV_COLUMNS, REGISTRY, THREADS_ENV, ConfigError, has_errors,
                              load_config, parse_config, run, validate)
from otfs_jrc.harness.config import EXPERIMENTS, dense_psi_bytes
from otfs_jrc.harness.runner import thread_count
from otfs_jrc.grid import FrameParams

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

TOY = {"frame": {"n_doppler": 8, "m_delay": 8}}


def toy(experiment, **extra):
    d = {"experiment": experiment, "seed": 3, "trials": 2, **TOY,
         "sweep": {"start": 0, "stop": 10, "step": 10}}
    for k, v in extra.items():
        d[k] = v
    cfg, diags = parse_config(d)
    assert not has_errors(diags + validate(cfg)), diags + validate(cfg)
    return cfg


def write_yaml(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestConfig:
    def test_all_shipped_configs_validate(self):
        paths = sorted(CONFIGS.glob("*.yaml"))
        assert len(paths) >= 5
        for p in paths:
            cfg, diags = load_config(p)
            assert not has_errors(diags + validate(cfg)), p

    def test_empty_config_uses_standard(self):
        cfg, diags = parse_config({})
        assert not diags
        assert cfg.frame_params() == FrameParams.standard()

    def test_doppler_beyond_bandwidth_rejected(self):
        cfg, _ = parse_config({"scenario": {"nu_max": 2 * 156.25e3}})
        errs = [d for d in validate(cfg) if d.level == "error"]
        assert [d.code for d in errs] == ["nu-max"]
        assert "bandwidth assumption" in errs[0].message

    def test_delay_beyond_symbol_rejected(self):
        cfg, _ = parse_config({"scenario": {"tau_max": 7e-6}})
        assert "tau-max" in [d.code for d in validate(cfg) if d.level == "error"]

    def test_dense_memory_estimate(self):
        assert dense_psi_bytes(FrameParams.standard()) == 3200 ** 2 * 16
        cfg, _ = parse_config({"experiment": "capacity-gaussian", "output": "x.csv"})
        mem = [d for d in validate(cfg) if d.code == "memory"]
        assert len(mem) == 1 and "164 MB" in mem[0].message

    def test_lmmse_cost_warning(self):
        cfg, _ = parse_config({"experiment": "pragmatic-capacity", "output": "x.csv"})
        codes = [(d.level, d.code) for d in validate(cfg)]
        assert ("warning", "lmmse-cost") in codes and not has_errors(validate(cfg))

    def test_default_output_path(self):
        cfg, _ = parse_config({})
        p = cfg.output_path()
        assert p.parent == Path("results") and p.suffix == ".csv"
        assert any(d.code == "output" for d in validate(cfg))

    def test_unknown_keys_and_types(self):
        _, diags = parse_config({"bogus": 1, "frame": {"n": 3}})
        assert sorted(d.field for d in diags if d.code == "unknown-key") == ["bogus", "frame.n"]
        with pytest.raises(ConfigError):
            parse_config([1, 2])

    @pytest.mark.parametrize("bad", [{"experiment": "nope"}, {"trials": 0}, {"seed": -1},
                                     {"sweep": {"step": 0}},
                                     {"experiment": "waterfall", "scenario": {"paths": [2]}},
                                     {"experiment": "pragmatic-capacity",
                                      "detection": {"detectors": ["zf"]}},
                                     {"experiment": "pragmatic-capacity",
                                      "detection": {"damping": 1.0}},
                                     {"frame": {"n_doppler": 0}}, {"radar": {"schedule": "random"}},
                                     {"radar": {"objective": "ls"}}])
    def test_invalid_configs(self, bad):
        cfg, diags = parse_config(bad)
        assert has_errors(diags + validate(cfg))

    def test_roundtrip_dict(self):
        cfg, _ = load_config(CONFIGS / "smoke.yaml")
        d = cfg.to_dict()
        d.pop("schema_version")
        again, diags = parse_config(d)
        assert not diags and again == cfg


class TestRun:
    def test_smoke_under_a_minute(self, tmp_path):
        cfg, _ = load_config(CONFIGS / "smoke.yaml")
        t0 = time.perf_counter()
        res = run(cfg, output=tmp_path / "smoke.csv", workers=1)
        assert time.perf_counter() - t0 < 60
        assert res.exit_code == 0
        rows = read_rows(res.csv_path)
        assert tuple(rows[0]) == CSV_COLUMNS
        metrics = {r[2] for r in rows[1:]}
        for det in ("mp_g", "mp_psi", "lmmse"):
            assert f"pragmatic_capacity_{det}[P=1]" in metrics
        for r in rows[1:]:
            assert r[0] == "pragmatic-capacity" and r[7] == "7" and r[6] == ""
        side = json.loads(res.sidecar_path.read_text())
        assert side["config"]["seed"] == 7 and side["failed_cells"] == 0
        assert side["kernel_backend"] in ("cython", "numpy")

    def test_bit_identical_reruns_and_workers(self, tmp_path):
        cfg, _ = load_config(CONFIGS / "smoke.yaml")
        cfg.trials = 3
        a = run(cfg, output=tmp_path / "a.csv", workers=1).csv_path.read_bytes()
        b = run(cfg, output=tmp_path / "b.csv", workers=1).csv_path.read_bytes()
        c = run(cfg, output=tmp_path / "c.csv", workers=3).csv_path.read_bytes()
        assert a == b == c

    def test_seed_changes_output(self, tmp_path):
        cfg, _ = load_config(CONFIGS / "smoke.yaml")
        a = run(cfg, write=False, workers=1).rows
        cfg.seed = 8
        b = run(cfg, write=False, workers=1).rows
        assert a != b

    @pytest.mark.parametrize("kind", ["radar-rmse", "crlb", "waterfall", "capacity-gaussian",
                                      "fmcw-rmse"])
    def test_every_experiment_runs(self, kind):
        extra = {}
        if kind == "radar-rmse":
            extra["radar"] = {"fine_levels": 1, "bounds": True}
        if kind == "waterfall":
            extra["sweep"] = {"start": -10, "stop": 0, "step": 10}
        cfg = toy(kind, **extra)
        res = run(cfg, write=False, workers=1)
        assert res.exit_code == 0 and not res.failures
        names = {r[1] for r in res.rows}
        assert names and all(np.isfinite(r[2]) or r[2] != r[2] for r in res.rows)
        if kind in ("radar-rmse", "fmcw-rmse"):
            assert "rmse_range_m[P=1]" in names and "rmse_velocity_mps[P=1]" in names

    def test_failed_cell_recorded_and_run_continues(self, monkeypatch, tmp_path):
        exp = REGISTRY["capacity-gaussian"]

        def flaky(ctx, P, snr_db, draw, noise):
            if snr_db > 5:
                raise FloatingPointError("boom")
            return exp.trial(ctx, P, snr_db, draw, noise)

        monkeypatch.setitem(REGISTRY, "capacity-gaussian", dataclasses.replace(exp, trial=flaky))
        cfg = toy("capacity-gaussian")
        res = run(cfg, output=tmp_path / "f.csv", workers=1)
        assert res.exit_code == 1 and len(res.failures) == cfg.trials
        assert "boom" in res.failures[0]["error"]
        names = [r[2] for r in read_rows(res.csv_path)[1:]]
        assert "failed_cells[P=1]" in names and any(n.startswith("capacity_otfs") for n in names)
        assert json.loads(res.sidecar_path.read_text())["failed_cells"] == cfg.trials

    def test_thread_env(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "3")
        assert thread_count() == 3
        monkeypatch.setenv(THREADS_ENV, "zero")
        assert thread_count() == 1
        monkeypatch.delenv(THREADS_ENV)
        assert thread_count() == 1


class TestCli:
    def test_list_experiments(self, capsys):
        assert cli.main(["list-experiments"]) == cli.EXIT_OK
        out = capsys.readouterr().out
        assert all(e in out for e in EXPERIMENTS)

    def test_validate_ok_and_errors(self, tmp_path, capsys):
        assert cli.main(["validate", str(CONFIGS / "smoke.yaml")]) == 0
        assert "OK pragmatic-capacity" in capsys.readouterr().out
        bad = write_yaml(tmp_path, {"scenario": {"nu_max": 312500.0}})
        assert cli.main(["validate", str(bad)]) == cli.EXIT_CONFIG
        assert "nu-max" in capsys.readouterr().out
        broken = tmp_path / "broken.yaml"
        broken.write_text("frame: [unclosed\n")
        assert cli.main(["validate", str(broken)]) == cli.EXIT_CONFIG
        assert cli.main(["validate", str(tmp_path / "missing.yaml")]) == cli.EXIT_CONFIG

    def test_run_exit_codes(self, tmp_path, capsys):
        good = write_yaml(tmp_path, {"experiment": "capacity-gaussian", "trials": 1, **TOY,
                                     "sweep": {"start": 0, "stop": 0, "step": 1}})
        out = tmp_path / "o.csv"
        assert cli.main(["run", str(good), "-o", str(out), "--workers", "1"]) == cli.EXIT_OK
        assert out.exists() and out.with_suffix(".json").exists()
        bad = write_yaml(tmp_path, {"trials": 0}, "bad.yaml")
        assert cli.main(["run", str(bad)]) == cli.EXIT_CONFIG

    def test_trials_override(self, tmp_path):
        out = tmp_path / "t.csv"
        assert cli.main(["run", str(CONFIGS / "smoke.yaml"), "-o", str(out), "--trials", "1",
                         "--workers", "1"]) == 0
        rows = read_rows(out)[1:]
        assert {r[5] for r in rows if "failed" not in r[2]} == {"1"}

    def test_module_entry_point(self, tmp_path):
        bad = write_yaml(tmp_path, {"trials": 0})
        r = subprocess.run([sys.executable, "-m", "otfs_jrc.cli", "validate", str(bad)],
                           capture_output=True, text=True)
        assert r.returncode == 2 and "trials" in r.stdout
