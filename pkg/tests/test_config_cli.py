import csv
import json
import os
import subprocess
import sys

import pytest

from prgf import config as config_mod
from prgf.cli import BENCH_COLUMNS, CURVE_COLUMNS, main
from prgf.errors import ConfigurationError
from prgf.oracle import make_synthetic
from prgf.remote import serve
from prgf.attack import SUMMARY_COLUMNS

SMALL = ["--dim", "64", "--q", "10", "--max-queries", "2000", "--methods", "rgf,prgf", "--seeds", "0-4",
         "--set", "attack.epsilon=2.0", "--set", "attack.eta=0.2"]


def _csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def _lines(path):
    with open(path) as fh:
        return fh.read().splitlines()


class TestConfig:
    def test_defaults_validate(self):
        cfg = config_mod.resolve({})
        assert cfg == config_mod.resolve(cfg)
        assert list(cfg["methods"])[:2] == ["rgf", "prgf"]

    @pytest.mark.parametrize("raw", [
        {"estimator": {"q": 0}},
        {"estimator": {"threshold_c": 1.0}},
        {"attack": {"norm": "l3"}},
        {"dim": 1},
        {"seeds": []},
        {"bogus": 1},
        {"estimator": {"qq": 3}},
        {"methods": ["rgf", "nope"]},
        {"methods": {"x": {"method": "prgf", "extra": 1}}},
        {"prior": {"subspace_mode": "image"}},
    ])
    def test_rejected(self, raw):
        with pytest.raises(ConfigurationError):
            config_mod.resolve(raw)

    def test_error_names_the_path(self):
        with pytest.raises(ConfigurationError, match="estimator/q"):
            config_mod.resolve({"estimator": {"q": 0}})

    def test_partial_sections_merge(self):
        cfg = config_mod.resolve({"attack": {"eta": 0.5}})
        assert cfg["attack"]["eta"] == 0.5
        assert cfg["attack"]["max_queries"] == 10_000

    def test_methods_replace(self):
        cfg = config_mod.resolve({"methods": {"mine": {"method": "prgf", "lambda_override": 0.2}}})
        assert cfg["methods"] == {"mine": {"method": "prgf", "lambda_override": 0.2}}

    def test_report_is_accepted(self):
        cfg = config_mod.resolve({"dim": 32})
        assert config_mod.resolve({"config": cfg, "summary": []}) == cfg

    def test_image_mode_defaults_box(self):
        cfg = config_mod.resolve({"dim": 48, "prior": {"subspace_mode": "image", "image_shape": [4, 4, 3],
                                                       "low_shape": [2, 2, 3]}})
        assert cfg["attack"]["box"] == [0.0, 1.0]
        assert config_mod.to_bench_config(cfg).basis().d == 12

    def test_to_bench_config(self):
        b = config_mod.to_bench_config(config_mod.resolve({"dim": 32, "model": {"seed": 3}}))
        assert b.dim == 32 and b.model_seed == 3
        assert "seed" not in b.model
        assert b.model_spec(9).seed == 3

    def test_set_path(self):
        raw = config_mod.set_path({}, "estimator.q", 7)
        assert raw == {"estimator": {"q": 7}}
        with pytest.raises(ConfigurationError):
            config_mod.set_path({"dim": 3}, "dim.x", 1)

    def test_load_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{nope")
        with pytest.raises(ConfigurationError):
            config_mod.load(str(p))


class TestAttackCommand:
    def test_invalid_config_writes_nothing(self, tmp_path):
        out = tmp_path / "out"
        assert main(["attack", "--q", "0", "--out", str(out)]) == 2
        assert not out.exists()

    def test_unknown_key_in_file(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"estimator": {"q": 5, "speed": "fast"}}))
        assert main(["attack", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
        assert not (tmp_path / "o").exists()

    def test_outputs(self, tmp_path):
        out = tmp_path / "run"
        assert main(["attack", *SMALL, "--out", str(out)]) == 0
        rows = _csv(out / "summary.csv")
        assert [r["method"] for r in rows] == ["rgf", "prgf"]
        assert tuple(rows[0]) == SUMMARY_COLUMNS
        assert all(r["seeds"] == "5" for r in rows)
        lines = _lines(out / "traces.jsonl")
        assert json.loads(lines[0])["config"]["estimator"]["q"] == 10
        assert len([ln for ln in lines if '"outcome"' in ln]) == 10
        assert tuple(_csv(out / "curve.csv")[0]) == CURVE_COLUMNS
        assert all(r["ASR"] == "1.0" for r in rows)
        report = json.loads((out / "report.json").read_text())
        assert set(report) >= {"config", "summary", "runs", "backend"}

    def test_report_rerun_reproduces(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["attack", *SMALL, "--out", str(a)]) == 0
        assert main(["attack", "--config", str(a / "report.json"), "--out", str(b)]) == 0
        for name in ("summary.csv", "curve.csv"):
            assert (a / name).read_text() == (b / name).read_text()
        assert _lines(a / "traces.jsonl")[1:] == _lines(b / "traces.jsonl")[1:]

    def test_flags_override_file(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"dim": 32, "estimator": {"q": 4}, "seeds": [0], "methods": ["rgf"],
                                 "attack": {"max_queries": 500}}))
        out = tmp_path / "o"
        assert main(["attack", "--config", str(p), "--q", "6", "--set", "attack.eta=0.3", "--out", str(out)]) == 0
        cfg = json.loads((out / "report.json").read_text())["config"]
        assert cfg["estimator"]["q"] == 6 and cfg["dim"] == 32 and cfg["attack"]["eta"] == 0.3

    def test_remote_needs_model_seed(self, tmp_path):
        assert main(["attack", *SMALL, "--oracle", "remote://127.0.0.1:1", "--out", str(tmp_path / "o")]) == 2

    def test_remote_matches_local(self, tmp_path):
        flags = [*SMALL, "--seeds", "0", "--set", "model.seed=5"]
        assert main(["attack", *flags, "--out", str(tmp_path / "local")]) == 0
        cfg = config_mod.to_bench_config(config_mod.resolve({"dim": 64, "model": {"seed": 5}}))
        with serve(make_synthetic(cfg.model_spec(0))) as srv:
            rc = main(["attack", *flags, "--oracle", f"remote://{srv.endpoint}", "--out", str(tmp_path / "far")])
        assert rc == 0
        for name in ("summary.csv", "curve.csv"):
            assert (tmp_path / "local" / name).read_text() == (tmp_path / "far" / name).read_text()
        assert _lines(tmp_path / "local" / "traces.jsonl")[1:] == _lines(tmp_path / "far" / "traces.jsonl")[1:]

    def test_refused_connection_aborts(self, tmp_path):
        with serve(make_synthetic(config_mod.to_bench_config(config_mod.resolve({"dim": 64})).model_spec(0))) as s:
            endpoint = s.endpoint
        rc = main(["attack", *SMALL, "--seeds", "0", "--set", "model.seed=0", "--oracle", f"remote://{endpoint}",
                   "--out", str(tmp_path / "o")])
        assert rc == 1
        traces = [json.loads(ln) for ln in _lines(tmp_path / "o" / "traces.jsonl")[1:]]
        assert {t["outcome"] for t in traces if "outcome" in t} == {"aborted"}


class TestBenchCommand:
    def test_bench_columns(self, tmp_path, capsys):
        assert main(["bench", *SMALL, "--seeds", "0-1", "--out", str(tmp_path)]) == 0
        assert tuple(_csv(tmp_path / "summary.csv")[0]) == BENCH_COLUMNS
        assert "rgf" in capsys.readouterr().out


class TestVerifyCommand:
    def test_lambda_suite(self, tmp_path, capsys):
        assert main(["verify", "--suite", "lambda", "--seed", "1", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "[PASS]" in out and "[FAIL]" not in out
        rep = json.loads((tmp_path / "verify-lambda-seed1.json").read_text())
        assert rep["passed"] and rep["seed"] == 1

    def test_env_seed(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PRGF_SEED", "3")
        assert main(["verify", "--suite", "lambda", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "verify-lambda-seed3.json").exists()

    def test_bad_env_seed(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PRGF_SEED", "x")
        with pytest.raises(SystemExit):
            main(["verify", "--suite", "lambda", "--out", str(tmp_path)])


class TestServeCommand:
    def test_subprocess_round_trip(self):
        proc = subprocess.Popen([sys.executable, "-m", "prgf.cli", "serve", "--model", "linear", "--dim", "2",
                                 "--seed", "0", "--budget", "1"], stdout=subprocess.PIPE, text=True,
                                env={**os.environ})
        try:
            line = proc.stdout.readline()
            endpoint = line.rsplit(" on ", 1)[1].strip()
            from test_remote import _raw
            req = {"id": 1, "op": "loss", "x": [0, 0], "label": 0}
            resp = _raw(endpoint, req, req)
            assert resp[0] == {"id": 1, "loss": 0.0, "queries_used": 1}
            assert resp[1]["error"] == "budget_exhausted"
        finally:
            proc.terminate()
            proc.wait(10)
