import csv
import json
from pathlib import Path

import pytest

from gnclab.experiments import (
    ConfigError,
    ExperimentConfig,
    build_instance,
    format_value,
    pac_frequency_check,
    run_experiment,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

TINY = {
    "teacher": {"arch": {"type": "fc", "widths": [2, 1, 1]}, "seed": 1, "policy": "reject-constant"},
    "student": {"type": "fc", "widths": [2, 2, 1]},
    "Q": 3,
    "domain": {"kind": "hypercube", "shape": [2]},
}


def _cfg(kind, **params):
    return dict({"schema": 1, "kind": kind, "seed": 0, "workers": 1}, **params)


def _read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    @pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
    def test_bundled_configs_validate(self, path):
        ExperimentConfig.from_json(path)

    def test_schema(self):
        with pytest.raises(ConfigError, match="schema"):
            ExperimentConfig.from_dict({"kind": "margins"})

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="unknown experiment kind"):
            ExperimentConfig.from_dict({"schema": 1, "kind": "nope"})

    def test_eps_out_of_range_names_bound(self):
        bad = _cfg("pac-frequency", eps=1.5, delta=0.1, reps=3, **TINY)
        with pytest.raises(ConfigError, match="lemma1"):
            ExperimentConfig.from_dict(bad)

    def test_noninterp_eps_limit(self):
        bad = _cfg("noninterp-frequency", eps=0.45, delta=0.1, reps=3, flip=[0], **TINY)
        with pytest.raises(ConfigError, match="eps"):
            ExperimentConfig.from_dict(bad)

    def test_missing_field(self):
        with pytest.raises(ConfigError, match="'student'"):
            ExperimentConfig.from_dict(_cfg("pac-frequency", eps=0.2, delta=0.1, reps=3, teacher=TINY["teacher"], Q=3))

    def test_budget(self):
        big = dict(TINY, student={"type": "fc", "widths": [2, 9, 1]})
        with pytest.raises(ConfigError, match="budget"):
            ExperimentConfig.from_dict(_cfg("pac-frequency", eps=0.2, delta=0.1, reps=3, **big))

    def test_incompatible_embedding(self):
        bad = dict(TINY, student={"type": "fc", "widths": [2, 2, 1], "flavor": "scaled"})
        with pytest.raises(ConfigError, match="flavor"):
            build_instance(bad, 0)

    def test_format_value(self):
        assert format_value(True) == "true"
        assert format_value(0.1) == "0.10000000000000001"
        assert format_value(None) == ""


class TestRuns:
    def test_oracle_vs_bound(self, tmp_path):
        run_experiment(ExperimentConfig.from_json(CONFIGS / "oracle-vs-bound.json"), tmp_path)
        rows = _read_csv(tmp_path / "results.csv")
        assert len(rows) == 3
        for r in rows:
            assert float(r["p_tilde_exact"]) >= float(r["q_minus_pc"])
            assert r["pass"] == "true"

    def test_digests_reproducible(self, tmp_path):
        cfg = _cfg("pac-frequency", eps=0.2, delta=0.1, reps=5, **TINY)
        m1 = run_experiment(cfg, tmp_path / "a")
        m2 = run_experiment(dict(cfg, workers=3), tmp_path / "b")
        assert m1.files["results.csv"] == m2.files["results.csv"]
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
        assert set(manifest["files"]) == {"config.json", "results.csv", "summary.json"}

    def test_pac_frequency_report(self):
        rep = pac_frequency_check(_cfg("pac-frequency", eps=0.2, delta=0.1, reps=20, **TINY))
        assert rep["reps"] == 20 and len(rep["rows"]) == 20
        assert 0 <= rep["fraction"] <= 1

    def test_noninterp(self, tmp_path):
        cfg = _cfg("noninterp-frequency", eps=0.2, delta=0.1, reps=5, flip=[0], N=40, **TINY)
        run_experiment(cfg, tmp_path)
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["eps_star"] == 0.25 and summary["gamma"] == 0.45

    def test_volume_decay(self, tmp_path):
        run_experiment(_cfg("volume-decay", eps=0.2, delta=0.1, reps=10, **TINY), tmp_path)
        rows = _read_csv(tmp_path / "results.csv")
        assert all(0 <= float(r["bad_full"]) <= 1 for r in rows)

    def test_width_sweep(self, tmp_path):
        cfg = _cfg("width-sweep", teacher=TINY["teacher"], d0=2, Q=3, student_widths=[1, 2], N=6,
                   n_samples=20, mc_samples=2000, domain={"kind": "gaussian", "shape": [2]})
        run_experiment(cfg, tmp_path)
        rows = _read_csv(tmp_path / "results.csv")
        assert [r["d1"] for r in rows] == ["1", "2"]

    def test_table1(self, tmp_path):
        run_experiment(ExperimentConfig.from_json(CONFIGS / "table1-resnet18.json"), tmp_path)
        (row,) = _read_csv(tmp_path / "results.csv")
        assert 0.08 <= float(row["alpha"]) <= 0.17

    def test_margins(self, tmp_path):
        run_experiment(_cfg("margins", d0=5, d1=20, d1_star=4, N=30, trials=3), tmp_path)
        rows = _read_csv(tmp_path / "results.csv")
        assert list(rows[0]) == ["trial", "alpha", "beta", "log_ratio", "degenerate"]
