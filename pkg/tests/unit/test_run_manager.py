"""Unit tests for run configuration, persistence and section pipelines."""
import json
import os

import numpy as np
import pytest

from core.run_manager import (
    CRITERION_IDS,
    KJobResult,
    SectionResult,
    _criterion,
    _empirical_k0,
    _format_duration,
    _load_run_config,
    _normalize_run_config,
    _save_json,
    _write_csv,
    run,
)
from utils.config import DEFAULT_SEED, DEFAULT_TOLERANCES
from utils.errors import ConfigError, InvalidInputError


class TestNormalizeRunConfig:
    """Tests for _normalize_run_config function."""

    def test_empty_object_gets_defaults(self):
        """Should fill every section from the defaults."""
        config = _normalize_run_config({})
        assert config["samples"]["seed"] == DEFAULT_SEED
        assert config["tolerances"] == DEFAULT_TOLERANCES
        assert config["cutoff"]["delta1"] == 0.25

    def test_partial_sections_merge(self):
        """Should keep defaults for keys a section leaves out."""
        config = _normalize_run_config({"model": {"p": 2.0}})
        assert config["model"]["p"] == 2.0
        assert config["model"]["q"] == 1.0

    def test_rejects_non_object(self):
        """Should reject non-dict configs."""
        with pytest.raises(ConfigError):
            _normalize_run_config([1, 2])

    def test_rejects_unknown_keys(self):
        """Should name unknown top-level keys."""
        with pytest.raises(ConfigError) as exc_info:
            _normalize_run_config({"bogus": 1})
        assert exc_info.value.message == "unknown configuration keys"
        assert exc_info.value.details["keys"] == ["bogus"]

    @pytest.mark.parametrize("raw,message", [
        ({"model": 3}, "model must be an object"),
        ({"model": {"p": -1.0}}, "model.p must be positive"),
        ({"cutoff": {"delta1": 0.8, "delta2": 0.5}}, "cutoff interval must satisfy 0 < delta1 < delta2 < 1"),
        ({"k_grid": []}, "k_grid must be a list with at least 1 entries"),
        ({"output_dir": "  "}, "output_dir must be a non-empty path"),
    ])
    def test_reports_first_error(self, raw, message):
        """Should raise with the first validation message."""
        with pytest.raises(ConfigError) as exc_info:
            _normalize_run_config(raw)
        assert exc_info.value.message == message
        assert message in exc_info.value.details["errors"]

    def test_rejects_bad_epsilon(self):
        """Should require continuation epsilons above -1."""
        with pytest.raises(ConfigError) as exc_info:
            _normalize_run_config({"continuation": {"epsilons": [0.1, -1.0]}})
        assert "continuation.epsilons[1] must be a number greater than -1" in exc_info.value.details["errors"]


class TestLoadRunConfig:
    """Tests for _load_run_config function."""

    def test_missing_file(self, temp_dir):
        """Should raise a config error for a missing file."""
        with pytest.raises(ConfigError) as exc_info:
            _load_run_config(os.path.join(temp_dir, "missing.json"))
        assert exc_info.value.message.startswith("config file not found")

    def test_invalid_json(self, temp_dir):
        """Should raise a config error for malformed JSON."""
        path = os.path.join(temp_dir, "bad.json")
        with open(path, "w") as f:
            f.write("{not json")
        with pytest.raises(ConfigError) as exc_info:
            _load_run_config(path)
        assert exc_info.value.message.startswith("config file is not valid JSON")

    def test_overrides_apply(self, temp_dir, small_config):
        """Should let command-line values win over the file."""
        path = os.path.join(temp_dir, "run.json")
        with open(path, "w") as f:
            json.dump(small_config, f)
        out = os.path.join(temp_dir, "elsewhere")
        config = _load_run_config(path, output_dir=out, seed=99, jobs=3)
        assert config["output_dir"] == out
        assert config["samples"]["seed"] == 99
        assert config["samples"]["count"] == 24
        assert config["jobs"] == 3

    def test_override_is_validated(self):
        """Should validate overrides like file values."""
        with pytest.raises(ConfigError):
            _load_run_config(jobs=0)


class TestPersistence:
    """Tests for CSV and JSON writers."""

    def test_csv_format(self, temp_dir):
        """Should write LF lines with round-trip float formatting."""
        path = os.path.join(temp_dir, "sub", "table.csv")
        _write_csv(path, ["k", "value", "flag"], [(16, 0.1, True), (np.int64(32), np.float64(2.0), False)])
        with open(path, "rb") as f:
            content = f.read().decode("utf-8")
        assert content == "k,value,flag\n16,0.10000000000000001,true\n32,2,false\n"

    def test_json_sorted_and_finite(self, temp_dir):
        """Should sort keys and write non-finite floats as null."""
        path = os.path.join(temp_dir, "report.json")
        _save_json(path, {"b": float("nan"), "a": np.float64(1.5), "c": (1, np.int32(2))})
        with open(path) as f:
            text = f.read()
        assert json.loads(text) == {"a": 1.5, "b": None, "c": [1, 2]}
        assert text.index('"a"') < text.index('"b"') < text.index('"c"')
        assert os.listdir(temp_dir) == ["report.json"]

    @pytest.mark.parametrize("seconds,expected", [
        (3.0, "3.0s"),
        (62.0, "1m 2.0s"),
        (3723.0, "1h 2m 3.0s"),
        (-1.0, "0.0s"),
    ])
    def test_format_duration(self, seconds, expected):
        """Should render durations compactly."""
        assert _format_duration(seconds) == expected


class TestCriteria:
    """Tests for criterion records and k0."""

    def test_criterion_status(self):
        """Should map True/False/None to PASS/FAIL/SKIP."""
        assert _criterion(True, 1.0, 2.0)["status"] == "PASS"
        assert _criterion(False)["status"] == "FAIL"
        record = _criterion(None, reason="values vanish to roundoff")
        assert record == {"status": "SKIP", "value": None, "threshold": None,
                          "reason": "values vanish to roundoff"}

    def test_empirical_k0(self):
        """Should be the smallest k after the last failure."""
        def job(k, ok=True):
            return KJobResult(k=k, record={}, error=None if ok else RuntimeError("x"))

        assert _empirical_k0([job(5, False), job(16), job(32)]) == 16
        assert _empirical_k0([job(16), job(32, False), job(64)]) == 64
        assert _empirical_k0([job(16), job(32), job(64)]) == 16
        assert _empirical_k0([job(16), job(32, False)]) is None

    def test_section_result_numbers_criteria(self):
        """Should stamp the acceptance criterion number on every record."""
        result = SectionResult(summary={}, criteria={"counting": _criterion(True), "graph_decay": _criterion(None)})
        assert result.criteria["counting"]["criterion"] == 10
        assert result.criteria["graph_decay"]["criterion"] == 2
        assert sorted(CRITERION_IDS.values()) == list(range(1, 12))


class TestRun:
    """Tests for the run pipelines on a small config."""

    def test_unknown_subcommand(self, small_config):
        """Should reject subcommands outside the supported set."""
        with pytest.raises(InvalidInputError):
            run("serve", _normalize_run_config(small_config))

    def test_spectrum(self, small_config):
        """Should pass the counting criterion and write the mode table."""
        report = run("spectrum", _normalize_run_config(small_config))
        assert report["criteria"]["counting"]["status"] == "PASS"
        assert report["criteria"]["counting"]["lattice_match"] is True
        assert report["criteria"]["counting"]["criterion"] == 10
        out = small_config["output_dir"]
        with open(os.path.join(out, "spectrum.csv")) as f:
            assert f.readline() == "j,a,b,lambda,norm_sq\n"
        assert report["files"] == ["spectrum.csv", "report.json"]
        assert report["sections"]["spectrum"]["counts"][0] == {"k": 16, "N_k": 152, "lattice": 152, "shell": 152}

    def test_example(self, small_config):
        """Should certify the exact example and clear stale errors."""
        out = small_config["output_dir"]
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "error.json"), "w") as f:
            f.write("{}")
        report = run("example", _normalize_run_config(small_config))
        assert report["criteria"]["exact_example"]["status"] == "PASS"
        assert not os.path.exists(os.path.join(out, "error.json"))
        records = report["sections"]["example"]["epsilons"]
        assert [r["eps"] for r in records] == [0.05, 0.1, 0.5]
        assert all(not r["perturbed_certificate"]["passed"] for r in records)
        with open(os.path.join(out, "report.json")) as f:
            assert json.load(f)["subcommand"] == "example"

    def test_continue(self, small_config):
        """Should confirm the linearization and a non-constant direction."""
        report = run("continue", _normalize_run_config(small_config))
        criterion = report["criteria"]["continuation_derivative"]
        assert criterion["status"] == "PASS"
        assert criterion["spread"] >= 0.1
        basis = report["sections"]["continue"]["bases"][0]
        assert basis["certificate"]["passed"]
        assert basis["solver_agreement"] <= 1e-12


@pytest.mark.slow
class TestFullRuns:
    """End-to-end `all` runs with every criterion applicable."""

    def test_round_defaults_pass_every_criterion(self, temp_dir):
        """Should PASS all eleven criteria on the default round config."""
        config = _normalize_run_config({"output_dir": os.path.join(temp_dir, "round")})
        report = run("all", config)
        criteria = report["criteria"]
        assert {name: c["status"] for name, c in criteria.items()} == {name: "PASS" for name in CRITERION_IDS}
        assert {name: c["criterion"] for name, c in criteria.items()} == CRITERION_IDS
        assert criteria["kernel_leading_term"]["deviation_check"] == "applied"
        assert criteria["graph_decay"]["skipped"] == ["values vanish to roundoff"]

    def test_round_embed_records_count_modes(self, temp_dir):
        """Should report N_k and the F_k component count separately."""
        config = _normalize_run_config({
            "k_grid": [16, 32],
            "samples": {"count": 24, "quasi_random_count": 8},
            "output_dir": os.path.join(temp_dir, "embed"),
        })
        report = run("embed", config)
        first = report["sections"]["embed"]["records"][0]
        assert first["k"] == 16
        assert first["N_k"] == 152
        # two reference modes plus shells m = 5..11
        assert first["components"] == 2 + sum(m + 1 for m in range(5, 12))

    def test_weighted_grid_pass_every_criterion(self, temp_dir):
        """Should PASS all criteria on beta = (2, 3) once k starts at 32."""
        config = _normalize_run_config({
            "model": {"p": 2.0, "q": 3.0},
            "k_grid": [32, 64, 128, 256],
            "output_dir": os.path.join(temp_dir, "weighted"),
        })
        report = run("all", config)
        criteria = report["criteria"]
        assert {name: c["status"] for name, c in criteria.items()} == {name: "PASS" for name in CRITERION_IDS}
        kernel = criteria["kernel_leading_term"]
        assert kernel["deviation_check"] == "skipped"
        assert kernel["threshold"] is None
        assert -1.4 <= kernel["remainder_slope"] <= -0.6
