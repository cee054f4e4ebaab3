import csv
import json
import math

import numpy as np
import pytest

from bklab.cli import (
    CSV_COLUMNS,
    EXIT_FAIL,
    EXIT_OK,
    EXIT_USAGE,
    ConfigError,
    load_experiment,
    main,
)
from bklab.dist import DiscreteDist, ProductDist
from bklab.stoch import cc_search

UNIFORM4_ITEM = {"kind": "discrete", "values": [1, 2, 3, 4],
                 "probs": [0.25, 0.25, 0.25, 0.25]}


@pytest.fixture(autouse=True)
def _no_ambient_seed(monkeypatch):
    monkeypatch.delenv("BKLAB_SEED", raising=False)


def write_config(tmp_path, name="cfg.json", **overrides):
    obj = {"product": {"items": [UNIFORM4_ITEM]}, "n": 1, "seed": 7, "samples": 20_000}
    obj.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestLoadExperiment:
    def test_defaults(self, tmp_path):
        cfg = load_experiment(write_config(tmp_path))
        assert cfg.n == 1 and cfg.seed == 7 and cfg.samples == 20_000
        assert cfg.mechanism == "additive" and cfg.region_mode == "value"
        assert cfg.constraints is None and cfg.profile is None

    def test_flag_overrides_beat_file_and_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BKLAB_SEED", "55")
        cfg = load_experiment(write_config(tmp_path), seed=9, samples=123)
        assert cfg.seed == 9 and cfg.samples == 123

    def test_env_seed_beats_file(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BKLAB_SEED", "55")
        assert load_experiment(write_config(tmp_path)).seed == 55

    def test_env_seed_must_be_int(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BKLAB_SEED", "often")
        with pytest.raises(ConfigError):
            load_experiment(write_config(tmp_path))

    def test_rejects_unknown_mechanism(self, tmp_path):
        with pytest.raises(ConfigError):
            load_experiment(write_config(tmp_path, mechanism="lottery"))

    def test_rejects_unknown_region_mode(self, tmp_path):
        with pytest.raises(ConfigError):
            load_experiment(write_config(tmp_path, region_mode="rank"))

    def test_rejects_misshapen_profile(self, tmp_path):
        with pytest.raises(ConfigError):
            load_experiment(write_config(tmp_path, profile=[[1.0, 2.0]]))

    def test_rejects_missing_product(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{}")
        with pytest.raises(ConfigError):
            load_experiment(str(path))

    def test_rejects_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_experiment(str(path))

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_experiment("/nonexistent/cfg.json")


class TestOpt:
    def test_single_item_uniform(self, tmp_path, capsys):
        out = str(tmp_path / "opt.csv")
        code = main(["opt", "--config", write_config(tmp_path), "--out", out])
        assert code == EXIT_OK
        assert "lp_revenue = 1.5" in capsys.readouterr().out
        (row,) = read_rows(out)
        assert row["experiment"] == "opt" and float(row["value"]) == 1.5

    def test_requires_one_bidder(self, tmp_path, capsys):
        code = main(["opt", "--config", write_config(tmp_path, n=2)])
        assert code == EXIT_USAGE
        assert "config error" in capsys.readouterr().err


class TestBound:
    def test_single_item_all_rows_equal_myerson(self, tmp_path):
        # one uniform{1..4} item, one bidder: every benchmark equals the
        # 1.5 posted-price optimum
        out = str(tmp_path / "bound.csv")
        code = main(["bound", "--config", write_config(tmp_path), "--out", out])
        assert code == EXIT_OK
        rows = read_rows(out)
        assert [r["parameter"] for r in rows] == [
            "single_bidder[value]", "single_bidder[quantile]",
            "multi_bidder[value,n=1]", "multi_bidder[quantile,n=1]"]
        for r in rows:
            assert float(r["value"]) == pytest.approx(1.5)
            assert r["verdict"] == "info"

    def test_heavy_tail_quantile_mode_is_infinite(self, tmp_path, capsys):
        # pairing the capped item with the infinite-mean one puts the heavy
        # tail outside its quantile region, where it is scored by raw value
        path = write_config(
            tmp_path,
            product={"items": [{"kind": "equal_revenue_capped", "k": 100.0},
                               {"kind": "shifted_equal_revenue", "k": 100.0}]},
            samples=2000)
        assert main(["bound", "--config", path]) == EXIT_OK
        assert "single_bidder[quantile] = inf" in capsys.readouterr().out


class TestCcSearch:
    def test_zero_benchmark_found_at_zero(self, tmp_path):
        out = str(tmp_path / "cc.csv")
        code = main(["cc-search", "--config",
                     write_config(tmp_path, benchmark=0.0, c_max=2), "--out", out])
        assert code == EXIT_OK
        rows = read_rows(out)
        assert [r["parameter"] for r in rows] == ["benchmark", "c=0", "c=1", "c=2",
                                                  "found_c"]
        assert float(rows[-1]["value"]) == 0.0

    def test_matches_library_search(self, tmp_path):
        out = str(tmp_path / "cc.csv")
        path = write_config(tmp_path, benchmark="lp-opt", c_max=3)
        assert main(["cc-search", "--config", path, "--out", out]) == EXIT_OK
        rows = read_rows(out)
        F = ProductDist((DiscreteDist((1.0, 2.0, 3.0, 4.0), (0.25,) * 4),))
        lib = cc_search(F, 1, None, 1.5, 3, samples=20_000, seed=7)
        assert lib == 1
        assert float(rows[-1]["value"]) == float(lib)
        verdicts = [r["verdict"] for r in rows[1:-1]]
        assert verdicts == ["fail", "pass", "pass", "pass"]

    def test_exhausted_search_reports_nan(self, tmp_path):
        out = str(tmp_path / "cc.csv")
        path = write_config(tmp_path, benchmark=50.0, c_max=1)
        assert main(["cc-search", "--config", path, "--out", out]) == EXIT_OK
        assert math.isnan(float(read_rows(out)[-1]["value"]))

    def test_benchmark_required(self, tmp_path, capsys):
        code = main(["cc-search", "--config", write_config(tmp_path)])
        assert code == EXIT_USAGE
        assert "benchmark" in capsys.readouterr().err


class TestSimulate:
    def test_fixed_profile_additive(self, tmp_path, capsys):
        path = write_config(
            tmp_path, n=2,
            product={"items": [UNIFORM4_ITEM, UNIFORM4_ITEM]},
            profile=[[3, 1], [2, 4]])
        assert main(["simulate", "--config", path]) == EXIT_OK
        outcome = json.loads(capsys.readouterr().out)
        assert outcome["assignment"] == [0, 1]
        assert outcome["payments"] == [2.0, 1.0]
        assert outcome["revenue"] == 3.0
        assert outcome["welfare"] == 7.0

    def test_sampled_profile_is_deterministic(self, tmp_path, capsys):
        path = write_config(tmp_path, n=3)
        assert main(["simulate", "--config", path]) == EXIT_OK
        first = capsys.readouterr().out
        assert main(["simulate", "--config", path]) == EXIT_OK
        assert capsys.readouterr().out == first

    def test_constrained_under_full_matches_additive(self, tmp_path, capsys):
        items = {"items": [UNIFORM4_ITEM, UNIFORM4_ITEM]}
        a = write_config(tmp_path, "a.json", n=2, product=items)
        b = write_config(tmp_path, "b.json", n=2, product=items,
                         mechanism="constrained",
                         constraints=[{"kind": "full", "m": 2}] * 2)
        assert main(["simulate", "--config", a]) == EXIT_OK
        add = json.loads(capsys.readouterr().out)
        assert main(["simulate", "--config", b]) == EXIT_OK
        con = json.loads(capsys.readouterr().out)
        assert add == con

    def test_unit_demand_matching(self, tmp_path, capsys):
        path = write_config(
            tmp_path, n=2, mechanism="ud",
            product={"items": [UNIFORM4_ITEM, UNIFORM4_ITEM]},
            profile=[[4, 3], [4, 1]])
        assert main(["simulate", "--config", path]) == EXIT_OK
        outcome = json.loads(capsys.readouterr().out)
        # matching: bidder 1 must take item 0, pushing bidder 0 to item 1
        assert outcome["assignment"] == [1, 0]
        assert outcome["welfare"] == 7.0


class TestVerify:
    def test_single_suite_csv(self, tmp_path, capsys):
        out = str(tmp_path / "rows.csv")
        assert main(["verify", "classic-bk", "--out", out]) == EXIT_OK
        assert "PASS classic-bk" in capsys.readouterr().out
        rows = read_rows(out)
        assert rows and all(r["experiment"] == "classic-bk" for r in rows)
        with open(out) as fh:
            header = fh.readline().strip().split(",")
        assert tuple(header) == CSV_COLUMNS

    def test_unknown_suite_is_usage_error(self, capsys):
        assert main(["verify", "nope"]) == EXIT_USAGE
        assert "unknown suite" in capsys.readouterr().err

    def test_failing_override_sets_exit_code(self, tmp_path, capsys):
        strict = tmp_path / "strict.json"
        cfg = json.loads(
            (json.dumps({"seed": 1101, "count": 20, "bidders": [1, 2, 3],
                         "min_size": 3, "max_size": 6, "max_start": 3})))
        cfg["tolerance"] = -0.5
        strict.write_text(json.dumps(cfg))
        code = main(["verify", "classic-bk", "--config", str(strict)])
        assert code == EXIT_FAIL
        assert "FAIL classic-bk" in capsys.readouterr().out

    def test_override_rejected_for_all(self, tmp_path, capsys):
        strict = tmp_path / "s.json"
        strict.write_text("{}")
        assert main(["verify", "all", "--config", str(strict)]) == EXIT_USAGE

    def test_usage_error_from_argparse(self):
        with pytest.raises(SystemExit) as exc:
            main(["bound"])  # --config is required
        assert exc.value.code == EXIT_USAGE
