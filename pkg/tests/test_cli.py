"""CLI surface: artifacts, exit codes, determinism, library equivalence."""

import csv
import json

import pytest

from xconsist import metrics
from xconsist.cli import main
from xconsist.core import parse_bundle, write_records_jsonl, write_samples_jsonl

from conftest import make_pair_bundle


@pytest.fixture
def pair_files(tmp_path):
    bundle = make_pair_bundle({
        "s1": (-1.0, {"c1": -2.0, "c2": -3.0}, -1.0, {"c1": -0.5, "c2": -4.0}),
        "s2": (-1.0, {"c1": -2.0, "c2": -0.5}, -1.0, {"c1": -3.0, "c2": -2.0}),
        "s3": (-2.0, {"c1": -1.0, "c2": -3.0}, -2.5, {"c1": -2.0, "c2": -3.5}),
    })
    samples = tmp_path / "samples.jsonl"
    records = tmp_path / "records.jsonl"
    write_samples_jsonl(samples, bundle.samples.values())
    write_records_jsonl(records, bundle.records.values())
    return samples, records


class TestEvaluate:
    def test_artifacts_and_exit_zero(self, pair_files, tmp_path):
        samples, records = pair_files
        out = tmp_path / "out"
        code = main([
            "evaluate", "--samples", str(samples), "--records", str(records),
            "--anchor", "anchor", "--eval", "eval", "--k-max", "3",
            "--out", str(out),
        ])
        assert code == 0
        for name in ("report.json", "ck_curve.csv", "scatter.csv", "ck_curve.svg"):
            assert (out / name).exists(), name

    def test_report_matches_library_bit_for_bit(self, pair_files, tmp_path):
        samples, records = pair_files
        out = tmp_path / "out"
        main([
            "evaluate", "--samples", str(samples), "--records", str(records),
            "--anchor", "anchor", "--eval", "eval", "--k-max", "3",
            "--out", str(out),
        ])
        got = json.loads((out / "report.json").read_text(encoding="utf-8"))
        bundle = parse_bundle(samples, records, anchor="anchor")
        expected = metrics.build_report(bundle, "anchor", "eval", 3).to_json_dict()
        assert got == json.loads(json.dumps(expected))

    def test_missing_anchor_task_exits_two(self, pair_files, tmp_path, capsys):
        samples, records = pair_files
        code = main([
            "evaluate", "--samples", str(samples), "--records", str(records),
            "--anchor", "missing", "--eval", "eval", "--out", str(tmp_path / "o"),
        ])
        assert code == 2
        assert "missing" in capsys.readouterr().err

    def test_invalid_records_exit_two_with_diagnostics(self, pair_files, tmp_path, capsys):
        samples, _ = pair_files
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"sample_id": "s1"\n', encoding="utf-8")
        code = main([
            "evaluate", "--samples", str(samples), "--records", str(bad),
            "--anchor", "anchor", "--eval", "eval", "--out", str(tmp_path / "o"),
        ])
        assert code == 2
        err = capsys.readouterr().err
        assert "bad.jsonl:1" in err

    def test_unknown_flag_exits_two(self, pair_files, tmp_path):
        samples, records = pair_files
        with pytest.raises(SystemExit) as exc:
            main([
                "evaluate", "--samples", str(samples), "--records", str(records),
                "--anchor", "anchor", "--eval", "eval", "--out", str(tmp_path / "o"),
                "--bogus-flag", "1",
            ])
        assert exc.value.code == 2


class TestSimulate:
    def test_csv_matches_closed_forms(self, tmp_path):
        out = tmp_path / "sim"
        code = main([
            "simulate", "--scenario", "independent", "--grid-step", "0.5",
            "--trials", "20000", "--seed", "5", "--out", str(out),
        ])
        assert code == 0
        with open(out / "sweep.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 9
        for row in rows:
            assert abs(float(row["c1_mc"]) - float(row["c1_closed"])) < 0.02
        assert (out / "c1_heatmap.svg").exists()

    def test_zero_trials_exits_two(self, tmp_path):
        code = main([
            "simulate", "--scenario", "same", "--trials", "0",
            "--out", str(tmp_path / "o"),
        ])
        assert code == 2

    def test_bad_scenario_exits_two(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--scenario", "sideways", "--out", str(tmp_path / "o")])
        assert exc.value.code == 2

    def test_fixed_seed_reproducible_bytes(self, tmp_path):
        args = ["simulate", "--scenario", "different", "--grid-step", "0.5",
                "--trials", "5000", "--seed", "7"]
        main(args + ["--out", str(tmp_path / "a")])
        main(args + ["--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "sweep.csv").read_bytes() == \
            (tmp_path / "b" / "sweep.csv").read_bytes()


def write_scores_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "loglik", "quality"])
        writer.writerows(rows)


class TestCalibrate:
    def test_linear_fixture_slope(self, tmp_path):
        scores = tmp_path / "scores.csv"
        write_scores_csv(scores, [(f"s{i}", x, 2.0 * x + 1.0) for i, x in enumerate(range(-10, 11))])
        out = tmp_path / "cal"
        code = main(["calibrate", "--scores", str(scores), "--out", str(out)])
        assert code == 0
        payload = json.loads((out / "reliability.json").read_text(encoding="utf-8"))
        assert payload["fit_slope"] == pytest.approx(2.0, abs=1e-9)
        assert payload["fit_mse"] < 1e-12
        assert (out / "reliability.svg").exists()

    def test_temperature_identity_and_scaling(self, tmp_path):
        scores = tmp_path / "scores.csv"
        write_scores_csv(scores, [(f"s{i}", x, 2.0 * x) for i, x in enumerate(range(-8, 9))])
        out1 = tmp_path / "t1"
        out2 = tmp_path / "t2"
        main(["calibrate", "--scores", str(scores), "--temperature", "1.0", "--out", str(out1)])
        main(["calibrate", "--scores", str(scores), "--temperature", "2.0", "--out", str(out2)])
        p1 = json.loads((out1 / "reliability.json").read_text(encoding="utf-8"))
        p2 = json.loads((out2 / "reliability.json").read_text(encoding="utf-8"))
        assert p2["fit_slope"] == pytest.approx(2.0 * p1["fit_slope"], rel=1e-9)

    def test_quantile_lowers_mse_on_outlier_fixture(self, tmp_path):
        rows = [(f"s{i}", x / 10.0, 0.5 * (x / 10.0) + 1.0) for i, x in enumerate(range(950))]
        rows += [(f"o{i}", 100.0 + i, -50.0) for i in range(50)]
        scores = tmp_path / "scores.csv"
        write_scores_csv(scores, rows)
        out_full = tmp_path / "full"
        out_trim = tmp_path / "trim"
        main(["calibrate", "--scores", str(scores), "--quantile", "1.0", "--out", str(out_full)])
        main(["calibrate", "--scores", str(scores), "--quantile", "0.95", "--out", str(out_trim)])
        full = json.loads((out_full / "reliability.json").read_text(encoding="utf-8"))
        trim = json.loads((out_trim / "reliability.json").read_text(encoding="utf-8"))
        assert trim["quantile_fit"]["mse"] < full["quantile_fit"]["mse"]

    def test_nonpositive_temperature_exits_two(self, tmp_path):
        scores = tmp_path / "scores.csv"
        write_scores_csv(scores, [("a", 0.0, 0.0), ("b", 1.0, 1.0)])
        code = main(["calibrate", "--scores", str(scores), "--temperature", "0",
                     "--out", str(tmp_path / "o")])
        assert code == 2


class TestGenerate:
    def test_fixture_corpus_matches_golden(self, corpus_dir, golden_dir, tmp_path):
        out = tmp_path / "gen"
        code = main([
            "generate",
            "--captions", str(corpus_dir / "captions.csv"),
            "--qa", str(corpus_dir / "qa.csv"),
            "--boxes", str(corpus_dir / "boxes.csv"),
            "--answer-scores", str(corpus_dir / "answer_scores.tsv"),
            "--lm-scores", str(corpus_dir / "lm_scores.tsv"),
            "--threshold", "0.2", "--max-k", "4", "--out", str(out),
        ])
        assert code == 0
        assert (out / "samples.jsonl").read_bytes() == \
            (golden_dir / "samples.jsonl").read_bytes()
        assert (out / "provenance.jsonl").read_bytes() == \
            (golden_dir / "provenance.jsonl").read_bytes()

    def test_empty_captions_empty_output_exit_zero(self, corpus_dir, tmp_path):
        empty = tmp_path / "captions.csv"
        empty.write_text("image_id,caption\n", encoding="utf-8")
        out = tmp_path / "gen"
        code = main([
            "generate", "--captions", str(empty),
            "--qa", str(corpus_dir / "qa.csv"),
            "--boxes", str(corpus_dir / "boxes.csv"),
            "--answer-scores", str(corpus_dir / "answer_scores.tsv"),
            "--lm-scores", str(corpus_dir / "lm_scores.tsv"),
            "--threshold", "0.2", "--out", str(out),
        ])
        assert code == 0
        assert (out / "samples.jsonl").read_text(encoding="utf-8") == ""

    def test_missing_lm_scores_exit_two_with_queries(self, corpus_dir, tmp_path, capsys):
        empty = tmp_path / "lm.tsv"
        empty.write_text("", encoding="utf-8")
        code = main([
            "generate", "--captions", str(corpus_dir / "captions.csv"),
            "--qa", str(corpus_dir / "qa.csv"),
            "--boxes", str(corpus_dir / "boxes.csv"),
            "--answer-scores", str(corpus_dir / "answer_scores.tsv"),
            "--lm-scores", str(empty),
            "--threshold", "0.2", "--out", str(tmp_path / "o"),
        ])
        assert code == 2
        err = capsys.readouterr().err
        assert "A woman leaps into the air to catch a football." in err


def toy_config(tmp_path, **overrides):
    cfg = {
        "n": 200, "n_test": 300, "vocab_size": 12, "noise": 0.5,
        "embed_dim": 8, "steps": 400, "seed": 1,
        "consistency_weight": 0.25, "consistency_ratio": 0.5,
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


class TestTrainToy:
    def test_artifacts_and_comparison_table(self, tmp_path):
        out = tmp_path / "toy"
        code = main(["train-toy", "--config", str(toy_config(tmp_path)), "--out", str(out)])
        assert code == 0
        for name in ("step_log.csv", "samples.jsonl", "records.jsonl",
                     "report.json", "ck_curve.csv", "comparison.csv"):
            assert (out / name).exists(), name
        with open(out / "comparison.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["arm"] for r in rows] == ["trained", "baseline"]

    def test_exported_bundle_round_trips_through_evaluate(self, tmp_path):
        out = tmp_path / "toy"
        main(["train-toy", "--config", str(toy_config(tmp_path)), "--out", str(out)])
        out2 = tmp_path / "eval"
        code = main([
            "evaluate", "--samples", str(out / "samples.jsonl"),
            "--records", str(out / "records.jsonl"),
            "--anchor", "anchor", "--eval", "eval", "--k-max", "4",
            "--out", str(out2),
        ])
        assert code == 0
        direct = json.loads((out / "report.json").read_text(encoding="utf-8"))
        via_cli = json.loads((out2 / "report.json").read_text(encoding="utf-8"))
        assert direct == via_cli

    def test_fixed_seed_reproducible(self, tmp_path):
        cfg = toy_config(tmp_path)
        main(["train-toy", "--config", str(cfg), "--out", str(tmp_path / "a")])
        main(["train-toy", "--config", str(cfg), "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "step_log.csv").read_bytes() == \
            (tmp_path / "b" / "step_log.csv").read_bytes()
        assert (tmp_path / "a" / "records.jsonl").read_bytes() == \
            (tmp_path / "b" / "records.jsonl").read_bytes()

    def test_gamma_zero_log_has_no_consistency_branch(self, tmp_path):
        cfg = toy_config(tmp_path, consistency_ratio=0.0, consistency_weight=0.0)
        out = tmp_path / "toy"
        code = main(["train-toy", "--config", str(cfg), "--out", str(out)])
        assert code == 0
        with open(out / "step_log.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert all(r["branch"] == "ce" for r in rows)
        assert not (out / "comparison.csv").exists()

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    @pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
    def test_divergence_exits_three(self, tmp_path):
        cfg = toy_config(tmp_path, lr=1e12, steps=500)
        code = main(["train-toy", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert code == 3

    def test_unknown_config_key_exits_two(self, tmp_path):
        cfg = toy_config(tmp_path, bogus=1)
        code = main(["train-toy", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert code == 2


class TestStats:
    def test_fixture_counts(self, golden_dir, capsys):
        code = main(["stats", "--samples", str(golden_dir / "samples.jsonl")])
        assert code == 0
        out = capsys.readouterr().out
        assert "samples:               22" in out

    def test_empty_file_zeros(self, tmp_path, capsys):
        path = tmp_path / "empty.jsonl"
        path.write_text("", encoding="utf-8")
        code = main(["stats", "--samples", str(path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "samples:               0" in out

    def test_category_histogram_sums_to_samples(self, golden_dir, capsys):
        main(["stats", "--samples", str(golden_dir / "samples.jsonl")])
        out = capsys.readouterr().out.splitlines()
        table = [line.split() for line in out if line and not line.startswith(("samples", "contrast", "mean", "category"))]
        assert sum(int(row[1]) for row in table) == 22

    def test_parse_failure_exits_two(self, tmp_path, capsys):
        path = tmp_path / "bad.jsonl"
        path.write_text("{broken\n", encoding="utf-8")
        code = main(["stats", "--samples", str(path)])
        assert code == 2
