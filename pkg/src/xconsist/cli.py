"""Command-line entry point: evaluate, simulate, calibrate, generate, train-toy, stats.

Exit codes: 0 success, 2 input or validation error, 3 numeric failure.
All output files are written atomically; randomness is flag-controlled.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import calibration, congen, metrics, simulator, toytrain
from ._util import atomic_write_text, write_csv_lines
from .core import (
    BundleValidationError,
    dataset_stats,
    parse_bundle,
    parse_samples_jsonl,
    write_records_jsonl,
    write_samples_jsonl,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


def _write_json(path: Path, obj: dict) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, ensure_ascii=False) + "\n")


def _csv_text(rows: list[tuple]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Subcommand implementations


def _cmd_evaluate(args: argparse.Namespace) -> int:
    from . import plots

    out = Path(args.out)
    bundle = parse_bundle(args.samples, args.records)
    known = {t.name for t in bundle.tasks}
    for name, flag in ((args.anchor, "--anchor"), (args.eval, "--eval")):
        if name not in known:
            print(f"error: {flag} task {name!r} not present in records "
                  f"(found: {sorted(known)})", file=sys.stderr)
            return EXIT_INPUT
    bundle = bundle.with_anchor(args.anchor)
    report = metrics.build_report(bundle, args.anchor, args.eval, args.k_max)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "report.json", report.to_json_dict())
    atomic_write_text(out / "ck_curve.csv", _csv_text(report.to_csv_rows()))
    scatter_rows: list[tuple] = [("k", "preference_accuracy", "consistency")]
    for k in sorted(report.consistency_at_k):
        scatter_rows.append((
            k,
            report.preference_accuracy_at_k.get(k, ""),
            report.consistency_at_k[k],
        ))
    atomic_write_text(out / "scatter.csv", _csv_text(scatter_rows))
    plots.plot_ck_curve(report, out / "ck_curve.svg")
    print(f"wrote report.json, ck_curve.csv, scatter.csv, ck_curve.svg to {out}")
    return EXIT_OK


def _cmd_simulate(args: argparse.Namespace) -> int:
    from . import plots

    scenario = simulator.ErrorScenario(args.scenario)
    if args.trials < 1:
        print(f"error: --trials must be positive, got {args.trials}", file=sys.stderr)
        return EXIT_INPUT
    rows = simulator.sweep(scenario, args.grid_step, args.trials, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv_lines(out / "sweep.csv", simulator.sweep_csv_lines(rows))
    plots.plot_sweep_heatmap(rows, out / "c1_heatmap.svg")
    print(f"wrote sweep.csv and c1_heatmap.svg to {out}")
    return EXIT_OK


def _cmd_calibrate(args: argparse.Namespace) -> int:
    from . import plots

    data = _load_scores_csv(Path(args.scores))
    scaled = calibration.temperature_scale(data, args.temperature)
    rmap = calibration.reliability_map(scaled, n_bins=args.bins)
    payload = rmap.to_json_dict()
    payload["temperature"] = args.temperature
    payload["quantile"] = args.quantile
    if args.quantile < 1.0 or not rmap.degenerate_fit:
        qfit = calibration.quantile_fit(scaled, args.quantile, n_bins=args.bins)
        payload["quantile_fit"] = {
            "slope": qfit.slope, "intercept": qfit.intercept, "mse": qfit.mse,
        }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "reliability.json", payload)
    plots.plot_reliability(rmap, out / "reliability.svg")
    print(f"wrote reliability.json and reliability.svg to {out}")
    return EXIT_OK


def _load_scores_csv(path: Path) -> list[calibration.ScoredPrediction]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = ("sample_id", "loglik", "quality")
        if reader.fieldnames is None or any(c not in reader.fieldnames for c in required):
            raise ValueError(f"{path}: expected columns {required}")
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(calibration.ScoredPrediction(
                    sample_id=row["sample_id"],
                    loglik=float(row["loglik"]),
                    quality=float(row["quality"]),
                ))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


def _cmd_generate(args: argparse.Namespace) -> int:
    config = congen.PipelineConfig(threshold=args.threshold, max_k=args.max_k)
    result = congen.run_pipeline_from_paths(
        captions_path=args.captions,
        qa_path=args.qa,
        boxes_path=args.boxes,
        answer_scores_path=args.answer_scores,
        lm_scores_path=args.lm_scores,
        config=config,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "samples.jsonl", result.samples_jsonl())
    atomic_write_text(out / "provenance.jsonl", result.provenance_jsonl())
    print(f"wrote {len(result.samples)} samples to {out / 'samples.jsonl'}")
    return EXIT_OK


def _cmd_train_toy(args: argparse.Namespace) -> int:
    raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    run_cfg = toytrain.ToyRunConfig.from_json_dict(raw)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    arm = toytrain.run_arm(run_cfg)
    outcome = arm.outcome
    write_csv_lines(out / "step_log.csv", toytrain.step_log_csv_lines(arm.train_result.log))

    bundle = arm.eval_bundle
    write_samples_jsonl(out / "samples.jsonl", bundle.samples.values())
    write_records_jsonl(out / "records.jsonl", bundle.records.values())

    model = arm.train_result.model
    anchor, eval_task = model.task_names[0], model.task_names[1]
    report = metrics.build_report(bundle, anchor, eval_task, k_max=run_cfg.train.k_contrasts)
    _write_json(out / "report.json", report.to_json_dict())
    atomic_write_text(out / "ck_curve.csv", _csv_text(report.to_csv_rows()))

    if run_cfg.train.consistency_weight > 0:
        baseline_cfg = replace(
            run_cfg, train=replace(run_cfg.train, consistency_weight=0.0)
        )
        base_outcome = toytrain.run_arm(baseline_cfg).outcome
        rows: list[tuple] = [
            ("arm", "consistency_weight", "c1", "preference_accuracy", "rho_rank"),
            ("trained", outcome.consistency_weight, outcome.c1,
             outcome.preference_accuracy, outcome.rho),
            ("baseline", base_outcome.consistency_weight, base_outcome.c1,
             base_outcome.preference_accuracy, base_outcome.rho),
        ]
        atomic_write_text(out / "comparison.csv", _csv_text(rows))
        print(f"c1 {base_outcome.c1:.3f} -> {outcome.c1:.3f}, preference accuracy "
              f"{base_outcome.preference_accuracy:.3f} -> {outcome.preference_accuracy:.3f}")
    else:
        print(f"c1 {outcome.c1:.3f}, preference accuracy {outcome.preference_accuracy:.3f}")
    print(f"wrote training artifacts to {out}")
    return EXIT_OK


def _cmd_stats(args: argparse.Namespace) -> int:
    samples = parse_samples_jsonl(args.samples)
    stats = dataset_stats(samples)
    print(f"samples:               {stats.n_samples}")
    print(f"contrast sets:         {stats.n_contrast_sets}")
    print(f"mean contrasts/sample: {stats.mean_contrasts_per_sample:.4g}")
    if stats.per_category:
        print(f"{'category':<12}{'samples':>10}{'contrasts':>12}{'unique':>10}")
        for cat, cs in sorted(stats.per_category.items()):
            print(f"{cat:<12}{cs.samples:>10}{cs.contrast_sets:>12}{cs.unique_replacements:>10}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xconsist",
        description="Cross-task consistency toolkit: metrics, simulation, "
        "calibration, contrast-set generation, and toy consistency training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="consistency report for an anchor/evaluation task pair")
    p.add_argument("--samples", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--anchor", required=True)
    p.add_argument("--eval", required=True)
    p.add_argument("--k-max", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("simulate", help="error-model sweep of simulated top-1 consistency")
    p.add_argument("--scenario", required=True,
                   choices=[s.value for s in simulator.ErrorScenario])
    p.add_argument("--grid-step", type=float, default=0.1)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("calibrate", help="reliability map over (loglik, quality) scores")
    p.add_argument("--scores", required=True)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--quantile", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("generate", help="run the contrast-set generation pipeline")
    p.add_argument("--captions", required=True)
    p.add_argument("--qa", required=True)
    p.add_argument("--boxes", required=True)
    p.add_argument("--answer-scores", required=True)
    p.add_argument("--lm-scores", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--max-k", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train-toy", help="train the synthetic two-task scorer")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_toy)

    p = sub.add_parser("stats", help="dataset statistics for a samples file")
    p.add_argument("--samples", required=True)
    p.set_defaults(func=_cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except toytrain.TrainingDivergedError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (BundleValidationError, congen.MissingScoresError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
