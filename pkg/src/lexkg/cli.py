"""Command-line entry points: one subcommand per pipeline stage, plus the
full run, evaluation and comparison commands."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline
from .evaluation import ComparisonRow, EvaluationError


def _add_config_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, type=Path, help="run configuration JSON file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config field (VALUE parsed as JSON, else taken as a string)",
    )


def _parse_overrides(pairs: list[str]) -> dict:
    overrides = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise pipeline.ConfigInvalid(f"--set expects KEY=VALUE, got {pair!r}")
        try:
            overrides[key] = json.loads(value)
        except json.JSONDecodeError:
            overrides[key] = value
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lexkg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the full pipeline over the corpus")
    _add_config_arg(run)
    run.add_argument("--force", action="store_true", help="reprocess completed cases")
    run.add_argument("--workers", type=int, help="override the worker-pool size")

    for stage in ("ingest", "coref", "extract", "build"):
        stage_parser = sub.add_parser(stage, help=f"run only the {stage} stage")
        _add_config_arg(stage_parser)
        stage_parser.add_argument("--force", action="store_true")

    evaluate = sub.add_parser("eval", help="evaluate a baseline/corekg run pair")
    evaluate.add_argument("--baseline-dir", required=True, type=Path)
    evaluate.add_argument("--corekg-dir", required=True, type=Path)
    evaluate.add_argument("--out", required=True, type=Path)
    evaluate.add_argument("--config", type=Path, help="run config supplying eval-input defaults")
    evaluate.add_argument("--threshold", type=int, help="duplicate similarity threshold (default 75)")
    evaluate.add_argument("--overrides", type=Path, help="expert cluster-split directives (TSV)")
    evaluate.add_argument("--noise-lexicon", type=Path, help="uniform noise lexicon file")
    evaluate.add_argument("--noise-annotations", type=Path, help="per-case noise annotations (TSV)")
    evaluate.add_argument("--strict-noise", action="store_true", help="error on annotations naming absent nodes")
    evaluate.add_argument("--micro", action="store_true", help="micro-average instead of macro")

    compare = sub.add_parser("compare", help="compare two run summary documents")
    compare.add_argument("--baseline-summary", required=True, type=Path)
    compare.add_argument("--corekg-summary", required=True, type=Path)
    compare.add_argument("--out", type=Path, help="optional CSV output path")
    return parser


def _print_failure_table(failures: dict[str, str]) -> None:
    print("\nfailed cases:", file=sys.stderr)
    width = max(len(cid) for cid in failures)
    for case_id in sorted(failures):
        print(f"  {case_id[:40]:<{min(width, 40)}}  {failures[case_id]}", file=sys.stderr)


def _finish_run(result: pipeline.RunResult) -> int:
    for case_id, entry in sorted(result.manifest["cases"].items()):
        if entry["status"] == "ok":
            stats = entry.get("stats", {})
            detail = ""
            if "nodes" in stats:
                detail = f" nodes={stats['nodes']} edges={stats['edges']} dropped={stats['dropped_edges']}"
            skipped = " (cached)" if case_id in result.skipped_cases else ""
            print(f"ok   {case_id}{detail}{skipped}")
        elif entry["status"] == "skipped":
            print(f"skip {case_id}: {entry.get('reason', '')}")
        else:
            print(f"FAIL {case_id}")
    if result.failures:
        _print_failure_table(result.failures)
        return 1
    return 0


def _comparison_lines(rows: list[ComparisonRow]) -> list[str]:
    lines = ["metric,baseline_pct,corekg_pct,absolute_drop,relative_improvement_pct"]
    for row in rows:
        relative = "" if row.relative_improvement_pct is None else f"{row.relative_improvement_pct:.2f}"
        lines.append(
            f"{row.metric},{row.baseline_pct:.2f},{row.corekg_pct:.2f},{row.absolute_drop:.2f},{relative}"
        )
    return lines


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = pipeline.RunConfig.from_file(args.config, _parse_overrides(args.overrides))
            if args.workers:
                config.workers = args.workers
            return _finish_run(pipeline.run_pipeline(config, force=args.force))

        if args.command in ("ingest", "coref", "extract", "build"):
            config = pipeline.RunConfig.from_file(args.config, _parse_overrides(args.overrides))
            return _finish_run(pipeline.run_stage(config, args.command, force=args.force))

        if args.command == "eval":
            defaults = pipeline.RunConfig.from_file(args.config) if args.config else None
            report = pipeline.run_eval(
                args.baseline_dir,
                args.corekg_dir,
                args.out,
                threshold=args.threshold
                if args.threshold is not None
                else (defaults.duplicate_threshold if defaults else 75),
                override_path=args.overrides or (defaults.override_path if defaults else None),
                noise_lexicon_path=args.noise_lexicon
                or (defaults.noise_lexicon_path if defaults else None),
                annotation_path=args.noise_annotations
                or (defaults.annotation_path if defaults else None),
                strict_noise=args.strict_noise,
                micro=args.micro,
            )
            print(json.dumps(report.to_dict()["comparisons"], indent=2))
            print(f"report written to {args.out}")
            return 0

        if args.command == "compare":
            rows = pipeline.compare_summaries(args.baseline_summary, args.corekg_summary)
            lines = _comparison_lines(rows)
            print("\n".join(lines))
            if args.out:
                Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
            return 0
    except (pipeline.ConfigInvalid, EvaluationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
