"""Command-line entry point: run, resume, judge and report."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import orchestrator
from .config import fixture_path, load_config, normalize_variant
from .errors import ReviewAdvisorError

log = logging.getLogger("review_advisor")


def _add_script(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--backend-script",
        metavar="FILE",
        help="replace every LLM backend with a scripted response table (offline/test mode)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="review-advisor", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute the pipeline for one config")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", metavar="FILE", help="TOML run configuration")
    src.add_argument("--fixture", action="store_true", help="use the bundled 60-review fixture and script")
    run.add_argument(
        "--variant", choices=["full", "vanilla", "no-issue", "no-eval", "no-issue-no-eval"], help="pipeline variant"
    )
    run.add_argument("--seed", type=int, help="clustering seed")
    run.add_argument("--out-dir", metavar="DIR", help="run directory (default: runs/<variant>-seed<seed>)")
    run.add_argument("--label", help="row label used in reports")
    run.add_argument("--stop-after", metavar="STAGE", help="stop after this stage (name or number, e.g. 04)")
    _add_script(run)

    res = sub.add_parser("resume", help="continue an interrupted run")
    res.add_argument("--out-dir", required=True, metavar="DIR")
    res.add_argument("--config", metavar="FILE", help="config to check against the stored snapshot")
    _add_script(res)

    judge = sub.add_parser("judge", help="re-run only the judge stage of a run")
    judge.add_argument("--out-dir", required=True, metavar="DIR")
    _add_script(judge)

    report = sub.add_parser("report", help="compare completed runs")
    report.add_argument("--dirs", required=True, help="comma-separated run directories")
    report.add_argument("--out", metavar="DIR", help="write comparison CSVs and heatmap here")
    return parser


def _summary(report: orchestrator.RunReport) -> str:
    lines = [f"variant={report.variant} label={report.label} status={report.status}"]
    for stage, info in report.stages.items():
        lines.append(f"  {stage:<14} {info['status']}")
    failed = [i for i in report.issues if i["status"] == "failed"]
    if report.issues:
        lines.append(f"  issues: {len(report.issues) - len(failed)} ok, {len(failed)} failed")
    if report.judge:
        lines.append(f"  composite mean: {report.judge['overall_composite_mean']:.2f}")
    return "\n".join(lines)


def _cmd_run(args: argparse.Namespace) -> int:
    if args.fixture:
        cfg = load_config(fixture_path("fixture_config.toml"))
        script = args.backend_script or fixture_path("fixture_script.json")
    else:
        cfg = load_config(args.config)
        script = args.backend_script
    variant = normalize_variant(args.variant) if args.variant else None
    cfg = cfg.with_overrides(variant=variant, seed=args.seed, label=args.label)
    if script:
        cfg = cfg.with_backend_script(script)
    out_dir = args.out_dir or cfg.out_dir or f"runs/{cfg.variant}-seed{cfg.seed}"
    cfg = cfg.with_overrides(out_dir=out_dir)
    report = orchestrator.run_pipeline(cfg, stop_after=args.stop_after)
    print(_summary(report))
    print(f"run directory: {out_dir}")
    return 0


def _cmd_resume(args: argparse.Namespace) -> int:
    config = load_config(args.config) if args.config else None
    report = orchestrator.resume(args.out_dir, config, backend_script=args.backend_script)
    print(_summary(report))
    return 0


def _cmd_judge(args: argparse.Namespace) -> int:
    report = orchestrator.rejudge(args.out_dir, backend_script=args.backend_script)
    print(_summary(report))
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    dirs = [d.strip() for d in args.dirs.split(",") if d.strip()]
    comparison = orchestrator.compare_runs(dirs)
    sys.stdout.write(comparison.table_csv())
    if args.out:
        for path in orchestrator.write_comparison(comparison, args.out):
            print(f"wrote {path}", file=sys.stderr)
    return 0


COMMANDS = {"run": _cmd_run, "resume": _cmd_resume, "judge": _cmd_judge, "report": _cmd_report}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ReviewAdvisorError as exc:
        differences = getattr(exc, "differences", None)
        print(f"error: {exc}", file=sys.stderr)
        if differences:
            print(json.dumps(differences, indent=2), file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
