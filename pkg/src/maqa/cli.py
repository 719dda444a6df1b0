"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 stage failure, 3 sweep with
some failed points.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig, load_config
from .errors import ConfigurationError, InvalidInputError, MaqaError, StageError
from .pipeline import (
    LATENCY_STAGES,
    STAGES,
    SWEEP_AXES,
    Pipeline,
    arecall_curve,
    attach_records,
    report_latency,
    sweep,
    write_sweep_table,
)

EXIT_OK, EXIT_CONFIG, EXIT_STAGE, EXIT_PARTIAL = 0, 1, 2, 3


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="YAML run configuration")
    p.add_argument("--output-dir", default=argparse.SUPPRESS, help="override run.output_dir")
    p.add_argument("--resume", action=argparse.BooleanOptionalAction, default=argparse.SUPPRESS,
                   help="reuse completed stages (default: on)")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="maqa", parents=[common],
                                     description="Multi-answer QA: read each retrieved passage, then verify the answers.")
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        sp = sub.add_parser(stage, parents=[common], help=f"run the pipeline up to and including '{stage}'")
        if stage == "evaluate":
            sp.add_argument("--judge", action="store_true", help="match predictions with the LLM judge")
    sp = sub.add_parser("run", parents=[common], help="run the full pipeline")
    sp.add_argument("--judge", action="store_true", help="match predictions with the LLM judge")
    sp = sub.add_parser("sweep", parents=[common], help="rerun over values of k or k_extra; writes CSV and PNG")
    sp.add_argument("--axis", choices=sorted(SWEEP_AXES), required=True)
    sp.add_argument("--values", required=True, help="comma-separated integers, e.g. 1,5,10")
    sp = sub.add_parser("report", parents=[common], help="latency and ARecall@K tables and figures for the last run")
    sp.add_argument("--ks", default=None, help="comma-separated K values (default: eval.arecall_ks)")
    sp = sub.add_parser("demo", help="write the offline demo corpus, gold set, stub script and config")
    sp.add_argument("directory")
    return parser


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"expected comma-separated integers, got {text!r}") from None


def _load(args) -> RunConfig:
    if not getattr(args, "config", None):
        raise ConfigurationError("--config is required")
    cfg = load_config(args.config, output_dir=getattr(args, "output_dir", None))
    if getattr(args, "judge", False):
        cfg = cfg.with_overrides(**{"eval.judge": True})
    return cfg


def _print_rows(header: list[str], rows: list[list]) -> None:
    w = csv.writer(sys.stdout, delimiter="\t", lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


def cmd_stage(args, cfg: RunConfig) -> int:
    until = "evaluate" if args.command == "run" else args.command
    manifest = Pipeline(cfg, resume=args.resume).run(until)
    rows = [[s, f"{manifest['stage_timings'][s]:.3f}", "cached" if manifest["stages"][s]["cached"] else "ran"]
            for s in manifest["completed"]]
    _print_rows(["stage", "seconds", "status"], rows)
    metrics = Path(cfg.run.output_dir) / "metrics.json"
    if "evaluate" in manifest["completed"] and metrics.exists():
        macro = json.loads(metrics.read_text(encoding="utf-8"))["macro"]
        _print_rows(["precision", "recall", "f1"], [[f"{macro[m]:.4f}" for m in ("precision", "recall", "f1")]])
    print(f"llm_calls\t{manifest['counters']['llm_total']}")
    return EXIT_OK


def cmd_sweep(args, cfg: RunConfig) -> int:
    from .plotting import plot_sweep

    values = _ints(args.values)
    rows = sweep(cfg, args.axis, values, resume=args.resume)
    out = Path(cfg.run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = out / f"sweep_{args.axis}.csv"
    write_sweep_table(rows, table)
    figure = plot_sweep(rows, out / f"sweep_{args.axis}.png")
    _print_rows(["axis", "value", "precision", "recall", "f1", "status"],
                [[r.axis, r.value, *("" if x is None else f"{x:.4f}" for x in (r.precision, r.recall, r.f1)), r.status]
                 for r in rows])
    print(f"wrote {table} and {figure}")
    failed = sum(r.status != "ok" for r in rows)
    if failed == len(rows):
        return EXIT_STAGE
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_report(args, cfg: RunConfig) -> int:
    from .plotting import plot_arecall, plot_latency

    out = Path(cfg.run.output_dir)
    path = out / "manifest.json"
    if not path.exists():
        raise ConfigurationError(f"no run manifest at {path}; run the pipeline first")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    latency = report_latency(manifest)
    with open(out / "latency.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "mean_seconds_per_question"])
        w.writerows([s, f"{latency[s]:.6f}"] for s in LATENCY_STAGES if s in latency)
    plot_latency(latency, out / "latency.png")
    _print_rows(["stage", "mean_seconds_per_question"], [[s, f"{v:.4f}"] for s, v in latency.items()])
    written = [out / "latency.csv", out / "latency.png"]
    if "pool" in manifest["stages"]:
        pipeline = Pipeline(cfg, resume=True)
        attach_records(pipeline, manifest)
        ks = _ints(args.ks) if args.ks else list(cfg.eval.arecall_ks)
        curve = arecall_curve(pipeline, ks)
        with open(out / "arecall.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "arecall"])
            w.writerows([k, f"{v:.6f}"] for k, v in curve)
        plot_arecall(curve, out / "arecall.png")
        _print_rows(["k", "arecall"], [[k, f"{v:.4f}"] for k, v in curve])
        written += [out / "arecall.csv", out / "arecall.png"]
    print("wrote " + ", ".join(str(p) for p in written))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.resume = getattr(args, "resume", True)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "demo":
            from .demo import build_fixture

            path = build_fixture(args.directory)
            print(f"wrote demo inputs; run with: maqa run --config {path}")
            return EXIT_OK
        cfg = _load(args)
        if args.command == "sweep":
            return cmd_sweep(args, cfg)
        if args.command == "report":
            return cmd_report(args, cfg)
        return cmd_stage(args, cfg)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (ConfigurationError, InvalidInputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MaqaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
