"""
Command Line Interface for RULER.

Runs the verification protocol, verifies external embeddings, calibrates
the M2 null and re-aggregates stored records.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from rich.console import Console
from rich.markdown import Markdown
from rich.panel import Panel
from rich.table import Table

from ruler import __version__
from ruler.core.config import BaselineKind, RulerConfig, SweepAxis
from ruler.core.errors import ConfigError, RulerError
from ruler.core.log import configure_logging
from ruler.output.formatters import (
    MarkdownFormatter,
    read_records,
    write_json,
    write_run_outputs,
)
from ruler.pipeline.aggregate import StatReport, aggregate
from ruler.pipeline.calibration import run_calibration
from ruler.pipeline.cells import MetricRecord
from ruler.pipeline.runner import run_pipeline
from ruler.pipeline.sweep import sweep
from ruler.pipeline.verify import verify_external

EXIT_OK = 0
EXIT_FAILED = 2
EXIT_CONFIG = 3

console = Console()


def print_banner():
    """Print the RULER banner."""
    banner = f"""
    RULER {__version__}
    Representation-level unlearning verification

    >> Lens 1: does the forget set still look like the original model?
    >> Lens 2: are forgotten records closer to retain data than retain data is?
    """
    console.print(Panel(banner, border_style="blue"))


def _load_config(args) -> RulerConfig:
    """Read --config (or defaults) and apply command-line overrides."""
    config = RulerConfig.from_file(args.config) if args.config else RulerConfig.from_env()
    execution = config.execution.model_copy()
    if args.out:
        execution.out_dir = Path(args.out)
    if args.threads:
        execution.threads = args.threads
    config = config.model_copy(update={"execution": execution})
    return config.with_seed_offset(args.seed_offset)


def _check(config: RulerConfig) -> None:
    issues = config.validate_for_operation()
    if issues:
        for issue in issues:
            console.print(f"  [red]✗[/red] {issue}")
        raise ConfigError(f"{len(issues)} configuration issue(s)")


def _summary_table(report: StatReport) -> Table:
    table = Table(title="Metric inference")
    for column in ("method", "ff", "metric", "N", "mean", "p", "verdict"):
        table.add_column(column)
    for s in report.summaries:
        p = "-" if s.primary_p is None else f"{s.primary_p:.3g}"
        if s.singular_fallback:
            p += " (fallback)"
        table.add_row(s.method, f"{s.ff:g}", s.metric, str(s.n_obs), f"{s.mean:+.4f}", p, s.verdict)
    return table


def _finish(records: List[MetricRecord], report: StatReport, config: RulerConfig) -> int:
    execution = config.execution
    paths = write_run_outputs(
        execution.out_dir,
        records,
        report,
        write_csv=execution.write_csv,
        write_markdown=execution.write_markdown,
        export_per_record_m4=config.metrics.export_per_record_m4,
    )
    console.print(_summary_table(report))
    console.print(f"\n[green]Wrote {len(paths)} file(s) to {execution.out_dir}[/green]")
    if report.n_failed:
        console.print(f"[yellow]{report.n_failed} of {report.n_records} cells failed[/yellow]")
        return EXIT_FAILED
    return EXIT_OK


def cmd_run(args):
    """Run the full pipeline."""
    config = _load_config(args)
    _check(config)
    configure_logging(config.log_level, config.debug)

    console.print(
        f"\n[bold blue]Running:[/bold blue] {len(config.datasets)} dataset(s), "
        f"{len(config.seeds.train_seeds)} seed(s), {len(config.methods)} method(s), "
        f"ff {config.forget_fractions}\n"
    )
    result = run_pipeline(config)
    return _finish(result.records, result.report, config)


def cmd_verify(args):
    """Verify externally produced embeddings."""
    config = _load_config(args)
    configure_logging(config.log_level, config.debug)

    try:
        record = verify_external(
            args.unlearned,
            args.partition,
            emb_oracle=args.oracle,
            emb_original=args.original,
            paired_seed=args.paired_seed,
            require_lens1=args.require_lens1,
            baseline_kind=BaselineKind(args.baseline),
            subsample_seed=config.seeds.retain_subsample_seed,
            cap_seed=config.seeds.m4_cap_seed,
        )
    except RulerError as e:
        console.print(f"[red]Verification failed:[/red] {e.message}")
        return EXIT_FAILED

    out = config.execution.out_dir
    path = write_json(out / "verify_record.json", record)
    if config.metrics.export_per_record_m4 and record.lens2 is not None:
        record.lens2.write_csv(out / "verify_m4_per_record.csv")

    console.print(f"\n[bold]M4[/bold] {record.lens2.aggregate:.4f}")
    if record.m4_pre_unlearning is not None:
        console.print(f"[bold]M4 (original)[/bold] {record.m4_pre_unlearning:.4f}")
    if record.lens1 is not None:
        console.print(f"[bold]M1[/bold] {record.lens1.m1:.4f}  [bold]M2[/bold] {record.lens1.m2:+.4f}")
        if record.lens1.m3 is not None:
            console.print(f"[bold]M3[/bold] {record.lens1.m3:.4f}")
    else:
        console.print("[dim]Lens-1 skipped: no oracle embeddings supplied[/dim]")
    console.print(f"\n[green]Wrote {path}[/green]")
    return EXIT_OK


def cmd_calibrate(args):
    """Oracle-pair null calibration and seed checks."""
    config = _load_config(args)
    _check(config)
    configure_logging(config.log_level, config.debug)

    report = run_calibration(config, include_teacher_seeds=args.teacher_seeds)
    path = write_json(config.execution.out_dir / "calibration.json", report)

    table = Table(title="Oracle-pair M2 calibration")
    for column in ("dataset", "pairs", "mean M2", "SE", "centred"):
        table.add_column(column)
    for c in report.oracle_pairs:
        se = "-" if c.se is None else f"{c.se:.5f}"
        table.add_row(c.dataset, str(len(c.pairs)), f"{c.mean:+.5f}", se, "✓" if c.centred else "✗")
    if report.pooled is not None:
        pooled = report.pooled
        se = "-" if pooled.se is None else f"{pooled.se:.5f}"
        table.add_row(
            "[bold]pooled[/bold]", str(pooled.n_pairs), f"{pooled.mean:+.5f}", se,
            "✓" if pooled.centred else "✗",
        )
    console.print(table)
    for p in report.paired_seed:
        mark = "✓" if p.passes else "✗"
        console.print(f"  {mark} {p.dataset}: same-seed {p.same_seed_mean:.3f} vs different {p.different_seed_mean:.3f}")
    for t in report.teacher_stability:
        console.print(f"  {t.dataset}: BadTeacher M4 spread {t.spread:.4f} over teacher seeds {t.teacher_seeds}")
    for error in report.errors:
        console.print(f"  [red]✗[/red] {error}")

    console.print(f"\n[green]Wrote {path}[/green]")
    return EXIT_FAILED if report.errors else EXIT_OK


def cmd_sweep(args):
    """Rerun the pipeline along one axis."""
    config = _load_config(args)
    _check(config)
    configure_logging(config.log_level, config.debug)

    axis = SweepAxis(args.axis)
    report = sweep(config, axis)
    path = write_json(config.execution.out_dir / f"sweep_{axis.value}.json", report)

    table = Table(title=f"Sweep over {axis.value}")
    for column in ("value", "holds", "failed"):
        table.add_column(column)
    for point in report.points:
        table.add_row(point.value, f"{point.holds}/{point.configurations}", str(point.report.n_failed))
    console.print(table)
    if report.sign_flips:
        console.print(f"M2 sign flips (median → mean): {report.n_flipped} of {len(report.sign_flips)}")
    for row in report.seed_sd:
        console.print(f"  {row.dataset} ff={row.ff:g}: M2 SD {row.m2_sd:.4f}, M4 SD {row.m4_sd:.4f}")

    console.print(f"\n[green]Wrote {path}[/green]")
    return EXIT_FAILED if any(p.report.n_failed for p in report.points) else EXIT_OK


def cmd_report(args):
    """Re-aggregate a records JSONL file."""
    config = _load_config(args)
    configure_logging(config.log_level, config.debug)

    records = sorted(read_records(args.records), key=lambda r: r.sort_key())
    report = aggregate(records, config.stats, config.metrics.mia_window)
    code = _finish(records, report, config)
    if args.show:
        console.print(Markdown(MarkdownFormatter().format(records, report)))
    return code


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="Configuration file (TOML, JSON or YAML)")
    common.add_argument("-o", "--out", help="Output directory")
    common.add_argument("-t", "--threads", type=int, help="Worker threads")
    common.add_argument(
        "--seed-offset",
        type=int,
        default=0,
        help="Shift every training seed by this amount",
    )

    parser = argparse.ArgumentParser(
        prog="ruler",
        description="RULER: representation-level unlearning verification",
    )
    parser.add_argument("--version", action="version", version=f"ruler {__version__}")
    subparsers = parser.add_subparsers(dest="command", help="Commands")

    run_parser = subparsers.add_parser("run", parents=[common], help="Run the full pipeline")
    run_parser.set_defaults(func=cmd_run)

    verify_parser = subparsers.add_parser(
        "verify", parents=[common], help="Verify external embeddings"
    )
    verify_parser.add_argument("--unlearned", required=True, help="Unlearned model RULR file")
    verify_parser.add_argument("--partition", required=True, help="Partition JSON")
    verify_parser.add_argument("--oracle", help="Oracle RULR file (enables M1/M2)")
    verify_parser.add_argument("--original", help="Original RULR file (enables M3)")
    verify_parser.add_argument(
        "--paired-seed",
        action="store_true",
        help="Assert original and oracle were trained from one seed",
    )
    verify_parser.add_argument(
        "--require-lens1",
        action="store_true",
        help="Fail when no oracle is supplied",
    )
    verify_parser.add_argument(
        "--baseline",
        choices=[k.value for k in BaselineKind],
        default=BaselineKind.MEDIAN.value,
        help="Retain baseline for M2",
    )
    verify_parser.set_defaults(func=cmd_verify)

    calibrate_parser = subparsers.add_parser(
        "calibrate", parents=[common], help="Oracle-pair null calibration"
    )
    calibrate_parser.add_argument(
        "--teacher-seeds",
        action="store_true",
        help="Also measure BadTeacher M4 stability across teacher seeds",
    )
    calibrate_parser.set_defaults(func=cmd_calibrate)

    sweep_parser = subparsers.add_parser("sweep", parents=[common], help="One-axis sweep")
    sweep_parser.add_argument(
        "--axis",
        choices=[a.value for a in SweepAxis],
        required=True,
        help="Axis to vary",
    )
    sweep_parser.set_defaults(func=cmd_sweep)

    report_parser = subparsers.add_parser(
        "report", parents=[common], help="Re-aggregate a records JSONL file"
    )
    report_parser.add_argument("records", help="records.jsonl from an earlier run")
    report_parser.add_argument("--show", action="store_true", help="Print the Markdown summary")
    report_parser.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        print_banner()
        parser.print_help()
        return EXIT_OK

    try:
        return args.func(args)
    except ConfigError as e:
        console.print(f"[red]Configuration error:[/red] {e.message}")
        return EXIT_CONFIG
    except RulerError as e:
        console.print(f"[red]Error:[/red] {e.message}")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
