"""
Report formatters and writers for RULER.

Records go to JSON lines, the StatReport to JSON, and both have CSV mirrors
and a Markdown summary. No timestamps are written, so identical runs produce
identical bytes.
"""

from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import pandas as pd
from pydantic import BaseModel

from ruler.core.errors import RulerError
from ruler.pipeline.aggregate import StatReport
from ruler.pipeline.cells import METRIC_NAMES, MetricRecord

PathLike = Union[str, Path]

RECORDS_FILE = "records.jsonl"
REPORT_FILE = "stat_report.json"
RECORDS_CSV = "records.csv"
SUMMARY_CSV = "summary.csv"
PAIRWISE_CSV = "pairwise.csv"
SUMMARY_MD = "summary.md"
M4_DIR = "m4_per_record"


class ReportFormatter(ABC):
    """Base class for report formatters."""

    @abstractmethod
    def format(self, records: Sequence[MetricRecord], report: Optional[StatReport]) -> str:
        """Format the output."""


class JsonlFormatter(ReportFormatter):
    """One MetricRecord per line, in the given order."""

    def format(self, records: Sequence[MetricRecord], report: Optional[StatReport] = None) -> str:
        return "".join(r.model_dump_json() + "\n" for r in records)


class JsonFormatter(ReportFormatter):
    """The StatReport as indented JSON."""

    def format(self, records: Sequence[MetricRecord], report: Optional[StatReport] = None) -> str:
        if report is None:
            raise ValueError("JsonFormatter needs a StatReport")
        return report.model_dump_json(indent=2) + "\n"


def records_frame(records: Sequence[MetricRecord]) -> pd.DataFrame:
    """One row per record with every scalar metric."""
    rows: List[Dict[str, Any]] = []
    for r in records:
        cell = r.cell
        row: Dict[str, Any] = {
            "dataset": cell.dataset if cell else None,
            "ff": cell.ff if cell else None,
            "method": cell.method.value if cell else None,
            "train_seed": cell.train_seed if cell else None,
            "status": r.status.value,
            "error": r.error,
            "forget_size": r.forget_size,
            "m4_pre_unlearning": r.m4_pre_unlearning,
        }
        for name in METRIC_NAMES:
            row[name] = r.metric(name) if r.ok else None
        rows.append(row)
    return pd.DataFrame(rows)


def summaries_frame(report: StatReport) -> pd.DataFrame:
    """One row per (method, ff, metric) summary."""
    rows = []
    for s in report.summaries:
        rows.append({
            "method": s.method,
            "ff": s.ff,
            "metric": s.metric,
            "n_obs": s.n_obs,
            "n_datasets": s.n_datasets,
            "mean": s.mean,
            "sd": s.sd,
            "lmm_intercept": s.lmm.intercept if s.lmm else None,
            "lmm_p": s.lmm.p_wald if s.lmm else None,
            "icc": s.lmm.icc if s.lmm else None,
            "singular": s.lmm.singular if s.lmm else None,
            "wilcoxon_p": s.wilcoxon.p_two_sided if s.wilcoxon else None,
            "r_rb": s.r_rb,
            "effect_size": s.effect_size,
            "primary_p": s.primary_p,
            "fallback": s.singular_fallback,
            "verdict": s.verdict,
        })
    return pd.DataFrame(rows)


def pairwise_frame(report: StatReport) -> pd.DataFrame:
    """One row per pairwise method comparison."""
    return pd.DataFrame([
        {
            "ff": c.ff,
            "metric": c.metric,
            "method_a": c.method_a,
            "method_b": c.method_b,
            "n_datasets": c.n_datasets,
            "p_raw": c.p_raw,
            "p_bh": c.p_bh,
            "significant": c.significant,
            "error": c.error,
        }
        for c in report.pairwise
    ])


def _csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format="%.10g", lineterminator="\n")


class CsvFormatter(ReportFormatter):
    """Per-record metrics as CSV."""

    def format(self, records: Sequence[MetricRecord], report: Optional[StatReport] = None) -> str:
        return _csv(records_frame(records))


def _fmt(value: Optional[float], spec: str = ".4f") -> str:
    return "-" if value is None else format(value, spec)


class MarkdownFormatter(ReportFormatter):
    """Human-readable summary of a StatReport."""

    def format(self, records: Sequence[MetricRecord], report: Optional[StatReport] = None) -> str:
        if report is None:
            raise ValueError("MarkdownFormatter needs a StatReport")
        lines = ["# RULER summary\n\n"]
        lines.append(
            f"Records: {report.n_records} ({report.n_failed} failed). "
            f"Wilcoxon pooling: {report.wilcoxon_pooling.value}.\n"
        )

        lines.append("\n## Metric inference\n\n")
        lines.append("| method | ff | metric | N | mean | p | r_rb | ICC | fallback | verdict |\n")
        lines.append("|---|---|---|---|---|---|---|---|---|---|\n")
        for s in report.summaries:
            lines.append(
                f"| {s.method} | {s.ff:g} | {s.metric} | {s.n_obs} | {s.mean:+.5f} | "
                f"{_fmt(s.primary_p, '.3g')} | {_fmt(s.r_rb, '+.2f')} | "
                f"{_fmt(s.lmm.icc if s.lmm else None, '.2f')} | "
                f"{'yes' if s.singular_fallback else 'no'} | {s.verdict} |\n"
            )

        pooled = [w for w in report.mia_windows if w.dataset is None]
        if pooled:
            lines.append("\n## MIA pass window\n\n")
            lines.append("| method | ff | mean MIA | N | passes |\n|---|---|---|---|---|\n")
            for w in pooled:
                lines.append(
                    f"| {w.method} | {w.ff:g} | {w.mean_mia:.3f} | {w.n} | "
                    f"{'yes' if w.passes else 'no'} |\n"
                )

        if report.holds:
            held, total = report.holds_count()
            lines.append(f"\n## Combined criterion (M2 < 0 and M4 > 0.50)\n\nHolds in {held} of {total}.\n")

        significant = [c for c in report.pairwise if c.significant]
        if report.pairwise:
            lines.append(f"\n## Pairwise comparisons\n\n{len(significant)} of "
                         f"{len(report.pairwise)} significant after BH adjustment.\n")
            for c in significant:
                lines.append(
                    f"- ff={c.ff:g} {c.metric}: {c.method_a} vs {c.method_b}, "
                    f"p_BH={_fmt(c.p_bh, '.3g')}\n"
                )
        return "".join(lines)


def read_records(path: PathLike) -> List[MetricRecord]:
    """Parse a records JSONL file."""
    records = []
    try:
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                if line.strip():
                    try:
                        records.append(MetricRecord.model_validate_json(line))
                    except ValueError as e:
                        raise RulerError(f"{path}:{line_no}: invalid record: {e}")
    except OSError as e:
        raise RulerError(f"Cannot read records {path}: {e}")
    return records


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def write_json(path: PathLike, model: BaseModel) -> Path:
    """Write any report model as indented JSON."""
    return _write(Path(path), model.model_dump_json(indent=2) + "\n")


def write_run_outputs(
    out_dir: PathLike,
    records: Sequence[MetricRecord],
    report: StatReport,
    write_csv: bool = True,
    write_markdown: bool = True,
    export_per_record_m4: bool = False,
) -> List[Path]:
    """
    Write records, the StatReport and optional mirrors into out_dir.

    Returns:
        Paths written, in a fixed order
    """
    out = Path(out_dir)
    written = [
        _write(out / RECORDS_FILE, JsonlFormatter().format(records)),
        _write(out / REPORT_FILE, JsonFormatter().format(records, report)),
    ]
    if write_csv:
        written.append(_write(out / RECORDS_CSV, CsvFormatter().format(records)))
        written.append(_write(out / SUMMARY_CSV, _csv(summaries_frame(report))))
        written.append(_write(out / PAIRWISE_CSV, _csv(pairwise_frame(report))))
    if write_markdown:
        written.append(_write(out / SUMMARY_MD, MarkdownFormatter().format(records, report)))
    if export_per_record_m4:
        for r in records:
            if r.ok and r.cell is not None and r.lens2 is not None:
                c = r.cell
                name = f"{c.dataset}_ff{c.ff:g}_{c.method.value}_seed{c.train_seed}.csv"
                written.append(r.lens2.write_csv(out / M4_DIR / name))
    return written


def format_report(
    records: Sequence[MetricRecord],
    report: Optional[StatReport] = None,
    format_type: str = "markdown",
) -> str:
    """
    Format records or a report in the specified format.

    Args:
        records: Metric records
        report: StatReport (required for json and markdown)
        format_type: "jsonl", "json", "csv" or "markdown"

    Returns:
        Formatted output string
    """
    formatters = {
        "jsonl": JsonlFormatter,
        "json": JsonFormatter,
        "csv": CsvFormatter,
        "markdown": MarkdownFormatter,
    }
    formatter_class = formatters.get(format_type, MarkdownFormatter)
    return formatter_class().format(records, report)


