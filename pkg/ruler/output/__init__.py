"""
Output module initialization.
"""

from ruler.output.formatters import (
    M4_DIR,
    PAIRWISE_CSV,
    RECORDS_CSV,
    RECORDS_FILE,
    REPORT_FILE,
    SUMMARY_CSV,
    SUMMARY_MD,
    CsvFormatter,
    JsonFormatter,
    JsonlFormatter,
    MarkdownFormatter,
    ReportFormatter,
    format_report,
    pairwise_frame,
    read_records,
    records_frame,
    summaries_frame,
    write_json,
    write_run_outputs,
)

__all__ = [
    "M4_DIR",
    "PAIRWISE_CSV",
    "RECORDS_CSV",
    "RECORDS_FILE",
    "REPORT_FILE",
    "SUMMARY_CSV",
    "SUMMARY_MD",
    "CsvFormatter",
    "JsonFormatter",
    "JsonlFormatter",
    "MarkdownFormatter",
    "ReportFormatter",
    "format_report",
    "pairwise_frame",
    "read_records",
    "records_frame",
    "summaries_frame",
    "write_json",
    "write_run_outputs",
]
