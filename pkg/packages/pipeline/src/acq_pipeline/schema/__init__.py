"""Report schemas."""
from .reports import REPORT_KINDS, ReportKind, dumps_report, load_report, validate_report, write_report

__all__ = ["REPORT_KINDS", "ReportKind", "dumps_report", "load_report", "validate_report", "write_report"]
