"""
CLI interfaces package - Console rendering of experiment results
"""

from .report_printer import ReportPrinter
