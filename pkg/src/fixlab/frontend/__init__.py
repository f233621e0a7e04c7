"""Toy multi-threaded language: parsing, equation building, analysis."""

from fixlab.frontend.analysis import AnalysisReport, analyze
from fixlab.frontend.build import DemandStrategy, build_equations
from fixlab.frontend.syntax import Program, ProgramError, parse_program

__all__ = [
    "AnalysisReport",
    "DemandStrategy",
    "Program",
    "ProgramError",
    "analyze",
    "build_equations",
    "parse_program",
]
