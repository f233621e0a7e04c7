"""Run a solver on a toy program and collect per-point results."""

from __future__ import annotations

from dataclasses import dataclass, field

from fixlab.api import run_solver, verify_run
from fixlab.eqsys import EquationSystem
from fixlab.frontend.build import DemandStrategy, build_equations
from fixlab.frontend.syntax import Program, parse_program
from fixlab.lattice import EMPTY, UNREACHABLE, Env, Interval
from fixlab.solvers.common import Solution, SolverConfig
from fixlab.verify import VerificationResult


@dataclass
class AnalysisReport:
    program: Program
    system: EquationSystem
    strategy: DemandStrategy
    solution: Solution
    verification: VerificationResult
    points: dict[str, Env] = field(default_factory=dict)
    globals: dict[str, Interval] = field(default_factory=dict)

    @property
    def stats(self) -> dict:
        return self.solution.stats

    def env_at(self, label: str) -> Env:
        return self.points.get(label, UNREACHABLE)

    @property
    def main_end(self) -> Env:
        return self.env_at(f"{self.program.entry}.end")


def analyze(
    program: Program | str,
    solver: str = "seq",
    workers: int = 1,
    strategy: DemandStrategy | str = DemandStrategy.THREADS,
    config: SolverConfig | None = None,
) -> AnalysisReport:
    if isinstance(program, str):
        program = parse_program(program)
    strategy = DemandStrategy.parse(strategy)
    system = build_equations(program, strategy)
    sol = run_solver(system, solver, workers, config)
    points = {u.label: v for u, v in sol.values.items() if not u.is_global}
    gvals = {g: sol.get(g, EMPTY) for g in program.globals}
    return AnalysisReport(program, system, strategy, sol, verify_run(system, sol), points, gvals)
