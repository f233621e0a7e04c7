"""Uniform entry points over the three solvers."""

from __future__ import annotations

from fixlab.eqsys import EquationSystem
from fixlab.solvers.common import Solution, SolverConfig, run_deep
from fixlab.solvers.immediate import solve_immediate
from fixlab.solvers.independent import IndependentSolution, solve_independent
from fixlab.solvers.seq import solve
from fixlab.verify import VerificationResult, verify_solution

SOLVERS = ("seq", "immediate", "independent")


def run_solver(
    system: EquationSystem,
    solver: str = "seq",
    workers: int = 1,
    config: SolverConfig | None = None,
    roots=None,
) -> Solution:
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if solver == "seq":
        return solve(system, roots, config)
    if solver == "immediate":
        return solve_immediate(system, roots, workers, config)
    if solver == "independent":
        return solve_independent(system, roots, workers, config)
    raise ValueError(f"unknown solver {solver!r} (choose from {', '.join(SOLVERS)})")


def verify_run(system: EquationSystem, sol: Solution) -> VerificationResult:
    """Soundness verdict for a run.

    For the independent solver this is per-task solution-hood; whether the
    merged assignment is itself a fixpoint is reported separately in
    ``sol.fixpoint_report``.
    """
    if isinstance(sol, IndependentSolution):
        out = VerificationResult()
        for res in sol.per_task.values():
            out.violations += res.violations
        return out
    # deep right-hand sides recurse once per nested node
    return run_deep(verify_solution, system, sol)
