"""
Sequential top-down solver with a top-level workset.

The solver keeps one record per unknown (value, stable, called, toplevel,
influences, widen_point). ``iterate`` re-evaluates a right-hand side until
the unknown is stable, answering ``get`` with ``query`` (which recursively
solves locals on demand and records the dependency), ``set`` with ``side``
(contributions to globals) and ``demand`` with ``promote`` (adds the
unknown to the top-level workset instead of descending into it).

Widening is applied at unknowns found on a dependency cycle (a ``query``
reaching an unknown whose iteration is still active) and at globals after
``widen_delay`` strictly growing contributions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from fixlab import lattice as L
from fixlab.eqsys import AnalysisError, EquationSystem, Unknown, eval_rhs
from fixlab.lattice import LatticeValue
from fixlab.solvers.common import BudgetExceeded, Solution, SolverConfig, run_deep


@dataclass(slots=True)
class SolverRecord:
    value: LatticeValue
    stable: bool = False
    called: bool = False
    toplevel: bool = False
    influences: dict = field(default_factory=dict)  # ordered set of Unknown
    widen_point: bool = False
    growth: int = 0  # strictly growing side contributions (globals)


class TLTDSolver:
    """Single-threaded solver state; one instance per run."""

    name = "seq"

    def __init__(self, system: EquationSystem, config: SolverConfig | None = None):
        self.system = system
        self.config = config or SolverConfig()
        self.data: dict[Unknown, SolverRecord] = {}
        self.work: dict[Unknown, None] = {}  # insertion-ordered set
        self.evals = 0
        self.destabilizations = 0
        self.widenings = 0

    # -- records ------------------------------------------------------------

    def find(self, u: Unknown) -> SolverRecord:
        r = self.data.get(u)
        if r is None:
            r = SolverRecord(self.system.bottom_of(u))
            # a global's only job is to be part of the result
            r.stable = u.is_global
            self.data[u] = r
        return r

    def _store(self, u: Unknown, r: SolverRecord, new: LatticeValue):
        if self.config.on_store is not None:
            self.config.on_store(u, r.value, new)
        r.value = new

    def _grow(self, r: SolverRecord, new: LatticeValue, use_widen: bool) -> LatticeValue:
        joined = L.join(r.value, new)
        if not use_widen:
            return joined
        w = L.widen(r.value, joined)
        if w != joined:
            self.widenings += 1
        return w

    def _count_eval(self):
        self.evals += 1
        if self.evals > self.config.eval_budget:
            raise BudgetExceeded(f"more than {self.config.eval_budget} right-hand side evaluations")

    # -- the solver interface -------------------------------------------------

    def solve(self, roots) -> Solution:
        roots = list(roots)
        if not roots:
            raise ValueError("at least one root is required")
        start = time.perf_counter()
        for r in roots:
            if r.is_global:
                raise AnalysisError(f"root {r.label} is a global")
            self.find(r).toplevel = True
            self.work[r] = None
        while self.work:
            self.iterate(next(iter(self.work)))
        return self._solution(time.perf_counter() - start)

    def iterate(self, x: Unknown):
        if x.is_global:
            raise AnalysisError(f"cannot iterate global {x.label}")
        dx = self.find(x)
        rhs = self.system.rhs_of(x)
        bottom = self.system.bottom_of(x)

        def get(y):
            return self.query(x, y)

        def set_(g, c):
            self.side(x, g, c)

        def demand(y):
            self.promote(x, y)

        dx.called = True
        while not dx.stable:
            dx.stable = True
            self._count_eval()
            new = eval_rhs(rhs, get, set_, demand, bottom)
            self._after_eval(x)
            if not L.leq(new, dx.value):
                self._store(x, dx, self._grow(dx, new, dx.widen_point))
                self.destabilize(x)
        if dx.toplevel:
            self.work.pop(x, None)
        dx.called = False

    def query(self, x: Unknown, y: Unknown) -> LatticeValue:
        dy = self.find(y)
        if not y.is_global:
            if dy.called:
                dy.widen_point = True
            else:
                self.iterate(y)
        dy.influences[x] = None
        return dy.value

    def side(self, x: Unknown, g: Unknown, contribution: LatticeValue):
        dg = self.find(g)
        dg.stable = True
        joined = L.join(dg.value, contribution)
        if L.leq(joined, dg.value):
            return
        new = joined
        if dg.growth >= self.config.widen_delay:
            new = L.widen(dg.value, joined)
            if new != joined:
                self.widenings += 1
        dg.growth += 1
        self._store(g, dg, new)
        self.destabilize(g)

    def promote(self, x: Unknown, y: Unknown):
        if y.is_global:
            raise AnalysisError(f"cannot demand global {y.label}")
        self.find(y).toplevel = True
        self.work.setdefault(y, None)

    def destabilize(self, x: Unknown):
        dx = self.find(x)
        influences = dx.influences
        if not influences:
            return
        dx.influences = {}
        self.destabilizations += len(influences)
        for y in influences:
            dy = self.data[y]
            dy.stable = False
            if dy.toplevel:
                self.work.setdefault(y, None)
            self.destabilize(y)

    def _after_eval(self, x: Unknown):
        """Hook run after every right-hand side evaluation."""

    # -- results ------------------------------------------------------------

    def termination_report(self) -> dict[str, bool]:
        return {
            "work_empty": not self.work,
            "all_stable": all(r.stable for r in self.data.values()),
            "none_called": not any(r.called for r in self.data.values()),
        }

    def _solution(self, seconds: float) -> Solution:
        stats = {
            "rhs_evaluations": self.evals,
            "destabilizations": self.destabilizations,
            "widenings": self.widenings,
            "unknowns_reached": len(self.data),
            "wall_time_ms": seconds * 1000.0,
        }
        return Solution(
            {u: r.value for u, r in self.data.items()},
            solver=self.name,
            stats=stats,
            termination=self.termination_report(),
        )


def solve(system: EquationSystem, roots=None, config: SolverConfig | None = None) -> Solution:
    """Solve ``system`` from ``roots`` (default: the system's declared roots)."""
    roots = system.default_roots() if roots is None else list(roots)
    solver = TLTDSolver(system, config)
    return run_deep(solver.solve, roots)
