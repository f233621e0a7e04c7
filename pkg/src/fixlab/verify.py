"""
Checking solutions.

- :func:`verify_solution` re-evaluates every reached right-hand side against
  a candidate assignment and reports everything not already covered by it.
- :func:`kleene_solve` is a deliberately naive round-robin iteration from
  bottom, without widening. It shares no code with the solvers beyond
  ``eval_rhs`` and serves as ground truth on small finite-height systems.
- :func:`compare_precision` classifies unknowns of two solutions as equal,
  more precise, less precise or incomparable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

from fixlab import lattice as L
from fixlab.eqsys import AnalysisError, EquationSystem, Unknown, eval_rhs
from fixlab.lattice import LatticeValue
from fixlab.solvers.common import Solution

Assignment = Union[Solution, Mapping[Unknown, LatticeValue]]


def _values(sol: Assignment) -> Mapping[Unknown, LatticeValue]:
    return sol.values if isinstance(sol, Solution) else sol


class ViolationKind(enum.Enum):
    RHS_NOT_SUBSUMED = "RhsNotSubsumed"
    SIDE_NOT_SUBSUMED = "SideNotSubsumed"
    DEMAND_UNREACHED = "DemandUnreached"


@dataclass(frozen=True)
class Violation:
    unknown: Unknown
    stored: LatticeValue | None
    required: LatticeValue | None
    kind: ViolationKind
    source: Unknown  # whose right-hand side produced the requirement

    def to_json(self) -> dict:
        return {
            "unknown": self.unknown.label,
            "kind": self.kind.value,
            "stored": None if self.stored is None else L.format_value(self.stored),
            "required": None if self.required is None else L.format_value(self.required),
            "source": self.source.label,
        }


@dataclass
class VerificationResult:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    @property
    def violated_labels(self) -> list[str]:
        return sorted({v.unknown.label for v in self.violations})

    def to_json(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_json() for v in self.violations]}


def check_locals(
    system: EquationSystem,
    to_check: Iterable[Unknown],
    lookup,
    reached,
) -> VerificationResult:
    """Re-evaluate ``to_check`` with ``get = lookup`` and collect violations.

    ``reached`` is the membership test used for demanded unknowns.
    """
    res = VerificationResult()
    for x in to_check:
        rhs = system.rhs_of(x)
        sides: list[tuple[Unknown, LatticeValue]] = []
        demands: list[Unknown] = []
        val = eval_rhs(
            rhs,
            lookup,
            lambda g, v: sides.append((g, v)),
            demands.append,
            system.bottom_of(x),
        )
        stored = lookup(x)
        if not L.leq(val, stored):
            res.violations.append(Violation(x, stored, val, ViolationKind.RHS_NOT_SUBSUMED, x))
        for g, v in sides:
            have = lookup(g)
            if not L.leq(v, have):
                res.violations.append(Violation(g, have, v, ViolationKind.SIDE_NOT_SUBSUMED, x))
        for y in demands:
            if y not in reached:
                res.violations.append(Violation(y, None, None, ViolationKind.DEMAND_UNREACHED, x))
    return res


def verify_solution(system: EquationSystem, sol: Assignment) -> VerificationResult:
    """Is ``sol`` a post-solution on its reached locals?

    Unknowns missing from ``sol`` read as bottom.
    """
    values = _values(sol)

    def lookup(u):
        v = values.get(u)
        return system.bottom_of(u) if v is None else v

    return check_locals(system, [u for u in values if not u.is_global], lookup, values)


class OracleDivergence(AnalysisError):
    """Round-robin iteration did not stabilize within the round cap."""


def kleene_solve(system: EquationSystem, roots=None, max_rounds: int = 100_000) -> Solution:
    """Least solution on the unknowns reachable from ``roots`` by chaotic iteration.

    Every round evaluates all reached right-hand sides against the previous
    round's assignment; contributions are joined into globals. No widening,
    so interval loops raise :class:`OracleDivergence`.
    """
    if system.has_transfer():
        raise ValueError("kleene_solve needs an expression-only system")
    roots = system.default_roots() if roots is None else list(roots)
    sigma: dict[Unknown, LatticeValue] = {}
    order: list[Unknown] = []

    def reach(u):
        if u not in sigma:
            sigma[u] = system.bottom_of(u)
            order.append(u)

    for r in roots:
        reach(r)
    for rounds in range(1, max_rounds + 1):
        old = dict(sigma)
        new_vals: dict[Unknown, LatticeValue] = {}

        def get(y):
            reach(y)
            return old.get(y, system.bottom_of(y))

        def side(g, v):
            reach(g)
            new_vals[g] = L.join(new_vals.get(g, old.get(g, system.bottom_of(g))), v)

        for x in list(order):
            if x.is_global or x not in old:
                continue
            v = eval_rhs(system.rhs_of(x), get, side, reach, system.bottom_of(x))
            new_vals[x] = L.join(old[x], v)
        changed = len(sigma) != len(old)
        for u, v in new_vals.items():
            if v != sigma[u]:
                sigma[u] = v
                changed = True
        if not changed:
            return Solution(dict(sigma), solver="kleene", stats={"rounds": rounds})
    raise OracleDivergence(f"no fixpoint after {max_rounds} rounds")


# --------------------------------------------------------------------------
# precision
# --------------------------------------------------------------------------

CLASSES = ("equal", "more_precise", "less_precise", "incomparable")


@dataclass
class PrecisionReport:
    """Classification of ``other`` relative to ``base``, per unknown."""

    equal: int = 0
    more_precise: int = 0
    less_precise: int = 0
    incomparable: int = 0
    details: list[tuple[str, str, str, str]] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.equal + self.more_precise + self.less_precise + self.incomparable

    def fraction(self, cls: str) -> float:
        if self.total == 0:
            return 1.0 if cls == "equal" else 0.0
        return getattr(self, cls) / self.total

    @property
    def fractions(self) -> dict[str, float]:
        return {c: self.fraction(c) for c in CLASSES}

    def swapped(self) -> "PrecisionReport":
        swap = {"more_precise": "less_precise", "less_precise": "more_precise"}
        return PrecisionReport(
            self.equal,
            self.less_precise,
            self.more_precise,
            self.incomparable,
            [(u, o, b, swap.get(c, c)) for u, b, o, c in self.details],
        )

    def to_json(self, detail: bool = False) -> dict:
        out = {c: {"count": getattr(self, c), "fraction": self.fraction(c)} for c in CLASSES}
        out["total"] = self.total
        if detail:
            out["details"] = [
                {"unknown": u, "base": b, "other": o, "class": c} for u, b, o, c in self.details if c != "equal"
            ]
        return out


def classify(base: LatticeValue, other: LatticeValue) -> str:
    if base == other:
        return "equal"
    if L.leq(other, base):
        return "more_precise"
    if L.leq(base, other):
        return "less_precise"
    return "incomparable"


def compare_precision(base: Assignment, other: Assignment) -> PrecisionReport:
    """Unknowns present on one side only are compared against bottom."""
    a = {u.label: v for u, v in _values(base).items()}
    b = {u.label: v for u, v in _values(other).items()}
    rep = PrecisionReport()
    for label in sorted(a.keys() | b.keys()):
        va, vb = a.get(label), b.get(label)
        if va is None:
            va = L.bottom_like(vb)
        if vb is None:
            vb = L.bottom_like(va)
        c = classify(va, vb)
        setattr(rep, c, getattr(rep, c) + 1)
        rep.details.append((label, L.format_value(va), L.format_value(vb), c))
    return rep
