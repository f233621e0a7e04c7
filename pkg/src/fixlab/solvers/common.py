"""Configuration, results and helpers shared by all solvers."""

from __future__ import annotations

import sys
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from fixlab.eqsys import AnalysisError, Unknown
from fixlab.lattice import LatticeValue

# Recursive descent goes one activation per chain link; chains of a few
# thousand unknowns need far more than the default stack.
RECURSION_LIMIT = 1_000_000
STACK_BYTES = 512 * 1024 * 1024


class BudgetExceeded(AnalysisError):
    """More right-hand side evaluations than ``SolverConfig.eval_budget``."""


@dataclass
class SolverConfig:
    widen_delay: int = 3
    eval_budget: int = 10_000_000
    demand_strategy: str = "threads"  # consumed by the frontend only
    stats: bool = True
    seed: int | None = None  # scheduler perturbation for the parallel solvers
    debug: bool = False  # ownership tokens, contribution logs
    on_store: Callable[[Unknown, LatticeValue, LatticeValue], None] | None = None
    backend: str = "thread"  # independent solver: "thread" or "process"
    bucket_bits: int = 16  # immediate solver hash table size


@dataclass
class Solution:
    """Final values of every unknown a solver created a record for."""

    values: dict[Unknown, LatticeValue]
    solver: str = "seq"
    stats: dict[str, Any] = field(default_factory=dict)
    termination: dict[str, bool] = field(default_factory=dict)

    def __getitem__(self, key: Unknown | str) -> LatticeValue:
        if isinstance(key, str):
            for u, v in self.values.items():
                if u.label == key:
                    return v
            raise KeyError(key)
        return self.values[key]

    def __contains__(self, key) -> bool:
        if isinstance(key, str):
            return any(u.label == key for u in self.values)
        return key in self.values

    def get(self, key, default=None):
        try:
            return self[key]
        except KeyError:
            return default

    def __len__(self):
        return len(self.values)

    @property
    def reached(self) -> set[Unknown]:
        return set(self.values)

    def by_label(self) -> dict[str, LatticeValue]:
        return {u.label: v for u, v in self.values.items()}

    @property
    def clean(self) -> bool:
        """All termination invariants held when the run finished."""
        return all(self.termination.values())

    def same_values(self, other: "Solution") -> bool:
        return self.by_label() == other.by_label()


def run_deep(fn: Callable, *args, **kwargs):
    """Run ``fn`` on a thread with a large stack and return its result."""
    if sys.getrecursionlimit() < RECURSION_LIMIT:
        sys.setrecursionlimit(RECURSION_LIMIT)
    box: dict[str, Any] = {}

    def target():
        try:
            box["value"] = fn(*args, **kwargs)
        except BaseException as e:  # re-raised in the caller
            box["error"] = e

    t = start_deep_thread(target, name="fixlab-solver")
    t.join()
    if "error" in box:
        raise box["error"]
    return box["value"]


def start_deep_thread(target: Callable, name: str, args: tuple = ()) -> threading.Thread:
    if sys.getrecursionlimit() < RECURSION_LIMIT:
        sys.setrecursionlimit(RECURSION_LIMIT)
    old = threading.stack_size()
    threading.stack_size(STACK_BYTES)
    try:
        t = threading.Thread(target=target, name=name, args=args, daemon=True)
        t.start()
    finally:
        threading.stack_size(old)
    return t


def values_equal(a: Mapping[Unknown, LatticeValue], b: Mapping[Unknown, LatticeValue]) -> bool:
    return {u.label: v for u, v in a.items()} == {u.label: v for u, v in b.items()}
