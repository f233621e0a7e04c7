"""
Equation systems for toy programs.

Unknowns:

- ``g`` for every program global: an interval, accumulated flow-insensitively;
- ``f.start`` for every function: a global environment collecting the
  argument environments of all call and spawn sites;
- ``f.0``, ``f.1``, ... and ``f.end``: locals holding the environment of
  the function's locals at each program point.

Points are numbered in statement order. Each point's right-hand side joins
its incoming control-flow edges; every edge is an expression over the
predecessor point, with :class:`Transfer` steps for environment updates.
Globals are zero-initialized at the entry of ``main``. Return values travel
in the ``ret`` binding of the callee's endpoint.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from fixlab.eqsys import Const, DemandE, EquationSystem, Get, JoinE, Let, RhsExpr, Seq, SetE, Transfer, Unknown, Var
from fixlab.frontend.syntax import (
    MIRROR,
    Assign,
    Call,
    Cond,
    Expr,
    Function,
    If,
    Name,
    Num,
    Program,
    Return,
    Spawn,
    While,
    expr_names,
)
from fixlab.lattice import EMPTY, NEG_INF, INF, UNREACHABLE, Env, Interval, interval_binop

RET = "ret"


class DemandStrategy(enum.Enum):
    THREADS = "threads"  # demand the endpoint of spawned functions
    FUNCTIONS = "functions"  # ... and of every called function
    NONE = "none"  # query endpoints directly

    @classmethod
    def parse(cls, s: "str | DemandStrategy") -> "DemandStrategy":
        return s if isinstance(s, cls) else cls(s)


# --------------------------------------------------------------------------
# abstract semantics of expressions and guards
# --------------------------------------------------------------------------


def eval_expr(e: Expr, env: Env, gvals: dict[str, Interval]) -> Interval:
    if not env.reachable:
        return EMPTY
    if isinstance(e, Num):
        return Interval.const(e.value)
    if isinstance(e, Name):
        v = gvals.get(e.name)
        return env.get(e.name) if v is None else v
    return interval_binop(e.op, eval_expr(e.left, env, gvals), eval_expr(e.right, env, gvals))


def _may_hold(op: str, a: Interval, b: Interval) -> bool:
    if a.is_empty or b.is_empty:
        return False
    if op == "<":
        return a.lo < b.hi
    if op == "<=":
        return a.lo <= b.hi
    if op == ">":
        return a.hi > b.lo
    if op == ">=":
        return a.hi >= b.lo
    if op == "==":
        return a.lo <= b.hi and b.lo <= a.hi
    # "!=" fails only when both sides are the same singleton
    return not (a.lo == a.hi == b.lo == b.hi)


def _refine(op: str, x: Interval, c: int) -> Interval:
    """Values of ``x`` for which ``x op c`` may hold."""
    if op == "<":
        return x.meet(Interval(NEG_INF, c - 1))
    if op == "<=":
        return x.meet(Interval(NEG_INF, c))
    if op == ">":
        return x.meet(Interval(c + 1, INF))
    if op == ">=":
        return x.meet(Interval(c, INF))
    if op == "==":
        return x.meet(Interval.const(c))
    if x.lo == x.hi == c:
        return EMPTY
    if x.lo == c:
        return Interval(c + 1, x.hi)
    if x.hi == c:
        return Interval(x.lo, c - 1)
    return x


def apply_guard(cond: Cond, env: Env, gvals: dict[str, Interval]) -> Env:
    """Environment after assuming ``cond``; unreachable if it cannot hold."""
    if not env.reachable:
        return env
    a = eval_expr(cond.left, env, gvals)
    b = eval_expr(cond.right, env, gvals)
    if not _may_hold(cond.op, a, b):
        return UNREACHABLE
    # refinement only for a local variable against an integer literal
    for var, lit, op in ((cond.left, cond.right, cond.op), (cond.right, cond.left, MIRROR[cond.op])):
        if isinstance(var, Name) and isinstance(lit, Num) and var.name not in gvals:
            return env.set(var.name, _refine(op, env.get(var.name), lit.value))
    return env


# --------------------------------------------------------------------------
# transfer steps (picklable, compared structurally)
# --------------------------------------------------------------------------


def _gvals(names: tuple, values: tuple) -> dict:
    return dict(zip(names, values))


@dataclass(frozen=True)
class AssignLocal:
    var: str
    expr: Expr
    gnames: tuple = ()

    def __call__(self, get, set_, demand, env, *gv):
        return env.set(self.var, eval_expr(self.expr, env, _gvals(self.gnames, gv)))


@dataclass(frozen=True)
class ValueOf:
    """Interval of ``expr``; empty when the environment is unreachable."""

    expr: Expr
    gnames: tuple = ()

    def __call__(self, get, set_, demand, env, *gv):
        return eval_expr(self.expr, env, _gvals(self.gnames, gv))


@dataclass(frozen=True)
class ArgEnv:
    """Entry environment of a callee: only its parameter is known."""

    param: str | None
    expr: Expr | None
    gnames: tuple = ()

    def __call__(self, get, set_, demand, env, *gv):
        if not env.reachable:
            return UNREACHABLE
        if self.param is None:
            return Env.top()
        return Env.top().set(self.param, eval_expr(self.expr, env, _gvals(self.gnames, gv)))


@dataclass(frozen=True)
class BindReturn:
    """Caller environment after the call returns."""

    target: str | None = None

    def __call__(self, get, set_, demand, env, callee_end):
        if not env.reachable or not callee_end.reachable:
            return UNREACHABLE
        return env if self.target is None else env.set(self.target, callee_end.get(RET))


@dataclass(frozen=True)
class ReturnValue:
    def __call__(self, get, set_, demand, env, callee_end):
        return callee_end.get(RET) if env.reachable else EMPTY


@dataclass(frozen=True)
class BindRet:
    expr: Expr | None
    gnames: tuple = ()

    def __call__(self, get, set_, demand, env, *gv):
        if self.expr is None:
            return env
        return env.set(RET, eval_expr(self.expr, env, _gvals(self.gnames, gv)))


@dataclass(frozen=True)
class Guard:
    cond: Cond
    gnames: tuple = ()

    def __call__(self, get, set_, demand, env, *gv):
        return apply_guard(self.cond, env, _gvals(self.gnames, gv))


# --------------------------------------------------------------------------
# builder
# --------------------------------------------------------------------------


def _join_all(edges: list[RhsExpr]) -> RhsExpr:
    if not edges:
        return Const(UNREACHABLE)
    e = edges[0]
    for x in edges[1:]:
        e = JoinE(e, x)
    return e


class _FunctionBuilder:
    def __init__(self, b: "_Builder", f: Function):
        self.b = b
        self.f = f
        self.n = 0
        self.edges: dict[Unknown, list[RhsExpr]] = {}

    def point(self) -> Unknown:
        u = self.b.system.add_local(f"{self.f.name}.{self.n}")
        self.n += 1
        self.edges[u] = []
        return u

    def globals_in(self, *exprs) -> tuple[tuple, tuple]:
        names = []
        for e in exprs:
            if e is not None:
                names += [n for n in expr_names(e) if n in self.b.gset and n not in names]
        return tuple(names), tuple(Get(self.b.glob[n]) for n in names)

    def build(self):
        b, f = self.b, self.f
        end = b.end[f.name]
        self.edges[end] = []
        entry = self.point()
        if f.name == b.program.entry:
            zero = Const(Interval.const(0))
            inits = tuple(SetE(b.glob[g], zero) for g in b.program.globals)
            self.edges[entry].append(Seq(inits + (Const(Env.top()),)) if inits else Const(Env.top()))
        else:
            self.edges[entry].append(Get(b.start[f.name]))
        last = self.block(f.body, entry)
        self.edges[end].append(Get(last))
        for u, es in self.edges.items():
            b.system.set_rhs(u, _join_all(es))

    def block(self, stmts, cur: Unknown) -> Unknown:
        for s in stmts:
            cur = self.stmt(s, cur)
        return cur

    def stmt(self, s, cur: Unknown) -> Unknown:
        b = self.b
        if isinstance(s, Assign):
            gnames, gets = self.globals_in(s.value)
            nxt = self.point()
            if s.target in b.gset:
                contrib = Transfer(ValueOf(s.value, gnames), (Var("d"),) + gets)
                self.edges[nxt].append(Let("d", Get(cur), Seq((SetE(b.glob[s.target], contrib), Var("d")))))
            else:
                self.edges[nxt].append(Transfer(AssignLocal(s.target, s.value, gnames), (Get(cur),) + gets))
            return nxt
        if isinstance(s, (Call, Spawn)):
            nxt = self.point()
            self.edges[nxt].append(self.call_edge(s, cur))
            return nxt
        if isinstance(s, Return):
            gnames, gets = self.globals_in(s.value)
            self.edges[b.end[self.f.name]].append(Transfer(BindRet(s.value, gnames), (Get(cur),) + gets))
            return self.point()  # anything after a return is dead
        if isinstance(s, If):
            then_in = self.point()
            self.edges[then_in].append(self.guard(s.cond, cur))
            then_out = self.block(s.then, then_in)
            else_in = self.point()
            self.edges[else_in].append(self.guard(s.cond.negated(), cur))
            else_out = self.block(s.orelse, else_in)
            join = self.point()
            self.edges[join] += [Get(then_out), Get(else_out)]
            return join
        if isinstance(s, While):
            head = self.point()
            self.edges[head].append(Get(cur))
            body_in = self.point()
            self.edges[body_in].append(self.guard(s.cond, head))
            body_out = self.block(s.body, body_in)
            self.edges[head].append(Get(body_out))
            out = self.point()
            self.edges[out].append(self.guard(s.cond.negated(), head))
            return out
        raise TypeError(f"unknown statement {s!r}")

    def guard(self, cond: Cond, src: Unknown) -> RhsExpr:
        gnames, gets = self.globals_in(cond.left, cond.right)
        return Transfer(Guard(cond, gnames), (Get(src),) + gets)

    def call_edge(self, s, cur: Unknown) -> RhsExpr:
        b = self.b
        callee = b.program.functions[s.func]
        start, end = b.start[callee.name], b.end[callee.name]
        gnames, gets = self.globals_in(s.arg)
        items: list[RhsExpr] = [SetE(start, Transfer(ArgEnv(callee.param, s.arg, gnames), (Var("d"),) + gets))]
        strategy = b.strategy
        if isinstance(s, Spawn):
            # the spawner's environment is unchanged; the thread only needs solving
            items.append(DemandE(end) if strategy is not DemandStrategy.NONE else Get(end))
            items.append(Var("d"))
            return Let("d", Get(cur), Seq(tuple(items)))
        if strategy is DemandStrategy.FUNCTIONS:
            items.append(DemandE(end))
        if s.target is not None and s.target in b.gset:
            after = Transfer(BindReturn(None), (Var("d"), Get(end)))
            write = SetE(b.glob[s.target], Transfer(ReturnValue(), (Var("e"), Get(end))))
            items.append(Let("e", after, Seq((write, Var("e")))))
        else:
            items.append(Transfer(BindReturn(s.target), (Var("d"), Get(end))))
        return Let("d", Get(cur), Seq(tuple(items)))


class _Builder:
    def __init__(self, program: Program, strategy: DemandStrategy):
        self.program = program
        self.strategy = strategy
        self.system = EquationSystem("env")
        self.gset = set(program.globals)
        self.glob = {g: self.system.add_global(g, bottom=EMPTY) for g in program.globals}
        self.start = {f: self.system.add_global(f"{f}.start") for f in program.functions}
        self.end = {f: self.system.add_local(f"{f}.end") for f in program.functions}

    def build(self) -> EquationSystem:
        for f in self.program.functions.values():
            _FunctionBuilder(self, f).build()
        self.system.add_root(self.end[self.program.entry])
        return self.system


def build_equations(program: Program, strategy: "DemandStrategy | str" = DemandStrategy.THREADS) -> EquationSystem:
    """Equation system for ``program``; its declared root is ``main.end``."""
    return _Builder(program, DemandStrategy.parse(strategy)).build()
