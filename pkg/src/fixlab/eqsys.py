"""
Side-effecting equation systems.

An :class:`EquationSystem` maps each *local* :class:`Unknown` to a
right-hand side (:data:`RhsExpr`). *Global* unknowns have no right-hand
side; they only accumulate contributions made with ``set`` while other
right-hand sides are evaluated. A right-hand side is evaluated against
three callbacks::

    get(u) -> value        read another unknown
    set(g, value)          contribute to a global
    demand(u)              ask for u to be solved at top level

File format::

    # comment
    lattice interval;
    g: global
    x: local = let d = get y in seq(set g d; d)
    y: local = add(const [1,1], const [0,2])
    root x
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, Union

from fixlab import lattice as L
from fixlab.lattice import LatticeValue


class Kind(enum.Enum):
    LOCAL = "local"
    GLOBAL = "global"


class Unknown:
    """Identity of a constraint variable.

    Unknowns are interned per system, so identity comparison is the fast
    path; equality falls back to ``(label, kind)`` for unknowns that crossed
    a pickle boundary.
    """

    __slots__ = ("label", "kind", "_hash")

    def __init__(self, label: str, kind: Kind):
        self.label = label
        self.kind = kind
        self._hash = hash(label)

    @property
    def is_global(self) -> bool:
        return self.kind is Kind.GLOBAL

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Unknown):
            return NotImplemented
        return self.label == other.label and self.kind == other.kind

    def __hash__(self):
        return self._hash

    def __lt__(self, other: "Unknown"):
        return self.label < other.label

    def __repr__(self):
        return f"Unknown({self.label!r}, {self.kind.value})"

    def __str__(self):
        return self.label

    def __reduce__(self):
        return (Unknown, (self.label, self.kind))


# --------------------------------------------------------------------------
# right-hand side expressions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: LatticeValue


@dataclass(frozen=True)
class Get:
    target: Unknown


@dataclass(frozen=True)
class Binop:
    op: str  # '+', '-' or '*'
    left: "RhsExpr"
    right: "RhsExpr"


@dataclass(frozen=True)
class JoinE:
    left: "RhsExpr"
    right: "RhsExpr"


@dataclass(frozen=True)
class SetE:
    target: Unknown
    value: "RhsExpr"


@dataclass(frozen=True)
class DemandE:
    target: Unknown


@dataclass(frozen=True)
class Let:
    name: str
    bound: "RhsExpr"
    body: "RhsExpr"


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Seq:
    items: tuple

    def __post_init__(self):
        if not self.items:
            raise ValueError("empty seq")


@dataclass(frozen=True)
class Transfer:
    """Host-provided step: ``fn(get, set, demand, *operand_values)``.

    ``fn`` must be pure given its arguments. Transfer nodes cannot be
    serialized and are rejected by the Kleene oracle.
    """

    fn: Callable
    operands: tuple = ()


RhsExpr = Union[Const, Get, Binop, JoinE, SetE, DemandE, Let, Var, Seq, Transfer]

GetFn = Callable[[Unknown], LatticeValue]
SetFn = Callable[[Unknown, LatticeValue], None]
DemandFn = Callable[[Unknown], None]


class EvalError(Exception):
    """Malformed right-hand side detected during evaluation."""


class AnalysisError(Exception):
    """The solver hit an unknown it cannot evaluate."""


def eval_rhs(
    e: RhsExpr,
    get: GetFn,
    set: SetFn,
    demand: DemandFn,
    bottom: LatticeValue | None = None,
) -> LatticeValue:
    """Evaluate ``e`` left to right, calling back once per dynamic Get/SetE/DemandE.

    ``DemandE`` yields ``bottom`` as its value.
    """

    def ev(e, scope):
        t = type(e)
        if t is Get:
            return get(e.target)
        if t is Binop:
            a = ev(e.left, scope)
            b = ev(e.right, scope)
            if type(a) is L.Interval and type(b) is L.Interval:
                return L.interval_binop(e.op, a, b)
            return L.abstract_binop(e.op, a, b)
        if t is Var:
            try:
                return scope[e.name]
            except KeyError:
                raise EvalError(f"unbound variable {e.name!r}") from None
        if t is Let:
            v = ev(e.bound, scope)
            return ev(e.body, {**scope, e.name: v})
        if t is Const:
            return e.value
        if t is JoinE:
            a = ev(e.left, scope)
            return L.join(a, ev(e.right, scope))
        if t is Seq:
            v = None
            for item in e.items:
                v = ev(item, scope)
            return v
        if t is SetE:
            v = ev(e.value, scope)
            set(e.target, v)
            return v
        if t is DemandE:
            demand(e.target)
            return bottom
        if t is Transfer:
            vals = [ev(o, scope) for o in e.operands]
            return e.fn(get, set, demand, *vals)
        raise EvalError(f"not an expression: {e!r}")

    return ev(e, {})


def iter_nodes(e: RhsExpr):
    """Pre-order walk over an expression tree."""
    stack = [e]
    while stack:
        n = stack.pop()
        yield n
        t = type(n)
        if t in (Binop, JoinE):
            stack.append(n.right)
            stack.append(n.left)
        elif t is SetE:
            stack.append(n.value)
        elif t is Let:
            stack.append(n.body)
            stack.append(n.bound)
        elif t is Seq:
            stack.extend(reversed(n.items))
        elif t is Transfer:
            stack.extend(reversed(n.operands))


def has_transfer(e: RhsExpr) -> bool:
    return any(type(n) is Transfer for n in iter_nodes(e))


# --------------------------------------------------------------------------
# systems
# --------------------------------------------------------------------------


class SystemDefinitionError(ValueError):
    """Invalid system construction (duplicate right-hand side, bad target...)."""


class EquationSystem:
    """Right-hand sides for locals plus the set of globals.

    ``lattice`` fixes the bottom used for fresh unknowns; individual
    unknowns may override it (the frontend mixes environments and
    intervals).
    """

    def __init__(self, lattice: str = "interval"):
        if lattice not in L.LATTICE_KINDS:
            raise SystemDefinitionError(f"unknown lattice {lattice!r}")
        self.lattice = lattice
        self._default_bottom = L.bottom(lattice)
        self._unknowns: dict[str, Unknown] = {}
        self.rhs: dict[Unknown, RhsExpr] = {}
        self.roots: list[Unknown] = []
        self._bottoms: dict[Unknown, LatticeValue] = {}

    # -- construction -------------------------------------------------------

    def intern(self, label: str, kind: Kind) -> Unknown:
        u = self._unknowns.get(label)
        if u is None:
            u = Unknown(label, kind)
            self._unknowns[label] = u
        elif u.kind is not kind:
            raise SystemDefinitionError(f"{label} declared both {u.kind.value} and {kind.value}")
        return u

    def add_global(self, label: str, bottom: LatticeValue | None = None) -> Unknown:
        u = self.intern(label, Kind.GLOBAL)
        if bottom is not None:
            self._bottoms[u] = bottom
        return u

    def add_local(self, label: str, rhs: RhsExpr | None = None, bottom: LatticeValue | None = None) -> Unknown:
        u = self.intern(label, Kind.LOCAL)
        if bottom is not None:
            self._bottoms[u] = bottom
        if rhs is not None:
            self.set_rhs(u, rhs)
        return u

    def set_rhs(self, u: Unknown, rhs: RhsExpr):
        if u.is_global:
            raise SystemDefinitionError(f"global {u.label} cannot have a right-hand side")
        if u in self.rhs:
            raise SystemDefinitionError(f"local {u.label} has two right-hand sides")
        self.rhs[u] = rhs

    def add_root(self, u: Unknown):
        if u.is_global:
            raise SystemDefinitionError(f"root {u.label} must be local")
        if u not in self.roots:
            self.roots.append(u)

    # -- queries ------------------------------------------------------------

    def __getitem__(self, label: str) -> Unknown:
        return self._unknowns[label]

    def __contains__(self, label: str) -> bool:
        return label in self._unknowns

    def get(self, label: str) -> Unknown | None:
        return self._unknowns.get(label)

    @property
    def unknowns(self) -> list[Unknown]:
        return list(self._unknowns.values())

    @property
    def globals(self) -> list[Unknown]:
        return [u for u in self._unknowns.values() if u.is_global]

    @property
    def locals(self) -> list[Unknown]:
        return [u for u in self._unknowns.values() if not u.is_global]

    def is_global(self, u: Unknown) -> bool:
        return u.kind is Kind.GLOBAL

    def bottom_of(self, u: Unknown) -> LatticeValue:
        return self._bottoms.get(u, self._default_bottom)

    def rhs_of(self, u: Unknown) -> RhsExpr:
        try:
            return self.rhs[u]
        except KeyError:
            raise AnalysisError(f"no right-hand side for local {u.label}") from None

    def has_transfer(self) -> bool:
        return any(has_transfer(e) for e in self.rhs.values())

    def default_roots(self) -> list[Unknown]:
        if self.roots:
            return list(self.roots)
        locs = self.locals
        return [locs[-1]] if locs else []

    def __eq__(self, other):
        if not isinstance(other, EquationSystem):
            return NotImplemented
        return (
            self.lattice == other.lattice
            and [(u.label, u.kind) for u in self.unknowns] == [(u.label, u.kind) for u in other.unknowns]
            and self.rhs == other.rhs
            and self.roots == other.roots
        )

    def __repr__(self):
        return (
            f"EquationSystem({self.lattice}, {len(self.locals)} locals, "
            f"{len(self.globals)} globals, roots={[u.label for u in self.roots]})"
        )


# --------------------------------------------------------------------------
# text format
# --------------------------------------------------------------------------


class ParseError(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line = line
        self.col = col


_KEYWORDS = {"const", "get", "add", "sub", "mul", "join", "set", "demand", "let", "in", "seq", "root", "lattice"}
_BINOPS = {"add": "+", "sub": "-", "mul": "*"}
_OPNAMES = {v: k for k, v in _BINOPS.items()}
_NAME = re.compile(r"[^\s(),;:=#\[\]{}]+")
_WS = re.compile(r"(?:\s+|#[^\n]*)+")
_DECL = re.compile(r"^[ \t]*([^\s(),;:=#\[\]{}]+)[ \t]*:[ \t]*(global|local)\b", re.M)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.system: EquationSystem | None = None
        self.scope: list[str] = []

    # -- lexing -------------------------------------------------------------

    def where(self, pos: int | None = None) -> tuple[int, int]:
        pos = self.pos if pos is None else pos
        line = self.text.count("\n", 0, pos) + 1
        col = pos - (self.text.rfind("\n", 0, pos) + 1) + 1
        return line, col

    def error(self, msg: str, pos: int | None = None) -> ParseError:
        return ParseError(msg, *self.where(pos))

    def skip(self):
        m = _WS.match(self.text, self.pos)
        if m:
            self.pos = m.end()

    def at_end(self) -> bool:
        self.skip()
        return self.pos >= len(self.text)

    def peek(self) -> str | None:
        self.skip()
        if self.pos >= len(self.text):
            return None
        c = self.text[self.pos]
        if c in "(),;:=":
            return c
        m = _NAME.match(self.text, self.pos)
        return m.group(0) if m else c

    def take(self) -> str:
        tok = self.peek()
        if tok is None:
            raise self.error("unexpected end of input")
        self.pos += len(tok)
        return tok

    def expect(self, tok: str):
        start = self.pos
        got = self.take()
        if got != tok:
            raise self.error(f"expected {tok!r}, got {got!r}", start)

    def name(self, allow_keyword: bool = False) -> str:
        self.skip()
        start = self.pos
        m = _NAME.match(self.text, self.pos)
        if not m:
            raise self.error("expected a name")
        self.pos = m.end()
        if m.group(0) in _KEYWORDS and not allow_keyword:
            raise self.error(f"keyword {m.group(0)!r} used as a name", start)
        return m.group(0)

    # -- grammar ------------------------------------------------------------

    def unknown(self, expect: Kind | None, role: str) -> Unknown:
        start = self.pos
        label = self.name()
        u = self.system.get(label)
        if u is None:
            raise self.error(f"undeclared unknown {label!r}", start)
        if expect is not None and u.kind is not expect:
            raise self.error(f"{role} target {label!r} must be {expect.value}", start)
        return u

    def expr(self) -> RhsExpr:
        self.skip()
        start = self.pos
        tok = self.take()
        if tok == "const":
            self.skip()
            try:
                v, end = L.scan_value(self.text, self.pos, self.system.lattice)
            except L.ValueSyntaxError as e:
                raise self.error(f"bad value: {e}", e.pos) from None
            self.pos = end
            return Const(v)
        if tok == "get":
            return Get(self.unknown(None, "get"))
        if tok in _BINOPS:
            self.expect("(")
            a = self.expr()
            self.expect(",")
            b = self.expr()
            self.expect(")")
            return Binop(_BINOPS[tok], a, b)
        if tok == "join":
            self.expect("(")
            a = self.expr()
            self.expect(",")
            b = self.expr()
            self.expect(")")
            return JoinE(a, b)
        if tok == "set":
            target = self.unknown(Kind.GLOBAL, "set")
            return SetE(target, self.expr())
        if tok == "demand":
            return DemandE(self.unknown(Kind.LOCAL, "demand"))
        if tok == "let":
            name = self.name()
            self.expect("=")
            bound = self.expr()
            self.expect("in")
            self.scope.append(name)
            try:
                body = self.expr()
            finally:
                self.scope.pop()
            return Let(name, bound, body)
        if tok == "seq":
            self.expect("(")
            items = [self.expr()]
            while self.peek() == ";":
                self.take()
                items.append(self.expr())
            self.expect(")")
            return Seq(tuple(items))
        if tok in _KEYWORDS or not _NAME.fullmatch(tok):
            raise self.error(f"unexpected {tok!r}", start)
        if tok not in self.scope:
            raise self.error(f"unbound variable {tok!r}", start)
        return Var(tok)

    def parse(self) -> EquationSystem:
        if self.at_end() or self.take() != "lattice":
            raise self.error("file must start with 'lattice <kind>;'")
        start = self.pos
        kind = self.name(allow_keyword=True)  # "set" is also an expression keyword
        if kind not in L.LATTICE_KINDS:
            raise self.error(f"unknown lattice {kind!r}", start)
        self.expect(";")
        self.system = sys_ = EquationSystem(kind)
        for m in _DECL.finditer(self.text, self.pos):
            label, k = m.group(1), m.group(2)
            if label in _KEYWORDS:
                raise self.error(f"keyword {label!r} used as a name", m.start(1))
            try:
                sys_.intern(label, Kind(k))
            except SystemDefinitionError as e:
                raise self.error(str(e), m.start(1)) from None
        while not self.at_end():
            start = self.pos
            label = self.name() if self.peek() != "root" else self.take()
            if label == "root" and self.peek() != ":":
                sys_.add_root(self.unknown(Kind.LOCAL, "root"))
                continue
            self.expect(":")
            kstart = self.pos
            k = self.take()
            if k == "global":
                continue
            if k != "local":
                raise self.error(f"expected 'global' or 'local', got {k!r}", kstart)
            self.expect("=")
            u = sys_[label]
            e = self.expr()
            try:
                sys_.set_rhs(u, e)
            except SystemDefinitionError as err:
                raise self.error(str(err), start) from None
        missing = [u.label for u in sys_.locals if u not in sys_.rhs]
        if missing:
            raise self.error(f"locals without right-hand side: {', '.join(missing)}", len(self.text))
        return sys_


def parse_system(text: str) -> EquationSystem:
    """Parse the textual equation-system format."""
    return _Parser(text).parse()


def format_expr(e: RhsExpr) -> str:
    t = type(e)
    if t is Const:
        return f"const {L.format_value(e.value)}"
    if t is Get:
        return f"get {e.target.label}"
    if t is Binop:
        return f"{_OPNAMES[e.op]}({format_expr(e.left)}, {format_expr(e.right)})"
    if t is JoinE:
        return f"join({format_expr(e.left)}, {format_expr(e.right)})"
    if t is SetE:
        return f"set {e.target.label} {format_expr(e.value)}"
    if t is DemandE:
        return f"demand {e.target.label}"
    if t is Let:
        return f"let {e.name} = {format_expr(e.bound)} in {format_expr(e.body)}"
    if t is Var:
        return e.name
    if t is Seq:
        return "seq(" + "; ".join(format_expr(i) for i in e.items) + ")"
    if t is Transfer:
        raise SystemDefinitionError("transfer nodes cannot be serialized")
    raise SystemDefinitionError(f"not an expression: {e!r}")


def serialize_system(system: EquationSystem) -> str:
    lines = [f"lattice {system.lattice};"]
    for u in system.unknowns:
        if u.is_global:
            lines.append(f"{u.label}: global")
        else:
            lines.append(f"{u.label}: local = {format_expr(system.rhs_of(u))}")
    for r in system.roots:
        lines.append(f"root {r.label}")
    return "\n".join(lines) + "\n"


def build_system(
    lattice: str,
    globals_: Iterable[str],
    locals_: Sequence[tuple[str, Callable[[EquationSystem], RhsExpr]]],
    roots: Iterable[str] = (),
) -> EquationSystem:
    """Programmatic construction; right-hand sides are built after all unknowns are interned."""
    s = EquationSystem(lattice)
    for g in globals_:
        s.add_global(g)
    for label, _ in locals_:
        s.add_local(label)
    for label, mk in locals_:
        s.set_rhs(s[label], mk(s))
    for r in roots:
        s.add_root(s[r])
    return s
