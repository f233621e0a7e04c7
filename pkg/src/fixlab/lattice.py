"""
Bounded lattices used by the solvers.

Four value families are provided:

- :class:`Interval` -- integer intervals extended with the empty interval,
- :class:`Env` -- maps from variable names to intervals (absent = top),
- :class:`FiniteSet` -- finite powersets of atoms,
- :class:`Flat` -- the flat lattice ``bot < const c < top``.

All values are immutable. The generic operations :func:`join`, :func:`leq`,
:func:`widen` and :func:`abstract_binop` dispatch on the value family and
raise :class:`DomainError` when two different families meet.

Textual syntax (shared by equation files and CLI output)::

    bot  top  [lo,hi]  [-inf,+inf]  {a,b}  env{x:[0,1],y:top}  unreachable
"""

from __future__ import annotations

import math
import re
from typing import Iterable, Mapping, Union

INF = math.inf
NEG_INF = -math.inf

Bound = Union[int, float]
Atom = Union[int, str]

LATTICE_KINDS = ("interval", "env", "set", "flat")


class DomainError(Exception):
    """Lattice operation applied to incompatible values."""


class ContractError(Exception):
    """A lattice operation was called outside its precondition."""


# --------------------------------------------------------------------------
# Interval
# --------------------------------------------------------------------------


class Interval:
    """Integer interval ``[lo, hi]`` with ``lo`` in Z∪{-inf}, ``hi`` in Z∪{+inf}.

    The empty interval is the bottom element and is represented canonically
    as ``lo=+inf, hi=-inf`` (use :data:`EMPTY`).
    """

    __slots__ = ("lo", "hi")

    def __init__(self, lo: Bound, hi: Bound):
        if lo > hi or lo == INF or hi == NEG_INF:
            raise ValueError(f"malformed interval [{lo},{hi}]")
        self.lo = _norm_bound(lo)
        self.hi = _norm_bound(hi)

    @classmethod
    def const(cls, c: int) -> "Interval":
        return _iv(c, c)

    @property
    def is_empty(self) -> bool:
        return self.lo > self.hi

    @property
    def is_top(self) -> bool:
        return self.lo == NEG_INF and self.hi == INF

    def __contains__(self, x: int) -> bool:
        return self.lo <= x <= self.hi

    def __eq__(self, other):
        if not isinstance(other, Interval):
            return NotImplemented
        return self.lo == other.lo and self.hi == other.hi

    def __hash__(self):
        return hash((self.lo, self.hi))

    def __repr__(self):
        return f"Interval({format_value(self)})"

    def __str__(self):
        return format_value(self)

    def __reduce__(self):
        return (_iv, (self.lo, self.hi))

    def join(self, other: "Interval") -> "Interval":
        if self.lo > self.hi:
            return other
        if other.lo > other.hi:
            return self
        lo = self.lo if self.lo <= other.lo else other.lo
        hi = self.hi if self.hi >= other.hi else other.hi
        if lo == self.lo and hi == self.hi:
            return self
        return _iv(lo, hi)

    def meet(self, other: "Interval") -> "Interval":
        lo = max(self.lo, other.lo)
        hi = min(self.hi, other.hi)
        if lo > hi:
            return EMPTY
        return _iv(lo, hi)

    def leq(self, other: "Interval") -> bool:
        if self.lo > self.hi:
            return True
        return other.lo <= self.lo and self.hi <= other.hi

    def widen(self, nxt: "Interval") -> "Interval":
        if self.lo > self.hi:
            return nxt
        lo = NEG_INF if nxt.lo < self.lo else self.lo
        hi = INF if nxt.hi > self.hi else self.hi
        return _iv(lo, hi)


def _norm_bound(b: Bound) -> Bound:
    if isinstance(b, float) and not math.isinf(b):
        if not b.is_integer():
            raise ValueError(f"non-integral bound {b}")
        return int(b)
    return b


def _iv(lo: Bound, hi: Bound) -> Interval:
    # unchecked constructor for the arithmetic hot path
    v = object.__new__(Interval)
    v.lo = lo
    v.hi = hi
    return v


EMPTY = _iv(INF, NEG_INF)
TOP_INTERVAL = _iv(NEG_INF, INF)


def _mul_bound(a: Bound, b: Bound) -> Bound:
    if a == 0 or b == 0:
        return 0
    return a * b


def interval_binop(op: str, a: Interval, b: Interval) -> Interval:
    if a.lo > a.hi or b.lo > b.hi:
        return EMPTY
    if op == "+":
        return _iv(a.lo + b.lo, a.hi + b.hi)
    if op == "-":
        return _iv(a.lo - b.hi, a.hi - b.lo)
    if op == "*":
        ps = (
            _mul_bound(a.lo, b.lo),
            _mul_bound(a.lo, b.hi),
            _mul_bound(a.hi, b.lo),
            _mul_bound(a.hi, b.hi),
        )
        return _iv(min(ps), max(ps))
    raise DomainError(f"unknown operator {op!r}")


# --------------------------------------------------------------------------
# Env
# --------------------------------------------------------------------------


class Env:
    """Interval environment: ``unreachable`` or a map var -> Interval.

    Variables without a binding are top. Bindings equal to top are dropped,
    and an empty binding collapses the whole environment to unreachable, so
    structural equality coincides with lattice equality.
    """

    __slots__ = ("_b",)

    def __init__(self, bindings: Mapping[str, Interval] | None = None):
        if bindings is None:
            self._b = None
            return
        b = {}
        for k, v in bindings.items():
            if not isinstance(v, Interval):
                raise DomainError(f"env binding {k} is not an interval: {v!r}")
            if v.is_empty:
                self._b = None
                return
            if not v.is_top:
                b[k] = v
        self._b = b

    @classmethod
    def unreachable(cls) -> "Env":
        return UNREACHABLE

    @classmethod
    def top(cls) -> "Env":
        return _env({})

    @property
    def reachable(self) -> bool:
        return self._b is not None

    @property
    def bindings(self) -> Mapping[str, Interval]:
        return dict(self._b) if self._b is not None else {}

    def get(self, var: str) -> Interval:
        if self._b is None:
            return EMPTY
        return self._b.get(var, TOP_INTERVAL)

    def set(self, var: str, value: Interval) -> "Env":
        if self._b is None:
            return self
        if value.is_empty:
            return UNREACHABLE
        b = dict(self._b)
        if value.is_top:
            b.pop(var, None)
        else:
            b[var] = value
        return _env(b)

    def __eq__(self, other):
        if not isinstance(other, Env):
            return NotImplemented
        return self._b == other._b

    def __hash__(self):
        if self._b is None:
            return hash(None)
        return hash(frozenset(self._b.items()))

    def __repr__(self):
        return f"Env({format_value(self)})"

    def __str__(self):
        return format_value(self)

    def __reduce__(self):
        return (_env, (self._b,))

    def join(self, other: "Env") -> "Env":
        if self._b is None:
            return other
        if other._b is None:
            return self
        b = {}
        for k, v in self._b.items():
            w = other._b.get(k)
            if w is not None:
                j = v.join(w)
                if not j.is_top:
                    b[k] = j
        return _env(b)

    def leq(self, other: "Env") -> bool:
        if self._b is None:
            return True
        if other._b is None:
            return False
        for k, w in other._b.items():
            v = self._b.get(k)
            if v is None or not v.leq(w):
                return False
        return True

    def widen(self, nxt: "Env") -> "Env":
        if self._b is None:
            return nxt
        if nxt._b is None:
            raise ContractError("widen: next value below old value")
        b = {}
        for k, w in nxt._b.items():
            v = self._b.get(k, TOP_INTERVAL)
            r = v.widen(w)
            if not r.is_top:
                b[k] = r
        return _env(b)


def _env(b: dict | None) -> Env:
    e = object.__new__(Env)
    e._b = b
    return e


UNREACHABLE = _env(None)


# --------------------------------------------------------------------------
# FiniteSet and Flat
# --------------------------------------------------------------------------


class FiniteSet:
    """Finite powerset lattice over atoms, ordered by inclusion."""

    __slots__ = ("atoms",)

    def __init__(self, atoms: Iterable[Atom] = ()):
        self.atoms = frozenset(atoms)

    def __eq__(self, other):
        if not isinstance(other, FiniteSet):
            return NotImplemented
        return self.atoms == other.atoms

    def __hash__(self):
        return hash(self.atoms)

    def __repr__(self):
        return f"FiniteSet({format_value(self)})"

    def __str__(self):
        return format_value(self)

    def __reduce__(self):
        return (FiniteSet, (tuple(self.atoms),))

    def join(self, other: "FiniteSet") -> "FiniteSet":
        if other.atoms <= self.atoms:
            return self
        return FiniteSet(self.atoms | other.atoms)

    def leq(self, other: "FiniteSet") -> bool:
        return self.atoms <= other.atoms

    def widen(self, nxt: "FiniteSet") -> "FiniteSet":
        return self.join(nxt)


class Flat:
    """Flat lattice: ``bot``, a single constant, or ``top``."""

    __slots__ = ("tag", "atom")

    BOT, CONST, TOP = 0, 1, 2

    def __init__(self, tag: int, atom: Atom | None = None):
        if tag == Flat.CONST and atom is None:
            raise ValueError("flat constant needs an atom")
        self.tag = tag
        self.atom = atom if tag == Flat.CONST else None

    @classmethod
    def const(cls, atom: Atom) -> "Flat":
        return cls(cls.CONST, atom)

    def __eq__(self, other):
        if not isinstance(other, Flat):
            return NotImplemented
        return self.tag == other.tag and self.atom == other.atom

    def __hash__(self):
        return hash((self.tag, self.atom))

    def __repr__(self):
        return f"Flat({format_value(self)})"

    def __str__(self):
        return format_value(self)

    def __reduce__(self):
        return (Flat, (self.tag, self.atom))

    def join(self, other: "Flat") -> "Flat":
        if self.tag == Flat.BOT or self == other:
            return other
        if other.tag == Flat.BOT:
            return self
        return FLAT_TOP

    def leq(self, other: "Flat") -> bool:
        return self.tag == Flat.BOT or other.tag == Flat.TOP or self == other

    def widen(self, nxt: "Flat") -> "Flat":
        return self.join(nxt)


FLAT_BOT = Flat(Flat.BOT)
FLAT_TOP = Flat(Flat.TOP)
EMPTY_SET = FiniteSet()

LatticeValue = Union[Interval, Env, FiniteSet, Flat]

_BOTTOMS = {"interval": EMPTY, "env": UNREACHABLE, "set": EMPTY_SET, "flat": FLAT_BOT}
_KIND_OF = {Interval: "interval", Env: "env", FiniteSet: "set", Flat: "flat"}


def bottom(kind: str) -> LatticeValue:
    try:
        return _BOTTOMS[kind]
    except KeyError:
        raise DomainError(f"unknown lattice {kind!r}") from None


def kind_of(v: LatticeValue) -> str:
    try:
        return _KIND_OF[type(v)]
    except KeyError:
        raise DomainError(f"not a lattice value: {v!r}") from None


def bottom_like(v: LatticeValue) -> LatticeValue:
    return _BOTTOMS[kind_of(v)]


def is_bottom(v: LatticeValue) -> bool:
    return v == _BOTTOMS[kind_of(v)]


# --------------------------------------------------------------------------
# generic operations
# --------------------------------------------------------------------------


def _check_same(a, b, what: str):
    if type(a) is not type(b):
        raise DomainError(f"{what}: variant mismatch {a!r} vs {b!r}")


def join(a: LatticeValue, b: LatticeValue) -> LatticeValue:
    """Least upper bound of two values of the same family."""
    if type(a) is not type(b):
        _check_same(a, b, "join")
    return a.join(b)


def leq(a: LatticeValue, b: LatticeValue) -> bool:
    """Lattice order ``a ⊑ b``."""
    if type(a) is not type(b):
        _check_same(a, b, "leq")
    return a.leq(b)


def widen(old: LatticeValue, nxt: LatticeValue) -> LatticeValue:
    """Widening; ``nxt`` must be above ``old`` (callers pass ``join(old, c)``).

    Interval bounds that moved jump straight to infinity; environments are
    widened pointwise; finite-height families widen by join.
    """
    _check_same(old, nxt, "widen")
    if not old.leq(nxt):
        raise ContractError(f"widen: {nxt} is not above {old}")
    return old.widen(nxt)


_OPS = {"+": "+", "-": "-", "*": "*", "add": "+", "sub": "-", "mul": "*"}


def _concrete(op: str, x: int, y: int) -> int:
    return x + y if op == "+" else x - y if op == "-" else x * y


def abstract_binop(op: str, a: LatticeValue, b: LatticeValue) -> LatticeValue:
    """Sound abstract arithmetic for ``+``, ``-`` and ``*``.

    Intervals use bound arithmetic (``0 * ±inf = 0``); flat values fold
    integer constants; finite sets of integers combine elementwise.
    Bottom always absorbs.
    """
    try:
        op = _OPS[op]
    except KeyError:
        raise DomainError(f"unknown operator {op!r}") from None
    if type(a) is Interval and type(b) is Interval:
        return interval_binop(op, a, b)
    _check_same(a, b, "binop")
    if isinstance(a, Flat):
        if a.tag == Flat.BOT or b.tag == Flat.BOT:
            return FLAT_BOT
        if a.tag == Flat.TOP or b.tag == Flat.TOP:
            return FLAT_TOP
        if not (isinstance(a.atom, int) and isinstance(b.atom, int)):
            raise DomainError(f"arithmetic on non-integer atoms {a} {b}")
        return Flat.const(_concrete(op, a.atom, b.atom))
    if isinstance(a, FiniteSet):
        if not all(isinstance(x, int) for x in a.atoms | b.atoms):
            raise DomainError("arithmetic on non-integer set atoms")
        return FiniteSet(_concrete(op, x, y) for x in a.atoms for y in b.atoms)
    raise DomainError(f"binop not defined on {kind_of(a)}")


# --------------------------------------------------------------------------
# text syntax
# --------------------------------------------------------------------------


def _fmt_bound(b: Bound) -> str:
    if b == INF:
        return "+inf"
    if b == NEG_INF:
        return "-inf"
    return str(b)


def _fmt_atom(a: Atom) -> str:
    return str(a)


def _atom_key(a: Atom):
    return (0, a, "") if isinstance(a, int) else (1, 0, a)


def format_value(v: LatticeValue) -> str:
    if isinstance(v, Interval):
        if v.is_empty:
            return "bot"
        if v.is_top:
            return "top"
        return f"[{_fmt_bound(v.lo)},{_fmt_bound(v.hi)}]"
    if isinstance(v, Env):
        if v._b is None:
            return "unreachable"
        items = ",".join(f"{k}:{format_value(v._b[k])}" for k in sorted(v._b))
        return f"env{{{items}}}"
    if isinstance(v, FiniteSet):
        return "{" + ",".join(_fmt_atom(a) for a in sorted(v.atoms, key=_atom_key)) + "}"
    if isinstance(v, Flat):
        if v.tag == Flat.BOT:
            return "bot"
        if v.tag == Flat.TOP:
            return "top"
        return _fmt_atom(v.atom)
    raise DomainError(f"not a lattice value: {v!r}")


class ValueSyntaxError(ValueError):
    def __init__(self, msg: str, pos: int):
        super().__init__(f"{msg} (at offset {pos})")
        self.pos = pos


_TOKEN = re.compile(r"\s*([+-]?inf|[+-]?\d+|[A-Za-z_][A-Za-z0-9_.']*|[\[\]{},:])")


class _Scanner:
    def __init__(self, text: str, pos: int = 0):
        self.text = text
        self.pos = pos

    def peek(self) -> str | None:
        m = _TOKEN.match(self.text, self.pos)
        return m.group(1) if m else None

    def next(self) -> str:
        m = _TOKEN.match(self.text, self.pos)
        if not m:
            raise ValueSyntaxError("expected a value token", self.pos)
        self.pos = m.end()
        return m.group(1)

    def expect(self, tok: str):
        got = self.next()
        if got != tok:
            raise ValueSyntaxError(f"expected {tok!r}, got {got!r}", self.pos)


def _parse_bound(tok: str, pos: int) -> Bound:
    if tok in ("-inf",):
        return NEG_INF
    if tok in ("inf", "+inf"):
        return INF
    try:
        return int(tok)
    except ValueError:
        raise ValueSyntaxError(f"bad interval bound {tok!r}", pos) from None


def _parse_atom(tok: str) -> Atom:
    try:
        return int(tok)
    except ValueError:
        return tok


def _scan_interval(sc: _Scanner) -> Interval:
    tok = sc.next()
    if tok == "bot":
        return EMPTY
    if tok == "top":
        return TOP_INTERVAL
    if tok != "[":
        raise ValueSyntaxError(f"expected interval, got {tok!r}", sc.pos)
    lo = _parse_bound(sc.next(), sc.pos)
    sc.expect(",")
    hi = _parse_bound(sc.next(), sc.pos)
    sc.expect("]")
    try:
        return Interval(lo, hi)
    except ValueError as e:
        raise ValueSyntaxError(str(e), sc.pos) from None


def _scan(sc: _Scanner, kind: str) -> LatticeValue:
    if kind == "interval":
        return _scan_interval(sc)
    if kind == "env":
        tok = sc.next()
        if tok in ("unreachable", "bot"):
            return UNREACHABLE
        if tok == "top":
            return Env.top()
        if tok != "env":
            raise ValueSyntaxError(f"expected env, got {tok!r}", sc.pos)
        sc.expect("{")
        b = {}
        if sc.peek() == "}":
            sc.next()
            return Env(b)
        while True:
            name = sc.next()
            sc.expect(":")
            b[name] = _scan_interval(sc)
            tok = sc.next()
            if tok == "}":
                return Env(b)
            if tok != ",":
                raise ValueSyntaxError(f"expected ',' or '}}', got {tok!r}", sc.pos)
    if kind == "set":
        tok = sc.next()
        if tok == "bot":
            return EMPTY_SET
        if tok != "{":
            raise ValueSyntaxError(f"expected set, got {tok!r}", sc.pos)
        atoms = []
        if sc.peek() == "}":
            sc.next()
            return FiniteSet()
        while True:
            atoms.append(_parse_atom(sc.next()))
            tok = sc.next()
            if tok == "}":
                return FiniteSet(atoms)
            if tok != ",":
                raise ValueSyntaxError(f"expected ',' or '}}', got {tok!r}", sc.pos)
    if kind == "flat":
        tok = sc.next()
        if tok == "bot":
            return FLAT_BOT
        if tok == "top":
            return FLAT_TOP
        if tok in "[]{},:":
            raise ValueSyntaxError(f"expected flat value, got {tok!r}", sc.pos)
        return Flat.const(_parse_atom(tok))
    raise DomainError(f"unknown lattice {kind!r}")


def scan_value(text: str, pos: int, kind: str) -> tuple[LatticeValue, int]:
    """Parse one value of lattice ``kind`` starting at ``pos``; return it and the end offset."""
    sc = _Scanner(text, pos)
    v = _scan(sc, kind)
    return v, sc.pos


def parse_value(text: str, kind: str) -> LatticeValue:
    v, end = scan_value(text, 0, kind)
    if text[end:].strip():
        raise ValueSyntaxError(f"trailing input {text[end:]!r}", end)
    return v


def guess_kind(text: str) -> str:
    """Best-effort lattice family of a printed value (``bot``/``top`` are ambiguous)."""
    t = text.strip()
    if t.startswith("env") or t == "unreachable":
        return "env"
    if t.startswith("{"):
        return "set"
    if t.startswith("[") or t in ("bot", "top"):
        return "interval"
    return "flat"
