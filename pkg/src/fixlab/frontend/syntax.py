"""
Toy multi-threaded language: tokens, AST and a recursive-descent parser.

::

    program  := (global | fn)*
    global   := "global" NAME ";"
    fn       := "fn" NAME "(" [NAME] ")" block
    block    := "{" stmt* "}"
    stmt     := NAME "=" (expr | "call" NAME "(" [expr] ")") ";"
              | "call" NAME "(" [expr] ")" ";"
              | "spawn" NAME "(" [expr] ")" ";"
              | "return" [expr] ";"
              | "if" "(" cond ")" block ["else" block]
              | "while" "(" cond ")" block
    cond     := expr ("<" | "<=" | "==" | "!=" | ">=" | ">") expr
    expr     := term (("+" | "-") term)*
    term     := unary ("*" unary)*
    unary    := "-" unary | INT | NAME | "(" expr ")"

``//`` starts a line comment. A name assigned inside a function is a local
of that function unless it is a declared global.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

KEYWORDS = {"global", "fn", "if", "else", "while", "call", "spawn", "return"}
RELOPS = ("<=", ">=", "==", "!=", "<", ">")
NEGATE = {"<": ">=", "<=": ">", "==": "!=", "!=": "==", ">=": "<", ">": "<="}
MIRROR = {"<": ">", "<=": ">=", "==": "==", "!=": "!=", ">=": "<=", ">": "<"}


class ProgramError(ValueError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        where = f"{line}:{col}: " if line else ""
        super().__init__(f"{where}{msg}")
        self.line, self.col = line, col


# -- expressions ----------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: int


@dataclass(frozen=True)
class Name:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Name, BinOp]


@dataclass(frozen=True)
class Cond:
    op: str
    left: Expr
    right: Expr

    def negated(self) -> "Cond":
        return Cond(NEGATE[self.op], self.left, self.right)


def expr_names(e: Expr) -> list[str]:
    """Variable names in ``e``, first occurrence order."""
    out: list[str] = []

    def walk(e):
        if isinstance(e, Name):
            if e.name not in out:
                out.append(e.name)
        elif isinstance(e, BinOp):
            walk(e.left)
            walk(e.right)

    walk(e)
    return out


def format_expr(e: Expr) -> str:
    if isinstance(e, Num):
        return str(e.value)
    if isinstance(e, Name):
        return e.name
    return f"({format_expr(e.left)} {e.op} {format_expr(e.right)})"


# -- statements --------------------------------------------------------------------


@dataclass(frozen=True)
class Assign:
    target: str
    value: Expr
    line: int = 0


@dataclass(frozen=True)
class Call:
    func: str
    arg: Expr | None
    target: str | None = None  # x = call f(e)
    line: int = 0


@dataclass(frozen=True)
class Spawn:
    func: str
    arg: Expr | None
    line: int = 0


@dataclass(frozen=True)
class Return:
    value: Expr | None
    line: int = 0


@dataclass(frozen=True)
class If:
    cond: Cond
    then: tuple
    orelse: tuple = ()
    line: int = 0


@dataclass(frozen=True)
class While:
    cond: Cond
    body: tuple
    line: int = 0


Stmt = Union[Assign, Call, Spawn, Return, If, While]


@dataclass
class Function:
    name: str
    param: str | None
    body: tuple
    locals: list[str] = field(default_factory=list)


@dataclass
class Program:
    globals: list[str]
    functions: dict[str, Function]
    entry: str = "main"


# -- parser -------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s+|//[^\n]*|(?P<num>\d+)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op><=|>=|==|!=|[-+*=<>(){};,])"
)


def _tokenize(text: str) -> list[tuple[str, str, int, int]]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ProgramError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind is not None:
            val = m.group(kind)
            if kind == "name" and val in KEYWORDS:
                kind = "kw"
            toks.append((kind, val, line, pos - line_start + 1))
        chunk = m.group(0)
        if "\n" in chunk:
            line += chunk.count("\n")
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    toks.append(("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self, k: int = 0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok=None) -> ProgramError:
        _, _, line, col = tok or self.peek()
        return ProgramError(msg, line, col)

    def take(self):
        t = self.peek()
        self.i += 1
        return t

    def at(self, val: str) -> bool:
        kind, v, _, _ = self.peek()
        return v == val and kind in ("op", "kw")

    def expect(self, val: str):
        if not self.at(val):
            raise self.error(f"expected {val!r}, found {self.peek()[1] or 'end of input'!r}")
        return self.take()

    def name(self) -> str:
        kind, v, _, _ = self.peek()
        if kind != "name":
            raise self.error(f"expected a name, found {v or 'end of input'!r}")
        self.take()
        return v

    # -- top level

    def program(self) -> Program:
        globals_: list[str] = []
        funcs: dict[str, Function] = {}
        while self.peek()[0] != "eof":
            tok = self.peek()
            if self.at("global"):
                self.take()
                g = self.name()
                self.expect(";")
                if g in globals_:
                    raise self.error(f"global {g} declared twice", tok)
                globals_.append(g)
            elif self.at("fn"):
                self.take()
                fname = self.name()
                self.expect("(")
                param = None if self.at(")") else self.name()
                self.expect(")")
                if fname in funcs:
                    raise self.error(f"function {fname} defined twice", tok)
                funcs[fname] = Function(fname, param, self.block())
            else:
                raise self.error(f"expected 'global' or 'fn', found {tok[1]!r}")
        return Program(globals_, funcs)

    def block(self) -> tuple:
        self.expect("{")
        out = []
        while not self.at("}"):
            if self.peek()[0] == "eof":
                raise self.error("unterminated block")
            out.append(self.stmt())
        self.take()
        return tuple(out)

    def call_args(self) -> Expr | None:
        self.expect("(")
        arg = None if self.at(")") else self.expr()
        self.expect(")")
        return arg

    def stmt(self) -> Stmt:
        tok = self.peek()
        line = tok[2]
        if self.at("if"):
            self.take()
            cond = self.cond()
            then = self.block()
            orelse: tuple = ()
            if self.at("else"):
                self.take()
                orelse = self.block()
            return If(cond, then, orelse, line)
        if self.at("while"):
            self.take()
            return While(self.cond(), self.block(), line)
        if self.at("call") or self.at("spawn"):
            kw = self.take()[1]
            f = self.name()
            arg = self.call_args()
            self.expect(";")
            return Call(f, arg, None, line) if kw == "call" else Spawn(f, arg, line)
        if self.at("return"):
            self.take()
            value = None if self.at(";") else self.expr()
            self.expect(";")
            return Return(value, line)
        target = self.name()
        self.expect("=")
        if self.at("call"):
            self.take()
            f = self.name()
            arg = self.call_args()
            self.expect(";")
            return Call(f, arg, target, line)
        value = self.expr()
        self.expect(";")
        return Assign(target, value, line)

    def cond(self) -> Cond:
        self.expect("(")
        left = self.expr()
        kind, op, _, _ = self.peek()
        if op not in RELOPS or kind != "op":
            raise self.error(f"expected a comparison, found {op!r}")
        self.take()
        right = self.expr()
        self.expect(")")
        return Cond(op, left, right)

    def expr(self) -> Expr:
        e = self.term()
        while self.at("+") or self.at("-"):
            op = self.take()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.at("*"):
            self.take()
            e = BinOp("*", e, self.unary())
        return e

    def unary(self) -> Expr:
        kind, v, _, _ = self.peek()
        if self.at("-"):
            self.take()
            inner = self.unary()
            if isinstance(inner, Num):
                return Num(-inner.value)
            return BinOp("-", Num(0), inner)
        if kind == "num":
            self.take()
            return Num(int(v))
        if kind == "name":
            self.take()
            return Name(v)
        if self.at("("):
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        raise self.error(f"expected an expression, found {v or 'end of input'!r}")


def _resolve(p: Program):
    """Name resolution; fills in each function's locals."""
    if p.entry not in p.functions:
        raise ProgramError(f"no entry function {p.entry!r}")
    gset = set(p.globals)

    for f in p.functions.values():
        if f.param is not None and f.param in gset:
            raise ProgramError(f"parameter {f.param} of {f.name} shadows a global")
        assigned: list[str] = [f.param] if f.param else []

        def collect(stmts):
            for s in stmts:
                if isinstance(s, (Assign, Call)) and getattr(s, "target", None):
                    if s.target not in gset and s.target not in assigned:
                        assigned.append(s.target)
                elif isinstance(s, If):
                    collect(s.then)
                    collect(s.orelse)
                elif isinstance(s, While):
                    collect(s.body)

        collect(f.body)
        if "ret" in assigned:
            raise ProgramError(f"'ret' is reserved for return values (in {f.name})")
        f.locals = assigned
        known = gset | set(assigned)

        def check_expr(e, line):
            for n in expr_names(e) if e is not None else ():
                if n not in known:
                    raise ProgramError(f"undefined variable {n} in {f.name}", line)

        def check(stmts):
            for s in stmts:
                if isinstance(s, Assign):
                    check_expr(s.value, s.line)
                elif isinstance(s, (Call, Spawn)):
                    if s.func not in p.functions:
                        raise ProgramError(f"undefined function {s.func}", s.line)
                    callee = p.functions[s.func]
                    if (s.arg is None) != (callee.param is None):
                        raise ProgramError(f"{s.func} takes {0 if callee.param is None else 1} argument(s)", s.line)
                    check_expr(s.arg, s.line)
                elif isinstance(s, Return):
                    check_expr(s.value, s.line)
                elif isinstance(s, If):
                    check_expr(s.cond.left, s.line)
                    check_expr(s.cond.right, s.line)
                    check(s.then)
                    check(s.orelse)
                elif isinstance(s, While):
                    check_expr(s.cond.left, s.line)
                    check_expr(s.cond.right, s.line)
                    check(s.body)

        check(f.body)


def parse_program(text: str) -> Program:
    p = _Parser(text).program()
    _resolve(p)
    return p
