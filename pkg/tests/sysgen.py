"""Random equation systems for property and acceptance tests."""

from __future__ import annotations

import random

from fixlab.eqsys import Binop, Const, EquationSystem, Get, JoinE, Seq, SetE
from fixlab.lattice import FLAT_TOP, FiniteSet, Flat, Interval

ATOMS = ("a", "b", "c", "d", "e")


def _const(rng: random.Random, lattice: str):
    if lattice == "set":
        return FiniteSet(rng.sample(ATOMS, rng.randint(0, 2)))
    if lattice == "flat":
        r = rng.random()
        return FLAT_TOP if r < 0.1 else Flat.const(rng.randint(0, 3))
    lo = rng.randint(-5, 5)
    return Interval(lo, lo + rng.randint(0, 4))


def random_monotone_system(
    seed: int,
    lattice: str = "set",
    n: int | None = None,
    globals_: int = 0,
) -> EquationSystem:
    """Locals ``x0..x{n-1}`` over ``lattice`` with arbitrary (cyclic) gets.

    Right-hand sides are built from constants, gets, joins and (flat,
    interval) arithmetic, all monotone. With ``globals_`` > 0 some locals
    also side-effect globals. No demand nodes. Root is ``x0``.
    """
    rng = random.Random(seed)
    n = n or rng.randint(2, 9)
    s = EquationSystem(lattice)
    gs = [s.add_global(f"g{i}") for i in range(globals_)]
    xs = [s.add_local(f"x{i}") for i in range(n)]

    def expr(depth: int):
        r = rng.random()
        if depth <= 0 or r < 0.3:
            return Const(_const(rng, lattice)) if rng.random() < 0.4 else Get(rng.choice(xs + gs))
        if lattice != "set" and r < 0.55:
            return Binop(rng.choice("+-*"), expr(depth - 1), expr(depth - 1))
        return JoinE(expr(depth - 1), expr(depth - 1))

    for x in xs:
        body = expr(3)
        if gs and rng.random() < 0.4:
            body = Seq((SetE(rng.choice(gs), expr(2)), body))
        s.set_rhs(x, body)
    s.add_root(xs[0])
    return s
