"""Seeded generator of desk-scale benchmark systems.

Each component is a dependency chain ``c<k>.0 <- c<k>.1 <- ... <- c<k>.<n-1>``
of interval locals. Every link reads its predecessor, runs ``work_factor``
value-preserving interval operations, adds a small seeded increment and
contributes the result to one of the component's globals. The last link is
the component root. With more than one component, a ``main`` local demands
every component root and joins the component globals.
"""

from __future__ import annotations

import random

from fixlab.eqsys import Binop, Const, DemandE, EquationSystem, Get, JoinE, Let, Seq, SetE, Var
from fixlab.lattice import Interval

_VARIANTS = 4
_ZERO = Const(Interval.const(0))
_ONE = Const(Interval.const(1))


def _work(rng: random.Random, e, work_factor: int, bump: int):
    # identity-preserving ops: (+0), (-0), (*1)
    for _ in range(work_factor - 1):
        op = rng.choice("+-*")
        e = Binop(op, e, _ONE if op == "*" else _ZERO)
    return Binop("+", e, Const(Interval(0, bump)))


def generate_synthetic(
    seed: int,
    components: int,
    chain_length: int,
    globals_per_component: int,
    work_factor: int,
) -> EquationSystem:
    if components < 1 or chain_length < 1 or work_factor < 1 or globals_per_component < 0:
        raise ValueError("components, chain_length, work_factor must be >= 1; globals >= 0")
    rng = random.Random(seed)
    # bodies only mention the let-bound predecessor, so a few shared trees suffice
    bodies = [_work(rng, Var("p"), work_factor, bump) for bump in range(3) for _ in range(_VARIANTS)]
    s = EquationSystem("interval")
    gs = [
        [s.add_global(f"g{c}.{j}") for j in range(globals_per_component)]
        for c in range(components)
    ]
    chains = [[s.add_local(f"c{c}.{i}") for i in range(chain_length)] for c in range(components)]
    for c, chain in enumerate(chains):
        start = rng.randint(0, 9)
        for i, u in enumerate(chain):
            src = Get(chain[i - 1]) if i else Const(Interval.const(start))
            body = rng.choice(bodies)
            if gs[c]:
                g = gs[c][rng.randrange(len(gs[c]))]
                body = Let("v", body, Seq((SetE(g, Var("v")), Var("v"))))
            s.set_rhs(u, Let("p", src, body))
    if components == 1:
        s.add_root(chains[0][-1])
        return s
    main = s.add_local("main")
    result = _ZERO
    for g in (g for row in gs for g in row):
        result = JoinE(result, Get(g))
    s.set_rhs(main, Seq(tuple(DemandE(chain[-1]) for chain in chains) + (result,)))
    s.add_root(main)
    return s


SCALING_FIXTURE = dict(components=8, chain_length=2000, globals_per_component=1, work_factor=200)
