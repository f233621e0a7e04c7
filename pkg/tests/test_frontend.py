import pickle

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixlab.api import SOLVERS
from fixlab.corpus import program_text, toy_programs
from fixlab.eqsys import DemandE, Get, SetE, iter_nodes
from fixlab.frontend import DemandStrategy, analyze, build_equations, parse_program
from fixlab.frontend.build import apply_guard
from fixlab.frontend.syntax import Cond, Name, Num, ProgramError
from fixlab.lattice import INF, UNREACHABLE, Env, Interval
from fixlab.solvers.seq import solve
from fixlab.verify import compare_precision

SPAWN_WRITE = program_text("spawn_write")


# -- parsing ----------------------------------------------------------------------------------


def test_spawn_write_structure():
    p = parse_program(SPAWN_WRITE)
    assert list(p.functions) == ["foo", "main"]
    assert list(p.globals) == ["g"]


def test_empty_main():
    p = parse_program("fn main() { }")
    s = build_equations(p)
    assert sorted(u.label for u in s.locals) == ["main.0", "main.end"]
    assert analyze(p).main_end == Env.top()


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("fn main() { spawn undefined(1); }", "undefined"),
        ("fn main() { x = y; }", "y"),
        ("fn main() { x = 1 }", "expected"),
        ("fn f(a) { return a; } fn main() { call f(); }", "argument"),
        ("fn helper() { }", "main"),
        ("global g; fn main() { ret = 1; }", "ret"),
    ],
)
def test_program_errors(text, fragment):
    with pytest.raises(ProgramError) as exc:
        parse_program(text)
    assert fragment in str(exc.value)


def test_error_has_position():
    with pytest.raises(ProgramError) as exc:
        parse_program("fn main() {\n  x = 1;\n  y = ;\n}")
    assert exc.value.line == 3


def test_labels_stable():
    a = build_equations(parse_program(SPAWN_WRITE))
    b = build_equations(parse_program(SPAWN_WRITE))
    assert [u.label for u in a.unknowns] == [u.label for u in b.unknowns]
    assert a == b


# -- equations ---------------------------------------------------------------------------------


def test_spawn_shape():
    s = build_equations(parse_program(SPAWN_WRITE), "threads")
    spawn_point = next(
        u for u in s.locals if any(type(n) is DemandE for n in iter_nodes(s.rhs_of(u)))
    )
    ns = list(iter_nodes(s.rhs_of(spawn_point)))
    sets = [n for n in ns if type(n) is SetE]
    assert [n.target.label for n in sets] == ["foo.start"]
    assert [n.target.label for n in ns if type(n) is DemandE] == ["foo.end"]
    # the argument env binds a = [42,42]
    arg = sets[0].value.fn(None, None, None, Env.top())
    assert arg.get("a") == Interval.const(42)


def test_call_shapes_per_strategy():
    text = program_text("calls")
    kinds = {}
    for strat in DemandStrategy:
        s = build_equations(parse_program(text), strat)
        kinds[strat] = sum(type(n) is DemandE for u in s.locals for n in iter_nodes(s.rhs_of(u)))
    assert kinds[DemandStrategy.FUNCTIONS] > kinds[DemandStrategy.THREADS]
    assert kinds[DemandStrategy.NONE] == 0


def test_none_strategy_spawn_reads_end():
    s = build_equations(parse_program(SPAWN_WRITE), "none")
    ns = [n for u in s.locals for n in iter_nodes(s.rhs_of(u))]
    assert not any(type(n) is DemandE for n in ns)
    assert any(type(n) is Get and n.target.label == "foo.end" for n in ns)


def test_straight_line_one_pass():
    p = parse_program("fn main() { x = 1; y = x + 2; z = y * 3; return z; }")
    s = build_equations(p)
    sol = solve(s)
    assert sol.stats["rhs_evaluations"] == len(s.locals)
    assert sol["main.end"].get("ret") == Interval.const(9)


def test_transfers_pickle():
    s = build_equations(parse_program(program_text("workers4")))
    for u in s.locals:
        for n in iter_nodes(s.rhs_of(u)):
            if hasattr(n, "fn"):
                assert pickle.loads(pickle.dumps(n.fn)) == n.fn


# -- guards ------------------------------------------------------------------------------------


def test_guard_refines_against_constant():
    env = Env({"x": Interval(0, INF)})
    assert apply_guard(Cond("<", Name("x"), Num(10)), env, {}).get("x") == Interval(0, 9)
    assert apply_guard(Cond(">=", Name("x"), Num(10)), env, {}).get("x") == Interval(10, INF)
    assert apply_guard(Cond(">", Num(3), Name("x")), env, {}).get("x") == Interval(0, 2)


def test_guard_definitely_false():
    env = Env({"x": Interval.const(1)})
    assert apply_guard(Cond(">", Name("x"), Num(5)), env, {}) == UNREACHABLE
    assert apply_guard(Cond("!=", Name("x"), Num(1)), env, {}) == UNREACHABLE


@settings(max_examples=200)
@given(
    st.sampled_from(["<", "<=", "==", "!=", ">=", ">"]),
    st.integers(-6, 6),
    st.integers(0, 6),
    st.integers(-8, 8),
)
def test_guard_sound(op, lo, width, c):
    env = Env({"x": Interval(lo, lo + width)})
    out = apply_guard(Cond(op, Name("x"), Num(c)), env, {})
    import operator

    rel = {"<": operator.lt, "<=": operator.le, "==": operator.eq, "!=": operator.ne, ">=": operator.ge, ">": operator.gt}[op]
    for v in range(lo, lo + width + 1):
        if rel(v, c):
            assert v in out.get("x")


# -- analysis ----------------------------------------------------------------------------------


@pytest.mark.parametrize("solver", SOLVERS)
@pytest.mark.parametrize("strategy", ["threads", "functions"])
def test_spawn_write_all_solvers(solver, strategy):
    for workers in (1, 2, 4):
        rep = analyze(SPAWN_WRITE, solver, workers, strategy)
        assert rep.globals["g"] == Interval(0, 42)
        assert rep.main_end.get("a") == Interval(1, 43)
        assert rep.verification.ok


def test_loop_exit():
    # hand computation: head widens to [0,+inf]; exit guard x >= 10 gives [10,+inf]
    rep = analyze(program_text("loop_counter"))
    assert rep.main_end.get("x") == Interval(10, INF)
    assert rep.main_end.get("ret") == Interval(10, INF)


def test_dead_code_unreachable():
    rep = analyze(program_text("dead_code"))
    # only the zero initialization reaches it; 99 and 42 sit in dead code
    assert rep.globals["never"] == Interval.const(0)
    assert rep.main_end.get("x") == Interval.const(1)


def test_no_globals_all_solvers_agree():
    text = program_text("no_globals")
    sols = [analyze(text, s, 2).solution for s in SOLVERS]
    assert sols[0].same_values(sols[1]) and sols[0].same_values(sols[2])


def test_four_workers_five_tasks():
    rep = analyze(program_text("workers4"), "independent", 4, "threads")
    assert rep.stats["tasks_created"] >= 5


@pytest.mark.parametrize("item", toy_programs(), ids=lambda i: i.name)
def test_every_strategy_verifies(item):
    reps = {s: analyze(item.text, "seq", 1, s) for s in ("threads", "functions", "none")}
    for r in reps.values():
        assert r.verification.ok
    cmp = compare_precision(reps["threads"].solution, reps["functions"].solution)
    assert sum(cmp.fractions.values()) == pytest.approx(1.0)
