import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixlab import lattice as L
from fixlab.corpus import eqs_systems
from fixlab.eqsys import EquationSystem, parse_system
from fixlab.lattice import DomainError, FiniteSet, Interval
from fixlab.solvers.seq import solve
from fixlab.verify import (
    OracleDivergence,
    ViolationKind,
    classify,
    compare_precision,
    kleene_solve,
    verify_solution,
)
from sysgen import random_monotone_system


@pytest.fixture
def spawn_write():
    return next(i for i in eqs_systems() if i.name == "spawn_write").system()


def test_seq_output_ok(spawn_write):
    assert verify_solution(spawn_write, solve(spawn_write)).ok


def test_hand_built_violation(spawn_write):
    sigma = dict(solve(spawn_write).values)
    sigma[spawn_write["⟨13⟩"]] = Interval.const(1)
    res = verify_solution(spawn_write, sigma)
    assert not res.ok
    kinds = {(v.unknown.label, v.kind) for v in res.violations}
    assert ("⟨13⟩", ViolationKind.RHS_NOT_SUBSUMED) in kinds
    assert res.violated_labels == ["⟨13⟩"]
    j = res.to_json()
    assert j["violations"][0]["required"] == "[1,43]"


def test_side_and_demand_violations():
    s = parse_system(
        "lattice interval;\ng: global\nt: local = const [0,0]\n"
        "x: local = seq(set g const [5,5]; demand t; const [0,0])\nroot x"
    )
    res = verify_solution(s, {s["x"]: Interval.const(0), s["g"]: Interval.const(0)})
    kinds = sorted(v.kind.value for v in res.violations)
    assert kinds == ["DemandUnreached", "SideNotSubsumed"]


def test_empty_ok():
    assert verify_solution(EquationSystem("interval"), {}).ok


def test_kleene_examples():
    s = parse_system("lattice interval;\nx: local = const [1,2]\ny: local = add(get x, const [1,1])\nroot y")
    sol = kleene_solve(s)
    assert sol["x"] == Interval(1, 2) and sol["y"] == Interval(2, 3)


def test_kleene_global_join():
    s = parse_system(
        "lattice interval;\ng: global\na: local = seq(set g const [0,0]; const [0,0])\n"
        "b: local = seq(set g const [42,42]; const [0,0])\nm: local = join(get a, get b)\nroot m"
    )
    assert kleene_solve(s)["g"] == Interval(0, 42)


def test_kleene_unreachable_absent():
    s = parse_system("lattice interval;\nx: local = const [1,2]\nlost: local = const [3,3]\nroot x")
    sol = kleene_solve(s)
    assert "lost" not in sol and "x" in sol


def test_kleene_diverges():
    s = parse_system("lattice interval;\nx: local = join(const [0,0], add(get x, const [1,1]))")
    with pytest.raises(OracleDivergence):
        kleene_solve(s, max_rounds=50)


def test_compare_examples():
    a = {"x": Interval(0, 42)}
    rep = compare_precision(_lab(a), _lab({"x": Interval(0, 10)}))
    assert rep.more_precise == 1 and rep.fraction("more_precise") == 1.0
    rep = compare_precision(_lab({"x": Interval(0, 5)}), _lab({"x": Interval(3, 9)}))
    assert rep.incomparable == 1
    rep = compare_precision(_lab(a), _lab(a))
    assert rep.fraction("equal") == 1.0


def test_compare_variant_mismatch():
    with pytest.raises(DomainError):
        compare_precision(_lab({"x": Interval(0, 1)}), _lab({"x": FiniteSet({"a"})}))


def _lab(d):
    from fixlab.eqsys import Kind, Unknown

    return {Unknown(k, Kind.LOCAL): v for k, v in d.items()}


intervals = st.builds(
    lambda a, b: Interval(min(a, b), max(a, b)), st.integers(-5, 5), st.integers(-5, 5)
) | st.just(L.EMPTY)


@given(intervals, intervals)
def test_classify_antisymmetric(a, b):
    swap = {"more_precise": "less_precise", "less_precise": "more_precise"}
    c = classify(a, b)
    assert classify(b, a) == swap.get(c, c)


@given(st.dictionaries(st.sampled_from("abcdef"), intervals), st.dictionaries(st.sampled_from("abcdef"), intervals))
def test_fractions_sum_to_one(a, b):
    rep = compare_precision(_lab(a), _lab(b))
    assert sum(rep.fractions.values()) == pytest.approx(1.0)
    assert rep.total == len(a.keys() | b.keys())
    assert rep.swapped().more_precise == compare_precision(_lab(b), _lab(a)).more_precise


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["set", "flat"]), st.integers(0, 2))
def test_kleene_is_solution(seed, lattice, gl):
    s = random_monotone_system(seed, lattice, globals_=gl)
    assert verify_solution(s, kleene_solve(s)).ok
