import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixlab import lattice as L
from fixlab.corpus import eqs_systems, toy_programs
from fixlab.eqsys import parse_system
from fixlab.lattice import Interval
from fixlab.solvers.atomic import EMPTY, AtomicRecordTable, AtomicRef, MSQueue, SharedWorkPool
from fixlab.solvers.common import SolverConfig
from fixlab.solvers.immediate import ImmediateSolver, solve_immediate
from fixlab.solvers.seq import solve
from fixlab.synthetic import generate_synthetic
from fixlab.verify import verify_solution
from sysgen import random_monotone_system

CLEAN = {"work_empty": True, "all_stable": True, "none_called": True}


@pytest.fixture
def spawn_write():
    return next(i for i in eqs_systems() if i.name == "spawn_write").system()


# -- data structures -------------------------------------------------------------------


def test_msqueue_fifo():
    q = MSQueue()
    assert q.dequeue() is EMPTY and q.empty()
    for i in range(5):
        q.enqueue(i)
    assert list(q) == list(range(5))
    assert [q.dequeue() for _ in range(5)] == list(range(5))
    assert q.dequeue() is EMPTY


def test_msqueue_concurrent():
    q = MSQueue()
    n, producers = 2000, 4

    def produce(p):
        for i in range(n):
            q.enqueue((p, i))

    got = []
    lock = threading.Lock()

    def consume():
        mine = []
        while len(mine) < n:
            item = q.dequeue()
            if item is not EMPTY:
                mine.append(item)
        with lock:
            got.extend(mine)

    ts = [threading.Thread(target=produce, args=(p,)) for p in range(producers)]
    ts += [threading.Thread(target=consume) for _ in range(producers)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert sorted(got) == sorted((p, i) for p in range(producers) for i in range(n))


def test_table_find_or_create_unique():
    s = parse_system("lattice interval;\n" + "\n".join(f"x{i}: local = const [0,0]" for i in range(200)))
    table = AtomicRecordTable(s.bottom_of, bits=3)
    found = [[] for _ in range(4)]

    def hammer(k):
        for u in s.locals:
            found[k].append(table.find(u))

    ts = [threading.Thread(target=hammer, args=(k,)) for k in range(4)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    for k in range(1, 4):
        assert all(a is b for a, b in zip(found[0], found[k]))
    assert len(list(table)) == 200


def test_pool_set_semantics():
    s = parse_system("lattice interval;\na: local = const [0,0]\nb: local = const [0,0]")
    table = AtomicRecordTable(s.bottom_of)
    ha, hb = table.find(s["a"]), table.find(s["b"])
    pool = SharedWorkPool()
    assert pool.add(ha) and not pool.add(ha)
    assert pool.add(hb)
    pool.remove(ha)
    assert pool.pending() == [s["b"]]
    assert pool.take() is hb
    assert pool.take() is None


def test_atomic_ref_identity():
    a, b = [1, 2], [1, 2]
    r = AtomicRef(a)
    assert not r.compare_and_set(b, [3])  # equal but not identical
    assert r.compare_and_set(a, [3]) and r.get() == [3]


# -- solver ------------------------------------------------------------------------------


@pytest.mark.parametrize("workers", [1, 2, 4])
def test_spawn_write_values(spawn_write, workers):
    sol = solve_immediate(spawn_write, workers=workers)
    assert sol["g"] == Interval(0, 42)
    assert sol["⟨13⟩"] == Interval(1, 43)
    assert sol.termination == CLEAN


def test_workers1_matches_seq(spawn_write):
    a, b = solve(spawn_write), solve_immediate(spawn_write, workers=1)
    assert a.same_values(b)
    assert a.stats["rhs_evaluations"] == b.stats["rhs_evaluations"]


def test_synthetic_four_components():
    s = generate_synthetic(5, 4, 40, 1, 3)
    one = solve_immediate(s, workers=1)
    four = solve_immediate(s, workers=4, config=SolverConfig(seed=3))
    assert verify_solution(s, four).ok
    assert one.same_values(four)


def test_single_chain_many_workers():
    s = generate_synthetic(2, 1, 60, 0, 2)
    sol = solve_immediate(s, workers=8)
    assert verify_solution(s, sol).ok
    assert sol.termination == CLEAN


class _InterleavedRef(AtomicRef):
    """Runs ``between`` once, right before the first compare_and_set."""

    def __init__(self, value, between):
        super().__init__(value)
        self.between = between

    def compare_and_set(self, expected, new):
        if self.between is not None:
            f, self.between = self.between, None
            f()
        return super().compare_and_set(expected, new)


@pytest.mark.parametrize("first,second", [((0, 0), (42, 42)), ((42, 42), (0, 0))])
def test_side_interleaving(first, second):
    s = parse_system("lattice interval;\ng: global\nx: local = get g")
    solver = ImmediateSolver(s, 2)
    wa, wb = solver.workers
    g, x = s["g"], s["x"]
    hg = solver.table.find(g)
    hg.snap = _InterleavedRef(hg.snap.get(), lambda: solver.side(wb, x, g, Interval(*second)))
    solver.side(wa, x, g, Interval(*first))
    assert hg.snap.get().value == Interval(0, 42)
    assert wa.cas_retries == 1 and wb.cas_retries == 0


def test_side_subsumed_after_retry():
    s = parse_system("lattice interval;\ng: global\nx: local = get g")
    solver = ImmediateSolver(s, 2)
    wa, wb = solver.workers
    g, x = s["g"], s["x"]
    hg = solver.table.find(g)
    hx = solver.table.find(x)
    hx.snap.compare_and_set(hx.snap.get(), hx.snap.get()._replace(stable=True))
    hg.snap = _InterleavedRef(hg.snap.get(), lambda: solver.side(wb, x, g, Interval(0, 10)))
    hg.influences.add(x)
    solver.side(wa, x, g, Interval(2, 3))
    assert hg.snap.get().value == Interval(0, 10)
    # only the winner committed and destabilized
    assert wa.destabilizations == 0 and wb.destabilizations == 1


def test_side_stress():
    s = parse_system("lattice interval;\ng: global\nx: local = get g")
    for _ in range(20):
        solver = ImmediateSolver(s, 2)
        g, x = s["g"], s["x"]
        barrier = threading.Barrier(2)

        def go(w, v):
            barrier.wait()
            solver.side(w, x, g, v)

        ts = [
            threading.Thread(target=go, args=(solver.workers[0], Interval.const(0))),
            threading.Thread(target=go, args=(solver.workers[1], Interval.const(42))),
        ]
        for t in ts:
            t.start()
        for t in ts:
            t.join()
        assert solver.table.find(g).snap.get().value == Interval(0, 42)


def test_uncontended_commit():
    s = parse_system("lattice interval;\nx: local = const [1,1]")
    solver = ImmediateSolver(s, 1)
    w = solver.workers[0]
    h = solver.table.find(s["x"])
    assert solver.commit_value(w, h, Interval(1, 1))
    assert w.cas_attempts == 1 and w.cas_retries == 0
    assert not solver.commit_value(w, h, Interval(1, 1))


def test_claim_failure_returns_interim():
    s = parse_system("lattice interval;\ny: local = const [7,7]\nx: local = get y")
    solver = ImmediateSolver(s, 2)
    wa, wb = solver.workers
    hy = solver.table.find(s["y"])
    assert solver._try_claim(wb, hy)
    assert solver.query(wa, s["x"], s["y"]) == L.EMPTY
    assert hy.snap.get().widen_point
    assert s["x"] in list(hy.influences.take_all())


def test_single_iterator_debug():
    s = generate_synthetic(9, 3, 50, 2, 2)
    for seed in range(5):
        solver = ImmediateSolver(s, 4, SolverConfig(debug=True, seed=seed))
        sol = solver.solve(s.default_roots())
        assert sol.termination["no_claims_at_termination"]
        assert not solver.lost_updates()
        assert verify_solution(s, sol).ok


def test_two_workers_same_fresh_unknown():
    s = parse_system("lattice interval;\ny: local = const [7,7]\na: local = get y\nb: local = get y")
    for _ in range(30):
        solver = ImmediateSolver(s, 2, SolverConfig(debug=True))
        evals = []
        barrier = threading.Barrier(2)

        def go(w, x):
            barrier.wait()
            solver.query(w, x, s["y"])
            evals.append(w.evals)

        ts = [threading.Thread(target=go, args=(w, s[n])) for w, n in zip(solver.workers, "ab")]
        for t in ts:
            t.start()
        for t in ts:
            t.join()
        assert sum(evals) == 1


@pytest.mark.parametrize("item", toy_programs()[:8], ids=lambda i: i.name)
def test_toy_programs_parallel(item):
    system = item.system()
    for workers in (2, 4):
        sol = solve_immediate(system, workers=workers, config=SolverConfig(seed=workers))
        assert verify_solution(system, sol).ok
        assert sol.termination == CLEAN
        assert sol.stats["retry_ratio"] < 0.01


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["set", "flat", "interval"]), st.integers(1, 4))
def test_random_systems(seed, lattice, workers):
    s = random_monotone_system(seed, lattice, globals_=2)
    sol = solve_immediate(s, workers=workers, config=SolverConfig(seed=seed))
    assert verify_solution(s, sol).ok
    assert sol.termination == CLEAN
    if lattice != "interval":
        # finite height, no widening: the least solution is unique
        assert sol.same_values(solve(s))
