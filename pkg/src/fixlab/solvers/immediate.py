"""
Parallel solver over one shared record table.

A fixed pool of worker threads drains a shared top-level work pool. Each
unknown's record is an immutable :class:`~fixlab.solvers.atomic.Snapshot`
swapped by compare-and-swap; a worker *claims* an unknown by flipping
``called`` from false to true, so at most one worker iterates any unknown.
Influence sets sit outside the snapshot. Ordering rules that keep
concurrent reads sound:

- a query adds the reader to ``influences(y)`` before reading ``value(y)``;
- a committed value change is always followed by ``destabilize``;
- an owner only releases its claim through a CAS that still sees
  ``stable = true``, so a concurrent destabilization forces another round.

With one worker the sequence of evaluations is the sequential solver's.
"""

from __future__ import annotations

import random
import threading
import time
from dataclasses import dataclass

from fixlab import lattice as L
from fixlab.eqsys import AnalysisError, EquationSystem, Unknown, eval_rhs
from fixlab.lattice import LatticeValue
from fixlab.solvers.atomic import AtomicRecordTable, RecordHandle, SharedWorkPool
from fixlab.solvers.common import BudgetExceeded, Solution, SolverConfig, start_deep_thread


class _Abort(Exception):
    """Another worker failed; unwind quietly."""


@dataclass
class _Worker:
    wid: int
    rng: random.Random | None
    evals: int = 0
    cas_attempts: int = 0
    cas_retries: int = 0
    claims_skipped: int = 0
    destabilizations: int = 0
    widenings: int = 0


class ImmediateSolver:
    name = "immediate"

    def __init__(self, system: EquationSystem, workers: int, config: SolverConfig | None = None):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.system = system
        self.config = config or SolverConfig()
        self.nworkers = workers
        self.table = AtomicRecordTable(system.bottom_of, self.config.bucket_bits)
        self.pool = SharedWorkPool()
        self.workers = [_Worker(i, self._rng(i)) for i in range(workers)]
        self._cond = threading.Condition()
        self._idle = 0
        self._done = False
        self._error: BaseException | None = None
        self._fired_with_claims = False
        # debug-only bookkeeping
        self._owners: dict[Unknown, int] = {}
        self._owners_lock = threading.Lock()
        self._contrib_log: list[tuple[Unknown, LatticeValue]] = []

    def _rng(self, wid: int) -> random.Random | None:
        if self.config.seed is None:
            return None
        return random.Random(self.config.seed * 7919 + wid)

    # -- snapshot updates -------------------------------------------------------

    def _update(self, w: _Worker, h: RecordHandle, change):
        """CAS loop; ``change(snap)`` returns the replacement or None for no-op."""
        while True:
            s = h.snap.get()
            n = change(s)
            if n is None:
                return s, None
            w.cas_attempts += 1
            if h.snap.compare_and_set(s, n):
                return s, n
            w.cas_retries += 1

    def _try_claim(self, w: _Worker, h: RecordHandle) -> bool:
        while True:
            s = h.snap.get()
            if s.called:
                return False
            w.cas_attempts += 1
            if h.snap.compare_and_set(s, s._replace(called=True)):
                if self.config.debug:
                    with self._owners_lock:
                        assert h.unknown not in self._owners, f"{h.unknown} claimed twice"
                        self._owners[h.unknown] = w.wid
                return True
            w.cas_retries += 1

    def _count_eval(self, w: _Worker):
        if self._error is not None:
            raise _Abort()
        w.evals += 1
        if sum(x.evals for x in self.workers) > self.config.eval_budget:
            raise BudgetExceeded(f"more than {self.config.eval_budget} right-hand side evaluations")

    # -- solver operations --------------------------------------------------------

    def iterate(self, w: _Worker, x: Unknown, hx: RecordHandle):
        """Iterate ``x``; the caller holds the claim and this call releases it."""
        rhs = self.system.rhs_of(x)
        bottom = self.system.bottom_of(x)

        def get(y):
            return self.query(w, x, y)

        def set_(g, c):
            self.side(w, x, g, c)

        def demand(y):
            self.promote(w, x, y)

        debug = self.config.debug
        while True:
            s = hx.snap.get()
            if s.stable:
                if s.toplevel:
                    self.pool.remove(hx)
                if debug:
                    with self._owners_lock:
                        del self._owners[x]
                w.cas_attempts += 1
                if hx.snap.compare_and_set(s, s._replace(called=False)):
                    return
                w.cas_retries += 1
                if debug:
                    with self._owners_lock:
                        self._owners[x] = w.wid
                continue
            self._update(w, hx, lambda s: s._replace(stable=True))
            self._count_eval(w)
            new = eval_rhs(rhs, get, set_, demand, bottom)
            self.commit_value(w, hx, new)

    def commit_value(self, w: _Worker, h: RecordHandle, new: LatticeValue) -> bool:
        """Fold ``new`` into ``h``'s value; retries re-check subsumption first."""

        def change(s):
            if L.leq(new, s.value):
                return None
            joined = L.join(s.value, new)
            if not s.widen_point:
                return s._replace(value=joined)
            widened = L.widen(s.value, joined)
            return s._replace(value=widened)

        old, committed = self._update(w, h, change)
        if committed is None:
            return False
        if committed.value != L.join(old.value, new):
            w.widenings += 1
        if self.config.on_store is not None:
            self.config.on_store(h.unknown, old.value, committed.value)
        self.destabilize(w, h)
        return True

    def query(self, w: _Worker, x: Unknown, y: Unknown) -> LatticeValue:
        hy = self.table.find(y)
        if not y.is_global:
            if hy.snap.get().called or not self._try_claim(w, hy):
                # on this worker's path (a cycle) or owned by another worker
                self._update(w, hy, lambda s: None if s.widen_point else s._replace(widen_point=True))
            else:
                self.iterate(w, y, hy)
        hy.influences.add(x)
        return hy.snap.get().value

    def side(self, w: _Worker, x: Unknown, g: Unknown, contribution: LatticeValue):
        hg = self.table.find(g)
        delay = self.config.widen_delay

        def change(s):
            joined = L.join(s.value, contribution)
            if L.leq(joined, s.value):
                return None
            new = L.widen(s.value, joined) if s.growth >= delay else joined
            return s._replace(value=new, growth=s.growth + 1, stable=True)

        old, committed = self._update(w, hg, change)
        if committed is None:
            return
        if committed.value != L.join(old.value, contribution):
            w.widenings += 1
        if self.config.debug:
            with self._owners_lock:
                self._contrib_log.append((g, contribution))
        if self.config.on_store is not None:
            self.config.on_store(g, old.value, committed.value)
        self.destabilize(w, hg)

    def promote(self, w: _Worker, x: Unknown, y: Unknown):
        if y.is_global:
            raise AnalysisError(f"cannot demand global {y.label}")
        hy = self.table.find(y)
        self._update(w, hy, lambda s: None if s.toplevel else s._replace(toplevel=True))
        self._add_work(hy)

    def destabilize(self, w: _Worker, hx: RecordHandle):
        influenced = hx.influences.take_all()
        w.destabilizations += len(influenced)
        for y in influenced:
            hy = self.table.find(y)
            old, new = self._update(w, hy, lambda s: s._replace(stable=False) if s.stable else None)
            if (new or old).toplevel:
                self._add_work(hy)
            self.destabilize(w, hy)

    def _add_work(self, h: RecordHandle):
        if self.pool.add(h) and self._idle:
            with self._cond:
                self._cond.notify()

    # -- worker loop ----------------------------------------------------------------

    def _idle_wait(self) -> bool:
        """Block until work shows up (True) or the run is over (False)."""
        with self._cond:
            self._idle += 1
            while True:
                if self._done:
                    return False
                if not self.pool.empty():
                    self._idle -= 1
                    return True
                if self._idle == self.nworkers:
                    if self.config.debug and self._owners:
                        self._fired_with_claims = True
                    self._done = True
                    self._cond.notify_all()
                    return False
                self._cond.wait(0.002)

    def _run_worker(self, w: _Worker):
        try:
            if w.rng is not None:
                time.sleep(w.rng.random() * 0.002)
            while True:
                if w.rng is not None and w.rng.random() < 0.25:
                    time.sleep(0)
                h = self.pool.take()
                if h is None:
                    if not self._idle_wait():
                        return
                    continue
                if self._try_claim(w, h):
                    self.iterate(w, h.unknown, h)
                else:
                    w.claims_skipped += 1
        except _Abort:
            pass
        except BaseException as e:
            with self._cond:
                if self._error is None:
                    self._error = e
                self._done = True
                self._cond.notify_all()

    def solve(self, roots) -> Solution:
        roots = list(roots)
        if not roots:
            raise ValueError("at least one root is required")
        start = time.perf_counter()
        for r in roots:
            if r.is_global:
                raise AnalysisError(f"root {r.label} is a global")
            h = self.table.find(r)
            h.snap.compare_and_set(h.snap.get(), h.snap.get()._replace(toplevel=True))
            self.pool.add(h)
        order = list(self.workers)
        if self.config.seed is not None:
            random.Random(self.config.seed).shuffle(order)
        threads = [start_deep_thread(self._run_worker, f"fixlab-imm-{w.wid}", (w,)) for w in order]
        for t in threads:
            t.join()
        if self._error is not None:
            raise self._error
        return self._solution(time.perf_counter() - start)

    # -- results ----------------------------------------------------------------------

    def termination_report(self) -> dict[str, bool]:
        snaps = [h.snap.get() for h in self.table]
        report = {
            "work_empty": not self.pool.pending(),
            "all_stable": all(s.stable for s in snaps),
            "none_called": not any(s.called for s in snaps),
        }
        if self.config.debug:
            report["no_claims_at_termination"] = not self._fired_with_claims
        return report

    def lost_updates(self) -> list[Unknown]:
        """Globals whose final value misses a logged contribution (debug mode)."""
        final = {h.unknown: h.snap.get().value for h in self.table}
        return [g for g, c in self._contrib_log if not L.leq(c, final[g])]

    def _solution(self, seconds: float) -> Solution:
        ws = self.workers
        attempts = sum(w.cas_attempts for w in ws)
        retries = sum(w.cas_retries for w in ws)
        values = {h.unknown: h.snap.get().value for h in self.table}
        stats = {
            "rhs_evaluations": sum(w.evals for w in ws),
            "destabilizations": sum(w.destabilizations for w in ws),
            "widenings": sum(w.widenings for w in ws),
            "unknowns_reached": len(values),
            "wall_time_ms": seconds * 1000.0,
            "workers": self.nworkers,
            "cas_attempts": attempts,
            "cas_retries": retries,
            "retry_ratio": retries / attempts if attempts else 0.0,
            "claims_skipped": sum(w.claims_skipped for w in ws),
            "per_worker_rhs": [w.evals for w in ws],
        }
        return Solution(values, solver=self.name, stats=stats, termination=self.termination_report())


def solve_immediate(
    system: EquationSystem, roots=None, workers: int = 1, config: SolverConfig | None = None
) -> Solution:
    roots = system.default_roots() if roots is None else list(roots)
    return ImmediateSolver(system, workers, config).solve(roots)
