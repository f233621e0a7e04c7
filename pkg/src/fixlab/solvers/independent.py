"""
Parallel solver with private per-task state.

Every top-level unknown (a root, or a local promoted through ``demand``)
becomes a task that runs the sequential solver on its own record map.
Tasks share nothing but global unknowns, which go through a
publish/subscribe :class:`Broker`:

- the first ``get`` of a global subscribes the task and seeds its private
  copy with the accumulated value;
- ``set`` publishes; a strictly growing publish pushes the new accumulated
  value onto every subscriber's inbox and revives subscribers that had
  already terminated;
- a task drains its inbox after every right-hand side evaluation and once
  more, under its lock, before it may terminate.

The final answer joins the tasks' private values of each local and takes
globals from the broker. That join need not be a fixpoint; the
:class:`FixpointReport` lists where it is not.
"""

from __future__ import annotations

import enum
import random
import threading
import time
from collections import deque
from dataclasses import dataclass, field

from fixlab import lattice as L
from fixlab.eqsys import AnalysisError, EquationSystem, Unknown
from fixlab.lattice import LatticeValue
from fixlab.solvers.atomic import AtomicCounter
from fixlab.solvers.common import BudgetExceeded, Solution, SolverConfig, run_deep, start_deep_thread
from fixlab.solvers.seq import TLTDSolver
from fixlab.verify import VerificationResult, check_locals


class TaskStatus(enum.Enum):
    SCHEDULED = "scheduled"
    RUNNING = "running"
    TERMINATED = "terminated"
    REVIVED = "revived"


class _Stop(Exception):
    """Unwind a task early (another task failed, or a truncation hook fired)."""


# --------------------------------------------------------------------------
# broker
# --------------------------------------------------------------------------


@dataclass
class _Entry:
    value: LatticeValue
    growth: int = 0
    subscribers: dict = field(default_factory=dict)  # task id -> None
    lock: threading.Lock = field(default_factory=threading.Lock)


class Broker:
    """Accumulated global values and their subscribers."""

    def __init__(self, system: EquationSystem, widen_delay: int, deliver, debug: bool = False):
        self._system = system
        self._delay = widen_delay
        self._deliver = deliver  # (task id, global, value) -> None
        self._entries: dict[Unknown, _Entry] = {}
        self._lock = threading.Lock()
        self.publishes = AtomicCounter()
        self.deliveries = AtomicCounter()
        self.widenings = AtomicCounter()
        self.debug = debug
        self.log: list[tuple[Unknown, LatticeValue]] = []  # accepted values, debug only

    def _entry(self, g: Unknown) -> _Entry:
        e = self._entries.get(g)
        if e is None:
            with self._lock:
                e = self._entries.get(g)
                if e is None:
                    e = self._entries[g] = _Entry(self._system.bottom_of(g))
        return e

    def subscribe(self, task_id: int, g: Unknown) -> LatticeValue:
        e = self._entry(g)
        with e.lock:
            e.subscribers[task_id] = None
            return e.value

    def publish(self, task_id: int, g: Unknown, contribution: LatticeValue) -> LatticeValue:
        """Fold ``contribution`` into ``g``; returns the accumulated value."""
        self.publishes.add()
        e = self._entry(g)
        with e.lock:
            joined = L.join(e.value, contribution)
            if L.leq(joined, e.value):
                return e.value
            new = joined
            if e.growth >= self._delay:
                new = L.widen(e.value, joined)
                if new != joined:
                    self.widenings.add()
            e.growth += 1
            e.value = new
            subs = list(e.subscribers)
            if self.debug:
                self.log.append((g, new))
        # updates carry accumulated values, so out-of-order delivery is harmless
        for t in subs:
            self.deliveries.add()
            self._deliver(t, g, new)
        return new

    def value(self, g: Unknown) -> LatticeValue:
        e = self._entries.get(g)
        return self._system.bottom_of(g) if e is None else e.value

    def subscribers(self, g: Unknown) -> list[int]:
        e = self._entries.get(g)
        return [] if e is None else list(e.subscribers)

    def globals(self) -> dict[Unknown, LatticeValue]:
        return {g: e.value for g, e in list(self._entries.items())}


# --------------------------------------------------------------------------
# tasks
# --------------------------------------------------------------------------


class WorkerTask:
    def __init__(self, task_id: int, root: Unknown, runtime: "IndependentSolver"):
        self.id = task_id
        self.root = root
        self.status = TaskStatus.SCHEDULED
        self.lock = threading.Lock()
        self.inbox: deque[tuple[Unknown, LatticeValue]] = deque()
        self.runs = 0
        self.solver = TaskSolver(runtime.system, runtime.config, self, runtime)

    def take_inbox(self) -> list[tuple[Unknown, LatticeValue]]:
        with self.lock:
            items = list(self.inbox)
            self.inbox.clear()
        return items

    def __repr__(self):
        return f"WorkerTask({self.id}, {self.root.label}, {self.status.value})"


class TaskSolver(TLTDSolver):
    """The sequential solver wired to the broker; owned by exactly one task."""

    name = "independent-task"

    def __init__(self, system, config, task: WorkerTask, runtime: "IndependentSolver"):
        super().__init__(system, config)
        self.task = task
        self.runtime = runtime
        self.subscriptions: set[Unknown] = set()
        root = self.find(task.root)
        root.toplevel = True
        self.work[task.root] = None

    def _count_eval(self):
        self.evals += 1
        self.runtime.count_eval()

    def query(self, x: Unknown, y: Unknown) -> LatticeValue:
        if y.is_global and y not in self.subscriptions:
            self.subscriptions.add(y)
            self._absorb(y, self.runtime.broker.subscribe(self.task.id, y))
        return super().query(x, y)

    def side(self, x: Unknown, g: Unknown, contribution: LatticeValue):
        acc = self.runtime.broker.publish(self.task.id, g, contribution)
        self.find(g).stable = True
        self._absorb(g, acc)

    def promote(self, x: Unknown, y: Unknown):
        if y.is_global:
            raise AnalysisError(f"cannot demand global {y.label}")
        self.runtime.spawn(y)

    def _after_eval(self, x: Unknown):
        self.drain_inbox()

    def _absorb(self, g: Unknown, v: LatticeValue):
        dg = self.find(g)
        if not L.leq(v, dg.value):
            self._store(g, dg, L.join(dg.value, v))
            self.destabilize(g)

    def drain_inbox(self):
        for g, v in self.task.take_inbox():
            self._absorb(g, v)

    def run(self):
        self.drain_inbox()
        while self.work:
            self.iterate(next(iter(self.work)))

    def iterated(self) -> list[Unknown]:
        return [u for u in self.data if not u.is_global]


# --------------------------------------------------------------------------
# the runtime
# --------------------------------------------------------------------------


@dataclass
class FixpointReport:
    """Locals (and globals) at which the merged assignment is not a post-solution."""

    violations: VerificationResult

    @property
    def labels(self) -> list[str]:
        return self.violations.violated_labels

    @property
    def empty(self) -> bool:
        return self.violations.ok

    def to_json(self) -> list[str]:
        return self.labels


class IndependentSolver:
    name = "independent"

    def __init__(
        self,
        system: EquationSystem,
        workers: int,
        config: SolverConfig | None = None,
        stop_after: int | None = None,
    ):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.system = system
        self.config = config or SolverConfig()
        self.nworkers = workers
        self.broker = Broker(system, self.config.widen_delay, self._deliver, self.config.debug)
        self.tasks: dict[Unknown, WorkerTask] = {}
        self._by_id: list[WorkerTask] = []
        self._registry_lock = threading.Lock()
        self._ready: deque[WorkerTask] = deque()
        self._cond = threading.Condition()
        self._pending = 0  # tasks queued or running
        self._error: BaseException | None = None
        self._evals = AtomicCounter()
        self._stop_after = stop_after  # test hook: abandon tasks after this many evaluations
        self.truncated = False
        self.revivals = AtomicCounter()
        self._rng = None if self.config.seed is None else random.Random(self.config.seed)

    # -- task registry and scheduling ------------------------------------------

    def spawn(self, root: Unknown) -> WorkerTask:
        with self._registry_lock:
            t = self.tasks.get(root)
            if t is not None:
                return t
            t = WorkerTask(len(self._by_id), root, self)
            self.tasks[root] = t
            self._by_id.append(t)
        self._schedule(t)
        return t

    def _schedule(self, t: WorkerTask):
        with self._cond:
            self._pending += 1
            self._ready.append(t)
            self._cond.notify()

    def _deliver(self, task_id: int, g: Unknown, v: LatticeValue):
        t = self._by_id[task_id]
        with t.lock:
            t.inbox.append((g, v))
            if t.status is not TaskStatus.TERMINATED:
                return  # the task will drain before it may terminate
            t.status = TaskStatus.REVIVED
        self.revivals.add()
        self._schedule(t)

    def count_eval(self):
        if self._error is not None:
            raise _Stop()
        n = self._evals.add()
        if self._stop_after is not None and n > self._stop_after:
            self.truncated = True
            raise _Stop()
        if n > self.config.eval_budget:
            raise BudgetExceeded(f"more than {self.config.eval_budget} right-hand side evaluations")

    # -- workers -----------------------------------------------------------------

    def _run_task(self, t: WorkerTask, rng: random.Random | None):
        with t.lock:
            t.status = TaskStatus.RUNNING
        t.runs += 1
        while True:
            if rng is not None and rng.random() < 0.5:
                time.sleep(0)
            try:
                t.solver.run()
            except _Stop:
                pass
            with t.lock:
                if not t.inbox or self.truncated or self._error is not None:
                    t.status = TaskStatus.TERMINATED
                    return

    def _worker(self, wid: int):
        rng = None if self.config.seed is None else random.Random(self.config.seed * 7919 + wid)
        try:
            if rng is not None:
                time.sleep(rng.random() * 0.002)
            while True:
                with self._cond:
                    while not self._ready and self._pending and self._error is None:
                        self._cond.wait()
                    if not self._ready or self._error is not None:
                        return
                    if rng is not None and len(self._ready) > 1 and rng.random() < 0.5:
                        self._ready.rotate(-1)
                    t = self._ready.popleft()
                try:
                    self._run_task(t, rng)
                finally:
                    with self._cond:
                        self._pending -= 1
                        if not self._pending:
                            self._cond.notify_all()
        except BaseException as e:
            with self._cond:
                if self._error is None:
                    self._error = e
                self._cond.notify_all()

    def solve(self, roots) -> "IndependentSolution":
        roots = list(roots)
        if not roots:
            raise ValueError("at least one root is required")
        for r in roots:
            if r.is_global:
                raise AnalysisError(f"root {r.label} is a global")
        start = time.perf_counter()
        for r in roots:
            self.spawn(r)
        ids = list(range(self.nworkers))
        if self._rng is not None:
            self._rng.shuffle(ids)
        threads = [start_deep_thread(self._worker, f"fixlab-ind-{i}", (i,)) for i in ids]
        for th in threads:
            th.join()
        if self._error is not None:
            raise self._error
        return self.merge_solutions(time.perf_counter() - start)

    # -- results ---------------------------------------------------------------------

    def merge_solutions(self, seconds: float = 0.0) -> "IndependentSolution":
        tasks = list(self._by_id)
        values: dict[Unknown, LatticeValue] = {}
        holders: dict[Unknown, int] = {}
        for t in tasks:
            for u, r in t.solver.data.items():
                if u.is_global:
                    continue
                holders[u] = holders.get(u, 0) + 1
                values[u] = r.value if u not in values else L.join(values[u], r.value)
        glob = self.broker.globals()
        for t in tasks:
            for u in t.solver.data:
                if u.is_global:
                    values[u] = glob.get(u, self.system.bottom_of(u))
        stats = {
            "rhs_evaluations": sum(t.solver.evals for t in tasks),
            "destabilizations": sum(t.solver.destabilizations for t in tasks),
            "widenings": sum(t.solver.widenings for t in tasks) + self.broker.widenings.value,
            "unknowns_reached": len(values),
            "wall_time_ms": seconds * 1000.0,
            "workers": self.nworkers,
            "tasks_created": len(tasks),
            "revivals": self.revivals.value,
            "publishes": self.broker.publishes.value,
            "updates_delivered": self.broker.deliveries.value,
            "duplicate_work_ratio": (sum(1 for n in holders.values() if n > 1) / len(holders)) if holders else 0.0,
        }
        return IndependentSolution(values, self.name, stats, self.termination_report(), self)

    def fixpoint_report(self, values) -> FixpointReport:
        """Where the merged assignment ``values`` is not a post-solution."""

        def lookup(u):
            v = values.get(u)
            return self.system.bottom_of(u) if v is None else v

        return FixpointReport(check_locals(self.system, [u for u in values if not u.is_global], lookup, values))

    def per_task_verification(self, reached) -> dict[str, VerificationResult]:
        """Each task's private locals against its own map, globals read from the broker."""
        out = {}
        for t in self._by_id:
            data = t.solver.data

            def lookup(u, data=data):
                if u.is_global:
                    return self.broker.value(u)
                r = data.get(u)
                return self.system.bottom_of(u) if r is None else r.value

            out[t.root.label] = check_locals(self.system, t.solver.iterated(), lookup, reached)
        return out

    def termination_report(self) -> dict[str, bool]:
        tasks = list(self._by_id)
        records = [r for t in tasks for r in t.solver.data.values()]
        current = all(
            t.solver.data[g].value == self.broker.value(g) for t in tasks for g in t.solver.subscriptions
        )
        return {
            "work_empty": not self._ready and all(not t.solver.work for t in tasks),
            "all_stable": all(r.stable for r in records),
            "none_called": not any(r.called for r in records),
            "inboxes_drained": all(not t.inbox for t in tasks),
            "all_terminated": all(t.status is TaskStatus.TERMINATED for t in tasks),
            "subscriptions_current": current,
        }


class IndependentSolution(Solution):
    """Merged solution; both verification views are computed on first use."""

    def __init__(self, values, solver, stats, termination, runtime: IndependentSolver):
        super().__init__(values, solver=solver, stats=stats, termination=termination)
        self._runtime = runtime
        self._report: FixpointReport | None = None
        self._per_task: dict[str, VerificationResult] | None = None

    @property
    def fixpoint_report(self) -> FixpointReport:
        if self._report is None:
            self._report = run_deep(self._runtime.fixpoint_report, self.values)
        return self._report

    @property
    def per_task(self) -> dict[str, VerificationResult]:
        if self._per_task is None:
            self._per_task = run_deep(self._runtime.per_task_verification, self.values)
        return self._per_task

    @property
    def sound_per_task(self) -> bool:
        return all(v.ok for v in self.per_task.values())


def solve_independent(
    system: EquationSystem, roots=None, workers: int = 1, config: SolverConfig | None = None
) -> IndependentSolution:
    roots = system.default_roots() if roots is None else list(roots)
    return IndependentSolver(system, workers, config).solve(roots)
