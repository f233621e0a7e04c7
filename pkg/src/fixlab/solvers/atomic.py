"""
Concurrent building blocks for the shared-state solver.

CPython exposes no hardware compare-and-swap, so :class:`AtomicRef` emulates
one with a short critical section on a striped lock; plain reads are single
attribute loads. Everything above it (the Michael-Scott queue, the
append-only hash buckets, the work pool) is written against the CAS
interface only.
"""

from __future__ import annotations

import threading
from typing import Any, Callable, Generic, Iterator, NamedTuple, TypeVar

T = TypeVar("T")

_STRIPES = tuple(threading.Lock() for _ in range(64))


class AtomicRef(Generic[T]):
    __slots__ = ("_value",)

    def __init__(self, value: T = None):
        self._value = value

    def get(self) -> T:
        return self._value

    def compare_and_set(self, expected: T, new: T) -> bool:
        """Install ``new`` iff the current value *is* ``expected`` (identity)."""
        with _STRIPES[(id(self) >> 4) & 63]:
            if self._value is expected:
                self._value = new
                return True
            return False


class AtomicCounter:
    __slots__ = ("_lock", "_value")

    def __init__(self, value: int = 0):
        self._lock = threading.Lock()
        self._value = value

    def add(self, d: int = 1) -> int:
        with self._lock:
            self._value += d
            return self._value

    @property
    def value(self) -> int:
        return self._value


# --------------------------------------------------------------------------
# Michael-Scott queue
# --------------------------------------------------------------------------


class _Node:
    __slots__ = ("item", "next")

    def __init__(self, item):
        self.item = item
        self.next: AtomicRef[_Node | None] = AtomicRef(None)


EMPTY = object()


class MSQueue:
    """Lock-free FIFO queue (Michael & Scott) over :class:`AtomicRef`."""

    def __init__(self):
        sentinel = _Node(None)
        self.head: AtomicRef[_Node] = AtomicRef(sentinel)
        self.tail: AtomicRef[_Node] = AtomicRef(sentinel)

    def enqueue(self, item) -> None:
        node = _Node(item)
        while True:
            tail = self.tail.get()
            nxt = tail.next.get()
            if tail is not self.tail.get():
                continue
            if nxt is None:
                if tail.next.compare_and_set(None, node):
                    self.tail.compare_and_set(tail, node)
                    return
            else:
                self.tail.compare_and_set(tail, nxt)

    def dequeue(self):
        """Remove and return the oldest item, or :data:`EMPTY`."""
        while True:
            head = self.head.get()
            tail = self.tail.get()
            nxt = head.next.get()
            if head is not self.head.get():
                continue
            if head is tail:
                if nxt is None:
                    return EMPTY
                self.tail.compare_and_set(tail, nxt)
            elif self.head.compare_and_set(head, nxt):
                return nxt.item

    def empty(self) -> bool:
        return self.head.get().next.get() is None

    def __iter__(self) -> Iterator:
        node = self.head.get().next.get()
        while node is not None:
            yield node.item
            node = node.next.get()

    def find_or_append(self, key, make: Callable[[], Any]):
        """Return the value stored under ``key``, appending ``(key, make())`` if absent.

        Only valid on queues that are never dequeued (hash buckets). Appends
        go through the same tail-link CAS as :meth:`enqueue`; a lost race
        resumes the scan from the node that won, so concurrent callers for
        the same key all see the first appended entry.
        """
        node = self.head.get()
        fresh = None
        while True:
            nxt = node.next.get()
            if nxt is None:
                if fresh is None:
                    fresh = _Node((key, make()))
                if node.next.compare_and_set(None, fresh):
                    self.tail.compare_and_set(self.tail.get(), fresh)
                    return fresh.item[1]
                continue
            if nxt.item[0] == key:
                return nxt.item[1]
            node = nxt


# --------------------------------------------------------------------------
# per-unknown records
# --------------------------------------------------------------------------


class Snapshot(NamedTuple):
    value: Any
    stable: bool = False
    called: bool = False
    toplevel: bool = False
    widen_point: bool = False
    growth: int = 0


class ConcurrentInfluenceSet:
    """Insertion-ordered set with atomic add and take-all."""

    __slots__ = ("_lock", "_items")

    def __init__(self):
        self._lock = threading.Lock()
        self._items: dict = {}

    def add(self, x) -> None:
        with self._lock:
            self._items[x] = None

    def take_all(self) -> list:
        with self._lock:
            items, self._items = self._items, {}
        return list(items)

    def __len__(self):
        return len(self._items)


class RecordHandle:
    """Shared, never-replaced wrapper around an unknown's snapshot."""

    __slots__ = ("unknown", "snap", "influences", "queued")

    def __init__(self, unknown, value):
        self.unknown = unknown
        self.snap: AtomicRef[Snapshot] = AtomicRef(Snapshot(value, stable=unknown.is_global))
        self.influences = ConcurrentInfluenceSet()
        self.queued: AtomicRef[object | None] = AtomicRef(None)  # pool entry token


class AtomicRecordTable:
    """Fixed-size hash table; buckets are append-only Michael-Scott queues."""

    def __init__(self, bottom_of: Callable, bits: int = 16):
        self._mask = (1 << bits) - 1
        self._buckets: list[MSQueue | None] = [None] * (1 << bits)
        self._install_lock = threading.Lock()
        self._bottom_of = bottom_of

    def find(self, u) -> RecordHandle:
        i = hash(u) & self._mask
        bucket = self._buckets[i]
        if bucket is None:
            with self._install_lock:  # one-time bucket allocation
                bucket = self._buckets[i]
                if bucket is None:
                    bucket = self._buckets[i] = MSQueue()
        return bucket.find_or_append(u, lambda: RecordHandle(u, self._bottom_of(u)))

    def __iter__(self) -> Iterator[RecordHandle]:
        for b in self._buckets:
            if b is not None:
                for _, h in b:
                    yield h


class SharedWorkPool:
    """FIFO set of record handles.

    Membership lives in each handle's ``queued`` token, so ``add`` of a
    present unknown is a no-op and ``remove`` just invalidates the queued
    entry; ``take`` skips invalidated entries.
    """

    def __init__(self):
        self._q = MSQueue()

    def add(self, h: RecordHandle) -> bool:
        token = object()
        while h.queued.get() is None:
            if h.queued.compare_and_set(None, token):
                self._q.enqueue((token, h))
                return True
        return False

    def remove(self, h: RecordHandle) -> None:
        cur = h.queued.get()
        if cur is not None:
            h.queued.compare_and_set(cur, None)

    def take(self) -> RecordHandle | None:
        while True:
            item = self._q.dequeue()
            if item is EMPTY:
                return None
            token, h = item
            if h.queued.compare_and_set(token, None):
                return h

    def empty(self) -> bool:
        return self._q.empty()

    def pending(self) -> list:
        return [h.unknown for token, h in self._q if h.queued.get() is token]
