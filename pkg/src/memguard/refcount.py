"""Saturating, overflow-proof reference counter.

A :class:`RefCount` behaves like the kernel's ``refcount_t``: increments on a
zero counter are refused, additions that would wrap past ``UINT_MAX`` pin the
counter at ``UINT_MAX`` instead, and a pinned (saturated) counter is never
changed again by the API.  Saturation trades a leaked object for immunity
against use-after-free through counter overflow.

Every mutating operation is a compare-and-exchange retry loop over
:meth:`AtomicU32.cmpxchg`.  Misuse is reported as a :class:`MisuseEvent`
through a pluggable sink, at most once per counter and event kind.
"""
from __future__ import annotations

import enum
import sys
import threading
from dataclasses import dataclass
from typing import Callable, Optional

__all__ = [
    "UINT_MAX",
    "AtomicU32",
    "EventKind",
    "MisuseEvent",
    "RefCount",
    "stderr_sink",
    "set_default_sink",
    "get_default_sink",
    "set_default_full_checks",
    "get_default_full_checks",
]

UINT_MAX = 2**32 - 1


class AtomicU32:
    """A 32-bit unsigned cell with an atomic compare-and-exchange.

    ``cmpxchg`` is the only read-modify-write primitive the saturating
    counter relies on.  A small private lock stands in for the single
    ``lock cmpxchg`` instruction; nothing else ever takes it, so the retry
    loops built on top stay lock-free in structure.
    """

    __slots__ = ("_value", "_lock")

    def __init__(self, value: int = 0) -> None:
        self._value = value & UINT_MAX
        self._lock = threading.Lock()

    def load(self) -> int:
        return self._value

    def store(self, value: int) -> None:
        self._value = value & UINT_MAX

    def cmpxchg(self, comp: int, new: int) -> int:
        """Set the value to *new* iff it currently equals *comp*.

        Always returns the prior value, whether or not it was exchanged.
        """
        with self._lock:
            old = self._value
            if old == comp:
                self._value = new
        return old

    def fetch_add(self, delta: int) -> int:
        """Wrapping (mod 2**32) add; returns the prior value."""
        with self._lock:
            old = self._value
            self._value = (old + delta) & UINT_MAX
        return old

    def __repr__(self) -> str:
        return f"AtomicU32({self._value})"


class EventKind(enum.Enum):
    INCREMENT_ON_ZERO = "IncrementOnZero"
    DECREMENT_ON_ZERO = "DecrementOnZero"
    UNDERFLOW = "Underflow"
    SATURATED = "Saturated"
    DECREMENT_TO_ZERO_WITHOUT_TEST = "DecrementToZeroWithoutTest"
    ZERO_DELTA = "ZeroDelta"


@dataclass(frozen=True)
class MisuseEvent:
    kind: EventKind
    operation: str
    prior: int
    counter: str = ""

    def __str__(self) -> str:
        name = f" {self.counter}" if self.counter else ""
        return (f"refcount{name}: {self.kind.value} in {self.operation} "
                f"(prior={self.prior:#x})")


EventSink = Callable[[MisuseEvent], None]


def stderr_sink(event: MisuseEvent) -> None:
    print(f"WARNING: {event}", file=sys.stderr)


_default_sink: EventSink = stderr_sink
_default_full_checks = True


def set_default_sink(sink: EventSink) -> EventSink:
    """Install the sink used by counters created without one; returns the old sink."""
    global _default_sink
    old, _default_sink = _default_sink, sink
    return old


def get_default_sink() -> EventSink:
    return _default_sink


def set_default_full_checks(enabled: bool) -> bool:
    """Process-wide default for ``full_checks``; returns the previous default."""
    global _default_full_checks
    old, _default_full_checks = _default_full_checks, bool(enabled)
    return old


def get_default_full_checks() -> bool:
    return _default_full_checks


class RefCount:
    """Saturating 32-bit reference counter.

    Parameters
    ----------
    value:
        Initial count, stored unchecked as by :meth:`set`.
    sink:
        Receives :class:`MisuseEvent` records.  Defaults to the process-wide
        sink (standard error unless replaced with :func:`set_default_sink`).
    full_checks:
        When false, every operation degrades to plain wrapping atomic
        arithmetic with no saturation and no events.  Used as the baseline
        when measuring the cost of the checks.
    name:
        Optional label copied into emitted events.
    """

    __slots__ = ("_atomic", "_sink", "_warned", "_warn_lock", "full_checks", "name")

    def __init__(self, value: int = 0, *, sink: Optional[EventSink] = None,
                 full_checks: Optional[bool] = None, name: str = "") -> None:
        self._atomic = AtomicU32(value)
        self._sink = sink
        self._warned: set[EventKind] = set()
        self._warn_lock = threading.Lock()
        self.full_checks = _default_full_checks if full_checks is None else bool(full_checks)
        self.name = name

    def __repr__(self) -> str:
        return f"RefCount({self._atomic.load()})"

    # -- events -----------------------------------------------------------

    def _warn(self, kind: EventKind, operation: str, prior: int) -> None:
        with self._warn_lock:
            if kind in self._warned:
                return
            self._warned.add(kind)
        sink = self._sink if self._sink is not None else _default_sink
        sink(MisuseEvent(kind, operation, prior, self.name))

    def warned(self) -> frozenset[EventKind]:
        """Event kinds already reported by this counter."""
        with self._warn_lock:
            return frozenset(self._warned)

    def reset_warnings(self) -> None:
        with self._warn_lock:
            self._warned.clear()

    # -- unchecked accessors ----------------------------------------------

    def set(self, n: int) -> None:
        if not 0 <= n <= UINT_MAX:
            raise ValueError(f"refcount value out of range: {n}")
        self._atomic.store(n)

    def read(self) -> int:
        return self._atomic.load()

    # -- increasing operations --------------------------------------------

    def _add_not_zero(self, summand: int, op: str) -> tuple[bool, int]:
        # Returns (prior != 0, prior).  Caller handles the zero case.
        atomic = self._atomic
        val = atomic.load()
        while True:
            if val == 0:
                return False, 0
            if val == UINT_MAX:
                return True, val
            new = val + summand
            if new > UINT_MAX:
                new = UINT_MAX
            old = atomic.cmpxchg(val, new)
            if old == val:
                break
            val = old
        if new == UINT_MAX:
            self._warn(EventKind.SATURATED, op, val)
        return True, val

    def add_not_zero(self, summand: int) -> bool:
        """Add *summand* unless the counter is zero; true iff the prior value was non-zero."""
        _check_delta(summand)
        if not self.full_checks:
            return self._unchecked_add_unless(summand, 0)
        if summand == 0:
            prior = self._atomic.load()
            self._warn(EventKind.ZERO_DELTA, "add_not_zero", prior)
            return prior != 0
        return self._add_not_zero(summand, "add_not_zero")[0]

    def inc_not_zero(self) -> bool:
        """Take a reference iff the object is still live (counter non-zero)."""
        if not self.full_checks:
            return self._unchecked_add_unless(1, 0)
        return self._add_not_zero(1, "inc_not_zero")[0]

    def add(self, summand: int) -> None:
        _check_delta(summand)
        if not self.full_checks:
            self._atomic.fetch_add(summand)
            return
        if summand == 0:
            self._warn(EventKind.ZERO_DELTA, "add", self._atomic.load())
            return
        if not self._add_not_zero(summand, "add")[0]:
            self._warn(EventKind.INCREMENT_ON_ZERO, "add", 0)

    def inc(self) -> None:
        if not self.full_checks:
            self._atomic.fetch_add(1)
            return
        # hot path: _add_not_zero(1) inlined
        atomic = self._atomic
        val = atomic.load()
        while True:
            if val == 0:
                self._warn(EventKind.INCREMENT_ON_ZERO, "inc", 0)
                return
            if val == UINT_MAX:
                return
            old = atomic.cmpxchg(val, val + 1)
            if old == val:
                break
            val = old
        if val + 1 == UINT_MAX:
            self._warn(EventKind.SATURATED, "inc", val)

    # -- decreasing operations --------------------------------------------

    def _sub(self, subtrahend: int, op: str) -> int:
        # Returns the new value, or -1 when the counter was left unchanged.
        atomic = self._atomic
        val = atomic.load()
        while True:
            if val == UINT_MAX:
                return -1
            if val == 0:
                self._warn(EventKind.DECREMENT_ON_ZERO, op, 0)
                return -1
            if subtrahend > val:
                self._warn(EventKind.UNDERFLOW, op, val)
                return -1
            new = val - subtrahend
            old = atomic.cmpxchg(val, new)
            if old == val:
                return new
            val = old

    def sub_and_test(self, subtrahend: int) -> bool:
        """Drop *subtrahend* references; true iff the counter reached zero."""
        _check_delta(subtrahend)
        if not self.full_checks:
            return self._atomic.fetch_add(-subtrahend) == subtrahend
        if subtrahend == 0:
            self._warn(EventKind.ZERO_DELTA, "sub_and_test", self._atomic.load())
            return False
        return self._sub(subtrahend, "sub_and_test") == 0

    def dec_and_test(self) -> bool:
        if not self.full_checks:
            return self._atomic.fetch_add(-1) == 1
        return self._sub(1, "dec_and_test") == 0

    def sub(self, subtrahend: int) -> None:
        """Drop references when the caller knows others remain."""
        _check_delta(subtrahend)
        if not self.full_checks:
            self._atomic.fetch_add(-subtrahend)
            return
        if subtrahend == 0:
            self._warn(EventKind.ZERO_DELTA, "sub", self._atomic.load())
            return
        if self._sub(subtrahend, "sub") == 0:
            self._warn(EventKind.DECREMENT_TO_ZERO_WITHOUT_TEST, "sub", subtrahend)

    def dec(self) -> None:
        """Drop one reference when the caller knows others remain.

        Reaching zero here means the caller's promise was wrong; the
        transition is allowed but reported.
        """
        if not self.full_checks:
            self._atomic.fetch_add(-1)
            return
        if self._sub(1, "dec") == 0:
            self._warn(EventKind.DECREMENT_TO_ZERO_WITHOUT_TEST, "dec", 1)

    def dec_if_one(self) -> bool:
        """Single 1 -> 0 exchange.  No retry: losing a race returns false."""
        return self._atomic.cmpxchg(1, 0) == 1

    def dec_not_one(self) -> bool:
        """Decrement unless the counter is one; false iff it was one.

        A zero counter reports DecrementOnZero and returns true, so callers
        never start a release protocol on an object that is already dead.
        """
        if not self.full_checks:
            return self._unchecked_add_unless(-1, 1)
        atomic = self._atomic
        val = atomic.load()
        while True:
            if val == UINT_MAX:
                return True
            if val == 1:
                return False
            if val == 0:
                self._warn(EventKind.DECREMENT_ON_ZERO, "dec_not_one", 0)
                return True
            old = atomic.cmpxchg(val, val - 1)
            if old == val:
                return True
            val = old

    def dec_and_lock(self, lock) -> bool:
        """Decrement; if that drops the last reference, return true holding *lock*.

        *lock* is any object with ``acquire``/``release`` (``threading.Lock``,
        ``threading.RLock`` and the like).  On a false return the lock is not
        held.
        """
        if self.dec_not_one():
            return False
        lock.acquire()
        if self.dec_and_test():
            return True
        lock.release()
        return False

    dec_and_mutex_lock = dec_and_lock

    # -- unchecked helpers ------------------------------------------------

    def _unchecked_add_unless(self, delta: int, unless: int) -> bool:
        atomic = self._atomic
        val = atomic.load()
        while val != unless:
            old = atomic.cmpxchg(val, (val + delta) & UINT_MAX)
            if old == val:
                return True
            val = old
        return False


def _check_delta(delta: int) -> None:
    if not 0 <= delta <= UINT_MAX:
        raise ValueError(f"refcount delta out of range: {delta}")
