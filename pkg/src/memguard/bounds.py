"""Allocator-metadata bounds checking over a simulated memory pool.

Bounds are never stored per pointer.  :meth:`PoolRegistry.load_bounds`
derives them from the pointer value alone by looking up the live allocation
that covers it; the result spans the whole size class, so the round-up slack
past the requested size is in bounds (the allocator never places another
object there).  Pointers that no live allocation covers get infinite bounds,
which is what unknown or legacy pointers receive.

Addresses are plain integers in a flat pool address space starting at
``PoolRegistry.start``.  The checked wrappers (:meth:`~PoolRegistry.checked_copy`,
:meth:`~PoolRegistry.checked_move`, :meth:`~PoolRegistry.checked_set`) mirror
``memcpy``/``memmove``/``memset``.
"""
from __future__ import annotations

import bisect
import enum
import itertools
import logging
import threading
from dataclasses import dataclass
from typing import Optional, Sequence

__all__ = [
    "SIZE_CLASSES",
    "MIN_CLASS",
    "MAX_CLASS",
    "POISON_FREE",
    "size_class",
    "Bounds",
    "INFINITE",
    "BoundedAllocation",
    "CheckMode",
    "ViolationKind",
    "Violation",
    "PoolError",
    "OutOfMemory",
    "DoubleFree",
    "UnknownAllocation",
    "UnmappedAccess",
    "BoundViolationError",
    "PoolRegistry",
    "pool_create",
]

log = logging.getLogger(__name__)

SIZE_CLASSES: tuple[int, ...] = tuple(1 << k for k in range(3, 14))  # 8 B .. 8 KiB
MIN_CLASS = SIZE_CLASSES[0]
MAX_CLASS = SIZE_CLASSES[-1]
POISON_FREE = 0x6B
DEFAULT_START = 0x10000


def size_class(size: int, classes: Sequence[int] = SIZE_CLASSES) -> int:
    """Smallest class in *classes* (ascending) that holds *size* bytes."""
    if size <= 0:
        raise ValueError(f"allocation size must be positive, got {size}")
    if size > classes[-1]:
        raise ValueError(f"allocation size {size} exceeds largest class {classes[-1]}")
    return classes[bisect.bisect_left(classes, size)]


@dataclass(frozen=True)
class Bounds:
    lower: int
    upper: int
    infinite: bool = False

    def __post_init__(self):
        if not self.infinite and self.lower >= self.upper:
            raise ValueError(f"empty bounds [{self.lower:#x},{self.upper:#x})")

    def contains(self, addr: int, length: int) -> bool:
        return self.infinite or (self.lower <= addr and addr + length <= self.upper)

    def __str__(self) -> str:
        if self.infinite:
            return "[-inf,+inf)"
        return f"[{self.lower:#x},{self.upper:#x})"


INFINITE = Bounds(0, 0, infinite=True)


@dataclass(frozen=True)
class BoundedAllocation:
    id: int
    base: int
    requested: int
    capacity: int

    @property
    def end(self) -> int:
        return self.base + self.capacity

    @property
    def bounds(self) -> Bounds:
        return Bounds(self.base, self.base + self.capacity)


class CheckMode(enum.Enum):
    ENFORCE = "enforce"
    AUDIT = "audit"


class ViolationKind(enum.Enum):
    LOWER = "Lower"
    UPPER = "Upper"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    access_base: int
    access_len: int
    bounds: Bounds
    operation: str

    def log_line(self) -> str:
        return (f"BND {self.kind.value} op={self.operation} addr={self.access_base:#x} "
                f"len={self.access_len} bounds={self.bounds}")

    def __str__(self) -> str:
        return self.log_line()


class PoolError(Exception):
    pass


class OutOfMemory(PoolError):
    pass


class DoubleFree(PoolError):
    pass


class UnknownAllocation(PoolError):
    pass


class UnmappedAccess(PoolError):
    """A raw access touched addresses outside the pool arena."""


class BoundViolationError(PoolError):
    def __init__(self, violation: Violation):
        super().__init__(violation.log_line())
        self.violation = violation


class PoolRegistry:
    """A size-class allocation pool and the metadata used to derive bounds.

    Live allocations are kept in an address-ordered index so that any
    interior address resolves to its covering allocation with one bisection.
    Placement is first-fit at class-aligned offsets.

    *size_classes* defaults to powers of two from 8 B to 8 KiB; any ascending
    sequence of powers of two may be supplied.

    All registry reads and writes happen under one internal lock.  Byte
    transfers in the checked wrappers run outside it, so wrappers working on
    disjoint allocations do not serialize on each other.
    """

    def __init__(self, extent_len: int, mode: CheckMode = CheckMode.ENFORCE,
                 start: int = DEFAULT_START, size_classes: Sequence[int] = SIZE_CLASSES):
        classes = tuple(size_classes)
        if (not classes or list(classes) != sorted(set(classes))
                or any(c <= 0 or c & (c - 1) for c in classes)):
            raise ValueError("size classes must be ascending powers of two")
        if extent_len <= classes[-1]:
            raise ValueError(f"pool extent {extent_len} must exceed the largest "
                             f"size class ({classes[-1]})")
        if start < 0 or start % classes[-1]:
            raise ValueError(f"pool start must be a non-negative multiple of {classes[-1]}")
        self.size_classes = classes
        self.start = start
        self.length = extent_len
        self.mode = CheckMode(mode)
        self.memory = bytearray(extent_len)
        self.violations: list[Violation] = []
        self._bases: list[int] = []
        self._by_base: dict[int, BoundedAllocation] = {}
        self._bounds: dict[int, Bounds] = {}
        self._by_id: dict[int, BoundedAllocation] = {}
        self._freed: set[int] = set()
        self._ids = itertools.count(1)
        self._lock = threading.RLock()

    @property
    def end(self) -> int:
        return self.start + self.length

    def __len__(self) -> int:
        return len(self._by_id)

    def live(self) -> list[BoundedAllocation]:
        """Live allocations in address order."""
        with self._lock:
            return [self._by_base[b] for b in self._bases]

    def get(self, alloc_id: int) -> BoundedAllocation:
        with self._lock:
            try:
                return self._by_id[alloc_id]
            except KeyError:
                raise UnknownAllocation(f"no live allocation with id {alloc_id}") from None

    # -- allocation -------------------------------------------------------

    def alloc(self, size: int) -> BoundedAllocation:
        capacity = size_class(size, self.size_classes)
        with self._lock:
            base = self._find_slot(capacity)
            a = BoundedAllocation(next(self._ids), base, size, capacity)
            i = bisect.bisect_left(self._bases, base)
            self._bases.insert(i, base)
            self._by_base[base] = a
            self._bounds[base] = a.bounds
            self._by_id[a.id] = a
            off = base - self.start
            self.memory[off:off + capacity] = bytes(capacity)
            return a

    def _find_slot(self, capacity: int) -> int:
        cursor = self.start
        for b in self._bases:
            base = -(-cursor // capacity) * capacity
            if base + capacity <= b:
                return base
            cursor = max(cursor, self._by_base[b].end)
        base = -(-cursor // capacity) * capacity
        if base + capacity <= self.end:
            return base
        raise OutOfMemory(f"no room for a {capacity}-byte object")

    def free(self, alloc_id: int) -> None:
        with self._lock:
            a = self._by_id.pop(alloc_id, None)
            if a is None:
                if alloc_id in self._freed:
                    raise DoubleFree(f"allocation {alloc_id} already freed")
                raise UnknownAllocation(f"no allocation with id {alloc_id}")
            self._freed.add(alloc_id)
            del self._by_base[a.base]
            del self._bounds[a.base]
            self._bases.pop(bisect.bisect_left(self._bases, a.base))
            off = a.base - self.start
            self.memory[off:off + a.capacity] = bytes([POISON_FREE]) * a.capacity

    # -- bounds -----------------------------------------------------------

    def find(self, addr: int) -> Optional[BoundedAllocation]:
        """Live allocation covering *addr*, if any."""
        with self._lock:
            i = bisect.bisect_right(self._bases, addr) - 1
            if i < 0:
                return None
            a = self._by_base[self._bases[i]]
            return a if addr < a.end else None

    def load_bounds(self, addr: int) -> Bounds:
        """Bounds of the live allocation covering *addr*; infinite if none does."""
        with self._lock:
            i = bisect.bisect_right(self._bases, addr) - 1
            if i < 0:
                return INFINITE
            b = self._bounds[self._bases[i]]
            return b if addr < b.upper else INFINITE

    def check_access(self, addr: int, length: int, op: str = "access",
                     bounds: Optional[Bounds] = None) -> Optional[Violation]:
        """Check ``[addr, addr+length)`` against *bounds* (loaded from *addr* if omitted).

        Returns None when the access is in bounds.  Otherwise the violation is
        logged and recorded; in enforce mode it is raised as
        :class:`BoundViolationError`, in audit mode it is returned.
        """
        if length < 1:
            raise ValueError(f"access length must be >= 1, got {length}")
        if bounds is None:
            bounds = self.load_bounds(addr)
        if bounds.contains(addr, length):
            return None
        kind = ViolationKind.LOWER if addr < bounds.lower else ViolationKind.UPPER
        v = Violation(kind, addr, length, bounds, op)
        with self._lock:
            self.violations.append(v)
        log.warning(v.log_line())
        if self.mode is CheckMode.ENFORCE:
            raise BoundViolationError(v)
        return v

    # -- raw memory access ------------------------------------------------

    def _offset(self, addr: int, length: int) -> int:
        off = addr - self.start
        if off < 0 or off + length > self.length:
            raise UnmappedAccess(f"[{addr:#x},{addr + length:#x}) is outside the pool")
        return off

    def read(self, addr: int, length: int) -> bytes:
        off = self._offset(addr, length)
        return bytes(self.memory[off:off + length])

    def write(self, addr: int, data: bytes) -> None:
        off = self._offset(addr, len(data))
        self.memory[off:off + len(data)] = data

    def raw_copy(self, dst: int, src: int, n: int) -> None:
        """Unchecked, overlap-safe copy."""
        if n <= 0:
            return
        d = self._offset(dst, n)
        s = self._offset(src, n)
        self.memory[d:d + n] = self.memory[s:s + n]

    # -- checked wrappers -------------------------------------------------

    def checked_copy(self, dst: int, src: int, n: int, *,
                     dst_bounds: Optional[Bounds] = None,
                     src_bounds: Optional[Bounds] = None,
                     op: str = "memcpy") -> list[Violation]:
        """Bounds-checked ``memcpy``.

        Pass *dst_bounds*/*src_bounds* when the caller already knows them;
        otherwise they are loaded from the registry.  In enforce mode a
        violation on either operand raises before any byte is written.  In
        audit mode violations are logged and returned, and the copy still
        happens.
        """
        if n < 0:
            raise ValueError(f"negative length {n}")
        if n == 0:
            return []
        found = []
        for addr, b in ((src, src_bounds), (dst, dst_bounds)):
            v = self.check_access(addr, n, op, b)
            if v is not None:
                found.append(v)
        self.raw_copy(dst, src, n)
        return found

    def checked_move(self, dst: int, src: int, n: int, *,
                     dst_bounds: Optional[Bounds] = None,
                     src_bounds: Optional[Bounds] = None) -> list[Violation]:
        """Bounds-checked ``memmove``; overlapping ranges are handled."""
        return self.checked_copy(dst, src, n, dst_bounds=dst_bounds,
                                 src_bounds=src_bounds, op="memmove")

    def checked_set(self, dst: int, byte: int, n: int, *,
                    dst_bounds: Optional[Bounds] = None) -> list[Violation]:
        """Bounds-checked ``memset``."""
        if n < 0:
            raise ValueError(f"negative length {n}")
        if n == 0:
            return []
        v = self.check_access(dst, n, "memset", dst_bounds)
        off = self._offset(dst, n)
        self.memory[off:off + n] = bytes([byte & 0xFF]) * n
        return [] if v is None else [v]


def pool_create(extent_len: int, mode: CheckMode = CheckMode.ENFORCE) -> PoolRegistry:
    return PoolRegistry(extent_len, mode)
