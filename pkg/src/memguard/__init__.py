"""User-space memory-safety toolkit.

* :mod:`memguard.refcount` -- saturating, overflow-proof reference counter.
* :mod:`memguard.bounds` -- pointer bounds derived from allocator metadata,
  with checked memory-operation wrappers.
* :mod:`memguard.scanner` -- finds ``atomic_t`` reference counters in C code.
* :mod:`memguard.bench` -- overhead micro-benchmarks.
"""
from .bounds import (
    INFINITE,
    Bounds,
    BoundedAllocation,
    BoundViolationError,
    CheckMode,
    PoolRegistry,
    Violation,
    ViolationKind,
    pool_create,
)
from .refcount import UINT_MAX, AtomicU32, EventKind, MisuseEvent, RefCount
from .scanner import Pattern, PatternConfig, ScanFinding, ScanReport, scan_file, scan_tree

__version__ = "0.1.0"
