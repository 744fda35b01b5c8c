"""Micro-benchmarks: saturating vs plain increments, checked vs raw copies.

Each benchmark times batches of ``iterations`` calls, alternating the
baseline and the variant batch by batch so drift hits both equally, and
reports the median nanoseconds per call.  Ratios are only meaningful within
a single run.
"""
from __future__ import annotations

import json
import statistics
import time
from dataclasses import asdict, dataclass
from itertools import repeat
from typing import Callable, Sequence

from .bounds import MAX_CLASS, SIZE_CLASSES, CheckMode, PoolRegistry
from .refcount import RefCount

__all__ = ["BenchResult", "bench_refcount", "bench_copy", "format_table", "to_json",
           "timer_resolution_ns"]

DEFAULT_ITERATIONS = 10**6
DEFAULT_REPETITIONS = 10
COPY_SIZES = (256, 65536)


@dataclass
class BenchResult:
    name: str
    iterations: int
    ns_per_op: float
    ratio_to_baseline: float = 1.0

    @property
    def overhead(self) -> float:
        """Relative overhead against the baseline (0.3 means +30%)."""
        return self.ratio_to_baseline - 1.0


def timer_resolution_ns() -> float:
    """Smallest observable step of ``perf_counter_ns``, measured."""
    best = float("inf")
    for _ in range(1000):
        t0 = time.perf_counter_ns()
        t1 = time.perf_counter_ns()
        while t1 == t0:
            t1 = time.perf_counter_ns()
        best = min(best, t1 - t0)
    return best


def _batch(fn: Callable[[], object], iterations: int) -> int:
    loop = repeat(None, iterations)
    t0 = time.perf_counter_ns()
    for _ in loop:
        fn()
    return time.perf_counter_ns() - t0


def _paired(fns: Sequence[Callable[[], object]], iterations: int,
            repetitions: int) -> list[float]:
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    for fn in fns:  # warm-up
        _batch(fn, min(iterations, 10_000))
    samples: list[list[int]] = [[] for _ in fns]
    for _ in range(repetitions):
        for fn, s in zip(fns, samples):
            s.append(_batch(fn, iterations))
    res = timer_resolution_ns()
    shortest = min(min(s) for s in samples)
    if res >= 0.01 * shortest:
        raise RuntimeError(f"timer resolution {res:.0f} ns is too coarse for "
                           f"{shortest} ns batches; raise iterations")
    return [statistics.median(s) / iterations for s in samples]


def bench_refcount(iterations: int = DEFAULT_ITERATIONS,
                   repetitions: int = DEFAULT_REPETITIONS) -> tuple[BenchResult, BenchResult]:
    """Time ``inc`` on an unchecked counter (baseline) and a saturating one.

    Both counters start at 1 and stay far below ``UINT_MAX``, so no event
    path runs inside the timed loop.
    """
    plain = RefCount(1, full_checks=False)
    checked = RefCount(1, full_checks=True)
    base_ns, sat_ns = _paired([plain.inc, checked.inc], iterations, repetitions)
    return (BenchResult("atomic_inc", iterations, base_ns),
            BenchResult("refcount_inc", iterations, sat_ns, sat_ns / base_ns))


def bench_copy(sizes: Sequence[int] = COPY_SIZES, iterations: int = 100_000,
               repetitions: int = DEFAULT_REPETITIONS) -> list[BenchResult]:
    """Time raw copies against checked copies, per size.

    ``checked_copy/known`` is handed both operands' bounds up front;
    ``checked_copy/load`` derives them from the registry on every call.
    """
    results = []
    for size in sizes:
        cap = max(_pow2_ceil(size), MAX_CLASS)
        classes = SIZE_CLASSES + tuple(1 << k for k in range(MAX_CLASS.bit_length(),
                                                             cap.bit_length()))
        pool = PoolRegistry(4 * cap, CheckMode.ENFORCE, start=cap, size_classes=classes)
        src = pool.alloc(size)
        dst = pool.alloc(size)
        sb, db = src.bounds, dst.bounds
        d, s, n = dst.base, src.base, size
        raw = pool.raw_copy
        checked = pool.checked_copy

        def f_raw():
            raw(d, s, n)

        def f_known():
            checked(d, s, n, dst_bounds=db, src_bounds=sb)

        def f_load():
            checked(d, s, n)

        base, known, load = _paired([f_raw, f_known, f_load], iterations, repetitions)
        results += [
            BenchResult(f"memcpy/{size}", iterations, base),
            BenchResult(f"checked_copy/known/{size}", iterations, known, known / base),
            BenchResult(f"checked_copy/load/{size}", iterations, load, load / base),
        ]
    return results


def _pow2_ceil(size: int) -> int:
    return 1 << (size - 1).bit_length()


def format_table(results: Sequence[BenchResult]) -> str:
    rows = [("benchmark", "iterations", "ns/op", "ratio", "overhead")]
    for r in results:
        rows.append((r.name, str(r.iterations), f"{r.ns_per_op:.1f}",
                     f"{r.ratio_to_baseline:.2f}", f"{r.overhead:+.0%}"))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for k, row in enumerate(rows):
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells))
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def to_json(results: Sequence[BenchResult]) -> str:
    return json.dumps([asdict(r) for r in results], indent=2) + "\n"
