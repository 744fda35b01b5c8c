# What do the checks cost?
# ========================
#
# Timings are in nanoseconds per call of the Python implementation, so the
# absolute numbers say little about C.  The ratios are the interesting part:
# the saturating increment against a plain wrapping one, and checked copies
# against raw ones.  A bounds check is a fixed cost, so it matters less the
# more bytes are copied.

from memguard.bench import bench_copy, bench_refcount, format_table

results = list(bench_refcount(iterations=200_000, repetitions=5))
results += bench_copy(iterations=10_000, repetitions=5)
print(format_table(results))

small = next(r for r in results if r.name == "checked_copy/load/256")
large = next(r for r in results if r.name == "checked_copy/load/65536")
print(f"bound-load overhead: {small.overhead:+.0%} at 256 B, {large.overhead:+.0%} at 64 KiB")
