# Bounds from allocator metadata
# ==============================
#
# Instead of keeping a bounds table per pointer, ask the allocator which
# object a pointer falls in.  The answer is the whole size-class slot, so a
# 100-byte request has bounds of 128 bytes: the allocator never puts anything
# else in those 28 spare bytes, so allowing them costs no safety.

import logging

from memguard.bounds import BoundViolationError, CheckMode, PoolRegistry

# Violations are reported on the "memguard.bounds" logger.
logging.basicConfig(format="  log: %(message)s")

pool = PoolRegistry(1 << 20, CheckMode.ENFORCE)
buf = pool.alloc(100)
print(f"request {buf.requested} B -> capacity {buf.capacity} B at {buf.base:#x}")

# Any interior pointer recovers the same bounds.
print("bounds of buf+37:", pool.load_bounds(buf.base + 37))

# Pointers nobody allocated (legacy code, static data) get infinite bounds.
print("bounds of an unknown address:", pool.load_bounds(0x42))

# Checked memcpy: overrunning the slot is refused before any byte moves.
src = pool.alloc(200)
pool.write(src.base, bytes(range(200)))
try:
    pool.checked_copy(buf.base, src.base, 200)
except BoundViolationError as exc:
    print("enforce:", exc)
print("destination untouched:", pool.read(buf.base, 8) == bytes(8))

# Audit mode logs and carries on, which is what you want while rolling the
# checks out to code that has not been cleaned up yet.
audit = PoolRegistry(1 << 20, CheckMode.AUDIT)
d, s = audit.alloc(100), audit.alloc(200)
found = audit.checked_copy(d.base, s.base, 200)
print("audit:", [v.log_line() for v in found])

# Freed memory is poisoned, and its addresses fall back to infinite bounds:
# catching use-after-free is the reference counter's job, not this one.
pool.free(buf.id)
print("after free:", pool.load_bounds(buf.base), pool.read(buf.base, 4))
