# Saturating reference counters
# =============================
#
# A plain 32-bit counter wraps to 0 after 2**32 increments.  If an attacker
# can trigger increments without matching decrements, the counter comes back
# round to zero, the object is freed while references are still live, and we
# have a use-after-free.  RefCount refuses that: it pins at UINT_MAX.

from memguard.refcount import UINT_MAX, RefCount

events = []
c = RefCount(UINT_MAX - 3, sink=events.append, name="sk_wmem")
for _ in range(10):
    c.inc()
print("after 10 increments from UINT_MAX-3:", hex(c.read()))
print("events:", [str(e) for e in events])

# Once saturated, nothing moves it; the object leaks, which is the point.
c.dec()
c.sub_and_test(5)
print("after dec/sub on a saturated counter:", hex(c.read()))

# The same arithmetic with the checks turned off wraps around.
plain = RefCount(UINT_MAX - 3, full_checks=False)
for _ in range(10):
    plain.inc()
print("unchecked counter after 10 increments:", plain.read())

# Increment from zero
# -------------------
# A zero counter means the object is (being) freed.  inc_not_zero is how a
# lookup takes a reference safely; inc on zero is reported and ignored.
obj = RefCount(1, sink=events.append)
print("release last ref ->", obj.dec_and_test())
print("lookup after release ->", obj.inc_not_zero(), "value", obj.read())
obj.inc()
print("last event:", events[-1])

# Object pools: one means "idle but recyclable"
# ---------------------------------------------
pool_ref = RefCount(3)
while pool_ref.dec_not_one():
    pass
print("dec_not_one stops at", pool_ref.read())
print("dec_if_one takes it to zero:", pool_ref.dec_if_one(), pool_ref.read())
