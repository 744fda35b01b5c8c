"""Sequential reference model of the saturating counter.

Pure functions over plain ints, written from the operation contracts and
sharing no code with memguard.refcount.  ``step`` returns the new value, the
return value and the event kinds the operation raises (before the per-counter
warn-once latch is applied).
"""
MAX = 0xFFFFFFFF

OPS = ("set", "read", "add_not_zero", "inc_not_zero", "add", "inc", "sub_and_test",
       "dec_and_test", "dec", "sub", "dec_if_one", "dec_not_one", "dec_and_lock")
ARG_OPS = {"set", "add_not_zero", "add", "sub_and_test", "sub"}


def _increase(v, n):
    """(new value, returned bool, events) for add_not_zero semantics."""
    if v == 0:
        return 0, False, []
    if v == MAX:
        return MAX, True, []
    if v + n >= MAX:
        return MAX, True, ["Saturated"]
    return v + n, True, []


def _decrease(v, n):
    """(new value, reached zero, events) for sub_and_test semantics."""
    if v == MAX:
        return MAX, False, []
    if v == 0:
        return 0, False, ["DecrementOnZero"]
    if n > v:
        return v, False, ["Underflow"]
    return v - n, v - n == 0, []


def step(v, op, arg=None):
    if op == "set":
        return arg, None, []
    if op == "read":
        return v, v, []
    if op in ("add_not_zero", "add") and arg == 0:
        return v, (v != 0) if op == "add_not_zero" else None, ["ZeroDelta"]
    if op in ("sub_and_test", "sub") and arg == 0:
        return v, False if op == "sub_and_test" else None, ["ZeroDelta"]
    if op == "add_not_zero":
        return _increase(v, arg)
    if op == "inc_not_zero":
        return _increase(v, 1)
    if op in ("add", "inc"):
        n = 1 if op == "inc" else arg
        new, ok, ev = _increase(v, n)
        return new, None, ev if ok else ["IncrementOnZero"]
    if op == "sub_and_test":
        return _decrease(v, arg)
    if op == "dec_and_test":
        return _decrease(v, 1)
    if op in ("dec", "sub"):
        n = 1 if op == "dec" else arg
        new, zero, ev = _decrease(v, n)
        if zero:
            ev = ev + ["DecrementToZeroWithoutTest"]
        return new, None, ev
    if op == "dec_if_one":
        return (0, True, []) if v == 1 else (v, False, [])
    if op == "dec_not_one":
        if v == 1:
            return 1, False, []
        if v == MAX:
            return MAX, True, []
        if v == 0:
            return 0, True, ["DecrementOnZero"]
        return v - 1, True, []
    if op == "dec_and_lock":
        # returns (True, lock held) only when the last reference is dropped
        if v == 1:
            return 0, True, []
        new, ok, ev = step(v, "dec_not_one")
        return new, False, ev
    raise ValueError(op)


class Model:
    """Model counter with the warn-once latch applied."""

    def __init__(self, value=0):
        self.value = value
        self.latched = set()

    def apply(self, op, arg=None):
        self.value, ret, raised = step(self.value, op, arg)
        emitted = []
        for kind in raised:
            if kind not in self.latched:
                self.latched.add(kind)
                emitted.append(kind)
        return ret, emitted
