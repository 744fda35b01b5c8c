import random
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memguard.refcount import UINT_MAX, AtomicU32, EventKind, RefCount, set_default_sink
from refmodel import OPS, Model

INCREASING = ("add_not_zero", "inc_not_zero", "add", "inc")
DECREASING = ("sub_and_test", "dec_and_test", "dec", "sub", "dec_if_one", "dec_not_one",
              "dec_and_lock")


def make(value, events):
    return RefCount(value, sink=events)


def call(c, op, arg=None, lock=None):
    if op == "dec_and_lock":
        held = c.dec_and_lock(lock)
        if held:
            lock.release()
        return held
    fn = getattr(c, op)
    return fn() if arg is None else fn(arg)


def test_cmpxchg_contract():
    a = AtomicU32(5)
    assert a.cmpxchg(5, 9) == 5 and a.load() == 9
    assert a.cmpxchg(5, 1) == 9 and a.load() == 9
    assert a.fetch_add(-10) == 9 and a.load() == UINT_MAX


@pytest.mark.parametrize("n", [1, 0, UINT_MAX])
def test_set_read(n, events):
    c = make(7, events)
    c.set(n)
    assert c.read() == n
    assert events == []


def test_set_rejects_out_of_range():
    with pytest.raises(ValueError):
        RefCount().set(UINT_MAX + 1)
    with pytest.raises(ValueError):
        RefCount().set(-1)


def test_read_after_inc(events):
    c = make(1, events)
    c.inc()
    assert c.read() == 2


@pytest.mark.parametrize("value, summand, ret, after, kinds", [
    (0, 1, False, 0, []),
    (UINT_MAX, 1, True, UINT_MAX, []),
    (UINT_MAX - 2, 5, True, UINT_MAX, ["Saturated"]),
    (7, 3, True, 10, []),
])
def test_add_not_zero(value, summand, ret, after, kinds, events):
    c = make(value, events)
    assert c.add_not_zero(summand) is ret
    assert c.read() == after
    assert events.kinds() == kinds


def test_add_not_zero_zero_summand(events):
    c = make(4, events)
    assert c.add_not_zero(0) is True
    assert c.read() == 4
    assert events.kinds() == ["ZeroDelta"]
    assert make(0, events).add_not_zero(0) is False


@pytest.mark.parametrize("value, ret, after", [
    (0, False, 0), (1, True, 2), (UINT_MAX, True, UINT_MAX)])
def test_inc_not_zero(value, ret, after, events):
    c = make(value, events)
    assert c.inc_not_zero() is ret
    assert c.read() == after
    assert events == []


@pytest.mark.parametrize("value, summand, after, kinds", [
    (2, 4, 6, []),
    (0, 4, 0, ["IncrementOnZero"]),
    (UINT_MAX - 1, 3, UINT_MAX, ["Saturated"]),
])
def test_add(value, summand, after, kinds, events):
    c = make(value, events)
    assert c.add(summand) is None
    assert c.read() == after
    assert events.kinds() == kinds


@pytest.mark.parametrize("value, after, kinds", [
    (5, 6, []), (0, 0, ["IncrementOnZero"]), (UINT_MAX, UINT_MAX, [])])
def test_inc(value, after, kinds, events):
    c = make(value, events)
    c.inc()
    assert c.read() == after
    assert events.kinds() == kinds


@pytest.mark.parametrize("value, sub, ret, after, kinds", [
    (5, 5, True, 0, []),
    (UINT_MAX, 1, False, UINT_MAX, []),
    (3, 7, False, 3, ["Underflow"]),
    (0, 1, False, 0, ["DecrementOnZero"]),
    (9, 4, False, 5, []),
])
def test_sub_and_test(value, sub, ret, after, kinds, events):
    c = make(value, events)
    assert c.sub_and_test(sub) is ret
    assert c.read() == after
    assert events.kinds() == kinds


@pytest.mark.parametrize("value, ret, after, kinds", [
    (1, True, 0, []), (2, False, 1, []), (0, False, 0, ["DecrementOnZero"])])
def test_dec_and_test(value, ret, after, kinds, events):
    c = make(value, events)
    assert c.dec_and_test() is ret
    assert c.read() == after
    assert events.kinds() == kinds


@pytest.mark.parametrize("value, after, kinds", [
    (3, 2, []),
    (1, 0, ["DecrementToZeroWithoutTest"]),
    (UINT_MAX, UINT_MAX, []),
    (0, 0, ["DecrementOnZero"]),
])
def test_dec(value, after, kinds, events):
    c = make(value, events)
    c.dec()
    assert c.read() == after
    assert events.kinds() == kinds


def test_sub(events):
    c = make(10, events)
    c.sub(4)
    assert c.read() == 6
    c.sub(6)
    assert c.read() == 0
    assert events.kinds() == ["DecrementToZeroWithoutTest"]


@pytest.mark.parametrize("value, ret, after", [
    (1, True, 0), (2, False, 2), (UINT_MAX, False, UINT_MAX), (0, False, 0)])
def test_dec_if_one(value, ret, after, events):
    c = make(value, events)
    assert c.dec_if_one() is ret
    assert c.read() == after
    assert events == []


@pytest.mark.parametrize("value, ret, after, kinds", [
    (1, False, 1, []),
    (4, True, 3, []),
    (UINT_MAX, True, UINT_MAX, []),
    (0, True, 0, ["DecrementOnZero"]),
])
def test_dec_not_one(value, ret, after, kinds, events):
    c = make(value, events)
    assert c.dec_not_one() is ret
    assert c.read() == after
    assert events.kinds() == kinds


@pytest.mark.parametrize("value, ret, after", [
    (1, True, 0), (3, False, 2), (UINT_MAX, False, UINT_MAX), (0, False, 0)])
def test_dec_and_lock(value, ret, after, events):
    lock = threading.Lock()
    c = make(value, events)
    assert c.dec_and_lock(lock) is ret
    assert c.read() == after
    assert lock.locked() is ret
    if ret:
        lock.release()


def test_dec_and_lock_slow_path_releases_when_not_last(events):
    # Value is 1 when the fast path looks, but another reference is taken
    # before the lock is acquired: the slow path must drop the lock again.
    c = make(1, events)

    class Sneaky:
        def __init__(self):
            self.inner = threading.Lock()

        def acquire(self):
            c.inc()
            self.inner.acquire()

        def release(self):
            self.inner.release()

    lock = Sneaky()
    assert c.dec_and_lock(lock) is False
    assert c.read() == 1
    assert not lock.inner.locked()


def test_mutex_alias():
    assert RefCount.dec_and_mutex_lock is RefCount.dec_and_lock


def test_negative_delta_rejected():
    with pytest.raises(ValueError):
        RefCount(1).add(-1)
    with pytest.raises(ValueError):
        RefCount(1).sub_and_test(UINT_MAX + 1)


def test_warn_once_per_kind(events):
    c = make(0, events)
    for _ in range(10):
        c.inc()
        c.dec()
    assert events.kinds() == ["IncrementOnZero", "DecrementOnZero"]
    c.reset_warnings()
    c.inc()
    assert events.kinds()[-1] == "IncrementOnZero"


def test_event_fields(events):
    c = RefCount(UINT_MAX - 1, sink=events, name="sk")
    c.add(5)
    (e,) = events
    assert e.kind is EventKind.SATURATED
    assert e.operation == "add"
    assert e.prior == UINT_MAX - 1
    assert "Saturated" in str(e) and "sk" in str(e)


def test_default_sink_is_stderr(capsys):
    RefCount(0).inc()
    assert "IncrementOnZero" in capsys.readouterr().err


def test_default_sink_replaceable(events):
    old = set_default_sink(events)
    try:
        RefCount(0).inc()
    finally:
        set_default_sink(old)
    assert events.kinds() == ["IncrementOnZero"]


class TestUnchecked:
    """full_checks=False: plain wrapping arithmetic, no events."""

    def test_wraps(self, events):
        c = RefCount(UINT_MAX, sink=events, full_checks=False)
        c.inc()
        assert c.read() == 0
        c.inc()
        assert c.read() == 1
        c.dec()
        c.dec()
        assert c.read() == UINT_MAX
        assert events == []

    def test_increment_from_zero_allowed(self):
        c = RefCount(0, full_checks=False)
        c.add(3)
        assert c.read() == 3

    def test_conditional_ops(self):
        c = RefCount(0, full_checks=False)
        assert c.inc_not_zero() is False
        c.set(1)
        assert c.dec_not_one() is False
        assert c.dec_and_test() is True
        assert c.sub_and_test(1) is False and c.read() == UINT_MAX
        c.set(2)
        assert c.dec_and_lock(threading.Lock()) is False and c.read() == 1


# -- properties -------------------------------------------------------------

SEEDS = [0, 1, 2, 3, UINT_MAX - 2, UINT_MAX - 1, UINT_MAX]
deltas = st.one_of(st.integers(0, 4), st.integers(0, UINT_MAX))
op_seq = st.lists(st.tuples(st.sampled_from([o for o in OPS if o != "set"]), deltas),
                  max_size=30)


def _run(c, op, delta, lock):
    arg = delta if op in ("add_not_zero", "add", "sub_and_test", "sub") else None
    return call(c, op, arg, lock)


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(SEEDS), op_seq)
def test_wrap_freedom_and_absorbency(seed, ops):
    c = RefCount(seed, sink=lambda e: None)
    lock = threading.Lock()
    for op, delta in ops:
        before = c.read()
        _run(c, op, delta, lock)
        after = c.read()
        assert 0 <= after <= UINT_MAX
        if op in INCREASING:
            assert after >= before
            if before == 0:
                assert after == 0
        if op in DECREASING:
            assert after <= before
            if before == UINT_MAX:
                assert after == UINT_MAX
        if before == UINT_MAX:
            assert after == UINT_MAX


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(SEEDS), op_seq)
def test_matches_reference_model(seed, ops):
    events = []
    c = RefCount(seed, sink=events.append)
    m = Model(seed)
    lock = threading.Lock()
    for op, delta in ops:
        arg = delta if op in ("add_not_zero", "add", "sub_and_test", "sub") else None
        n = len(events)
        got = _run(c, op, delta, lock)
        want, kinds = m.apply(op, arg)
        assert got == want, (op, arg)
        assert c.read() == m.value
        assert [e.kind.value for e in events[n:]] == kinds


# -- concurrency --------------------------------------------------------------

def _threads(n, target, *args):
    barrier = threading.Barrier(n)

    def wrapped(i):
        barrier.wait()
        target(i, *args)

    ts = [threading.Thread(target=wrapped, args=(i,)) for i in range(n)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()


@pytest.mark.parametrize("nthreads", [2, 4, 8])
def test_no_lost_increments(nthreads):
    c = RefCount(1)
    k = 10_000

    def work(_):
        for _ in range(k):
            c.inc()

    _threads(nthreads, work)
    assert c.read() == 1 + nthreads * k


def test_concurrent_saturation_is_absorbing(events):
    c = RefCount(UINT_MAX - 1000, sink=events)
    seen = []

    def work(_):
        for _ in range(2000):
            c.add(3)
            v = c.read()
            if seen and seen[-1] == UINT_MAX:
                assert v == UINT_MAX
            seen.append(v)
            c.dec()

    _threads(4, work)
    assert c.read() == UINT_MAX
    assert events.kinds().count("Saturated") == 1


@pytest.mark.parametrize("nthreads", [2, 4, 8])
def test_random_ops_linearizable(nthreads):
    """Concurrent random ops end where any sequential order would.

    The counter starts high enough that no op can reach 0 or UINT_MAX, so
    every sequential interleaving gives the same returns and the same final
    value (start plus the net movement).
    """
    n = 10_000
    c = RefCount(n * nthreads * 4, sink=lambda e: None)
    start = c.read()
    logs = [[] for _ in range(nthreads)]
    ops = ("inc", "add", "inc_not_zero", "add_not_zero", "dec", "dec_and_test",
           "sub_and_test", "dec_not_one")

    def work(i):
        rnd = random.Random(i)
        for _ in range(n):
            op = rnd.choice(ops)
            arg = rnd.randint(1, 3) if op in ("add", "add_not_zero", "sub_and_test") else None
            logs[i].append((op, arg, call(c, op, arg)))

    _threads(nthreads, work)
    delta = 0
    for log in logs:
        for op, arg, ret in log:
            if op in ("inc", "inc_not_zero"):
                delta += 1
            elif op in ("add", "add_not_zero"):
                delta += arg
            elif op in ("dec", "dec_and_test", "dec_not_one"):
                delta -= 1
            else:
                delta -= arg
            if op in ("inc_not_zero", "add_not_zero", "dec_not_one"):
                assert ret is True
            if op in ("dec_and_test", "sub_and_test"):
                assert ret is False
    assert c.read() == start + delta


def test_dec_and_lock_exclusive_under_contention():
    lock = threading.Lock()
    freed = []
    for _ in range(200):
        c = RefCount(8)

        def work(i):
            if c.dec_and_lock(lock):
                assert c.read() == 0
                assert lock.locked()
                freed.append(i)
                lock.release()

        _threads(8, work)
        assert c.read() == 0
        assert not lock.locked()
    assert len(freed) == 200
