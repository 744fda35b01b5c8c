# Finding reference counters in C code
# ====================================
#
# atomic_t is used for statistics, budgets and sequence numbers as well as
# for reference counts.  The scanner looks for behaviour that only a
# reference count has: the object is released right after the counter drops
# to zero.

from pathlib import Path

from memguard.scanner import DEFAULT_CONFIG, scan_source, scan_tree

code = """
struct conn {
        atomic_t refcnt;
        atomic_t rx_packets;
};

void conn_put(struct conn *c)
{
        atomic_inc(&c->rx_packets);            /* a statistic, not reported */
        if (atomic_dec_and_test(&c->refcnt))
                kfree(c);
}

int conn_try_put(struct conn *c)
{
        return atomic_add_unless(&c->refcnt, -1, 1);
}
"""
for f in scan_source(code, "conn.c"):
    print(f.to_text(), f"[{f.confidence}]")

# Project-specific release helpers can be added to the release-name regexes.
code2 = "void put(struct o *o)\n{\n\tif (atomic_dec_and_test(&o->r)) o_recycle(o);\n}\n"
print("default:", scan_source(code2))
for f in scan_source(code2, "put.c", config=DEFAULT_CONFIG.extend([".*recycle.*"])):
    print("extended:", f.to_text())

# Whole trees: deterministic order, errors collected rather than fatal.
fixtures = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
report = scan_tree(fixtures)
print(report.summary())
print(report.to_jsonl().splitlines()[0])
