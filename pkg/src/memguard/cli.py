"""``memguard`` command line: scan, bench, demo-bounds."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import bench
from .bounds import BoundViolationError, CheckMode, PoolRegistry
from .scanner import DEFAULT_CONFIG, scan_tree

EX_USAGE = 64


@dataclass
class CliConfig:
    subcommand: str
    format: str = "text"
    audit: bool = False
    paths: list[str] = field(default_factory=list)
    iterations: int = bench.DEFAULT_ITERATIONS
    release_regex: list[str] = field(default_factory=list)
    jobs: int = 1
    repetitions: int = bench.DEFAULT_REPETITIONS
    copy_iterations: int = 100_000


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="memguard",
                description="Refcount pattern scanner, overhead benchmarks and "
                            "bounds-checking demo.")
    sub = p.add_subparsers(dest="subcommand", metavar="{scan,bench,demo-bounds}",
                           parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("scan", help="report atomic_t variables used as reference counters")
    s.add_argument("paths", nargs="+", help="C files or directories")
    s.add_argument("--format", choices=("text", "json"), default="text")
    s.add_argument("--release-regex", action="append", default=[], metavar="R",
                   help="extra release-call name regex (repeatable)")
    s.add_argument("--jobs", type=_positive, default=1)

    b = sub.add_parser("bench", help="saturating vs plain inc, checked vs raw copy")
    b.add_argument("--iterations", type=_positive, default=bench.DEFAULT_ITERATIONS)
    b.add_argument("--repetitions", type=_positive, default=bench.DEFAULT_REPETITIONS)
    b.add_argument("--copy-iterations", type=_positive, default=100_000)
    b.add_argument("--json", dest="format", action="store_const", const="json",
                   default="text")

    d = sub.add_parser("demo-bounds", help="overrun a 128-byte buffer with a checked copy")
    d.add_argument("--audit", action="store_true",
                   help="log violations and continue instead of failing")
    return p


def parse_args(argv: Optional[Sequence[str]] = None) -> CliConfig:
    ns = build_parser().parse_args(argv)
    return CliConfig(**{k: v for k, v in vars(ns).items() if v is not None})


def _color_enabled(stream) -> bool:
    env = os.environ.get("MEMGUARD_COLOR")
    if env is not None:
        return env == "1"
    return hasattr(stream, "isatty") and stream.isatty()


def _paint(text: str, code: str, on: bool) -> str:
    return f"\033[{code}m{text}\033[0m" if on else text


def cmd_scan(cfg: CliConfig) -> int:
    config = DEFAULT_CONFIG.extend(release_regexes=cfg.release_regex)
    report = None
    for path in cfg.paths:
        r = scan_tree(path, config, jobs=cfg.jobs)
        report = r if report is None else report.merge(r)
    color = _color_enabled(sys.stdout)
    if cfg.format == "json":
        sys.stdout.write(report.to_jsonl())
    else:
        for f in report.findings:
            pid = _paint(f.pattern.value, "33", color)
            print(f"{f.file}:{f.decl_line}: {pid}: {f.message}")
        print(report.summary(), file=sys.stderr)
    for e in report.errors:
        print(f"{e.path}: error: {e.reason}", file=sys.stderr)
    return report.exit_code


def cmd_bench(cfg: CliConfig) -> int:
    results = list(bench.bench_refcount(cfg.iterations, cfg.repetitions))
    results += bench.bench_copy(iterations=cfg.copy_iterations,
                                repetitions=cfg.repetitions)
    if cfg.format == "json":
        sys.stdout.write(bench.to_json(results))
    else:
        sys.stdout.write(bench.format_table(results))
    return 0


class _BndHandler(logging.Handler):
    def __init__(self, stream, color: bool):
        super().__init__(logging.WARNING)
        self.stream = stream
        self.color = color

    def emit(self, record):
        self.stream.write(_paint(record.getMessage(), "31", self.color) + "\n")


def cmd_demo_bounds(cfg: CliConfig) -> int:
    mode = CheckMode.AUDIT if cfg.audit else CheckMode.ENFORCE
    pool = PoolRegistry(1 << 20, mode)
    dst = pool.alloc(100)
    src = pool.alloc(200)
    pool.write(src.base, bytes(range(200)))
    print(f"mode={mode.value} dst: requested={dst.requested} capacity={dst.capacity} "
          f"at {dst.base:#x}; copying 200 bytes from {src.base:#x}")

    logger = logging.getLogger("memguard.bounds")
    handler = _BndHandler(sys.stdout, _color_enabled(sys.stdout))
    logger.addHandler(handler)
    saved = logger.propagate
    logger.propagate = False
    try:
        before = pool.read(dst.base, dst.capacity)
        try:
            pool.checked_copy(dst.base, src.base, 200)
        except BoundViolationError:
            unchanged = pool.read(dst.base, dst.capacity) == before
            print(f"copy blocked; destination unchanged: {unchanged}")
            return 1
        print("copy completed (audit mode: violation logged only)")
        return 0
    finally:
        logger.removeHandler(handler)
        logger.propagate = saved


COMMANDS = {"scan": cmd_scan, "bench": cmd_bench, "demo-bounds": cmd_demo_bounds}


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        cfg = parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EX_USAGE
    return COMMANDS[cfg.subcommand](cfg)


def main() -> None:
    sys.exit(run())
