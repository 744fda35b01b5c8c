"""Find ``atomic_t`` variables that behave like reference counters.

The analyzer works on C source without a preprocessor or a full parser.
Comments, string/char literals and preprocessor directives are blanked
(keeping line structure), the remainder is tokenized, and each function body
is located by brace matching after a parenthesized parameter list.  Within a
body four pattern families are reported:

``r1``  a ``*_dec_and_test``/``*_dec_and_lock`` call on ``&(a)->x`` followed
        later by a call whose name matches ``.*free.*`` with ``a`` as its
        first argument, or by any call named like ``destroy``/``del``/
        ``queue_work``/``schedule_work``/``call_rcu``.
``r4``  the same decrement where the object is released through an alias
        ``y = a;`` (``kfree(y)``).
``r2``  ``atomic_add_unless(..., -1, 1)`` and its long/64-bit variants.
``r3``  ``x = atomic_add_return(-1, ...)`` and its long/64-bit variants.

"Later" means later in the token stream of the same body; control flow is
not modelled.
"""
from __future__ import annotations

import bisect
import enum
import json
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

__all__ = [
    "Pattern",
    "ScanFinding",
    "PatternConfig",
    "ScanError",
    "ScanReport",
    "strip_c",
    "scan_source",
    "scan_file",
    "scan_tree",
    "DEC_MESSAGE",
]

DEC_MESSAGE = "atomic_dec_and_test variation before object free at line {}."
ADD_UNLESS_MESSAGE = "atomic_add_unless"
ADD_RETURN_MESSAGE = "x = atomic_add_return(-1, ...)"


class Pattern(enum.Enum):
    DEC_AND_TEST_THEN_FREE = "r1"
    DEC_AND_TEST_ALIAS_THEN_FREE = "r4"
    ADD_UNLESS_MINUS_ONE_ONE = "r2"
    ADD_RETURN_MINUS_ONE = "r3"


_PATTERN_ORDER = {p: i for i, p in enumerate(Pattern)}


@dataclass(frozen=True)
class ScanFinding:
    file: str
    decl_line: int
    release_line: Optional[int]
    pattern: Pattern
    message: str
    confidence: str = "high"

    def sort_key(self):
        return (self.file, self.decl_line, _PATTERN_ORDER[self.pattern],
                self.release_line or 0)

    def to_text(self) -> str:
        return f"{self.file}:{self.decl_line}: {self.pattern.value}: {self.message}"

    def to_dict(self) -> dict:
        return {
            "file": self.file,
            "decl_line": self.decl_line,
            "release_line": self.release_line,
            "pattern": self.pattern.value,
            "message": self.message,
            "confidence": self.confidence,
        }


@dataclass(frozen=True)
class PatternConfig:
    decrement_functions: frozenset[str] = frozenset({
        "atomic_dec_and_test",
        "atomic_dec_and_lock",
        "atomic_long_dec_and_lock",
        "atomic_long_dec_and_test",
        "atomic64_dec_and_test",
        "local_dec_and_test",
    })
    # Calls matching these must take the decremented object as first argument.
    object_release_regexes: tuple[str, ...] = (".*free.*",)
    # Calls matching these count as a release whatever their arguments.
    release_regexes: tuple[str, ...] = (
        ".*destroy.*",
        ".*del.*",
        ".*queue_work.*",
        ".*schedule_work.*",
        ".*call_rcu.*",
    )
    add_unless_functions: frozenset[str] = frozenset({
        "atomic_add_unless", "atomic_long_add_unless", "atomic64_add_unless",
    })
    add_return_functions: frozenset[str] = frozenset({
        "atomic_add_return", "atomic_long_add_return", "atomic64_add_return",
    })

    def extend(self, release_regexes: Iterable[str] = (),
               decrement_functions: Iterable[str] = ()) -> "PatternConfig":
        return PatternConfig(
            decrement_functions=self.decrement_functions | frozenset(decrement_functions),
            object_release_regexes=self.object_release_regexes,
            release_regexes=self.release_regexes + tuple(release_regexes),
            add_unless_functions=self.add_unless_functions,
            add_return_functions=self.add_return_functions,
        )


DEFAULT_CONFIG = PatternConfig()


class ScanError(Exception):
    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


# -- lexical layer ---------------------------------------------------------

def strip_c(text: str) -> str:
    """Blank comments, string/char literals and preprocessor lines.

    Every removed character becomes a space except newlines, so line
    numbers and columns survive.  String literals keep their quotes.
    """
    out = list(text)
    n = len(text)
    i = 0
    at_line_start = True
    while i < n:
        c = text[i]
        if c == "\n":
            at_line_start = True
            i += 1
            continue
        if at_line_start and c == "#":
            # directive, including backslash continuations
            while i < n and text[i] != "\n":
                if text[i] == "\\" and i + 1 < n and text[i + 1] == "\n":
                    out[i] = " "
                    i += 2
                    continue
                out[i] = " "
                i += 1
            continue
        if not c.isspace():
            at_line_start = False
        if c == "/" and i + 1 < n and text[i + 1] == "/":
            while i < n and text[i] != "\n":
                out[i] = " "
                i += 1
            continue
        if c == "/" and i + 1 < n and text[i + 1] == "*":
            end = text.find("*/", i + 2)
            end = n if end < 0 else end + 2
            for j in range(i, end):
                if text[j] != "\n":
                    out[j] = " "
            i = end
            continue
        if c in "\"'":
            j = i + 1
            while j < n and text[j] != c and text[j] != "\n":
                if text[j] == "\\" and j + 1 < n:
                    out[j] = " "
                    j += 1
                    if text[j] == "\n":
                        j += 1
                        continue
                out[j] = " "
                j += 1
            i = j + 1
            continue
        i += 1
    return "".join(out)


_TOKEN = re.compile(r"""
    [A-Za-z_]\w*
  | 0[xX][0-9a-fA-F]+[uUlL]* | \d+[uUlL]*
  | ->|\+\+|--|==|!=|<=|>=|&&|\|\||<<=?|>>=?|[-+*/%&|^!]=
  | \S
""", re.VERBOSE)
_IDENT = re.compile(r"[A-Za-z_]\w*\Z")
_OPEN = {"(": ")", "[": "]", "{": "}"}


@dataclass
class _Tok:
    text: str
    line: int


def _tokenize(text: str) -> list[_Tok]:
    starts = [0] + [m.end() for m in re.finditer("\n", text)]
    return [_Tok(m.group(), bisect.bisect_right(starts, m.start()))
            for m in _TOKEN.finditer(text)]


def _match_close(toks: Sequence[_Tok], i: int) -> int:
    """Index of the bracket closing ``toks[i]``, or ``len(toks)`` if unbalanced."""
    stack = []
    for j in range(i, len(toks)):
        t = toks[j].text
        if t in _OPEN:
            stack.append(_OPEN[t])
        elif stack and t == stack[-1]:
            stack.pop()
            if not stack:
                return j
    return len(toks)


def _function_bodies(toks: Sequence[_Tok]) -> list[tuple[int, int]]:
    """(start, end) token ranges of top-level ``) {`` bodies, braces excluded."""
    bodies = []
    i = 0
    while i < len(toks):
        if toks[i].text == "{":
            end = _match_close(toks, i)
            if i > 0 and toks[i - 1].text == ")":
                bodies.append((i + 1, end))
            i = end + 1
        else:
            i += 1
    return bodies


@dataclass
class _Call:
    name: str
    line: int
    index: int          # token index of the name
    end: int            # token index of the closing paren
    args: list[list[str]]


def _calls(toks: Sequence[_Tok], start: int, end: int) -> list[_Call]:
    calls = []
    for i in range(start, end - 1):
        if not (_IDENT.match(toks[i].text) and toks[i + 1].text == "("):
            continue
        close = _match_close(toks, i + 1)
        args: list[list[str]] = [[]]
        depth = 0
        for t in toks[i + 2:min(close, end)]:
            if t.text in _OPEN:
                depth += 1
            elif t.text in (")", "]", "}"):
                depth -= 1
            elif t.text == "," and depth == 0:
                args.append([])
                continue
            args[-1].append(t.text)
        if args == [[]]:
            args = []
        calls.append(_Call(toks[i].text, toks[i].line, i, close, args))
    return calls


def _head_ident(arg: Sequence[str]) -> Optional[str]:
    for t in arg:
        if _IDENT.match(t):
            return t
    return None


def _object_of(arg: Sequence[str]) -> Optional[tuple[Optional[str], str]]:
    """Classify a decrement's first argument.

    ``&(a)->x`` / ``&a->x`` give ``(a, "high")``.  Other address-of forms give
    the head identifier with ``"low"`` confidence; a bare ``&x`` binds no
    object.  Anything not taking an address is not a match.
    """
    if not arg or arg[0] != "&":
        return None
    rest = list(arg[1:])
    if len(rest) >= 3 and rest[0] == "(" and rest[2] == ")":
        rest = [rest[1]] + rest[3:]
    if len(rest) == 3 and _IDENT.match(rest[0]) and rest[1] == "->" and _IDENT.match(rest[2]):
        return rest[0], "high"
    if len(rest) == 1 and _IDENT.match(rest[0]):
        return None, "low"
    head = _head_ident(rest)
    return (head, "low") if head else None


def _compile(regexes: Iterable[str]) -> list[re.Pattern]:
    return [re.compile(r) for r in regexes]


# -- pattern matching ------------------------------------------------------

def scan_source(text: str, path: str = "<string>",
                config: PatternConfig = DEFAULT_CONFIG) -> list[ScanFinding]:
    """Scan C source text and return findings sorted by line."""
    toks = _tokenize(strip_c(text))
    obj_rel = _compile(config.object_release_regexes)
    any_rel = _compile(config.release_regexes)
    findings: list[ScanFinding] = []

    for start, end in _function_bodies(toks):
        calls = _calls(toks, start, end)
        aliases = _aliases(toks, start, end)
        for k, call in enumerate(calls):
            if call.name in config.decrement_functions and call.args:
                bound = _object_of(call.args[0])
                if bound is None:
                    continue
                obj, confidence = bound
                later = [c for c in calls[k + 1:] if c.index > call.end]
                rel = _first_release(later, obj, obj_rel, any_rel)
                if rel is not None:
                    findings.append(ScanFinding(
                        path, call.line, rel.line, Pattern.DEC_AND_TEST_THEN_FREE,
                        DEC_MESSAGE.format(rel.line), confidence))
                if obj is not None:
                    rel = _first_alias_release(later, obj, aliases, obj_rel)
                    if rel is not None:
                        findings.append(ScanFinding(
                            path, call.line, rel.line, Pattern.DEC_AND_TEST_ALIAS_THEN_FREE,
                            DEC_MESSAGE.format(rel.line), confidence))
            elif call.name in config.add_unless_functions:
                if len(call.args) == 3 and call.args[1] == ["-", "1"] and call.args[2] == ["1"]:
                    bound = _object_of(call.args[0])
                    confidence = bound[1] if bound else "low"
                    findings.append(ScanFinding(
                        path, call.line, None, Pattern.ADD_UNLESS_MINUS_ONE_ONE,
                        ADD_UNLESS_MESSAGE, confidence))
            elif call.name in config.add_return_functions:
                if (call.args and call.args[0] == ["-", "1"]
                        and toks[call.index - 1].text == "="):
                    findings.append(ScanFinding(
                        path, call.line, None, Pattern.ADD_RETURN_MINUS_ONE,
                        ADD_RETURN_MESSAGE))
    findings.sort(key=ScanFinding.sort_key)
    return findings


def _aliases(toks: Sequence[_Tok], start: int, end: int) -> list[tuple[int, str, str]]:
    """``y = a;`` statements as (token index, y, a)."""
    out = []
    for i in range(start + 1, end - 2):
        if (toks[i].text == "=" and _IDENT.match(toks[i - 1].text)
                and _IDENT.match(toks[i + 1].text) and toks[i + 2].text == ";"
                and toks[i - 1].text != toks[i + 1].text
                and (i - 2 < start or toks[i - 2].text not in (".", "->"))):
            out.append((i, toks[i - 1].text, toks[i + 1].text))
    return out


def _first_release(calls, obj, obj_rel, any_rel) -> Optional[_Call]:
    for c in calls:
        if any(r.fullmatch(c.name) for r in obj_rel):
            if obj is None or (c.args and _head_ident(c.args[0]) == obj):
                return c
        if any(r.fullmatch(c.name) for r in any_rel):
            return c
    return None


def _first_alias_release(calls, obj, aliases, obj_rel) -> Optional[_Call]:
    for c in calls:
        if not c.args or not any(r.fullmatch(c.name) for r in obj_rel):
            continue
        head = _head_ident(c.args[0])
        if any(y == head and a == obj and i < c.index for i, y, a in aliases):
            return c
    return None


# -- files and trees -------------------------------------------------------

def scan_file(path, config: PatternConfig = DEFAULT_CONFIG) -> list[ScanFinding]:
    """Scan one file.  Raises :class:`ScanError` if it is unreadable or binary."""
    path = str(path)
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ScanError(path, f"unreadable: {exc.strerror or exc}") from None
    if b"\0" in data:
        raise ScanError(path, "binary content, skipped")
    return scan_source(data.decode("utf-8", errors="replace"), path, config)


@dataclass
class ScanReport:
    files: dict[str, list[ScanFinding]] = field(default_factory=dict)
    errors: list[ScanError] = field(default_factory=list)

    @property
    def findings(self) -> list[ScanFinding]:
        return [f for fs in self.files.values() for f in fs]

    def counts(self) -> dict[str, int]:
        out = {p.value: 0 for p in Pattern}
        for f in self.findings:
            out[f.pattern.value] += 1
        return out

    @property
    def exit_code(self) -> int:
        if self.errors:
            return 2
        return 1 if self.findings else 0

    def merge(self, other: "ScanReport") -> "ScanReport":
        files = dict(self.files)
        files.update(other.files)
        return ScanReport(dict(sorted(files.items())),
                          sorted(self.errors + other.errors, key=lambda e: e.path))

    def to_text(self) -> str:
        lines = [f.to_text() for f in self.findings]
        lines += [f"{e.path}: error: {e.reason}" for e in self.errors]
        return "".join(line + "\n" for line in lines)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(f.to_dict(), sort_keys=True) + "\n"
                       for f in self.findings)

    def summary(self) -> str:
        c = self.counts()
        parts = " ".join(f"{k}={v}" for k, v in c.items())
        return (f"{len(self.files)} files, {sum(c.values())} findings ({parts}), "
                f"{len(self.errors)} errors")


def _source_files(root: Path) -> list[str]:
    if root.is_file():
        return [str(root)]
    found = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in filenames:
            if name.endswith((".c", ".h")):
                found.append(os.path.join(dirpath, name))
    return sorted(found)


def _scan_one(args):
    path, config = args
    try:
        return path, scan_file(path, config), None
    except ScanError as exc:
        return path, None, exc


def scan_tree(root, config: PatternConfig = DEFAULT_CONFIG, jobs: int = 1) -> ScanReport:
    """Scan every ``*.c``/``*.h`` file under *root* (or *root* itself if a file).

    Output order is path-lexicographic, then by line, independent of *jobs*.
    """
    root = Path(root)
    report = ScanReport()
    if not root.exists():
        report.errors.append(ScanError(str(root), "no such file or directory"))
        return report
    paths = _source_files(root)
    work = [(p, config) for p in paths]
    if jobs > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_scan_one, work, chunksize=16))
    else:
        results = [_scan_one(w) for w in work]
    for path, findings, err in results:
        if err is not None:
            report.errors.append(err)
        else:
            report.files[path] = findings
    return report
