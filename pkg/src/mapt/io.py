"""Model file formats and bound-trace output.

Native format, whitespace separated, ``#`` starts a comment::

    3                 # number of variables
    2 2 2             # domain sizes
    unary 0           # one row of |X_0| costs
    0 0
    pair 0 1          # |X_0| rows of |X_1| costs, u < v
    1 0
    0 1
    triplet 0 1 2     # |X_0|*|X_1| rows of |X_2| costs (optional)
    ...

Missing unary blocks mean zero costs.  Costs are written with ``repr`` so
serialize/parse round-trips exactly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import Relaxation, build_model

UAI_ZERO = 1e-300
UAI_ZERO_COST = 700.0


class FormatError(ValueError):
    """Malformed model file; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


# -- UAI --------------------------------------------------------------------

def _uai_cost(value: float) -> float:
    if value < 0:
        raise FormatError(f"negative table value {value}")
    return UAI_ZERO_COST if value <= UAI_ZERO else -math.log(value)


def parse_uai(text: str) -> Relaxation:
    """Parse a UAI ``MARKOV`` file with unary and pairwise factors.

    Tables become costs ``-ln(value)``; factors on the same scope are summed.
    """
    tokens = text.split()
    if not tokens:
        raise FormatError("empty input")
    pos = 0

    def take(what: str) -> str:
        nonlocal pos
        if pos >= len(tokens):
            raise FormatError(f"unexpected end of input while reading {what}")
        tok = tokens[pos]
        pos += 1
        return tok

    def take_int(what: str) -> int:
        tok = take(what)
        try:
            return int(tok)
        except ValueError:
            raise FormatError(f"expected an integer for {what}, got {tok!r}") from None

    kind = take("network type").upper()
    if kind != "MARKOV":
        raise FormatError(f"unsupported network type {kind!r}")
    n = take_int("variable count")
    sizes = [take_int(f"domain size of variable {v}") for v in range(n)]
    if any(d < 1 for d in sizes):
        raise FormatError("domain sizes must be positive")
    num_factors = take_int("factor count")
    scopes = []
    for k in range(num_factors):
        arity = take_int(f"arity of factor {k}")
        scope = tuple(take_int(f"scope of factor {k}") for _ in range(arity))
        if arity not in (1, 2):
            raise FormatError(f"factor {k} has arity {arity} (scope {scope}); only 1 and 2 are supported")
        if any(not 0 <= v < n for v in scope):
            raise FormatError(f"factor {k} scope {scope} references an unknown variable")
        if arity == 2 and scope[0] == scope[1]:
            raise FormatError(f"factor {k} scope {scope} repeats a variable")
        scopes.append(scope)

    unary = [np.zeros(d) for d in sizes]
    pairwise: dict[tuple[int, int], np.ndarray] = {}
    for k, scope in enumerate(scopes):
        count = take_int(f"table size of factor {k}")
        shape = tuple(sizes[v] for v in scope)
        if count != int(np.prod(shape)):
            raise FormatError(f"factor {k} table has {count} entries, expected {int(np.prod(shape))}")
        values = []
        for _ in range(count):
            tok = take(f"table of factor {k}")
            try:
                values.append(_uai_cost(float(tok)))
            except ValueError as exc:
                raise FormatError(f"bad table value {tok!r} in factor {k}: {exc}") from None
        table = np.array(values).reshape(shape)
        if len(scope) == 1:
            unary[scope[0]] += table
            continue
        if scope[0] > scope[1]:
            table = table.T
        key = tuple(sorted(scope))
        pairwise[key] = pairwise[key] + table if key in pairwise else table
    if pos != len(tokens):
        raise FormatError(f"{len(tokens) - pos} trailing tokens after the last table")
    return build_model(sizes, unary, pairwise)


# -- native -----------------------------------------------------------------

def _native_lines(text: str) -> list[tuple[int, list[str]]]:
    out = []
    for no, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].split()
        if body:
            out.append((no, body))
    return out


def _floats(tokens: list[str], line: int) -> list[float]:
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise FormatError(f"expected numbers, got {' '.join(tokens)!r}", line) from None


def _ints(tokens: list[str], line: int) -> list[int]:
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise FormatError(f"expected integers, got {' '.join(tokens)!r}", line) from None


def parse_native(text: str) -> Relaxation:
    lines = _native_lines(text)
    if not lines:
        raise FormatError("empty input")
    (no, head), rest = lines[0], lines[1:]
    if len(head) != 1:
        raise FormatError("first line must hold the variable count", no)
    (n,) = _ints(head, no)
    if not rest:
        raise FormatError("missing domain sizes", no)
    no, tok = rest[0]
    sizes = _ints(tok, no)
    if len(sizes) != n or any(d < 1 for d in sizes):
        raise FormatError(f"expected {n} positive domain sizes", no)

    model = Relaxation(sizes)
    seen_unary: set[int] = set()
    i = 1

    def read_rows(count: int, width: int, start: int) -> np.ndarray:
        if i + count > len(rest):
            raise FormatError(f"expected {count} cost rows", start)
        rows = []
        for k in range(count):
            rno, rtok = rest[i + k]
            row = _floats(rtok, rno)
            if len(row) != width:
                raise FormatError(f"expected {width} costs, got {len(row)}", rno)
            rows.append(row)
        return np.array(rows, dtype=float)

    # blocks are applied in file order so factor ids survive a round trip
    while i < len(rest):
        no, tok = rest[i]
        kw, args = tok[0], _ints(tok[1:], no)
        i += 1
        if any(not 0 <= v < n for v in args):
            raise FormatError(f"unknown variable in {' '.join(tok)!r}", no)
        if kw == "unary" and len(args) == 1:
            (v,) = args
            if v in seen_unary:
                raise FormatError(f"duplicate unary block for variable {v}", no)
            seen_unary.add(v)
            model.factors[v].costs = read_rows(1, sizes[v], no)[0]
            i += 1
        elif kw == "pair" and len(args) == 2:
            u, v = args
            if not u < v:
                raise FormatError("pair blocks need u < v", no)
            if (u, v) in model:
                raise FormatError(f"duplicate pair block {u} {v}", no)
            model.add_pair(u, v, read_rows(sizes[u], sizes[v], no))
            i += sizes[u]
        elif kw == "triplet" and len(args) == 3:
            u, v, w = args
            if not u < v < w:
                raise FormatError("triplet blocks need u < v < w", no)
            if (u, v, w) in model:
                raise FormatError(f"duplicate triplet block {u} {v} {w}", no)
            rows = read_rows(sizes[u] * sizes[v], sizes[w], no)
            fid = model.add_triplet((u, v, w))
            model.factors[fid].costs = rows.reshape(sizes[u], sizes[v], sizes[w])
            i += sizes[u] * sizes[v]
        else:
            raise FormatError(f"unknown block header {' '.join(tok)!r}", no)
    return model


def _row(values) -> str:
    return " ".join(repr(float(x)) for x in values)


def serialize_native(model: Relaxation) -> str:
    """Text form of every singleton, pair and triplet factor, in factor-id order."""
    out = [str(model.num_vars), " ".join(str(d) for d in model.domain_sizes)]
    for f in model.factors:
        if f.order == 1:
            out.append(f"unary {f.scope[0]}")
            out.append(_row(f.costs))
        elif f.order == 2:
            out.append("pair {} {}".format(*f.scope))
            out.extend(_row(r) for r in f.costs)
        else:
            out.append("triplet {} {} {}".format(*f.scope))
            out.extend(_row(r) for r in f.costs.reshape(-1, f.costs.shape[-1]))
    return "\n".join(out) + "\n"


def read_model(path: str | Path, fmt: str = "native") -> Relaxation:
    text = Path(path).read_text()
    if fmt == "uai":
        return parse_uai(text)
    if fmt == "native":
        return parse_native(text)
    raise ValueError(f"unknown format {fmt!r}")


# -- bound traces -----------------------------------------------------------

TRACE_HEADER = ("seconds", "bound", "triplets", "stage", "eps", "dmax")


@dataclass
class TraceRow:
    seconds: float
    bound: float
    triplets: int
    stage: int
    eps: float
    dmax: int


@dataclass
class BoundTrace:
    rows: list[TraceRow] = field(default_factory=list)
    certificates: list[str] = field(default_factory=list)

    def append(self, *args) -> None:
        self.rows.append(TraceRow(*args))

    @property
    def final_bound(self) -> float:
        return self.rows[-1].bound if self.rows else float("nan")

    def is_monotone(self, slack: float = 1e-9) -> bool:
        return all(b.bound >= a.bound - slack and b.seconds >= a.seconds
                   for a, b in zip(self.rows, self.rows[1:]))


def _fmt(x) -> str:
    return f"{x:.9g}" if isinstance(x, float) else str(x)


def emit_trace(trace: BoundTrace, path: str | Path) -> None:
    if not trace.is_monotone():
        raise ValueError("bound trace is not monotone; refusing to write it")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in trace.rows:
            w.writerow([_fmt(float(r.seconds)), _fmt(float(r.bound)), r.triplets, r.stage,
                        _fmt(float(r.eps)), r.dmax])
