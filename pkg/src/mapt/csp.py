"""Pairwise CSPs derived from a cost vector, AC3 with deletion traces.

``build_csp(model, eps)`` keeps, for every singleton and pairwise factor, the
entries within ``eps`` of the factor minimum.  Higher-order factors are
dropped.  ``ac3`` records every label deletion together with the edge that
caused it and the earlier deletions that removed its last supports, which is
what :func:`minimal_trace` and the certificate builder consume.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import Relaxation


@dataclass
class CspInstance:
    domain_sizes: tuple[int, ...]
    variables: tuple[int, ...]
    domains: list[np.ndarray]
    relations: dict[tuple[int, int], np.ndarray]
    fixed: tuple[int, int] | None = None

    @property
    def edges(self) -> list[tuple[int, int]]:
        return sorted(self.relations)

    def neighbors(self) -> dict[int, list[int]]:
        nbrs: dict[int, list[int]] = {v: [] for v in self.variables}
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        return nbrs

    def relation(self, u: int, v: int) -> np.ndarray:
        """Relation mask oriented as ``[x_u, x_v]`` (a view, not a copy)."""
        if u < v:
            return self.relations[(u, v)]
        return self.relations[(v, u)].T

    def labels(self, v: int) -> list[int]:
        return [int(a) for a in np.flatnonzero(self.domains[v])]

    def wiped_out(self) -> bool:
        return any(not self.domains[v].any() for v in self.variables)

    def copy(self) -> "CspInstance":
        return CspInstance(self.domain_sizes, self.variables,
                           [d.copy() for d in self.domains],
                           {e: r.copy() for e, r in self.relations.items()},
                           self.fixed)

    def same_masks(self, other: "CspInstance") -> bool:
        if self.variables != other.variables or set(self.relations) != set(other.relations):
            return False
        return (all(np.array_equal(self.domains[v], other.domains[v]) for v in self.variables)
                and all(np.array_equal(r, other.relations[e]) for e, r in self.relations.items()))

    def leq(self, other: "CspInstance") -> bool:
        """``self ⪯ other``: every mask of ``self`` is contained in ``other``'s."""
        return (all(not np.any(self.domains[v] & ~other.domains[v]) for v in self.variables)
                and all(not np.any(r & ~other.relations[e]) for e, r in self.relations.items()))


def build_csp(model: Relaxation, eps: float) -> CspInstance:
    if eps < 0:
        raise ValueError("eps must be non-negative")
    domains = []
    for v in range(model.num_vars):
        t = model.factors[v].costs
        domains.append(t <= t.min() + eps)
    relations = {}
    for fid in model.pair_factors():
        f = model.factors[fid]
        relations[f.scope] = f.costs <= f.costs.min() + eps
    return CspInstance(model.domain_sizes, tuple(range(model.num_vars)), domains, relations)


def restrict_to_ball(instance: CspInstance, r: int, d_max: int | None) -> CspInstance:
    """Sub-instance on variables within graph distance ``d_max`` of ``r``."""
    if d_max is None:
        return instance.copy()
    if d_max < 1:
        raise ValueError("d_max must be >= 1")
    nbrs = instance.neighbors()
    dist = {r: 0}
    queue = deque([r])
    while queue:
        v = queue.popleft()
        if dist[v] == d_max:
            continue
        for w in nbrs[v]:
            if w not in dist:
                dist[w] = dist[v] + 1
                queue.append(w)
    keep = tuple(v for v in instance.variables if v in dist)
    out = instance.copy()
    out.variables = keep
    out.relations = {e: m for e, m in out.relations.items() if e[0] in dist and e[1] in dist}
    return out


def fix_label(instance: CspInstance, r: int, s: int) -> CspInstance:
    if not instance.domains[r][s]:
        raise ValueError(f"label {s} is not in the current domain of variable {r}")
    out = instance.copy()
    out.domains[r] = np.zeros_like(out.domains[r])
    out.domains[r][s] = True
    out.fixed = (r, s)
    return out


@dataclass(frozen=True)
class Deletion:
    index: int
    var: int
    label: int
    cause_var: int
    causes: frozenset[int]
    artificial: bool = False


@dataclass
class DeletionTrace:
    records: list[Deletion] = field(default_factory=list)
    wipeout: bool = False
    wipeout_var: int | None = None
    fixed: tuple[int, int] | None = None
    initial: CspInstance | None = None

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_index(self) -> dict[int, Deletion]:
        return {rec.index: rec for rec in self.records}

    def edges_touched(self) -> list[tuple[int, int]]:
        return [(rec.cause_var, rec.var) for rec in self.records]


def _prune_relations(inst: CspInstance) -> None:
    for (u, v), rel in inst.relations.items():
        rel &= inst.domains[u][:, None]
        rel &= inst.domains[v][None, :]


def ac3(instance: CspInstance, seeds: Sequence[tuple[int, int]] | None = None,
        stop_at_wipeout: bool = True) -> tuple[CspInstance, DeletionTrace]:
    """Arc consistency with a FIFO queue of arcs ``(v, u)`` = "revise v against u".

    The queue is seeded with all arcs in ascending order unless ``seeds`` is
    given.  Returns the reduced instance and the deletion trace; the input is
    not modified.  With ``stop_at_wipeout`` the run halts at the first empty
    domain and, for an instance with a fixed label ``s`` at ``r``, the trace is
    closed with an artificial deletion of ``s`` caused by the wiped-out variable.
    """
    inst = instance.copy()
    _prune_relations(inst)
    initial = inst.copy()
    nbrs = inst.neighbors()
    trace = DeletionTrace(fixed=inst.fixed, initial=initial)
    record_of: dict[tuple[int, int], int] = {}

    if seeds is None:
        seeds = sorted((a, b) for u, v in inst.edges for a, b in ((u, v), (v, u)))
    queue = deque()
    queued = set()
    for arc in seeds:
        if arc not in queued:
            queue.append(arc)
            queued.add(arc)

    while queue:
        v, u = queue.popleft()
        queued.discard((v, u))
        rel = inst.relation(v, u)
        unsupported = [a for a in np.flatnonzero(inst.domains[v]) if not rel[a].any()]
        if not unsupported:
            continue
        init_rel = initial.relation(v, u)
        for a in unsupported:
            a = int(a)
            causes = frozenset(record_of[(u, int(b))] for b in np.flatnonzero(init_rel[a])
                               if (u, int(b)) in record_of)
            idx = len(trace.records)
            trace.records.append(Deletion(idx, v, a, u, causes))
            record_of[(v, a)] = idx
            inst.domains[v][a] = False
            for w in nbrs[v]:
                inst.relation(v, w)[a, :] = False
        if not inst.domains[v].any() and not trace.wipeout:
            trace.wipeout = True
            trace.wipeout_var = v
            if stop_at_wipeout:
                break
        for w in nbrs[v]:
            if w != u and (w, v) not in queued:
                queue.append((w, v))
                queued.add((w, v))

    if trace.wipeout and inst.fixed is not None and stop_at_wipeout:
        r, s = inst.fixed
        w = trace.wipeout_var
        if w != r:
            at_w = frozenset(rec.index for rec in trace.records if rec.var == w)
            trace.records.append(Deletion(len(trace.records), r, s, w, at_w, artificial=True))
            inst.domains[r][s] = False
    return inst, trace


def minimal_trace(trace: DeletionTrace) -> DeletionTrace:
    """Backward closure of the final deletion(s) through cause links.

    The seed set is every record at the variable of the last record: for a
    wipeout at ``r`` that is just ``s``; for an unfixed instance it is the whole
    emptied domain.  Record indices are preserved.
    """
    if not trace.wipeout or not trace.records:
        raise ValueError("minimal_trace needs a trace that ends in a wipeout")
    last_var = trace.records[-1].var
    recs = trace.by_index()
    keep = set()
    stack = [rec.index for rec in trace.records if rec.var == last_var]
    while stack:
        i = stack.pop()
        if i in keep:
            continue
        keep.add(i)
        stack.extend(recs[i].causes)
    return DeletionTrace([rec for rec in trace.records if rec.index in keep],
                         trace.wipeout, trace.wipeout_var, trace.fixed, trace.initial)


def replay(initial: CspInstance, records: Iterable[Deletion]) -> bool:
    """Re-apply deletions whose justification still holds; report whether a domain empties.

    A deletion of ``a`` at ``v`` caused by ``u`` is justified when no label
    still present at ``u`` forms an initially allowed pair with ``a``.  The
    artificial closing record is justified when its cause variable is empty.
    Unjustified records are skipped.
    """
    doms = {v: initial.domains[v].copy() for v in initial.variables}
    for rec in records:
        if rec.artificial:
            if not doms[rec.cause_var].any():
                doms[rec.var][rec.label] = False
            continue
        if not doms[rec.var][rec.label]:
            continue
        rel = initial.relation(rec.var, rec.cause_var)
        if not np.any(rel[rec.label] & doms[rec.cause_var]):
            doms[rec.var][rec.label] = False
    return any(not d.any() for d in doms.values())
