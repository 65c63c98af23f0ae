"""Triplet search by singleton arc consistency probes.

Each label ``s`` of each variable ``r`` is fixed in the arc-consistent closure
of ``CSP_eps``; if AC then empties a domain, the minimal deletion sequence
names the clusters ``{r, u_i, v_i}`` that let the bound on ``theta_r(s)`` rise.
Two-element clusters ``{r, v}`` are kept as pseudo-triplets: they never enter
the model but block overlapping selections in the greedy pass.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

from .csp import CspInstance, DeletionTrace, ac3, build_csp, fix_label, minimal_trace, restrict_to_ball
from .model import Relaxation

Cluster = frozenset  # 3 variables: genuine triplet, 2 variables: pseudo-triplet

EPS_INIT = 0.1
DMAX_INIT = 3
EPS_FLOOR = 1e-6


@dataclass
class NodeClusters:
    genuine: set[Cluster] = field(default_factory=set)
    pseudo: set[Cluster] = field(default_factory=set)
    failing: list[int] = field(default_factory=list)   # L_r
    domain: list[int] = field(default_factory=list)    # Y_r in the closure

    @property
    def items(self) -> set[Cluster]:
        return self.genuine | self.pseudo

    @property
    def all_fail(self) -> bool:
        return bool(self.domain) and self.failing == self.domain


@dataclass
class TripletSet:
    genuine: set[Cluster] = field(default_factory=set)
    pseudo: set[Cluster] = field(default_factory=set)
    per_node: dict[int, NodeClusters] = field(default_factory=dict)
    selected: list[int] = field(default_factory=list)
    closure_wipeout: bool = False

    @property
    def items(self) -> set[Cluster]:
        return self.genuine | self.pseudo

    def triplets(self) -> list[tuple[int, int, int]]:
        return sorted(tuple(sorted(t)) for t in self.genuine)

    def new_triplets(self, model: Relaxation) -> list[tuple[int, int, int]]:
        return [t for t in self.triplets() if t not in model]

    def full_nodes(self) -> list[int]:
        """Nodes whose every closure label failed its probe (``L_r = Y_r``)."""
        return sorted(r for r, info in self.per_node.items() if info.all_fail)


def clusters_from_trace(r: int, trace: DeletionTrace) -> tuple[set[Cluster], set[Cluster]]:
    genuine, pseudo = set(), set()
    for rec in trace.records:
        c = frozenset((r, rec.cause_var, rec.var))
        if len(c) == 3:
            genuine.add(c)
        elif len(c) == 2:
            pseudo.add(c)
    return genuine, pseudo


@dataclass
class ProbeResult:
    genuine: set[Cluster]
    pseudo: set[Cluster]
    trace: DeletionTrace | None = None

    def __bool__(self) -> bool:
        return bool(self.genuine or self.pseudo)


def probe(closure: CspInstance, r: int, s: int, d_max: int | None) -> ProbeResult:
    """Fix ``r = s`` in the (ball around ``r`` of the) closure and run AC.

    The queue is seeded with the arcs leaving ``r`` only: the closure is
    already arc consistent, so fixing can only invalidate those, and the
    FIFO order then spreads out breadth-first from ``r``.
    """
    inst = fix_label(restrict_to_ball(closure, r, d_max), r, s)
    seeds = [(v, r) for v in sorted(inst.neighbors()[r])]
    _, trace = ac3(inst, seeds=seeds)
    if not trace.wipeout:
        return ProbeResult(set(), set())
    trace = minimal_trace(trace)
    genuine, pseudo = clusters_from_trace(r, trace)
    return ProbeResult(genuine, pseudo, trace)


def greedy_select(groups: Iterable[tuple[object, set[Cluster]]],
                  accumulator: set[Cluster]) -> tuple[set[Cluster], list]:
    """Add each group's clusters when they are disjoint from everything taken so far."""
    taken = set(accumulator)
    chosen = []
    for key, items in groups:
        if not items or taken & items:
            continue
        taken |= items
        chosen.append(key)
    return taken, chosen


def _split(items: set[Cluster]) -> tuple[set[Cluster], set[Cluster]]:
    return {c for c in items if len(c) == 3}, {c for c in items if len(c) == 2}


def find_triplets(model: Relaxation, eps: float, d_max: int | None = DMAX_INIT,
                  seed: TripletSet | None = None) -> TripletSet:
    """Probe every closure label at threshold ``eps`` and select disjoint clusters.

    ``seed`` initializes the greedy accumulator (the previous schedule round).
    ``d_max=None`` disables the depth bound.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    closure, base = ac3(build_csp(model, eps))
    result = TripletSet()
    if seed is not None:
        result.genuine |= seed.genuine
        result.pseudo |= seed.pseudo
    if base.wipeout:
        result.closure_wipeout = True
        return result

    for r in closure.variables:
        info = NodeClusters(domain=closure.labels(r))
        for s in info.domain:
            found = probe(closure, r, s, d_max)
            if found:
                info.failing.append(s)
                info.genuine |= found.genuine
                info.pseudo |= found.pseudo
        result.per_node[r] = info

    order = sorted(result.per_node,
                   key=lambda r: (not result.per_node[r].all_fail,
                                  len(result.per_node[r].genuine), r))
    taken, chosen = greedy_select(((r, result.per_node[r].items) for r in order),
                                  result.items)
    result.genuine, result.pseudo = _split(taken)
    result.selected = chosen
    return result


Finder = Callable[[Relaxation, float, "int | None", "TripletSet | None"], TripletSet]


@dataclass
class ScheduleState:
    eps: float = EPS_INIT
    d_max: int = DMAX_INIT
    history: list[tuple[float, int]] = field(default_factory=list)

    def __post_init__(self):
        if self.eps <= 0 or self.d_max < 1:
            raise ValueError("eps must be positive and d_max >= 1")


def schedule_step(state: ScheduleState, model: Relaxation,
                  finder: Finder = find_triplets,
                  eps_init: float = EPS_INIT) -> tuple[TripletSet, ScheduleState]:
    """Run the finder at ``eps, eps/2, eps/4, ...`` until the new-triplet count stops doubling.

    Counts are cumulative because each round starts from the previous
    round's selection.  Stops at the first round ``i >= 1`` with
    ``k_i < 2 k_{i-1}`` and returns round ``i-1``.  If the threshold drops
    below ``1e-6`` first, the depth bound grows by one and ``eps`` resets.
    """
    history: list[tuple[float, int]] = []
    prev: TripletSet | None = None
    prev_k = 0
    i = 0
    while True:
        eps_i = state.eps * 2.0 ** -i
        if eps_i < EPS_FLOOR:
            new_state = ScheduleState(eps_init, state.d_max + 1, state.history + history)
            return (prev if prev is not None else TripletSet()), new_state
        current = finder(model, eps_i, state.d_max, prev)
        k = len(current.new_triplets(model))
        history.append((eps_i, k))
        if i >= 1 and k < 2 * prev_k:
            new_state = ScheduleState(state.eps * 2.0 ** -(i - 1), state.d_max,
                                      state.history + history)
            return prev, new_state
        prev, prev_k = current, k
        i += 1
