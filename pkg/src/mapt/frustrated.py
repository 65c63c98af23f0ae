"""Frustrated-cycle cluster pursuit on the signed partition graph.

Each label ``a`` within ``eps`` of its unary minimum gives a partition
``({a}, X_v - {a})``.  Two partitions at adjacent variables are joined when
the pairwise table clearly prefers equal (positive edge) or differing
(negative edge) membership.  A cycle with an odd number of negative edges
cannot be satisfied within ``eps`` on all of its edges, so its triangulation
is a useful set of triplets.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import Relaxation
from .sac import Cluster, TripletSet, _split, greedy_select


def edge_weight(theta_uv: np.ndarray, plus_u, plus_v) -> float:
    """``min`` over pairs with differing membership minus ``min`` over pairs with equal membership.

    ``plus_u`` / ``plus_v`` are boolean masks of the ``+`` side of each
    partition, or a single label index for a singleton ``+`` side.
    """
    theta_uv = np.asarray(theta_uv, dtype=float)
    iu = _mask(plus_u, theta_uv.shape[0])
    iv = _mask(plus_v, theta_uv.shape[1])
    equal = iu[:, None] == iv[None, :]
    return float(theta_uv[~equal].min() - theta_uv[equal].min())


def _mask(plus, size: int) -> np.ndarray:
    if isinstance(plus, (int, np.integer)):
        m = np.zeros(size, dtype=bool)
        m[plus] = True
        return m
    m = np.asarray(plus, dtype=bool)
    if m.all() or not m.any():
        raise ValueError("both sides of a partition must be non-empty")
    return m


@dataclass(frozen=True)
class Partition:
    id: int
    var: int
    label: int   # the singleton + side


@dataclass
class SignedPartitionGraph:
    nodes: list[Partition]
    edges: list[tuple[int, int, float]]   # (i, j, w) with i < j and |w| > eps
    eps: float
    adjacency: dict[int, list[tuple[int, bool]]] = field(default_factory=dict)

    def __post_init__(self):
        self.adjacency = {p.id: [] for p in self.nodes}
        for i, j, w in self.edges:
            self.adjacency[i].append((j, w < 0))
            self.adjacency[j].append((i, w < 0))
        for lst in self.adjacency.values():
            lst.sort()

    def is_negative(self, i: int, j: int) -> bool:
        for k, neg in self.adjacency[i]:
            if k == j:
                return neg
        raise KeyError((i, j))

    @property
    def num_negative(self) -> int:
        return sum(w < 0 for _, _, w in self.edges)


def build_signed_graph(model: Relaxation, eps: float) -> SignedPartitionGraph:
    if eps <= 0:
        raise ValueError("eps must be positive")
    nodes: list[Partition] = []
    by_var: dict[int, list[Partition]] = {}
    for v in range(model.num_vars):
        if model.domain_sizes[v] < 2:
            continue
        t = model.factors[v].costs
        for a in np.flatnonzero(t <= t.min() + eps):
            p = Partition(len(nodes), v, int(a))
            nodes.append(p)
            by_var.setdefault(v, []).append(p)
    edges = []
    for fid in model.pair_factors():
        f = model.factors[fid]
        u, v = f.scope
        for pu in by_var.get(u, []):
            for pv in by_var.get(v, []):
                w = edge_weight(f.costs, pu.label, pv.label)
                if abs(w) > eps:
                    i, j = sorted((pu.id, pv.id))
                    edges.append((i, j, w))
    edges.sort()
    return SignedPartitionGraph(nodes, edges, eps)


@dataclass
class FrustratedCycle:
    nodes: tuple[int, ...]        # partition ids in cycle order
    variables: tuple[int, ...]    # projected cycle, canonical rotation/reflection
    negatives: int

    def __len__(self) -> int:
        return len(self.variables)

    def edges(self) -> list[Cluster]:
        k = len(self.variables)
        return [frozenset((self.variables[i], self.variables[(i + 1) % k])) for i in range(k)]


def canonical_cycle(seq: Sequence[int]) -> tuple[int, ...]:
    """Rotation putting the smallest element first, direction with the smaller second element."""
    seq = list(seq)
    i = seq.index(min(seq))
    fwd = seq[i:] + seq[:i]
    bwd = [fwd[0]] + fwd[1:][::-1]
    return tuple(min(fwd, bwd))


def _make_cycle(graph: SignedPartitionGraph, path: list[int]) -> FrustratedCycle | None:
    variables = [graph.nodes[i].var for i in path]
    if len(set(variables)) != len(variables):
        return None
    k = len(path)
    neg = sum(graph.is_negative(path[i], path[(i + 1) % k]) for i in range(k))
    return FrustratedCycle(tuple(path), canonical_cycle(variables), neg)


def _bfs_tree(graph: SignedPartitionGraph, root: int, depth_limit: int | None,
              parent: dict[int, int], depth: dict[int, int], parity: dict[int, int]) -> list[int]:
    parent[root] = -1
    depth[root] = 0
    parity[root] = 0
    order = [root]
    queue = deque([root])
    while queue:
        x = queue.popleft()
        if depth_limit is not None and depth[x] >= depth_limit:
            continue
        for y, neg in graph.adjacency[x]:
            if y not in depth:
                parent[y] = x
                depth[y] = depth[x] + 1
                parity[y] = parity[x] ^ int(neg)
                order.append(y)
                queue.append(y)
    return order


def _fundamental_cycle(x: int, y: int, parent: dict[int, int], depth: dict[int, int]) -> list[int]:
    left, right = [x], [y]
    a, b = x, y
    while depth[a] > depth[b]:
        a = parent[a]
        left.append(a)
    while depth[b] > depth[a]:
        b = parent[b]
        right.append(b)
    while a != b:
        a, b = parent[a], parent[b]
        left.append(a)
        right.append(b)
    # left ends at the lca, right ends at the lca too
    return left + right[-2::-1]


def _tree_cycles(graph, nodes_in_tree, parent, depth, parity) -> list[FrustratedCycle]:
    found = []
    inside = set(nodes_in_tree)
    for x in nodes_in_tree:
        for y, neg in graph.adjacency[x]:
            if y <= x or y not in inside:
                continue
            if parent.get(y) == x or parent.get(x) == y:
                continue
            if parity[x] ^ parity[y] ^ int(neg):
                cycle = _make_cycle(graph, _fundamental_cycle(x, y, parent, depth))
                if cycle is not None:
                    found.append(cycle)
    return found


def find_cycles_fr1(graph: SignedPartitionGraph) -> list[FrustratedCycle]:
    """All frustrated fundamental cycles of one BFS spanning forest."""
    parent: dict[int, int] = {}
    depth: dict[int, int] = {}
    parity: dict[int, int] = {}
    cycles = []
    for p in graph.nodes:
        if p.id in depth:
            continue
        order = _bfs_tree(graph, p.id, None, parent, depth, parity)
        cycles.extend(_tree_cycles(graph, order, parent, depth, parity))
    return cycles


def find_cycles_fr(graph: SignedPartitionGraph, d_max: int | None) -> list[FrustratedCycle]:
    """Frustrated fundamental cycles of a depth-``d_max`` BFS tree from every node.

    Deduplicated by projected variable cycle; the first partition path found
    for a projection is kept.
    """
    if d_max is not None and d_max < 1:
        raise ValueError("d_max must be >= 1")
    seen: dict[tuple[int, ...], FrustratedCycle] = {}
    for p in graph.nodes:
        parent: dict[int, int] = {}
        depth: dict[int, int] = {}
        parity: dict[int, int] = {}
        order = _bfs_tree(graph, p.id, d_max, parent, depth, parity)
        for cycle in _tree_cycles(graph, order, parent, depth, parity):
            seen.setdefault(cycle.variables, cycle)
    return list(seen.values())


def triangulate(cycle: Sequence[int]) -> list[tuple[int, int, int]]:
    """Fan triangulation anchored at the first vertex."""
    cycle = list(cycle)
    k = len(cycle)
    if k < 3:
        raise ValueError("a cycle needs at least three vertices")
    if len(set(cycle)) != k:
        raise ValueError("cycle vertices must be distinct")
    return [tuple(sorted((cycle[0], cycle[i], cycle[i + 1]))) for i in range(1, k - 1)]


def find_triplets_fr(model: Relaxation, eps: float, d_max: int | None = 3,
                     seed: TripletSet | None = None, variant: str = "fr") -> TripletSet:
    """Frustrated-cycle counterpart of :func:`mapt.sac.find_triplets`.

    Every cycle contributes its triangulation as genuine triplets and its
    edges as pseudo-triplets; cycles are taken shortest first through the
    same disjointness filter.
    """
    graph = build_signed_graph(model, eps)
    if variant == "fr1":
        cycles = find_cycles_fr1(graph)
    elif variant == "fr":
        cycles = find_cycles_fr(graph, d_max)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    by_proj = {c.variables: c for c in cycles}
    ordered = sorted(by_proj.values(), key=lambda c: (len(c), c.variables))
    result = TripletSet()
    if seed is not None:
        result.genuine |= seed.genuine
        result.pseudo |= seed.pseudo
    groups = []
    for c in ordered:
        items = {frozenset(t) for t in triangulate(c.variables)} | set(c.edges())
        groups.append((c.variables, items))
    taken, chosen = greedy_select(groups, result.items)
    result.genuine, result.pseudo = _split(taken)
    result.selected = chosen
    return result


def fr_finder(variant: str):
    def finder(model, eps, d_max, seed):
        return find_triplets_fr(model, eps, d_max, seed, variant=variant)
    finder.__name__ = f"find_triplets_{variant}"
    return finder
