"""Brute-force references and instance generators.

Everything here deliberately avoids the solver code paths: energies are
built by broadcasting raw tables, AC is a full-rescan fixpoint of the two
deletion rules, and cycles are enumerated by plain DFS.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .csp import CspInstance
from .frustrated import FrustratedCycle, SignedPartitionGraph, canonical_cycle
from .model import Relaxation, build_model

BRUTE_LIMIT = 10 ** 7

# committed seed list for the randomized property suites
SEEDS = tuple(range(1000))


@dataclass
class OracleResult:
    minimum: float
    argmin: tuple[int, ...]
    count: int


def energy_table(model: Relaxation) -> np.ndarray:
    """Energy of every labeling as an ``n``-dimensional array."""
    count = int(np.prod(model.domain_sizes, dtype=np.int64)) if model.num_vars else 1
    if count > BRUTE_LIMIT:
        raise ValueError(f"{count} labelings exceed the enumeration limit {BRUTE_LIMIT}")
    total = np.zeros(model.domain_sizes)
    n = model.num_vars
    for f in model.factors:
        shape = [1] * n
        for v in f.scope:
            shape[v] = model.domain_sizes[v]
        total = total + f.costs.reshape(shape)
    return total


def brute_min(model: Relaxation) -> OracleResult:
    table = energy_table(model)
    flat = int(np.argmin(table))
    argmin = tuple(int(i) for i in np.unravel_index(flat, table.shape))
    return OracleResult(float(table.flat[flat]), argmin, int(table.size))


def csp_satisfiable(model: Relaxation, eps: float = 0.0) -> bool:
    """Whether some labeling is within ``eps`` of the minimum on every factor (all orders)."""
    n = model.num_vars
    ok = np.ones(model.domain_sizes, dtype=bool)
    for f in model.factors:
        shape = [1] * n
        for v in f.scope:
            shape[v] = model.domain_sizes[v]
        ok = ok & (f.costs <= f.costs.min() + eps).reshape(shape)
    return bool(ok.any())


def naive_ac_fixpoint(instance: CspInstance) -> CspInstance:
    """Apply the two AC deletion rules by full rescans until nothing changes."""
    inst = instance.copy()
    changed = True
    while changed:
        changed = False
        for (u, v), rel in inst.relations.items():
            for a in range(rel.shape[0]):
                for b in range(rel.shape[1]):
                    if rel[a, b] and (not inst.domains[u][a] or not inst.domains[v][b]):
                        rel[a, b] = False
                        changed = True
        for (u, v), rel in inst.relations.items():
            for a in range(rel.shape[0]):
                if inst.domains[u][a] and not rel[a, :].any():
                    inst.domains[u][a] = False
                    changed = True
            for b in range(rel.shape[1]):
                if inst.domains[v][b] and not rel[:, b].any():
                    inst.domains[v][b] = False
                    changed = True
    return inst


def all_frustrated_cycles(graph: SignedPartitionGraph, max_len: int,
                          limit: int | None = None) -> list[FrustratedCycle]:
    """Every simple cycle of length ``<= max_len`` with an odd number of negative edges.

    Each cycle is reported once, starting at its smallest node id.  Cycles
    whose projection repeats a variable are kept (they are frustrated cycles
    of the partition graph all the same).
    """
    neg = {}
    adj: dict[int, list[int]] = {p.id: [] for p in graph.nodes}
    for i, j, w in graph.edges:
        adj[i].append(j)
        adj[j].append(i)
        neg[(i, j)] = neg[(j, i)] = w < 0
    found: list[FrustratedCycle] = []
    seen = set()

    def dfs(start, path, on_path, parity):
        x = path[-1]
        for y in adj[x]:
            if limit is not None and len(found) >= limit:
                return
            if y == start and len(path) >= 3:
                if parity ^ neg[(x, y)]:
                    key = canonical_cycle(path)
                    if key not in seen:
                        seen.add(key)
                        variables = tuple(graph.nodes[i].var for i in path)
                        proj = canonical_cycle(variables) if len(set(variables)) == len(variables) \
                            else variables
                        found.append(FrustratedCycle(tuple(path), proj,
                                                     _count_neg(path, neg)))
                continue
            if y <= start or y in on_path or len(path) >= max_len:
                continue
            path.append(y)
            on_path.add(y)
            dfs(start, path, on_path, parity ^ neg[(x, y)])
            path.pop()
            on_path.discard(y)

    for p in graph.nodes:
        dfs(p.id, [p.id], {p.id}, False)
    return found


def _count_neg(path, neg) -> int:
    k = len(path)
    return sum(neg[(path[i], path[(i + 1) % k])] for i in range(k))


def gen_frustrated(cycle_len: int, labels: int = 2, seed: int = 0) -> Relaxation:
    """Cycle instance whose signed partition graph contains a frustrated cycle.

    Labels 0 and 1 carry a unit-cost core: odd cycles get only repulsive
    edges (equal labels cost 1), even cycles get one attractive edge (unequal
    labels cost 1) and the rest repulsive.  Extra labels ``>= 2`` cost
    between 1 and 2 on every incident pair and a random unary amount, so the
    core partitions keep weights of magnitude 1.
    """
    if cycle_len < 3:
        raise ValueError("cycle_len must be >= 3")
    if labels < 2:
        raise ValueError("labels must be >= 2")
    rng = np.random.default_rng(seed)
    unary = []
    for _ in range(cycle_len):
        t = np.zeros(labels)
        t[2:] = rng.uniform(0.0, 1.0, labels - 2)
        unary.append(t)
    pairwise = {}
    for i in range(cycle_len):
        u, v = i, (i + 1) % cycle_len
        attractive = cycle_len % 2 == 0 and i == cycle_len - 1
        t = rng.uniform(1.0, 2.0, (labels, labels))
        core = np.array([[0.0, 1.0], [1.0, 0.0]]) if attractive else np.array([[1.0, 0.0], [0.0, 1.0]])
        t[:2, :2] = core
        pairwise[(u, v)] = t
    return build_model([labels] * cycle_len, unary, pairwise)


def random_model(rng: np.random.Generator, n: int | None = None, max_labels: int = 4,
                 density: float = 0.5) -> Relaxation:
    """Uniform ``[0, 1]`` costs on a random graph (``n`` in ``[3, 8]``, labels in ``[2, max_labels]``)."""
    if n is None:
        n = int(rng.integers(3, 9))
    sizes = [int(rng.integers(2, max_labels + 1)) for _ in range(n)]
    unary = [rng.uniform(0, 1, d) for d in sizes]
    pairwise = {}
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < density:
                pairwise[(u, v)] = rng.uniform(0, 1, (sizes[u], sizes[v]))
    return build_model(sizes, unary, pairwise)


def random_csp(rng: np.random.Generator, n: int | None = None, max_labels: int = 4,
               density: float = 0.5, p_allowed: float = 0.6) -> CspInstance:
    if n is None:
        n = int(rng.integers(2, 9))
    sizes = tuple(int(rng.integers(1, max_labels + 1)) for _ in range(n))
    domains = [rng.random(d) < 0.85 for d in sizes]
    relations = {}
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < density:
                relations[(u, v)] = rng.random((sizes[u], sizes[v])) < p_allowed
    return CspInstance(sizes, tuple(range(n)), domains, relations)
