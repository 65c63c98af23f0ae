"""Factor-graph data model for pairwise energy minimization.

A :class:`Relaxation` holds the current cost vector (one dense table per
factor) together with the Hasse diagram ``J`` of the factor poset.  Tables
are numpy arrays whose axes follow the factor scope, and scopes are always
sorted by variable id, so a pairwise entry ``(a, b)`` for ``u < v`` sits at
flat position ``a * |X_v| + b``.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np


@dataclass
class Factor:
    scope: tuple[int, ...]
    costs: np.ndarray

    @property
    def order(self) -> int:
        return len(self.scope)

    def copy(self) -> "Factor":
        return Factor(self.scope, self.costs.copy())


class Relaxation:
    """Variables, factors and Hasse edges of a cluster-based LP relaxation.

    Factor ids are append-only. Every variable owns a singleton factor whose
    id equals the variable id.
    """

    def __init__(self, domain_sizes: Sequence[int]):
        self.domain_sizes = tuple(int(d) for d in domain_sizes)
        if any(d < 1 for d in self.domain_sizes):
            raise ValueError("every domain needs at least one label")
        self.factors: list[Factor] = []
        self.hasse_edges: list[tuple[int, int]] = []
        self.factor_index: dict[tuple[int, ...], int] = {}
        self._children: dict[int, list[int]] = {}
        self._parents: dict[int, list[int]] = {}
        self._axis: dict[tuple[int, int], int] = {}
        for v, d in enumerate(self.domain_sizes):
            self._append_factor((v,), np.zeros(d))

    @property
    def num_vars(self) -> int:
        return len(self.domain_sizes)

    def __repr__(self) -> str:
        counts = [0, 0, 0]
        for f in self.factors:
            counts[f.order - 1] += 1
        return (f"Relaxation(vars={self.num_vars}, pairs={counts[1]}, "
                f"triplets={counts[2]}, hasse={len(self.hasse_edges)})")

    # -- structure -------------------------------------------------------

    def shape_of(self, scope: Sequence[int]) -> tuple[int, ...]:
        return tuple(self.domain_sizes[v] for v in scope)

    def find(self, scope: Iterable[int]) -> int | None:
        return self.factor_index.get(tuple(sorted(scope)))

    def __contains__(self, scope) -> bool:
        return self.find(scope) is not None

    def pair_factors(self) -> list[int]:
        return [i for i, f in enumerate(self.factors) if f.order == 2]

    def triplet_factors(self) -> list[int]:
        return [i for i, f in enumerate(self.factors) if f.order == 3]

    def edges(self) -> list[tuple[int, int]]:
        """Scopes of all pairwise factors, including zero pairs added by triplets."""
        return [self.factors[i].scope for i in self.pair_factors()]

    def children(self, fid: int) -> list[int]:
        return self._children.get(fid, [])

    def parents(self, fid: int) -> list[int]:
        return self._parents.get(fid, [])

    def hasse_axis(self, parent: int, child: int) -> int:
        """Axis of the parent table that is marginalized out towards ``child``."""
        return self._axis[(parent, child)]

    def _append_factor(self, scope: tuple[int, ...], costs: np.ndarray) -> int:
        fid = len(self.factors)
        self.factors.append(Factor(scope, np.array(costs, dtype=float)))   # own copy
        self.factor_index[scope] = fid
        if len(scope) > 1:
            for k, v in enumerate(scope):
                sub = scope[:k] + scope[k + 1:]
                child = self.factor_index.get(sub)
                if child is None:
                    continue
                self.hasse_edges.append((fid, child))
                self._children.setdefault(fid, []).append(child)
                self._parents.setdefault(child, []).append(fid)
                self._axis[(fid, child)] = k
        return fid

    def add_pair(self, u: int, v: int, costs=None) -> int:
        """Add pairwise factor ``{u, v}``; returns the existing id if present."""
        self._check_vars((u, v))
        scope = tuple(sorted((u, v)))
        existing = self.factor_index.get(scope)
        if existing is not None:
            return existing
        shape = self.shape_of(scope)
        if costs is None:
            table = np.zeros(shape)
        else:
            table = np.asarray(costs, dtype=float)
            if table.size != shape[0] * shape[1]:
                raise ValueError(f"pair {scope}: table has {table.size} entries, "
                                 f"expected {shape[0] * shape[1]}")
            table = table.reshape(self.shape_of((u, v)))
            if u > v:
                table = table.T
        return self._append_factor(scope, np.ascontiguousarray(table))

    def add_triplet(self, variables: Iterable[int]) -> int:
        """Add a zero-cost triplet factor together with any missing zero pairs.

        Idempotent: an already present triplet is returned unchanged.
        """
        scope = tuple(sorted(variables))
        if len(scope) != 3 or len(set(scope)) != 3:
            raise ValueError(f"triplet needs three distinct variables, got {tuple(variables)}")
        self._check_vars(scope)
        existing = self.factor_index.get(scope)
        if existing is not None:
            return existing
        for u, v in combinations(scope, 2):
            self.add_pair(u, v)
        return self._append_factor(scope, np.zeros(self.shape_of(scope)))

    def _check_vars(self, scope: Sequence[int]) -> None:
        for v in scope:
            if not 0 <= v < self.num_vars:
                raise ValueError(f"variable {v} out of range [0, {self.num_vars})")
        if len(set(scope)) != len(scope):
            raise ValueError(f"repeated variable in scope {tuple(scope)}")

    def copy(self) -> "Relaxation":
        other = Relaxation.__new__(Relaxation)
        other.domain_sizes = self.domain_sizes
        other.factors = [f.copy() for f in self.factors]
        other.hasse_edges = list(self.hasse_edges)
        other.factor_index = dict(self.factor_index)
        other._children = {k: list(v) for k, v in self._children.items()}
        other._parents = {k: list(v) for k, v in self._parents.items()}
        other._axis = dict(self._axis)
        return other

    def costs(self) -> list[np.ndarray]:
        return [f.costs for f in self.factors]

    def set_costs(self, tables: Sequence[np.ndarray]) -> None:
        if len(tables) != len(self.factors):
            raise ValueError("one table per factor required")
        for f, t in zip(self.factors, tables):
            t = np.asarray(t, dtype=float)
            if t.shape != f.costs.shape:
                raise ValueError(f"factor {f.scope}: shape {t.shape} != {f.costs.shape}")
            f.costs = t.copy()

    def check_hasse(self) -> None:
        """Raise AssertionError unless ``hasse_edges`` is exactly the Hasse diagram."""
        expected = set()
        for fid, f in enumerate(self.factors):
            assert len(f.scope) == len(set(f.scope)) and 1 <= len(f.scope) <= 3
            assert list(f.scope) == sorted(f.scope)
            assert f.costs.shape == self.shape_of(f.scope)
            for k in range(len(f.scope)):
                sub = f.scope[:k] + f.scope[k + 1:]
                if not sub:
                    continue
                child = self.factor_index.get(sub)
                if f.order == 3:
                    assert child is not None, f"triplet {f.scope} misses subset {sub}"
                if child is not None:
                    expected.add((fid, child))
        assert len(self.factor_index) == len(self.factors), "duplicate scopes"
        assert set(self.hasse_edges) == expected
        assert len(self.hasse_edges) == len(expected)


def build_model(domain_sizes: Sequence[int],
                unary_costs: Sequence | None = None,
                pairwise_costs: Mapping[tuple[int, int], object] | None = None) -> Relaxation:
    """Build the base relaxation with factors ``V ∪ E``.

    ``pairwise_costs`` maps an edge ``(u, v)`` to a ``|X_u| x |X_v|`` table
    (nested or flat, row-major in the given orientation).
    """
    model = Relaxation(domain_sizes)
    if unary_costs is not None:
        if len(unary_costs) != model.num_vars:
            raise ValueError(f"expected {model.num_vars} unary tables, got {len(unary_costs)}")
        for v, table in enumerate(unary_costs):
            if table is None:
                continue
            table = np.asarray(table, dtype=float).ravel()
            if table.size != model.domain_sizes[v]:
                raise ValueError(f"unary table of variable {v} has {table.size} "
                                 f"entries, expected {model.domain_sizes[v]}")
            model.factors[v].costs = table.copy()
    for (u, v), table in (pairwise_costs or {}).items():
        if u == v:
            raise ValueError(f"self-loop on variable {u}")
        if (min(u, v), max(u, v)) in model.factor_index:
            raise ValueError(f"duplicate edge {(u, v)}")
        model.add_pair(u, v, table)
    return model


def _restrict(factor: Factor, labels: Sequence[int]) -> float:
    return factor.costs[tuple(labels[v] for v in factor.scope)]


def check_labeling(model: Relaxation, labels: Sequence[int]) -> None:
    if len(labels) != model.num_vars:
        raise ValueError(f"labeling has {len(labels)} entries, expected {model.num_vars}")
    for v, (a, d) in enumerate(zip(labels, model.domain_sizes)):
        if not 0 <= a < d:
            raise ValueError(f"label {a} of variable {v} outside [0, {d})")


def evaluate(model: Relaxation, labels: Sequence[int]) -> float:
    """Energy ``sum_alpha theta_alpha(x_alpha)`` of a full labeling."""
    check_labeling(model, labels)
    return float(sum(_restrict(f, labels) for f in model.factors))


def lower_bound(model: Relaxation) -> float:
    """Sum of per-factor minima; a lower bound on the optimal energy."""
    return float(sum(f.costs.min() for f in model.factors))
