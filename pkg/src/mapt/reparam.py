"""Messages, reparameterization and a monotone dual ascent.

The ascent is min-sum diffusion over Hasse edges: for an edge ``(alpha, beta)``
half of the gap between the parent's min-marginal and the child's table is
moved across, which equalizes the two and never lowers the bound.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import Relaxation, lower_bound


class MessageVector:
    """Sparse message vector: one array per Hasse edge, zero when absent."""

    def __init__(self, model: Relaxation):
        self._shapes = {e: model.factors[e[1]].costs.shape for e in model.hasse_edges}
        self.values: dict[tuple[int, int], np.ndarray] = {}

    def __getitem__(self, edge: tuple[int, int]) -> np.ndarray:
        if edge not in self.values:
            if edge not in self._shapes:
                raise KeyError(f"{edge} is not a Hasse edge")
            self.values[edge] = np.zeros(self._shapes[edge])
        return self.values[edge]

    def add(self, edge: tuple[int, int], index, amount: float) -> None:
        self[edge][index] += amount

    def items(self):
        return self.values.items()

    def is_zero(self) -> bool:
        return all(not np.any(v) for v in self.values.values())


def apply_messages(model: Relaxation, messages) -> Relaxation:
    """Return a copy of ``model`` with costs ``theta^lambda``.

    ``messages`` is a :class:`MessageVector` or a mapping from Hasse edge to
    array.  The child gains ``lambda`` and the parent loses it on every
    consistent joint label, so every labeling keeps its energy.
    """
    out = model.copy()
    items = messages.items() if hasattr(messages, "items") else messages
    edges = set(model.hasse_edges)
    for (parent, child), lam in items:
        if (parent, child) not in edges:
            raise ValueError(f"({parent}, {child}) is not a Hasse edge")
        lam = np.asarray(lam, dtype=float)
        if lam.shape != model.factors[child].costs.shape:
            raise ValueError(f"message on ({parent}, {child}) has shape {lam.shape}, "
                             f"expected {model.factors[child].costs.shape}")
        out.factors[child].costs += lam
        axis = model.hasse_axis(parent, child)
        out.factors[parent].costs -= np.expand_dims(lam, axis)
    return out


def diffusion_pass(model: Relaxation) -> Relaxation:
    """One in-place sweep over all Hasse edges in ``(parent, child)`` order."""
    for parent, child in sorted(model.hasse_edges):
        axis = model.hasse_axis(parent, child)
        theta_p = model.factors[parent].costs
        theta_c = model.factors[child].costs
        delta = 0.5 * (theta_p.min(axis=axis) - theta_c)
        theta_c += delta
        theta_p -= np.expand_dims(delta, axis)
    return model


@dataclass
class DualResult:
    bound: float
    passes: int
    trace: list[float] = field(default_factory=list)


def solve_dual(model: Relaxation, max_passes: int, tolerance: float | None = 1e-9,
               sweep: Callable[[Relaxation], object] = diffusion_pass,
               deadline: float | None = None) -> DualResult:
    """Run ``sweep`` until ``max_passes`` or until a pass gains less than ``tolerance``.

    ``tolerance=None`` always runs ``max_passes``; useful right after adding
    triplets, where the first pass can gain nothing before the bound moves.

    ``deadline`` is an absolute ``time.perf_counter()`` value checked between
    passes; the model is always left in a valid reparameterized state.
    """
    if max_passes < 1:
        raise ValueError("max_passes must be >= 1")
    trace: list[float] = []
    prev = lower_bound(model)
    for _ in range(max_passes):
        sweep(model)
        bound = lower_bound(model)
        trace.append(bound)
        gain = bound - prev
        prev = bound
        if tolerance is not None and gain < tolerance:
            break
        if deadline is not None and time.perf_counter() > deadline:
            break
    return DualResult(trace[-1], len(trace), trace)
