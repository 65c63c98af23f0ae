"""Explicit reparameterizations certifying that an AC wipeout tightens the bound.

Given a minimal deletion trace of a probe ``r = s`` on ``CSP_eps``, the labels
deleted along the way form a DAG (a deleted label points to every later
deletion caused from its own variable).  Contracting that DAG and computing
branching factors fixes how much cost each deleted label can pass on; the
resulting message vector raises ``theta_r(s)`` by ``eps / max B`` while no
factor minimum drops.

Labels that were outside the initial domain because of their unary cost act
as extra DAG sources: their unary slack is released into the ``{r, u}`` pair.
Deletions caused directly by ``r`` need no moves: the pair entry ``(s, a)``
is already more than ``eps`` above its minimum.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .csp import DeletionTrace, ac3, build_csp, fix_label, minimal_trace, restrict_to_ball
from .model import Relaxation, evaluate
from .reparam import MessageVector, apply_messages

DELETED, SOURCE = "deleted", "source"


@dataclass(frozen=True)
class DagNode:
    id: int
    var: int
    label: int
    kind: str
    record: int | None = None      # trace index for deleted labels
    cause_var: int | None = None


@dataclass
class CertificateDag:
    root: tuple[int, int]
    nodes: list[DagNode]
    edges: set[tuple[int, int]]
    sink: int
    groups: list[frozenset[int]] = field(default_factory=list)
    group_edges: set[tuple[int, int]] = field(default_factory=set)

    def __post_init__(self):
        if not self.groups:
            self.groups = [frozenset([n.id]) for n in self.nodes]
            self.group_edges = set(self.edges)

    def group_of(self) -> dict[int, int]:
        return {nid: gi for gi, g in enumerate(self.groups) for nid in g}

    @property
    def sink_group(self) -> int:
        return self.group_of()[self.sink]

    def group_var(self, gi: int) -> int:
        return self.nodes[next(iter(self.groups[gi]))].var

    def successors(self) -> dict[int, set[int]]:
        out = {gi: set() for gi in range(len(self.groups))}
        for a, b in self.group_edges:
            out[a].add(b)
        return out

    def predecessors(self) -> dict[int, set[int]]:
        inn = {gi: set() for gi in range(len(self.groups))}
        for a, b in self.group_edges:
            inn[b].add(a)
        return inn


def _active_pair(model: Relaxation, u: int, a: int, v: int, b: int, eps: float) -> bool:
    fid = model.find((u, v))
    if fid is None:
        return True   # absent pair = all-zero table
    t = model.factors[fid].costs
    idx = (a, b) if u < v else (b, a)
    return bool(t[idx] <= t.min() + eps)


def build_dag(trace: DeletionTrace, model: Relaxation | None = None,
              eps: float | None = None) -> CertificateDag:
    """Deletion DAG of a minimal trace ending with ``s`` deleted at ``r``.

    With ``model`` and ``eps`` given, unary-inactive labels that form an
    active pair with a deletion they should have supported are added as
    source nodes.
    """
    if trace.fixed is None or not trace.records:
        raise ValueError("trace must come from a probe with a fixed label")
    r, s = trace.fixed
    last = trace.records[-1]
    if (last.var, last.label) != (r, s):
        raise ValueError(f"trace must end with the deletion of {s} at {r}")
    records = [rec for rec in trace.records if rec.var != r] + [last]
    nodes = [DagNode(i, rec.var, rec.label, DELETED, rec.index, rec.cause_var)
             for i, rec in enumerate(records)]
    edges = {(i, j) for j, nj in enumerate(nodes) for i in range(j)
             if nodes[i].var == nj.cause_var}

    if model is not None and eps is not None:
        deleted = {(n.var, n.label) for n in nodes}
        sources: dict[tuple[int, int], int] = {}
        initial = trace.initial
        for nj in list(nodes):
            u = nj.cause_var
            if u == r:
                continue
            for b in range(model.domain_sizes[u]):
                if (u, b) in deleted or (u, b) in sources:
                    continue
                if initial is not None and initial.domains[u][b]:
                    continue
                if not _active_pair(model, u, b, nj.var, nj.label, eps):
                    continue
                sources[(u, b)] = len(nodes)
                nodes.append(DagNode(len(nodes), u, b, SOURCE))
        for (u, b), sid in sources.items():
            for nj in nodes:
                if nj.kind == DELETED and nj.cause_var == u:
                    edges.add((sid, nj.id))
    return CertificateDag((r, s), nodes, edges, sink=len(records) - 1)


def _reaches(succ: dict[int, set[int]], a: int, b: int) -> bool:
    stack, seen = [a], {a}
    while stack:
        x = stack.pop()
        for y in succ[x]:
            if y == b:
                return True
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return False


def contract(dag: CertificateDag) -> CertificateDag:
    """Greedily merge same-variable nodes while the merged node keeps single-variable
    in-edges and the graph stays acyclic.

    Candidates are scanned by ``(variable, earliest member)``; source nodes
    count as earliest.  The result depends on this order; any order gives a
    valid certificate.
    """
    node_groups = [set(g) for g in dag.groups]
    g_edges = set(dag.group_edges)

    def key(g):
        ranks = [dag.nodes[i].record if dag.nodes[i].kind == DELETED else -1 for i in g]
        return (dag.nodes[next(iter(g))].var, min(ranks))

    while True:
        order = sorted(range(len(node_groups)), key=lambda gi: key(node_groups[gi]))
        succ = {gi: set() for gi in range(len(node_groups))}
        pred = {gi: set() for gi in range(len(node_groups))}
        for a, b in g_edges:
            succ[a].add(b)
            pred[b].add(a)
        sink_gi = next(gi for gi, g in enumerate(node_groups) if dag.sink in g)
        merged = None
        for x_pos, x in enumerate(order):
            for y in order[x_pos + 1:]:
                if sink_gi in (x, y):
                    continue
                var = dag.nodes[next(iter(node_groups[x]))].var
                if dag.nodes[next(iter(node_groups[y]))].var != var:
                    continue
                incoming = (pred[x] | pred[y]) - {x, y}
                if len({dag.nodes[next(iter(node_groups[c]))].var for c in incoming}) > 1:
                    continue
                if y in succ[x] or x in succ[y] or _reaches(succ, x, y) or _reaches(succ, y, x):
                    continue
                merged = (x, y)
                break
            if merged:
                break
        if merged is None:
            break
        x, y = merged
        node_groups[x] |= node_groups[y]
        remap = {}
        new_groups = []
        for gi, g in enumerate(node_groups):
            if gi == y:
                continue
            remap[gi] = len(new_groups)
            new_groups.append(g)
        remap[y] = remap[x]
        node_groups = new_groups
        g_edges = {(remap[a], remap[b]) for a, b in g_edges if remap[a] != remap[b]}

    return CertificateDag(dag.root, dag.nodes, dag.edges, dag.sink,
                          [frozenset(g) for g in node_groups], g_edges)


def branching_factors(dag: CertificateDag) -> tuple[dict[int, int], int]:
    """``B(S) = 1`` and ``B(A) = sum of B`` over successors; returns ``(B, max B)``."""
    succ = dag.successors()
    sinks = [gi for gi, out in succ.items() if not out]
    if sinks != [dag.sink_group]:
        raise ValueError(f"expected the unique sink {dag.sink_group}, found sinks {sinks}")
    indeg = {gi: 0 for gi in succ}
    for a, b in dag.group_edges:
        indeg[b] += 1
    order, ready = [], [gi for gi, d in indeg.items() if d == 0]
    while ready:
        x = ready.pop()
        order.append(x)
        for y in succ[x]:
            indeg[y] -= 1
            if indeg[y] == 0:
                ready.append(y)
    if len(order) != len(succ):
        raise ValueError("contracted graph has a cycle")
    B: dict[int, int] = {}
    for gi in reversed(order):
        B[gi] = 1 if gi == dag.sink_group else sum(B[c] for c in succ[gi])
    return B, max(B.values())


@dataclass
class Certificate:
    messages: MessageVector
    guaranteed: float
    dag: CertificateDag
    flows: dict[int, float]
    max_branching: int | None = None


def _pair_index(scope: tuple[int, ...], labels: dict[int, int]) -> tuple[int, ...]:
    return tuple(labels[v] for v in scope)


def _require(model: Relaxation, scope) -> int:
    fid = model.find(scope)
    if fid is None:
        raise ValueError(f"factor {tuple(sorted(scope))} missing; add the trace triplets first")
    return fid


def flows_for(dag: CertificateDag, eps: float, mode: str = "branching") -> tuple[dict[int, float], int | None]:
    if mode == "branching":
        B, max_b = branching_factors(dag)
        f_sink = eps / max_b
        return {gi: B[gi] * f_sink for gi in B}, max_b
    if mode == "doubling":
        if len(dag.groups) != len(dag.nodes):
            raise ValueError("doubling mode works on the uncontracted DAG")
        flows = {}
        ranked = sorted((n.record, n.id) for n in dag.nodes if n.kind == DELETED)
        rank = {nid: k for k, (_, nid) in enumerate(ranked)}
        gof = dag.group_of()
        for n in dag.nodes:
            gi = gof[n.id]
            flows[gi] = eps if n.kind == SOURCE else eps * 2.0 ** -(rank[n.id] + 1)
        return flows, None
    raise ValueError(f"unknown mode {mode!r}")


def emit_messages(model: Relaxation, dag: CertificateDag, flows: dict[int, float],
                  eps: float) -> MessageVector:
    """Translate per-group amounts into moves on Hasse edges.

    For a group ``C`` at variable ``v`` with amount ``f`` and a member ``c``
    deleted because of ``u``:

    * pairs ``(a, c)`` with ``a`` not a predecessor are inactive; move ``f``
      from ``theta_uv(a, c)`` up into the triplet ``{r, u, v}``;
    * each predecessor label ``a`` at ``u`` gives ``f`` from ``theta_ru(s, a)``
      to the triplet slice ``(s, a, *)``;
    * ``theta_rv(s, c)`` takes ``f`` back from the triplet slice ``(s, *, c)``.

    Source labels release their amount from the unary into ``theta_ru(*, b)``
    and the sink finally moves ``f_S`` from ``theta_{r u_K}(s, *)`` to ``theta_r(s)``.
    """
    r, s = dag.root
    msgs = MessageVector(model)
    preds_of: dict[int, list[int]] = {n.id: [] for n in dag.nodes}
    for a, b in dag.edges:
        preds_of[b].append(a)

    def check_supports(node: DagNode, pair_var: int, labels_at_u):
        u = node.cause_var
        for a in range(model.domain_sizes[u]):
            if a in labels_at_u:
                continue
            if _active_pair(model, u, a, pair_var, node.label, eps):
                raise ValueError(f"label {node.label} at {node.var}: label {a} at {u} "
                                 "is an active support that was never removed")

    for gi, group in enumerate(dag.groups):
        f = flows[gi]
        members = [dag.nodes[i] for i in group]
        if gi == dag.sink_group:
            (sink,) = members
            u = sink.cause_var
            preds = {dag.nodes[p].label for p in preds_of[sink.id]}
            check_supports(sink, r, preds)
            ru = _require(model, (r, u))
            msgs.add((ru, r), s, f)
            continue
        for node in members:
            if node.kind == SOURCE:
                u = node.var
                ru = _require(model, (r, u))
                msgs.add((ru, u), node.label, -f)
        by_cause: dict[int, list[DagNode]] = {}
        for node in members:
            if node.kind == DELETED:
                by_cause.setdefault(node.cause_var, []).append(node)
        for u, nodes in by_cause.items():
            if u == r:
                for node in nodes:
                    if _active_pair(model, r, s, node.var, node.label, eps):
                        raise ValueError(f"label {node.label} at {node.var} was deleted by "
                                         f"{r} although ({s}, {node.label}) is active")
                continue
            v = nodes[0].var
            tri = _require(model, (r, u, v))
            uv, ru, rv = _require(model, (u, v)), _require(model, (r, u)), _require(model, (r, v))
            pred_labels: set[int] = set()
            for node in nodes:
                preds = {dag.nodes[p].label for p in preds_of[node.id]}
                check_supports(node, v, preds)
                pred_labels |= preds
                idx_rv = _pair_index(model.factors[rv].scope, {r: s, v: node.label})
                msgs.add((tri, rv), idx_rv, f)
                for a in range(model.domain_sizes[u]):
                    if a not in preds:
                        idx_uv = _pair_index(model.factors[uv].scope, {u: a, v: node.label})
                        msgs.add((tri, uv), idx_uv, -f)
            for a in sorted(pred_labels):
                idx_ru = _pair_index(model.factors[ru].scope, {r: s, u: a})
                msgs.add((tri, ru), idx_ru, -f)
    return msgs


def build_certificate(model: Relaxation, trace: DeletionTrace, eps: float,
                      mode: str = "branching") -> Certificate:
    """Reparameterization raising ``theta_r(s)`` after the trace triplets were added.

    ``mode="branching"`` contracts the DAG and uses ``f_A = B(A) eps / max B``;
    ``mode="doubling"`` keeps the raw DAG and halves the amount at every step.
    """
    dag = build_dag(trace, model, eps)
    if mode == "branching":
        dag = contract(dag)
    flows, max_b = flows_for(dag, eps, mode)
    msgs = emit_messages(model, dag, flows, eps)
    return Certificate(msgs, flows[dag.sink_group], dag, flows, max_b)


@dataclass
class CertificateReport:
    r: int
    s: int
    guaranteed: float
    increase: float
    worst_min_drop: float
    max_energy_error: float
    labelings_checked: int
    tol: float = 1e-9

    @property
    def minima_ok(self) -> bool:
        return self.worst_min_drop <= self.tol

    @property
    def increase_ok(self) -> bool:
        return self.increase >= self.guaranteed - self.tol

    @property
    def energy_ok(self) -> bool:
        return self.max_energy_error <= 1e-8

    @property
    def passed(self) -> bool:
        return self.minima_ok and self.increase_ok and self.energy_ok

    def to_text(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"certificate r={self.r} s={self.s}: {status} "
                f"guaranteed={self.guaranteed:.9g} increase={self.increase:.9g} "
                f"min_drop={self.worst_min_drop:.3g} energy_err={self.max_energy_error:.3g} "
                f"labelings={self.labelings_checked}")


ENUMERATE_LIMIT = 200_000


def verify_certificate(model: Relaxation, messages, r: int, s: int, guaranteed: float,
                       tol: float = 1e-9, samples: int = 200, seed: int = 0) -> CertificateReport:
    """Check a message vector against ``model`` (the costs before reparameterization).

    Energies are compared on every labeling when there are at most
    ``ENUMERATE_LIMIT`` of them, otherwise on ``samples`` random labelings.
    """
    after = apply_messages(model, messages)
    drop = max(float(fb.costs.min()) - float(fa.costs.min())
               for fb, fa in zip(model.factors, after.factors))
    increase = float(after.factors[r].costs[s] - model.factors[r].costs[s])
    count = int(np.prod(model.domain_sizes, dtype=np.int64))
    if count <= ENUMERATE_LIMIT:
        from .oracle import energy_table
        err = float(np.max(np.abs(energy_table(after) - energy_table(model)) /
                           (1.0 + np.abs(energy_table(model)))))
        checked = count
    else:
        rng = np.random.default_rng(seed)
        err = 0.0
        for _ in range(samples):
            x = [int(rng.integers(d)) for d in model.domain_sizes]
            e0 = evaluate(model, x)
            err = max(err, abs(evaluate(after, x) - e0) / (1.0 + abs(e0)))
        checked = samples
    return CertificateReport(r, s, guaranteed, increase, drop, err, checked, tol)


def theorem_trace(model: Relaxation, eps: float, r: int, s: int, d_max: int | None = None,
                  seeds: Sequence[tuple[int, int]] | None = None) -> DeletionTrace | None:
    """Minimal trace of fixing ``r = s`` directly in ``CSP_eps`` (no prior closure).

    Returns ``None`` when the probe does not wipe out.
    """
    inst = build_csp(model, eps)
    if not inst.domains[r][s]:
        return None
    inst = fix_label(restrict_to_ball(inst, r, d_max), r, s)
    _, trace = ac3(inst, seeds=seeds)
    if not trace.wipeout:
        return None
    return minimal_trace(trace)


def trace_triplets(trace: DeletionTrace) -> list[tuple[int, int, int]]:
    r, _ = trace.fixed
    out = set()
    for rec in trace.records:
        c = {r, rec.cause_var, rec.var}
        if len(c) == 3:
            out.add(tuple(sorted(c)))
    return sorted(out)


def certify_probe(model: Relaxation, eps: float, r: int, s: int,
                  d_max: int | None = None) -> CertificateReport | None:
    """Build and verify a certificate for one probe on a triplet-augmented copy of ``model``.

    Falls back to the unbounded probe when the depth-limited one does not wipe out.
    """
    trace = theorem_trace(model, eps, r, s, d_max)
    if trace is None and d_max is not None:
        trace = theorem_trace(model, eps, r, s, None)
    if trace is None:
        return None
    aug = model.copy()
    for t in trace_triplets(trace):
        aug.add_triplet(t)
    cert = build_certificate(aug, trace, eps)
    return verify_certificate(aug, cert.messages, r, s, cert.guaranteed)
