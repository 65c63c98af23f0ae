import numpy as np
import pytest

from mapt.certificate import (CertificateDag, DagNode, DELETED, branching_factors, build_certificate,
                              build_dag, certify_probe, contract, emit_messages, flows_for,
                              theorem_trace, trace_triplets, verify_certificate)
from mapt.csp import ac3, build_csp, fix_label, minimal_trace
from mapt.model import build_model
from mapt.oracle import gen_frustrated, random_model
from mapt.reparam import MessageVector, solve_dual
from mapt.sac import find_triplets


def augmented(model, trace):
    aug = model.copy()
    for t in trace_triplets(trace):
        aug.add_triplet(t)
    return aug


def cycle_trace(model, eps=0.5):
    """Trace that winds once around the cycle 0-1-...-(n-1)-0 starting at r = 0, s = 0."""
    _, trace = ac3(fix_label(build_csp(model, eps), 0, 0), seeds=[(1, 0)])
    return minimal_trace(trace)


def fan_model():
    """Deleting label 0 at variable 1 removes labels at 2 and 3, which empty variable 4 from two sides."""
    return build_model([2] * 5, None, {
        (0, 1): [[1, 0], [0, 0]],
        (1, 2): [[0, 0], [1, 0]],
        (1, 3): [[0, 0], [1, 0]],
        (2, 4): [[0, 0], [1, 0]],
        (3, 4): [[0, 0], [0, 1]],
    })


def test_dag_of_fc3_cycle_is_a_path(fc3):
    dag = build_dag(cycle_trace(fc3), fc3, 0.5)
    assert [(n.var, n.label) for n in dag.nodes] == [(1, 0), (2, 1), (0, 0)]
    assert dag.edges == {(0, 1), (1, 2)}
    assert dag.sink == 2


def test_single_deletion_dag():
    m = build_model([2, 2], None, {(0, 1): [[1, 1], [0, 0]]})
    trace = theorem_trace(m, 0.5, 0, 0)
    assert [(r.var, r.label, r.cause_var) for r in trace.records] == [(0, 0, 1)]
    dag = build_dag(trace, m, 0.5)
    assert len(dag.nodes) == 1 and not dag.edges
    cert = build_certificate(m, trace, 0.5)
    assert cert.guaranteed == 0.5
    assert verify_certificate(m, cert.messages, 0, 0, 0.5).passed


def test_two_deletions_feed_the_sink():
    m = fan_model()
    trace = theorem_trace(m, 0.4, 0, 0)
    dag = build_dag(trace, m, 0.4)
    into_sink = [a for a, b in dag.edges if b == dag.sink]
    assert sorted(dag.nodes[a].var for a in into_sink) == [4, 4]


def test_build_dag_rejects_bad_traces(fc3):
    _, trace = ac3(build_csp(fc3, 0.5))
    with pytest.raises(ValueError):
        build_dag(trace)


def test_contract_cycle_dag_is_a_path(fc3):
    trace = theorem_trace(fc3, 0.5, 0, 0)         # default FIFO: two labels deleted at variable 2
    g2 = contract(build_dag(trace, fc3, 0.5))
    assert len(g2.groups) == 3
    assert sorted(len(g) for g in g2.groups) == [1, 1, 2]
    B, top = branching_factors(g2)
    assert set(B.values()) == {1} and top == 1


def test_contract_noop_when_one_node_per_owner(fc3):
    dag = build_dag(cycle_trace(fc3), fc3, 0.5)
    assert len(contract(dag).groups) == len(dag.nodes)


def test_contract_never_merges_across_owners():
    for seed in range(60):
        m = random_model(np.random.default_rng(seed))
        for r in range(m.num_vars):
            trace = theorem_trace(m, 0.1, r, 0)
            if trace is None:
                continue
            g2 = contract(build_dag(trace, m, 0.1))
            preds = g2.predecessors()
            for gi, g in enumerate(g2.groups):
                assert len({g2.nodes[i].var for i in g}) == 1
                assert len({g2.group_var(p) for p in preds[gi]}) <= 1
            branching_factors(g2)            # raises on cycles / several sinks
            assert g2.sink_group == g2.group_of()[g2.sink]


def test_branching_examples():
    m = fan_model()
    g2 = contract(build_dag(theorem_trace(m, 0.4, 0, 0), m, 0.4))
    B, top = branching_factors(g2)
    at_1 = [gi for gi in B if g2.group_var(gi) == 1]
    assert top == 2 and [B[gi] for gi in at_1] == [2]
    single = CertificateDag((0, 0), [DagNode(0, 0, 0, DELETED, 0, 1)], set(), 0)
    assert branching_factors(single) == ({0: 1}, 1)


def test_branching_rejects_cycles_and_multiple_sinks():
    nodes = [DagNode(i, i, 0, DELETED, i, 0) for i in range(3)]
    with pytest.raises(ValueError):
        branching_factors(CertificateDag((0, 0), nodes, {(0, 1), (1, 0), (1, 2)}, 2))
    with pytest.raises(ValueError):
        branching_factors(CertificateDag((0, 0), nodes, {(0, 2)}, 2))


def test_fc3_certificate(fc3):
    for trace in (cycle_trace(fc3), theorem_trace(fc3, 0.5, 0, 0)):
        aug = augmented(fc3, trace)
        cert = build_certificate(aug, trace, 0.5)
        assert cert.guaranteed == 0.5
        rep = verify_certificate(aug, cert.messages, 0, 0, cert.guaranteed)
        assert rep.passed, rep.to_text()
        assert rep.increase == pytest.approx(0.5, abs=1e-12)


def test_branching_certificate_halves_the_increase():
    m = fan_model()
    trace = theorem_trace(m, 0.4, 0, 0)
    aug = augmented(m, trace)
    cert = build_certificate(aug, trace, 0.4)
    assert cert.max_branching == 2 and cert.guaranteed == pytest.approx(0.2)
    rep = verify_certificate(aug, cert.messages, 0, 0, cert.guaranteed)
    assert rep.passed, rep.to_text()


def test_missing_triplet_is_an_error(fc3):
    with pytest.raises(ValueError, match="missing"):
        build_certificate(fc3, cycle_trace(fc3), 0.5)


def test_zero_messages_fail_only_the_increase(fc3):
    fc3.add_triplet((0, 1, 2))
    rep = verify_certificate(fc3, MessageVector(fc3), 0, 0, 0.5)
    assert rep.minima_ok and rep.energy_ok and not rep.increase_ok and not rep.passed


def test_inflated_amount_breaks_a_minimum(fc3):
    trace = cycle_trace(fc3)
    aug = augmented(fc3, trace)
    dag = contract(build_dag(trace, aug, 0.5))
    flows, _ = flows_for(dag, 0.5)
    # the deletion at variable 2 (caused by 1) pushes down an inactive pair of cost 1
    target = dag.group_of()[next(n.id for n in dag.nodes if n.var == 2)]
    flows[target] = 2.0
    rep = verify_certificate(aug, emit_messages(aug, dag, flows, 0.5), 0, 0, 0.5)
    assert not rep.minima_ok and rep.energy_ok


def test_doubling_mode(fc3):
    trace = cycle_trace(fc3)
    aug = augmented(fc3, trace)
    cert = build_certificate(aug, trace, 0.5, mode="doubling")
    assert cert.guaranteed == 0.5 / 8
    assert verify_certificate(aug, cert.messages, 0, 0, cert.guaranteed).passed
    with pytest.raises(ValueError):
        build_certificate(aug, trace, 0.5, mode="other")


@pytest.mark.parametrize("length", [3, 5, 7, 9])
def test_cycle_traces_give_full_eps(length):
    m = gen_frustrated(length, 2, seed=length)
    trace = cycle_trace(m, 0.1)
    assert [rec.var for rec in trace.records] == list(range(1, length)) + [0]
    aug = augmented(m, trace)
    cert = build_certificate(aug, trace, 0.1)
    rep = verify_certificate(aug, cert.messages, 0, 0, cert.guaranteed)
    assert rep.passed and abs(rep.increase - 0.1) <= 1e-9


def test_certificates_for_sac_probes():
    checked = 0
    for seed in range(100):
        m = random_model(np.random.default_rng(seed), density=0.8)
        solve_dual(m, 50)
        res = find_triplets(m, 0.1)
        for r in res.selected[:1]:
            s = res.per_node[r].failing[0]
            rep = certify_probe(m, 0.1, r, s, 3)
            assert rep is not None and rep.passed, rep and rep.to_text()
            assert rep.guaranteed > 0
            checked += 1
    assert checked >= 50
