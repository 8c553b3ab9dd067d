import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (
    enumerate_distribution,
    net_to_spec,
    random_net,
    reference_em,
)
from qlbn.bayesnet import (
    BayesNet,
    EmConfig,
    Factor,
    _em_initial_cpts,
    classical_prob,
    full_joint,
    learn_em,
    learn_mle,
    marginalize,
    observe_evidence,
)
from qlbn.errors import (
    AllCellsMissing,
    DimensionOverflow,
    InputError,
    MissingCellsPresent,
    QueryIsEvidence,
    UnknownEvidenceVariable,
    ZeroMass,
)
from qlbn.eventlog import ABSENT, MISSING, PRESENT, CaseMatrix
from qlbn.procmine import DagStructure


def chain_dag(*names):
    parents = {n: () if i == 0 else (names[i - 1],) for i, n in enumerate(names)}
    return DagStructure(nodes=tuple(names), parents=parents)


def matrix_of(variables, rows):
    return CaseMatrix(
        tuple(variables),
        np.array(rows, dtype=np.int8),
        tuple(f"c{i}" for i in range(len(rows))),
    )


# the five-row toy dataset behind the worked learning example: parent
# A_FINALIZED, child O_OFFER_SENT
FIG_ROWS = [
    (PRESENT, PRESENT),
    (PRESENT, PRESENT),
    (PRESENT, ABSENT),
    (ABSENT, PRESENT),
    (ABSENT, ABSENT),
]
FIG_VARS = ("A_FINALIZED", "O_OFFER_SENT")
FIG_DAG = chain_dag(*FIG_VARS)


# -- factor indexing ----------------------------------------------------------


@given(
    st.lists(st.integers(min_value=2, max_value=4), min_size=1, max_size=5),
    st.data(),
)
@settings(max_examples=200, deadline=None)
def test_stride_codec_bijective(cards, data):
    names = tuple(f"v{i}" for i in range(len(cards)))
    f = Factor(names, tuple(cards), np.zeros(int(np.prod(cards))))
    size = int(np.prod(cards))
    index = data.draw(st.integers(min_value=0, max_value=size - 1))
    assignment = f.assignment_of(index)
    assert f.index_of(assignment) == index
    assert all(0 <= a < c for a, c in zip(assignment, cards))


def test_stride_layout_first_variable_least_significant():
    f = Factor(("x", "y"), (2, 2), np.array([0.0, 1.0, 2.0, 3.0]))
    assert f.strides == (1, 2)
    assert f.index_of((1, 0)) == 1
    assert f.index_of((0, 1)) == 2
    assert f.tensor()[1, 0] == 1.0
    assert f.tensor()[0, 1] == 2.0


# -- evidence -----------------------------------------------------------------


def test_observe_evidence_single_variable():
    f = Factor(("A",), (2,), np.array([0.3, 0.7]))
    (out,) = observe_evidence([f], {"A": PRESENT})
    assert out.vals.tolist() == [0.3, 0.0]


def test_observe_evidence_empty_identity():
    f = Factor(("A",), (2,), np.array([0.3, 0.7]))
    (out,) = observe_evidence([f], {})
    assert out.vals.tolist() == [0.3, 0.7]


def test_observe_evidence_zeroes_exact_half():
    # CPT over (B, A); evidence A=absent zeroes exactly the A=present
    # half, i.e. stride-enumerated indices 0 and 1
    f = Factor(("B", "A"), (2, 2), np.array([0.1, 0.9, 0.4, 0.6]))
    (out,) = observe_evidence([f], {"A": ABSENT})
    expected = [0.0, 0.0, 0.4, 0.6]
    for idx in range(4):
        b, a = f.assignment_of(idx)
        assert out.vals[idx] == (0.0 if a == PRESENT else expected[idx])


def test_observe_evidence_unknown_variable():
    f = Factor(("A",), (2,), np.array([0.5, 0.5]))
    with pytest.raises(UnknownEvidenceVariable):
        observe_evidence([f], {"B": PRESENT})


# -- joint / marginalization ---------------------------------------------------


def fair_coin(name):
    return Factor((name,), (2,), np.array([0.5, 0.5]))


def test_full_joint_independent_coins():
    joint = full_joint([fair_coin("A"), fair_coin("B")])
    assert joint.vals.tolist() == [0.25, 0.25, 0.25, 0.25]


def test_full_joint_chain_hand_product():
    # child CPT from the worked example (0.67 / 0.33, 0.5 / 0.5) with a
    # 0.6 prior on the parent: joint entry (both present) = 0.6 * 0.67
    parent = Factor(("A",), (2,), np.array([0.6, 0.4]))
    child = Factor(("B", "A"), (2, 2), np.array([0.67, 0.33, 0.5, 0.5]))
    joint = full_joint([parent, child])
    idx = joint.index_of(
        tuple(PRESENT if v in ("A", "B") else ABSENT for v in joint.vars)
    )
    assert joint.vals[idx] == pytest.approx(0.402, abs=1e-12)


def test_full_joint_random_nets_sum_to_one():
    rng = np.random.default_rng(3)
    for _ in range(20):
        net = random_net(rng, int(rng.integers(1, 7)))
        joint = full_joint(net.factors())
        assert joint.vals.sum() == pytest.approx(1.0, abs=1e-9)


def test_full_joint_nineteen_variables():
    factors = [fair_coin(f"v{i}") for i in range(19)]
    joint = full_joint(factors)
    assert joint.vals.size == 524_288


def test_full_joint_dimension_cap():
    factors = [fair_coin(f"v{i}") for i in range(26)]
    with pytest.raises(DimensionOverflow):
        full_joint(factors)
    assert full_joint(factors[:3], cap=3).vals.size == 8
    with pytest.raises(DimensionOverflow):
        full_joint(factors[:4], cap=3)


def test_full_joint_requires_every_child():
    child = Factor(("B", "A"), (2, 2), np.array([0.5, 0.5, 0.5, 0.5]))
    with pytest.raises(InputError):
        full_joint([child])


def test_marginalize_uniform_two_variables():
    joint = full_joint([fair_coin("A"), fair_coin("B")])
    mv = marginalize(joint, "A")
    assert mv.pos.tolist() == [0.25, 0.25]
    assert mv.neg.tolist() == [0.25, 0.25]


def test_marginalize_with_evidence_zeroed_entries():
    factors = observe_evidence([fair_coin("A"), fair_coin("B")], {"B": PRESENT})
    joint = full_joint(factors)
    mv = marginalize(joint, "A", {"B": PRESENT})
    assert mv.pos.tolist() == [0.25, 0.0]
    assert mv.neg.tolist() == [0.25, 0.0]


def test_marginalize_three_variable_layout():
    joint = full_joint([fair_coin("A"), fair_coin("B"), fair_coin("C")])
    mv = marginalize(joint, "A")
    assert mv.pos.shape == (4,)
    assert mv.neg.shape == (4,)


def test_marginalize_query_is_evidence():
    joint = full_joint([fair_coin("A")])
    with pytest.raises(QueryIsEvidence):
        marginalize(joint, "A", {"A": PRESENT})


def test_classical_prob_arithmetic():
    from qlbn.bayesnet import MarginalVectors

    mv = MarginalVectors(pos=np.array([0.2, 0.1]), neg=np.array([0.3, 0.4]))
    dist = classical_prob(mv)
    assert dist.present == pytest.approx(0.3)
    assert dist.absent == pytest.approx(0.7)

    sym = MarginalVectors(pos=np.array([0.1, 0.2]), neg=np.array([0.2, 0.1]))
    assert classical_prob(sym).present == pytest.approx(0.5)

    with pytest.raises(ZeroMass):
        classical_prob(MarginalVectors(pos=np.zeros(2), neg=np.zeros(2)))


# -- inference ----------------------------------------------------------------


def test_infer_root_prior():
    net = BayesNet(
        dag=chain_dag("A"), cpts={"A": Factor(("A",), (2,), np.array([0.3, 0.7]))}
    )
    dist = net.infer("A")
    assert dist.present == pytest.approx(0.3, abs=1e-12)


def test_infer_matches_enumeration_oracle():
    rng = np.random.default_rng(17)
    for _ in range(50):
        net = random_net(rng, 4)
        spec = net_to_spec(net)
        query = str(rng.choice(net.dag.nodes))
        others = [v for v in net.dag.nodes if v != query]
        evidence = {
            v: int(rng.integers(0, 2))
            for v in others
            if rng.random() < 0.4
        }
        got = net.infer(query, evidence)
        want = enumerate_distribution(spec, query, evidence)
        assert got.present == pytest.approx(want[0], abs=1e-10)
        assert got.absent == pytest.approx(want[1], abs=1e-10)


def test_infer_evidence_only_removes_mass():
    rng = np.random.default_rng(23)
    for _ in range(20):
        net = random_net(rng, 5)
        query = str(rng.choice(net.dag.nodes))
        others = [v for v in net.dag.nodes if v != query]
        evidence = {v: int(rng.integers(0, 2)) for v in others[:2]}
        free_joint = full_joint(net.factors())
        cond_joint = full_joint(observe_evidence(net.factors(), evidence))
        mv_free = marginalize(free_joint, query)
        mv_cond = marginalize(cond_joint, query, evidence)
        assert (
            mv_cond.pos.sum() + mv_cond.neg.sum()
            <= mv_free.pos.sum() + mv_free.neg.sum() + 1e-12
        )


# -- MLE ----------------------------------------------------------------------


def test_learn_mle_worked_example():
    net = learn_mle(matrix_of(FIG_VARS, FIG_ROWS), FIG_DAG)
    cpt = net.cpts["O_OFFER_SENT"]
    assert cpt.vals[cpt.index_of((PRESENT, PRESENT))] == pytest.approx(2 / 3)
    assert cpt.vals[cpt.index_of((ABSENT, PRESENT))] == pytest.approx(1 / 3)
    assert cpt.vals[cpt.index_of((PRESENT, ABSENT))] == pytest.approx(0.5)
    assert cpt.vals[cpt.index_of((ABSENT, ABSENT))] == pytest.approx(0.5)
    assert net.cpts["A_FINALIZED"].vals[PRESENT] == pytest.approx(0.6)


def test_learn_mle_deterministic_chain():
    rows = [(PRESENT, PRESENT)] * 4
    net = learn_mle(matrix_of(("A", "B"), rows), chain_dag("A", "B"))
    cpt = net.cpts["B"]
    assert cpt.vals[cpt.index_of((PRESENT, PRESENT))] == 1.0


def test_learn_mle_zero_count_rows_uniform():
    rows = [(PRESENT, PRESENT), (PRESENT, ABSENT)]
    net = learn_mle(matrix_of(("A", "B"), rows), chain_dag("A", "B"))
    cpt = net.cpts["B"]
    assert cpt.vals[cpt.index_of((PRESENT, ABSENT))] == 0.5
    assert cpt.vals[cpt.index_of((ABSENT, ABSENT))] == 0.5


def test_learn_mle_rejects_missing_cells():
    rows = [(PRESENT, MISSING)]
    with pytest.raises(MissingCellsPresent):
        learn_mle(matrix_of(("A", "B"), rows), chain_dag("A", "B"))


def test_learn_mle_root_marginals_match_frequencies():
    rng = np.random.default_rng(29)
    rows = rng.integers(0, 2, size=(200, 3)).astype(np.int8)
    dag = DagStructure(
        nodes=("A", "B", "C"), parents={"A": (), "B": ("A",), "C": ("B",)}
    )
    net = learn_mle(matrix_of(("A", "B", "C"), rows), dag)
    freq = float((rows[:, 0] == PRESENT).mean())
    assert net.infer("A").present == pytest.approx(freq, abs=1e-9)


# -- EM -----------------------------------------------------------------------


def test_em_without_missing_equals_mle():
    rng = np.random.default_rng(31)
    rows = rng.integers(0, 2, size=(60, 3)).astype(np.int8)
    dag = DagStructure(
        nodes=("A", "B", "C"), parents={"A": (), "B": ("A",), "C": ("A", "B")}
    )
    matrix = matrix_of(("A", "B", "C"), rows)
    mle = learn_mle(matrix, dag)
    em = learn_em(matrix, dag, EmConfig(pseudocount=0.0, seed=9))
    for node in dag.nodes:
        np.testing.assert_allclose(
            em.net.cpts[node].vals, mle.cpts[node].vals, atol=1e-9
        )
    assert em.converged


def test_em_single_root_ignores_missing_rows():
    # 3 present / 2 absent estimates 0.6; appended missing rows carry no
    # information for a parentless node and leave the estimate untouched
    rows = [(PRESENT,)] * 3 + [(ABSENT,)] * 2
    dag = chain_dag("A")
    for extra_missing in (0, 2, 10):
        full = rows + [(MISSING,)] * extra_missing
        em = learn_em(
            matrix_of(("A",), full),
            dag,
            EmConfig(pseudocount=0.0, seed=1, tol=0.0, max_iters=200),
        )
        assert em.net.cpts["A"].vals[PRESENT] == pytest.approx(0.6, abs=1e-9)


def test_em_matches_reference_implementation():
    rng = np.random.default_rng(7)
    names = ("A", "B", "C")
    dag = chain_dag(*names)
    rows = rng.integers(0, 2, size=(80, 3)).astype(np.int8)
    mask = rng.random(rows.shape) < 0.30
    rows[mask] = MISSING
    matrix = matrix_of(names, rows)

    iters = 6
    em = learn_em(
        matrix, dag, EmConfig(max_iters=iters, tol=0.0, seed=7, pseudocount=1.0)
    )
    init = BayesNet(dag=dag, cpts=_em_initial_cpts(dag, seed=7))
    parents = {n: tuple(dag.parents[n]) for n in names}
    ref_tables, ref_trace = reference_em(
        rows, names, parents, net_to_spec(init), pseudocount=1.0, n_iters=iters
    )
    for node in names:
        f = em.net.cpts[node]
        for child in (0, 1):
            for pa in itertools.product((0, 1), repeat=len(parents[node])):
                got = f.vals[f.index_of((child, *pa))]
                assert got == pytest.approx(ref_tables[node][(child, pa)], abs=1e-6)
    np.testing.assert_allclose(em.loglik_trace, ref_trace, atol=1e-6)


def test_em_loglik_nondecreasing_without_pseudocount():
    rng = np.random.default_rng(41)
    for trial in range(10):
        n = int(rng.integers(2, 5))
        names = tuple(f"v{i}" for i in range(n))
        dag = chain_dag(*names)
        rows = rng.integers(0, 2, size=(40, n)).astype(np.int8)
        mask = rng.random(rows.shape) < 0.4
        rows[mask] = MISSING
        em = learn_em(
            matrix_of(names, rows),
            dag,
            EmConfig(max_iters=40, tol=0.0, seed=trial, pseudocount=0.0),
        )
        deltas = np.diff(em.loglik_trace)
        assert (deltas >= -1e-9).all()


def test_em_nonconvergence_is_flagged_not_raised():
    rows = [(PRESENT, MISSING), (ABSENT, PRESENT), (MISSING, ABSENT)] * 5
    em = learn_em(
        matrix_of(("A", "B"), rows),
        chain_dag("A", "B"),
        EmConfig(max_iters=2, tol=0.0, seed=0),
    )
    assert not em.converged
    assert em.iterations == 2


def test_em_all_cells_missing():
    rows = [(MISSING, MISSING)] * 3
    with pytest.raises(AllCellsMissing):
        learn_em(matrix_of(("A", "B"), rows), chain_dag("A", "B"))


def test_em_nontopological_node_order():
    # node order lists the child before its parent; the joint layout
    # reorders internally and learning must still be exact
    dag = DagStructure(nodes=("B", "A"), parents={"B": ("A",), "A": ()})
    rows = [(PRESENT, PRESENT)] * 6 + [(ABSENT, PRESENT)] * 2 + [(ABSENT, ABSENT)] * 2
    matrix = matrix_of(("B", "A"), rows)
    em = learn_em(matrix, dag, EmConfig(pseudocount=0.0, seed=3))
    mle = learn_mle(matrix, dag)
    for node in dag.nodes:
        np.testing.assert_allclose(
            em.net.cpts[node].vals, mle.cpts[node].vals, atol=1e-9
        )


# -- serialization -------------------------------------------------------------


def test_bayesnet_json_round_trip():
    net = learn_mle(matrix_of(FIG_VARS, FIG_ROWS), FIG_DAG)
    back = BayesNet.from_json(net.to_json())
    assert back.dag.nodes == net.dag.nodes
    assert back.dag.parents == dict(net.dag.parents)
    for node in net.dag.nodes:
        np.testing.assert_array_equal(back.cpts[node].vals, net.cpts[node].vals)
    payload = json.loads(net.to_json())
    assert set(payload) == {"nodes"}
    assert set(payload["nodes"][0]) == {"name", "parents", "cpt"}
