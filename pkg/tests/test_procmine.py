import numpy as np
import pytest

from oracles import minimal_breaking_sets
from qlbn.errors import InputError, UnknownActivity
from qlbn.eventlog import parse_csv
from qlbn.procmine import (
    MergeRule,
    TransitionGraph,
    apply_merges,
    build_transition_graph,
    dag_from_json,
    dag_to_json,
    graph_from_json,
    graph_to_json,
    prune_edges,
    remove_cycles,
    suggest_merges,
)


def log_from_sequences(sequences):
    lines = ["case_id,activity,lifecycle,timestamp"]
    for i, seq in enumerate(sequences):
        for j, activity in enumerate(seq):
            lines.append(f"c{i},{activity},NONE,2020-01-01T00:00:{j:02d}+00:00")
    return parse_csv("\n".join(lines) + "\n")


def graph_of(edges, nodes=None):
    """Build a TransitionGraph directly from (src, dst, prob) triples."""
    if nodes is None:
        nodes = []
        for s, d, _ in edges:
            for n in (s, d):
                if n not in nodes:
                    nodes.append(n)
    counts = {(s, d): 1 for s, d, _ in edges}
    probs = {(s, d): p for s, d, p in edges}
    return TransitionGraph(tuple(nodes), counts, probs)


def test_build_counts_and_normalizes():
    g = build_transition_graph(log_from_sequences([["A", "B", "C"], ["A", "B", "D"]]))
    assert g.probabilities[("A", "B")] == 1.0
    assert g.probabilities[("B", "C")] == 0.5
    assert g.probabilities[("B", "D")] == 0.5
    assert g.edge_counts[("A", "B")] == 2


def test_build_case_final_events_have_no_outgoing_mass():
    # rows are normalized over outgoing transitions, so an activity that
    # ends a case contributes nothing to its row denominator
    g = build_transition_graph(log_from_sequences([["A", "B", "C"], ["A", "B"]]))
    assert g.probabilities[("B", "C")] == 1.0


def test_build_single_event_case():
    g = build_transition_graph(log_from_sequences([["A"]]))
    assert g.nodes == ("A",)
    assert g.edge_counts == {}


def test_build_row_stochastic():
    rng = np.random.default_rng(5)
    seqs = [
        [f"t{rng.integers(0, 6)}" for _ in range(rng.integers(2, 12))]
        for _ in range(40)
    ]
    g = build_transition_graph(log_from_sequences(seqs))
    rows = {}
    for (s, _), p in g.probabilities.items():
        rows[s] = rows.get(s, 0.0) + p
    for s, total in rows.items():
        assert abs(total - 1.0) <= 1e-9


def test_prune_threshold_zero_is_identity():
    g = graph_of([("A", "B", 0.3), ("A", "C", 0.7)])
    pruned = prune_edges(g, 0.0)
    assert pruned.edge_counts == g.edge_counts
    assert pruned.probabilities == g.probabilities


def test_prune_drops_rare_edges_without_renormalizing():
    g = graph_of([("A", "B", 0.04), ("A", "C", 0.96)])
    pruned = prune_edges(g, 0.05)
    assert ("A", "B") not in pruned.probabilities
    assert pruned.probabilities[("A", "C")] == 0.96
    assert pruned.nodes == g.nodes  # isolated nodes retained


def test_prune_is_idempotent():
    g = graph_of([("A", "B", 0.04), ("A", "C", 0.9), ("B", "C", 0.05)])
    once = prune_edges(g, 0.05)
    twice = prune_edges(once, 0.05)
    assert once.probabilities == twice.probabilities


def test_apply_merges_empty_rules_identity():
    g = graph_of([("A", "B", 0.4), ("B", "A", 1.0)])
    merged = apply_merges(g, [])
    assert merged.probabilities == g.probabilities


def test_apply_merges_drops_internal_edges():
    g = graph_of([("A", "B", 1.0), ("B", "A", 1.0)])
    merged = apply_merges(g, [MergeRule(members=("A", "B"), merged_name="AB")])
    assert merged.nodes == ("AB",)
    assert merged.edge_counts == {}


def test_apply_merges_sums_external_counts_and_renormalizes():
    g = TransitionGraph(
        ("X", "A", "B", "Y"),
        {("X", "A"): 3, ("X", "B"): 2, ("A", "B"): 5, ("B", "Y"): 4, ("X", "Y"): 5},
        {("X", "A"): 0.3, ("X", "B"): 0.2, ("A", "B"): 1.0, ("B", "Y"): 1.0, ("X", "Y"): 0.5},
    )
    merged = apply_merges(g, [MergeRule(members=("A", "B"), merged_name="AB")])
    # external counts into AB summed; X row renormalized over survivors
    assert merged.edge_counts[("X", "AB")] == 5
    assert merged.edge_counts[("AB", "Y")] == 4
    assert merged.probabilities[("X", "AB")] == pytest.approx(0.5)
    assert merged.probabilities[("AB", "Y")] == pytest.approx(1.0)
    # total external out-count of the super-node equals the members' sum
    assert sum(c for (s, _), c in merged.edge_counts.items() if s == "AB") == 4


def test_apply_merges_unknown_member():
    g = graph_of([("A", "B", 1.0)])
    with pytest.raises(UnknownActivity):
        apply_merges(g, [MergeRule(members=("A", "NOPE"), merged_name="X")])


def test_apply_merges_name_collision():
    g = graph_of([("A", "B", 0.5), ("A", "C", 0.5)])
    with pytest.raises(InputError):
        apply_merges(g, [MergeRule(members=("A", "B"), merged_name="C")])


def test_suggest_merges_chain():
    g = graph_of([("A", "B", 1.0), ("B", "C", 0.5)])
    suggestions = suggest_merges(g, 0.99)
    assert [s.members for s in suggestions] == [("A", "B")]


def test_suggest_merges_sole_predecessor_rule():
    g = graph_of([("A", "B", 1.0), ("C", "B", 1.0)])
    assert suggest_merges(g, 0.99) == []


def test_remove_cycles_two_cycle_golden():
    # worker-task / automatic-task round trip: the weaker direction goes
    g = graph_of(
        [
            ("W_Fixing incoming lead", "A_PREACCEPTED", 0.0684),
            ("A_PREACCEPTED", "W_Fixing incoming lead", 0.3417),
        ]
    )
    dag = remove_cycles(g)
    assert dag.deleted_edges == (
        ("W_Fixing incoming lead", "A_PREACCEPTED", 0.0684),
    )
    assert dag.parents["W_Fixing incoming lead"] == ("A_PREACCEPTED",)


def test_remove_cycles_acyclic_identity():
    g = graph_of([("A", "B", 0.5), ("B", "C", 0.5)])
    dag = remove_cycles(g)
    assert dag.deleted_edges == ()
    assert dag.parents["C"] == ("B",)
    assert dag.topological_order() == ["A", "B", "C"]


def test_remove_cycles_three_cycle_minimum_edge():
    edges = [("A", "B", 0.1), ("B", "C", 0.2), ("C", "A", 0.3)]
    dag = remove_cycles(graph_of(edges))
    assert dag.deleted_edges == (("A", "B", 0.1),)
    # brute-force oracle: the minimal single-edge removal set of least
    # weight is exactly {A->B}
    sets = minimal_breaking_sets(("A", "B", "C"), edges)
    best = min(sets, key=lambda item: item[1])
    assert best[0] == {("A", "B")}


def test_remove_cycles_tie_breaks_lexicographically():
    edges = [("B", "A", 0.2), ("A", "B", 0.2)]
    dag = remove_cycles(graph_of(edges))
    assert dag.deleted_edges == (("A", "B", 0.2),)


def test_remove_cycles_random_graphs_acyclic_and_bounded():
    rng = np.random.default_rng(11)
    for trial in range(25):
        n = int(rng.integers(3, 8))
        nodes = tuple(f"v{i}" for i in range(n))
        edges = []
        for s in nodes:
            for d in nodes:
                if s != d and rng.random() < 0.35:
                    edges.append((s, d, float(rng.uniform(0.01, 1.0))))
        g = graph_of(edges, nodes=list(nodes))
        dag = remove_cycles(g)
        dag.topological_order()  # raises on failure
        assert len(dag.deleted_edges) <= len(edges)


def test_graph_and_dag_json_round_trip():
    g = graph_of([("A", "B", 0.25), ("B", "A", 0.75)])
    back = graph_from_json(graph_to_json(g))
    assert back.nodes == g.nodes
    assert back.edge_counts == g.edge_counts
    assert back.probabilities == g.probabilities

    dag = remove_cycles(g)
    dag_back = dag_from_json(dag_to_json(dag))
    assert dag_back.nodes == dag.nodes
    assert dag_back.parents == dag.parents
    assert dag_back.deleted_edges == dag.deleted_edges
