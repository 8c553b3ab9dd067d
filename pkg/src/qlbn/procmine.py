"""Transition-graph extraction and reduction to a DAG skeleton.

Pipeline order is prune -> merge -> de-cycle. Pruned probabilities are
not renormalized; apply_merges recomputes row probabilities only for
rows that structurally change, so an empty rule list is an identity.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from .errors import EmptyLog, InputError, UnknownActivity
from .eventlog import EventLog

logger = logging.getLogger(__name__)

DEFAULT_PRUNE_THRESHOLD = 0.05
DEFAULT_SUGGEST_TAU = 0.99


@dataclass
class TransitionGraph:
    nodes: tuple[str, ...]
    edge_counts: dict  # (src, dst) -> int
    probabilities: dict  # (src, dst) -> float

    def out_edges(self, src: str):
        return [(s, d) for (s, d) in self.edge_counts if s == src]

    def successors(self, src: str):
        return sorted(d for (s, d) in self.edge_counts if s == src)

    def predecessors(self, dst: str):
        return sorted(s for (s, d) in self.edge_counts if d == dst)


@dataclass(frozen=True)
class MergeRule:
    members: tuple[str, ...]
    merged_name: str

    def __post_init__(self):
        if len(set(self.members)) != len(self.members):
            raise InputError(f"merge members must be pairwise distinct: {self.members}")


@dataclass(frozen=True)
class DagStructure:
    """Acyclic skeleton: nodes plus per-node parent lists (in node order).

    ``deleted_edges`` records the edges removed during cycle elimination.
    """

    nodes: tuple[str, ...]
    parents: dict = field(hash=False)
    deleted_edges: tuple = ()

    def topological_order(self) -> list[str]:
        order = []
        indegree = {n: len(self.parents.get(n, ())) for n in self.nodes}
        children = {n: [] for n in self.nodes}
        for child, ps in self.parents.items():
            for p in ps:
                children[p].append(child)
        ready = [n for n in self.nodes if indegree[n] == 0]
        while ready:
            n = ready.pop(0)
            order.append(n)
            for c in children[n]:
                indegree[c] -= 1
                if indegree[c] == 0:
                    ready.append(c)
        if len(order) != len(self.nodes):
            raise InputError("parent structure contains a cycle")
        return order


def build_transition_graph(log: EventLog) -> TransitionGraph:
    """Count adjacent activity pairs per case and row-normalize.

    Cases left empty by upstream filtering contribute nothing.
    """
    counts = {}
    nodes = []
    seen = set()
    n_events = 0
    for records in log.cases.values():
        for r in records:
            n_events += 1
            if r.activity not in seen:
                seen.add(r.activity)
                nodes.append(r.activity)
        for a, b in zip(records, records[1:]):
            key = (a.activity, b.activity)
            counts[key] = counts.get(key, 0) + 1
    if n_events == 0:
        raise EmptyLog("cannot build a transition graph from an empty log")

    row_totals = {}
    for (src, _), c in counts.items():
        row_totals[src] = row_totals.get(src, 0) + c
    probabilities = {k: c / row_totals[k[0]] for k, c in counts.items()}
    return TransitionGraph(tuple(nodes), counts, probabilities)


def prune_edges(g: TransitionGraph, threshold: float = DEFAULT_PRUNE_THRESHOLD) -> TransitionGraph:
    """Drop edges with probability below ``threshold``.

    Surviving probabilities are kept as-is (they are reporting artifacts;
    CPTs are learned from the case matrix later). Isolated nodes remain.
    """
    if not 0.0 <= threshold <= 1.0:
        raise InputError(f"threshold must be within [0, 1], got {threshold}")
    kept = {k: c for k, c in g.edge_counts.items() if g.probabilities[k] >= threshold}
    probs = {k: g.probabilities[k] for k in kept}
    return TransitionGraph(g.nodes, kept, probs)


def apply_merges(g: TransitionGraph, rules) -> TransitionGraph:
    """Contract each rule's members into a single node.

    Edges internal to a rule's member set are dropped; external edges are
    summed by endpoint after renaming. Rows whose edge set changed (the
    merged node's own row, and rows where parallel edges collided) get
    probabilities recomputed by row normalization over surviving counts.
    """
    node_set = set(g.nodes)
    rename = {}
    for rule in rules:
        for m in rule.members:
            if m not in node_set:
                raise UnknownActivity(m)
        if rule.merged_name in node_set and rule.merged_name not in rule.members:
            raise InputError(
                f"merged name {rule.merged_name!r} collides with an existing node"
            )
        for m in rule.members:
            rename[m] = rule.merged_name

    if not rules:
        return TransitionGraph(g.nodes, dict(g.edge_counts), dict(g.probabilities))

    nodes = []
    for n in g.nodes:
        mapped = rename.get(n, n)
        if mapped not in nodes:
            nodes.append(mapped)

    counts = {}
    origins = {}
    merged_names = set(rename.values())
    for (src, dst), c in g.edge_counts.items():
        ms, md = rename.get(src, src), rename.get(dst, dst)
        if ms == md and src in rename:
            continue  # edge internal to a merge group (incl. member self-loops)
        key = (ms, md)
        counts[key] = counts.get(key, 0) + c
        origins.setdefault(key, []).append((src, dst))

    probabilities = {}
    row_totals = {}
    for (src, _), c in counts.items():
        row_totals[src] = row_totals.get(src, 0) + c
    for (src, dst), c in counts.items():
        if src in merged_names or len(origins[(src, dst)]) > 1:
            probabilities[(src, dst)] = c / row_totals[src]
        else:
            probabilities[(src, dst)] = g.probabilities[origins[(src, dst)][0]]
    return TransitionGraph(tuple(nodes), counts, probabilities)


def suggest_merges(g: TransitionGraph, tau: float = DEFAULT_SUGGEST_TAU):
    """Propose {A, B} merge candidates where P(B|A) >= tau and A is B's
    sole predecessor (self-loops ignored). Suggestions are never applied
    automatically.
    """
    if not 0.0 < tau <= 1.0:
        raise InputError(f"tau must be within (0, 1], got {tau}")
    suggestions = []
    for (src, dst) in sorted(g.edge_counts):
        if src == dst:
            continue
        if g.probabilities[(src, dst)] < tau:
            continue
        preds = [p for p in g.predecessors(dst) if p != dst]
        if preds == [src]:
            suggestions.append(
                MergeRule(members=(src, dst), merged_name=f"{src}+{dst}")
            )
    return suggestions


def _find_cycle(nodes, adjacency):
    """Return one directed cycle as an edge list, or None. Deterministic:
    nodes and successors are visited in sorted order."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {n: WHITE for n in nodes}
    stack_path = []

    def dfs(start):
        stack = [(start, iter(adjacency.get(start, ())))]
        color[start] = GRAY
        stack_path.append(start)
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == GRAY:
                    i = stack_path.index(nxt)
                    cycle_nodes = stack_path[i:] + [nxt]
                    return list(zip(cycle_nodes, cycle_nodes[1:]))
                if color[nxt] == WHITE:
                    color[nxt] = GRAY
                    stack_path.append(nxt)
                    stack.append((nxt, iter(adjacency.get(nxt, ()))))
                    advanced = True
                    break
            if not advanced:
                stack.pop()
                stack_path.pop()
                color[node] = BLACK
        return None

    for n in sorted(nodes):
        if color[n] == WHITE:
            found = dfs(n)
            if found:
                return found
    return None


def remove_cycles(g: TransitionGraph) -> DagStructure:
    """Delete the minimum-probability edge of each remaining cycle until
    the graph is acyclic (ties broken by lexicographically smallest
    (src, dst)). Self-loops are single-edge cycles and go first.
    """
    edges = dict(g.probabilities)
    deleted = []

    for (src, dst) in sorted(edges):
        if src == dst:
            deleted.append((src, dst, edges.pop((src, dst))))
            logger.info("cycle removal: dropped self-loop %s (p=%.4f)", src, deleted[-1][2])

    def adjacency():
        adj = {}
        for (src, dst) in edges:
            adj.setdefault(src, []).append(dst)
        return {s: sorted(ds) for s, ds in adj.items()}

    while True:
        cycle = _find_cycle(g.nodes, adjacency())
        if cycle is None:
            break
        victim = min(cycle, key=lambda e: (edges[e], e))
        deleted.append((victim[0], victim[1], edges.pop(victim)))
        logger.info(
            "cycle removal: dropped edge %s -> %s (p=%.4f)",
            victim[0], victim[1], deleted[-1][2],
        )

    parents = {n: tuple() for n in g.nodes}
    node_rank = {n: i for i, n in enumerate(g.nodes)}
    incoming = {}
    for (src, dst) in edges:
        incoming.setdefault(dst, []).append(src)
    for dst, srcs in incoming.items():
        parents[dst] = tuple(sorted(srcs, key=lambda s: node_rank[s]))
    dag = DagStructure(nodes=g.nodes, parents=parents, deleted_edges=tuple(deleted))
    dag.topological_order()  # raises if the reduction failed
    return dag


# -- serialization ----------------------------------------------------------


def graph_to_json(g: TransitionGraph) -> str:
    edges = [
        {"src": s, "dst": d, "p": g.probabilities[(s, d)], "count": c}
        for (s, d), c in sorted(g.edge_counts.items())
    ]
    return json.dumps({"nodes": list(g.nodes), "edges": edges}, indent=2)


def graph_from_json(text: str) -> TransitionGraph:
    data = json.loads(text)
    counts = {(e["src"], e["dst"]): e["count"] for e in data["edges"]}
    probs = {(e["src"], e["dst"]): e["p"] for e in data["edges"]}
    return TransitionGraph(tuple(data["nodes"]), counts, probs)


def merge_rules_to_json(rules) -> str:
    return json.dumps(
        [{"members": list(r.members), "merged_name": r.merged_name} for r in rules],
        indent=2,
    )


def merge_rules_from_json(text: str):
    return [
        MergeRule(members=tuple(item["members"]), merged_name=item["merged_name"])
        for item in json.loads(text)
    ]


def dag_to_json(dag: DagStructure) -> str:
    return json.dumps(
        {
            "nodes": list(dag.nodes),
            "parents": {n: list(dag.parents.get(n, ())) for n in dag.nodes},
            "deleted_edges": [
                {"src": s, "dst": d, "p": p} for (s, d, p) in dag.deleted_edges
            ],
        },
        indent=2,
    )


def dag_from_json(text: str) -> DagStructure:
    data = json.loads(text)
    return DagStructure(
        nodes=tuple(data["nodes"]),
        parents={n: tuple(ps) for n, ps in data["parents"].items()},
        deleted_edges=tuple(
            (e["src"], e["dst"], e["p"]) for e in data.get("deleted_edges", ())
        ),
    )
