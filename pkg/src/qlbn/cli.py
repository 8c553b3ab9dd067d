"""Command-line interface.

Subcommands: genlog, ingest, mine, learn, infer, experiment, report.
Exit codes: 0 success, 1 input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import loanlog
from .bayesnet import BayesNet, EmConfig, learn_em, learn_mle
from .errors import InputError, NumericalError, QlbnError
from .eventlog import (
    PRESENT,
    ABSENT,
    Lifecycle,
    activity_stats,
    filter_lifecycle,
    merge_activities,
    to_case_matrix,
    write_csv,
)
from .harness import (
    ExperimentConfig,
    emit_report,
    inject_missing,
    load_event_log,
    render_figures,
    report_from_json,
    report_to_dict,
    run_experiment,
)
from .procmine import (
    apply_merges,
    build_transition_graph,
    dag_to_json,
    graph_to_json,
    merge_rules_from_json,
    merge_rules_to_json,
    prune_edges,
    remove_cycles,
    suggest_merges,
)
from .quantum import MODE_AMPLITUDE, MODE_PROBABILITY, amplitudes_from_cpt, infer_quantum


def _write(path, data):
    mode = "wb" if isinstance(data, bytes) else "w"
    if path == "-":
        if isinstance(data, bytes):
            sys.stdout.buffer.write(data)
        else:
            sys.stdout.write(data)
        return
    with open(path, mode) as fh:
        fh.write(data)


def _load_rules(path):
    if not path:
        return []
    if path == "default":
        return list(loanlog.DEFAULT_MERGE_RULES)
    with open(path, "r", encoding="utf-8") as fh:
        return merge_rules_from_json(fh.read())


def _parse_evidence(pairs):
    evidence = {}
    for item in pairs or []:
        if "=" not in item:
            raise InputError(f"evidence must look like VAR=present, got {item!r}")
        var, _, value = item.partition("=")
        value = value.strip().lower()
        if value not in ("present", "absent"):
            raise InputError(f"evidence value must be present/absent, got {value!r}")
        evidence[var.strip()] = PRESENT if value == "present" else ABSENT
    return evidence


def cmd_genlog(args):
    log = loanlog.generate_loan_log()
    _write(args.out, write_csv(log))
    if args.merges_out:
        _write(args.merges_out, merge_rules_to_json(loanlog.DEFAULT_MERGE_RULES))
    print(
        f"wrote {log.n_events} events / {log.n_cases} cases to {args.out}",
        file=sys.stderr,
    )


def cmd_ingest(args):
    log = load_event_log(args.log)
    lifecycle_filter = None if args.no_filter else {Lifecycle.COMPLETE}
    stats = activity_stats(log, lifecycle_filter=lifecycle_filter)
    payload = json.dumps(stats, indent=2, sort_keys=True) + "\n"
    _write(args.stats_out, payload)
    print(
        f"{log.n_events} events, {log.n_cases} cases, "
        f"{len(log.activity_universe)} activities",
        file=sys.stderr,
    )


def _mine(args):
    log = load_event_log(args.log)
    filtered = filter_lifecycle(log, {Lifecycle.COMPLETE})
    graph = build_transition_graph(filtered)
    pruned = prune_edges(graph, args.threshold)
    rules = _load_rules(args.merges)
    merged = apply_merges(pruned, rules)
    dag = remove_cycles(merged)
    return log, filtered, graph, pruned, rules, merged, dag


def cmd_mine(args):
    _, _, graph, pruned, rules, merged, dag = _mine(args)
    if args.graph_out:
        _write(args.graph_out, graph_to_json(graph))
    if args.dag_out:
        _write(args.dag_out, dag_to_json(dag))
    if args.suggest_out:
        suggestions = suggest_merges(graph, args.suggest_tau)
        _write(args.suggest_out, merge_rules_to_json(suggestions))
    print(
        f"graph: {len(graph.nodes)} nodes / {len(graph.edge_counts)} edges; "
        f"pruned: {len(pruned.edge_counts)} edges; "
        f"dag: {len(dag.nodes)} nodes, {len(dag.deleted_edges)} cycle deletions",
        file=sys.stderr,
    )


def cmd_learn(args):
    _, filtered, _, _, rules, _, dag = _mine(args)
    matrix = to_case_matrix(merge_activities(filtered, rules), dag.nodes)
    if args.method == "mle":
        net = learn_mle(matrix, dag)
    else:
        injected = inject_missing(matrix, args.missing, args.seed)
        result = learn_em(injected, dag, EmConfig(seed=args.seed))
        net = result.net
        print(
            f"EM: {result.iterations} iterations, converged={result.converged}, "
            f"log-likelihood={result.log_likelihood:.3f}",
            file=sys.stderr,
        )
    _write(args.net_out, net.to_json() + "\n")


def cmd_infer(args):
    with open(args.net, "r", encoding="utf-8") as fh:
        net = BayesNet.from_json(fh.read())
    evidence = _parse_evidence(args.evidence)
    result = infer_quantum(
        amplitudes_from_cpt(net), args.query, evidence, mode=args.mode
    )
    print(result.to_json())


def cmd_experiment(args):
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            text = fh.read()
        cfg = ExperimentConfig.from_json(
            text,
            log_path=args.log,
            merge_rules_path=args.merges,
            prune_threshold=args.threshold,
            missing_fraction=args.missing,
            seeds=tuple(args.seed) if args.seed else None,
            mode=args.mode,
        )
    else:
        if not args.log:
            raise InputError("either --config or --log is required")
        cfg = ExperimentConfig(
            log_path=args.log,
            merge_rules_path=args.merges,
            prune_threshold=args.threshold if args.threshold is not None else 0.05,
            missing_fraction=args.missing if args.missing is not None else 0.70,
            seeds=tuple(args.seed) if args.seed else (1, 2, 3, 4, 5),
            mode=args.mode or MODE_AMPLITUDE,
        )
    report = run_experiment(cfg)
    _write(args.out, emit_report(report, "json"))
    cross = report_to_dict(report)["cross_seed"]
    print(
        f"mean error vs control: quantum {cross['mean_quantum_err_pct']:.3f}% "
        f"classical {cross['mean_classical_err_pct']:.3f}% "
        f"({len(report.failures)} seed failures)",
        file=sys.stderr,
    )


def cmd_report(args):
    with open(args.report, "r", encoding="utf-8") as fh:
        report = report_from_json(fh.read())
    _write(args.out, emit_report(report, args.format))
    if args.figures:
        paths = render_figures(report, args.figures)
        print("figures: " + ", ".join(paths), file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qlbn",
        description="Process mining and classical/quantum-like Bayesian inference "
        "over loan-application event logs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("genlog", help="write the bundled benchmark event log")
    p.add_argument("--out", default="loan_log.csv")
    p.add_argument("--merges-out", help="also write the default merge rules")
    p.set_defaults(func=cmd_genlog)

    p = sub.add_parser("ingest", help="parse a log and emit activity statistics")
    p.add_argument("--log", required=True)
    p.add_argument("--stats-out", default="-")
    p.add_argument(
        "--no-filter",
        action="store_true",
        help="count worker tasks in every lifecycle state, not only COMPLETE",
    )
    p.set_defaults(func=cmd_ingest)

    def mining_options(p):
        p.add_argument("--log", required=True)
        p.add_argument("--threshold", type=float, default=0.05)
        p.add_argument(
            "--merges",
            help="merge rules JSON path, or 'default' for the bundled rules",
        )

    p = sub.add_parser("mine", help="extract the pruned, merged, acyclic structure")
    mining_options(p)
    p.add_argument("--graph-out")
    p.add_argument("--dag-out")
    p.add_argument("--suggest-out", help="write automatic merge suggestions")
    p.add_argument("--suggest-tau", type=float, default=0.99)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("learn", help="learn network parameters from a log")
    mining_options(p)
    p.add_argument("--method", choices=("mle", "em"), default="mle")
    p.add_argument("--missing", type=float, default=0.70)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--net-out", default="-")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("infer", help="answer a query on a saved network")
    p.add_argument("--net", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--evidence", action="append", metavar="VAR=present|absent")
    p.add_argument("--mode", choices=(MODE_AMPLITUDE, MODE_PROBABILITY), default=MODE_AMPLITUDE)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("experiment", help="run the control-vs-missing comparison")
    p.add_argument("--config", help="ExperimentConfig JSON")
    p.add_argument("--log")
    p.add_argument("--merges")
    p.add_argument("--threshold", type=float)
    p.add_argument("--missing", type=float)
    p.add_argument("--seed", type=int, action="append")
    p.add_argument("--mode", choices=(MODE_AMPLITUDE, MODE_PROBABILITY))
    p.add_argument("--out", default="report.json")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="re-emit a saved report")
    p.add_argument("--report", required=True)
    p.add_argument("--format", choices=("json", "csv", "markdown-table"), default="csv")
    p.add_argument("--out", default="-")
    p.add_argument("--figures", help="directory for rendered charts")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (InputError, QlbnError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
