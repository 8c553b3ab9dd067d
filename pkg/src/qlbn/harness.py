"""End-to-end experiment driver: missingness injection, control vs
missing-data networks, query sweeps, error metrics, report emission.

The pipeline is parse -> stats -> graph -> prune -> merge -> de-cycle ->
case matrix -> control net (MLE on the full matrix) and, per seed, a
test net learned by EM on the injected matrix. Every query is answered
classically and quantum-like (both interference modes are evaluated in
one pass since they share the marginal vectors); errors are absolute
differences from the control probability, times 100.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .bayesnet import (
    BayesNet,
    EmConfig,
    Factor,
    classical_prob,
    full_joint,
    learn_em,
    learn_mle,
    marginalize,
    observe_evidence,
)
from .errors import InputError
from .eventlog import (
    MISSING,
    CaseMatrix,
    EventLog,
    Lifecycle,
    activity_stats,
    filter_lifecycle,
    merge_activities,
    parse_csv,
    parse_xes,
    to_case_matrix,
)
from .procmine import (
    DagStructure,
    TransitionGraph,
    apply_merges,
    build_transition_graph,
    merge_rules_from_json,
    prune_edges,
    remove_cycles,
)
from .quantum import MODE_AMPLITUDE, MODE_PROBABILITY, amplitudes_from_cpt, quantum_prob

logger = logging.getLogger(__name__)

DEFAULT_SEEDS = (1, 2, 3, 4, 5)
DEFAULT_MISSING_FRACTION = 0.70

REPORT_CSV_COLUMNS = (
    "variable",
    "quantum_p",
    "classical_p",
    "control_p",
    "quantum_err_pct",
    "classical_err_pct",
)


@dataclass
class ExperimentConfig:
    log_path: str
    merge_rules_path: str | None = None
    prune_threshold: float = 0.05
    missing_fraction: float = DEFAULT_MISSING_FRACTION
    seeds: tuple = DEFAULT_SEEDS
    mode: str = MODE_AMPLITUDE
    queries: tuple | None = None  # None -> every network variable
    evidence: dict | None = None

    def __post_init__(self):
        if not 0.0 <= self.missing_fraction < 1.0:
            raise InputError("missing fraction must be in [0, 1)")
        if not self.seeds:
            raise InputError("at least one seed is required")

    @staticmethod
    def from_json(text: str, **overrides) -> "ExperimentConfig":
        data = json.loads(text)
        data.update({k: v for k, v in overrides.items() if v is not None})
        if "seeds" in data:
            data["seeds"] = tuple(data["seeds"])
        if "queries" in data and data["queries"] is not None:
            data["queries"] = tuple(data["queries"])
        return ExperimentConfig(**data)


@dataclass
class QueryResult:
    variable: str
    quantum_p: float
    classical_p: float
    control_p: float
    quantum_err_pct: float
    classical_err_pct: float
    quantum_p_by_mode: dict = field(default_factory=dict)


@dataclass
class SeedResult:
    seed: int
    rows: list
    mean_quantum_err: float
    mean_classical_err: float
    mean_quantum_err_by_mode: dict = field(default_factory=dict)
    em_iterations: int = 0
    em_converged: bool = True
    error: str | None = None


@dataclass
class ExperimentReport:
    mode: str
    missing_fraction: float
    prune_threshold: float
    queries: tuple
    control: dict  # variable -> control probability
    seeds: list  # SeedResult
    failures: list = field(default_factory=list)

    @property
    def succeeded(self):
        return [s for s in self.seeds if s.error is None]

    def cross_seed_mean(self, attr: str) -> float:
        vals = [getattr(s, attr) for s in self.succeeded]
        return float(np.mean(vals)) if vals else float("nan")

    def cross_seed_std(self, attr: str) -> float:
        vals = [getattr(s, attr) for s in self.succeeded]
        return float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0

    def mean_rows(self) -> list:
        """Per-query rows averaged across succeeded seeds."""
        out = []
        for i, variable in enumerate(self.queries):
            q = float(np.mean([s.rows[i].quantum_p for s in self.succeeded]))
            c = float(np.mean([s.rows[i].classical_p for s in self.succeeded]))
            ctrl = self.control[variable]
            out.append(
                QueryResult(
                    variable=variable,
                    quantum_p=q,
                    classical_p=c,
                    control_p=ctrl,
                    quantum_err_pct=float(
                        np.mean([s.rows[i].quantum_err_pct for s in self.succeeded])
                    ),
                    classical_err_pct=float(
                        np.mean([s.rows[i].classical_err_pct for s in self.succeeded])
                    ),
                )
            )
        return out


@dataclass
class PipelineArtifacts:
    """Intermediate products of the mining-and-learning pipeline."""

    log: EventLog
    stats: dict
    graph: TransitionGraph
    pruned: TransitionGraph
    merged: TransitionGraph
    dag: DagStructure
    matrix: CaseMatrix
    control: BayesNet


def inject_missing(matrix: CaseMatrix, fraction: float, seed: int) -> CaseMatrix:
    """Set exactly floor(fraction * cells) uniformly sampled cells to
    missing; deterministic given (matrix, fraction, seed)."""
    if not 0.0 <= fraction < 1.0:
        raise InputError("missing fraction must be in [0, 1)")
    rows = matrix.rows.copy()
    k = int(fraction * matrix.n_cells)
    if k:
        rng = np.random.default_rng(seed)
        cells = rng.choice(matrix.n_cells, size=k, replace=False)
        rows.flat[cells] = MISSING
    return CaseMatrix(matrix.variables, rows, matrix.case_ids)


def load_event_log(path: str) -> EventLog:
    with open(path, "rb") as fh:
        data = fh.read()
    if path.endswith(".xes") or data.lstrip()[:1] == b"<":
        return parse_xes(data)
    return parse_csv(data)


def build_pipeline(cfg: ExperimentConfig) -> PipelineArtifacts:
    log = load_event_log(cfg.log_path)
    stats = activity_stats(log, lifecycle_filter={Lifecycle.COMPLETE})
    filtered = filter_lifecycle(log, {Lifecycle.COMPLETE})
    graph = build_transition_graph(filtered)
    pruned = prune_edges(graph, cfg.prune_threshold)
    if cfg.merge_rules_path:
        with open(cfg.merge_rules_path, "r", encoding="utf-8") as fh:
            rules = merge_rules_from_json(fh.read())
    else:
        rules = []
    merged = apply_merges(pruned, rules)
    dag = remove_cycles(merged)
    matrix = to_case_matrix(merge_activities(filtered, rules), dag.nodes)
    control = learn_mle(matrix, dag)
    return PipelineArtifacts(
        log=log,
        stats=stats,
        graph=graph,
        pruned=pruned,
        merged=merged,
        dag=dag,
        matrix=matrix,
        control=control,
    )


def _net_query_sweep(net: BayesNet, queries, evidence) -> dict:
    """Classical and per-mode quantum answers for every query, sharing one
    evidence-adjusted squared-amplitude joint."""
    anet = amplitudes_from_cpt(net)
    factors = anet.factors()
    if evidence:
        factors = observe_evidence(factors, evidence)
    amp_joint = full_joint(factors)
    prob_joint = Factor(amp_joint.vars, amp_joint.cards, amp_joint.vals**2)
    out = {}
    for variable in queries:
        mv = marginalize(prob_joint, variable, evidence)
        classical = classical_prob(mv).present
        by_mode = {
            mode: quantum_prob(mv, mode=mode).distribution.present
            for mode in (MODE_AMPLITUDE, MODE_PROBABILITY)
        }
        out[variable] = (classical, by_mode)
    return out


def run_experiment(cfg: ExperimentConfig, artifacts: PipelineArtifacts | None = None) -> ExperimentReport:
    """Control-vs-missing comparison across seeds.

    Per-seed failures are recorded in the report instead of aborting the
    sweep. Fully deterministic for a fixed (log, config) pair.
    """
    art = artifacts or build_pipeline(cfg)
    queries = tuple(cfg.queries) if cfg.queries else tuple(art.dag.nodes)
    evidence = dict(cfg.evidence or {})
    control_answers = _net_query_sweep(art.control, queries, evidence)
    control = {v: control_answers[v][0] for v in queries}

    seed_results = []
    failures = []
    for seed in cfg.seeds:
        try:
            injected = inject_missing(art.matrix, cfg.missing_fraction, seed)
            em = learn_em(injected, art.dag, EmConfig(seed=seed))
            answers = _net_query_sweep(em.net, queries, evidence)
            rows = []
            err_by_mode = {MODE_AMPLITUDE: [], MODE_PROBABILITY: []}
            for variable in queries:
                classical, by_mode = answers[variable]
                ctrl = control[variable]
                qp = by_mode[cfg.mode]
                rows.append(
                    QueryResult(
                        variable=variable,
                        quantum_p=qp,
                        classical_p=classical,
                        control_p=ctrl,
                        quantum_err_pct=abs(qp - ctrl) * 100.0,
                        classical_err_pct=abs(classical - ctrl) * 100.0,
                        quantum_p_by_mode=by_mode,
                    )
                )
                for mode, p in by_mode.items():
                    err_by_mode[mode].append(abs(p - ctrl) * 100.0)
            seed_results.append(
                SeedResult(
                    seed=seed,
                    rows=rows,
                    mean_quantum_err=float(
                        np.mean([r.quantum_err_pct for r in rows])
                    ),
                    mean_classical_err=float(
                        np.mean([r.classical_err_pct for r in rows])
                    ),
                    mean_quantum_err_by_mode={
                        mode: float(np.mean(errs)) for mode, errs in err_by_mode.items()
                    },
                    em_iterations=em.iterations,
                    em_converged=em.converged,
                )
            )
        except Exception as exc:  # recorded, not fatal
            logger.exception("seed %d failed", seed)
            failures.append({"seed": seed, "error": str(exc)})
            seed_results.append(
                SeedResult(
                    seed=seed,
                    rows=[],
                    mean_quantum_err=float("nan"),
                    mean_classical_err=float("nan"),
                    error=str(exc),
                )
            )

    return ExperimentReport(
        mode=cfg.mode,
        missing_fraction=cfg.missing_fraction,
        prune_threshold=cfg.prune_threshold,
        queries=queries,
        control=control,
        seeds=seed_results,
        failures=failures,
    )


# -- report emission ----------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def report_to_dict(report: ExperimentReport) -> dict:
    return {
        "mode": report.mode,
        "missing_fraction": report.missing_fraction,
        "prune_threshold": report.prune_threshold,
        "queries": list(report.queries),
        "control": {v: report.control[v] for v in report.queries},
        "seeds": [
            {
                "seed": s.seed,
                "error": s.error,
                "em_iterations": s.em_iterations,
                "em_converged": s.em_converged,
                "mean_quantum_err_pct": s.mean_quantum_err,
                "mean_classical_err_pct": s.mean_classical_err,
                "mean_quantum_err_pct_by_mode": s.mean_quantum_err_by_mode,
                "rows": [
                    {
                        "variable": r.variable,
                        "quantum_p": r.quantum_p,
                        "classical_p": r.classical_p,
                        "control_p": r.control_p,
                        "quantum_err_pct": r.quantum_err_pct,
                        "classical_err_pct": r.classical_err_pct,
                        "quantum_p_by_mode": r.quantum_p_by_mode,
                    }
                    for r in s.rows
                ],
            }
            for s in report.seeds
        ],
        "cross_seed": {
            "mean_quantum_err_pct": report.cross_seed_mean("mean_quantum_err"),
            "mean_classical_err_pct": report.cross_seed_mean("mean_classical_err"),
            "std_quantum_err_pct": report.cross_seed_std("mean_quantum_err"),
            "std_classical_err_pct": report.cross_seed_std("mean_classical_err"),
        },
        "failures": report.failures,
    }


def report_from_json(text: str) -> ExperimentReport:
    data = json.loads(text)
    seeds = []
    for s in data["seeds"]:
        rows = [
            QueryResult(
                variable=r["variable"],
                quantum_p=r["quantum_p"],
                classical_p=r["classical_p"],
                control_p=r["control_p"],
                quantum_err_pct=r["quantum_err_pct"],
                classical_err_pct=r["classical_err_pct"],
                quantum_p_by_mode=r.get("quantum_p_by_mode", {}),
            )
            for r in s["rows"]
        ]
        seeds.append(
            SeedResult(
                seed=s["seed"],
                rows=rows,
                mean_quantum_err=s["mean_quantum_err_pct"],
                mean_classical_err=s["mean_classical_err_pct"],
                mean_quantum_err_by_mode=s.get("mean_quantum_err_pct_by_mode", {}),
                em_iterations=s.get("em_iterations", 0),
                em_converged=s.get("em_converged", True),
                error=s.get("error"),
            )
        )
    return ExperimentReport(
        mode=data["mode"],
        missing_fraction=data["missing_fraction"],
        prune_threshold=data["prune_threshold"],
        queries=tuple(data["queries"]),
        control=data["control"],
        seeds=seeds,
        failures=data.get("failures", []),
    )


def emit_report(report: ExperimentReport, format: str = "json") -> bytes:
    """Serialize the report; csv rows are per-variable cross-seed means."""
    if not report.queries:
        raise InputError("report is empty")
    if format == "json":
        return (json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n").encode()
    rows = report.mean_rows()
    if format == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(REPORT_CSV_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    r.variable,
                    _fmt(r.quantum_p),
                    _fmt(r.classical_p),
                    _fmt(r.control_p),
                    f"{r.quantum_err_pct:.4f}",
                    f"{r.classical_err_pct:.4f}",
                ]
            )
        return out.getvalue().encode()
    if format == "markdown-table":
        lines = [
            "| Query | Quantum | Classical | Quantum err (%) | Classical err (%) | Control (baseline) |",
            "| --- | --- | --- | --- | --- | --- |",
        ]
        for r in rows:
            lines.append(
                f"| Pr( {r.variable} = present ) | {r.quantum_p:.4f} | {r.classical_p:.4f} "
                f"| {r.quantum_err_pct:.2f} | {r.classical_err_pct:.2f} | {r.control_p:.4f} |"
            )
        lines.append(
            f"| **mean** |  |  | {report.cross_seed_mean('mean_quantum_err'):.2f} "
            f"| {report.cross_seed_mean('mean_classical_err'):.2f} |  |"
        )
        return ("\n".join(lines) + "\n").encode()
    raise InputError(f"unknown report format {format!r}")


def render_figures(report: ExperimentReport, out_dir: str) -> list:
    """Write comparison charts next to the delimited output. Returns the
    figure paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    rows = report.mean_rows()

    fig, ax = plt.subplots(figsize=(11, 5))
    x = np.arange(len(rows))
    width = 0.38
    ax.bar(x - width / 2, [r.quantum_err_pct for r in rows], width, label="quantum")
    ax.bar(x + width / 2, [r.classical_err_pct for r in rows], width, label="classical")
    ax.set_xticks(x)
    ax.set_xticklabels([r.variable for r in rows], rotation=75, ha="right", fontsize=7)
    ax.set_ylabel("error vs control (%)")
    ax.set_title(
        f"Inference error by variable ({report.mode} mode, "
        f"{report.missing_fraction:.0%} missing, cross-seed mean)"
    )
    ax.legend()
    fig.tight_layout()
    p = out / "error_by_variable.png"
    fig.savefig(p, dpi=150)
    plt.close(fig)
    paths.append(str(p))

    fig, ax = plt.subplots(figsize=(6, 4))
    seeds = [s.seed for s in report.succeeded]
    ax.plot(seeds, [s.mean_quantum_err for s in report.succeeded], "o-", label="quantum")
    ax.plot(seeds, [s.mean_classical_err for s in report.succeeded], "s-", label="classical")
    ax.set_xlabel("seed")
    ax.set_ylabel("mean error vs control (%)")
    ax.set_title("Mean inference error per seed")
    ax.set_xticks(seeds)
    ax.legend()
    fig.tight_layout()
    p = out / "error_by_seed.png"
    fig.savefig(p, dpi=150)
    plt.close(fig)
    paths.append(str(p))

    fig, ax = plt.subplots(figsize=(6, 6))
    ctrl = [r.control_p for r in rows]
    ax.scatter(ctrl, [r.classical_p for r in rows], marker="s", label="classical")
    ax.scatter(ctrl, [r.quantum_p for r in rows], marker="o", label="quantum")
    lim = max(0.05, max(ctrl + [r.quantum_p for r in rows] + [r.classical_p for r in rows]))
    ax.plot([0, lim], [0, lim], "k--", linewidth=0.8)
    ax.set_xlabel("control probability")
    ax.set_ylabel("missing-data probability")
    ax.set_title("Missing-data inferences vs control")
    ax.legend()
    fig.tight_layout()
    p = out / "inference_vs_control.png"
    fig.savefig(p, dpi=150)
    plt.close(fig)
    paths.append(str(p))
    return paths
