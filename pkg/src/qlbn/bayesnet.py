"""Binary-variable factors, CPT learning, and classical exact inference.

Factor value layout: ``vals`` is flat with the FIRST variable least
significant, i.e. index(assignment) = sum_k assignment[k] * stride[k]
with stride[0] = 1 and stride[k] = stride[k-1] * cards[k-1]. Value
index 0 means "present", 1 means "absent", globally.

Inference is deliberately the full-joint-enumeration route: build the
product of all (evidence-zeroed) CPTs, then select and sum entries.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    AllCellsMissing,
    DimensionOverflow,
    InputError,
    MissingCellsPresent,
    QueryIsEvidence,
    UnknownEvidenceVariable,
    UnknownVariable,
    ZeroMass,
)
from .eventlog import ABSENT, MISSING, PRESENT, CaseMatrix
from .procmine import DagStructure

JOINT_VARIABLE_CAP = 25


# -- factor core -------------------------------------------------------------


@dataclass(frozen=True)
class Factor:
    """A table over discrete variables; for CPTs vars[0] is the child."""

    vars: tuple[str, ...]
    cards: tuple[int, ...]
    vals: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vals", np.asarray(self.vals, dtype=np.float64))
        if self.vals.ndim != 1 or self.vals.size != int(np.prod(self.cards)):
            raise ValueError("vals must be flat with length prod(cards)")

    @property
    def strides(self) -> tuple[int, ...]:
        out = []
        s = 1
        for c in self.cards:
            out.append(s)
            s *= c
        return tuple(out)

    def index_of(self, assignment) -> int:
        """Flat index of an assignment (one value per variable, in order)."""
        return int(sum(a * s for a, s in zip(assignment, self.strides)))

    def assignment_of(self, index: int) -> tuple[int, ...]:
        out = []
        for c in self.cards:
            out.append(index % c)
            index //= c
        return tuple(out)

    def tensor(self) -> np.ndarray:
        """ndarray view with one axis per variable, in vars order."""
        return self.vals.reshape(tuple(reversed(self.cards))).T

    @staticmethod
    def from_tensor(vars, tensor) -> "Factor":
        tensor = np.asarray(tensor, dtype=np.float64)
        return Factor(tuple(vars), tensor.shape, tensor.T.ravel())


class Distribution(NamedTuple):
    present: float
    absent: float


@dataclass(frozen=True)
class MarginalVectors:
    """Joint entries consistent with query=present (pos) and query=absent
    (neg), enumerated over all remaining variables in stride order.
    Evidence-inconsistent entries are zero."""

    pos: np.ndarray
    neg: np.ndarray


def observe_evidence(factors, evidence) -> list[Factor]:
    """Zero out factor entries inconsistent with the evidence.

    Factor shapes are unchanged; factors not mentioning an evidence
    variable are returned as-is.
    """
    mentioned = set()
    for f in factors:
        mentioned.update(f.vars)
    for var in evidence:
        if var not in mentioned:
            raise UnknownEvidenceVariable(var)

    out = []
    for f in factors:
        hit = [v for v in f.vars if v in evidence]
        if not hit:
            out.append(f)
            continue
        t = f.tensor().copy()
        for var in hit:
            axis = f.vars.index(var)
            keep = evidence[var]
            view = np.moveaxis(t, axis, 0)
            for value in range(f.cards[axis]):
                if value != keep:
                    view[value] = 0.0
        out.append(Factor.from_tensor(f.vars, t))
    return out


def full_joint(factors, cap: int = JOINT_VARIABLE_CAP) -> Factor:
    """Product of all factors over the union of their variables.

    Every variable must appear exactly once as a child (vars[0]);
    parents must themselves be children of some factor.
    """
    names = []
    seen = set()
    children = []
    for f in factors:
        children.append(f.vars[0])
        for v in f.vars:
            if v not in seen:
                seen.add(v)
                names.append(v)
    if len(set(children)) != len(children):
        raise InputError("a variable appears more than once as a child")
    if set(children) != seen:
        missing = sorted(seen - set(children))
        raise InputError(f"no CPT for variable(s) {missing}")
    if len(names) > cap:
        raise DimensionOverflow(len(names), cap)

    pos = {v: i for i, v in enumerate(names)}
    result = np.ones((2,) * len(names), dtype=np.float64)
    for f in factors:
        order = sorted(range(len(f.vars)), key=lambda i: pos[f.vars[i]])
        t = np.transpose(f.tensor(), order)
        shape = [1] * len(names)
        for i in order:
            shape[pos[f.vars[i]]] = f.cards[i]
        result = result * t.reshape(shape)
    return Factor.from_tensor(names, result)


def marginalize(joint: Factor, query: str, evidence=None) -> MarginalVectors:
    """Split the joint into the query=present / query=absent entry vectors
    over the remaining variables (stride order, first remaining variable
    least significant)."""
    evidence = evidence or {}
    if query in evidence:
        raise QueryIsEvidence(query)
    if query not in joint.vars:
        raise UnknownVariable(query)
    axis = joint.vars.index(query)
    t = joint.tensor()
    pos = Factor.from_tensor(
        tuple(v for v in joint.vars if v != query), np.take(t, PRESENT, axis=axis)
    ).vals
    neg = Factor.from_tensor(
        tuple(v for v in joint.vars if v != query), np.take(t, ABSENT, axis=axis)
    ).vals
    return MarginalVectors(pos=pos, neg=neg)


def classical_prob(mv: MarginalVectors) -> Distribution:
    """Normalized (sum pos, sum neg); raises ZeroMass when the evidence is
    impossible under the model."""
    s_pos = float(mv.pos.sum())
    s_neg = float(mv.neg.sum())
    total = s_pos + s_neg
    if total <= 0.0:
        raise ZeroMass("marginal vectors carry no probability mass")
    return Distribution(present=s_pos / total, absent=s_neg / total)


# -- Bayesian network --------------------------------------------------------


@dataclass
class BayesNet:
    dag: DagStructure
    cpts: dict  # node -> Factor with vars (node, *parents)

    def factors(self) -> list[Factor]:
        return [self.cpts[n] for n in self.dag.nodes]

    def infer(self, query: str, evidence=None, cap: int = JOINT_VARIABLE_CAP) -> Distribution:
        """Classical exact inference: zero evidence-inconsistent entries,
        build the full joint, marginalize, normalize."""
        evidence = evidence or {}
        factors = observe_evidence(self.factors(), evidence)
        joint = full_joint(factors, cap=cap)
        mv = marginalize(joint, query, evidence)
        return classical_prob(mv)

    def to_json(self) -> str:
        nodes = [
            {
                "name": n,
                "parents": list(self.dag.parents.get(n, ())),
                "cpt": [float(x) for x in self.cpts[n].vals],
            }
            for n in self.dag.nodes
        ]
        return json.dumps({"nodes": nodes}, indent=2)

    @staticmethod
    def from_json(text: str) -> "BayesNet":
        data = json.loads(text)
        names = tuple(item["name"] for item in data["nodes"])
        parents = {item["name"]: tuple(item["parents"]) for item in data["nodes"]}
        dag = DagStructure(nodes=names, parents=parents)
        cpts = {}
        for item in data["nodes"]:
            fvars = (item["name"], *item["parents"])
            cpts[item["name"]] = Factor(fvars, (2,) * len(fvars), np.array(item["cpt"]))
        return BayesNet(dag=dag, cpts=cpts)


def _family_columns(matrix: CaseMatrix, dag: DagStructure):
    col = {v: j for j, v in enumerate(matrix.variables)}
    for node in dag.nodes:
        if node not in col:
            raise UnknownVariable(node)
    return col


def _counts_to_cpt(node, parents, counts, pseudocount=0.0) -> Factor:
    """counts: tensor over (child, *parents) axes. Parent configurations
    with zero total count become uniform rows."""
    c = counts.astype(np.float64) + pseudocount
    denom = c.sum(axis=0, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where(denom > 0.0, c / np.where(denom == 0.0, 1.0, denom), 0.5)
    return Factor.from_tensor((node, *parents), vals)


def learn_mle(matrix: CaseMatrix, dag: DagStructure) -> BayesNet:
    """Maximum-likelihood CPTs from a complete presence matrix: count
    each (child, parents) assignment and normalize per parent row."""
    if matrix.has_missing():
        raise MissingCellsPresent("matrix contains missing cells; use learn_em")
    col = _family_columns(matrix, dag)
    cpts = {}
    for node in dag.nodes:
        parents = dag.parents.get(node, ())
        fam = (node, *parents)
        k = len(fam)
        codes = np.zeros(matrix.n_cases, dtype=np.int64)
        stride = 1
        for v in fam:
            codes += matrix.rows[:, col[v]].astype(np.int64) * stride
            stride *= 2
        counts = np.bincount(codes, minlength=2**k).reshape((2,) * k, order="F")
        cpts[node] = _counts_to_cpt(node, parents, counts)
    return BayesNet(dag=dag, cpts=cpts)


# -- expectation-maximization -------------------------------------------------

try:  # compiled E-step kernel; a pure-numpy fallback covers its absence
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def _njit(**kwargs):
        def wrap(fn):
            return fn

        return wrap


@_njit(cache=True)
def _estep_kernel(joint, offsets, row_weights, stride_data, stride_ptr, W, scratch):
    """Accumulate posterior weights W[x] = sum_r count_r * mask_r(x) / Z_r.

    Each row's evidence-consistent joint entries form a subset-sum index
    family: base offset plus any combination of its missing-variable
    strides, enumerated in Gray-code order so each step moves by one
    stride. Returns the observed-data log-likelihood (or NaN when a row
    has zero mass under the current model).
    """
    total_ll = 0.0
    for r in range(offsets.shape[0]):
        base = offsets[r]
        s0 = stride_ptr[r]
        m = stride_ptr[r + 1] - s0
        size = 1 << m
        idx = base
        scratch[0] = idx
        z = joint[idx]
        gray_prev = 0
        for a in range(1, size):
            gray = a ^ (a >> 1)
            diff = gray ^ gray_prev
            bit = 0
            while (diff >> bit) & 1 == 0:
                bit += 1
            if (gray >> bit) & 1:
                idx += stride_data[s0 + bit]
            else:
                idx -= stride_data[s0 + bit]
            gray_prev = gray
            scratch[a] = idx
            z += joint[idx]
        if z <= 0.0:
            return np.nan
        w = row_weights[r] / z
        total_ll += row_weights[r] * np.log(z)
        for a in range(size):
            W[scratch[a]] += w
    return total_ll


@dataclass
class EmConfig:
    max_iters: int = 200
    tol: float = 1e-6
    seed: int = 0
    pseudocount: float = 1.0


@dataclass
class EmResult:
    net: BayesNet
    log_likelihood: float
    converged: bool
    iterations: int
    loglik_trace: list = field(default_factory=list)


def _em_initial_cpts(dag: DagStructure, seed: int) -> dict:
    """Uniform CPTs perturbed by seeded U(-0.01, 0.01) noise, renormalized."""
    rng = np.random.default_rng(seed)
    cpts = {}
    for node in dag.nodes:
        parents = dag.parents.get(node, ())
        shape = (2,) * (1 + len(parents))
        vals = 0.5 + rng.uniform(-0.01, 0.01, size=shape)
        vals = vals / vals.sum(axis=0, keepdims=True)
        cpts[node] = Factor.from_tensor((node, *parents), vals)
    return cpts


def _posterior_weights_numpy(joint, offsets, row_weights, stride_data, stride_ptr, W):
    """Pure-numpy fallback for the E-step accumulation."""
    total_ll = 0.0
    for r in range(offsets.shape[0]):
        strides = stride_data[stride_ptr[r] : stride_ptr[r + 1]]
        idx = np.array([offsets[r]], dtype=np.int64)
        for s in strides:
            idx = np.concatenate([idx, idx + s])
        z = float(joint[idx].sum())
        if z <= 0.0:
            return float("nan")
        w = row_weights[r] / z
        total_ll += row_weights[r] * math.log(z)
        np.add.at(W, idx, w)
    return total_ll


def learn_em(matrix: CaseMatrix, dag: DagStructure, config: EmConfig | None = None) -> EmResult:
    """Discrete expected-counts EM.

    E-step: for each row, condition the current full joint on the row's
    observed cells; accumulate the per-row posteriors as a weight grid
    over the joint assignment space, from which every family's expected
    sufficient statistics are read off. M-step: re-estimate CPTs with a
    Laplace pseudocount. Iterate until |delta log-likelihood| < tol.

    Non-convergence is not an error: the best iterate is returned with
    ``converged=False``.
    """
    config = config or EmConfig()
    if config.max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if (matrix.rows == MISSING).all():
        raise AllCellsMissing("every cell is missing; nothing to learn from")
    col = _family_columns(matrix, dag)
    n = len(dag.nodes)
    if n > JOINT_VARIABLE_CAP:
        raise DimensionOverflow(n, JOINT_VARIABLE_CAP)

    cpts = _em_initial_cpts(dag, config.seed)
    # the joint's variable order (a child-first scan of the factor list)
    # fixes the bit layout used below; it can differ from dag.nodes when
    # that order is not topological
    names = list(
        full_joint([cpts[v] for v in dag.nodes], cap=JOINT_VARIABLE_CAP).vars
    )

    # Deduplicate rows by observed signature. Joint layout: variable k of
    # ``names`` carries stride 2^k, so a row's evidence-consistent entries
    # are base offset + any subset of its missing-variable strides.
    ordered = np.stack(
        [matrix.rows[:, col[v]].astype(np.int64) for v in names], axis=1
    )
    sig_counts = {}
    for row in ordered:
        key = tuple(int(x) for x in row)
        sig_counts[key] = sig_counts.get(key, 0) + 1

    offsets = np.zeros(len(sig_counts), dtype=np.int64)
    row_weights = np.zeros(len(sig_counts), dtype=np.float64)
    stride_chunks = []
    stride_ptr = np.zeros(len(sig_counts) + 1, dtype=np.int64)
    max_missing = 0
    for r, (key, count) in enumerate(sig_counts.items()):
        base = 0
        strides = []
        for k, v in enumerate(key):
            if v == MISSING:
                strides.append(1 << k)
            else:
                base += int(v) << k
        offsets[r] = base
        row_weights[r] = count
        stride_chunks.extend(strides)
        stride_ptr[r + 1] = len(stride_chunks)
        max_missing = max(max_missing, len(strides))
    stride_data = np.array(stride_chunks, dtype=np.int64)
    scratch = np.zeros(1 << max_missing, dtype=np.int64)

    families = [(node, (node, *dag.parents.get(node, ()))) for node in names]
    fam_axes = {
        node: tuple(i for i, v in enumerate(names) if v not in fam)
        for node, fam in families
    }
    fam_perm = {}
    for node, fam in families:
        kept = [v for v in names if v in fam]
        fam_perm[node] = tuple(kept.index(v) for v in fam)

    loglik_trace = []
    converged = False
    iterations = 0
    W = np.zeros(1 << n, dtype=np.float64)

    for iteration in range(1, config.max_iters + 1):
        iterations = iteration
        joint = full_joint([cpts[v] for v in dag.nodes], cap=JOINT_VARIABLE_CAP)
        W[:] = 0.0
        if _HAVE_NUMBA:
            loglik = _estep_kernel(
                joint.vals, offsets, row_weights, stride_data, stride_ptr, W, scratch
            )
        else:  # pragma: no cover
            loglik = _posterior_weights_numpy(
                joint.vals, offsets, row_weights, stride_data, stride_ptr, W
            )
        if math.isnan(loglik):
            raise ZeroMass("observed row has zero probability under the current model")

        weighted = Factor(joint.vars, joint.cards, joint.vals * W).tensor()
        for node, fam in families:
            marg = weighted.sum(axis=fam_axes[node])
            counts = np.transpose(marg, fam_perm[node])
            cpts[node] = _counts_to_cpt(node, fam[1:], counts, config.pseudocount)

        loglik_trace.append(float(loglik))
        if iteration > 1 and abs(loglik_trace[-1] - loglik_trace[-2]) < config.tol:
            converged = True
            break

    net = BayesNet(dag=dag, cpts=cpts)
    return EmResult(
        net=net,
        log_likelihood=loglik_trace[-1],
        converged=converged,
        iterations=iterations,
        loglik_trace=loglik_trace,
    )
