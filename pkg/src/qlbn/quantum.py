"""Quantum-like inference: amplitude networks, Born-rule joints, and
interference-augmented marginalization.

Amplitude tables hold magnitudes |psi| = sqrt(p); phases are not stored
per entry. Instead a single effective phase-difference angle, chosen by
a law-of-cosines similarity heuristic over the positive/negative
marginal vectors, is shared by every interference pair. Setting the
angle to a right angle zeroes the interference and recovers the
classical answer exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .bayesnet import (
    BayesNet,
    Distribution,
    Factor,
    MarginalVectors,
    classical_prob,
    full_joint,
    marginalize,
    observe_evidence,
)
from .errors import InputError, NegativeProbability, ZeroMass
from .eventlog import PRESENT
from .procmine import DagStructure

# Effective-angle buckets for the similarity ratio phi. The two
# non-trivial angles come from a prior calibration and are treated as
# given constants; the (0, 0.15) gap maps to fully constructive
# interference, which is surprising enough to be flagged downstream.
ANGLE_STRONG_CONSTRUCTIVE = 1.5408
ANGLE_MILD_CONSTRUCTIVE = 1.5178
ANGLE_DESTRUCTIVE = math.pi
ANGLE_GAP = 0.0
RIGHT_ANGLE = math.pi / 2

PHI_STRONG_LIMIT = -2.0
PHI_MILD_LIMIT = 0.0
PHI_DESTRUCTIVE_LIMIT = 0.15

MODE_AMPLITUDE = "amplitude"
MODE_PROBABILITY = "probability"

DEGENERATE_NORM_C = 1e-12
DEGENERATE_NORM_PRODUCT = 1e-24


@dataclass(frozen=True)
class SimilarityAngles:
    theta_a: float
    theta_b: float
    theta_c: float
    phi: float


@dataclass(frozen=True)
class InterferenceParams:
    theta: float
    cos_theta: float
    mode: str = MODE_AMPLITUDE
    phi: float = float("nan")
    angles: SimilarityAngles | None = None
    degenerate: bool = False
    gap: bool = False


class InterferenceValue(NamedTuple):
    value: float
    pair_ops: int


@dataclass
class AmplitudeNet:
    dag: DagStructure
    amps: dict  # node -> Factor of amplitude magnitudes

    def factors(self) -> list[Factor]:
        return [self.amps[n] for n in self.dag.nodes]


def amplitudes_from_cpt(net: BayesNet) -> AmplitudeNet:
    """Lift a classical net to amplitude magnitudes via the square root;
    squared magnitudes reproduce the CPTs exactly."""
    amps = {}
    for node, f in net.cpts.items():
        if (f.vals < 0.0).any():
            raise NegativeProbability(f"CPT for {node!r} has negative entries")
        amps[node] = Factor(f.vars, f.cards, np.sqrt(f.vals))
    return AmplitudeNet(dag=net.dag, amps=amps)


def quantum_joint(anet: AmplitudeNet, evidence=None) -> Factor:
    """Per-assignment product of amplitude magnitudes with
    evidence-inconsistent entries zeroed."""
    factors = anet.factors()
    if evidence:
        factors = observe_evidence(factors, evidence)
    return full_joint(factors)


def _clamped_acos(x: float) -> float:
    return math.acos(min(1.0, max(-1.0, x)))


def similarity_heuristic(pos, neg) -> InterferenceParams:
    """Law-of-cosines angles between the marginal vectors, mapped through
    the calibrated phi thresholds to one effective interference angle.

    Degenerate geometry (equal vectors, or a vanishing vector) carries no
    usable phase information and collapses to a right angle: cos = 0,
    no interference.
    """
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.asarray(neg, dtype=np.float64)
    if pos.shape != neg.shape or pos.size < 1:
        raise InputError("pos and neg must be equally sized, non-empty vectors")
    if (pos < 0).any() or (neg < 0).any():
        raise InputError("marginal vectors must be non-negative")

    norm_c = float(np.linalg.norm(pos - neg))
    norm_a = float(np.linalg.norm(pos))
    norm_b = float(np.linalg.norm(neg))
    if norm_c < DEGENERATE_NORM_C or norm_a * norm_b < DEGENERATE_NORM_PRODUCT:
        return InterferenceParams(
            theta=RIGHT_ANGLE, cos_theta=0.0, degenerate=True
        )

    theta_a = _clamped_acos(
        (norm_b**2 - norm_a**2 + norm_c**2) / (2.0 * norm_c * norm_b)
    )
    theta_b = _clamped_acos(
        (norm_a**2 - norm_b**2 + norm_c**2) / (2.0 * norm_c * norm_a)
    )
    theta_c = _clamped_acos(
        (norm_a**2 + norm_b**2 - norm_c**2) / (2.0 * norm_a * norm_b)
    )
    if theta_a < 1e-15:
        diff = theta_c - theta_b
        phi = math.copysign(math.inf, diff) if diff != 0.0 else 0.0
    else:
        phi = theta_c / theta_a - theta_b / theta_a
    angles = SimilarityAngles(theta_a=theta_a, theta_b=theta_b, theta_c=theta_c, phi=phi)

    gap = False
    if phi < PHI_STRONG_LIMIT:
        theta = ANGLE_STRONG_CONSTRUCTIVE
    elif phi <= PHI_MILD_LIMIT:
        theta = ANGLE_MILD_CONSTRUCTIVE
    elif phi >= PHI_DESTRUCTIVE_LIMIT:
        theta = ANGLE_DESTRUCTIVE
    else:
        theta = ANGLE_GAP
        gap = True
    return InterferenceParams(
        theta=theta,
        cos_theta=math.cos(theta),
        phi=phi,
        angles=angles,
        gap=gap,
    )


def pair_operations(m: int) -> int:
    """Number of interference pair operations for an m-entry vector."""
    return m * (m + 1) // 2 - m


def interference_term(vec, params: InterferenceParams) -> InterferenceValue:
    """Pairwise interference sum with a shared effective angle.

    amplitude mode treats entries as probabilities lambda and sums
    2 * sqrt(li) * sqrt(lj) * cos(theta) over pairs i < j; probability
    mode multiplies the entries directly. Both collapse to the closed
    form c * (S1^2 - S2) because the angle is pair-independent.
    """
    vec = np.asarray(vec, dtype=np.float64)
    if (vec < 0).any():
        raise InputError("interference input must be non-negative")
    m = int(vec.size)
    ops = pair_operations(m)
    c = params.cos_theta
    if c == 0.0 or m < 2:
        return InterferenceValue(0.0, ops)
    if params.mode == MODE_PROBABILITY:
        s1 = float(vec.sum())
        s2 = float((vec * vec).sum())
    else:
        root = np.sqrt(vec)
        s1 = float(root.sum())
        s2 = float(vec.sum())
    return InterferenceValue(c * (s1 * s1 - s2), ops)


@dataclass(frozen=True)
class QuantumOutcome:
    distribution: Distribution
    params: InterferenceParams
    clamped: bool
    pair_ops: int


def quantum_prob(
    mv: MarginalVectors,
    mode: str = MODE_AMPLITUDE,
    forced_theta: float | None = None,
) -> QuantumOutcome:
    """Interference-augmented normalization of the marginal vectors.

    Negative post-interference masses are clamped to zero and flagged;
    the pair is then renormalized to a distribution. ``forced_theta``
    overrides the similarity heuristic (a right angle reproduces the
    classical answer exactly).
    """
    if mode not in (MODE_AMPLITUDE, MODE_PROBABILITY):
        raise InputError(f"unknown interference mode {mode!r}")
    s_pos = float(mv.pos.sum())
    s_neg = float(mv.neg.sum())
    total = s_pos + s_neg
    if total <= 0.0:
        raise ZeroMass("marginal vectors carry no probability mass")
    alpha = 1.0 / total

    if forced_theta is not None:
        cos_theta = 0.0 if forced_theta == RIGHT_ANGLE else math.cos(forced_theta)
        params = InterferenceParams(theta=forced_theta, cos_theta=cos_theta, mode=mode)
    else:
        params = similarity_heuristic(mv.pos, mv.neg)
        params = InterferenceParams(
            theta=params.theta,
            cos_theta=params.cos_theta,
            mode=mode,
            phi=params.phi,
            angles=params.angles,
            degenerate=params.degenerate,
            gap=params.gap,
        )

    i_pos = interference_term(alpha * mv.pos, params)
    i_neg = interference_term(alpha * mv.neg, params)
    prob_pos = alpha * s_pos + i_pos.value
    prob_neg = alpha * s_neg + i_neg.value

    clamped = False
    if prob_pos < 0.0:
        prob_pos = 0.0
        clamped = True
    if prob_neg < 0.0:
        prob_neg = 0.0
        clamped = True
    norm = prob_pos + prob_neg
    if norm <= 0.0:
        # fully destructive on both sides: no usable quantum signal
        dist = Distribution(present=s_pos * alpha, absent=s_neg * alpha)
        return QuantumOutcome(dist, params, True, i_pos.pair_ops)
    dist = Distribution(present=prob_pos / norm, absent=prob_neg / norm)
    return QuantumOutcome(dist, params, clamped, i_pos.pair_ops)


@dataclass
class InferenceResult:
    query: str
    evidence: dict
    classical: Distribution
    quantum: Distribution
    phi: float
    h_theta: float
    cos_theta: float
    mode: str
    clamped: bool
    pair_ops: int
    degenerate: bool = False
    gap: bool = False

    def to_json(self) -> str:
        evidence = {
            var: ("present" if val == PRESENT else "absent")
            for var, val in self.evidence.items()
        }
        payload = {
            "query": self.query,
            "evidence": evidence,
            "classical": {
                "present": self.classical.present,
                "absent": self.classical.absent,
            },
            "quantum": {
                "present": self.quantum.present,
                "absent": self.quantum.absent,
            },
            "phi": self.phi if math.isfinite(self.phi) else None,
            "h_theta": self.h_theta,
            "mode": self.mode,
            "clamped": self.clamped,
            "pair_ops": self.pair_ops,
        }
        return json.dumps(payload, indent=2)


def infer_quantum(
    anet: AmplitudeNet,
    query: str,
    evidence=None,
    mode: str = MODE_AMPLITUDE,
    forced_theta: float | None = None,
) -> InferenceResult:
    """Quantum-like query: Born-rule joint, marginal split on the squared
    magnitudes, then interference-augmented normalization. The classical
    answer from the same marginal vectors rides along for comparison."""
    evidence = dict(evidence or {})
    amp_joint = quantum_joint(anet, evidence)
    prob_joint = Factor(amp_joint.vars, amp_joint.cards, amp_joint.vals**2)
    mv = marginalize(prob_joint, query, evidence)
    classical = classical_prob(mv)
    outcome = quantum_prob(mv, mode=mode, forced_theta=forced_theta)
    return InferenceResult(
        query=query,
        evidence=evidence,
        classical=classical,
        quantum=outcome.distribution,
        phi=outcome.params.phi,
        h_theta=outcome.params.theta,
        cos_theta=outcome.params.cos_theta,
        mode=mode,
        clamped=outcome.clamped,
        pair_ops=outcome.pair_ops,
        degenerate=outcome.params.degenerate,
        gap=outcome.params.gap,
    )
