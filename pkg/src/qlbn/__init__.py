"""Process mining and classical/quantum-like Bayesian inference."""

from .bayesnet import (
    BayesNet,
    Distribution,
    EmConfig,
    EmResult,
    Factor,
    MarginalVectors,
    classical_prob,
    full_joint,
    learn_em,
    learn_mle,
    marginalize,
    observe_evidence,
)
from .eventlog import (
    ABSENT,
    MISSING,
    PRESENT,
    CaseMatrix,
    EventLog,
    EventRecord,
    Lifecycle,
    activity_stats,
    filter_lifecycle,
    merge_activities,
    parse_csv,
    parse_xes,
    to_case_matrix,
    write_csv,
)
from .procmine import (
    DagStructure,
    MergeRule,
    TransitionGraph,
    apply_merges,
    build_transition_graph,
    prune_edges,
    remove_cycles,
    suggest_merges,
)
from .quantum import (
    AmplitudeNet,
    InferenceResult,
    InterferenceParams,
    SimilarityAngles,
    amplitudes_from_cpt,
    infer_quantum,
    interference_term,
    pair_operations,
    quantum_joint,
    quantum_prob,
    similarity_heuristic,
)

__version__ = "0.1.0"
