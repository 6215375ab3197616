"""HMM inference under segment-count constraints.

Linear-time decoding, exact count posteriors, and conditional path
sampling for HMMs augmented with a deterministic segment counter, plus
constrained EM and Gibbs learning and a brute-force enumeration oracle
for validation on small instances.
"""
from .counting import (
    FORBIDDEN,
    CounterState,
    CountingSpec,
    count_segments,
    counter_init,
    counter_state_space,
    counter_step,
)
from .hmm import EmOptions, em_fit, ffbs_sample, forward, gaussian_quantile_init, viterbi
from .kseg import (
    DpTables,
    KsegSummary,
    SegmentConstraint,
    ZeroProbabilityError,
    kmax_summary,
    kseg_backward,
    kseg_forward,
    kseg_map,
    kseg_prob,
    kseg_sample,
    kseg_viterbi,
)
from .learning import (
    ConjugatePrior,
    ConstrainedFitResult,
    ParamSampleSet,
    constrained_em,
    constrained_marginals,
    gibbs_fit,
    match_labels,
    reconstruction_error,
    retrospective_map,
    retrospective_prob,
    retrospective_sample,
)
from .model import (
    CategoricalEmission,
    GaussianEmission,
    HmmModel,
    log_emission,
    simulate,
)
from .oracle import (
    ExactPosterior,
    PathDistribution,
    enumerate_posterior,
    oracle_conditional,
    oracle_counts,
    oracle_event_log_joint,
    oracle_event_prob,
    oracle_map,
)

__version__ = "0.1.0"

__all__ = [
    "CategoricalEmission",
    "ConjugatePrior",
    "ConstrainedFitResult",
    "CounterState",
    "CountingSpec",
    "DpTables",
    "EmOptions",
    "ExactPosterior",
    "FORBIDDEN",
    "GaussianEmission",
    "HmmModel",
    "KsegSummary",
    "ParamSampleSet",
    "PathDistribution",
    "SegmentConstraint",
    "ZeroProbabilityError",
    "constrained_em",
    "constrained_marginals",
    "count_segments",
    "counter_init",
    "counter_state_space",
    "counter_step",
    "em_fit",
    "enumerate_posterior",
    "ffbs_sample",
    "forward",
    "gaussian_quantile_init",
    "gibbs_fit",
    "kmax_summary",
    "kseg_backward",
    "kseg_forward",
    "kseg_map",
    "kseg_prob",
    "kseg_sample",
    "kseg_viterbi",
    "log_emission",
    "match_labels",
    "oracle_conditional",
    "oracle_counts",
    "oracle_event_log_joint",
    "oracle_event_prob",
    "oracle_map",
    "reconstruction_error",
    "retrospective_map",
    "retrospective_prob",
    "retrospective_sample",
    "simulate",
    "viterbi",
]
