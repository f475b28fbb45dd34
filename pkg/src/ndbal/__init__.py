"""Diameter-based interactive structure discovery.

A library and CLI for learning an unknown structure (classifier, ranking,
clustering, choice model, ...) through noisy interactive queries, by driving
the posterior's average diameter down: each round queries an atom chosen to
split the current posterior, updates it from the noisy response, and stops
once the posterior is concentrated.

Entry points:

* :class:`NdbalConfig` + :func:`run_ndbal` / :func:`run_random_baseline` /
  :func:`run_qbc_baseline` — single runs against an oracle.
* :mod:`ndbal.instances` — concrete structure spaces, distances, and oracles.
* :mod:`ndbal.splitting` — split-index estimation and verification reports.
* :mod:`ndbal.harness` — configured multi-trial experiments with CSV output.
* ``ndbal`` console script — ``run`` / ``verify`` / ``report``.
"""

from .core import (
    Atom,
    ConfigError,
    DegeneratePosteriorError,
    DistanceFn,
    EmptyPosteriorError,
    FunctionDistance,
    IncompatibleAtomError,
    Oracle,
    PosteriorHandle,
    ResponseSet,
    RngStream,
    Structure,
    StructureDiscoveryError,
    StructureSpace,
    VersionSpaceEmptyError,
    WeightedEnsemble,
    normalize,
)
from .losses import LOGISTIC, ZERO_ONE, Loss, get_loss
from .diameter import (
    DiamEstimate,
    avg_diam,
    avg_diam_exact,
    avg_diam_mc,
    avg_dist_to_target,
    stopping_check,
    stopping_sample_size,
    stopping_threshold,
)
from .select import (
    SelectTimeoutError,
    SplitTally,
    exact_average_split,
    select,
    threshold_n,
)
from .samplers import (
    ContinuousPosterior,
    MalaChain,
    adapted_eta,
    mala_log_accept,
    mala_step,
    adapt_step,
    sample_finite,
    sample_posterior,
)
from .instances import (
    AngleDistance,
    ApproxBestItemDistance,
    BestItemDistance,
    ClusterIdDistance,
    DisagreementDistance,
    FairnessDistance,
    FiniteLabeledSpace,
    IndexedFamily,
    IntervalClusteringSpace,
    IntervalPairDistance,
    IntervalProtectedDistance,
    LinearClassifierSpace,
    LogitChoiceSpace,
    MatrixDistance,
    RankingDistance,
    RankingSpace,
    SeparationFamily,
    best_index,
    build_separation_family,
    d_approx_best_item,
    d_best_item,
    d_classifier,
    d_cluster_id,
    d_fair,
    d_interval_I,
    d_interval_c,
    d_rank,
    flip_oracle,
    logistic_oracle,
    logit_choice_oracle,
    massart_oracle,
    recommended_beta,
    unit_sphere,
)
from .algorithm import (
    NdbalConfig,
    RoundLog,
    RunRecord,
    apply_update,
    run_ndbal,
    run_qbc_baseline,
    run_random_baseline,
    score_queries,
    score_query,
    update_general_loss,
    update_hard,
    update_soft01,
)
from .splitting import (
    EdgeSet,
    IndexReport,
    ProbeReport,
    default_rho_grid,
    edge_split,
    estimate_avg_split_tau,
    rho_star,
    splitting_vs_avg_splitting_probe,
    verify_interval_index,
    verify_ranking_index,
    wilson_interval,
)
from .harness import (
    CurvePoint,
    ExperimentConfig,
    bootstrap_ci,
    emit_curves,
    load_config,
    read_curves,
    run_experiment,
    run_trial,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # core
    "Atom",
    "Structure",
    "ResponseSet",
    "StructureSpace",
    "DistanceFn",
    "FunctionDistance",
    "Oracle",
    "WeightedEnsemble",
    "normalize",
    "PosteriorHandle",
    "RngStream",
    "StructureDiscoveryError",
    "EmptyPosteriorError",
    "VersionSpaceEmptyError",
    "DegeneratePosteriorError",
    "IncompatibleAtomError",
    "ConfigError",
    # losses
    "Loss",
    "ZERO_ONE",
    "LOGISTIC",
    "get_loss",
    # diameter
    "DiamEstimate",
    "avg_diam",
    "avg_diam_exact",
    "avg_diam_mc",
    "avg_dist_to_target",
    "stopping_sample_size",
    "stopping_threshold",
    "stopping_check",
    # select
    "SelectTimeoutError",
    "SplitTally",
    "threshold_n",
    "select",
    "exact_average_split",
    # samplers
    "MalaChain",
    "adapted_eta",
    "mala_log_accept",
    "mala_step",
    "adapt_step",
    "sample_finite",
    "ContinuousPosterior",
    "sample_posterior",
    # instances
    "LinearClassifierSpace",
    "LogitChoiceSpace",
    "RankingSpace",
    "IntervalClusteringSpace",
    "FiniteLabeledSpace",
    "IndexedFamily",
    "SeparationFamily",
    "build_separation_family",
    "AngleDistance",
    "RankingDistance",
    "BestItemDistance",
    "ApproxBestItemDistance",
    "IntervalPairDistance",
    "IntervalProtectedDistance",
    "ClusterIdDistance",
    "FairnessDistance",
    "DisagreementDistance",
    "MatrixDistance",
    "best_index",
    "d_approx_best_item",
    "d_best_item",
    "d_classifier",
    "d_cluster_id",
    "d_fair",
    "d_interval_I",
    "d_interval_c",
    "d_rank",
    "unit_sphere",
    "flip_oracle",
    "massart_oracle",
    "logistic_oracle",
    "logit_choice_oracle",
    "recommended_beta",
    # algorithm
    "NdbalConfig",
    "RoundLog",
    "RunRecord",
    "update_hard",
    "update_soft01",
    "update_general_loss",
    "apply_update",
    "score_query",
    "score_queries",
    "run_ndbal",
    "run_random_baseline",
    "run_qbc_baseline",
    # splitting
    "EdgeSet",
    "IndexReport",
    "ProbeReport",
    "wilson_interval",
    "rho_star",
    "default_rho_grid",
    "edge_split",
    "estimate_avg_split_tau",
    "verify_ranking_index",
    "verify_interval_index",
    "splitting_vs_avg_splitting_probe",
    # harness
    "ExperimentConfig",
    "CurvePoint",
    "load_config",
    "run_experiment",
    "run_trial",
    "bootstrap_ci",
    "emit_curves",
    "read_curves",
]
