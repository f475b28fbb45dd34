"""Average diameter of a posterior, the error functional, and the stopping rule.

The average diameter of a distribution pi over structures is the expected
distance between two independent draws.  It is computed exactly (O(n^2)) for
finite ensembles up to :data:`EXACT_LIMIT` structures and by Monte Carlo
otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    DistanceFn,
    PosteriorHandle,
    Structure,
    WeightedEnsemble,
)

__all__ = [
    "DiamEstimate",
    "EXACT_LIMIT",
    "avg_diam_exact",
    "avg_diam_mc",
    "avg_diam",
    "avg_dist_to_target",
    "stopping_sample_size",
    "stopping_threshold",
    "stopping_check",
]

# Largest finite ensemble for which exact O(n^2) computation is auto-selected.
EXACT_LIMIT = 2000


@dataclass(frozen=True)
class DiamEstimate:
    """Monte Carlo estimate of an average diameter."""

    value: float
    n_pairs: int
    std_err: float

    def __post_init__(self) -> None:
        if self.n_pairs < 1:
            raise ValueError("n_pairs must be >= 1")
        if self.value < 0 or self.std_err < 0:
            raise ValueError("value and std_err must be non-negative")


def avg_diam_exact(
    e: WeightedEnsemble, d: DistanceFn, dist_matrix: np.ndarray | None = None
) -> float:
    """Exact expected distance between two independent draws from ``e``.

    ``dist_matrix`` may be passed to reuse a precomputed pairwise matrix.
    """
    w = e.probabilities
    if dist_matrix is None:
        dist_matrix = d.matrix(e.structures)
    return float(w @ dist_matrix @ w)


def avg_diam_mc(
    p: PosteriorHandle, d: DistanceFn, n_pairs: int, rng: np.random.Generator
) -> DiamEstimate:
    """Unbiased Monte Carlo estimate of the average diameter from i.i.d. pairs."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    pairs = p.draw_pairs(n_pairs, rng)
    dists = d.cross([g for g, _ in pairs], [h for _, h in pairs])
    value = float(np.mean(dists))
    std_err = float(np.std(dists, ddof=1) / math.sqrt(n_pairs)) if n_pairs > 1 else 0.0
    return DiamEstimate(value=value, n_pairs=n_pairs, std_err=std_err)


def avg_diam(
    p: PosteriorHandle,
    d: DistanceFn,
    n_pairs: int,
    rng: np.random.Generator,
) -> float:
    """Average diameter: exact for small finite ensembles, Monte Carlo otherwise."""
    if isinstance(p, WeightedEnsemble) and len(p) <= EXACT_LIMIT:
        return avg_diam_exact(p, d)
    return avg_diam_mc(p, d, n_pairs, rng).value


def avg_dist_to_target(
    p: PosteriorHandle,
    g_star: Structure,
    d: DistanceFn,
    n: int,
    rng: np.random.Generator,
    exact: bool | None = None,
) -> float:
    """Expected distance from a posterior draw to the target structure.

    This is the evaluation metric of every experiment.  Exact summation is
    auto-selected for finite ensembles with at most :data:`EXACT_LIMIT`
    structures; pass ``exact=False`` to force Monte Carlo with ``n`` draws.
    """
    if exact is None:
        exact = isinstance(p, WeightedEnsemble) and len(p) <= EXACT_LIMIT
    if exact:
        if not isinstance(p, WeightedEnsemble):
            raise TypeError("exact mode requires a finite ensemble")
        w = p.probabilities
        dists = d.to_target(p.structures, g_star)
        return float(w @ dists)
    if n < 1:
        raise ValueError("n must be >= 1")
    gs = p.draw_structures(n, rng)
    return float(np.mean(d.to_target(gs, g_star)))


def stopping_sample_size(eps: float, lambda_prior: float, t: int, delta: float) -> int:
    """Number of pairs the stopping rule draws at the start of round ``t``."""
    if not 0 < eps < 1:
        raise ValueError("eps must be in (0, 1)")
    if lambda_prior < 1:
        raise ValueError("lambda_prior must be >= 1 (prior-mismatch factor)")
    if t < 1:
        raise ValueError("t must be >= 1")
    return math.ceil(
        (48.0 * lambda_prior**2 / eps) * math.log(t * (t + 1) / delta)
    )


def stopping_threshold(eps: float, lambda_prior: float) -> float:
    """Mean pair distance at or below which the stopping rule fires."""
    return 3.0 * eps / (4.0 * lambda_prior**2)


def stopping_check(
    p: PosteriorHandle,
    eps: float,
    lambda_prior: float,
    t: int,
    delta: float,
    d: DistanceFn,
    rng: np.random.Generator,
) -> bool:
    """Draw the round-``t`` pair budget and test the mean distance against the
    stopping threshold.  Returns True when querying should stop."""
    n_t = stopping_sample_size(eps, lambda_prior, t, delta)
    est = avg_diam_mc(p, d, n_t, rng)
    return est.value <= stopping_threshold(eps, lambda_prior)
