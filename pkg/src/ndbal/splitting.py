"""Empirical splitting-index estimation.

Two notions are measured for a structure ensemble:

* the edge split of an atom — the fraction of high-distance structure pairs
  ("edges") that the atom's response is guaranteed to cut, and
* the average split — the relative drop of the weighted average pair
  distance guaranteed by the atom's worst response.

``estimate_avg_split_tau`` reports, over atoms drawn from the query
distribution, how often the average split clears each value of a grid
(tau-hat, with Wilson confidence intervals).  The two ``verify_*`` helpers
run this measurement on the ranking and interval-clustering families at the
thresholds those families are known to clear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .core import (
    Atom,
    ConfigError,
    DistanceFn,
    Structure,
    StructureSpace,
    WeightedEnsemble,
)
from .diameter import avg_diam_exact
from .instances import (
    IntervalClusteringSpace,
    IntervalPairDistance,
    RankingDistance,
    RankingSpace,
)
from .select import exact_average_split

__all__ = [
    "EdgeSet",
    "IndexReport",
    "ProbeRow",
    "ProbeReport",
    "wilson_interval",
    "default_rho_grid",
    "rho_star",
    "edge_split",
    "estimate_avg_split_tau",
    "verify_ranking_index",
    "verify_interval_index",
    "splitting_vs_avg_splitting_probe",
]

DEFAULT_ENSEMBLE_SIZE = 64
_SPLIT_TOL = 1e-9


@dataclass(frozen=True)
class EdgeSet:
    """Structure pairs whose distance exceeds the ``eps_edge`` floor."""

    pairs: tuple[tuple[Structure, Structure], ...]
    distances: tuple[float, ...]
    eps_edge: float

    def __post_init__(self) -> None:
        if len(self.pairs) != len(self.distances):
            raise ConfigError("pairs and distances must align")
        if any(dist <= self.eps_edge for dist in self.distances):
            raise ConfigError("every edge must have distance > eps_edge")

    def __len__(self) -> int:
        return len(self.pairs)

    @classmethod
    def from_structures(
        cls,
        structures: Sequence[Structure],
        d: DistanceFn,
        eps_edge: float,
    ) -> "EdgeSet":
        """All unordered pairs with distance strictly above the floor."""
        dist_matrix = d.matrix(structures)
        pairs = []
        dists = []
        n = len(structures)
        for i in range(n):
            for j in range(i + 1, n):
                if dist_matrix[i, j] > eps_edge:
                    pairs.append((structures[i], structures[j]))
                    dists.append(float(dist_matrix[i, j]))
        return cls(pairs=tuple(pairs), distances=tuple(dists), eps_edge=eps_edge)


def edge_split(e: EdgeSet, a: Atom, space: StructureSpace) -> float:
    """1 minus the largest fraction of edges left intact by one response
    (an edge survives response y only if both endpoints answer y)."""
    if len(e) == 0:
        raise ConfigError("edge set must be non-empty")
    n_labels = len(space.response_set)
    consensus = np.zeros(n_labels, dtype=np.int64)
    rs = space.response_set
    for g, h in e.pairs:
        yg = rs.index(space.evaluate(g, a))
        if yg == rs.index(space.evaluate(h, a)):
            consensus[yg] += 1
    return 1.0 - consensus.max() / len(e)


def wilson_interval(successes: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    z = float(norm.ppf(0.5 + level / 2.0))
    p_hat = successes / n
    denom = 1.0 + z * z / n
    center = (p_hat + z * z / (2 * n)) / denom
    half = (z / denom) * math.sqrt(p_hat * (1 - p_hat) / n + z * z / (4 * n * n))
    # clamp against rounding so the point estimate always lies inside
    return max(0.0, min(p_hat, center - half)), min(1.0, max(p_hat, center + half))


def rho_star(eps: float) -> float:
    """Split threshold the ranking/interval families are known to clear:
    1 / (16 * ceil(log2(2/eps)))."""
    if not 0 < eps < 1:
        raise ConfigError("eps must be in (0, 1)")
    return 1.0 / (16.0 * math.ceil(math.log2(2.0 / eps)))


def default_rho_grid(eps: float) -> tuple[float, ...]:
    r = rho_star(eps)
    return tuple(sorted({r / 2.0, r, 2.0 * r, 0.1, 0.25, 0.5}))


@dataclass(frozen=True)
class IndexReport:
    """tau-hat per grid value: the fraction of sampled atoms whose average
    split clears that value, with Wilson confidence intervals."""

    rho_grid: tuple[float, ...]
    tau_hat: tuple[float, ...]
    ci_low: tuple[float, ...]
    ci_high: tuple[float, ...]
    n_atoms: int
    n_pairs: int
    level: float = 0.95
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        k = len(self.rho_grid)
        if not (len(self.tau_hat) == len(self.ci_low) == len(self.ci_high) == k):
            raise ConfigError("report columns must align")
        if any(not 0.0 <= t <= 1.0 for t in self.tau_hat):
            raise ConfigError("tau_hat values must be in [0, 1]")

    def at(self, rho: float) -> tuple[float, float, float]:
        """(tau_hat, ci_low, ci_high) at a grid value."""
        for i, r in enumerate(self.rho_grid):
            if abs(r - rho) <= 1e-12:
                return self.tau_hat[i], self.ci_low[i], self.ci_high[i]
        raise KeyError(f"rho {rho} not in grid {self.rho_grid}")


def _split_values(
    ensemble: WeightedEnsemble,
    atoms: Sequence[Atom],
    d: DistanceFn,
    space: StructureSpace,
    dist_matrix: np.ndarray,
) -> list[float]:
    return [
        exact_average_split(ensemble, a, d, space, dist_matrix=dist_matrix)
        for a in atoms
    ]


def _report_from_counts(
    rho_grid: Sequence[float],
    splits: Sequence[float],
    n_pairs: int,
    level: float,
    extras: dict,
) -> IndexReport:
    n = len(splits)
    tau, lo, hi = [], [], []
    splits_arr = np.asarray(splits, dtype=float)
    for rho in rho_grid:
        successes = int(np.sum(splits_arr >= rho - _SPLIT_TOL))
        tau.append(successes / n)
        ci = wilson_interval(successes, n, level)
        lo.append(ci[0])
        hi.append(ci[1])
    return IndexReport(
        rho_grid=tuple(rho_grid),
        tau_hat=tuple(tau),
        ci_low=tuple(lo),
        ci_high=tuple(hi),
        n_atoms=n,
        n_pairs=n_pairs,
        level=level,
        extras=extras,
    )


def estimate_avg_split_tau(
    space: StructureSpace,
    ensemble: WeightedEnsemble,
    d: DistanceFn,
    rho_grid: Sequence[float],
    n_atoms: int,
    rng: np.random.Generator,
    level: float = 0.95,
) -> IndexReport:
    """Estimate, per grid value rho, the probability that a random atom
    rho-average-splits the ensemble."""
    if n_atoms < 1:
        raise ConfigError("n_atoms must be >= 1")
    dist_matrix = d.matrix(ensemble.structures)
    atoms = space.sample_atoms(n_atoms, rng)
    splits = _split_values(ensemble, atoms, d, space, dist_matrix)
    return _report_from_counts(
        rho_grid, splits, len(ensemble) ** 2, level, extras={}
    )


def _pooled_verification(
    make_space_and_distance,
    eps: float,
    n_trials: int,
    rng: np.random.Generator,
    n_atoms: int,
    ensemble_size: int,
    rho_grid: Sequence[float] | None,
    level: float,
    extras: dict,
) -> IndexReport:
    """Pool split measurements over i.i.d.-prior ensembles whose average
    diameter clears eps (others are skipped and counted)."""
    grid = tuple(rho_grid) if rho_grid is not None else default_rho_grid(eps)
    space, d = make_space_and_distance()
    splits: list[float] = []
    skipped = 0
    used = 0
    for _ in range(n_trials):
        structures = space.sample_structures(ensemble_size, rng)
        ensemble = WeightedEnsemble.uniform(structures)
        dist_matrix = d.matrix(structures)
        if avg_diam_exact(ensemble, d, dist_matrix) <= eps:
            skipped += 1
            continue
        used += 1
        atoms = space.sample_atoms(n_atoms, rng)
        splits.extend(_split_values(ensemble, atoms, d, space, dist_matrix))
    if not splits:
        raise ConfigError(
            "every sampled ensemble had average diameter <= eps; nothing to measure"
        )
    r = rho_star(eps)
    extras = dict(extras)
    extras.update(
        {"rho_star": r, "eps": eps, "trials_used": used, "trials_skipped": skipped}
    )
    report = _report_from_counts(grid, splits, ensemble_size**2, level, extras)
    tau_at_star, lo, _hi = report.at(r)
    report.extras["tau_at_rho_star"] = tau_at_star
    report.extras["positive_at_rho_star"] = lo > 0.0
    return report


def verify_ranking_index(
    d_dim: int,
    eps: float,
    n_trials: int,
    rng: np.random.Generator,
    n_atoms: int = 64,
    ensemble_size: int = DEFAULT_ENSEMBLE_SIZE,
    rho_grid: Sequence[float] | None = None,
    level: float = 0.95,
) -> IndexReport:
    """Measured split rates for ensembles of random linear rankers; the
    extras carry c_hat = tau_hat(rho_star)/eps, expected strictly positive."""
    if d_dim < 2:
        raise ConfigError("d_dim must be >= 2")
    report = _pooled_verification(
        lambda: (RankingSpace(d_dim), RankingDistance()),
        eps,
        n_trials,
        rng,
        n_atoms,
        ensemble_size,
        rho_grid,
        level,
        extras={"family": "ranking", "dim": d_dim},
    )
    report.extras["c_hat"] = report.extras["tau_at_rho_star"] / eps
    return report


def verify_interval_index(
    k: int,
    interval: tuple[float, float],
    eps: float,
    n_trials: int,
    rng: np.random.Generator,
    n_atoms: int = 64,
    ensemble_size: int = DEFAULT_ENSEMBLE_SIZE,
    rho_grid: Sequence[float] | None = None,
    level: float = 0.95,
) -> IndexReport:
    """Measured split rates for interval clusterings with a protected
    interval; the extras carry the eps*alpha/2 floor and whether the
    confidence interval at rho_star falls below it."""
    alpha = float(interval[1]) - float(interval[0])
    report = _pooled_verification(
        lambda: (
            IntervalClusteringSpace(k, interval, atom_mode="pair"),
            IntervalPairDistance(),
        ),
        eps,
        n_trials,
        rng,
        n_atoms,
        ensemble_size,
        rho_grid,
        level,
        extras={"family": "interval", "k": k, "alpha": alpha},
    )
    floor = eps * alpha / 2.0
    _tau, _lo, hi = report.at(report.extras["rho_star"])
    report.extras["tau_floor"] = floor
    report.extras["floor_violated"] = hi < floor
    return report


@dataclass(frozen=True)
class ProbeRow:
    edge_rho: float
    avg_rho: float


@dataclass(frozen=True)
class ProbeReport:
    """Per-atom edge split vs average split, plus the scale factor
    1/(4*ceil(log2(1/eps_edge))) at which an edge split is expected to imply
    an average split (one direction only)."""

    rows: tuple[ProbeRow, ...]
    eps_edge: float
    scale: float

    @property
    def n_consistent(self) -> int:
        """Atoms whose average split clears their scaled edge split."""
        return sum(1 for r in self.rows if r.avg_rho >= r.edge_rho * self.scale - _SPLIT_TOL)


def splitting_vs_avg_splitting_probe(
    space: StructureSpace,
    ensemble: WeightedEnsemble,
    edges: EdgeSet,
    d: DistanceFn,
    n_atoms: int,
    rng: np.random.Generator,
) -> ProbeReport:
    """Evaluate both split notions on the same sampled atoms."""
    if len(edges) == 0:
        raise ConfigError("edge set must be non-empty")
    if n_atoms < 1:
        raise ConfigError("n_atoms must be >= 1")
    if edges.eps_edge <= 0 or edges.eps_edge >= 1:
        raise ConfigError("eps_edge must be in (0, 1) for the scale factor")
    dist_matrix = d.matrix(ensemble.structures)
    atoms = space.sample_atoms(n_atoms, rng)
    rows = []
    for a in atoms:
        rows.append(
            ProbeRow(
                edge_rho=edge_split(edges, a, space),
                avg_rho=exact_average_split(ensemble, a, d, space, dist_matrix=dist_matrix),
            )
        )
    scale = 1.0 / (4.0 * math.ceil(math.log2(1.0 / edges.eps_edge)))
    return ProbeReport(rows=tuple(rows), eps_edge=edges.eps_edge, scale=scale)
