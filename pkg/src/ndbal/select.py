"""Inverse-sampling choice of the best-splitting atom, plus the exact
average-split oracle used to validate it.

The selector draws structure pairs from the posterior and accrues, for every
candidate atom and response, the pair distances *not* explained by consensus
on that response.  The first atom whose worst response still accrues past the
threshold N is, with high probability, a near-best average splitter — and the
number of pairs consumed adapts automatically to how well the posterior
splits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Atom,
    DegeneratePosteriorError,
    DistanceFn,
    PosteriorHandle,
    StructureDiscoveryError,
    StructureSpace,
    WeightedEnsemble,
)

__all__ = [
    "SplitTally",
    "SelectTimeoutError",
    "threshold_n",
    "select",
    "exact_average_split",
]

_PAIR_BLOCK = 1024


class SelectTimeoutError(StructureDiscoveryError):
    """No atom qualified within the round cap.

    Carries the best candidate seen so far (largest minimum-over-responses
    tally) so callers may fall back to it.
    """

    def __init__(self, message: str, best_atom: Atom, best_min_tally: float, rounds: int):
        super().__init__(message)
        self.best_atom = best_atom
        self.best_min_tally = best_min_tally
        self.rounds = rounds


@dataclass
class SplitTally:
    """Accumulators S[atom, response], the round counter K, and threshold N."""

    s: np.ndarray
    n: float
    k: int = 0

    def min_per_atom(self) -> np.ndarray:
        return self.s.min(axis=1)

    def qualified(self) -> np.ndarray:
        return self.min_per_atom() >= self.n


def threshold_n(alpha: float, delta: float, m: int, y_count: int) -> float:
    """Tally threshold: 6(2+alpha)/alpha^2 * ln((m + |Y|)/delta)."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    if not 0 < delta < 1:
        raise ValueError("delta must be in (0, 1)")
    if m < 1:
        raise ValueError("m must be >= 1")
    if y_count < 2:
        raise ValueError("y_count must be >= 2")
    return 6.0 * (2.0 + alpha) / alpha**2 * math.log((m + y_count) / delta)


def select(
    p: PosteriorHandle,
    atoms: list[Atom],
    alpha: float,
    delta: float,
    d: DistanceFn,
    space: StructureSpace,
    rng: np.random.Generator,
    k_max: int | None = None,
    tally_out: SplitTally | None = None,
) -> Atom:
    """Return the first candidate atom whose minimum-over-responses tally
    reaches the threshold (lowest index on same-round ties).

    Raises :class:`SelectTimeoutError` after ``k_max`` rounds (default
    ceil(50 N)) if no atom qualifies — unavoidable when the posterior has
    (near-)zero diameter, since then nothing ever accrues.
    """
    if not atoms:
        raise ValueError("atoms must be non-empty")
    m = len(atoms)
    n_labels = len(space.response_set)
    n_threshold = threshold_n(alpha, delta, m, n_labels)
    if k_max is None:
        k_max = math.ceil(50.0 * n_threshold)
    if k_max < 1:
        raise ValueError("k_max must be >= 1")

    tally = tally_out if tally_out is not None else SplitTally(
        s=np.zeros((m, n_labels)), n=n_threshold
    )
    if tally.s.shape != (m, n_labels):
        raise ValueError("tally_out has wrong shape")

    if isinstance(p, WeightedEnsemble) and len(p) <= 4096:
        winner = _select_ensemble(p, atoms, d, space, rng, k_max, tally)
    else:
        winner = _select_generic(p, atoms, d, space, rng, k_max, tally)
    if winner is not None:
        return winner

    mins = tally.min_per_atom()
    best = int(np.argmax(mins))
    raise SelectTimeoutError(
        f"no atom qualified within {k_max} pair draws "
        f"(best minimum tally {mins[best]:.3g} of threshold {n_threshold:.3g})",
        best_atom=atoms[best],
        best_min_tally=float(mins[best]),
        rounds=tally.k,
    )


def _update_tally(
    tally: SplitTally, dist: float, resp_g: np.ndarray, resp_h: np.ndarray
) -> None:
    """One pair's contribution: add dist everywhere except the consensus cell."""
    tally.k += 1
    if dist == 0.0:
        return
    tally.s += dist
    agree = resp_g == resp_h
    if np.any(agree):
        rows = np.nonzero(agree)[0]
        tally.s[rows, resp_g[rows]] -= dist


def _select_ensemble(
    e: WeightedEnsemble,
    atoms: list[Atom],
    d: DistanceFn,
    space: StructureSpace,
    rng: np.random.Generator,
    k_max: int,
    tally: SplitTally,
) -> Atom | None:
    # Precompute all pair distances and atom responses once, then the loop is
    # pure index arithmetic.
    dist_matrix = d.matrix(e.structures)
    responses = np.stack(
        [space.evaluate_index_many(g, atoms) for g in e.structures]
    )  # (n_structures, m)
    remaining = k_max
    while remaining > 0:
        block = min(_PAIR_BLOCK, remaining)
        idx = e.draw_indices(2 * block, rng)
        for b in range(block):
            i, j = int(idx[2 * b]), int(idx[2 * b + 1])
            _update_tally(tally, float(dist_matrix[i, j]), responses[i], responses[j])
            qualified = tally.qualified()
            if qualified.any():
                return atoms[int(np.argmax(qualified))]
        remaining -= block
    return None


def _select_generic(
    p: PosteriorHandle,
    atoms: list[Atom],
    d: DistanceFn,
    space: StructureSpace,
    rng: np.random.Generator,
    k_max: int,
    tally: SplitTally,
) -> Atom | None:
    for _ in range(k_max):
        (g, h), = p.draw_pairs(1, rng)
        dist = float(d(g, h))
        _update_tally(
            tally,
            dist,
            space.evaluate_index_many(g, atoms),
            space.evaluate_index_many(h, atoms),
        )
        qualified = tally.qualified()
        if qualified.any():
            return atoms[int(np.argmax(qualified))]
    return None


def exact_average_split(
    e: WeightedEnsemble,
    a: Atom,
    d: DistanceFn,
    space: StructureSpace,
    dist_matrix: np.ndarray | None = None,
) -> float:
    """Largest rho such that the worst response to ``a`` leaves at most a
    (1 - rho) fraction of the mass-weighted conditional diameter.

    Responses of zero posterior mass contribute zero to the worst case (the
    limit of the mass-weighted conditional term).
    """
    w = e.probabilities
    if dist_matrix is None:
        dist_matrix = d.matrix(e.structures)
    total = float(w @ dist_matrix @ w)
    if total <= 0.0:
        raise DegeneratePosteriorError(
            "average split is undefined for a zero-diameter posterior"
        )
    resp = np.array(
        [space.response_set.index(space.evaluate(g, a)) for g in e.structures],
        dtype=np.int64,
    )
    return _split_from_responses(w, dist_matrix, resp, len(space.response_set), total)


def _split_from_responses(
    w: np.ndarray,
    dist_matrix: np.ndarray,
    resp: np.ndarray,
    n_labels: int,
    total: float,
) -> float:
    worst = 0.0
    for label in range(n_labels):
        mask = resp == label
        if not mask.any():
            continue
        wm = w[mask]
        term = float(wm @ dist_matrix[np.ix_(mask, mask)] @ wm)
        worst = max(worst, term)
    return 1.0 - worst / total
