"""Concrete structure spaces, distances, and oracles.

Provided families:

* linear threshold classifiers over unit-sphere inputs (angle distance),
* pairwise-choice models over a fixed item set (best-item distances),
* linear rankers compared on random object pairs (order-disagreement distance),
* clusterings of [0, 1] into at most k intervals that keep a protected
  interval intact (pair distance and protected-interval distance),
* explicit finite spaces given by response tables (cluster-identification
  and fairness-aware distances).

Oracles: label-flip noise with a uniform error profile, its calibrated
bounded-noise variant, and logistic response/choice models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (
    Atom,
    ConfigError,
    DistanceFn,
    Oracle,
    ResponseSet,
    Structure,
    StructureSpace,
)

__all__ = [
    "LinearClassifierSpace",
    "LogitChoiceSpace",
    "RankingSpace",
    "IntervalClusteringSpace",
    "FiniteLabeledSpace",
    "IndexedFamily",
    "SeparationFamily",
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
    "d_classifier",
    "d_rank",
    "best_index",
    "d_best_item",
    "d_approx_best_item",
    "d_interval_c",
    "d_interval_I",
    "d_cluster_id",
    "d_fair",
    "unit_sphere",
    "flip_oracle",
    "massart_oracle",
    "logistic_oracle",
    "logit_choice_oracle",
    "recommended_beta",
    "build_separation_family",
]


def unit_sphere(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """(n, dim) array of points drawn uniformly from the unit sphere."""
    x = rng.standard_normal((n, dim))
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    while np.any(norms == 0):  # probability-zero guard
        bad = norms[:, 0] == 0
        x[bad] = rng.standard_normal((int(bad.sum()), dim))
        norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / norms


def _sigmoid(z: np.ndarray | float):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


# ---------------------------------------------------------------------------
# Linear threshold classifiers
# ---------------------------------------------------------------------------


class LinearClassifierSpace(StructureSpace):
    """Structures are weight vectors w; response to input x is the sign of
    <w, x> (ties resolved to +1).  Atoms are uniform unit-sphere points."""

    response_set = ResponseSet((1, -1))

    def __init__(self, dim: int):
        super().__init__()
        if dim < 1:
            raise ConfigError("dim must be >= 1")
        self.dim = dim

    def structure(self, w: np.ndarray) -> Structure:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.dim,):
            raise ConfigError(f"weight vector must have shape ({self.dim},)")
        if not np.any(w):
            raise ConfigError("weight vector must be non-zero")
        return Structure(w)

    def sample_structure(self, rng: np.random.Generator) -> Structure:
        return Structure(unit_sphere(1, self.dim, rng)[0])

    def sample_structures(self, n: int, rng: np.random.Generator) -> list[Structure]:
        return [Structure(row) for row in unit_sphere(n, self.dim, rng)]

    def sample_atom(self, rng: np.random.Generator) -> Atom:
        return self._new_atom(unit_sphere(1, self.dim, rng)[0])

    def sample_atoms(self, n: int, rng: np.random.Generator) -> list[Atom]:
        return [self._new_atom(row) for row in unit_sphere(n, self.dim, rng)]

    def features(self, a: Atom) -> np.ndarray:
        return a.payload

    def feature_matrix(self, atoms: Sequence[Atom]) -> np.ndarray:
        return np.stack([a.payload for a in atoms])

    def evaluate(self, g: Structure, a: Atom) -> int:
        return 1 if float(g.params @ a.payload) >= 0.0 else -1

    def evaluate_index_many(self, g: Structure, atoms: Sequence[Atom]) -> np.ndarray:
        z = self.feature_matrix(atoms) @ g.params
        return np.where(z >= 0.0, 0, 1).astype(np.int64)

    def predict(self, g: Structure, a: Atom) -> float:
        return float(g.params @ a.payload)

    def predict_matrix(
        self, structures: Sequence[Structure], atoms: Sequence[Atom]
    ) -> np.ndarray:
        w_rows = np.stack([g.params for g in structures])
        return w_rows @ self.feature_matrix(atoms).T

    def label_sign(self, y) -> float:
        return float(y)


# ---------------------------------------------------------------------------
# Pairwise choice over a fixed item set
# ---------------------------------------------------------------------------


class LogitChoiceSpace(StructureSpace):
    """Structures are utility vectors w over a fixed item set.  An atom is an
    ordered pair of distinct item indices (i, j); the response is 1 when the
    first item has the (weakly) higher utility, else 0."""

    response_set = ResponseSet((1, 0))

    def __init__(self, items: np.ndarray):
        super().__init__()
        items = np.asarray(items, dtype=float)
        if items.ndim != 2 or items.shape[0] < 2:
            raise ConfigError("items must be an (n >= 2, dim) array")
        norms = np.linalg.norm(items, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ConfigError("items must lie on the unit sphere")
        self.items = items
        self.n_items, self.dim = items.shape

    @classmethod
    def random(cls, n_items: int, dim: int, rng: np.random.Generator) -> "LogitChoiceSpace":
        return cls(unit_sphere(n_items, dim, rng))

    def structure(self, w: np.ndarray) -> Structure:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.dim,):
            raise ConfigError(f"utility vector must have shape ({self.dim},)")
        return Structure(w)

    def sample_structure(self, rng: np.random.Generator) -> Structure:
        return Structure(unit_sphere(1, self.dim, rng)[0])

    def sample_structures(self, n: int, rng: np.random.Generator) -> list[Structure]:
        return [Structure(row) for row in unit_sphere(n, self.dim, rng)]

    def atom(self, i: int, j: int) -> Atom:
        if i == j or not (0 <= i < self.n_items and 0 <= j < self.n_items):
            raise ConfigError("atom needs two distinct valid item indices")
        return self._new_atom((int(i), int(j)))

    def sample_atom(self, rng: np.random.Generator) -> Atom:
        i = int(rng.integers(self.n_items))
        j = int(rng.integers(self.n_items - 1))
        if j >= i:
            j += 1
        return self._new_atom((i, j))

    def features(self, a: Atom) -> np.ndarray:
        i, j = a.payload
        return self.items[i] - self.items[j]

    def feature_matrix(self, atoms: Sequence[Atom]) -> np.ndarray:
        idx = np.array([a.payload for a in atoms], dtype=np.int64)
        return self.items[idx[:, 0]] - self.items[idx[:, 1]]

    def evaluate(self, g: Structure, a: Atom) -> int:
        return 1 if float(g.params @ self.features(a)) >= 0.0 else 0

    def evaluate_index_many(self, g: Structure, atoms: Sequence[Atom]) -> np.ndarray:
        z = self.feature_matrix(atoms) @ g.params
        return np.where(z >= 0.0, 0, 1).astype(np.int64)

    def predict(self, g: Structure, a: Atom) -> float:
        return float(g.params @ self.features(a))

    def predict_matrix(
        self, structures: Sequence[Structure], atoms: Sequence[Atom]
    ) -> np.ndarray:
        w_rows = np.stack([g.params for g in structures])
        return w_rows @ self.feature_matrix(atoms).T

    def label_sign(self, y) -> float:
        return 1.0 if y == 1 else -1.0

    def best_index(self, g: Structure) -> int:
        return int(np.argmax(self.items @ g.params))


# ---------------------------------------------------------------------------
# Linear rankers compared on random object pairs
# ---------------------------------------------------------------------------


class RankingSpace(StructureSpace):
    """Structures are unit weight vectors ordering objects by projection.
    An atom is an object pair (x, y); the response is 1 when x is ranked
    (weakly) above y, else 0."""

    response_set = ResponseSet((1, 0))

    def __init__(self, dim: int, measure: str = "sphere"):
        super().__init__()
        if dim < 1:
            raise ConfigError("dim must be >= 1")
        if measure not in ("sphere", "gaussian"):
            raise ConfigError("measure must be 'sphere' or 'gaussian'")
        self.dim = dim
        self.measure = measure

    def structure(self, w: np.ndarray) -> Structure:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.dim,):
            raise ConfigError(f"weight vector must have shape ({self.dim},)")
        norm = np.linalg.norm(w)
        if norm == 0:
            raise ConfigError("weight vector must be non-zero")
        return Structure(w / norm)

    def sample_structure(self, rng: np.random.Generator) -> Structure:
        return Structure(unit_sphere(1, self.dim, rng)[0])

    def sample_structures(self, n: int, rng: np.random.Generator) -> list[Structure]:
        return [Structure(row) for row in unit_sphere(n, self.dim, rng)]

    def _sample_objects(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.measure == "sphere":
            return unit_sphere(n, self.dim, rng)
        return rng.standard_normal((n, self.dim))

    def sample_pair_arrays(
        self, n: int, rng: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray]:
        both = self._sample_objects(2 * n, rng)
        return both[:n], both[n:]

    def sample_atom(self, rng: np.random.Generator) -> Atom:
        return self._new_atom(self._sample_objects(2, rng))

    def features(self, a: Atom) -> np.ndarray:
        return a.payload[0] - a.payload[1]

    def feature_matrix(self, atoms: Sequence[Atom]) -> np.ndarray:
        return np.stack([a.payload[0] - a.payload[1] for a in atoms])

    def evaluate(self, g: Structure, a: Atom) -> int:
        return 1 if float(g.params @ self.features(a)) >= 0.0 else 0

    def evaluate_index_many(self, g: Structure, atoms: Sequence[Atom]) -> np.ndarray:
        z = self.feature_matrix(atoms) @ g.params
        return np.where(z >= 0.0, 0, 1).astype(np.int64)

    def predict(self, g: Structure, a: Atom) -> float:
        return float(g.params @ self.features(a))

    def predict_matrix(
        self, structures: Sequence[Structure], atoms: Sequence[Atom]
    ) -> np.ndarray:
        w_rows = np.stack([g.params for g in structures])
        return w_rows @ self.feature_matrix(atoms).T

    def label_sign(self, y) -> float:
        return 1.0 if y == 1 else -1.0


# ---------------------------------------------------------------------------
# Interval clusterings of [0, 1] with a protected interval
# ---------------------------------------------------------------------------


class IntervalClusteringSpace(StructureSpace):
    """Structures partition [0, 1] into at most ``k`` intervals via sorted
    boundary lists; no boundary may fall strictly inside the protected
    interval, so it always sits inside a single cell.

    ``atom_mode='pair'``: atoms are point pairs (response 1 iff same cell).
    ``atom_mode='point'``: atoms are single points (response 1 iff the point
    shares a cell with the protected interval).
    """

    response_set = ResponseSet((1, 0))

    def __init__(
        self,
        k: int,
        interval: tuple[float, float],
        atom_mode: str = "pair",
    ):
        super().__init__()
        lo, hi = float(interval[0]), float(interval[1])
        if not (0.0 <= lo < hi <= 1.0):
            raise ConfigError("protected interval must satisfy 0 <= lo < hi <= 1")
        if k < 1:
            raise ConfigError("cluster cap k must be >= 1")
        if atom_mode not in ("pair", "point"):
            raise ConfigError("atom_mode must be 'pair' or 'point'")
        self.k = k
        self.interval = (lo, hi)
        self.atom_mode = atom_mode

    @property
    def interval_mass(self) -> float:
        return self.interval[1] - self.interval[0]

    def structure(self, boundaries: Sequence[float]) -> Structure:
        b = np.asarray(sorted(float(x) for x in boundaries), dtype=float)
        if len(b) > self.k - 1:
            raise ConfigError(
                f"at most {self.k - 1} boundaries allowed for a {self.k}-cell cap"
            )
        if np.any(b < 0.0) or np.any(b > 1.0):
            raise ConfigError("boundaries must lie in [0, 1]")
        lo, hi = self.interval
        if np.any((b > lo) & (b < hi)):
            raise ConfigError("no boundary may fall strictly inside the protected interval")
        return Structure(b)

    def sample_structure(self, rng: np.random.Generator) -> Structure:
        n_b = int(rng.integers(self.k))
        lo, hi = self.interval
        alpha = hi - lo
        u = rng.uniform(0.0, 1.0 - alpha, size=n_b)
        b = np.where(u <= lo, u, u + alpha)
        return Structure(np.sort(b))

    def sample_structures(self, n: int, rng: np.random.Generator) -> list[Structure]:
        return [self.sample_structure(rng) for _ in range(n)]

    def sample_atom(self, rng: np.random.Generator) -> Atom:
        if self.atom_mode == "pair":
            return self._new_atom(rng.uniform(0.0, 1.0, size=2))
        return self._new_atom(float(rng.uniform(0.0, 1.0)))

    def _cells(self, g: Structure, xs: np.ndarray) -> np.ndarray:
        return np.searchsorted(g.params, xs, side="right")

    def evaluate(self, g: Structure, a: Atom) -> int:
        if self.atom_mode == "pair":
            c = self._cells(g, np.asarray(a.payload))
            return 1 if c[0] == c[1] else 0
        mid = 0.5 * (self.interval[0] + self.interval[1])
        c = self._cells(g, np.array([a.payload, mid]))
        return 1 if c[0] == c[1] else 0

    def evaluate_index_many(self, g: Structure, atoms: Sequence[Atom]) -> np.ndarray:
        if self.atom_mode == "pair":
            pts = np.stack([np.asarray(a.payload) for a in atoms])
            cells = np.searchsorted(g.params, pts, side="right")
            same = cells[:, 0] == cells[:, 1]
        else:
            xs = np.array([a.payload for a in atoms], dtype=float)
            mid = 0.5 * (self.interval[0] + self.interval[1])
            mid_cell = np.searchsorted(g.params, mid, side="right")
            same = np.searchsorted(g.params, xs, side="right") == mid_cell
        return np.where(same, 0, 1).astype(np.int64)


# ---------------------------------------------------------------------------
# Explicit finite spaces from response tables
# ---------------------------------------------------------------------------


class FiniteLabeledSpace(StructureSpace):
    """A finite atom universe with explicit response tables as structures.

    Optionally carries a protected-attribute bit per atom (for the fairness
    distance), an item-of-interest id (for cluster identification), and a
    non-uniform atom distribution.
    """

    def __init__(
        self,
        n_items: int,
        response_set: ResponseSet,
        protected: Sequence[int] | None = None,
        item_of_interest: int = 0,
        weights: Sequence[float] | None = None,
    ):
        super().__init__()
        if n_items < 1:
            raise ConfigError("n_items must be >= 1")
        self.response_set = response_set
        self.atoms = [self._new_atom(i) for i in range(n_items)]
        self.n_items = n_items
        if protected is not None:
            protected = np.asarray(protected, dtype=np.int64)
            if protected.shape != (n_items,) or not np.isin(protected, (0, 1)).all():
                raise ConfigError("protected must be n_items bits")
        self.protected = protected
        if not 0 <= item_of_interest < n_items:
            raise ConfigError("item_of_interest out of range")
        self.item_of_interest = item_of_interest
        if weights is None:
            w = np.full(n_items, 1.0 / n_items)
        else:
            w = np.asarray(weights, dtype=float)
            if w.shape != (n_items,) or np.any(w < 0) or w.sum() <= 0:
                raise ConfigError("weights must be n_items non-negative values")
            w = w / w.sum()
        self.weights = w

    def table(self, labels: Sequence) -> Structure:
        """Structure from an explicit per-item response table."""
        if len(labels) != self.n_items:
            raise ConfigError(f"table must list all {self.n_items} responses")
        idx = np.array([self.response_set.index(y) for y in labels], dtype=np.int64)
        return Structure(idx)

    def sample_atom(self, rng: np.random.Generator) -> Atom:
        return self.atoms[int(rng.choice(self.n_items, p=self.weights))]

    def evaluate(self, g: Structure, a: Atom):
        return self.response_set.labels[int(g.params[a.payload])]

    def evaluate_index_many(self, g: Structure, atoms: Sequence[Atom]) -> np.ndarray:
        idx = np.array([a.payload for a in atoms], dtype=np.int64)
        return g.params[idx]


class IndexedFamily(FiniteLabeledSpace):
    """Finite instance given by an explicit response table whose rows are
    abstract structures referenced by index.

    Distances are supplied separately (e.g. ``MatrixDistance``), so two rows
    may agree on every atom yet remain distinct structures.
    """

    def __init__(
        self,
        table: Sequence[Sequence],
        response_set: ResponseSet,
        protected: Sequence[int] | None = None,
        item_of_interest: int = 0,
        weights: Sequence[float] | None = None,
    ):
        rows = [list(row) for row in table]
        if not rows:
            raise ConfigError("table must have at least one row")
        n_items = len(rows[0])
        if any(len(row) != n_items for row in rows):
            raise ConfigError("table rows must all have the same length")
        super().__init__(n_items, response_set, protected, item_of_interest, weights)
        self.table_idx = np.array(
            [[response_set.index(y) for y in row] for row in rows], dtype=np.int64
        )
        self.structures = [Structure(np.int64(i)) for i in range(len(rows))]

    def structure(self, i: int) -> Structure:
        if not 0 <= int(i) < len(self.structures):
            raise ConfigError(f"structure index {i} out of range")
        return self.structures[int(i)]

    def evaluate(self, g: Structure, a: Atom):
        return self.response_set.labels[int(self.table_idx[int(g.params), a.payload])]

    def evaluate_index_many(self, g: Structure, atoms: Sequence[Atom]) -> np.ndarray:
        idx = np.array([a.payload for a in atoms], dtype=np.int64)
        return self.table_idx[int(g.params), idx]


class MatrixDistance(DistanceFn):
    """Distance given by an explicit symmetric matrix over indexed structures
    (``IndexedFamily`` rows)."""

    name = "matrix"

    def __init__(self, matrix: np.ndarray):
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ConfigError("distance matrix must be square")
        if not np.allclose(m, m.T):
            raise ConfigError("distance matrix must be symmetric")
        if np.any(np.diagonal(m) != 0.0):
            raise ConfigError("distance matrix must have a zero diagonal")
        if np.any(m < 0):
            raise ConfigError("distance matrix must be non-negative")
        self.m = m

    @staticmethod
    def _ids(structures: Sequence[Structure]) -> np.ndarray:
        return np.array([int(g.params) for g in structures], dtype=np.int64)

    def __call__(self, g: Structure, h: Structure) -> float:
        return float(self.m[int(g.params), int(h.params)])

    def matrix(self, structures: Sequence[Structure]) -> np.ndarray:
        ids = self._ids(structures)
        return self.m[np.ix_(ids, ids)]

    def cross(
        self, gs: Sequence[Structure], hs: Sequence[Structure]
    ) -> np.ndarray:
        return self.m[self._ids(gs), self._ids(hs)]

    def to_target(self, gs: Sequence[Structure], target: Structure) -> np.ndarray:
        return self.m[self._ids(gs), int(target.params)]


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------


def d_classifier(w: np.ndarray, w_prime: np.ndarray) -> float:
    """Normalized angle between two weight vectors: arccos of the cosine
    similarity divided by pi.  Equals the disagreement probability over
    spherically symmetric inputs."""
    w = np.asarray(w, dtype=float)
    w_prime = np.asarray(w_prime, dtype=float)
    nw = np.linalg.norm(w)
    nwp = np.linalg.norm(w_prime)
    if nw == 0 or nwp == 0:
        raise ValueError("angle distance undefined for zero vectors")
    cos = np.clip(float(w @ w_prime) / (nw * nwp), -1.0, 1.0)
    return math.acos(cos) / math.pi


def _angle_matrix(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    norms_r = np.linalg.norm(rows, axis=1)
    norms_c = np.linalg.norm(cols, axis=1)
    if np.any(norms_r == 0) or np.any(norms_c == 0):
        raise ValueError("angle distance undefined for zero vectors")
    cos = (rows / norms_r[:, None]) @ (cols / norms_c[:, None]).T
    return np.arccos(np.clip(cos, -1.0, 1.0)) / math.pi


class AngleDistance(DistanceFn):
    name = "angle"

    def __call__(self, g: Structure, h: Structure) -> float:
        return d_classifier(g.params, h.params)

    def matrix(self, structures: Sequence[Structure]) -> np.ndarray:
        rows = np.stack([g.params for g in structures])
        out = _angle_matrix(rows, rows)
        np.fill_diagonal(out, 0.0)
        return out

    def cross(
        self, gs: Sequence[Structure], hs: Sequence[Structure]
    ) -> np.ndarray:
        rows = np.stack([g.params for g in gs])
        cols = np.stack([h.params for h in hs])
        norms_r = np.linalg.norm(rows, axis=1)
        norms_c = np.linalg.norm(cols, axis=1)
        if np.any(norms_r == 0) or np.any(norms_c == 0):
            raise ValueError("angle distance undefined for zero vectors")
        cos = np.einsum("ij,ij->i", rows, cols) / (norms_r * norms_c)
        return np.arccos(np.clip(cos, -1.0, 1.0)) / math.pi

    def to_target(self, gs: Sequence[Structure], target: Structure) -> np.ndarray:
        rows = np.stack([g.params for g in gs])
        return _angle_matrix(rows, target.params[None, :])[:, 0]


def d_rank(
    w: np.ndarray,
    w_prime: np.ndarray,
    mode: str = "closed_form",
    space: "RankingSpace | None" = None,
    n_samples: int = 100_000,
    rng: np.random.Generator | None = None,
) -> float:
    """Probability that two rankers order a random object pair differently.

    For spherically symmetric object measures this equals the normalized
    angle, available in closed form; ``mode='mc'`` estimates it by sampling
    object pairs from ``space``.
    """
    if mode == "closed_form":
        return d_classifier(w, w_prime)
    if mode != "mc":
        raise ConfigError("mode must be 'closed_form' or 'mc'")
    if space is None or rng is None:
        raise ConfigError("mc mode needs a RankingSpace and an rng")
    xs, ys = space.sample_pair_arrays(n_samples, rng)
    diff = xs - ys
    side_w = diff @ np.asarray(w, dtype=float) >= 0.0
    side_wp = diff @ np.asarray(w_prime, dtype=float) >= 0.0
    return float(np.mean(side_w != side_wp))


class RankingDistance(DistanceFn):
    """Closed-form order-disagreement distance (valid for spherically
    symmetric object measures)."""

    name = "ranking"

    def __call__(self, g: Structure, h: Structure) -> float:
        return d_rank(g.params, h.params)

    def matrix(self, structures: Sequence[Structure]) -> np.ndarray:
        rows = np.stack([g.params for g in structures])
        out = _angle_matrix(rows, rows)
        np.fill_diagonal(out, 0.0)
        return out

    def to_target(self, gs: Sequence[Structure], target: Structure) -> np.ndarray:
        rows = np.stack([g.params for g in gs])
        return _angle_matrix(rows, target.params[None, :])[:, 0]


def best_index(items: np.ndarray, w: np.ndarray) -> int:
    """Index of the highest-utility item (ties broken by lowest index)."""
    return int(np.argmax(np.asarray(items, dtype=float) @ np.asarray(w, dtype=float)))


def d_best_item(w: np.ndarray, w_prime: np.ndarray, items: np.ndarray) -> float:
    """1 if the two utility vectors pick different best items, else 0."""
    return float(best_index(items, w) != best_index(items, w_prime))


def d_approx_best_item(
    w: np.ndarray,
    w_prime: np.ndarray,
    items: np.ndarray,
    normalized: bool = False,
) -> float:
    """Euclidean gap between the two picked best items (halved when
    normalized, so unit-sphere item sets stay within [0, 1])."""
    items = np.asarray(items, dtype=float)
    gap = float(
        np.linalg.norm(items[best_index(items, w)] - items[best_index(items, w_prime)])
    )
    return gap / 2.0 if normalized else gap


class BestItemDistance(DistanceFn):
    name = "best_item"

    def __init__(self, items: np.ndarray):
        self.items = np.asarray(items, dtype=float)

    def __call__(self, g: Structure, h: Structure) -> float:
        return d_best_item(g.params, h.params, self.items)

    def matrix(self, structures: Sequence[Structure]) -> np.ndarray:
        idx = np.array([best_index(self.items, g.params) for g in structures])
        return (idx[:, None] != idx[None, :]).astype(float)


class ApproxBestItemDistance(DistanceFn):
    name = "approx_best_item"

    def __init__(self, items: np.ndarray, normalized: bool = True):
        self.items = np.asarray(items, dtype=float)
        self.normalized = normalized

    def __call__(self, g: Structure, h: Structure) -> float:
        return d_approx_best_item(g.params, h.params, self.items, self.normalized)

    def matrix(self, structures: Sequence[Structure]) -> np.ndarray:
        idx = np.array([best_index(self.items, g.params) for g in structures])
        picked = self.items[idx]
        sq = np.sum((picked[:, None, :] - picked[None, :, :]) ** 2, axis=-1)
        out = np.sqrt(np.maximum(sq, 0.0))
        return out / 2.0 if self.normalized else out

    def to_target(self, gs: Sequence[Structure], target: Structure) -> np.ndarray:
        idx = np.array([best_index(self.items, g.params) for g in gs])
        t = self.items[best_index(self.items, target.params)]
        out = np.linalg.norm(self.items[idx] - t[None, :], axis=1)
        return out / 2.0 if self.normalized else out


def _merged_segments(b1: np.ndarray, b2: np.ndarray):
    edges = np.unique(np.concatenate(([0.0, 1.0], b1, b2)))
    lengths = np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    return lengths, mids


def d_interval_c(g: Structure, g_prime: Structure) -> float:
    """Probability that a uniform point pair is clustered together by exactly
    one of the two interval clusterings (closed form)."""
    lengths, mids = _merged_segments(g.params, g_prime.params)
    c1 = np.searchsorted(g.params, mids, side="right")
    c2 = np.searchsorted(g_prime.params, mids, side="right")
    same1 = c1[:, None] == c1[None, :]
    same2 = c2[:, None] == c2[None, :]
    return float(lengths @ (same1 != same2).astype(float) @ lengths)


def _protected_cell(b: np.ndarray, interval: tuple[float, float]) -> tuple[float, float]:
    lo, hi = interval
    if np.any((b > lo) & (b < hi)):
        raise ConfigError("a boundary falls strictly inside the protected interval")
    mid = 0.5 * (lo + hi)
    i = int(np.searchsorted(b, mid, side="right"))
    left = float(b[i - 1]) if i > 0 else 0.0
    right = float(b[i]) if i < len(b) else 1.0
    return left, right


def d_interval_I(g: Structure, g_prime: Structure, interval: tuple[float, float]) -> float:
    """Mass of points whose membership in the protected interval's cell
    differs between the two clusterings (closed form)."""
    a_lo, a_hi = _protected_cell(g.params, interval)
    b_lo, b_hi = _protected_cell(g_prime.params, interval)
    overlap = max(0.0, min(a_hi, b_hi) - max(a_lo, b_lo))
    return (a_hi - a_lo) + (b_hi - b_lo) - 2.0 * overlap


class IntervalPairDistance(DistanceFn):
    name = "interval_pairs"

    def __call__(self, g: Structure, h: Structure) -> float:
        return d_interval_c(g, h)


class IntervalProtectedDistance(DistanceFn):
    name = "interval_protected"

    def __init__(self, interval: tuple[float, float]):
        lo, hi = float(interval[0]), float(interval[1])
        if not (0.0 <= lo < hi <= 1.0):
            raise ConfigError("protected interval must satisfy 0 <= lo < hi <= 1")
        self.interval = (lo, hi)

    def __call__(self, g: Structure, h: Structure) -> float:
        return d_interval_I(g, h, self.interval)


class DisagreementDistance(DistanceFn):
    """Atom-weighted probability that two response tables disagree."""

    name = "disagreement"

    def __init__(self, space: FiniteLabeledSpace):
        self.space = space

    def _tables(self, structures: Sequence[Structure]) -> np.ndarray:
        return np.stack([g.params for g in structures])

    def __call__(self, g: Structure, h: Structure) -> float:
        return float(self.space.weights @ (g.params != h.params))

    def matrix(self, structures: Sequence[Structure]) -> np.ndarray:
        t = self._tables(structures)
        return (t[:, None, :] != t[None, :, :]) @ self.space.weights

    def cross(
        self, gs: Sequence[Structure], hs: Sequence[Structure]
    ) -> np.ndarray:
        return (self._tables(gs) != self._tables(hs)) @ self.space.weights

    def to_target(self, gs: Sequence[Structure], target: Structure) -> np.ndarray:
        return (self._tables(gs) != target.params[None, :]) @ self.space.weights


def d_cluster_id(
    g: Structure,
    g_prime: Structure,
    space: FiniteLabeledSpace,
    i_star: int | None = None,
) -> float:
    """Larger of the two normalized one-sided differences between the
    clusters containing the item of interest."""
    i = space.item_of_interest if i_star is None else i_star
    if not 0 <= i < space.n_items:
        raise ConfigError("item of interest out of range")
    in_g = g.params == g.params[i]
    in_gp = g_prime.params == g_prime.params[i]
    size_g = int(in_g.sum())
    size_gp = int(in_gp.sum())
    if size_g == 0 or size_gp == 0:
        raise ConfigError("cluster containing the item of interest is empty")
    only_g = int((in_g & ~in_gp).sum())
    only_gp = int((in_gp & ~in_g).sum())
    return max(only_g / size_g, only_gp / size_gp)


class ClusterIdDistance(DistanceFn):
    name = "cluster_id"

    def __init__(self, space: FiniteLabeledSpace, i_star: int | None = None):
        self.space = space
        self.i_star = i_star

    def __call__(self, g: Structure, h: Structure) -> float:
        return d_cluster_id(g, h, self.space, self.i_star)


def _positive_index(rs: ResponseSet) -> int:
    try:
        return rs.index(1)
    except Exception as exc:
        raise ConfigError("fairness distance needs label 1 in the response set") from exc


def d_fair(
    g: Structure,
    g_prime: Structure,
    lam: float,
    space: FiniteLabeledSpace,
) -> float:
    """Max of the plain disagreement probability and the two lambda-weighted
    equal-opportunity gaps (difference, across the protected bit, of the rate
    at which one structure predicts 1 among the other's predicted-1 atoms).
    A gap term conditioned on a zero-probability event contributes 0."""
    if space.protected is None:
        raise ConfigError("fairness distance needs protected-attribute bits")
    if not 0.0 <= lam <= 1.0:
        raise ConfigError("lam must be in [0, 1]")
    pos = _positive_index(space.response_set)
    w = space.weights
    bits = space.protected
    pred_g = g.params == pos
    pred_gp = g_prime.params == pos

    disagreement = float(w[g.params != g_prime.params].sum())

    def gap(cond: np.ndarray, pred: np.ndarray) -> float:
        mass0 = float(w[(bits == 0) & cond].sum())
        mass1 = float(w[(bits == 1) & cond].sum())
        if mass0 == 0.0 or mass1 == 0.0:
            return 0.0
        rate0 = float(w[(bits == 0) & cond & pred].sum()) / mass0
        rate1 = float(w[(bits == 1) & cond & pred].sum()) / mass1
        return abs(rate0 - rate1)

    return max(disagreement, lam * gap(pred_gp, pred_g), lam * gap(pred_g, pred_gp))


class FairnessDistance(DistanceFn):
    name = "fairness"

    def __init__(self, space: FiniteLabeledSpace, lam: float):
        self.space = space
        self.lam = lam

    def __call__(self, g: Structure, h: Structure) -> float:
        return d_fair(g, h, self.lam, self.space)


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


def flip_oracle(g_star: Structure, q: float, space: StructureSpace) -> Oracle:
    """Answers the target's response with probability 1-q, otherwise a
    uniformly random other label."""
    if not 0.0 <= q < 0.5:
        raise ConfigError("flip rate q must satisfy 0 <= q < 1/2")
    rs = space.response_set
    n_labels = len(rs)
    base = q / (n_labels - 1) if n_labels > 1 else 0.0

    def law(a: Atom) -> np.ndarray:
        probs = np.full(n_labels, base)
        probs[rs.index(space.evaluate(g_star, a))] = 1.0 - q
        return probs

    return Oracle(
        response_set=rs,
        law=law,
        exact_target=g_star,
        massart_margin=(1.0 - q) - base,
        flip_rate=q,
    )


def massart_oracle(
    g_star: Structure, lambda_noise: float, space: StructureSpace
) -> Oracle:
    """Flip oracle calibrated so the target's response beats every other
    label's probability by exactly ``lambda_noise`` at every atom."""
    if not 0.0 < lambda_noise <= 1.0:
        raise ConfigError("lambda_noise must be in (0, 1]")
    n_labels = len(space.response_set)
    q = (1.0 - lambda_noise) * (n_labels - 1) / n_labels
    oracle = flip_oracle(g_star, q, space)
    return Oracle(
        response_set=oracle.response_set,
        law=oracle.law,
        exact_target=g_star,
        massart_margin=lambda_noise,
        flip_rate=q,
    )


def recommended_beta(q: float) -> float:
    """Update temperature matched to a flip oracle's noise rate: ln((1-q)/q)."""
    if not 0.0 < q < 0.5:
        raise ConfigError("q must be in (0, 1/2) for a finite recommendation")
    return math.log((1.0 - q) / q)


def logistic_oracle(
    w_star: np.ndarray,
    space: LinearClassifierSpace,
    sigma_scale: float = 1.0,
) -> Oracle:
    """Label +1 with probability sigmoid(sigma_scale * <w*, x>)."""
    w_star = np.asarray(w_star, dtype=float)
    rs = space.response_set
    i_pos = rs.index(1)
    i_neg = rs.index(-1)

    def law(a: Atom) -> np.ndarray:
        p_pos = float(_sigmoid(sigma_scale * (w_star @ space.features(a))))
        probs = np.empty(2)
        probs[i_pos] = p_pos
        probs[i_neg] = 1.0 - p_pos
        return probs

    return Oracle(response_set=rs, law=law, exact_target=space.structure(w_star))


def logit_choice_oracle(w_star: np.ndarray, space: LogitChoiceSpace) -> Oracle:
    """Chooses the first item of the pair with probability
    sigmoid(<w*, x_i - x_j>)."""
    w_star = np.asarray(w_star, dtype=float)
    rs = space.response_set
    i_first = rs.index(1)
    i_second = rs.index(0)

    def law(a: Atom) -> np.ndarray:
        p_first = float(_sigmoid(w_star @ space.features(a)))
        probs = np.empty(2)
        probs[i_first] = p_first
        probs[i_second] = 1.0 - p_first
        return probs

    return Oracle(response_set=rs, law=law, exact_target=space.structure(w_star))


# ---------------------------------------------------------------------------
# Hard family where the two interval distances pull apart
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeparationFamily:
    """A base clustering plus k variants that all share the protected
    interval's cell, so the protected-interval distance is identically zero
    across the family while the pair distance is not."""

    space: IntervalClusteringSpace
    base: Structure
    variants: tuple[Structure, ...]
    alpha: float

    @property
    def structures(self) -> list[Structure]:
        return [self.base, *self.variants]


def build_separation_family(k: int, interval: tuple[float, float]) -> SeparationFamily:
    """Base structure: k equal cells to the right of the protected interval
    [0, alpha].  Variant i additionally splits cell i at its midpoint, moving
    it a pair-distance of (1-alpha)^2/(2 k^2) away from the base while leaving
    the protected interval's cell untouched."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    lo, hi = float(interval[0]), float(interval[1])
    if lo != 0.0:
        raise ConfigError("the construction anchors the protected interval at 0")
    alpha = hi - lo
    if not 0.0 < alpha <= 0.5:
        raise ConfigError("protected interval mass must be in (0, 1/2]")
    space = IntervalClusteringSpace(k + 2, (lo, hi), atom_mode="pair")
    a_pts = [alpha + (i - 1) * (1.0 - alpha) / k for i in range(1, k + 1)]
    base = space.structure(a_pts)
    variants = []
    for i in range(1, k + 1):
        b_i = alpha + (2 * i - 1) * (1.0 - alpha) / (2 * k)
        variants.append(space.structure(a_pts + [b_i]))
    return SeparationFamily(space=space, base=base, variants=tuple(variants), alpha=alpha)
