"""Shared domain abstractions: atoms, responses, structures, spaces, distances,
oracles, weighted ensembles, and seeded randomness.

Conventions used throughout the package:

- A *structure* is an object that answers every atomic question with a response
  from a finite response set.  Structures are compared only through distance
  functions, never by parameter equality.
- All posterior weights live in log-space; normalization is log-sum-exp.
- Randomness flows through :class:`RngStream`, which derives independent
  substreams from a master seed and a path of labels, so results never depend
  on scheduling or call interleaving across components.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Protocol, Sequence, runtime_checkable

import numpy as np

__all__ = [
    "Atom",
    "ResponseSet",
    "Structure",
    "StructureSpace",
    "DistanceFn",
    "FunctionDistance",
    "Oracle",
    "WeightedEnsemble",
    "RngStream",
    "PosteriorHandle",
    "evaluate",
    "oracle_respond",
    "normalize",
    "StructureDiscoveryError",
    "EmptyPosteriorError",
    "VersionSpaceEmptyError",
    "DegeneratePosteriorError",
    "IncompatibleAtomError",
    "ConfigError",
]


class StructureDiscoveryError(Exception):
    """Base class for all typed errors raised by this package."""


class EmptyPosteriorError(StructureDiscoveryError):
    """All ensemble weights are -inf; there is no distribution to normalize."""


class VersionSpaceEmptyError(StructureDiscoveryError):
    """A hard update eliminated every structure in the ensemble."""


class DegeneratePosteriorError(StructureDiscoveryError):
    """An operation requires positive average diameter but got zero."""


class IncompatibleAtomError(StructureDiscoveryError):
    """An atom's payload cannot be evaluated by the given space."""


class ConfigError(StructureDiscoveryError):
    """Invalid configuration value; message identifies the offending field."""


class Atom:
    """An atomic question.

    Equality and hashing are by ``id`` only, so numerically equal payloads
    drawn at different times remain distinct candidates.  The payload is
    treated as immutable after construction.
    """

    __slots__ = ("id", "payload")

    def __init__(self, id: int, payload: Any):
        object.__setattr__(self, "id", id)
        object.__setattr__(self, "payload", payload)

    def __setattr__(self, name: str, value: Any) -> None:
        raise AttributeError("Atom is immutable")

    def __reduce__(self):
        # slots + blocked __setattr__ break default unpickling; rebuild
        # through the constructor instead
        return (Atom, (self.id, self.payload))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Atom) and other.id == self.id

    def __hash__(self) -> int:
        return hash(self.id)

    def __repr__(self) -> str:
        return f"Atom(id={self.id}, payload={self.payload!r})"


@dataclass(frozen=True)
class ResponseSet:
    """Finite ordered set of possible responses."""

    labels: tuple

    def __post_init__(self) -> None:
        if len(self.labels) == 0:
            raise ConfigError("ResponseSet.labels must be non-empty")
        if len(set(self.labels)) != len(self.labels):
            raise ConfigError("ResponseSet.labels must not contain duplicates")
        object.__setattr__(
            self, "_index", {label: i for i, label in enumerate(self.labels)}
        )

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def index(self, label) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise IncompatibleAtomError(f"unknown response label {label!r}") from None


@dataclass(frozen=True, eq=False)
class Structure:
    """A candidate explanation, parameterized by instance-specific data
    (weight vector, sorted boundary array, response table index, ...)."""

    params: Any

    def __repr__(self) -> str:
        return f"Structure({self.params!r})"


class StructureSpace:
    """Bundles a response set, an atom distribution, and structure evaluation.

    Subclasses must set :attr:`response_set` and implement
    :meth:`sample_atom` and :meth:`evaluate`.  The batched hooks have generic
    (slow) defaults that subclasses may vectorize.
    """

    response_set: ResponseSet

    def __init__(self) -> None:
        self._atom_counter = 0

    def _new_atom(self, payload: Any) -> Atom:
        atom = Atom(self._atom_counter, payload)
        self._atom_counter += 1
        return atom

    def sample_atom(self, rng: np.random.Generator) -> Atom:
        raise NotImplementedError

    def sample_atoms(self, n: int, rng: np.random.Generator) -> list[Atom]:
        return [self.sample_atom(rng) for _ in range(n)]

    def evaluate(self, g: Structure, a: Atom):
        """Deterministic response of structure ``g`` to atom ``a``."""
        raise NotImplementedError

    # ---- optional hooks -------------------------------------------------

    def evaluate_index_many(self, g: Structure, atoms: Sequence[Atom]) -> np.ndarray:
        """Indices into the response set of ``g``'s responses to ``atoms``."""
        rs = self.response_set
        return np.array([rs.index(self.evaluate(g, a)) for a in atoms], dtype=np.int64)

    def predict(self, g: Structure, a: Atom) -> float:
        """Real-valued prediction (margin) for margin-based losses."""
        raise NotImplementedError(f"{type(self).__name__} has no margin predictions")

    def predict_matrix(
        self, structures: Sequence[Structure], atoms: Sequence[Atom]
    ) -> np.ndarray:
        """Matrix of margins, shape (len(structures), len(atoms))."""
        return np.array(
            [[self.predict(g, a) for a in atoms] for g in structures], dtype=float
        )

    def features(self, a: Atom) -> np.ndarray:
        """Feature vector x such that predict(g, a) = <g.params, x>."""
        raise NotImplementedError(f"{type(self).__name__} has no linear features")


class DistanceFn:
    """Structure distance: symmetric, zero on the diagonal, values in [0, 1].

    ``matrix`` and ``cross`` have generic defaults; subclasses vectorize them
    where worthwhile.
    """

    name: str = "distance"

    def __call__(self, g: Structure, h: Structure) -> float:
        raise NotImplementedError

    def matrix(self, structures: Sequence[Structure]) -> np.ndarray:
        n = len(structures)
        out = np.zeros((n, n), dtype=float)
        for i in range(n):
            for j in range(i + 1, n):
                out[i, j] = out[j, i] = self(structures[i], structures[j])
        return out

    def cross(
        self, gs: Sequence[Structure], hs: Sequence[Structure]
    ) -> np.ndarray:
        """Elementwise distances between two equal-length structure lists."""
        if len(gs) != len(hs):
            raise ValueError("cross() requires equal-length sequences")
        return np.array([self(g, h) for g, h in zip(gs, hs)], dtype=float)

    def to_target(self, gs: Sequence[Structure], target: Structure) -> np.ndarray:
        return np.array([self(g, target) for g in gs], dtype=float)


class FunctionDistance(DistanceFn):
    """Wraps a plain callable as a :class:`DistanceFn`."""

    def __init__(self, name: str, fn: Callable[[Structure, Structure], float]):
        self.name = name
        self._fn = fn

    def __call__(self, g: Structure, h: Structure) -> float:
        return float(self._fn(g, h))


@dataclass(frozen=True, eq=False)
class Oracle:
    """Conditional response law for atoms.

    ``law(a)`` returns the probability vector over ``response_set.labels``.
    ``massart_margin`` (if set) promises that the target's response beats
    every other response's probability by at least that margin at every atom.
    """

    response_set: ResponseSet
    law: Callable[[Atom], np.ndarray]
    exact_target: Structure | None = None
    massart_margin: float | None = None
    flip_rate: float | None = None

    def respond(self, a: Atom, rng: np.random.Generator):
        probs = np.asarray(self.law(a), dtype=float)
        if probs.shape != (len(self.response_set),):
            raise IncompatibleAtomError(
                f"oracle law returned shape {probs.shape}, expected ({len(self.response_set)},)"
            )
        i = rng.choice(len(probs), p=probs)
        return self.response_set.labels[i]


def evaluate(space: StructureSpace, g: Structure, a: Atom):
    """Deterministic response of ``g`` to ``a`` under ``space``."""
    return space.evaluate(g, a)


def oracle_respond(o: Oracle, a: Atom, rng: np.random.Generator):
    """Draw a response to ``a`` from the oracle's conditional law."""
    return o.respond(a, rng)


class WeightedEnsemble:
    """Finite distribution over structures, stored as log-weights.

    Instances are immutable: updates produce new ensembles.  ``normalize``
    applies a log-sum-exp shift so that exp(log_weights) sums to one.
    """

    __slots__ = ("structures", "log_weights", "_probs")

    def __init__(
        self, structures: Sequence[Structure], log_weights: Iterable[float]
    ):
        self.structures = list(structures)
        lw = np.asarray(list(log_weights), dtype=float)
        if len(self.structures) != lw.shape[0]:
            raise ConfigError("structures and log_weights must have equal length")
        if lw.shape[0] == 0:
            raise EmptyPosteriorError("ensemble has no structures")
        if np.any(np.isnan(lw)) or np.any(lw == np.inf):
            raise ConfigError("log_weights must be finite or -inf")
        self.log_weights = lw
        self._probs: np.ndarray | None = None

    @classmethod
    def uniform(cls, structures: Sequence[Structure]) -> "WeightedEnsemble":
        n = len(structures)
        return cls(structures, np.full(n, -math.log(n))) if n else cls(structures, [])

    @classmethod
    def from_probabilities(
        cls, structures: Sequence[Structure], probs: Iterable[float]
    ) -> "WeightedEnsemble":
        p = np.asarray(list(probs), dtype=float)
        with np.errstate(divide="ignore"):
            return cls(structures, np.log(p))

    def __len__(self) -> int:
        return len(self.structures)

    def normalize(self) -> "WeightedEnsemble":
        lw = self.log_weights
        m = np.max(lw)
        if m == -np.inf:
            raise EmptyPosteriorError("all ensemble weights are zero")
        total = m + math.log(np.sum(np.exp(lw - m)))
        out = WeightedEnsemble(self.structures, lw - total)
        return out

    @property
    def probabilities(self) -> np.ndarray:
        if self._probs is None:
            self._probs = np.exp(self.normalize().log_weights)
        return self._probs

    def weight_of(self, index: int) -> float:
        return float(self.probabilities[index])

    # ---- PosteriorHandle contract ---------------------------------------

    def draw_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(len(self.structures), size=n, p=self.probabilities)

    def draw_structures(self, n: int, rng: np.random.Generator) -> list[Structure]:
        return [self.structures[i] for i in self.draw_indices(n, rng)]

    def draw_pairs(
        self, n: int, rng: np.random.Generator
    ) -> list[tuple[Structure, Structure]]:
        idx = self.draw_indices(2 * n, rng)
        return [
            (self.structures[idx[2 * i]], self.structures[idx[2 * i + 1]])
            for i in range(n)
        ]


@runtime_checkable
class PosteriorHandle(Protocol):
    """Anything that can produce structure draws and independent pairs."""

    def draw_structures(self, n: int, rng: np.random.Generator) -> list[Structure]:
        ...

    def draw_pairs(
        self, n: int, rng: np.random.Generator
    ) -> list[tuple[Structure, Structure]]:
        ...


def normalize(e: WeightedEnsemble) -> WeightedEnsemble:
    """Log-sum-exp normalization preserving weight order."""
    return e.normalize()


def _key_to_uint32s(key: int | str) -> tuple[int, ...]:
    """Stable encoding of a path element as uint32 words for seed derivation."""
    if isinstance(key, bool):  # bool is an int subclass; reject to avoid surprises
        raise ConfigError("RngStream path keys must be int or str, not bool")
    if isinstance(key, int):
        if key < 0:
            raise ConfigError("integer RngStream path keys must be non-negative")
        words = []
        k = key
        while True:
            words.append(k & 0xFFFFFFFF)
            k >>= 32
            if k == 0:
                break
        return tuple(words)
    if isinstance(key, str):
        digest = hashlib.blake2s(key.encode("utf-8"), digest_size=8).digest()
        v = int.from_bytes(digest, "little")
        return (v & 0xFFFFFFFF, (v >> 32) & 0xFFFFFFFF)
    raise ConfigError(f"unsupported RngStream path key type: {type(key).__name__}")


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream derived from a master seed and a label path.

    Identical (master_seed, path, draw index) always yields identical output,
    independent of process scheduling or the order in which sibling streams
    are created.  ``child`` derives an independent substream; ``generator``
    returns this stream's PCG64 generator (created once, then stateful).
    """

    master_seed: int
    path: tuple = ()
    _gen: list = field(default_factory=list, repr=False, compare=False)

    def child(self, *keys: int | str) -> "RngStream":
        for key in keys:  # fail fast on unusable path keys
            _key_to_uint32s(key)
        return RngStream(self.master_seed, self.path + tuple(keys))

    def generator(self) -> np.random.Generator:
        if not self._gen:
            entropy = [self.master_seed & 0xFFFFFFFFFFFFFFFF]
            for key in self.path:
                entropy.extend(_key_to_uint32s(key))
            seq = np.random.SeedSequence(entropy)
            self._gen.append(np.random.Generator(np.random.PCG64(seq)))
        return self._gen[0]
