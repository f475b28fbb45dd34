"""The interactive discovery loop and its posterior update rules.

Each round the runner draws candidate atoms, picks a query (either the
verified splitting subroutine in ``theory`` mode or an empirical score
minimization in ``heuristic`` mode), asks the oracle, and reweights the
posterior.  Baselines share the identical logging contract: ``random`` picks
one atom blindly, ``qbc`` rejection-samples an atom on which two posterior
draws disagree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    Atom,
    ConfigError,
    DistanceFn,
    Oracle,
    PosteriorHandle,
    Structure,
    StructureSpace,
    VersionSpaceEmptyError,
    WeightedEnsemble,
)
from .diameter import (
    EXACT_LIMIT,
    avg_diam_exact,
    stopping_sample_size,
    stopping_threshold,
)
from .losses import ZERO_ONE, Loss, get_loss
from .samplers import ContinuousPosterior
from .select import SelectTimeoutError, select

__all__ = [
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
]

UPDATE_RULES = ("hard", "soft01", "general_loss")
QUERY_MODES = ("theory", "heuristic")
STOP_ESTIMATORS = ("mc", "exact")


@dataclass(frozen=True)
class NdbalConfig:
    """Run parameters.

    ``beta`` is the posterior confidence weight; ``alpha``/``delta`` drive the
    theory-mode query subroutine; ``m_atoms`` is the per-round candidate count
    (overridden by the ``tau`` schedule in theory mode); ``stop_eps`` (with
    ``stop_lambda``) enables the diameter stopping rule; ``budget`` caps the
    number of query rounds.
    """

    beta: float
    alpha: float = 0.5
    delta: float = 0.05
    m_atoms: int = 500
    update_rule: str = "soft01"
    loss_id: str = "zero_one"
    stop_eps: float | None = None
    stop_lambda: float = 1.0
    budget: int = 100
    mode: str = "heuristic"
    n_pairs: int = 300
    error_draws: int = 300
    score_beta: float | None = None
    tau: float | None = None
    stop_estimator: str = "mc"
    qbc_attempt_cap: int = 10_000
    select_k_max: int | None = None

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must be in (0, 1)")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must be in (0, 1)")
        if self.m_atoms < 1:
            raise ConfigError("m_atoms must be >= 1")
        if self.update_rule not in UPDATE_RULES:
            raise ConfigError(f"update_rule must be one of {UPDATE_RULES}")
        if self.mode not in QUERY_MODES:
            raise ConfigError(f"mode must be one of {QUERY_MODES}")
        if self.stop_estimator not in STOP_ESTIMATORS:
            raise ConfigError(f"stop_estimator must be one of {STOP_ESTIMATORS}")
        if self.stop_eps is not None and not 0 < self.stop_eps < 1:
            raise ConfigError("stop_eps must be in (0, 1)")
        if self.stop_lambda < 1:
            raise ConfigError("stop_lambda must be >= 1 (prior-mismatch factor)")
        if self.budget < 0:
            raise ConfigError("budget must be >= 0")
        if self.n_pairs < 1 or self.error_draws < 1:
            raise ConfigError("n_pairs and error_draws must be >= 1")
        if self.score_beta is not None and self.score_beta <= 0:
            raise ConfigError("score_beta must be positive")
        if self.tau is not None and not 0 < self.tau < 1:
            raise ConfigError("tau must be in (0, 1)")
        if self.qbc_attempt_cap < 1:
            raise ConfigError("qbc_attempt_cap must be >= 1")
        get_loss(self.loss_id)  # fail fast on unknown loss ids

    @property
    def loss(self) -> Loss:
        return get_loss(self.loss_id)

    def validate_for(self, oracle: Oracle) -> None:
        """Run-time compatibility checks that need the oracle."""
        if (
            self.mode == "theory"
            and self.update_rule == "soft01"
            and oracle.massart_margin is not None
            and self.beta > oracle.massart_margin / 10.0 + 1e-12
        ):
            raise ConfigError(
                "theory mode with the soft 0-1 update under bounded noise "
                f"requires beta <= margin/10 = {oracle.massart_margin / 10.0:.6g}, "
                f"got beta = {self.beta:.6g}"
            )

    def atoms_for_round(self, t: int) -> int:
        """Candidate-atom budget for round ``t`` (1-based)."""
        if self.mode == "theory" and self.tau is not None:
            return max(1, math.ceil(math.log(4.0 * t * (t + 1) / self.delta) / self.tau))
        return self.m_atoms


# ---------------------------------------------------------------------------
# Posterior updates
# ---------------------------------------------------------------------------


def _response_indices(e: WeightedEnsemble, a: Atom, space: StructureSpace) -> np.ndarray:
    rs = space.response_set
    return np.array([rs.index(space.evaluate(g, a)) for g in e.structures], dtype=np.int64)


def update_hard(
    e: WeightedEnsemble, a: Atom, y, space: StructureSpace
) -> WeightedEnsemble:
    """Zero out (log-weight -inf) every structure inconsistent with (a, y)."""
    y_idx = space.response_set.index(y)
    consistent = _response_indices(e, a, space) == y_idx
    if not consistent.any():
        raise VersionSpaceEmptyError(
            f"no structure is consistent with response {y!r} at atom {a!r}"
        )
    new_logw = np.where(consistent, e.log_weights, -np.inf)
    return WeightedEnsemble(e.structures, new_logw).normalize()


def update_soft01(
    e: WeightedEnsemble, a: Atom, y, beta: float, space: StructureSpace
) -> WeightedEnsemble:
    """Decrement the log-weight of every inconsistent structure by beta."""
    if beta <= 0:
        raise ConfigError("beta must be positive")
    y_idx = space.response_set.index(y)
    inconsistent = _response_indices(e, a, space) != y_idx
    new_logw = e.log_weights - beta * inconsistent.astype(float)
    return WeightedEnsemble(e.structures, new_logw).normalize()


def _ensemble_losses(
    e: WeightedEnsemble, a: Atom, y, loss: Loss, space: StructureSpace
) -> np.ndarray:
    if loss.margin_based:
        z = np.array([space.predict(g, a) for g in e.structures], dtype=float)
        return np.asarray(loss.value(z, space.label_sign(y)), dtype=float)
    preds = [space.evaluate(g, a) for g in e.structures]
    return np.array([float(loss.value(p, y)) for p in preds], dtype=float)


def update_general_loss(
    p: PosteriorHandle, a: Atom, y, beta: float, loss: Loss, space: StructureSpace
) -> PosteriorHandle:
    """Reweight the posterior density by exp(-beta * loss(g(a), y)).

    Finite ensembles are reweighted exactly; continuous posteriors record the
    term for their sampler's log-density (and will re-burn before the next
    draw).
    """
    if beta < 0:
        raise ConfigError("beta must be non-negative")
    if isinstance(p, WeightedEnsemble):
        losses = _ensemble_losses(p, a, y, loss, space)
        return WeightedEnsemble(p.structures, p.log_weights - beta * losses).normalize()
    if isinstance(p, ContinuousPosterior):
        if loss.id != p.loss.id:
            raise ConfigError(
                f"posterior was built for loss {p.loss.id!r}, got {loss.id!r}"
            )
        return p.add_term(space.features(a), space.label_sign(y), beta)
    raise ConfigError(f"unsupported posterior type {type(p).__name__}")


def apply_update(
    p: PosteriorHandle,
    rule: str,
    a: Atom,
    y,
    beta: float,
    loss: Loss,
    space: StructureSpace,
) -> PosteriorHandle:
    if rule == "hard":
        return update_hard(p, a, y, space)
    if rule == "soft01":
        return update_soft01(p, a, y, beta, space)
    if rule == "general_loss":
        return update_general_loss(p, a, y, beta, loss, space)
    raise ConfigError(f"unknown update rule {rule!r}")


# ---------------------------------------------------------------------------
# Query scoring (heuristic mode)
# ---------------------------------------------------------------------------


def score_query(
    pairs: Sequence[tuple[Structure, Structure]],
    a: Atom,
    beta: float,
    loss: Loss,
    d: DistanceFn,
    space: StructureSpace,
) -> float:
    """Worst-case-over-responses expected surviving spread of an atom:
    max_y (1/n) sum over pairs of d(g,g') * exp(-beta*(loss_g + loss_h)).
    Lower is better."""
    if not pairs:
        raise ValueError("pairs must be non-empty")
    best = -math.inf
    for y in space.response_set.labels:
        total = 0.0
        for g, h in pairs:
            dist = float(d(g, h))
            if dist == 0.0:
                continue
            if loss.margin_based:
                y_sign = space.label_sign(y)
                lg = float(loss.value(space.predict(g, a), y_sign))
                lh = float(loss.value(space.predict(h, a), y_sign))
            else:
                lg = float(loss.value(space.evaluate(g, a), y))
                lh = float(loss.value(space.evaluate(h, a), y))
            total += dist * math.exp(-beta * (lg + lh))
        best = max(best, total / len(pairs))
    return best


def score_queries(
    pairs: Sequence[tuple[Structure, Structure]],
    atoms: Sequence[Atom],
    beta: float,
    loss: Loss,
    d: DistanceFn,
    space: StructureSpace,
) -> np.ndarray:
    """Vectorized :func:`score_query` over a batch of atoms."""
    if not pairs:
        raise ValueError("pairs must be non-empty")
    if not atoms:
        raise ValueError("atoms must be non-empty")
    gs = [g for g, _ in pairs]
    hs = [h for _, h in pairs]
    dists = d.cross(gs, hs)  # (n,)
    n = len(pairs)
    scores = np.full(len(atoms), -np.inf)
    if loss.margin_based:
        z_g = space.predict_matrix(gs, atoms)  # (n, m)
        z_h = space.predict_matrix(hs, atoms)
        for y in space.response_set.labels:
            y_sign = space.label_sign(y)
            weight = np.exp(-beta * (loss.value(z_g, y_sign) + loss.value(z_h, y_sign)))
            scores = np.maximum(scores, dists @ weight / n)
    else:
        r_g = np.stack([space.evaluate_index_many(g, atoms) for g in gs])
        r_h = np.stack([space.evaluate_index_many(h, atoms) for h in hs])
        for y_idx in range(len(space.response_set)):
            miss = (r_g != y_idx).astype(float) + (r_h != y_idx).astype(float)
            scores = np.maximum(scores, dists @ np.exp(-beta * miss) / n)
    return scores


# ---------------------------------------------------------------------------
# Run records
# ---------------------------------------------------------------------------


@dataclass
class RoundLog:
    """State after round ``t`` (entry 0 describes the prior)."""

    t: int
    atom: Atom | None
    response: object | None
    snapshot_id: int
    error: float | None
    diam: float | None
    atoms_drawn: int = 0
    structures_drawn: int = 0
    select_timeout: bool = False
    informative: bool | None = None
    qbc_attempts: int = 0
    extra: dict = field(default_factory=dict)


@dataclass
class RunRecord:
    """Full log of one run: per-round entries plus a replayable update log.

    Posterior snapshots are stored as ids into ``updates`` (the number of
    updates applied), not as deep copies; :meth:`replay` rebuilds any finite
    snapshot from the prior.
    """

    algorithm: str
    rounds: list[RoundLog] = field(default_factory=list)
    updates: list[tuple] = field(default_factory=list)  # (atom, y, rule, beta, loss_id)
    stopped_early: bool = False
    stop_round: int | None = None
    final_posterior: PosteriorHandle | None = None
    counters: dict = field(default_factory=dict)

    def errors(self) -> list[float | None]:
        return [r.error for r in self.rounds]

    def queried_atoms(self) -> list[Atom]:
        return [r.atom for r in self.rounds if r.atom is not None]

    def replay(
        self,
        prior: WeightedEnsemble,
        space: StructureSpace,
        upto: int | None = None,
    ) -> WeightedEnsemble:
        """Re-apply the first ``upto`` logged updates to ``prior``."""
        p = prior
        steps = self.updates if upto is None else self.updates[:upto]
        for a, y, rule, beta, loss_id in steps:
            p = apply_update(p, rule, a, y, beta, get_loss(loss_id), space)
        return p


# ---------------------------------------------------------------------------
# The protocol runner
# ---------------------------------------------------------------------------


class _Runner:
    def __init__(
        self,
        cfg: NdbalConfig,
        space: StructureSpace,
        oracle: Oracle,
        prior: PosteriorHandle,
        d: DistanceFn,
        g_star: Structure | None,
        rng: np.random.Generator,
        algorithm: str,
        extra_metrics: dict[str, DistanceFn] | None = None,
    ):
        cfg.validate_for(oracle)
        if cfg.update_rule in ("hard", "soft01") and not isinstance(
            prior, WeightedEnsemble
        ):
            raise ConfigError(
                f"the {cfg.update_rule!r} update needs a finite ensemble posterior"
            )
        if cfg.update_rule == "general_loss" and isinstance(
            prior, ContinuousPosterior
        ):
            if cfg.loss.id != prior.loss.id:
                raise ConfigError("config loss and posterior loss disagree")
        self.cfg = cfg
        self.space = space
        self.oracle = oracle
        self.posterior = prior
        self.d = d
        self.g_star = g_star
        self.rng = rng
        self.record = RunRecord(algorithm=algorithm)
        self.pending_pairs: list[tuple[Structure, Structure]] | None = None
        self._finite = isinstance(prior, WeightedEnsemble)
        self._exact_ok = self._finite and len(prior) <= EXACT_LIMIT
        self._dist_matrix = self.d.matrix(prior.structures) if self._exact_ok else None
        self._target_dists = (
            self.d.to_target(prior.structures, g_star)
            if self._exact_ok and g_star is not None
            else None
        )
        self.extra_metrics = extra_metrics or {}
        self._extra_target = (
            {
                name: dk.to_target(prior.structures, g_star)
                for name, dk in self.extra_metrics.items()
            }
            if self._exact_ok and g_star is not None
            else None
        )

    # -- shared logging ----------------------------------------------------

    def _log_state(self, t: int) -> RoundLog:
        """Error/diameter estimates of the current posterior; for sampled
        posteriors this also stocks the next round's scoring pairs."""
        error = None
        diam = None
        drawn = 0
        extra: dict = {}
        if self._exact_ok:
            w = self.posterior.probabilities
            if self._target_dists is not None:
                error = float(w @ self._target_dists)
                for name, dists in (self._extra_target or {}).items():
                    extra[name] = float(w @ dists)
            diam = avg_diam_exact(self.posterior, self.d, self._dist_matrix)
        else:
            need_pairs = self.cfg.mode == "heuristic"
            n_draw = max(
                2 * self.cfg.n_pairs if need_pairs else 0,
                self.cfg.error_draws if self.g_star is not None else 0,
            )
            if n_draw > 0:
                draws = self.posterior.draw_structures(n_draw, self.rng)
                drawn = n_draw
                if self.g_star is not None:
                    head = draws[: self.cfg.error_draws]
                    error = float(np.mean(self.d.to_target(head, self.g_star)))
                    for name, dk in self.extra_metrics.items():
                        extra[name] = float(np.mean(dk.to_target(head, self.g_star)))
                if need_pairs:
                    # members of a pair sit n_pairs thinned draws apart so
                    # chain autocorrelation cancels out of distance estimates
                    k = self.cfg.n_pairs
                    self.pending_pairs = [
                        (draws[i], draws[k + i]) for i in range(k)
                    ]
                    gs = [g for g, _ in self.pending_pairs]
                    hs = [h for _, h in self.pending_pairs]
                    diam = float(np.mean(self.d.cross(gs, hs)))
        return RoundLog(
            t=t,
            atom=None,
            response=None,
            snapshot_id=len(self.record.updates),
            error=error,
            diam=diam,
            structures_drawn=drawn,
            extra=extra,
        )

    def _should_stop(self, t: int) -> tuple[bool, int]:
        """Stopping check at the start of round ``t``; returns (stop, drawn)."""
        cfg = self.cfg
        if cfg.stop_eps is None:
            return False, 0
        threshold = stopping_threshold(cfg.stop_eps, cfg.stop_lambda)
        if cfg.stop_estimator == "exact":
            if not self._exact_ok:
                raise ConfigError("exact stopping needs a finite ensemble")
            value = avg_diam_exact(self.posterior, self.d, self._dist_matrix)
            return value <= threshold, 0
        n_t = stopping_sample_size(cfg.stop_eps, cfg.stop_lambda, t, cfg.delta)
        pairs = self.posterior.draw_pairs(n_t, self.rng)
        gs = [g for g, _ in pairs]
        hs = [h for _, h in pairs]
        value = float(np.mean(self.d.cross(gs, hs)))
        return value <= threshold, 2 * n_t

    def _informative(self, a: Atom) -> bool | None:
        """Whether two positive-weight structures still disagree at ``a``."""
        if not self._finite:
            return None
        w = self.posterior.probabilities
        alive = np.nonzero(w > 1e-12)[0]
        if len(alive) < 2:
            return False
        rs = self.space.response_set
        seen = set()
        for i in alive:
            seen.add(rs.index(self.space.evaluate(self.posterior.structures[int(i)], a)))
            if len(seen) > 1:
                return True
        return False

    def _apply(self, a: Atom, y) -> None:
        cfg = self.cfg
        self.posterior = apply_update(
            self.posterior, cfg.update_rule, a, y, cfg.beta, cfg.loss, self.space
        )
        self.record.updates.append((a, y, cfg.update_rule, cfg.beta, cfg.loss_id))

    # -- query choosers ------------------------------------------------------

    def _choose_ndbal(self, t: int, log: RoundLog) -> Atom | None:
        cfg = self.cfg
        m_t = cfg.atoms_for_round(t)
        atoms = self.space.sample_atoms(m_t, self.rng)
        log.atoms_drawn = m_t
        if cfg.mode == "theory":
            delta_t = cfg.delta / (2.0 * t * (t + 1))
            try:
                return select(
                    self.posterior,
                    atoms,
                    cfg.alpha,
                    delta_t,
                    self.d,
                    self.space,
                    self.rng,
                    k_max=cfg.select_k_max,
                )
            except SelectTimeoutError as err:
                log.select_timeout = True
                return err.best_atom
        if len(atoms) == 1:
            # A single candidate wins by default; skip the scoring draws so a
            # one-candidate run consumes the same rng stream as the blind
            # baseline.
            return atoms[0]
        if self.pending_pairs is None:
            if self._finite:
                self.pending_pairs = self.posterior.draw_pairs(cfg.n_pairs, self.rng)
                log.structures_drawn += 2 * cfg.n_pairs
            else:  # theory-to-heuristic edge: stock pairs now
                draws = self.posterior.draw_structures(2 * cfg.n_pairs, self.rng)
                log.structures_drawn += 2 * cfg.n_pairs
                self.pending_pairs = [
                    (draws[i], draws[cfg.n_pairs + i]) for i in range(cfg.n_pairs)
                ]
        beta = cfg.score_beta if cfg.score_beta is not None else cfg.beta
        scores = score_queries(
            self.pending_pairs, atoms, beta, cfg.loss, self.d, self.space
        )
        return atoms[int(np.argmin(scores))]

    def _choose_random(self, t: int, log: RoundLog) -> Atom | None:
        log.atoms_drawn = 1
        return self.space.sample_atom(self.rng)

    def _choose_qbc(self, t: int, log: RoundLog) -> Atom | None:
        for attempt in range(1, self.cfg.qbc_attempt_cap + 1):
            a = self.space.sample_atom(self.rng)
            (g, h), = self.posterior.draw_pairs(1, self.rng)
            log.atoms_drawn += 1
            log.structures_drawn += 2
            if self.space.evaluate(g, a) != self.space.evaluate(h, a):
                log.qbc_attempts = attempt
                return a
        log.qbc_attempts = self.cfg.qbc_attempt_cap
        return None

    # -- main loop -----------------------------------------------------------

    def run(self, chooser) -> RunRecord:
        cfg = self.cfg
        rec = self.record
        rec.rounds.append(self._log_state(0))
        for t in range(1, cfg.budget + 1):
            stop, drawn_for_stop = self._should_stop(t)
            if stop:
                rec.stopped_early = True
                rec.stop_round = t
                rec.rounds[-1].structures_drawn += drawn_for_stop
                break
            log = RoundLog(
                t=t,
                atom=None,
                response=None,
                snapshot_id=len(rec.updates),
                error=None,
                diam=None,
                structures_drawn=drawn_for_stop,
            )
            a = chooser(t, log)
            if a is None:  # consensus reached (qbc cap-out): stop querying
                rec.rounds.append(log)
                break
            self.pending_pairs = None  # consumed by scoring / stale after update
            log.informative = self._informative(a)
            y = self.oracle.respond(a, self.rng)
            self._apply(a, y)
            state = self._log_state(t)
            log.atom = a
            log.response = y
            log.snapshot_id = len(rec.updates)
            log.error = state.error
            log.diam = state.diam
            log.extra = state.extra
            log.structures_drawn += state.structures_drawn
            rec.rounds.append(log)
        rec.final_posterior = self.posterior
        rec.counters = {
            "rounds": max(r.t for r in rec.rounds),
            "oracle_queries": len(rec.updates),
            "atoms_drawn": sum(r.atoms_drawn for r in rec.rounds),
            "structures_sampled": sum(r.structures_drawn for r in rec.rounds),
        }
        return rec


def run_ndbal(
    cfg: NdbalConfig,
    space: StructureSpace,
    oracle: Oracle,
    prior: PosteriorHandle,
    d: DistanceFn,
    g_star: Structure | None = None,
    rng: np.random.Generator | None = None,
    extra_metrics: dict[str, DistanceFn] | None = None,
) -> RunRecord:
    """Run the diameter-driven query loop; see the module docstring."""
    if rng is None:
        rng = np.random.default_rng()
    runner = _Runner(cfg, space, oracle, prior, d, g_star, rng, "ndbal", extra_metrics)
    return runner.run(runner._choose_ndbal)


def run_random_baseline(
    cfg: NdbalConfig,
    space: StructureSpace,
    oracle: Oracle,
    prior: PosteriorHandle,
    d: DistanceFn,
    g_star: Structure | None = None,
    rng: np.random.Generator | None = None,
    extra_metrics: dict[str, DistanceFn] | None = None,
) -> RunRecord:
    """Same protocol with each query drawn blindly from the atom distribution."""
    if rng is None:
        rng = np.random.default_rng()
    runner = _Runner(cfg, space, oracle, prior, d, g_star, rng, "random", extra_metrics)
    return runner.run(runner._choose_random)


def run_qbc_baseline(
    cfg: NdbalConfig,
    space: StructureSpace,
    oracle: Oracle,
    prior: PosteriorHandle,
    d: DistanceFn,
    g_star: Structure | None = None,
    rng: np.random.Generator | None = None,
    extra_metrics: dict[str, DistanceFn] | None = None,
) -> RunRecord:
    """Same protocol, querying only atoms on which two posterior draws
    disagree; a round that exhausts the attempt cap ends the run."""
    if rng is None:
        rng = np.random.default_rng()
    runner = _Runner(cfg, space, oracle, prior, d, g_star, rng, "qbc", extra_metrics)
    return runner.run(runner._choose_qbc)
