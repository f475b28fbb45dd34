"""Posterior sampling: exact draws from finite ensembles and
Metropolis-adjusted Langevin (MALA) chains for continuous log-concave
posteriors.

The chain's step size is adapted only while burning in (multiplied by 1.1
when the windowed acceptance rate exceeds 0.7, by 0.9 when it falls below
0.5) and frozen afterwards, so downstream Monte Carlo estimates come from a
fixed, valid chain.  When a new data term is added the chain re-burns briefly
from its current state (warm start) before producing draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .core import ConfigError, Structure, WeightedEnsemble
from .losses import LOGISTIC, Loss

__all__ = [
    "MalaChain",
    "ContinuousPosterior",
    "sample_finite",
    "mala_step",
    "mala_log_accept",
    "adapt_step",
    "adapted_eta",
    "sample_posterior",
]

ACCEPT_BAND = (0.5, 0.7)
ETA_UP = 1.1
ETA_DOWN = 0.9


def sample_finite(e: WeightedEnsemble, rng: np.random.Generator) -> Structure:
    """One draw from a finite ensemble (structure i with probability w_i)."""
    return e.draw_structures(1, rng)[0]


def adapted_eta(eta: float, acceptance_rate: float) -> float:
    """Step-size band rule: grow when accepting too often, shrink when too rarely."""
    if acceptance_rate > ACCEPT_BAND[1]:
        return eta * ETA_UP
    if acceptance_rate < ACCEPT_BAND[0]:
        return eta * ETA_DOWN
    return eta


def mala_log_accept(
    w: np.ndarray,
    v: np.ndarray,
    f_w: float,
    f_v: float,
    grad_w: np.ndarray,
    grad_v: np.ndarray,
    eta: float,
) -> float:
    """Log acceptance ratio of proposal ``v`` from state ``w``.

    With proposal law V ~ N(w + eta*grad_w, 2*eta*I), the ratio corrects the
    asymmetry of the drift so the chain leaves exp(f) invariant; it is exactly
    0 when v == w.
    """
    forward = v - w - eta * grad_w
    backward = w - v - eta * grad_v
    return f_v - f_w + (forward @ forward - backward @ backward) / (4.0 * eta)


@dataclass
class MalaChain:
    """A MALA chain over an arbitrary differentiable log-density."""

    state: np.ndarray
    eta: float
    logpdf: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    window: int = 50
    burn_in: int = 1000
    thinning: int = 5
    adapting: bool = True

    window_accepts: int = field(default=0, repr=False)
    window_steps: int = field(default=0, repr=False)
    accepts_total: int = field(default=0, repr=False)
    steps_total: int = field(default=0, repr=False)
    rejected_nonfinite: int = field(default=0, repr=False)

    def __post_init__(self) -> None:
        self.state = np.asarray(self.state, dtype=float).copy()
        if self.eta <= 0:
            raise ConfigError("MalaChain.eta must be positive")
        self._f = float(self.logpdf(self.state))
        if not math.isfinite(self._f):
            raise ConfigError("log-density must be finite at the initial state")
        self._g = np.asarray(self.grad(self.state), dtype=float)

    def step(
        self,
        rng: np.random.Generator,
        noise: np.ndarray | None = None,
        log_u: float | None = None,
    ) -> bool:
        """Advance one step; returns True if the proposal was accepted.

        ``noise`` and ``log_u`` may be injected to replay fixed randomness.
        """
        d = self.state.shape[0]
        if noise is None:
            noise = rng.standard_normal(d)
        if log_u is None:
            log_u = math.log(rng.random())
        v = self.state + self.eta * self._g + math.sqrt(2.0 * self.eta) * noise
        f_v = float(self.logpdf(v))
        self.steps_total += 1
        self.window_steps += 1
        if not math.isfinite(f_v):
            self.rejected_nonfinite += 1
            return False
        g_v = np.asarray(self.grad(v), dtype=float)
        if log_u < mala_log_accept(self.state, v, self._f, f_v, self._g, g_v, self.eta):
            self.state, self._f, self._g = v, f_v, g_v
            self.accepts_total += 1
            self.window_accepts += 1
            return True
        return False

    def window_rate(self) -> float:
        if self.window_steps == 0:
            raise ConfigError("acceptance window is empty")
        return self.window_accepts / self.window_steps

    def run(self, n_steps: int, rng: np.random.Generator) -> int:
        """Advance ``n_steps``, applying the band rule at each full window
        while adaptation is on.  Returns the number of accepted steps."""
        accepted = 0
        for _ in range(n_steps):
            accepted += self.step(rng)
            if self.adapting and self.window_steps >= self.window:
                adapt_step(self)
        return accepted


def mala_step(c: MalaChain, rng: np.random.Generator) -> bool:
    """Advance the chain one step in place; returns the acceptance flag."""
    return c.step(rng)


def adapt_step(c: MalaChain) -> MalaChain:
    """Apply the band rule to the current acceptance window, then reset it.

    No-op (beyond the reset) unless the chain is still adapting.
    """
    rate = c.window_rate()
    if c.adapting:
        c.eta = adapted_eta(c.eta, rate)
    c.window_accepts = 0
    c.window_steps = 0
    return c


# ---------------------------------------------------------------------------
# Fast path: linear predictions + logistic loss + Gaussian prior.
# The kernel consumes randomness pre-drawn from a numpy Generator, so results
# are bit-reproducible and independent of the execution backend's own state.
# ---------------------------------------------------------------------------


@njit(cache=True)
def _logistic_f_grad(w, x_rows, y_signs, betas, inv_sigma2, grad_out):
    d = w.shape[0]
    f = 0.0
    for k in range(d):
        f -= 0.5 * inv_sigma2 * w[k] * w[k]
        grad_out[k] = -inv_sigma2 * w[k]
    for i in range(x_rows.shape[0]):
        z = 0.0
        for k in range(d):
            z += x_rows[i, k] * w[k]
        m = y_signs[i] * z
        if m > 0.0:
            e = math.exp(-m)
            loss = math.log1p(e)
            s = e / (1.0 + e)
        else:
            e = math.exp(m)
            loss = -m + math.log1p(e)
            s = 1.0 / (1.0 + e)
        f -= betas[i] * loss
        coef = betas[i] * y_signs[i] * s
        for k in range(d):
            grad_out[k] += coef * x_rows[i, k]
    return f


@njit(cache=True)
def _mala_run_logistic(
    state, eta, x_rows, y_signs, betas, inv_sigma2, normals, log_us, collect_every, out
):
    d = state.shape[0]
    w = state.copy()
    v = np.empty(d)
    g_w = np.empty(d)
    g_v = np.empty(d)
    f_w = _logistic_f_grad(w, x_rows, y_signs, betas, inv_sigma2, g_w)
    accepts = 0
    nonfinite = 0
    out_i = 0
    root = math.sqrt(2.0 * eta)
    for s in range(log_us.shape[0]):
        for k in range(d):
            v[k] = w[k] + eta * g_w[k] + root * normals[s, k]
        f_v = _logistic_f_grad(v, x_rows, y_signs, betas, inv_sigma2, g_v)
        if math.isfinite(f_v):
            q_fwd = 0.0
            q_bwd = 0.0
            for k in range(d):
                a = v[k] - w[k] - eta * g_w[k]
                q_fwd += a * a
                b = w[k] - v[k] - eta * g_v[k]
                q_bwd += b * b
            if log_us[s] < f_v - f_w + (q_fwd - q_bwd) / (4.0 * eta):
                for k in range(d):
                    w[k] = v[k]
                    g_w[k] = g_v[k]
                f_w = f_v
                accepts += 1
        else:
            nonfinite += 1
        if collect_every > 0 and (s + 1) % collect_every == 0:
            out[out_i] = w
            out_i += 1
    state[:] = w
    return accepts, nonfinite


def _mala_run_numpy(
    state: np.ndarray,
    eta: float,
    logpdf: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    normals: np.ndarray,
    log_us: np.ndarray,
    collect_every: int,
    out: np.ndarray | None,
) -> tuple[int, int]:
    """Reference implementation with kernel-identical randomness consumption."""
    w = state.copy()
    f_w = float(logpdf(w))
    g_w = np.asarray(grad(w), dtype=float)
    accepts = 0
    nonfinite = 0
    out_i = 0
    root = math.sqrt(2.0 * eta)
    for s in range(log_us.shape[0]):
        v = w + eta * g_w + root * normals[s]
        f_v = float(logpdf(v))
        if math.isfinite(f_v):
            g_v = np.asarray(grad(v), dtype=float)
            if log_us[s] < mala_log_accept(w, v, f_w, f_v, g_w, g_v, eta):
                w, f_w, g_w = v, f_v, g_v
                accepts += 1
        else:
            nonfinite += 1
        if collect_every > 0 and (s + 1) % collect_every == 0:
            out[out_i] = w
            out_i += 1
    state[:] = w
    return accepts, nonfinite


class ContinuousPosterior:
    """Gaussian prior N(0, sigma^2 I_d) reweighted by exp(-beta * loss) terms,
    sampled with a warm-started MALA chain.

    The log-density is f(w) = -sum_i beta_i * loss(<w, x_i>, y_i)
    - ||w||^2 / (2 sigma^2), which is concave whenever the loss is convex in
    its first argument.  Draws are taken every ``thinning`` steps after the
    pending burn-in is exhausted.
    """

    def __init__(
        self,
        dim: int,
        sigma: float,
        loss: Loss = LOGISTIC,
        burn_in: int = 1000,
        thinning: int = 5,
        reburn: int = 100,
        window: int = 50,
        eta0: float | None = None,
        init_state: np.ndarray | None = None,
    ):
        if dim < 1:
            raise ConfigError("dim must be >= 1")
        if sigma <= 0:
            raise ConfigError("sigma must be positive")
        if not loss.margin_based or not loss.convex:
            raise ConfigError(
                "continuous posteriors need a convex margin-based loss"
            )
        if thinning < 1 or burn_in < 0 or reburn < 0 or window < 1:
            raise ConfigError("invalid sampler budgets")
        self.dim = dim
        self.sigma = float(sigma)
        self.loss = loss
        self.burn_in = burn_in
        self.thinning = thinning
        self.reburn = reburn
        self.window = window
        self.x_rows = np.zeros((0, dim), dtype=float)
        self.y_signs = np.zeros(0, dtype=float)
        self.betas = np.zeros(0, dtype=float)
        self.eta = float(eta0) if eta0 is not None else self.sigma**2 / dim
        if self.eta <= 0:
            raise ConfigError("eta0 must be positive")
        self.state = (
            np.zeros(dim) if init_state is None else np.asarray(init_state, float).copy()
        )
        if self.state.shape != (dim,):
            raise ConfigError("init_state has wrong shape")
        self._pending = burn_in
        self._frozen_accepts = 0
        self._frozen_steps = 0

    # ---- density ---------------------------------------------------------

    def logpdf(self, w: np.ndarray) -> float:
        w = np.asarray(w, dtype=float)
        val = -0.5 * float(w @ w) / self.sigma**2
        if len(self.x_rows):
            z = self.x_rows @ w
            val -= float(np.sum(self.betas * self.loss.value(z, self.y_signs)))
        return val

    def grad(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        g = -w / self.sigma**2
        if len(self.x_rows):
            z = self.x_rows @ w
            slopes = self.betas * self.loss.grad_z(z, self.y_signs)
            g -= self.x_rows.T @ slopes
        return g

    # ---- terms -------------------------------------------------------------

    def add_term(self, x: np.ndarray, y: float, beta: float) -> "ContinuousPosterior":
        """Record one exp(-beta * loss(<w,x>, y)) factor; schedules a re-burn."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ConfigError("term feature vector has wrong shape")
        if y not in (-1, 1, -1.0, 1.0):
            raise ConfigError("margin losses need labels in {+1, -1}")
        if beta < 0:
            raise ConfigError("beta must be non-negative")
        self.x_rows = np.vstack([self.x_rows, x[None, :]])
        self.y_signs = np.append(self.y_signs, float(y))
        self.betas = np.append(self.betas, float(beta))
        self._pending = max(self._pending, self.reburn)
        return self

    @property
    def n_terms(self) -> int:
        return len(self.betas)

    @property
    def acceptance_rate(self) -> float:
        """Acceptance rate over all post-burn-in steps taken so far."""
        if self._frozen_steps == 0:
            raise ConfigError("no post-burn-in steps have been taken")
        return self._frozen_accepts / self._frozen_steps

    # ---- chain driving ---------------------------------------------------

    def _advance(
        self, n_steps: int, rng: np.random.Generator, collect_every: int = 0
    ) -> tuple[int, np.ndarray | None]:
        if n_steps == 0:
            return 0, None
        normals = rng.standard_normal((n_steps, self.dim))
        log_us = np.log(rng.random(n_steps))
        out = None
        if collect_every > 0:
            out = np.empty((n_steps // collect_every, self.dim))
        if self.loss is LOGISTIC:
            accepts, _ = _mala_run_logistic(
                self.state,
                self.eta,
                self.x_rows,
                self.y_signs,
                self.betas,
                1.0 / self.sigma**2,
                normals,
                log_us,
                collect_every,
                out if out is not None else np.empty((0, self.dim)),
            )
        else:
            accepts, _ = _mala_run_numpy(
                self.state,
                self.eta,
                self.logpdf,
                self.grad,
                normals,
                log_us,
                collect_every,
                out,
            )
        return accepts, out

    def _ensure_burned(self, rng: np.random.Generator) -> None:
        """Run the pending adaptive burn-in, one window per adaptation."""
        while self._pending > 0:
            chunk = min(self.window, self._pending)
            accepts, _ = self._advance(chunk, rng)
            self.eta = adapted_eta(self.eta, accepts / chunk)
            self._pending -= chunk

    def draw_array(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """(n, dim) array of thinned post-burn-in states."""
        if n < 1:
            raise ValueError("n must be >= 1")
        self._ensure_burned(rng)
        steps = n * self.thinning
        accepts, out = self._advance(steps, rng, collect_every=self.thinning)
        self._frozen_accepts += accepts
        self._frozen_steps += steps
        return out

    # ---- PosteriorHandle contract -----------------------------------------

    def draw_structures(self, n: int, rng: np.random.Generator) -> list[Structure]:
        return [Structure(row.copy()) for row in self.draw_array(n, rng)]

    def draw_pairs(
        self, n: int, rng: np.random.Generator
    ) -> list[tuple[Structure, Structure]]:
        # pair draws n*thinning steps apart: consecutive chain states are
        # correlated and would bias pair-distance estimates downward
        ss = self.draw_structures(2 * n, rng)
        return [(ss[i], ss[n + i]) for i in range(n)]


def sample_posterior(
    p: ContinuousPosterior, n: int, rng: np.random.Generator
) -> list[Structure]:
    """Burn in (adaptively) if needed, then return ``n`` thinned draws."""
    return p.draw_structures(n, rng)
