"""Loss functions for the general-loss posterior update and query score.

Two prediction conventions coexist:

- *label* losses compare a structure's discrete response to the observed
  response (``margin_based = False``);
- *margin* losses consume a real-valued prediction z and a label y in
  {+1, -1} (``margin_based = True``) and must be differentiable in z so that
  gradient-based samplers can use them.
"""

from __future__ import annotations

import numpy as np

from .core import ConfigError

__all__ = ["Loss", "ZeroOneLoss", "LogisticLoss", "get_loss", "ZERO_ONE", "LOGISTIC"]


class Loss:
    id: str = "loss"
    margin_based: bool = False
    convex: bool = False

    def value(self, z, y):
        """Loss of predicting ``z`` when the response is ``y`` (vectorized in z)."""
        raise NotImplementedError

    def grad_z(self, z, y):
        """d value / d z (margin losses only; vectorized in z)."""
        raise NotImplementedError(f"{self.id} loss has no gradient")


class ZeroOneLoss(Loss):
    """1 if the predicted response differs from the observed one, else 0."""

    id = "zero_one"
    margin_based = False
    convex = False

    def value(self, z, y):
        if isinstance(z, np.ndarray):
            return (z != y).astype(float)
        return float(z != y)


class LogisticLoss(Loss):
    """log(1 + exp(-z y)) for margin z and label y in {+1, -1}."""

    id = "logistic"
    margin_based = True
    convex = True

    def value(self, z, y):
        m = np.multiply(z, y)
        out = np.logaddexp(0.0, -m)
        return float(out) if np.isscalar(z) else out

    def grad_z(self, z, y):
        # d/dz log(1 + e^{-zy}) = -y / (1 + e^{zy})
        m = np.multiply(z, y)
        out = np.multiply(-y, _sigmoid(-m))
        return float(out) if np.isscalar(z) else out


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


ZERO_ONE = ZeroOneLoss()
LOGISTIC = LogisticLoss()

_REGISTRY = {ZERO_ONE.id: ZERO_ONE, LOGISTIC.id: LOGISTIC}


def get_loss(loss_id: str) -> Loss:
    try:
        return _REGISTRY[loss_id]
    except KeyError:
        raise ConfigError(
            f"unknown loss {loss_id!r}; available: {sorted(_REGISTRY)}"
        ) from None
