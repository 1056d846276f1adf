"""Per-observation losses on the linear predictor, both scaled by 1/n."""

from __future__ import annotations

import numpy as np
from scipy.special import expit


class NumericalError(ArithmeticError):
    pass


def loss(eta: np.ndarray, y: np.ndarray, family: str) -> float:
    """Squared error ``||y - eta||^2 / (2n)`` or logistic ``mean(log(1 + e^eta) - y*eta)``."""
    if family == "gaussian":
        d = y - eta
        val = 0.5 * float(d @ d) / y.shape[0]
    else:
        val = float(np.mean(np.logaddexp(0.0, eta) - y * eta))
    if not np.isfinite(val):
        raise NumericalError(f"non-finite {family} loss")
    return val


def grad_eta(eta: np.ndarray, y: np.ndarray, family: str) -> np.ndarray:
    """Derivative of the loss with respect to each linear-predictor entry."""
    if family == "gaussian":
        return (eta - y) / y.shape[0]
    return (expit(eta) - y) / y.shape[0]


def mean_response(eta: np.ndarray, family: str) -> np.ndarray:
    return eta if family == "gaussian" else expit(eta)


def null_intercept(y: np.ndarray, family: str) -> float:
    ybar = float(np.mean(y))
    if family == "gaussian":
        return ybar
    if not 0.0 < ybar < 1.0:
        raise NumericalError("binomial response has a single class; intercept is infinite")
    return float(np.log(ybar / (1.0 - ybar)))
