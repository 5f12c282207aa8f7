"""Closed-form approximations of the LSDA mean squared error.

With per-sender input moments ``mu, mu2, mu3, mu4`` and profile uniformities
``u``, the approximate MSE of sender ``i`` after ``rho`` rounds is

    multinomial outputs:   (1/rho) / mu2[i] * (sum_k mu[k] u[k]               + mu3[i] / mu2[i] * u[i])
    max-variance outputs:  (1/rho) / mu2[i] * (sum_k (mu[k]^2 + mu2[k]) u[k]  + mu4[i] / mu2[i] * u[i])

These rest on the large-rho limit ``U^T U / rho -> Rx = mu mu^T + diag(mu2)``
and on dropping the terms in ``gamma * mu[i]^2 / mu2[i]``, which vanish when the
other senders together dominate ``sum_k mu[k]^2 / mu2[k]``. Passing
``dominance=False`` keeps those terms (exact Sherman-Morrison inverse).

Senders with ``mu2 == 0`` get NaN predictions instead of raising.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .statistics import InputMoments, ProfileStats


class OutputModel(str, enum.Enum):
    MULTINOMIAL = "multinomial"
    MAX_VARIANCE = "max_variance"


@dataclass(frozen=True)
class TheoryInputs:
    moments: InputMoments
    stats: ProfileStats
    rho: float

    def __post_init__(self):
        if self.rho <= 0:
            raise ValidationError(f"rho must be positive, got {self.rho}")
        if self.moments.n_senders != len(self.stats.u):
            raise ValidationError("moments and profile statistics disagree on the number of senders")

    @property
    def degenerate(self) -> np.ndarray:
        """Senders whose participation never varies (``mu2 == 0``)."""
        return self.moments.mu2 <= 0


@dataclass(frozen=True, eq=False)
class TheoryIntermediates:
    Rx: np.ndarray
    gamma: float
    Rx_inv: np.ndarray


def autocorrelation(moments: InputMoments) -> np.ndarray:
    mu = moments.mu
    return np.outer(mu, mu) + np.diag(moments.mu2)


def intermediates(moments: InputMoments) -> TheoryIntermediates:
    """``Rx``, ``gamma`` and the Sherman-Morrison inverse of ``Rx``.

    Degenerate senders are left out of the inverse (their rows and columns are NaN).
    """
    mu, mu2 = moments.mu, moments.mu2
    ok = mu2 > 0
    a = np.zeros_like(mu2)
    a[ok] = 1.0 / mu2[ok]
    gamma = 1.0 / (1.0 + np.sum(mu[ok] ** 2 * a[ok]))
    am = a * mu
    Rx_inv = np.diag(a) - gamma * np.outer(am, am)
    Rx_inv[~ok, :] = np.nan
    Rx_inv[:, ~ok] = np.nan
    return TheoryIntermediates(autocorrelation(moments), float(gamma), Rx_inv)


def _noise_weights(inputs: TheoryInputs, model: OutputModel) -> np.ndarray:
    """Per-sender output-variance weight: ``mu`` (multinomial) or ``mu^2 + mu2`` (max variance)."""
    m = inputs.moments
    if OutputModel(model) is OutputModel.MULTINOMIAL:
        return m.mu
    return m.mu ** 2 + m.mu2


def _self_moment(inputs: TheoryInputs, model: OutputModel) -> np.ndarray:
    m = inputs.moments
    return m.mu3 if OutputModel(model) is OutputModel.MULTINOMIAL else m.mu4


def predict_mse(inputs: TheoryInputs, model: OutputModel | str, dominance: bool = True) -> np.ndarray:
    model = OutputModel(model)
    m, u = inputs.moments, inputs.stats.u
    w = _noise_weights(inputs, model)
    d = _self_moment(inputs, model)
    total = float(np.sum(w * u))
    bad = inputs.degenerate
    out = np.full(m.n_senders, np.nan)
    ok = ~bad
    mu2 = m.mu2[ok]
    if dominance:
        out[ok] = (total + d[ok] / mu2 * u[ok]) / mu2
    else:
        R = intermediates(m).Rx_inv[np.ix_(ok, ok)]
        out[ok] = total * np.diag(R) + (R * R) @ (d[ok] * u[ok])
    return out / inputs.rho


def mse_multinomial(inputs: TheoryInputs, dominance: bool = True) -> np.ndarray:
    """Predicted per-sender MSE when each message picks its receiver independently."""
    return predict_mse(inputs, OutputModel.MULTINOMIAL, dominance)


def mse_maxvariance(inputs: TheoryInputs, dominance: bool = True) -> np.ndarray:
    """Predicted per-sender MSE when each sender sends a whole round's batch to one receiver."""
    return predict_mse(inputs, OutputModel.MAX_VARIANCE, dominance)


def middle_term(inputs: TheoryInputs, j: int, model: OutputModel | str = OutputModel.MULTINOMIAL) -> np.ndarray:
    """Approximate ``E{U^T Sigma_{y_j|U} U} / rho`` for receiver ``j``."""
    model = OutputModel(model)
    s_j = inputs.stats.s[:, j]
    c = float(np.sum(_noise_weights(inputs, model) * s_j))
    return c * autocorrelation(inputs.moments) + np.diag(_self_moment(inputs, model) * s_j)


def profile_covariance(
    inputs: TheoryInputs, j: int, model: OutputModel | str = OutputModel.MULTINOMIAL, dominance: bool = False
) -> np.ndarray:
    """Approximate N x N covariance of the estimated column ``p_hat_j``.

    ``dominance=False`` evaluates ``Rx^-1 R_mid Rx^-1 / rho`` literally.
    ``dominance=True`` applies the same simplification as the closed forms:
    ``Rx^-1 Rx Rx^-1`` collapses to ``Rx^-1`` and the remaining inverses are
    replaced by ``diag(1 / mu2)``. Summing the diagonal over ``j`` then
    reproduces :func:`predict_mse` for the same flag.
    """
    if not 0 <= j < inputs.stats.s.shape[1]:
        raise IndexError(f"receiver index {j} out of range")
    model = OutputModel(model)
    m = inputs.moments
    ok = ~inputs.degenerate
    n = m.n_senders
    out = np.full((n, n), np.nan)
    idx = np.ix_(ok, ok)
    if dominance:
        s_j = inputs.stats.s[:, j]
        c = float(np.sum(_noise_weights(inputs, model) * s_j))
        a = 1.0 / m.mu2[ok]
        d = _self_moment(inputs, model)[ok] * s_j[ok]
        out[idx] = np.diag(c * a + a * a * d)
    else:
        R = intermediates(m).Rx_inv[idx]
        mid = middle_term(inputs, j, model)[idx]
        out[idx] = R @ mid @ R
    return out / inputs.rho


def profile_covariance_multinomial(inputs: TheoryInputs, j: int, dominance: bool = False) -> np.ndarray:
    return profile_covariance(inputs, j, OutputModel.MULTINOMIAL, dominance)
