"""Input-process moments and profile statistics used by the MSE approximations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attack import ProfileMatrix
from .errors import ValidationError
from .mixer import ObservationWindow


@dataclass(frozen=True, eq=False)
class InputMoments:
    """Per-sender mean and 2nd/3rd/4th central moments of messages per round."""

    mu: np.ndarray
    mu2: np.ndarray
    mu3: np.ndarray
    mu4: np.ndarray

    def __post_init__(self):
        arrs = [np.atleast_1d(np.asarray(getattr(self, f), dtype=np.float64)) for f in ("mu", "mu2", "mu3", "mu4")]
        if len({a.shape for a in arrs}) != 1 or arrs[0].ndim != 1:
            raise ValidationError("moment vectors must be 1-D and of equal length")
        for name, a in zip(("mu", "mu2", "mu3", "mu4"), arrs):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n_senders(self) -> int:
        return len(self.mu)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("mu", "mu2", "mu3", "mu4")}


@dataclass(frozen=True, eq=False)
class ProfileStats:
    """``s[i, j] = p_{j|i} (1 - p_{j|i})`` and uniformity ``u[i] = 1 - sum_j p_{j|i}^2``."""

    s: np.ndarray
    u: np.ndarray


def input_moments(obs: ObservationWindow | np.ndarray) -> InputMoments:
    """Sample moments of each column of ``U``, normalized by rho (not rho - 1)."""
    U = obs.U if isinstance(obs, ObservationWindow) else np.asarray(obs)
    U = np.asarray(U, dtype=np.float64)
    if U.shape[0] < 2:
        raise ValidationError(f"need at least 2 rounds for moments, got {U.shape[0]}")
    mu = U.mean(axis=0)
    d = U - mu
    d2 = d * d
    mu2 = d2.mean(axis=0)
    mu3 = (d2 * d).mean(axis=0)
    mu4 = (d2 * d2).mean(axis=0)
    return InputMoments(mu, mu2, mu3, mu4)


def profile_stats(P: ProfileMatrix | np.ndarray) -> ProfileStats:
    if isinstance(P, ProfileMatrix):
        P = P.P
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or (P < 0).any() or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-9):
        raise ValidationError("profile_stats needs a row-stochastic profile matrix")
    s = P * (1.0 - P)
    # summing s keeps sum_j s[i, j] == u[i] to rounding
    u = s.sum(axis=1)
    return ProfileStats(s, u)
