"""Least Squares Disclosure Attack.

The estimator is ``P_hat = (U^T U)^{-1} U^T Y``. It is computed through a QR
factorization of ``U`` rather than by inverting the normal matrix; each column
of ``P_hat`` is an independent triangular solve against the same ``R``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ValidationError
from .mixer import ObservationWindow


class ProfileKind(str, enum.Enum):
    GROUND_TRUTH = "ground_truth"
    ESTIMATE = "estimate"


@dataclass(frozen=True, eq=False)
class ProfileMatrix:
    """N x M matrix of transition probabilities ``p_{j|i}`` (row ``i``, column ``j``)."""

    P: np.ndarray
    kind: ProfileKind = ProfileKind.GROUND_TRUTH

    def __post_init__(self):
        P = np.array(self.P, dtype=np.float64)
        if P.ndim != 2:
            raise ValidationError(f"profile matrix must be 2-D, got shape {P.shape}")
        kind = ProfileKind(self.kind)
        if kind is ProfileKind.GROUND_TRUTH:
            if (P < 0).any():
                raise ValidationError("ground-truth profiles must be non-negative")
            sums = P.sum(axis=1)
            bad = np.flatnonzero(np.abs(sums - 1.0) > 1e-9)
            if len(bad):
                raise ValidationError(f"profile row {int(bad[0])} sums to {sums[bad[0]]!r}, not 1")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "kind", kind)

    @property
    def shape(self) -> tuple[int, int]:
        return self.P.shape


@dataclass(frozen=True, eq=False)
class LsdaResult:
    profile: ProfileMatrix
    cond: float
    rank: int
    singular: bool

    @property
    def P(self) -> np.ndarray:
        return self.profile.P


class _Factorization:
    """QR of U plus rank and conditioning of the normal matrix."""

    def __init__(self, U: np.ndarray):
        U = np.asarray(U, dtype=np.float64)
        self.n = U.shape[1]
        self.Q, self.R = np.linalg.qr(U, mode="reduced")
        sv = np.linalg.svd(self.R, compute_uv=False)
        smax = sv[0] if len(sv) else 0.0
        self.rcond = max(U.shape) * np.finfo(np.float64).eps
        self.rank = int(np.sum(sv > smax * self.rcond))
        self.singular = self.rank < self.n
        # singular values of U squared give the condition number of U^T U
        self.cond = float("inf") if self.singular else float((smax / sv[-1]) ** 2)
        self.U = U

    def solve(self, Y: np.ndarray) -> np.ndarray:
        Y = np.asarray(Y, dtype=np.float64)
        if self.singular:
            # minimum-norm least-squares solution
            sol, *_ = np.linalg.lstsq(self.U, Y, rcond=self.rcond)
            return sol
        return scipy.linalg.solve_triangular(self.R, self.Q.T @ Y, lower=False)


def lsda(obs: ObservationWindow) -> LsdaResult:
    """Estimate every sending profile at once from the observed counts.

    Never raises on degenerate windows: a rank-deficient ``U`` yields the
    minimum-norm solution with ``singular=True`` and ``cond=inf``.
    """
    fac = _Factorization(obs.U)
    est = fac.solve(obs.Y)
    return LsdaResult(ProfileMatrix(est, ProfileKind.ESTIMATE), fac.cond, fac.rank, fac.singular)


def lsda_column(obs: ObservationWindow, j: int) -> np.ndarray:
    """Column ``j`` of the estimate: ``p_hat_j = (U^T U)^{-1} U^T y_j``."""
    if not 0 <= j < obs.n_receivers:
        raise IndexError(f"receiver index {j} outside [0, {obs.n_receivers})")
    return _Factorization(obs.U).solve(obs.Y[:, j])


def lsda_columns(obs: ObservationWindow) -> np.ndarray:
    """Assemble the estimate one receiver at a time, reusing one factorization."""
    fac = _Factorization(obs.U)
    return np.column_stack([fac.solve(obs.Y[:, j]) for j in range(obs.n_receivers)])


def empirical_mse(truth: ProfileMatrix | np.ndarray, estimate: ProfileMatrix | np.ndarray) -> np.ndarray:
    """Per-sender squared error summed over all receivers."""
    t = truth.P if isinstance(truth, ProfileMatrix) else np.asarray(truth, dtype=np.float64)
    e = estimate.P if isinstance(estimate, ProfileMatrix) else np.asarray(estimate, dtype=np.float64)
    if t.shape != e.shape:
        raise ValidationError(f"profile shapes differ: {t.shape} vs {e.shape}")
    return ((t - e) ** 2).sum(axis=1)


def write_profile(profile: ProfileMatrix | np.ndarray, path) -> None:
    P = profile.P if isinstance(profile, ProfileMatrix) else np.asarray(profile)
    np.savetxt(path, np.atleast_2d(P), fmt="%.17g", delimiter=",", newline="\n")


def read_profile(path, kind=ProfileKind.GROUND_TRUTH) -> ProfileMatrix:
    P = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    return ProfileMatrix(P, kind)
