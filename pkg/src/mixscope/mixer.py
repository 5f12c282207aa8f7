"""Threshold and timed mixes: turn a trace into per-round count matrices."""
from __future__ import annotations

import enum
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyObservationError, ValidationError
from .trace import Trace


class MixKind(str, enum.Enum):
    THRESHOLD = "threshold"
    TIMED = "timed"


@dataclass(frozen=True)
class MixConfig:
    kind: MixKind
    t: Optional[int] = None
    tau: Optional[float] = None

    def __post_init__(self):
        kind = MixKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is MixKind.THRESHOLD:
            if self.tau is not None or self.t is None:
                raise ValidationError("threshold mix takes t only")
            if int(self.t) != self.t or self.t < 1:
                raise ValidationError(f"threshold t must be a positive integer, got {self.t!r}")
            object.__setattr__(self, "t", int(self.t))
        else:
            if self.t is not None or self.tau is None:
                raise ValidationError("timed mix takes tau only")
            if not np.isfinite(self.tau) or self.tau <= 0:
                raise ValidationError(f"timed tau must be positive, got {self.tau!r}")
            object.__setattr__(self, "tau", float(self.tau))

    @classmethod
    def threshold(cls, t: int) -> "MixConfig":
        return cls(MixKind.THRESHOLD, t=t)

    @classmethod
    def timed(cls, tau: float) -> "MixConfig":
        return cls(MixKind.TIMED, tau=tau)


@dataclass(frozen=True, eq=False)
class ObservationWindow:
    """The adversary's view: ``U`` (rho x N) sent counts and ``Y`` (rho x M) received counts.

    ``event_round`` is optional bookkeeping from :func:`anonymize`: for each
    trace event, the round it was flushed in, or -1 if it was discarded.
    """

    U: np.ndarray
    Y: np.ndarray
    event_round: Optional[np.ndarray] = None

    def __post_init__(self):
        U = np.asarray(self.U)
        Y = np.asarray(self.Y)
        if U.ndim != 2 or Y.ndim != 2 or U.shape[0] != Y.shape[0]:
            raise ValidationError(f"U and Y must be 2-D with the same row count, got {U.shape} and {Y.shape}")
        if U.shape[0] < 1:
            raise EmptyObservationError("observation window has no rounds")
        if (U < 0).any() or (Y < 0).any():
            raise ValidationError("message counts must be non-negative")
        su, sy = U.sum(axis=1), Y.sum(axis=1)
        if np.any(su == 0):
            raise ValidationError(f"round {int(np.flatnonzero(su == 0)[0])} carries no messages")
        if not np.allclose(su, sy, rtol=1e-9, atol=0):
            bad = int(np.flatnonzero(~np.isclose(su, sy, rtol=1e-9, atol=0))[0])
            raise ValidationError(f"round {bad}: {su[bad]} messages in but {sy[bad]} out")
        U.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "Y", Y)

    @property
    def rho(self) -> int:
        return self.U.shape[0]

    @property
    def n_senders(self) -> int:
        return self.U.shape[1]

    @property
    def n_receivers(self) -> int:
        return self.Y.shape[1]

    def prefix(self, rho: int) -> "ObservationWindow":
        """The first ``rho`` rounds (what an attacker has seen after ``rho`` rounds)."""
        if not 1 <= rho <= self.rho:
            raise ValidationError(f"prefix length {rho} outside [1, {self.rho}]")
        return ObservationWindow(self.U[:rho], self.Y[:rho])


def anonymize(trace: Trace, config: MixConfig) -> ObservationWindow:
    n_ev = len(trace)
    if config.kind is MixKind.THRESHOLD:
        rho = n_ev // config.t
        if rho == 0:
            raise EmptyObservationError(f"threshold t={config.t} exceeds the {n_ev} events in the trace")
        event_round = np.full(n_ev, -1, dtype=np.int64)
        event_round[: rho * config.t] = np.arange(rho * config.t) // config.t
    else:
        slot = np.floor((trace.timestamps - trace.timestamps[0]) / config.tau).astype(np.int64)
        # slots are non-decreasing, so consecutive distinct values give round ids with empty slots skipped
        event_round = np.concatenate([[0], np.cumsum(np.diff(slot) > 0)]).astype(np.int64)
        rho = int(event_round[-1]) + 1
    return _tally(trace, event_round, rho)


def _tally(trace: Trace, event_round: np.ndarray, rho: int) -> ObservationWindow:
    kept = event_round >= 0
    U = np.zeros((rho, trace.n_senders), dtype=np.int64)
    Y = np.zeros((rho, trace.n_receivers), dtype=np.int64)
    np.add.at(U, (event_round[kept], trace.senders[kept]), 1)
    np.add.at(Y, (event_round[kept], trace.receivers[kept]), 1)
    event_round.setflags(write=False)
    return ObservationWindow(U, Y, event_round)


def round_stats(obs: ObservationWindow) -> dict:
    sizes = obs.U.sum(axis=1)
    return {
        "rho": obs.rho,
        "n_senders": obs.n_senders,
        "n_receivers": obs.n_receivers,
        "messages": _num(sizes.sum()),
        "mean_per_round": float(sizes.mean()),
        "min_per_round": _num(sizes.min()),
        "max_per_round": _num(sizes.max()),
    }


def _num(x):
    x = x.item()
    return int(x) if float(x).is_integer() else float(x)


def write_observation(obs: ObservationWindow, directory) -> tuple[str, str]:
    """Write ``U.csv`` and ``Y.csv`` (no header, one round per line)."""
    os.makedirs(directory, exist_ok=True)
    paths = os.path.join(directory, "U.csv"), os.path.join(directory, "Y.csv")
    for mat, path in zip((obs.U, obs.Y), paths):
        _write_matrix(mat, path)
    return paths


def _write_matrix(mat: np.ndarray, path) -> None:
    if np.issubdtype(mat.dtype, np.integer):
        fmt = "%d"
    else:
        fmt = "%.17g"
    np.savetxt(path, np.atleast_2d(mat), fmt=fmt, delimiter=",", newline="\n")


def read_observation(u_path, y_path) -> ObservationWindow:
    return ObservationWindow(_read_counts(u_path), _read_counts(y_path))


def _read_counts(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        rows = [line.strip() for line in fh if line.strip()]
    if not rows:
        raise EmptyObservationError(f"{path}: no rounds")
    mat = []
    width = None
    for lineno, line in enumerate(rows, start=1):
        cols = line.split(",")
        if width is None:
            width = len(cols)
        elif len(cols) != width:
            raise ValidationError(f"{path}: line {lineno} has {len(cols)} columns, expected {width}")
        try:
            mat.append([float(c) for c in cols])
        except ValueError:
            raise ValidationError(f"{path}: line {lineno} has a non-numeric count") from None
    arr = np.asarray(mat, dtype=np.float64)
    if np.all(arr == np.round(arr)):
        return arr.astype(np.int64)
    return arr
