"""Synthetic populations with known profiles.

Inputs are either independent Poisson counts per sender (timed-mix regime) or
a multinomial split of ``t`` messages per round (threshold-mix regime).
Outputs follow the multinomial model (every message picks its own receiver)
or the maximum-variance model (each sender sends its whole batch to a single
receiver drawn from its profile).

All randomness comes from the counter-based stream in :mod:`mixscope.rng`:
the input draw of sender ``k`` in round ``r`` and the receiver draw of its
``idx``-th message are pure functions of ``(seed, k, r, idx)``.
"""
from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .attack import ProfileMatrix, read_profile
from .errors import ValidationError
from .mixer import ObservationWindow
from .statistics import InputMoments
from .theory import OutputModel
from .trace import Trace

MAX_POISSON_RATE = 700.0  # exp(-rate) underflows past ~745


class InputKind(str, enum.Enum):
    POISSON = "poisson"
    THRESHOLD = "threshold"


@dataclass(frozen=True, eq=False)
class PopulationSpec:
    P: ProfileMatrix
    input_kind: InputKind
    output_model: OutputModel
    seed: int
    rates: Optional[np.ndarray] = None
    t: Optional[int] = None
    q: Optional[np.ndarray] = None
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        P = self.P if isinstance(self.P, ProfileMatrix) else ProfileMatrix(self.P)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "input_kind", InputKind(self.input_kind))
        object.__setattr__(self, "output_model", OutputModel(self.output_model))
        object.__setattr__(self, "seed", int(self.seed))
        n = P.shape[0]
        if self.input_kind is InputKind.POISSON:
            if self.rates is None:
                raise ValidationError("poisson input needs per-sender rates")
            rates = np.broadcast_to(np.asarray(self.rates, dtype=np.float64), (n,)).copy()
            if np.any(~(rates > 0)) or np.any(rates > MAX_POISSON_RATE):
                raise ValidationError(f"poisson rates must lie in (0, {MAX_POISSON_RATE}]")
            object.__setattr__(self, "rates", rates)
        else:
            if self.t is None or int(self.t) != self.t or self.t < 1:
                raise ValidationError("threshold input needs an integer t >= 1")
            q = np.full(n, 1.0 / n) if self.q is None else np.asarray(self.q, dtype=np.float64)
            if q.shape != (n,) or (q < 0).any() or abs(q.sum() - 1.0) > 1e-9:
                raise ValidationError("sender probabilities q must be a length-N probability vector")
            object.__setattr__(self, "q", q)
            object.__setattr__(self, "t", int(self.t))

    @property
    def n_senders(self) -> int:
        return self.P.shape[0]

    @property
    def n_receivers(self) -> int:
        return self.P.shape[1]

    def with_seed(self, seed: int) -> "PopulationSpec":
        return PopulationSpec(self.P, self.input_kind, self.output_model, seed, self.rates, self.t, self.q, self.source)

    def with_output_model(self, model) -> "PopulationSpec":
        return PopulationSpec(self.P, self.input_kind, model, self.seed, self.rates, self.t, self.q, self.source)


@dataclass(frozen=True, eq=False)
class Messages:
    """Per-message detail of a synthetic run, ordered by (round, sender, message index)."""

    rounds: np.ndarray
    senders: np.ndarray
    receivers: np.ndarray
    counts: np.ndarray  # rho x N inputs, including any all-zero rounds

    def observation(self, n_receivers: int) -> ObservationWindow:
        """Tally into an observation window; rounds without any message are dropped."""
        rho = self.counts.shape[0]
        Y = np.zeros((rho, n_receivers), dtype=np.int64)
        np.add.at(Y, (self.rounds, self.receivers), 1)
        keep = self.counts.sum(axis=1) > 0
        return ObservationWindow(self.counts[keep], Y[keep])

    def trace(self, n_receivers: int, round_seconds: float = 1.0) -> Trace:
        """Events stamped at ``round * round_seconds``; names are ``s<i>`` and ``r<j>``.

        Feeding this trace to a timed mix with ``tau = round_seconds`` recovers the
        same rounds (empty rounds excepted). Senders or receivers that never
        appear are still listed so indices match the profile matrix.
        """
        n = self.counts.shape[1]
        return Trace(
            self.rounds.astype(np.float64) * round_seconds,
            self.senders,
            self.receivers,
            tuple(f"s{i}" for i in range(n)),
            tuple(f"r{j}" for j in range(n_receivers)),
        )


def generate_messages(spec: PopulationSpec, rho: int, use_numba=None) -> Messages:
    if rho < 1:
        raise ValidationError(f"rho must be >= 1, got {rho}")
    if spec.input_kind is InputKind.POISSON:
        counts = _kernels.poisson_inputs(spec.seed, spec.rates, rho, use_numba)
    else:
        counts = _kernels.threshold_inputs(spec.seed, spec.q, spec.t, rho, use_numba)
    rounds, senders, receivers = _kernels.route_messages(
        spec.seed, counts, spec.P.P, spec.output_model is OutputModel.MAX_VARIANCE, use_numba
    )
    return Messages(rounds, senders, receivers, counts)


def generate_rounds(spec: PopulationSpec, rho: int, use_numba=None) -> ObservationWindow:
    """Draw ``rho`` rounds. All-zero rounds (possible with Poisson inputs) are omitted."""
    return generate_messages(spec, rho, use_numba).observation(spec.n_receivers)


def exact_moments(spec: PopulationSpec) -> InputMoments:
    if spec.input_kind is InputKind.POISSON:
        lam = spec.rates
        return InputMoments(lam.copy(), lam.copy(), lam.copy(), 3 * lam ** 2 + lam)
    t, q = spec.t, spec.q
    var = t * q * (1 - q)
    mu3 = var * (1 - 2 * q)
    mu4 = var * (1 + 3 * (t - 2) * q * (1 - q))
    return InputMoments(t * q, var, mu3, mu4)


def random_profiles(n: int, m: int, rng: np.random.Generator, contacts: Optional[int] = None) -> np.ndarray:
    """Dirichlet(1) rows, optionally restricted to ``contacts`` random receivers per sender."""
    P = np.zeros((n, m))
    k = m if contacts is None else min(contacts, m)
    for i in range(n):
        cols = rng.choice(m, size=k, replace=False)
        P[i, cols] = rng.dirichlet(np.ones(k))
    return P


# ---------------------------------------------------------------- JSON config


def spec_from_dict(cfg: dict, base_dir: str = ".") -> PopulationSpec:
    """Build a :class:`PopulationSpec` from its JSON form.

    Keys: ``profiles`` (nested list) or ``profiles_file`` (CSV path, relative
    to ``base_dir``); ``input`` = ``{"kind": "poisson", "rates": [...] | number}``
    or ``{"kind": "threshold", "t": int, "q": [...]}``; ``output_model``
    (``multinomial`` | ``max_variance``); ``seed``.
    """
    unknown = set(cfg) - {"profiles", "profiles_file", "input", "output_model", "seed", "rho", "round_seconds"}
    if unknown:
        raise ValidationError(f"unknown population keys: {sorted(unknown)}")
    if ("profiles" in cfg) == ("profiles_file" in cfg):
        raise ValidationError("give exactly one of 'profiles' or 'profiles_file'")
    if "profiles" in cfg:
        P = ProfileMatrix(np.asarray(cfg["profiles"], dtype=np.float64))
    else:
        P = read_profile(os.path.join(base_dir, cfg["profiles_file"]))
    inp = cfg.get("input")
    if not isinstance(inp, dict) or "kind" not in inp:
        raise ValidationError("'input' must be an object with a 'kind'")
    kind = InputKind(inp["kind"])
    if kind is InputKind.POISSON:
        extra = set(inp) - {"kind", "rates"}
        kw = {"rates": inp.get("rates")}
    else:
        extra = set(inp) - {"kind", "t", "q"}
        kw = {"t": inp.get("t"), "q": inp.get("q")}
    if extra:
        raise ValidationError(f"unknown input keys: {sorted(extra)}")
    if "seed" not in cfg:
        raise ValidationError("population config needs a 'seed'")
    return PopulationSpec(P, kind, OutputModel(cfg.get("output_model", "multinomial")), int(cfg["seed"]), source=dict(cfg), **kw)


def load_spec(path) -> PopulationSpec:
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    return spec_from_dict(cfg, os.path.dirname(os.path.abspath(path)))
