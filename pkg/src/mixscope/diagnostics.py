"""Checks on the input and output processes of an observation window.

* :func:`covariance_report` averages absolute sample covariances between
  products of per-round counts, to test whether senders participate
  independently of each other.
* :func:`input_histogram` / :func:`theoretical_input_pmf` compare the
  distribution of per-round counts with Poisson or multinomial models.
* :func:`recipient_spread` measures how many distinct receivers a sender
  reaches in a round, which separates multinomial-like from
  max-variance-like behaviour.
* :func:`select_evaluation_users` picks the senders whose error is tracked.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats as sps

from . import _kernels
from .errors import ValidationError
from .mixer import ObservationWindow
from .trace import Trace

HIST_BINS = 50  # values 0..49 plus one overflow bin for >= 50
SPREAD_BINS = ("2", "3", "4", "5", ">=6")
DEFAULT_BUDGET = 100_000
DEFAULT_RATIO_THRESHOLD = 0.1

# name -> (arity, tuple template over the index tuple (k, m, n); -1 drops a factor)
COVARIANCE_STATS = {
    "cov_k_k": (1, ("k", None, "k", None)),
    "cov_k_m": (2, ("k", None, "m", None)),
    "cov_k2_k": (1, ("k", "k", "k", None)),
    "cov_km_k": (2, ("k", "m", "k", None)),
    "cov_k2_m": (2, ("k", "k", "m", None)),
    "cov_km_n": (3, ("k", "m", "n", None)),
    "cov_k2_k2": (1, ("k", "k", "k", "k")),
    "cov_k2_km": (2, ("k", "k", "k", "m")),
    "cov_k2_m2": (2, ("k", "k", "m", "m")),
    "cov_k2_mn": (3, ("k", "k", "m", "n")),
}

# condition -> (self term, cross terms)
CONDITIONS = {
    "pairwise": ("cov_k_k", ("cov_k_m",)),
    "third_order": ("cov_k2_k", ("cov_km_k", "cov_k2_m", "cov_km_n")),
    "fourth_order": ("cov_k2_k2", ("cov_k2_km", "cov_k2_m2", "cov_k2_mn")),
}


@dataclass
class CovarianceReport:
    values: dict  # statistic name -> average |cov| (NaN when skipped)
    ratios: dict  # cross statistic name -> cross / self
    flags: dict  # condition name -> True when some cross/self ratio exceeds the threshold
    tuples_used: dict  # statistic name -> number of index tuples averaged
    exhaustive: dict
    budget: int
    threshold: float
    max_pair_correlation: float
    skipped: list = field(default_factory=list)

    @property
    def condition_ratios(self) -> dict:
        """Largest cross/self ratio per condition."""
        out = {}
        for cond, (_, cross) in CONDITIONS.items():
            vals = [self.ratios[c] for c in cross if not math.isnan(self.ratios[c])]
            out[cond] = max(vals) if vals else float("nan")
        return out

    def to_csv(self) -> str:
        lines = ["statistic,value,ratio_to_self,tuples,exhaustive"]
        for name in COVARIANCE_STATS:
            ratio = self.ratios.get(name, "")
            lines.append(f"{name},{_fmt(self.values[name])},{_fmt(ratio)},{self.tuples_used[name]},{int(self.exhaustive[name])}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "values": self.values,
            "ratios": self.ratios,
            "condition_ratios": self.condition_ratios,
            "flags": self.flags,
            "tuples_used": self.tuples_used,
            "budget": self.budget,
            "threshold": self.threshold,
            "max_pair_correlation": self.max_pair_correlation,
            "skipped": self.skipped,
        }


def _fmt(x) -> str:
    if x == "" or x is None:
        return ""
    return repr(float(x))


def _index_tuples(n: int, arity: int, budget: int, rng: np.random.Generator) -> tuple[np.ndarray, bool]:
    """All ordered tuples of distinct indices if there are at most ``budget``, else a uniform sample."""
    space = math.perm(n, arity)
    if space <= budget:
        return np.array(list(itertools.permutations(range(n), arity)), dtype=np.int64).reshape(-1, arity), True
    k = rng.integers(0, n, size=budget)
    cols = [k]
    if arity >= 2:
        m = rng.integers(0, n - 1, size=budget)
        m = m + (m >= k)
        cols.append(m)
    if arity == 3:
        n_ = rng.integers(0, n - 2, size=budget)
        lo, hi = np.minimum(k, m), np.maximum(k, m)
        n_ = n_ + (n_ >= lo)
        n_ = n_ + (n_ >= hi)
        cols.append(n_)
    return np.column_stack(cols), False


def covariance_report(
    obs: ObservationWindow | np.ndarray,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    threshold: float = DEFAULT_RATIO_THRESHOLD,
    use_numba=None,
) -> CovarianceReport:
    U = obs.U if isinstance(obs, ObservationWindow) else np.asarray(obs)
    X = np.asarray(U, dtype=np.float64)
    rho, n = X.shape
    if rho < 2:
        raise ValidationError("covariance diagnostics need at least 2 rounds")
    if budget < 1:
        raise ValidationError("tuple budget must be positive")
    rng = np.random.default_rng(seed)
    values, used, exhaustive, skipped = {}, {}, {}, []
    tuple_cache = {}
    for name, (arity, template) in COVARIANCE_STATS.items():
        if arity > n:
            values[name], used[name], exhaustive[name] = float("nan"), 0, False
            skipped.append(name)
            continue
        if arity not in tuple_cache:
            tuple_cache[arity] = _index_tuples(n, arity, budget, rng)
        idx, full = tuple_cache[arity]
        slot = {"k": 0, "m": 1, "n": 2}
        quad = np.column_stack(
            [idx[:, slot[s]] if s is not None else np.full(len(idx), -1, dtype=np.int64) for s in template]
        )
        values[name] = float(_kernels.tuple_covariances(X, quad, use_numba).mean())
        used[name], exhaustive[name] = len(idx), full

    ratios, flags = {}, {}
    for cond, (self_name, cross) in CONDITIONS.items():
        flags[cond] = False
        for c in cross:
            ratios[c] = _ratio(values[c], values[self_name])
            if ratios[c] > threshold:
                flags[cond] = True

    return CovarianceReport(values, ratios, flags, used, exhaustive, budget, threshold, _max_pair_corr(X), skipped)


def _ratio(cross: float, self_term: float) -> float:
    if math.isnan(cross) or math.isnan(self_term):
        return float("nan")
    if self_term == 0:
        return 0.0 if cross == 0 else float("inf")
    return cross / self_term


def _max_pair_corr(X: np.ndarray) -> float:
    n = X.shape[1]
    if n < 2:
        return float("nan")
    sd = X.std(axis=0)
    live = sd > 0
    if live.sum() < 2:
        return 0.0
    C = np.corrcoef(X[:, live], rowvar=False)
    np.fill_diagonal(C, 0.0)
    return float(np.abs(C).max())


# ---------------------------------------------------------------- histograms


@dataclass
class InputHistogram:
    counts: np.ndarray  # length HIST_BINS + 1, last entry is the overflow bin

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.total

    def to_csv(self, pmf: Optional[np.ndarray] = None) -> str:
        lines = ["value,count,pmf_model"]
        for v, c in enumerate(self.counts.tolist()):
            label = f">={HIST_BINS}" if v == HIST_BINS else str(v)
            p = "" if pmf is None else repr(float(pmf[v]))
            lines.append(f"{label},{c},{p}")
        return "\n".join(lines) + "\n"


def input_histogram(obs: ObservationWindow | np.ndarray) -> InputHistogram:
    """Tally every ``X_i^r`` over senders and rounds into bins 0..49 and ``>= 50``."""
    U = obs.U if isinstance(obs, ObservationWindow) else np.asarray(obs)
    vals = np.asarray(U).astype(np.int64).ravel()
    return InputHistogram(np.bincount(np.minimum(vals, HIST_BINS), minlength=HIST_BINS + 1))


def theoretical_input_pmf(model: str, **params) -> np.ndarray:
    """Model pmf of a per-round count over bins 0..49 and the ``>= 50`` overflow.

    ``model="poisson"`` takes ``rates`` (scalar or one per sender);
    ``model="threshold"`` takes ``t`` and ``q`` (scalar or one per sender),
    giving the binomial marginal of the multinomial split. With several
    senders the pmf is the average of their marginals, matching a histogram
    pooled over senders.
    """
    k = np.arange(HIST_BINS)
    if model == "poisson":
        rates = np.atleast_1d(np.asarray(params["rates"], dtype=np.float64))
        body = sps.poisson.pmf(k[None, :], rates[:, None])
        tail = sps.poisson.sf(HIST_BINS - 1, rates)
    elif model == "threshold":
        t = int(params["t"])
        q = np.atleast_1d(np.asarray(params["q"], dtype=np.float64))
        body = sps.binom.pmf(k[None, :], t, q[:, None])
        tail = sps.binom.sf(HIST_BINS - 1, t, q)
    else:
        raise ValidationError(f"unknown input model {model!r}")
    return np.concatenate([body, tail[:, None]], axis=1).mean(axis=0)


# ---------------------------------------------------------------- recipients


@dataclass
class RecipientSpread:
    bins: dict  # bin label -> average distinct receivers per (sender, round); NaN if empty
    samples: dict  # bin label -> number of (sender, round) pairs
    avg_contacts: float

    def to_csv(self) -> str:
        lines = ["messages," + ",".join(SPREAD_BINS) + ",avg_contacts"]
        lines.append("avg_recipients," + ",".join(repr(float(self.bins[b])) for b in SPREAD_BINS) + f",{self.avg_contacts!r}")
        lines.append("samples," + ",".join(str(self.samples[b]) for b in SPREAD_BINS) + ",")
        return "\n".join(lines) + "\n"


def recipient_spread(trace: Trace, rounds: ObservationWindow | np.ndarray) -> RecipientSpread:
    """Average number of distinct receivers per (sender, round), by messages sent.

    ``rounds`` is the per-event round assignment (or an observation window
    from :func:`mixscope.mixer.anonymize`, which carries it). Events with a
    negative round were discarded by the mix and are ignored.
    """
    ev_round = rounds.event_round if isinstance(rounds, ObservationWindow) else np.asarray(rounds)
    if ev_round is None or len(ev_round) != len(trace):
        raise ValidationError("round assignment must have one entry per trace event")
    kept = ev_round >= 0
    r = ev_round[kept].astype(np.int64)
    s = trace.senders[kept]
    j = trace.receivers[kept]
    n, m = trace.n_senders, trace.n_receivers

    pair = r * n + s
    triple = pair * m + j
    upair, msgs = np.unique(pair, return_counts=True)
    distinct_pairs = np.unique(triple) // m
    _, distinct = np.unique(distinct_pairs, return_counts=True)

    bins, samples = {}, {}
    for label in SPREAD_BINS:
        sel = msgs >= 6 if label == ">=6" else msgs == int(label)
        samples[label] = int(sel.sum())
        bins[label] = float(distinct[sel].mean()) if sel.any() else float("nan")

    contacts = np.unique(s * m + j) // m
    _, per_sender = np.unique(contacts, return_counts=True)
    return RecipientSpread(bins, samples, float(per_sender.mean()))


# ---------------------------------------------------------------- user selection


@dataclass
class UserSelection:
    users: np.ndarray
    fallback: bool  # the three filters had an empty intersection
    active: np.ndarray
    long_lived: np.ndarray
    early: np.ndarray


def select_evaluation_users(
    trace: Optional[Trace],
    obs: ObservationWindow,
    rho_max: Optional[int] = None,
    top_fraction: float = 0.4,
    early_fraction: float = 0.3,
) -> UserSelection:
    """Senders that are busy, long-lived and present early in the window.

    Activity is the sender's message count in ``trace`` (or in ``U`` when no
    trace is given); longevity is the span between its first and last active
    round; "early" means its first active round index is below
    ``early_fraction * rho_max``. Each of the first two filters keeps the top
    ``ceil(top_fraction * N)`` senders, ties going to the lower index.
    """
    U = np.asarray(obs.U)
    rho_max = obs.rho if rho_max is None else int(rho_max)
    n = U.shape[1]
    if trace is not None and trace.n_senders != n:
        raise ValidationError("trace and observation window disagree on the number of senders")
    activity = trace.sender_counts() if trace is not None else U.sum(axis=0)
    present = U > 0
    any_active = present.any(axis=0)
    first = np.where(any_active, present.argmax(axis=0), rho_max)
    last = np.where(any_active, U.shape[0] - 1 - present[::-1].argmax(axis=0), -1)
    span = np.where(any_active, last - first, -1)

    k = max(1, math.ceil(top_fraction * n))
    active = np.argsort(-activity, kind="stable")[:k]
    long_lived = np.argsort(-span, kind="stable")[:k]
    early = np.flatnonzero(any_active & (first < early_fraction * rho_max))

    users = np.intersect1d(np.intersect1d(active, long_lived), early)
    fallback = len(users) == 0
    if fallback:
        users = early
    return UserSelection(users.astype(np.int64), fallback, np.sort(active), np.sort(long_lived), early)
