"""Attack an observation window at growing prefix lengths and compare with theory."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .attack import ProfileMatrix, empirical_mse, lsda
from .errors import ValidationError
from .mixer import ObservationWindow
from .statistics import input_moments, profile_stats
from .theory import TheoryInputs, mse_maxvariance, mse_multinomial

DEFAULT_FRACTIONS = tuple(round(0.1 * k, 1) for k in range(1, 11))
SCHEMA = "mixscope.mse_report/1"

MULTINOMIAL_LIKE = "multinomial-like"
MAXVARIANCE_LIKE = "maxvariance-like"
INCONCLUSIVE = "inconclusive"


@dataclass
class GridPoint:
    rho: int
    avg_mse: float
    avg_mse_theory_min: float
    avg_mse_theory_max: float
    cond: float
    singular: bool
    n_excluded: int
    mse: np.ndarray  # per selected user, in report.users order
    mse_theory_min: np.ndarray
    mse_theory_max: np.ndarray


@dataclass
class MseReport:
    users: np.ndarray
    rho_max: int
    points: list
    config: dict = field(default_factory=dict)

    @property
    def rho_grid(self) -> np.ndarray:
        return np.array([p.rho for p in self.points], dtype=np.int64)

    def curve(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points], dtype=np.float64)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "config": self.config,
            "rho_max": self.rho_max,
            "users": self.users.tolist(),
            "grid": [
                {
                    "rho": p.rho,
                    "avg_mse": _clean(p.avg_mse),
                    "avg_mse_theory_min": _clean(p.avg_mse_theory_min),
                    "avg_mse_theory_max": _clean(p.avg_mse_theory_max),
                    "cond": _clean(p.cond),
                    "singular": p.singular,
                    "n_excluded": p.n_excluded,
                    "per_user": {
                        "mse": [_clean(v) for v in p.mse.tolist()],
                        "mse_theory_min": [_clean(v) for v in p.mse_theory_min.tolist()],
                        "mse_theory_max": [_clean(v) for v in p.mse_theory_max.tolist()],
                    },
                }
                for p in self.points
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rho", "avg_mse", "avg_mse_theory_min", "avg_mse_theory_max", "cond"])
        for p in self.points:
            w.writerow([p.rho] + [repr(float(v)) for v in (p.avg_mse, p.avg_mse_theory_min, p.avg_mse_theory_max, p.cond)])
        return buf.getvalue()


def _clean(x):
    """JSON has no NaN/inf; write them as null."""
    x = float(x)
    return x if math.isfinite(x) else None


def rho_grid(rho_max: int, fractions: Sequence[float] = DEFAULT_FRACTIONS) -> list[int]:
    grid = sorted({int(round(f * rho_max)) for f in fractions})
    return [g for g in grid if 1 <= g <= rho_max]


def run_evaluation(
    obs: ObservationWindow,
    truth: ProfileMatrix,
    users: Sequence[int],
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    dominance: bool = True,
    config: Optional[dict] = None,
) -> MseReport:
    """Empirical and predicted MSE of ``users`` on each prefix ``rho`` of the grid.

    Predictions use moments of that same prefix. Users whose prefix variance is
    zero (no prediction possible) are left out of every average at that grid
    point and counted in ``n_excluded``.
    """
    users = np.asarray(users, dtype=np.int64)
    if users.size == 0:
        raise ValidationError("no users to evaluate")
    if truth.shape[0] != obs.n_senders or truth.shape[1] != obs.n_receivers:
        raise ValidationError(f"truth shape {truth.shape} does not match observation {obs.n_senders}x{obs.n_receivers}")
    stats = profile_stats(truth)
    points = []
    for rho in rho_grid(obs.rho, fractions):
        prefix = obs.prefix(rho)
        res = lsda(prefix)
        mse = empirical_mse(truth, res.profile)[users]
        if rho >= 2:
            ti = TheoryInputs(input_moments(prefix), stats, rho)
            tmin = mse_multinomial(ti, dominance)[users]
            tmax = mse_maxvariance(ti, dominance)[users]
        else:
            tmin = tmax = np.full(len(users), np.nan)
        ok = np.isfinite(tmin) & np.isfinite(tmax)
        points.append(
            GridPoint(
                rho=rho,
                avg_mse=_mean(mse[ok]),
                avg_mse_theory_min=_mean(tmin[ok]),
                avg_mse_theory_max=_mean(tmax[ok]),
                cond=res.cond,
                singular=res.singular,
                n_excluded=int((~ok).sum()),
                mse=mse,
                mse_theory_min=tmin,
                mse_theory_max=tmax,
            )
        )
    return MseReport(users, obs.rho, points, dict(config or {}))


def _mean(x: np.ndarray) -> float:
    return float(x.mean()) if x.size else float("nan")


def compare_models(report: MseReport, tie_tolerance: float = 0.1) -> str:
    """Which prediction tracks the empirical curve better over the last half of the grid.

    Distance is the mean absolute log-ratio between curves. The verdict is
    inconclusive when the two distances are within ``tie_tolerance`` of each
    other (relative to the larger one).
    """
    pts = report.points[len(report.points) // 2:]
    emp = np.array([p.avg_mse for p in pts])
    d = []
    for name in ("avg_mse_theory_min", "avg_mse_theory_max"):
        th = np.array([getattr(p, name) for p in pts])
        ok = (emp > 0) & (th > 0) & np.isfinite(emp) & np.isfinite(th)
        d.append(float(np.mean(np.abs(np.log(emp[ok] / th[ok])))) if ok.any() else float("nan"))
    d_min, d_max = d
    if math.isnan(d_min) or math.isnan(d_max):
        return INCONCLUSIVE
    hi = max(d_min, d_max)
    if hi == 0 or abs(d_min - d_max) < tie_tolerance * hi:
        return INCONCLUSIVE
    return MULTINOMIAL_LIKE if d_min < d_max else MAXVARIANCE_LIKE


def read_report(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("schema") != SCHEMA:
        raise ValidationError(f"{path}: not a {SCHEMA} report")
    return data
