"""Hot loops, each in a numba flavour and a pure-numpy flavour.

The public dispatchers at the bottom pick one according to
:data:`mixscope._accel.USE_NUMBA`. Both flavours return identical integers for
the generators and agree to rounding for the covariance kernel.
"""
import numpy as np

from . import _accel
from ._accel import njit
from .rng import STREAM_INPUT, STREAM_OUTPUT, stream_key, uniform_scalar, uniforms


def inversion_table(probs):
    """Row-wise cumulative sums with the last positive entry pushed above 1.

    Inverting ``u`` in ``[0, 1)`` as "first column whose cumulative value
    exceeds ``u``" then never lands on a zero-probability column, whatever the
    rounding of the cumulative sum.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    cum = np.cumsum(probs, axis=1)
    for row in range(probs.shape[0]):
        pos = np.flatnonzero(probs[row] > 0)
        cum[row, pos[-1]:] = 2.0
    return cum


# ---------------------------------------------------------------- numba path


@njit(cache=True)
def _poisson_inputs_nb(base, lam, exp_neg_lam, rho):
    n = lam.shape[0]
    out = np.zeros((rho, n), dtype=np.int64)
    for r in range(rho):
        for k in range(n):
            u = uniform_scalar(base, k, r, 0)
            x = 0
            p = exp_neg_lam[k]
            f = p
            while u > f and p > 0.0:
                x += 1
                p = p * lam[k] / x
                f += p
            out[r, k] = x
    return out


@njit(cache=True)
def _threshold_inputs_nb(base, cum_q, t, rho):
    n = cum_q.shape[0]
    out = np.zeros((rho, n), dtype=np.int64)
    for r in range(rho):
        for idx in range(t):
            u = uniform_scalar(base, 0, r, idx)
            k = 0
            while cum_q[k] <= u:
                k += 1
            out[r, k] += 1
    return out


@njit(cache=True)
def _outputs_nb(base, counts, cum_p, max_variance):
    rho, n = counts.shape
    total = 0
    for r in range(rho):
        for k in range(n):
            total += counts[r, k]
    rounds = np.empty(total, dtype=np.int64)
    senders = np.empty(total, dtype=np.int64)
    receivers = np.empty(total, dtype=np.int64)
    pos = 0
    for r in range(rho):
        for k in range(n):
            c = counts[r, k]
            if c == 0:
                continue
            row = cum_p[k]
            if max_variance:
                u = uniform_scalar(base, k, r, 0)
                j = 0
                while row[j] <= u:
                    j += 1
                for idx in range(c):
                    rounds[pos] = r
                    senders[pos] = k
                    receivers[pos] = j
                    pos += 1
            else:
                for idx in range(c):
                    u = uniform_scalar(base, k, r, idx)
                    j = 0
                    while row[j] <= u:
                        j += 1
                    rounds[pos] = r
                    senders[pos] = k
                    receivers[pos] = j
                    pos += 1
    return rounds, senders, receivers


@njit(cache=True)
def _tuple_cov_nb(x, tuples):
    rho = x.shape[0]
    n_t = tuples.shape[0]
    out = np.empty(n_t, dtype=np.float64)
    for t in range(n_t):
        a, b, c, d = tuples[t, 0], tuples[t, 1], tuples[t, 2], tuples[t, 3]
        sf = 0.0
        sg = 0.0
        sfg = 0.0
        for r in range(rho):
            f = x[r, a]
            if b >= 0:
                f *= x[r, b]
            g = x[r, c]
            if d >= 0:
                g *= x[r, d]
            sf += f
            sg += g
            sfg += f * g
        out[t] = abs(sfg / rho - (sf / rho) * (sg / rho))
    return out


# ---------------------------------------------------------------- numpy path


def _poisson_inputs_np(base_seed, lam, exp_neg_lam, rho):
    n = lam.shape[0]
    u = uniforms(base_seed, STREAM_INPUT, np.arange(n)[None, :], np.arange(rho)[:, None], 0)
    x = np.zeros((rho, n), dtype=np.int64)
    p = np.broadcast_to(exp_neg_lam, (rho, n)).copy()
    f = p.copy()
    lam_b = np.broadcast_to(lam, (rho, n))
    active = (u > f) & (p > 0.0)
    while active.any():
        x[active] += 1
        p[active] = p[active] * lam_b[active] / x[active]
        f[active] += p[active]
        active &= (u > f) & (p > 0.0)
    return x


def _threshold_inputs_np(base_seed, cum_q, t, rho):
    n = cum_q.shape[0]
    u = uniforms(base_seed, STREAM_INPUT, 0, np.arange(rho)[:, None], np.arange(t)[None, :])
    senders = np.searchsorted(cum_q, u, side="right")
    out = np.zeros((rho, n), dtype=np.int64)
    np.add.at(out, (np.repeat(np.arange(rho), t), senders.ravel()), 1)
    return out


def _outputs_np(base_seed, counts, cum_p, max_variance):
    rr, kk = np.nonzero(counts)
    c = counts[rr, kk]
    rounds = np.repeat(rr, c)
    senders = np.repeat(kk, c)
    if max_variance:
        u = np.repeat(uniforms(base_seed, STREAM_OUTPUT, kk, rr, 0), c)
    else:
        starts = np.repeat(np.cumsum(c) - c, c)
        idx = np.arange(c.sum()) - starts
        u = uniforms(base_seed, STREAM_OUTPUT, senders, rounds, idx)
    receivers = np.empty(len(u), dtype=np.int64)
    for k in np.unique(senders):
        sel = senders == k
        receivers[sel] = np.searchsorted(cum_p[k], u[sel], side="right")
    return rounds.astype(np.int64), senders.astype(np.int64), receivers


def _tuple_cov_np(x, tuples, chunk=4096):
    rho = x.shape[0]
    out = np.empty(len(tuples), dtype=np.float64)
    ones = np.ones((rho, 1))
    xe = np.hstack([x, ones])  # column -1 is the constant 1
    for s in range(0, len(tuples), chunk):
        t = tuples[s:s + chunk]
        f = xe[:, t[:, 0]] * xe[:, t[:, 1]]
        g = xe[:, t[:, 2]] * xe[:, t[:, 3]]
        out[s:s + chunk] = np.abs((f * g).sum(axis=0) / rho - (f.sum(axis=0) / rho) * (g.sum(axis=0) / rho))
    return out


# ---------------------------------------------------------------- dispatch


def poisson_inputs(seed, lam, rho, use_numba=None):
    lam = np.asarray(lam, dtype=np.float64)
    exp_neg_lam = np.array([np.exp(-v) for v in lam.tolist()])
    if _pick(use_numba):
        return _poisson_inputs_nb(stream_key(seed, STREAM_INPUT), lam, exp_neg_lam, int(rho))
    return _poisson_inputs_np(seed, lam, exp_neg_lam, int(rho))


def threshold_inputs(seed, q, t, rho, use_numba=None):
    cum_q = inversion_table(q)[0]
    if _pick(use_numba):
        return _threshold_inputs_nb(stream_key(seed, STREAM_INPUT), cum_q, int(t), int(rho))
    return _threshold_inputs_np(seed, cum_q, int(t), int(rho))


def route_messages(seed, counts, P, max_variance, use_numba=None):
    """Pick a receiver for every message; returns (round, sender, receiver) arrays."""
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    cum_p = inversion_table(P)
    if _pick(use_numba):
        return _outputs_nb(stream_key(seed, STREAM_OUTPUT), counts, cum_p, bool(max_variance))
    return _outputs_np(seed, counts, cum_p, bool(max_variance))


def tuple_covariances(x, tuples, use_numba=None):
    """``|Cov(X_a X_b, X_c X_d)|`` for each row ``(a, b, c, d)``; -1 drops a factor."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    tuples = np.ascontiguousarray(tuples, dtype=np.int64)
    if _pick(use_numba):
        return _tuple_cov_nb(x, tuples)
    return _tuple_cov_np(x, tuples)


def _pick(use_numba):
    if use_numba is None:
        return _accel.USE_NUMBA
    return bool(use_numba) and _accel.HAVE_NUMBA
