"""Counter-based uniform stream.

Every random draw is a pure function of ``(seed, stream, sender, round, index)``,
so rounds and senders can be generated in any order (or in parallel) and still
match sequential generation bit for bit. The mixing function is the SplitMix64
finalizer applied once per key component; the top 53 bits become a double in
``[0, 1)``.
"""
import numpy as np

from ._accel import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_C_SENDER = np.uint64(0xD1B54A32D192ED03)
_C_ROUND = np.uint64(0xABC98388FB8FAC03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0

STREAM_INPUT = 0
STREAM_OUTPUT = 1


def _as_u64(x):
    return np.asarray(x).astype(np.uint64)


def mix64(z):
    """SplitMix64 finalizer on a uint64 array (wrapping arithmetic)."""
    z = _as_u64(z)
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def stream_key(seed, stream):
    """Per-(seed, stream) base key; ``seed`` is taken modulo 2**64."""
    s = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    st = np.array([int(stream) + 1], dtype=np.uint64)
    return mix64(s ^ (st * _GOLDEN))[0]


def uniforms(seed, stream, sender, rnd, index):
    """Vectorized uniforms for broadcastable integer arrays of counters."""
    base = stream_key(seed, stream)
    sender, rnd, index = np.broadcast_arrays(_as_u64(sender), _as_u64(rnd), _as_u64(index))
    with np.errstate(over="ignore"):
        h = mix64(base + (sender + _ONE) * _C_SENDER)
        h = mix64(h + (rnd + _ONE) * _C_ROUND)
        h = mix64(h + (index + _ONE) * _GOLDEN)
    return (h >> _S11).astype(np.float64) * _INV53


@njit(cache=True)
def _mix64_scalar(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def uniform_scalar(base, sender, rnd, index):
    """Scalar twin of :func:`uniforms` for use inside compiled kernels."""
    h = _mix64_scalar(base + (np.uint64(sender) + np.uint64(1)) * np.uint64(0xD1B54A32D192ED03))
    h = _mix64_scalar(h + (np.uint64(rnd) + np.uint64(1)) * np.uint64(0xABC98388FB8FAC03))
    h = _mix64_scalar(h + (np.uint64(index) + np.uint64(1)) * np.uint64(0x9E3779B97F4A7C15))
    return np.float64(h >> np.uint64(11)) * (1.0 / 9007199254740992.0)
