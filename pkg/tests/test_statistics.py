import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mixscope.errors import ValidationError
from mixscope.mixer import ObservationWindow
from mixscope.statistics import input_moments, profile_stats


def obs_from_columns(U):
    U = np.asarray(U)
    return ObservationWindow(U, U.sum(axis=1, keepdims=True))


def test_constant_column():
    m = input_moments(obs_from_columns(np.full((10, 1), 5)))
    assert (m.mu[0], m.mu2[0], m.mu3[0], m.mu4[0]) == (5, 0, 0, 0)


def test_two_point_column():
    col = np.tile([0, 2], 50)[:, None]
    U = np.hstack([col, np.ones_like(col)])
    m = input_moments(obs_from_columns(U))
    assert (m.mu[0], m.mu2[0], m.mu3[0], m.mu4[0]) == (1, 1, 0, 1)


def test_needs_two_rounds():
    with pytest.raises(ValidationError):
        input_moments(obs_from_columns([[3, 1]]))


def test_poisson_moment_identities():
    lam = 4.0
    x = np.random.default_rng(3).poisson(lam, size=(100_000, 1)) + 0
    m = input_moments(obs_from_columns(np.hstack([x, np.ones_like(x)])))
    expected = (lam, lam, lam, 3 * lam**2 + lam)
    for got, want in zip((m.mu[0], m.mu2[0], m.mu3[0], m.mu4[0]), expected):
        assert abs(got / want - 1) < 0.05


@settings(max_examples=40, deadline=None)
@given(arrays(np.int64, st.tuples(st.integers(2, 30), st.integers(1, 4)), elements=st.integers(1, 20)), st.randoms())
def test_moments_permutation_invariant_and_jensen(U, rnd):
    perm = list(range(U.shape[0]))
    rnd.shuffle(perm)
    a, b = input_moments(U), input_moments(U[perm])
    for f in ("mu", "mu2", "mu3", "mu4"):
        np.testing.assert_allclose(getattr(a, f), getattr(b, f), rtol=1e-9, atol=1e-9)
    assert (a.mu >= 0).all() and (a.mu2 >= 0).all()
    assert (a.mu4 >= a.mu2**2 * (1 - 1e-12)).all()


def test_threshold_means_sum_to_t(rng):
    U = rng.multinomial(100, [0.1, 0.2, 0.3, 0.4], size=500)
    assert input_moments(U).mu.sum() == pytest.approx(100, abs=1e-9)


def test_profile_stats_examples():
    single = profile_stats(np.array([[0.0, 1.0, 0.0]]))
    assert single.u[0] == 0 and (single.s == 0).all()
    M = 5
    uni = profile_stats(np.full((1, M), 1 / M))
    assert uni.u[0] == pytest.approx((M - 1) / M, abs=1e-12)
    half = profile_stats(np.array([[0.5, 0.5]]))
    np.testing.assert_array_equal(half.s, [[0.25, 0.25]])
    assert half.u[0] == 0.5


def test_profile_stats_identity(rng):
    P = rng.dirichlet(np.ones(7) * 0.3, size=20)
    ps = profile_stats(P)
    np.testing.assert_allclose(ps.u, 1 - (P**2).sum(axis=1), atol=1e-12)
    np.testing.assert_allclose(ps.s.sum(axis=1), ps.u, atol=1e-12)
    assert (ps.s >= 0).all() and (ps.s <= 0.25).all()
    assert (ps.u <= (7 - 1) / 7 + 1e-12).all()


def test_profile_stats_rejects_non_stochastic():
    with pytest.raises(ValidationError):
        profile_stats(np.array([[0.5, 0.3]]))
