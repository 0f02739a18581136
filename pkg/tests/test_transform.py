import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from gaussconstraint.errors import DegenerateConstraint, DimensionMismatch, DomainError, NotPSD, NotSymmetric, ZeroMass
from gaussconstraint.moments import ScalarMoments, truncation_moments
from gaussconstraint.scalar_gauss import NO_LOWER, NO_UPPER, GaussianScalar
from gaussconstraint.transform import (
    LinearConstraint,
    StateEstimate,
    apply_constraint,
    gram_schmidt_rho,
    inverse_transform,
    jordan_decompose,
    transform_constraint,
    truncate_estimate,
)


def random_estimate(rng, n, rank=None):
    rank = n if rank is None else rank
    A = rng.normal(size=(n, rank)) * rng.uniform(0.1, 3, size=rank)
    return StateEstimate(rng.normal(size=n) * 2, A @ A.T)


def random_bound(rng, centre, scale):
    return GaussianScalar(centre + rng.normal() * scale, abs(rng.normal()) * scale * (rng.random() < 0.8))


def rank_one_update(est, phi, m):
    # x' = x + mean * P phi / s,  P' = P + (var - 1) P phi phi' P / s^2
    Pphi = est.cov @ phi
    s = math.sqrt(phi @ Pphi)
    return est.mean + m.mean * Pphi / s, est.cov + (m.variance - 1) * np.outer(Pphi, Pphi) / s ** 2


seeds = st.integers(0, 2 ** 32 - 1)


# -- decomposition ------------------------------------------------------------

def test_jordan_identity_and_diagonal():
    T, W = jordan_decompose(np.eye(3))
    assert_allclose(W, 1.0)
    assert_allclose(T @ T.T, np.eye(3), atol=1e-15)
    T, W = jordan_decompose(np.diag([4.0, 1.0]))
    assert sorted(W) == [1.0, 4.0]
    assert_allclose(np.abs(T), np.array([[0, 1], [1, 0]]), atol=0)


def test_jordan_reconstruction():
    P = np.array([[2.0, 0.5], [0.5, 1.0]])
    T, W = jordan_decompose(P)
    assert np.max(np.abs(T @ np.diag(W) @ T.T - P)) <= 1e-12 * np.max(np.abs(P))


def test_jordan_errors_and_clamping():
    with pytest.raises(NotSymmetric):
        jordan_decompose(np.array([[1.0, 0.1], [0.0, 1.0]]))
    with pytest.raises(NotPSD):
        jordan_decompose(np.diag([1.0, -0.1]))
    _, W = jordan_decompose(np.diag([1.0, -1e-13]))
    assert W.min() == 0.0


@given(seeds, st.integers(1, 6))
def test_jordan_random(seed, n):
    rng = np.random.default_rng(seed)
    P = random_estimate(rng, n, rank=rng.integers(1, n + 1)).cov
    T, W = jordan_decompose(P)
    assert np.all(W >= 0)
    assert_allclose(T.T @ T, np.eye(n), atol=1e-10)
    assert np.max(np.abs(T @ np.diag(W) @ T.T - P)) <= 1e-10 * np.max(np.abs(P))


# -- Gram-Schmidt -----------------------------------------------------------------

def _rho_identity(P, phi):
    T, W = jordan_decompose(P)
    rho = gram_schmidt_rho(T, W, phi, P)
    return rho, rho @ (np.sqrt(W) * (T.T @ phi))


def test_rho_examples():
    rho, img = _rho_identity(np.eye(3), np.array([1.0, 0, 0]))
    assert_allclose(np.abs(rho), np.eye(3), atol=1e-15)
    assert_allclose(img, [1, 0, 0], atol=1e-15)
    _, img = _rho_identity(np.eye(2), np.array([1.0, 1.0]) / math.sqrt(2))
    assert_allclose(img, [1, 0], atol=1e-15)


@settings(max_examples=200)
@given(seeds, st.integers(1, 6))
def test_rho_random(seed, n):
    rng = np.random.default_rng(seed)
    P = random_estimate(rng, n, rank=rng.integers(1, n + 1)).cov
    phi = rng.normal(size=n)
    if phi @ P @ phi <= 1e-10 * np.trace(P):
        return
    rho, img = _rho_identity(P, phi)
    assert_allclose(rho @ rho.T, np.eye(n), atol=1e-10)
    expect = np.zeros(n)
    expect[0] = math.sqrt(phi @ P @ phi)
    assert_allclose(img, expect, atol=1e-10 * max(1.0, expect[0]))


def test_rho_degenerate():
    P = np.diag([1.0, 0.0])
    T, W = jordan_decompose(P)
    with pytest.raises(DegenerateConstraint):
        gram_schmidt_rho(T, W, np.array([0.0, 1.0]), P)


# -- forward transform ----------------------------------------------------------------

def test_transform_constraint_examples():
    est = StateEstimate(np.zeros(2), np.eye(2))
    _, tc = transform_constraint(est, LinearConstraint([1.0, 0.0], GaussianScalar(0.0, 1.0)))
    assert tuple(map(float, tc.lower)) == (0.0, 1.0)
    est = StateEstimate(np.array([1.0, 0.0]), 4 * np.eye(2))
    _, tc = transform_constraint(est, LinearConstraint([1.0, 0.0], GaussianScalar(0.0, 2.0)))
    assert_allclose([tc.lower.mu, tc.lower.sigma], [-0.5, 1.0], rtol=1e-15)
    assert np.isinf(tc.upper.mu) and tc.upper.mu > 0


def test_whitening_monte_carlo():
    rng = np.random.default_rng(7)
    est = random_estimate(rng, 4)
    frame, _ = transform_constraint(est, LinearConstraint(rng.normal(size=4), GaussianScalar(0.0, 1.0)))
    x = rng.multivariate_normal(est.mean, est.cov, size=100_000)
    z = (x - est.mean) @ frame.forward_map.T
    se_mean = 1 / math.sqrt(len(z))
    se_var = math.sqrt(2 / len(z))
    assert np.all(np.abs(z.mean(axis=0)) <= 3 * se_mean)
    assert np.all(np.abs(z.var(axis=0) - 1) <= 3 * se_var)


# -- apply / truncate -----------------------------------------------------------------

def test_apply_examples():
    est = StateEstimate(np.zeros(1), np.eye(1))
    out = apply_constraint(est, LinearConstraint([1.0], GaussianScalar(0.0, 0.0)))
    assert_allclose(out.mean, [math.sqrt(2 / math.pi)], atol=1e-9)
    assert_allclose(out.cov, [[(math.pi - 2) / math.pi]], atol=1e-9)

    est = StateEstimate(np.zeros(2), np.eye(2))
    out = apply_constraint(est, LinearConstraint([1.0, 0.0], GaussianScalar(0.0, 1.0)))
    assert_allclose(out.mean, [1 / math.sqrt(math.pi), 0], atol=1e-14)
    assert_allclose(out.cov, np.diag([1 - 1 / math.pi, 1]), atol=1e-14)


def test_no_bounds_is_noop():
    est = random_estimate(np.random.default_rng(1), 3)
    out = apply_constraint(est, LinearConstraint([1.0, 2.0, 0.0]))
    assert out is est or (np.array_equal(out.mean, est.mean) and np.array_equal(out.cov, est.cov))
    assert truncate_estimate(est, []) is est


@settings(max_examples=200, deadline=None)
@given(seeds, st.integers(1, 5))
def test_apply_matches_rank_one_form(seed, n):
    rng = np.random.default_rng(seed)
    est = random_estimate(rng, n)
    phi = rng.normal(size=n)
    centre, s = phi @ est.mean, math.sqrt(phi @ est.cov @ phi)
    lo = random_bound(rng, centre - s, s)
    hi = random_bound(rng, centre + s, s)
    if lo.mu >= hi.mu:
        lo, hi = hi, lo
    c = LinearConstraint(phi, *[(lo, NO_UPPER), (NO_LOWER, hi), (lo, hi)][rng.integers(3)])
    frame, tc = transform_constraint(est, c)
    m = truncation_moments(tc, warn=False)
    out = apply_constraint(est, c, warn=False)
    mean, cov = rank_one_update(est, phi, m)
    scale = np.max(np.abs(est.cov))
    assert_allclose(out.mean, mean, atol=1e-9 * math.sqrt(scale))
    assert_allclose(out.cov, cov, atol=1e-9 * scale)
    # symmetric PSD, and no growth along phi
    assert np.array_equal(out.cov, out.cov.T)
    assert np.linalg.eigvalsh(out.cov).min() >= -1e-10 * np.trace(out.cov)
    assert phi @ out.cov @ phi <= phi @ est.cov @ phi + 1e-10


@given(seeds, st.integers(1, 6))
def test_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    est = random_estimate(rng, n, rank=rng.integers(1, n + 1))
    phi = rng.normal(size=n)
    if phi @ est.cov @ phi <= 1e-10 * np.trace(est.cov):
        return
    frame, _ = transform_constraint(est, LinearConstraint(phi, GaussianScalar(0.0, 1.0)))
    back = inverse_transform(est, frame, ScalarMoments(0.0, 1.0))
    scale = np.max(np.abs(est.cov))
    assert_allclose(back.mean, est.mean, atol=1e-10 * max(1, math.sqrt(scale)))
    assert_allclose(back.cov, est.cov, atol=1e-10 * scale)


@given(seeds, st.integers(2, 5))
def test_untouched_directions(seed, n):
    rng = np.random.default_rng(seed)
    est = StateEstimate(rng.normal(size=n), np.diag(rng.uniform(0.1, 4, size=n)))
    j = int(rng.integers(n))
    phi = np.zeros(n)
    phi[j] = 1.0
    out = apply_constraint(est, LinearConstraint(phi, GaussianScalar(est.mean[j], 0.3)))
    keep = np.arange(n) != j
    assert_allclose(out.mean[keep], est.mean[keep], atol=1e-12)
    assert_allclose(out.cov[np.ix_(keep, keep)], est.cov[np.ix_(keep, keep)], atol=1e-12)
    assert_allclose(out.cov[j, keep], 0.0, atol=1e-12)


@given(seeds, st.integers(2, 5))
def test_decoupled_order_independence(seed, n):
    rng = np.random.default_rng(seed)
    est = StateEstimate(rng.normal(size=n), np.diag(rng.uniform(0.1, 4, size=n)))
    i, j = rng.choice(n, 2, replace=False)
    ci = LinearConstraint(np.eye(n)[i], GaussianScalar(est.mean[i] + rng.normal(), rng.uniform(0, 1)))
    cj = LinearConstraint(np.eye(n)[j], NO_LOWER, GaussianScalar(est.mean[j] + rng.normal(), rng.uniform(0, 1)))
    a = truncate_estimate(est, [ci, cj])
    b = truncate_estimate(est, [cj, ci])
    assert_allclose(a.mean, b.mean, atol=1e-10)
    assert_allclose(a.cov, b.cov, atol=1e-10)


def test_coupled_order_matters():
    est = StateEstimate(np.zeros(2), np.array([[1.0, 0.8], [0.8, 1.0]]))
    c1 = LinearConstraint([1.0, 0.0], GaussianScalar(0.5, 0.0))
    c2 = LinearConstraint([1.0, -1.0], NO_LOWER, GaussianScalar(0.0, 0.0))
    a = truncate_estimate(est, [c1, c2])
    b = truncate_estimate(est, [c2, c1])
    assert np.max(np.abs(a.mean - b.mean)) > 1e-3


def test_far_bound_is_noop():
    est = random_estimate(np.random.default_rng(3), 3)
    out = apply_constraint(est, LinearConstraint([1.0, 0, 0], GaussianScalar(-1e6, 1.0)))
    assert_allclose(out.mean, est.mean, atol=1e-12)
    assert_allclose(out.cov, est.cov, atol=1e-12)


def test_degenerate_policy():
    est = StateEstimate(np.array([0.5, 0.5]), np.diag([1.0, 0.0]))
    c = LinearConstraint([0.0, 1.0], GaussianScalar(1.0, 0.0))
    with pytest.raises(DegenerateConstraint):
        apply_constraint(est, c)
    out = apply_constraint(est, c, on_degenerate="skip")
    assert np.array_equal(out.mean, est.mean)
    # zero eigenvalue elsewhere is fine
    out = apply_constraint(est, LinearConstraint([1.0, 0.0], GaussianScalar(0.0, 0.0)))
    assert out.cov[1, 1] == 0.0


def test_zero_mass_policy():
    est = StateEstimate(np.zeros((3, 1)), np.ones((3, 1, 1)))
    c = LinearConstraint([1.0], GaussianScalar(np.array([0.0, 40.0, 1.0]), 0.0))
    with pytest.raises(ZeroMass) as info:
        apply_constraint(est, c)
    assert list(info.value.indices) == [1]
    out = apply_constraint(est, c, on_zero_mass="tail")
    assert_allclose(out.mean[1, 0], 40.02496884720726, rtol=1e-12)
    assert 0 < out.cov[1, 0, 0] < 1e-3
    assert_allclose(out.mean[0, 0], math.sqrt(2 / math.pi), atol=1e-9)


def test_truncate_reports_constraint_index():
    est = StateEstimate(np.zeros(2), np.eye(2))
    cs = [LinearConstraint([1.0, 0.0], GaussianScalar(0.0, 1.0)), LinearConstraint([0.0, 1.0], GaussianScalar(45.0, 0.0))]
    with pytest.raises(ZeroMass) as info:
        truncate_estimate(est, cs)
    assert info.value.constraint_index == 1


def test_batched_matches_loop():
    rng = np.random.default_rng(4)
    ests = [random_estimate(rng, 3) for _ in range(6)]
    batch = StateEstimate(np.stack([e.mean for e in ests]), np.stack([e.cov for e in ests]))
    phi = np.array([1.0, -0.5, 0.2])
    lo = GaussianScalar(np.linspace(-2, 1, 6), np.linspace(0, 1, 6))
    hi = GaussianScalar(np.full(6, 2.5), 0.5)
    out = apply_constraint(batch, LinearConstraint(phi, lo, hi), warn=False)
    for i, e in enumerate(ests):
        one = apply_constraint(e, LinearConstraint(phi, GaussianScalar(lo.mu[i], lo.sigma[i]), GaussianScalar(2.5, 0.5)),
                               warn=False)
        assert_allclose(out.mean[i], one.mean, rtol=1e-12, atol=1e-14)
        assert_allclose(out.cov[i], one.cov, rtol=1e-12, atol=1e-14)


def test_validation():
    with pytest.raises(DimensionMismatch):
        StateEstimate(np.zeros(2), np.eye(3))
    with pytest.raises(DomainError):
        LinearConstraint([0.0, 0.0], GaussianScalar(0.0, 1.0))
    with pytest.raises(DomainError):
        LinearConstraint([1.0], GaussianScalar(1.0, 0.0), GaussianScalar(0.0, 0.0))
    with pytest.raises(DomainError):
        LinearConstraint([1.0], GaussianScalar(1.0, -1.0))
    with pytest.raises(NotPSD):
        StateEstimate(np.zeros(2), np.diag([1.0, -1.0])).validate()
