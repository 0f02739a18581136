"""Moments of a standard normal truncated by Gaussian-distributed bounds.

Every function works in the decoupled coordinate where the prior is N(0, 1)
and the constraint bounds are ``C ~ N(mu_c, sigma_c^2)`` (lower) and
``D ~ N(mu_d, sigma_d^2)`` (upper).  The one-sided results are exact; the
interval result is exact for the erf-difference surrogate ``Z`` that replaces
the product of the two bound CDFs.

Arguments may be numpy arrays; the closed forms broadcast elementwise.

Numerical notes
---------------
Writing ``c = mu_c / sqrt(2 (sigma_c^2 + 1))`` and ``s_c = sqrt(sigma_c^2 + 1)``
the lower-bound mean is ``sqrt(2/pi) / (s_c erfcx(c))`` and the variance
simplifies to ``1 - mean^2 + mean * mu_c / s_c^2``.  Using ``erfcx`` keeps the
normaliser from underflowing until the mass itself is below
``ZERO_MASS_AREA``.  The interval normaliser is evaluated as a difference of
scaled ``erfc`` terms on the side where both bounds sit, which avoids the
``erf(d) - erf(c)`` cancellation when both bounds are far out in one tail.
"""
from __future__ import annotations

import math
import warnings
from typing import NamedTuple

import numpy as np
from scipy import optimize, special

from .errors import ApproximationWarning, DomainError, NonConvergence, ZeroMass
from .scalar_gauss import (
    NO_LOWER,
    NO_UPPER,
    SQRT2,
    ZERO_MASS_AREA,
    GaussianScalar,
    WeightedDensity,
    _quad,
    default_support,
    oracle_moments,
)

SIGMA_MIN = 1e-9
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_LOG_ZERO_MASS = math.log(ZERO_MASS_AREA)
# relative size of the interval normaliser below which the closed form is abandoned
_CANCELLATION_LIMIT = 1e-8
_VARIANCE_SLACK = 1e-12
_VARIANCE_RTOL = 1e-10
_EPS = np.finfo(float).eps


class ScalarMoments(NamedTuple):
    mean: float
    variance: float


class TransformedConstraint(NamedTuple):
    """Bounds on the single constrained coordinate of the decoupled state."""

    lower: GaussianScalar = NO_LOWER
    upper: GaussianScalar = NO_UPPER

    @property
    def is_interval(self):
        return np.isfinite(self.lower.mu) & np.isfinite(self.upper.mu)


def _clamped(sigma):
    return np.maximum(np.asarray(sigma, dtype=float), SIGMA_MIN)


def _check_sigma(sigma):
    if np.any(np.asarray(sigma) < 0) or np.any(np.isnan(sigma)):
        raise DomainError("bound standard deviations must be nonnegative")


def _zero_mass(msg, failed):
    err = ZeroMass(msg)
    err.indices = np.flatnonzero(failed)
    return err


def _scalarize(m: ScalarMoments) -> ScalarMoments:
    if np.ndim(m.mean) == 0:
        return ScalarMoments(float(m.mean), float(m.variance))
    return m


def lower_truncation_moments(c: GaussianScalar) -> ScalarMoments:
    """Mean and variance of N(0, 1) conditioned on exceeding ``C ~ N(c.mu, c.sigma^2)``.

    A zero ``sigma`` is clamped to ``SIGMA_MIN``, which reproduces the hard
    truncation to well below 1e-6.

    Raises
    ------
    ZeroMass
        If the probability of satisfying the bound is below ``ZERO_MASS_AREA``.
    """
    _check_sigma(c.sigma)
    mu = np.asarray(c.mu, dtype=float)
    s2 = np.square(_clamped(c.sigma)) + 1.0
    s = np.sqrt(s2)
    arg = mu / (SQRT2 * s)
    # log P(C <= z) = log(erfc(arg) / 2)
    log_area = special.log_ndtr(-SQRT2 * arg)
    if np.any(log_area < _LOG_ZERO_MASS):
        raise _zero_mass("lower bound excludes essentially all prior mass", log_area < _LOG_ZERO_MASS)
    with np.errstate(over="ignore"):
        mean = _SQRT_2_OVER_PI / (s * special.erfcx(arg))
    var = 1.0 - mean * mean + mean * mu / s2
    return _scalarize(ScalarMoments(mean, var))


def upper_truncation_moments(d: GaussianScalar) -> ScalarMoments:
    """Mean and variance of N(0, 1) conditioned on lying below ``D ~ N(d.mu, d.sigma^2)``.

    Obtained from the lower-bound result through the reflection z -> -z.
    """
    m = lower_truncation_moments(GaussianScalar(-np.asarray(d.mu, dtype=float), d.sigma))
    return _scalarize(ScalarMoments(-m.mean, m.variance))


def _interval_closed_form(mu_c, sigma_c, mu_d, sigma_d):
    """Vectorised closed form; returns (mean, var, log_area, ok) with ``ok`` False
    where the normaliser is non-positive or lost to cancellation."""
    sc2 = np.square(sigma_c) + 1.0
    sd2 = np.square(sigma_d) + 1.0
    sc = np.sqrt(sc2)
    sd = np.sqrt(sd2)
    c = mu_c / (SQRT2 * sc)
    d = mu_d / (SQRT2 * sd)

    both_pos = (c >= 0) & (d >= 0)
    both_neg = (c <= 0) & (d <= 0) & ~both_pos
    # reference exponent: all exp(-c^2), exp(-d^2) and the normaliser are scaled by exp(k)
    # (the smaller square, so neither factor overflows when a wide bound puts d below c)
    k = np.where(both_pos | both_neg, np.minimum(c * c, d * d), 0.0)
    ec = np.exp(k - c * c)
    ed = np.exp(k - d * d)
    with np.errstate(over="ignore", invalid="ignore"):
        head = np.where(both_pos, ec * special.erfcx(c), np.where(both_neg, ed * special.erfcx(-d), 1.0))
        tail = np.where(both_pos, ed * special.erfcx(d), np.where(both_neg, ec * special.erfcx(-c), 1.0))
        direct = special.erf(d) - special.erf(c)
        norm = np.where(both_pos | both_neg, head - tail, direct)
        scale = np.where(both_pos | both_neg, head, np.abs(special.erf(d)) + np.abs(special.erf(c)))
        ok = norm > _CANCELLATION_LIMIT * scale
        safe = np.where(ok, norm, 1.0)
        mean = _SQRT_2_OVER_PI * (ec / sc - ed / sd) / safe
        spread = _SQRT_2_OVER_PI * (ec * mu_c / (sc2 * sc) - ed * mu_d / (sd2 * sd)) / safe
        var = 1.0 - mean * mean + spread
        # rounding in the normaliser is amplified by scale / norm and then by the
        # cancellation between the O(mean^2) terms of the variance
        var_err = 4.0 * _EPS * (1.0 + mean * mean + np.abs(spread)) * scale / safe
        mean_err = 4.0 * _EPS * np.abs(mean) * scale / safe
        ok = ok & (var_err <= _VARIANCE_RTOL * np.abs(var))
        ok = ok & (mean_err <= _VARIANCE_RTOL * np.sqrt(np.abs(var)))
        log_area = np.where(norm > 0, np.log(np.where(norm > 0, norm, 1.0) / 2.0) - k, -np.inf)
    # Z dips below zero in the tail of the narrower bound; with the prior far outside
    # the interval that negative mass can push the variance out of (0, 1]
    ok = ok & (var > 0) & (var <= 1.0 + _VARIANCE_SLACK) & np.isfinite(mean)
    return mean, var, log_area, ok


_EDGE_OFFSETS = (-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0)


def _edge_points(*bounds):
    # quadrature breakpoints that resolve the (possibly near-step) bound CDFs
    pts = [0.0]
    for mu, sigma in bounds:
        if math.isfinite(mu):
            pts.extend(mu + k * sigma for k in _EDGE_OFFSETS)
    return tuple(sorted(set(pts)))


def approx_interval_density(tc: TransformedConstraint) -> WeightedDensity:
    """The erf-difference surrogate ``Z`` for an interval constraint (unnormalised)."""
    mu_c, mu_d = float(tc.lower.mu), float(tc.upper.mu)
    sc = float(_clamped(tc.lower.sigma)) * SQRT2
    sd = float(_clamped(tc.upper.sigma)) * SQRT2
    k = 1.0 / (2.0 * math.sqrt(2.0 * math.pi))

    def z(x):
        a, b = (x - mu_c) / sc, (x - mu_d) / sd
        # erf(a) - erf(b) through erfc on the side where both sit, so tails keep their digits
        if a > 0 and b > 0:
            diff = math.erfc(b) - math.erfc(a)
        elif a < 0 and b < 0:
            diff = math.erfc(-a) - math.erfc(-b)
        else:
            diff = math.erf(a) - math.erf(b)
        return k * math.exp(-0.5 * x * x) * diff

    return WeightedDensity(z, default_support(mu_c, mu_d), _edge_points((mu_c, sc), (mu_d, sd)))


def exact_density(tc: TransformedConstraint) -> WeightedDensity:
    """Unnormalised N(0, 1) density times P(C <= z) times P(z <= D).

    Either bound may be missing (infinite mean).
    """
    mu_c, mu_d = float(tc.lower.mu), float(tc.upper.mu)
    sc = float(_clamped(tc.lower.sigma))
    sd = float(_clamped(tc.upper.sigma))
    has_c, has_d = math.isfinite(mu_c), math.isfinite(mu_d)

    def p(x):
        logp = -0.5 * x * x - 0.5 * math.log(2.0 * math.pi)
        if has_c:
            logp += special.log_ndtr((x - mu_c) / sc)
        if has_d:
            logp += special.log_ndtr((mu_d - x) / sd)
        return math.exp(logp)

    return WeightedDensity(p, default_support(mu_c, mu_d), _edge_points((mu_c, sc), (mu_d, sd)))


def tail_truncation_moments(tc: TransformedConstraint, tol: float = 1e-10) -> ScalarMoments:
    """Moments of the exact truncated density however little mass it keeps.

    The log density is shifted by its maximum before integrating, so a prior
    lying far outside the bounds (where the closed forms report ZeroMass)
    still gets the moments of its normalised truncation.  Either bound may be
    missing.
    """
    mu_c, mu_d = float(tc.lower.mu), float(tc.upper.mu)
    sc = float(_clamped(tc.lower.sigma))
    sd = float(_clamped(tc.upper.sigma))
    has_c, has_d = math.isfinite(mu_c), math.isfinite(mu_d)
    if has_c and has_d and mu_c >= mu_d:
        raise DomainError("need lower.mu < upper.mu")

    def logf(x):
        val = -0.5 * x * x
        if has_c:
            val += special.log_ndtr((x - mu_c) / sc)
        if has_d:
            val += special.log_ndtr((mu_d - x) / sd)
        return float(val)

    # the density is log-concave, so its mode lies between 0 and the bounds
    ends = [0.0] + [m for m, ok in ((mu_c, has_c), (mu_d, has_d)) if ok]
    a, b = min(ends) - 1.0, max(ends) + 1.0
    pts = [0.0, a, b] + [m + k * s for m, s, ok in ((mu_c, sc, has_c), (mu_d, sd, has_d)) if ok
                         for k in _EDGE_OFFSETS]
    x0 = max((p for p in pts if a <= p <= b), key=logf)
    res = optimize.minimize_scalar(lambda x: -logf(x), bounds=(a, b), method="bounded",
                                   options={"xatol": 1e-12 * max(1.0, abs(x0))})
    mode = res.x if logf(res.x) > logf(x0) else x0
    peak = logf(mode)

    def edge(direction):
        step = 1.0 / max(1.0, abs(mode))
        while logf(mode + direction * step) > peak - 60.0:
            step *= 2.0
        return optimize.brentq(lambda x: logf(x) - (peak - 60.0), mode, mode + direction * step,
                               xtol=1e-14 * max(1.0, abs(mode)))

    # integrate in t = x - mode, expanding the quadratic so nothing large cancels
    oc, od = mu_c - mode, mu_d - mode

    def logg(t):
        val = -mode * t - 0.5 * t * t
        if has_c:
            val += special.log_ndtr((t - oc) / sc)
        if has_d:
            val += special.log_ndtr((od - t) / sd)
        return float(val)

    ref = logg(0.0)

    def edge(direction):
        step = 1.0 / max(1.0, abs(mode))
        while logg(direction * step) > ref - 60.0:
            step *= 2.0
        return optimize.brentq(lambda t: logg(t) - (ref - 60.0), 0.0, direction * step, xtol=1e-300)

    lo, hi = edge(-1.0), edge(1.0)
    t_pts = [0.0] + [o + k * sg for o, sg, ok in ((oc, sc, has_c), (od, sd, has_d)) if ok
                     for k in _EDGE_OFFSETS]
    dens = WeightedDensity(lambda t: math.exp(logg(t) - ref), (lo, hi),
                           tuple(p for p in t_pts if lo < p < hi))
    _, mean_t, var = oracle_moments(dens, tol)
    mean = float(mode + mean_t)
    return ScalarMoments(mean, var)


def _check_interval(tc: TransformedConstraint):
    _check_sigma(tc.lower.sigma)
    _check_sigma(tc.upper.sigma)
    if not np.all(tc.is_interval):
        raise DomainError("interval moments need both bounds finite")
    if np.any(np.asarray(tc.lower.mu) >= np.asarray(tc.upper.mu)):
        raise DomainError("interval moments need lower.mu < upper.mu")


def interval_truncation_moments(tc: TransformedConstraint, warn: bool = True) -> ScalarMoments:
    """Mean and variance of the normalised surrogate density ``Z``.

    ``Z`` replaces ``[1 + erf_c][1 - erf_d]`` by ``2 [erf_c - erf_d]``, which
    is accurate when the two bound distributions barely overlap (large
    :func:`overlap_metric`).  Where the closed-form normaliser cancels badly
    the moments of ``Z`` are recomputed by quadrature.  Where ``Z`` is not a
    usable density (non-positive area, or a variance outside (0, 1], which
    happens when the prior lies well outside an interval whose bounds have
    different deviations) the exact product density is integrated instead.
    """
    _check_interval(tc)
    mu_c = np.asarray(tc.lower.mu, dtype=float)
    mu_d = np.asarray(tc.upper.mu, dtype=float)
    sigma_c = _clamped(tc.lower.sigma)
    sigma_d = _clamped(tc.upper.sigma)
    if warn:
        gamma = (mu_d - mu_c) / (sigma_c + sigma_d)
        if np.any(gamma < 1.0):
            warnings.warn(
                f"overlap metric {np.min(gamma):.3g} < 1: interval approximation is coarse",
                ApproximationWarning,
                stacklevel=2,
            )
    shape = np.broadcast(mu_c, mu_d, sigma_c, sigma_d).shape
    mean, var, log_area, ok = _interval_closed_form(mu_c, sigma_c, mu_d, sigma_d)
    mean = np.array(np.broadcast_to(mean, shape), dtype=float)
    var = np.array(np.broadcast_to(var, shape), dtype=float)
    log_area = np.broadcast_to(log_area, shape)
    ok = np.broadcast_to(ok, shape)
    if np.any(ok & (log_area < _LOG_ZERO_MASS)):
        raise _zero_mass("interval constraint excludes essentially all prior mass",
                         ok & (log_area < _LOG_ZERO_MASS))

    for idx in np.ndindex(shape):
        if ok[idx]:
            continue
        one = TransformedConstraint(
            GaussianScalar(np.broadcast_to(mu_c, shape)[idx], np.broadcast_to(sigma_c, shape)[idx]),
            GaussianScalar(np.broadcast_to(mu_d, shape)[idx], np.broadcast_to(sigma_d, shape)[idx]),
        )
        dens = approx_interval_density(one)
        try:
            area, m, v = oracle_moments(dens)
        except (ZeroMass, NonConvergence):
            area = -1.0
        if not area > ZERO_MASS_AREA or not 0 < v <= 1.0 + _VARIANCE_SLACK:
            try:
                area, m, v = oracle_moments(exact_density(one))
            except ZeroMass as err:
                err.indices = np.ravel_multi_index(idx, shape) if shape else 0
                err.indices = np.atleast_1d(err.indices)
                raise
        mean[idx], var[idx] = m, v
    if mean.ndim == 0:
        return ScalarMoments(float(mean), float(var))
    return ScalarMoments(mean, var)


def surrogate_interval_moments(tc: TransformedConstraint):
    """Closed-form mean and variance of ``Z`` with no fallback.

    Returns ``(ScalarMoments, valid)``.  ``valid`` is False where the values
    are unreliable (normaliser lost to cancellation) or are not the moments
    of a distribution (non-positive area, variance outside (0, 1]).  The
    values are still returned there, for comparison against quadrature of
    ``Z`` itself.
    """
    _check_interval(tc)
    mean, var, _, ok = _interval_closed_form(
        np.asarray(tc.lower.mu, dtype=float), _clamped(tc.lower.sigma),
        np.asarray(tc.upper.mu, dtype=float), _clamped(tc.upper.sigma),
    )
    if np.ndim(mean) == 0:
        return ScalarMoments(float(mean), float(var)), bool(ok)
    return ScalarMoments(mean, var), ok


def truncation_moments(tc: TransformedConstraint, warn: bool = True) -> ScalarMoments:
    """Dispatch a scalar transformed constraint to the matching closed form.

    A constraint with no finite bound leaves N(0, 1) unchanged.
    """
    has_c = bool(np.isfinite(tc.lower.mu))
    has_d = bool(np.isfinite(tc.upper.mu))
    if has_c and has_d:
        return interval_truncation_moments(tc, warn=warn)
    if has_c:
        return lower_truncation_moments(tc.lower)
    if has_d:
        return upper_truncation_moments(tc.upper)
    return ScalarMoments(0.0, 1.0)


def overlap_metric(tc: TransformedConstraint) -> float:
    """Separation of the bound means in units of the summed bound deviations."""
    total = float(tc.lower.sigma) + float(tc.upper.sigma)
    if total <= 0:
        raise DomainError("overlap metric undefined for two hard bounds")
    return (float(tc.upper.mu) - float(tc.lower.mu)) / total


def shape_metric(tc: TransformedConstraint) -> float:
    """``|log10(sigma_c / sigma_d)|``."""
    sc, sd = float(tc.lower.sigma), float(tc.upper.sigma)
    if sc <= 0 or sd <= 0:
        raise DomainError("shape metric needs two soft bounds")
    return abs(math.log10(sc / sd))


def _sign_changes(f, lo, hi, n=2001):
    # roots of the surrogate, where the floored log-ratio kinks
    xs = np.linspace(lo, hi, n)
    fs = np.array([f(x) for x in xs])
    idx = np.flatnonzero(np.sign(fs[:-1]) * np.sign(fs[1:]) < 0)
    return [optimize.brentq(f, xs[i], xs[i + 1], xtol=1e-14) for i in idx]


def interval_kl_divergence(tc: TransformedConstraint, tol: float = 1e-10) -> float:
    """KL(actual || approximate) between the normalised exact and surrogate densities.

    The surrogate can dip slightly below zero far in a tail when the bound
    deviations differ; there it is floored at the smallest positive double,
    which only matters where the exact density is itself negligible.
    """
    _check_interval(tc)
    p_dens = exact_density(tc)
    q_dens = approx_interval_density(tc)
    p_area, _, _ = oracle_moments(p_dens, tol)
    q_area, _, _ = oracle_moments(q_dens, tol)
    log_ratio_norm = math.log(q_area) - math.log(p_area)
    tiny = np.finfo(float).tiny

    def g(x):
        p = p_dens.func(x)
        if p == 0.0:
            return 0.0
        q = max(q_dens.func(x), tiny)
        return p * (math.log(p / q) + log_ratio_norm)

    lo, hi = p_dens.support
    pts = p_dens.breakpoints + tuple(_sign_changes(q_dens.func, lo, hi))
    val, err = _quad(g, lo, hi, pts, epsabs=1e-14 * p_area, epsrel=1e-10)
    # values below ~1e-13 are at the absolute accuracy requested and only bounded, not resolved
    if err > max(1e-6 * abs(val), 1e-13 * p_area):
        raise NonConvergence(f"KL quadrature error {err:.3g} too large")
    return max(val / p_area, 0.0)


def metrics_constraint(gamma: float, delta: float, sigma_d: float = 1.0) -> TransformedConstraint:
    """A symmetric interval with the requested overlap and shape metrics.

    ``mu_c = -mu_d``, ``sigma_d`` fixed and ``sigma_c = sigma_d * 10**-delta``.
    """
    if not gamma > 0 or not delta >= 0:
        raise DomainError("need gamma > 0 and delta >= 0")
    sigma_c = sigma_d * 10.0 ** (-delta)
    half = 0.5 * gamma * (sigma_c + sigma_d)
    return TransformedConstraint(GaussianScalar(-half, sigma_c), GaussianScalar(half, sigma_d))
