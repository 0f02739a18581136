"""Scalar Gaussian primitives and a quadrature oracle for truncated moments.

The error-function family is delegated to :mod:`scipy.special`, whose
``erf``/``erfc``/``erfcx`` are the Cephes rational and continued-fraction
approximations (double precision, relative error of a few ulp over the real
line).  The moment oracle uses QUADPACK's adaptive Gauss-Kronrod routine with
epsilon-algorithm extrapolation through :func:`scipy.integrate.quad`, so it
shares no code path with the closed-form moments it is used to check.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate, special

from .errors import DomainError, NonConvergence, ZeroMass

SQRT2 = math.sqrt(2.0)
SQRT_2PI = math.sqrt(2.0 * math.pi)

#: Smallest area the oracle (and the closed forms) accept before raising ZeroMass.
ZERO_MASS_AREA = 1e-300
#: Half width added around the interesting means when no support is given.
SUPPORT_MARGIN = 12.0
#: Constraint means beyond this (in prior standard deviations) do not move the support.
SUPPORT_CLIP = 40.0


class GaussianScalar(NamedTuple):
    """Mean and standard deviation of one uncertain bound.

    ``mu`` may be ``-inf``/``+inf`` to mark a missing lower/upper bound.
    Both fields may also be numpy arrays when a batch of bounds is described.
    """

    mu: float
    sigma: float = 0.0

    @property
    def is_finite(self):
        return np.isfinite(self.mu)


NO_LOWER = GaussianScalar(-math.inf, 0.0)
NO_UPPER = GaussianScalar(math.inf, 0.0)


def erf(t):
    return special.erf(t)


def erfc(t):
    """Complementary error function, accurate in the far right tail."""
    return special.erfc(t)


def erfcx(t):
    """Scaled complementary error function ``exp(t**2) * erfc(t)``."""
    return special.erfcx(t)


def std_normal_pdf(z):
    return np.exp(-0.5 * np.square(z)) / SQRT_2PI


def std_normal_cdf(z):
    # 0.5 * erfc(-z / sqrt2) == (1 + erf(z / sqrt2)) / 2 without cancellation for z << 0
    return 0.5 * special.erfc(-np.asarray(z) / SQRT2)


def erf_gauss_integral(alpha: float, beta: float, a: float, b: float) -> float:
    """Closed form of ``int exp(-(alpha t + beta)^2) erf(a t + b) dt`` over the real line."""
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha!r}")
    return math.sqrt(math.pi) / alpha * math.erf(
        (alpha * b - beta * a) / math.sqrt(alpha * alpha + a * a)
    )


@dataclass(frozen=True)
class WeightedDensity:
    """An unnormalised, nonnegative density on the real line.

    ``support`` must cover all but a negligible fraction of the mass and
    ``breakpoints`` lists interior points where the integrand changes quickly
    (near-hard constraint edges).
    """

    func: Callable[[float], float]
    support: tuple[float, float]
    breakpoints: Sequence[float] = field(default=())


def default_support(*means: float) -> tuple[float, float]:
    """Support hint around the prior (mean 0) and any finite constraint means."""
    pts = [0.0]
    for m in means:
        if m is not None and math.isfinite(m):
            pts.append(min(max(m, -SUPPORT_CLIP), SUPPORT_CLIP))
    return min(pts) - SUPPORT_MARGIN, max(pts) + SUPPORT_MARGIN


def _quad(g, lo, hi, points, epsabs, epsrel):
    # merge breakpoints closer than rounding at this range: sub-intervals of
    # (sub)normal width wreck the error estimate
    pts = []
    for p in sorted(p for p in points if lo < p < hi):
        if not pts or p - pts[-1] > 1e-14 * (hi - lo):
            pts.append(p)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(
            g, lo, hi, points=pts or None, epsabs=epsabs, epsrel=epsrel, limit=1000
        )
    return val, err


def integrate_density(g, f: WeightedDensity, tol: float = 1e-10, scale: float | None = None):
    """Integrate ``g`` over ``f``'s support, raising NonConvergence above ``tol``.

    The error estimate is judged relative to ``scale`` (default ``|result|``).
    """
    lo, hi = f.support
    val, err = _quad(g, lo, hi, f.breakpoints, epsabs=0.0 if scale is None else 1e-3 * tol * scale,
                     epsrel=1e-3 * tol)
    ref = abs(val) if scale is None else scale
    if not np.isfinite(val) or err > tol * ref:
        raise NonConvergence(f"quadrature error {err:.3g} exceeds {tol:g} x {ref:.3g}")
    return val


def oracle_moments(f: WeightedDensity, tol: float = 1e-10) -> tuple[float, float, float]:
    """Area, mean and variance of ``f`` by adaptive quadrature.

    Returns
    -------
    area, mean, variance : float
        The mean error is controlled in absolute terms (relative to the
        square root of the variance scale of the prior, i.e. 1), the area and
        variance in relative terms.
    """
    area = integrate_density(f.func, f, tol)
    if not area >= ZERO_MASS_AREA:
        raise ZeroMass(f"density area {area:.3g} is below {ZERO_MASS_AREA:g}")
    m1 = integrate_density(lambda z: z * f.func(z), f, tol, scale=area)
    mean = m1 / area
    m2 = integrate_density(lambda z: (z - mean) ** 2 * f.func(z), f, tol)
    return area, mean, m2 / area
