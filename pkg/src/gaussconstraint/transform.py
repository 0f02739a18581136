"""Decoupling a Gaussian state estimate from a linear constraint and truncating it.

For an estimate ``N(x, P)`` and a constraint ``A <= phi' x <= B`` the state is
mapped to ``z = rho W^-1/2 T' (x - x_hat)`` with ``P = T W T'`` (spectral
decomposition) and ``rho`` an orthogonal matrix sending ``W^1/2 T' phi`` to
the first axis.  In ``z`` every coordinate is an independent N(0, 1) and only
``z[0]`` is constrained, so the scalar moments from :mod:`.moments` apply.
The truncated moments are mapped back with ``T W^1/2 rho'``.

All array arguments may carry leading batch dimensions: ``mean`` is
``(..., n)`` and ``cov`` is ``(..., n, n)``.  Constraint bounds broadcast
against the batch shape.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    DegenerateConstraint,
    DimensionMismatch,
    DomainError,
    GaussConstraintError,
    NotPSD,
    NotSymmetric,
    ZeroMass,
)
from .moments import (
    ScalarMoments,
    TransformedConstraint,
    interval_truncation_moments,
    lower_truncation_moments,
    tail_truncation_moments,
    upper_truncation_moments,
)
from .scalar_gauss import NO_LOWER, NO_UPPER, GaussianScalar

SYMMETRY_RTOL = 1e-12
PSD_RTOL = 1e-10
DEGENERATE_RTOL = 1e-14
GS_DROP = 1e-10


def symmetrize(m):
    return 0.5 * (m + np.swapaxes(m, -1, -2))


@dataclass(frozen=True)
class StateEstimate:
    """Mean vector and covariance matrix of a Gaussian state estimate."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape[-2:] != (mean.shape[-1],) * 2 or cov.shape[:-2] != mean.shape[:-1]:
            raise DimensionMismatch(f"mean {mean.shape} and cov {cov.shape} do not match")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return self.mean.shape[:-1]

    def validate(self):
        """Raise NotSymmetric/NotPSD if the covariance is not a valid covariance."""
        jordan_decompose(self.cov)
        return self

    def take(self, rows):
        return StateEstimate(self.mean[rows], self.cov[rows])


@dataclass(frozen=True)
class LinearConstraint:
    """``lower <= phi' x <= upper`` with Gaussian-distributed bounds.

    A missing bound is represented by an infinite mean (the defaults).
    ``lower``/``upper`` fields may hold arrays to give every batch member its
    own bound on the shared direction ``phi``.
    """

    phi: np.ndarray
    lower: GaussianScalar = NO_LOWER
    upper: GaussianScalar = NO_UPPER

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if not np.all(np.any(phi != 0, axis=-1)):
            raise DomainError("constraint direction phi must be nonzero")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "lower", GaussianScalar(*self.lower))
        object.__setattr__(self, "upper", GaussianScalar(*self.upper))
        lo, hi = np.asarray(self.lower.mu), np.asarray(self.upper.mu)
        both = np.isfinite(lo) & np.isfinite(hi)
        if np.any(both & (lo >= hi)):
            raise DomainError("lower bound mean must be below upper bound mean")
        if np.any(np.asarray(self.lower.sigma) < 0) or np.any(np.asarray(self.upper.sigma) < 0):
            raise DomainError("bound standard deviations must be nonnegative")


class DecoupledFrame(NamedTuple):
    T: np.ndarray
    W: np.ndarray
    rho: np.ndarray

    @property
    def forward_map(self):
        """``rho W^-1/2 T'`` (zero eigenvalues pseudo-inverted), taking state offsets to ``z``."""
        w = np.asarray(self.W, dtype=float)
        inv = np.divide(1.0, np.sqrt(w), out=np.zeros_like(w), where=w > 0)
        return self.rho @ (inv[..., :, None] * np.swapaxes(self.T, -1, -2))

    @property
    def inverse_map(self):
        """``T W^1/2 rho'``, taking decoupled coordinates back to state offsets."""
        return (self.T * np.sqrt(self.W)[..., None, :]) @ np.swapaxes(self.rho, -1, -2)


def jordan_decompose(cov):
    """Spectral decomposition ``cov = T diag(W) T'`` of a symmetric PSD matrix.

    Eigenvalues down to ``-PSD_RTOL * max(eig)`` are clamped to zero.
    """
    cov = np.asarray(cov, dtype=float)
    scale = np.max(np.abs(cov), axis=(-2, -1), keepdims=True)
    asym = np.max(np.abs(cov - np.swapaxes(cov, -1, -2)), axis=(-2, -1), keepdims=True)
    if np.any(asym > SYMMETRY_RTOL * scale):
        raise NotSymmetric("covariance is not symmetric")
    w, t = np.linalg.eigh(symmetrize(cov))
    top = np.max(w, axis=-1, keepdims=True)
    if np.any(w < -PSD_RTOL * np.maximum(top, 0.0) - np.finfo(float).tiny):
        raise NotPSD("covariance has a negative eigenvalue beyond tolerance")
    return t, np.maximum(w, 0.0)


def _constraint_variance(phi, cov):
    return np.einsum("...i,...ij,...j->...", phi, cov, phi)


def gram_schmidt_rho(T, W, phi, cov):
    """Orthogonal ``rho`` with ``rho W^1/2 T' phi = [sqrt(phi' cov phi), 0, ..., 0]``.

    The first row is the normalised ``W^1/2 T' phi``; the remaining rows come
    from orthonormalising the canonical basis against it (modified
    Gram-Schmidt, two passes), dropping candidates whose residual norm falls
    below ``GS_DROP``.
    """
    T = np.asarray(T, dtype=float)
    W = np.asarray(W, dtype=float)
    phi = np.asarray(phi, dtype=float)
    s2 = _constraint_variance(phi, cov)
    trace = np.trace(cov, axis1=-2, axis2=-1)
    if np.any(s2 <= DEGENERATE_RTOL * trace) or np.any(s2 <= 0):
        raise DegenerateConstraint("constraint direction has (numerically) zero variance")

    v = np.sqrt(W) * np.einsum("...ji,...j->...i", T, phi)
    n = v.shape[-1]
    batch = v.shape[:-1]
    v = v.reshape(-1, n)
    rows = v.shape[0]
    basis = np.zeros((rows, n, n))
    basis[:, 0] = v / np.linalg.norm(v, axis=-1, keepdims=True)
    count = np.ones(rows, dtype=int)
    everyone = np.arange(rows)
    for k in range(n):
        cand = np.zeros((rows, n))
        cand[:, k] = 1.0
        for _ in range(2):
            for j in range(n):
                # unfilled rows of basis are zero and leave cand untouched
                b = basis[:, j]
                cand -= np.sum(b * cand, axis=-1, keepdims=True) * b
        norm = np.linalg.norm(cand, axis=-1)
        take = (norm > GS_DROP) & (count < n)
        if np.any(take):
            basis[everyone[take], count[take]] = cand[take] / norm[take, None]
            count[take] += 1
    return basis.reshape(batch + (n, n))


def transform_constraint(est: StateEstimate, c: LinearConstraint):
    """Decoupled frame and the constraint bounds expressed on ``z[0]``."""
    T, W = jordan_decompose(est.cov)
    rho = gram_schmidt_rho(T, W, c.phi, est.cov)
    s = np.sqrt(_constraint_variance(c.phi, est.cov))
    centre = np.einsum("...i,...i->...", c.phi, est.mean)
    tc = TransformedConstraint(
        GaussianScalar((c.lower.mu - centre) / s, np.asarray(c.lower.sigma) / s),
        GaussianScalar((c.upper.mu - centre) / s, np.asarray(c.upper.sigma) / s),
    )
    return DecoupledFrame(T, W, rho), tc


def inverse_transform(est: StateEstimate, frame: DecoupledFrame, m: ScalarMoments) -> StateEstimate:
    """Map truncated moments of ``z[0]`` (other coordinates untouched N(0, 1)) back."""
    A = frame.inverse_map
    n = A.shape[-1]
    mu = np.asarray(m.mean, dtype=float)
    var = np.asarray(m.variance, dtype=float)
    mean = est.mean + A[..., :, 0] * mu[..., None]
    G = np.broadcast_to(np.eye(n), A.shape).copy()
    G[..., 0, 0] = var
    cov = A @ G @ np.swapaxes(A, -1, -2)
    return StateEstimate(mean, symmetrize(cov))


def _bounds_at(bound: GaussianScalar, shape):
    return GaussianScalar(
        np.broadcast_to(np.asarray(bound.mu, dtype=float), shape),
        np.broadcast_to(np.asarray(bound.sigma, dtype=float), shape),
    )


def _kind_moments(code, lo, hi, warn):
    if code == 1:
        return lower_truncation_moments(lo)
    if code == 2:
        return upper_truncation_moments(hi)
    return interval_truncation_moments(TransformedConstraint(lo, hi), warn=warn)


def _row_moments(tc: TransformedConstraint, kind, warn, on_zero_mass="raise"):
    """Moments for a 1-D batch of transformed constraints of mixed kinds."""
    mean = np.zeros(kind.shape)
    var = np.ones(kind.shape)
    for code in (1, 2, 3):
        sel = np.flatnonzero(kind == code)
        while sel.size:
            lo = GaussianScalar(tc.lower.mu[sel], tc.lower.sigma[sel])
            hi = GaussianScalar(tc.upper.mu[sel], tc.upper.sigma[sel])
            try:
                m = _kind_moments(code, lo, hi, warn)
            except ZeroMass as err:
                bad = getattr(err, "indices", None)
                if bad is not None:
                    err.indices = sel[bad]
                if on_zero_mass == "raise" or bad is None:
                    raise
                for i in err.indices:
                    one = TransformedConstraint(
                        GaussianScalar(tc.lower.mu[i], tc.lower.sigma[i]) if code & 1 else NO_LOWER,
                        GaussianScalar(tc.upper.mu[i], tc.upper.sigma[i]) if code & 2 else NO_UPPER,
                    )
                    mean[i], var[i] = tail_truncation_moments(one)
                sel = np.setdiff1d(sel, err.indices)
                continue
            mean[sel], var[sel] = m.mean, m.variance
            break
    return ScalarMoments(mean, var)


def apply_constraint(est: StateEstimate, c: LinearConstraint, on_degenerate: str = "raise",
                     warn: bool = True, on_zero_mass: str = "raise") -> StateEstimate:
    """Truncate ``est`` with one (possibly two-sided) constraint.

    Parameters
    ----------
    on_degenerate : {"raise", "skip"}
        What to do for batch members whose covariance has no spread along
        ``phi``: raise DegenerateConstraint, or return them unchanged.
    on_zero_mass : {"raise", "tail"}
        What to do when the bounds leave less than ``ZERO_MASS_AREA`` of the
        prior: raise ZeroMass, or truncate anyway using the exact density
        evaluated relative to its peak (see ``tail_truncation_moments``).

    Raises
    ------
    ZeroMass
        With ``indices`` holding the flat batch positions that failed.
    """
    if on_degenerate not in ("raise", "skip"):
        raise ValueError("on_degenerate must be 'raise' or 'skip'")
    if on_zero_mass not in ("raise", "tail"):
        raise ValueError("on_zero_mass must be 'raise' or 'tail'")
    n = est.dim
    batch = est.batch_shape
    mean = est.mean.reshape(-1, n)
    cov = est.cov.reshape(-1, n, n)
    rows = mean.shape[0]
    phi = np.broadcast_to(c.phi, batch + (n,)).reshape(-1, n)
    lower = _bounds_at(c.lower, batch)
    upper = _bounds_at(c.upper, batch)
    lower = GaussianScalar(lower.mu.reshape(-1), lower.sigma.reshape(-1))
    upper = GaussianScalar(upper.mu.reshape(-1), upper.sigma.reshape(-1))
    kind = np.isfinite(lower.mu) * 1 + np.isfinite(upper.mu) * 2

    s2 = _constraint_variance(phi, cov)
    degenerate = (s2 <= DEGENERATE_RTOL * np.trace(cov, axis1=-2, axis2=-1)) | (s2 <= 0)
    if on_degenerate == "raise" and np.any(degenerate & (kind > 0)):
        err = DegenerateConstraint("constraint direction has (numerically) zero variance")
        err.indices = np.flatnonzero(degenerate & (kind > 0))
        raise err
    work = np.flatnonzero((kind > 0) & ~degenerate)
    if work.size == 0:
        return est

    sub = StateEstimate(mean[work], cov[work])
    sub_c = LinearConstraint(
        phi[work],
        GaussianScalar(lower.mu[work], lower.sigma[work]),
        GaussianScalar(upper.mu[work], upper.sigma[work]),
    )
    frame, tc = transform_constraint(sub, sub_c)
    try:
        m = _row_moments(tc, kind[work], warn, on_zero_mass)
    except ZeroMass as err:
        if getattr(err, "indices", None) is not None:
            err.indices = work[err.indices]
        raise
    out = inverse_transform(sub, frame, m)
    new_mean = mean.copy()
    new_cov = cov.copy()
    new_mean[work] = out.mean
    new_cov[work] = out.cov
    return StateEstimate(new_mean.reshape(batch + (n,)), new_cov.reshape(batch + (n, n)))


def truncate_estimate(est: StateEstimate, cs: Sequence[LinearConstraint], on_degenerate: str = "raise",
                      warn: bool = True, on_zero_mass: str = "raise") -> StateEstimate:
    """Apply constraints one after another, in the order given.

    The result generally depends on the order unless the constraints are
    decoupled.  Errors carry the failing position in ``constraint_index``.
    """
    for i, c in enumerate(cs):
        try:
            est = apply_constraint(est, c, on_degenerate=on_degenerate, warn=warn, on_zero_mass=on_zero_mass)
        except GaussConstraintError as err:
            err.constraint_index = i
            raise
    return est
