"""Linear time-invariant Kalman filter with truncation of the estimate.

The filter itself is the textbook predict/update pair.  Constraints are never
part of the filter: :func:`constrained_step` truncates the filter output and,
depending on :class:`FeedbackMode`, either keeps that truncated estimate on
the side (the filter keeps running on its own estimate) or feeds it back as
the next prior.

Estimates may be batched along leading axes, as in :mod:`.transform`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, NotPSD, NotSymmetric, SingularInnovation
from .transform import LinearConstraint, StateEstimate, symmetrize, truncate_estimate


class FeedbackMode(enum.Enum):
    NO_FEEDBACK = "no_feedback"
    TRUNCATED_FEEDBACK = "truncated_feedback"


def _check_cov(name, m):
    if np.max(np.abs(m - m.T), initial=0.0) > 1e-12 * max(np.max(np.abs(m), initial=0.0), 1e-300):
        raise NotSymmetric(f"{name} is not symmetric")
    w = np.linalg.eigvalsh(symmetrize(m))
    if w.size and w.min() < -1e-12 * max(w.max(), 0.0):
        raise NotPSD(f"{name} is not positive semidefinite")


@dataclass(frozen=True)
class SystemModel:
    """``x(k) = F x(k-1) + G u(k) + w``, ``y(k) = H x(k) + v`` with cov(w)=Q, cov(v)=R."""

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        for name in ("F", "G", "H", "Q", "R"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        n = self.F.shape[0]
        p = self.H.shape[0]
        if self.F.shape != (n, n) or self.G.shape[0] != n or self.H.shape[1] != n:
            raise DimensionMismatch("F, G, H shapes are inconsistent")
        if self.Q.shape != (n, n) or self.R.shape != (p, p):
            raise DimensionMismatch("Q must be n x n and R p x p")
        _check_cov("Q", self.Q)
        _check_cov("R", self.R)

    @property
    def n(self):
        return self.F.shape[0]

    def with_noise(self, R=None, Q=None):
        return replace(self, R=self.R if R is None else R, Q=self.Q if Q is None else Q)


@dataclass(frozen=True)
class FilterState:
    """The filter's own estimate, its truncated counterpart and the step count."""

    unconstrained: StateEstimate
    constrained: StateEstimate
    step_index: int = 0

    @classmethod
    def initial(cls, est: StateEstimate):
        return cls(est, est, 0)


def predict(est: StateEstimate, model: SystemModel, u) -> StateEstimate:
    u = np.asarray(u, dtype=float)
    if est.dim != model.n or u.shape[-1:] != (model.G.shape[1],):
        raise DimensionMismatch("state or input dimension does not match the model")
    mean = est.mean @ model.F.T + u @ model.G.T
    cov = model.F @ est.cov @ model.F.T + model.Q
    return StateEstimate(mean, symmetrize(cov))


def update(est: StateEstimate, model: SystemModel, y, active=None) -> StateEstimate:
    """Measurement update; batch members with ``active`` False are left as they are.

    The gain comes from a Cholesky-checked solve with the innovation
    covariance and the covariance is updated in Joseph form, which stays PSD
    even with a near-zero measurement noise.
    """
    y = np.asarray(y, dtype=float)
    H, R = model.H, model.R
    if est.dim != model.n or y.shape[-1:] != (H.shape[0],):
        raise DimensionMismatch("state or measurement dimension does not match the model")
    if active is not None:
        active = np.broadcast_to(np.asarray(active, dtype=bool), est.batch_shape)
        if not np.any(active):
            return est
        if not np.all(active):
            sub = update(est.take(active), model, np.broadcast_to(y, est.batch_shape + y.shape[-1:])[active])
            mean = est.mean.copy()
            cov = est.cov.copy()
            mean[active] = sub.mean
            cov[active] = sub.cov
            return StateEstimate(mean, cov)
    P = est.cov
    S = H @ P @ H.T + R
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovation("innovation covariance is not positive definite") from exc
    PHt = P @ H.T
    K = np.swapaxes(np.linalg.solve(S, np.swapaxes(PHt, -1, -2)), -1, -2)
    innov = y - est.mean @ H.T
    mean = est.mean + np.einsum("...ij,...j->...i", K, innov)
    IKH = np.eye(model.n) - K @ H
    cov = symmetrize(IKH @ P @ np.swapaxes(IKH, -1, -2) + K @ R @ np.swapaxes(K, -1, -2))
    return StateEstimate(mean, cov)


def kf_predict(fs: FilterState, model: SystemModel, u, mode: FeedbackMode = FeedbackMode.NO_FEEDBACK):
    """Predict from the estimate the feedback mode designates as the prior."""
    prior = fs.constrained if mode is FeedbackMode.TRUNCATED_FEEDBACK else fs.unconstrained
    pred = predict(prior, model, u)
    return FilterState(pred, pred, fs.step_index + 1)


def kf_update(fs: FilterState, model: SystemModel, y, active=None) -> FilterState:
    upd = update(fs.unconstrained, model, y, active)
    return FilterState(upd, upd, fs.step_index)


def constrained_step(fs: FilterState, model: SystemModel, u, y=None, cs: Sequence[LinearConstraint] = (),
                     mode: FeedbackMode = FeedbackMode.NO_FEEDBACK, on_degenerate: str = "raise") -> FilterState:
    """One predict / update / truncate cycle.

    ``y`` may be None (no update), one measurement (shaped like the batch
    of estimates), or a stack of those with one extra leading axis, applied
    as successive updates.
    """
    fs = kf_predict(fs, model, u, mode)
    if y is not None:
        ys = np.asarray(y, dtype=float)
        if ys.ndim == fs.unconstrained.mean.ndim:
            ys = ys[None]
        for row in ys:
            fs = kf_update(fs, model, row)
    constrained = truncate_estimate(fs.unconstrained, cs, on_degenerate=on_degenerate)
    return FilterState(fs.unconstrained, constrained, fs.step_index)
