"""Robot-in-a-corridor benchmark for soft-constrained Kalman filtering.

A robot drives along a 10 m corridor past binary position sensors placed at
1 m intervals.  Each sensor reports which side of its set-point the robot is
on, but the set-point is uncertain: it is drawn once per run from
``N(nominal, sigma_s^2)`` and then stays fixed.  A sensor changing its reading
is used as a position measurement (value: the nominal position, variance
``sigma_s^2``); between changes the two sensors around the robot bound its
position.  Three estimators share the same filter input:

``unconstrained``
    the Kalman filter alone;
``hard``
    the filter output truncated with the bounds treated as exact;
``soft``
    the filter output truncated with Gaussian-distributed bounds.

All runs of one configuration are simulated in lockstep on batched arrays.
Run ``r`` of seed ``s`` draws all its randomness from its own PCG64 stream
seeded by ``SeedSequence(s, spawn_key=(r,))``, in a fixed order (initial
velocity, per-step accelerations, sensor set-points), so the same run sees
the same robot and sensors whatever the batch, robot noise or ``sigma_s``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, GaussConstraintError, NonTermination
from .kalman import FeedbackMode, SystemModel, predict, update
from .scalar_gauss import GaussianScalar
from .transform import LinearConstraint, StateEstimate, apply_constraint

CM = 0.01
METHODS = ("unconstrained", "hard", "soft")
SIGMA_S_GRID_CM = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
#: Floor on the measurement standard deviation (m) so a zero sigma_s keeps R positive definite.
MEASUREMENT_SIGMA_FLOOR = 1e-9
#: A trajectory that has not reached the far wall after this many nominal durations is an error.
NON_TERMINATION_FACTOR = 10
_PHI = np.array([1.0, 0.0])


@dataclass(frozen=True)
class RobotProfile:
    """Motion profile and motion noise of one robot type (cm and seconds).

    ``accel_phases`` is a sequence of ``(duration_s, accel_cm_s2)``; a
    duration of None means "until the far wall".
    """

    name: str
    sigma_a: float
    sigma_v: float
    accel_phases: tuple = ((20.0, 1.0), (20.0, -1.0), (None, 1.0))
    v0: float = 10.0

    def __post_init__(self):
        if self.sigma_a < 0 or self.sigma_v < 0:
            raise DomainError("robot noise levels must be nonnegative")
        if not self.accel_phases:
            raise DomainError("robot needs at least one acceleration phase")


ROBOT_A = RobotProfile("A", sigma_a=1.0, sigma_v=3.0)
ROBOT_B = RobotProfile("B", sigma_a=0.5, sigma_v=1.5)
ROBOTS = {"A": ROBOT_A, "B": ROBOT_B}


@dataclass(frozen=True)
class SensorBank:
    """Nominal sensor positions (m), set-point deviation (cm) and sampled set-points (m)."""

    nominal_positions: tuple = tuple(float(i) for i in range(1, 10))
    sigma_s: float = 0.0
    sampled_setpoints: Optional[np.ndarray] = None

    def __post_init__(self):
        nominal = np.asarray(self.nominal_positions, dtype=float)
        if np.any(np.diff(nominal) <= 0):
            raise DomainError("nominal sensor positions must be strictly increasing")
        if self.sigma_s < 0:
            raise DomainError("sigma_s must be nonnegative")
        if self.sampled_setpoints is None:
            object.__setattr__(self, "sampled_setpoints", nominal.copy())

    @property
    def nominal(self) -> np.ndarray:
        return np.asarray(self.nominal_positions, dtype=float)

    @property
    def sigma_m(self) -> float:
        return self.sigma_s * CM

    def resample(self, rng: np.random.Generator) -> "SensorBank":
        z = rng.standard_normal(len(self.nominal_positions))
        return SensorBank(self.nominal_positions, self.sigma_s, self.nominal + self.sigma_m * z)


@dataclass(frozen=True)
class SimConfig:
    robot: RobotProfile
    sigma_s: float
    n_runs: int = 200
    dt: float = 0.1
    seed: int = 0
    feedback: FeedbackMode = FeedbackMode.NO_FEEDBACK
    corridor_length: float = 10.0
    nominal_positions: tuple = tuple(float(i) for i in range(1, 10))

    def __post_init__(self):
        if self.n_runs < 1:
            raise DomainError("n_runs must be at least 1")
        if not self.dt > 0:
            raise DomainError("dt must be positive")
        if self.sigma_s < 0:
            raise DomainError("sigma_s must be nonnegative")


@dataclass
class RunResult:
    """One simulated run; arrays are indexed by step, step 0 being the initial state."""

    times: np.ndarray
    truth: np.ndarray
    means: dict
    covs: dict
    rmse: dict
    setpoints: np.ndarray

    def position_band(self, method: str):
        """Mean position and its standard deviation per step."""
        return self.means[method][:, 0], np.sqrt(np.maximum(self.covs[method][:, 0, 0], 0.0))


@dataclass
class SweepResult:
    """Monte Carlo summary for one robot and one sigma_s."""

    robot: str
    sigma_s: float
    n_runs: int
    seed: int
    feedback: FeedbackMode
    rmse: dict
    stderr: dict
    per_run: dict = field(repr=False, default_factory=dict)

    def improvement(self, base: str, method: str) -> float:
        """Percentage reduction of RMSE of ``method`` relative to ``base``."""
        return 100.0 * (self.rmse[base] - self.rmse[method]) / self.rmse[base]


def run_rng(seed: int, run_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(run_index,))))


def corridor_model(dt: float, sigma_a: float, sigma_s: float) -> SystemModel:
    """Constant-acceleration-input model; sigma_a in cm/s^2, sigma_s in cm."""
    F = np.array([[1.0, dt], [0.0, 1.0]])
    G = np.array([[0.5 * dt * dt], [dt]])
    Q = G @ G.T * (sigma_a * CM) ** 2
    r = max(sigma_s * CM, MEASUREMENT_SIGMA_FLOOR)
    return SystemModel(F, G, np.array([[1.0, 0.0]]), Q, np.array([[r * r]]))


def control_schedule(profile: RobotProfile, dt: float, n_steps: int) -> np.ndarray:
    """Commanded acceleration (m/s^2) applied over each of ``n_steps`` steps."""
    u = np.empty(n_steps)
    start = 0
    for duration, accel in profile.accel_phases:
        stop = n_steps if duration is None else min(n_steps, start + int(round(duration / dt)))
        u[start:stop] = accel * CM
        start = stop
        if start >= n_steps:
            break
    u[start:] = profile.accel_phases[-1][1] * CM
    return u


def nominal_steps(profile: RobotProfile, dt: float, length: float = 10.0) -> int:
    """Number of steps the noiseless robot takes before reaching the far wall."""
    quiet = RobotProfile(profile.name, 0.0, 0.0, profile.accel_phases, profile.v0)
    guess = 1
    while True:
        guess *= 2
        states, n = _propagate(quiet, dt, np.zeros(1), np.zeros((1, guess)), length, check=False)
        if n[0] < guess:
            return int(n[0])
        finite = sum(int(round(d / dt)) for d, _ in profile.accel_phases if d is not None)
        final_accel = profile.accel_phases[-1][1]
        if (guess >= finite and final_accel <= 0 and states[0, -1, 1] <= 0) or guess > 1 << 24:
            raise NonTermination("noiseless robot never reaches the far wall")


def _max_steps(profile, dt, length):
    return NON_TERMINATION_FACTOR * nominal_steps(profile, dt, length)


def _propagate(profile, dt, z_v, z_a, length, check=True):
    """Propagate a batch of robots; returns states (R, K+1, 2) and the number of
    steps each takes before its position reaches ``length``."""
    runs, horizon = z_a.shape
    F = np.array([[1.0, dt], [0.0, 1.0]])
    G = np.array([0.5 * dt * dt, dt])
    u = control_schedule(profile, dt, horizon)
    states = np.zeros((runs, horizon + 1, 2))
    states[:, 0, 1] = (profile.v0 + profile.sigma_v * z_v) * CM
    n_steps = np.full(runs, horizon)
    running = np.ones(runs, dtype=bool)
    sigma_a = profile.sigma_a * CM
    for k in range(1, horizon + 1):
        accel = u[k - 1] + sigma_a * z_a[:, k - 1]
        states[:, k] = states[:, k - 1] @ F.T + accel[:, None] * G
        hit = running & (states[:, k, 0] >= length)
        n_steps[hit] = k - 1
        running &= ~hit
        if not running.any():
            return states[:, : k + 1], n_steps
    if check:
        raise NonTermination(f"robot did not reach the far wall within {horizon} steps")
    return states, n_steps


def generate_trajectory(profile: RobotProfile, dt: float, rng: np.random.Generator,
                        length: float = 10.0) -> np.ndarray:
    """Sampled ``(position, velocity)`` per step, stopping before the far wall.

    Draws one initial-velocity deviate and then a fixed-length block of
    acceleration deviates from ``rng``.
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    horizon = _max_steps(profile, dt, length)
    z_v = np.array([rng.standard_normal()])
    z_a = rng.standard_normal((1, horizon))
    states, n = _propagate(profile, dt, z_v, z_a, length)
    return states[0, : n[0] + 1]


def sensor_events(traj: np.ndarray, bank: SensorBank):
    """Reading changes as ``(step, sensor_number, change)`` tuples.

    Sensors are numbered from 1 at the start wall; ``change`` is +1 when the
    robot moves past the set-point and -1 when it moves back.  Changes within
    one step are listed in ascending sensor order.
    """
    pos = np.asarray(traj)[:, 0]
    readings = pos[:, None] >= np.asarray(bank.sampled_setpoints)[None, :]
    events = []
    for k in range(1, len(pos)):
        for j in np.flatnonzero(readings[k] != readings[k - 1]):
            events.append((k, int(j) + 1, 1 if readings[k, j] else -1))
    return events


def segment_after(segment: int, sensor_number: int, change: int) -> int:
    """Index of the last sensor passed after a reading change (0: none)."""
    return sensor_number if change > 0 else sensor_number - 1


def active_constraints(last_fired: Optional[int], bank: SensorBank, corridor_length: float = 10.0,
                       hard: bool = False) -> list:
    """Two-sided position constraint between the sensors around the robot.

    ``last_fired`` is the number of the last sensor the robot is past (None
    or 0 before the first one).  Walls are hard bounds; sensor bounds carry
    ``bank.sigma_s`` unless ``hard`` is set.
    """
    seg = last_fired or 0
    nominal = bank.nominal
    sigma = 0.0 if hard else bank.sigma_m
    lower = GaussianScalar(0.0, 0.0) if seg == 0 else GaussianScalar(nominal[seg - 1], sigma)
    upper = GaussianScalar(corridor_length, 0.0) if seg >= len(nominal) else GaussianScalar(nominal[seg], sigma)
    return [LinearConstraint(_PHI, lower, upper)]


def _batch_bounds(segment, nominal, sigma, length):
    n = len(nominal)
    padded_lo = np.concatenate(([0.0], nominal))
    padded_hi = np.concatenate((nominal, [length]))
    lo_sigma = np.where(segment == 0, 0.0, sigma)
    hi_sigma = np.where(segment == n, 0.0, sigma)
    return (GaussianScalar(padded_lo[segment], lo_sigma), GaussianScalar(padded_hi[segment], hi_sigma))


def _truncate_rows(est, rows, lower, upper):
    sub = est.take(rows)
    c = LinearConstraint(_PHI, GaussianScalar(lower.mu[rows], lower.sigma[rows]),
                         GaussianScalar(upper.mu[rows], upper.sigma[rows]))
    out = apply_constraint(sub, c, on_degenerate="skip", warn=False, on_zero_mass="tail")
    mean = est.mean.copy()
    cov = est.cov.copy()
    mean[rows] = out.mean
    cov[rows] = out.cov
    return StateEstimate(mean, cov)


def _simulate(cfg: SimConfig, run_indices: Sequence[int], record: bool = False):
    robot = cfg.robot
    dt, length = cfg.dt, cfg.corridor_length
    nominal = np.asarray(cfg.nominal_positions, dtype=float)
    n_sensors = len(nominal)
    sigma_s_m = cfg.sigma_s * CM
    runs = len(run_indices)
    horizon = _max_steps(robot, dt, length)

    z_v = np.empty(runs)
    z_a = np.empty((runs, horizon))
    z_s = np.empty((runs, n_sensors))
    for i, r in enumerate(run_indices):
        rng = run_rng(cfg.seed, r)
        z_v[i] = rng.standard_normal()
        z_a[i] = rng.standard_normal(horizon)
        z_s[i] = rng.standard_normal(n_sensors)
    states, n_steps = _propagate(robot, dt, z_v, z_a, length)
    setpoints = nominal + sigma_s_m * z_s
    ctrl = control_schedule(robot, dt, states.shape[1])

    model = corridor_model(dt, robot.sigma_a, cfg.sigma_s)
    init = StateEstimate(
        np.tile([0.0, robot.v0 * CM], (runs, 1)),
        np.tile(np.diag([0.0, (robot.sigma_v * CM) ** 2]), (runs, 1, 1)),
    )
    feedback = cfg.feedback is FeedbackMode.TRUNCATED_FEEDBACK
    # with feedback every method runs its own filter; without, all share one
    filters = {m: init for m in (METHODS if feedback else ("unconstrained",))}
    current = {m: init for m in METHODS}
    segment = np.zeros(runs, dtype=int)
    readings = states[:, 0, 0, None] >= setpoints
    sq_err = {m: np.zeros(runs) for m in METHODS}
    last = int(n_steps.max())
    if record:
        rec_mean = {m: np.zeros((runs, last + 1, 2)) for m in METHODS}
        rec_cov = {m: np.zeros((runs, last + 1, 2, 2)) for m in METHODS}
        for m in METHODS:
            rec_mean[m][:, 0] = init.mean
            rec_cov[m][:, 0] = init.cov

    for k in range(1, last + 1):
        active = n_steps >= k
        rows = np.flatnonzero(active)
        u = ctrl[k - 1 : k]
        for m in filters:
            filters[m] = predict(filters[m], model, u)

        pos = states[:, k, 0]
        now = pos[:, None] >= setpoints
        changed = (now != readings) & active[:, None]
        for j in np.flatnonzero(changed.any(axis=0)):
            hit = changed[:, j]
            for m in filters:
                filters[m] = update(filters[m], model, [nominal[j]], active=hit)
            segment[hit] = np.where(now[hit, j], j + 1, j)
        readings = now

        soft_lo, soft_hi = _batch_bounds(segment, nominal, sigma_s_m, length)
        hard_lo, hard_hi = _batch_bounds(segment, nominal, 0.0, length)
        shared = filters["unconstrained"]
        current["unconstrained"] = shared
        for m, (lo, hi) in (("hard", (hard_lo, hard_hi)), ("soft", (soft_lo, soft_hi))):
            base = filters[m] if feedback else shared
            try:
                out = _truncate_rows(base, rows, lo, hi)
            except GaussConstraintError as err:
                bad = getattr(err, "indices", None)
                if bad is not None and len(bad):
                    err.run_index = int(run_indices[rows[bad[0]]])
                raise
            current[m] = out
            if feedback:
                filters[m] = out

        for m in METHODS:
            err = current[m].mean[:, 0] - pos
            sq_err[m] += np.where(active, err * err, 0.0)
            if record:
                rec_mean[m][:, k] = current[m].mean
                rec_cov[m][:, k] = current[m].cov

    rmse = {m: np.sqrt(sq_err[m] / np.maximum(n_steps, 1)) for m in METHODS}
    if not record:
        return rmse
    return rmse, states, n_steps, setpoints, rec_mean, rec_cov


def simulate_run(cfg: SimConfig, run_index: int = 0) -> RunResult:
    """Full per-step record of one run of ``cfg``."""
    rmse, states, n_steps, setpoints, means, covs = _simulate(cfg, [run_index], record=True)
    n = int(n_steps[0])
    return RunResult(
        times=np.arange(n + 1) * cfg.dt,
        truth=states[0, : n + 1],
        means={m: means[m][0, : n + 1] for m in METHODS},
        covs={m: covs[m][0, : n + 1] for m in METHODS},
        rmse={m: float(rmse[m][0]) for m in METHODS},
        setpoints=setpoints[0],
    )


def run_experiment(cfg: SimConfig) -> SweepResult:
    """Mean time-averaged position RMSE (m) of each method over ``cfg.n_runs`` runs."""
    per_run = _simulate(cfg, list(range(cfg.n_runs)))
    n = cfg.n_runs
    return SweepResult(
        robot=cfg.robot.name,
        sigma_s=cfg.sigma_s,
        n_runs=n,
        seed=cfg.seed,
        feedback=cfg.feedback,
        rmse={m: float(np.mean(v)) for m, v in per_run.items()},
        stderr={m: float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else 0.0 for m, v in per_run.items()},
        per_run=per_run,
    )


def sweep(robot: RobotProfile, sigmas_cm: Sequence[float] = SIGMA_S_GRID_CM, n_runs: int = 200,
          seed: int = 0, feedback: FeedbackMode = FeedbackMode.NO_FEEDBACK, dt: float = 0.1) -> list:
    return [run_experiment(SimConfig(robot, s, n_runs, dt, seed, feedback)) for s in sigmas_cm]
