"""Why the truncated estimate should not be fed back for uncertain bounds.

First a scalar estimate repeatedly truncated at x >= 0 with no new
information, then one corridor run traced with and without feedback.
"""
import numpy as np

from gaussconstraint import FeedbackMode, FilterState, GaussianScalar, LinearConstraint, StateEstimate, SystemModel
from gaussconstraint.corridor import ROBOT_B, SimConfig, simulate_run
from gaussconstraint.kalman import constrained_step

model = SystemModel([[1.0]], [[0.0]], [[1.0]], [[0.0]], [[1.0]])
cs = [LinearConstraint([1.0], GaussianScalar(0.0, 0.0))]
for mode in FeedbackMode:
    fs = FilterState.initial(StateEstimate(np.array([0.0]), np.array([[1.0]])))
    rows = []
    for _ in range(6):
        fs = constrained_step(fs, model, [0.0], None, cs, mode)
        rows.append(f"({fs.constrained.mean[0]:.3f}, {fs.constrained.cov[0, 0]:.3f})")
    print(f"{mode.value:>19}: " + " ".join(rows))
print("With feedback the same bound is applied again and again: the mean creeps up and\n"
      "the variance shrinks although nothing new was learned.\n")

for mode in FeedbackMode:
    res = simulate_run(SimConfig(ROBOT_B, 15.0, feedback=mode), run_index=0)
    print(f"Robot B, sigma_s 15 cm, {mode.value}:")
    for m in ("hard", "soft"):
        mean, sd = res.position_band(m)
        outside = np.mean(np.abs(res.truth[:, 0] - mean) > 3 * sd)
        print(f"  {m:>5}: mean band {100 * sd.mean():.2f} cm, truth outside 3 sigma on {100 * outside:.0f}% of steps,"
              f" RMSE {100 * res.rmse[m]:.2f} cm")
