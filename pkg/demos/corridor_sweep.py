"""Monte Carlo comparison of the three corridor estimators.

Usage: python demos/corridor_sweep.py [runs]   (default 200)
"""
import sys

from gaussconstraint.corridor import ROBOT_A, ROBOT_B, SIGMA_S_GRID_CM, sweep

runs = int(sys.argv[1]) if len(sys.argv) > 1 else 200
for robot in (ROBOT_A, ROBOT_B):
    print(f"Robot {robot.name} (sigma_a {robot.sigma_a} cm/s^2, sigma_v {robot.sigma_v} cm/s), {runs} runs")
    print(f"{'sigma_s':>8} {'unconstr':>9} {'hard':>9} {'soft':>9} {'soft vs unc':>12} {'soft vs hard':>13}")
    for r in sweep(robot, SIGMA_S_GRID_CM, n_runs=runs, seed=0):
        cm = {m: 100 * v for m, v in r.rmse.items()}
        print(f"{r.sigma_s:8.0f} {cm['unconstrained']:9.3f} {cm['hard']:9.3f} {cm['soft']:9.3f}"
              f" {r.improvement('unconstrained', 'soft'):11.1f}% {r.improvement('hard', 'soft'):12.1f}%")
    print("RMSE in cm.\n")
