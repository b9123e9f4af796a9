"""Close the loop: drive the plant with the minimally invasive safe policy.

The controller evaluates the worst-case decrease condition over the error
box for each admissible input, in declared order, and applies the first
one that passes. Rolling out from a grid of initial states shows every
trajectory sliding along the zero level set and out through the safe part
of the operating box boundary, with the barrier value never increasing.
"""

from pathlib import Path

import numpy as np

from gpbarrier import benchmark
from gpbarrier.control import (SafeController, barrier_monotonicity_check,
                               gp_mean_system, simulate_batch)
from gpbarrier.plots import trajectories_plot

OUT = Path(__file__).resolve().parent / "out"
OUT.mkdir(exist_ok=True)

posterior, data, system, problem = benchmark.benchmark_model()
result = benchmark.synthesize_benchmark(posterior, system, problem)
assert result.status == "certified", result.status

hw = [benchmark.ERROR_HALF_WIDTH] * 2
controller = SafeController(result.candidate, posterior, system,
                            problem.inputs, hw)
X0 = problem.initial_boxes[0].grid(3)

for plant_name, plant in (("true", system),
                          ("gp-mean", gp_mean_system(
                              posterior, system.constant_input_matrix))):
    trajs = simulate_batch(plant, controller, X0, 10.0, 1e-3,
                           problem=problem, stop_on_exit=True)
    unsafe = sum(problem.in_unsafe(tr.X).any() for tr in trajs)
    worst_rise = max(barrier_monotonicity_check(tr)["max_step_increase"]
                     for tr in trajs)
    steps = [tr.n_steps for tr in trajs]
    print(f"{plant_name} plant: {len(trajs)} rollouts, unsafe entries "
          f"{unsafe}, steps {min(steps)}..{max(steps)}, worst barrier step "
          f"increase {worst_rise:.3g}")
    if plant_name == "true":
        trajectories_plot(problem, result.candidate, trajs,
                          OUT / "rollouts.svg")

print(f"figure written to {OUT / 'rollouts.svg'}")
