"""Full pipeline on a hand-built scalar problem, no benchmark helpers.

Plant: dx/dt = -0.4 x + u with u restricted to {0, -0.5, 0.5}, declared
with u = 0 first so the controller stays passive whenever the certificate
allows it. We only observe noisy drift measurements, learn the model,
bound it, synthesize a linear barrier keeping [0.55, 1] unreachable from
[-0.2, 0.2], and roll the loop forward. The certificate only speaks for
the operating box, so the rollout stops the moment the state leaves it;
the point of the exercise is that it can never leave through the unsafe
side.
"""

import numpy as np

from gpbarrier import (Box, ControlAffineSystem, ProblemSpec,
                       generate_training_data)
from gpbarrier.control import SafeController, simulate_closed_loop
from gpbarrier.gp import fit_hyperparameters, fit_posterior, max_std_bound
from gpbarrier.synthesis import (BarrierTemplate, CegisConfig, cegis,
                                 check_conditions_known_dynamics)

g = np.array([[1.0]])
system = ControlAffineSystem(1, 1, lambda X: -0.4 * X, g)
problem = ProblemSpec(
    state_box=Box([-1.0], [1.0]),
    initial_boxes=[Box([-0.2], [0.2])],
    unsafe_boxes=[Box([0.55], [1.0])],
    inputs=np.array([[0.0], [-0.5], [0.5]]),
    name="scalar-demo",
)

data = generate_training_data(system, problem.state_box, 25, 0.02, seed=4)
kernels, info = fit_hyperparameters(data, seed=0)
posterior = fit_posterior(kernels, data, state_box=problem.state_box)
print(f"fitted kernel: signal var {kernels[0].signal_var:.4f}, "
      f"lengthscale {kernels[0].lengthscales[0]:.4f} "
      f"(nll {info['nll'][0]:.2f})")

bound = max_std_bound(posterior, problem.state_box, per_dim=401)
hw = np.array([2.0 * bound.values[0]])
print(f"std bound {bound.values[0]:.5f} -> error half width {hw[0]:.5f}")

result = cegis(posterior, system, problem, BarrierTemplate(1, 1), hw,
               CegisConfig(a_max=100.0))
print(f"synthesis: {result.status} after {result.iterations} iterations")
a = result.candidate.coefficients
print(f"barrier B(x) = {a[0]:+.4f} {a[1]:+.4f} x, "
      f"margin {result.candidate.margin:.3g}")

out = check_conditions_known_dynamics(
    result.candidate, lambda X: -0.4 * X, g, problem, hw, per_dim=1000)
print(f"true-dynamics check: init max {out['init_max']:.4g}, "
      f"unsafe min {out['unsafe_min']:.4g}, flow max {out['flow_max']:.4g}")

controller = SafeController(result.candidate, posterior, system,
                            problem.inputs, hw)
traj = simulate_closed_loop(system, controller, np.array([0.2]), 20.0, 1e-3,
                            problem=problem, stop_on_exit=True)
entered_unsafe = bool(problem.in_unsafe(traj.X).any())
print(f"rollout from x0 = 0.2: {traj.termination} after {traj.n_steps} "
      f"steps, final x = {traj.X[-1, 0]:.4f}, max B = {traj.B.max():.4f}, "
      f"entered unsafe region: {entered_unsafe}")
