"""Learn control-affine drift with Gaussian processes and synthesize
uncertainty-robust barrier certificates with a verified CEGIS loop."""

from .dynamics import (Box, ControlAffineSystem, ProblemSpec, TrainingSet,
                       finite_difference_measurement, generate_training_data,
                       jet_engine_problem, jet_engine_system, load_training_set,
                       problem_from_json, problem_to_json, rk4_step,
                       save_training_set)
from .gp import (ExtrapolationWarning, GPPosterior, HyperparameterFitError,
                 IllConditionedError, KernelSpec, StdBound, fit_hyperparameters,
                 fit_posterior, kernel_eval, load_model, max_std_bound, save_model)
from .confidence import (ConfidenceBox, ContainmentEstimate, beta_bound,
                         build_confidence_box, clopper_pearson,
                         information_gain_greedy, monte_carlo_containment)
from .synthesis import (BarrierCandidate, BarrierTemplate, CegisConfig,
                        Counterexample, SampleSet, SolveResult, SolverBudgetError,
                        SynthesisResult, VerificationResult, VerifierConfig,
                        VerifierInconsistencyError, basis_eval, basis_gradient,
                        cegis, check_conditions_known_dynamics, encode_feasibility,
                        initial_samples, load_barrier, save_barrier,
                        solve_candidate, verify_candidate)
from .control import (NoSafeInputError, SafeController, Trajectory,
                      barrier_monotonicity_check, check_trajectory_safety,
                      gp_mean_system, load_trajectory, save_trajectory,
                      simulate_batch, simulate_closed_loop)

__version__ = "0.1.0"
