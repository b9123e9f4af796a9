"""Command line interface.

Subcommands mirror the pipeline: learn a drift model, bound its posterior
std and build the error box, synthesize a certified barrier, simulate the
extracted controller, and plot.  ``reproduce-jet-engine`` chains everything
on the built-in benchmark.

Exit codes: 0 success, 2 infeasible template, 3 solver or verifier budget
exhausted, 4 invalid inputs, 1 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from . import benchmark, plots
from .confidence import ConfidenceBox, build_confidence_box, information_gain_greedy, \
    monte_carlo_containment
from .control import SafeController, gp_mean_system, save_trajectory, simulate_batch
from .dynamics import ControlAffineSystem, ProblemSpec, generate_training_data, \
    jet_engine_problem, jet_engine_system, load_training_set, problem_from_json, \
    save_training_set
from .gp import GPPosterior, IllConditionedError, fit_hyperparameters, fit_posterior, \
    load_model, max_std_bound, save_model
from .synthesis import BarrierTemplate, CegisConfig, SolverBudgetError, VerifierConfig, \
    VerifierInconsistencyError, cegis, load_barrier, save_barrier

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INFEASIBLE = 2
EXIT_BUDGET = 3
EXIT_INVALID = 4


class CliError(Exception):
    """Invalid arguments or inputs; maps to exit code 4."""


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def _write_manifest(command: str, args: argparse.Namespace, inputs: List[Path],
                    outputs: List[Path], elapsed: float, path: Path) -> None:
    doc = {
        "command": command,
        "arguments": {k: v for k, v in vars(args).items() if k != "func"},
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "elapsed_seconds": elapsed,
        "inputs": {str(p): _sha256(p) for p in inputs if Path(p).exists()},
        "outputs": {str(p): _sha256(p) for p in outputs if Path(p).exists()},
    }
    Path(path).write_text(json.dumps(doc, indent=2, default=str) + "\n")


def _parse_floats(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v != ""])
    except ValueError as exc:
        raise CliError(f"could not parse float list {text!r}") from exc


def _parse_confidence(text: str) -> float:
    """Accept a plain float or the complement form '1-1e-10'."""
    try:
        if text.startswith("1-"):
            value = 1.0 - float(text[2:])
        else:
            value = float(text)
    except ValueError as exc:
        raise CliError(f"could not parse confidence {text!r}") from exc
    if not 0.0 < value < 1.0:
        raise CliError(f"confidence must lie in (0, 1), got {value}")
    return value


def _load_problem(spec: str) -> Tuple[ProblemSpec, Optional[ControlAffineSystem]]:
    if spec == "jet-engine":
        return jet_engine_problem(), jet_engine_system()
    path = Path(spec)
    if not path.exists():
        raise CliError(f"problem {spec!r} is neither a file nor a built-in name")
    return problem_from_json(path), None


def _input_matrix(args, problem: ProblemSpec,
                  system: Optional[ControlAffineSystem]) -> np.ndarray:
    if getattr(args, "input_matrix", None):
        vals = _parse_floats(args.input_matrix)
        if vals.size != problem.n * problem.m:
            raise CliError(f"--input-matrix needs {problem.n * problem.m} entries")
        return vals.reshape(problem.n, problem.m)
    if system is not None:
        return system.constant_input_matrix
    raise CliError("a custom problem needs --input-matrix (row-major g entries)")


def _half_widths(args, n_outputs: int) -> np.ndarray:
    if getattr(args, "bound", None):
        doc = json.loads(Path(args.bound).read_text())
        hw = np.array(doc["half_widths"], dtype=float)
    elif getattr(args, "halfwidth", None) is not None:
        hw = _parse_floats(args.halfwidth)
        if hw.size == 1:
            hw = np.full(n_outputs, hw[0])
    else:
        raise CliError("need --bound or --halfwidth for the error box")
    if hw.size != n_outputs:
        raise CliError(f"error box needs {n_outputs} half widths")
    return hw


# ---------------------------------------------------------------------------
# learn
# ---------------------------------------------------------------------------

def cmd_learn(args: argparse.Namespace) -> int:
    t0 = time.time()
    problem, system = _load_problem(args.problem)
    inputs: List[Path] = [] if system is not None else [Path(args.problem)]
    if args.data:
        data = load_training_set(args.data)
        inputs.append(Path(args.data))
    elif args.generate:
        if system is None:
            raise CliError("--generate needs a built-in problem with known dynamics")
        if args.seed is None:
            raise CliError("--generate needs --seed for reproducibility")
        data = generate_training_data(system, problem.state_box, args.generate,
                                      args.noise, args.seed)
    else:
        raise CliError("provide training data via --data or --generate")

    if args.hyperparams == "reference":
        if args.problem != "jet-engine":
            raise CliError("reference hyperparameters exist only for jet-engine")
        kernels = list(benchmark.REFERENCE_KERNELS)
    else:
        kernels, info = fit_hyperparameters(data, seed=args.fit_seed)
        for j, k in enumerate(kernels):
            print(f"output {j + 1}: signal_var={k.signal_var:.6g} "
                  f"lengthscales={np.array2string(k.lengthscales, precision=6)}")
    posterior = fit_posterior(kernels, data, state_box=problem.state_box)
    save_model(posterior, args.out)
    outputs = [Path(args.out)]
    if args.save_data:
        save_training_set(data, args.save_data)
        outputs += [Path(args.save_data), Path(args.save_data).with_suffix(".meta.json")]
    print(f"learned {posterior.n_outputs}-output model from {data.n_samples} samples "
          f"-> {args.out}")
    _write_manifest("learn", args, inputs, outputs, time.time() - t0,
                    Path(str(args.out) + ".manifest.json"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# bound
# ---------------------------------------------------------------------------

def cmd_bound(args: argparse.Namespace) -> int:
    t0 = time.time()
    posterior = load_model(args.model)
    if posterior.state_box is None:
        raise CliError("model carries no state box; re-learn with a problem attached")
    box = posterior.state_box
    bound = max_std_bound(posterior, box, mode=args.mode, per_dim=args.per_dim)
    doc = {
        "rho_bar": bound.values.tolist(),
        "margins": bound.margins.tolist(),
        "mode": bound.mode,
        "resolution": bound.resolution,
    }
    if args.epsilon is not None and args.target_halfwidth is not None:
        raise CliError("--epsilon and --target-halfwidth are mutually exclusive")
    if args.epsilon is not None:
        if args.rkhs_norm_bounds is None:
            raise CliError("--epsilon needs --rkhs-norm-bounds")
        norms = _parse_floats(args.rkhs_norm_bounds)
        if norms.size != posterior.n_outputs:
            raise CliError(f"need {posterior.n_outputs} norm bounds")
        n_obs = 0 if posterior.is_prior else posterior.data.n_samples
        cands = box.grid(args.gamma_per_dim)
        gammas = np.array([information_gain_greedy(k, cands, max(n_obs, 1),
                                                   posterior.noise_std)[0]
                           for k in posterior.kernels])
        cbox = build_confidence_box(bound, norms, gammas, n_obs, args.epsilon)
        doc.update({"epsilon": args.epsilon, "rkhs_norm_bounds": norms.tolist(),
                    "gammas": gammas.tolist(), "betas": cbox.betas.tolist()})
    elif args.target_halfwidth is not None:
        cbox = ConfidenceBox(np.full(posterior.n_outputs, args.target_halfwidth))
    else:
        raise CliError("choose an error box via --epsilon ... or --target-halfwidth")
    doc["half_widths"] = cbox.half_widths.tolist()

    if args.validate:
        if args.trials is None or args.seed is None:
            raise CliError("--validate needs --trials and --seed")
        conf = _parse_confidence(args.confidence)
        if args.validate == "jet-engine":
            est = monte_carlo_containment(posterior, box, cbox.half_widths,
                                          args.trials, args.seed, conf,
                                          drift_fn=jet_engine_system().drift)
        elif args.validate == "posterior-draw":
            est = monte_carlo_containment(posterior, box, cbox.half_widths,
                                          args.trials, args.seed, conf,
                                          mode="posterior-draw",
                                          grid_per_dim=args.draw_per_dim)
        else:
            raise CliError(f"unknown validation target {args.validate!r}")
        doc["containment"] = {
            "mode": args.validate, "successes": est.successes,
            "trials": est.n_trials, "estimate": est.estimate,
            "lower": est.lower, "upper": est.upper,
            "confidence": conf, "seed": args.seed,
        }
        print(f"containment estimate {est.estimate:.6f} "
              f"[{est.lower:.6f}, {est.upper:.6f}] at confidence {conf}")
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    print(f"std bounds {np.array2string(bound.values, precision=6)} "
          f"half widths {np.array2string(cbox.half_widths, precision=6)} -> {args.out}")
    _write_manifest("bound", args, [Path(args.model)], [Path(args.out)],
                    time.time() - t0, Path(str(args.out) + ".manifest.json"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# synthesize
# ---------------------------------------------------------------------------

def cmd_synthesize(args: argparse.Namespace) -> int:
    t0 = time.time()
    problem, system = _load_problem(args.problem)
    posterior = load_model(args.model)
    g = _input_matrix(args, problem, system)
    plant = system if system is not None else ControlAffineSystem(
        problem.n, problem.m, lambda X: np.zeros((X.shape[0], problem.n)), g)
    hw = _half_widths(args, posterior.n_outputs)
    config = CegisConfig(
        margin=args.margin, a_max=args.a_max, max_iterations=args.max_iterations,
        verifier=VerifierConfig(initial_per_dim=args.verifier_resolution))
    template = BarrierTemplate(problem.n, args.degree)
    result = cegis(posterior, plant, problem, template, hw, config)
    for rec in result.history:
        cex = rec.get("counterexample")
        tail = (f" cex {cex['role']} at {np.round(cex['x'], 5).tolist()}"
                if cex else "")
        print(f"iteration {rec['iteration']}: {rec.get('verdict', rec['solver'])}{tail}")
    certificate = {
        "status": result.status,
        "iterations": result.iterations,
        "half_widths": hw.tolist(),
        "verifier_mode": "lipschitz-adaptive",
        "verifier_resolution": args.verifier_resolution,
        "cells_explored": None if result.verification is None
                          else result.verification.cells_explored,
        "max_depth": None if result.verification is None
                     else result.verification.max_depth_reached,
        "a_max": args.a_max,
    }
    if result.candidate is not None:
        save_barrier(result.candidate, args.out, certificate)
        print(f"{result.status} after {result.iterations} iterations -> {args.out}")
    else:
        Path(args.out).write_text(json.dumps({"certificate": certificate}, indent=2) + "\n")
        print(f"{result.status} after {result.iterations} iterations (no candidate)")
    inputs = [Path(args.model)] + ([] if system is not None else [Path(args.problem)])
    if args.bound:
        inputs.append(Path(args.bound))
    _write_manifest("synthesize", args, inputs, [Path(args.out)], time.time() - t0,
                    Path(str(args.out) + ".manifest.json"))
    if result.status == "certified":
        return EXIT_OK
    if result.status == "infeasible-template":
        return EXIT_INFEASIBLE
    return EXIT_BUDGET


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    t0 = time.time()
    problem, system = _load_problem(args.problem)
    posterior = load_model(args.model)
    candidate, certificate = load_barrier(args.barrier)
    status = (certificate or {}).get("status")
    if status != "certified" and not args.allow_uncertified:
        raise CliError(f"barrier status is {status!r}; pass --allow-uncertified to "
                       "simulate anyway")
    g = _input_matrix(args, problem, system)
    if args.plant == "true":
        if system is None:
            raise CliError("--plant true needs a built-in problem with known dynamics")
        plant = system
    else:
        plant = gp_mean_system(posterior, g)
    hw = np.array((certificate or {}).get("half_widths", [])) \
        if not args.halfwidth else _parse_floats(args.halfwidth)
    if hw.size != posterior.n_outputs:
        raise CliError("no usable half widths in the certificate; pass --halfwidth")
    base_system = system if system is not None else plant
    controller = SafeController(candidate, posterior, base_system, problem.inputs, hw)

    if args.x0 is not None:
        X0 = np.vstack([_parse_floats(s) for s in args.x0])
    else:
        X0 = np.vstack([b.grid(args.x0_grid) for b in problem.initial_boxes])
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trajs = simulate_batch(plant, controller, X0, args.horizon, args.step,
                           problem=problem, stop_on_exit=not args.no_stop_on_exit)
    outputs, rows = [], []
    for i, tr in enumerate(trajs):
        path = out_dir / f"trajectory_{i:03d}.csv"
        save_trajectory(tr, problem, path)
        outputs.append(path)
        unsafe = bool(problem.in_unsafe(tr.X).any())
        rows.append({"trajectory": i, "x0": tr.X[0].tolist(),
                     "termination": tr.termination, "steps": tr.n_steps,
                     "entered_unsafe": unsafe, "max_B": float(tr.B.max())})
        print(f"trajectory {i:03d}: {tr.termination} after {tr.n_steps} steps, "
              f"max B {tr.B.max():.4g}, unsafe={unsafe}")
    summary = {"plant": args.plant, "horizon": args.horizon, "step": args.step,
               "n_unsafe": sum(r["entered_unsafe"] for r in rows),
               "trajectories": rows}
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    outputs.append(out_dir / "summary.json")
    _write_manifest("simulate", args,
                    [Path(args.model), Path(args.barrier)],
                    outputs, time.time() - t0, out_dir / "manifest.json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# plot
# ---------------------------------------------------------------------------

def cmd_plot(args: argparse.Namespace) -> int:
    t0 = time.time()
    out = Path(args.out)
    inputs: List[Path] = []
    if args.what == "vector-field":
        if args.model is None:
            raise CliError("vector-field plots need --model")
        posterior = load_model(args.model)
        problem, _ = _load_problem(args.problem)
        plots.vector_field_plot(posterior, problem, out, per_dim=args.per_dim)
        inputs.append(Path(args.model))
    elif args.what == "std-sweep":
        sizes = [int(v) for v in _parse_floats(args.sizes)]
        sweep = benchmark.std_bound_sweep(sizes, seed=args.seed, noise_std=args.noise)
        plots.std_sweep_plot(sweep, out)
    elif args.what == "trajectories":
        if args.model is None or args.barrier is None:
            raise CliError("trajectory plots need --model and --barrier")
        problem, system = _load_problem(args.problem)
        posterior = load_model(args.model)
        candidate, certificate = load_barrier(args.barrier)
        g = _input_matrix(args, problem, system)
        hw = np.array((certificate or {}).get("half_widths", [])) \
            if not args.halfwidth else _parse_floats(args.halfwidth)
        if hw.size != posterior.n_outputs:
            raise CliError("no usable half widths in the certificate; pass --halfwidth")
        plant = system if args.plant == "true" else gp_mean_system(posterior, g)
        if plant is None:
            raise CliError("--plant true needs a built-in problem")
        controller = SafeController(candidate, posterior, system or plant,
                                    problem.inputs, hw)
        X0 = np.vstack([b.grid(args.x0_grid) for b in problem.initial_boxes])
        trajs = simulate_batch(plant, controller, X0, args.horizon, args.step,
                               problem=problem, stop_on_exit=True)
        plots.trajectories_plot(problem, candidate, trajs, out)
        inputs += [Path(args.model), Path(args.barrier)]
    else:
        raise CliError(f"unknown plot kind {args.what!r}")
    print(f"wrote {out} and {out.with_suffix('.csv')}")
    _write_manifest("plot", args, inputs, [out, out.with_suffix(".csv")],
                    time.time() - t0, Path(str(out) + ".manifest.json"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# reproduce-jet-engine
# ---------------------------------------------------------------------------

def cmd_reproduce(args: argparse.Namespace) -> int:
    t0 = time.time()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    posterior, data, system, problem = benchmark.benchmark_model()
    save_training_set(data, out_dir / "training.csv")
    save_model(posterior, out_dir / "model.json")
    print(f"model: {data.n_samples} samples, seed {benchmark.TRAINING_SEED}")

    bound = benchmark.benchmark_std_bound(posterior)
    hw = np.full(2, benchmark.ERROR_HALF_WIDTH)
    est = monte_carlo_containment(posterior, problem.state_box, hw,
                                  args.trials, seed=args.seed, confidence=0.99,
                                  drift_fn=system.drift)
    bound_doc = {"rho_bar": bound.values.tolist(), "margins": bound.margins.tolist(),
                 "mode": bound.mode, "resolution": bound.resolution,
                 "half_widths": hw.tolist(),
                 "containment": {"mode": "jet-engine", "successes": est.successes,
                                 "trials": est.n_trials, "estimate": est.estimate,
                                 "lower": est.lower, "upper": est.upper,
                                 "confidence": 0.99, "seed": args.seed}}
    (out_dir / "bound.json").write_text(json.dumps(bound_doc, indent=2) + "\n")
    print(f"std bound {bound.values.max():.4f}, containment {est.estimate:.4f} "
          f"[{est.lower:.4f}, {est.upper:.4f}]")

    result = benchmark.synthesize_benchmark(posterior, system, problem)
    certificate = {"status": result.status, "iterations": result.iterations,
                   "half_widths": hw.tolist(), "verifier_mode": "lipschitz-adaptive",
                   "verifier_resolution": 16,
                   "cells_explored": None if result.verification is None
                                     else result.verification.cells_explored,
                   "max_depth": None if result.verification is None
                                else result.verification.max_depth_reached,
                   "a_max": 1e4}
    if result.candidate is not None:
        save_barrier(result.candidate, out_dir / "barrier.json", certificate)
    print(f"synthesis: {result.status} after {result.iterations} iterations")
    if result.status != "certified":
        _write_manifest("reproduce-jet-engine", args, [],
                        list(out_dir.glob("*.json")), time.time() - t0,
                        out_dir / "manifest.json")
        return EXIT_INFEASIBLE if result.status == "infeasible-template" else EXIT_BUDGET

    controller = SafeController(result.candidate, posterior, system, problem.inputs, hw)
    X0 = problem.initial_boxes[0].grid(3)
    sim_summary = {}
    all_trajs = {}
    for name, plant in (("true", system),
                        ("mean", gp_mean_system(posterior, system.constant_input_matrix))):
        sub = out_dir / f"trajectories-{name}"
        sub.mkdir(exist_ok=True)
        trajs = simulate_batch(plant, controller, X0, args.horizon, args.step,
                               problem=problem, stop_on_exit=True)
        for i, tr in enumerate(trajs):
            save_trajectory(tr, problem, sub / f"trajectory_{i:03d}.csv")
        n_unsafe = sum(bool(problem.in_unsafe(tr.X).any()) for tr in trajs)
        sim_summary[name] = {"n_trajectories": len(trajs), "n_unsafe": n_unsafe,
                             "max_B": max(float(tr.B.max()) for tr in trajs)}
        all_trajs[name] = trajs
        print(f"simulate ({name} plant): {len(trajs)} runs, {n_unsafe} unsafe entries")

    plots.vector_field_plot(posterior, problem, out_dir / "vector-field.svg")
    sweep = benchmark.std_bound_sweep((5, 10, 20, 35, 50, 100))
    plots.std_sweep_plot(sweep, out_dir / "std-sweep.svg")
    plots.trajectories_plot(problem, result.candidate, all_trajs["true"],
                            out_dir / "trajectories.svg")

    summary = {"rho_bar": bound.values.tolist(),
               "containment": bound_doc["containment"],
               "synthesis": {"status": result.status, "iterations": result.iterations},
               "simulation": sim_summary,
               "std_sweep": {str(k): v.tolist() for k, v in sweep.items()}}
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    outputs = sorted(p for p in out_dir.rglob("*") if p.is_file()
                     and p.name != "manifest.json")
    _write_manifest("reproduce-jet-engine", args, [], outputs, time.time() - t0,
                    out_dir / "manifest.json")
    print(f"wrote {out_dir}/summary.json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpbarrier",
        description="learn drift dynamics, bound the model error, and synthesize "
                    "certified safe controllers")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="fit a GP drift model")
    p.add_argument("--problem", required=True,
                   help="problem JSON path or built-in name (jet-engine)")
    p.add_argument("--data", help="training CSV (with .meta.json sidecar)")
    p.add_argument("--generate", type=int, metavar="N",
                   help="draw N noisy samples from the built-in plant instead")
    p.add_argument("--noise", type=float, default=0.01,
                   help="measurement noise std for --generate")
    p.add_argument("--seed", type=int, help="RNG seed for --generate")
    p.add_argument("--hyperparams", choices=("reference", "fit"), default="fit",
                   help="kernel hyperparameters: built-in reference values or "
                        "a marginal likelihood fit")
    p.add_argument("--fit-seed", type=int, default=0,
                   help="seed for the fit restarts")
    p.add_argument("--save-data", help="also write the training set to this CSV")
    p.add_argument("--out", required=True, help="output model JSON")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("bound", help="bound the posterior std and build the error box")
    p.add_argument("--model", required=True)
    p.add_argument("--mode", choices=("grid", "interval-bnb"), default="grid")
    p.add_argument("--per-dim", type=int, default=201,
                   help="grid resolution per dimension")
    p.add_argument("--epsilon", type=float,
                   help="failure probability for the scaled error box")
    p.add_argument("--rkhs-norm-bounds",
                   help="comma list of RKHS norm bounds, one per output")
    p.add_argument("--gamma-per-dim", type=int, default=25,
                   help="candidate grid resolution for the information gain proxy")
    p.add_argument("--target-halfwidth", type=float,
                   help="fixed half width per output instead of the epsilon route")
    p.add_argument("--validate", choices=("jet-engine", "posterior-draw"),
                   help="Monte-Carlo containment check of the resulting box")
    p.add_argument("--trials", type=int, help="Monte-Carlo trial count")
    p.add_argument("--confidence", default="0.99",
                   help="interval confidence; accepts 0.99 or 1-1e-10")
    p.add_argument("--seed", type=int, help="Monte-Carlo seed")
    p.add_argument("--draw-per-dim", type=int, default=15,
                   help="grid resolution for posterior-draw validation")
    p.add_argument("--out", required=True, help="output bound JSON")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("synthesize", help="run CEGIS for a certified barrier")
    p.add_argument("--problem", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--bound", help="bound JSON providing the error box")
    p.add_argument("--halfwidth", help="comma list or single half width override")
    p.add_argument("--degree", type=int, default=2)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--max-iterations", type=int, default=50)
    p.add_argument("--verifier-resolution", type=int, default=16,
                   help="initial verifier cells per dimension")
    p.add_argument("--a-max", type=float, default=1e6,
                   help="coefficient box for the candidate solver")
    p.add_argument("--input-matrix", help="row-major g entries for custom problems")
    p.add_argument("--out", required=True, help="output barrier JSON")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="closed-loop runs under the safe controller")
    p.add_argument("--problem", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--barrier", required=True)
    p.add_argument("--plant", choices=("true", "mean"), default="true")
    p.add_argument("--x0", action="append",
                   help="start state 'a,b'; repeat for several")
    p.add_argument("--x0-grid", type=int, default=3,
                   help="grid per dimension over each initial box")
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--halfwidth", help="error box override (else from the barrier)")
    p.add_argument("--input-matrix", help="row-major g entries for custom problems")
    p.add_argument("--allow-uncertified", action="store_true",
                   help="simulate even without a certified barrier")
    p.add_argument("--no-stop-on-exit", action="store_true",
                   help="keep integrating after leaving the state box")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plot", help="figures with CSV companions")
    p.add_argument("--what", required=True,
                   choices=("vector-field", "std-sweep", "trajectories"))
    p.add_argument("--problem", default="jet-engine")
    p.add_argument("--model")
    p.add_argument("--barrier")
    p.add_argument("--plant", choices=("true", "mean"), default="true")
    p.add_argument("--per-dim", type=int, default=25)
    p.add_argument("--sizes", default="5,10,20,35,50,100",
                   help="training sizes for std-sweep")
    p.add_argument("--seed", type=int, default=benchmark.TRAINING_SEED)
    p.add_argument("--noise", type=float, default=benchmark.NOISE_STD)
    p.add_argument("--x0-grid", type=int, default=3)
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--halfwidth")
    p.add_argument("--input-matrix")
    p.add_argument("--out", required=True, help="output SVG path")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("reproduce-jet-engine",
                       help="full pipeline on the built-in benchmark")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--trials", type=int, default=200_000,
                   help="Monte-Carlo containment trials")
    p.add_argument("--seed", type=int, default=123)
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--step", type=float, default=1e-3)
    p.set_defaults(func=cmd_reproduce)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, KeyError, OSError, IllConditionedError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except VerifierInconsistencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
