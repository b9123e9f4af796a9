"""Safe controller extraction and closed-loop simulation.

The controller scans the admissible inputs in their declared order and picks
the first one whose barrier decrease condition is nonpositive, either against
the worst vertex of the error box (default) or a fixed error vector.
Simulation is fixed-step RK4 with sample-and-hold inputs; a lockstep batch
variant advances many trajectories at once with identical arithmetic.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from .dynamics import ControlAffineSystem, ProblemSpec, rk4_step
from .gp import GPPosterior
from .synthesis import BarrierCandidate

__all__ = [
    "SafeController",
    "Trajectory",
    "NoSafeInputError",
    "gp_mean_system",
    "simulate_closed_loop",
    "simulate_batch",
    "check_trajectory_safety",
    "barrier_monotonicity_check",
    "save_trajectory",
    "load_trajectory",
]


class NoSafeInputError(Exception):
    """No admissible input satisfied the decrease condition at some state."""

    def __init__(self, x: np.ndarray, condition_values: np.ndarray,
                 trajectory: Optional["Trajectory"] = None):
        self.x = np.asarray(x, dtype=float)
        self.condition_values = np.asarray(condition_values, dtype=float)
        self.trajectory = trajectory
        super().__init__(
            f"no admissible input is safe at {self.x.tolist()}; "
            f"best condition value {self.condition_values.min():.6g}")


def gp_mean_system(posterior: GPPosterior, input_matrix: np.ndarray,
                   name: str = "gp-mean") -> ControlAffineSystem:
    """Plant whose drift is the posterior mean; used as the nominal model."""
    n = posterior.n_outputs
    return ControlAffineSystem(n, np.asarray(input_matrix).shape[1],
                               lambda X: posterior.mean(X), input_matrix, name=name)


class SafeController:
    """Min-index safe input selection for a certified barrier.

    mode "worst-case" guards against every vertex of the error box (the
    condition adds sum_e |dB/dx_e| * half_width_e); mode "fixed" uses one
    given error vector instead.
    """

    def __init__(self, candidate: BarrierCandidate, posterior: GPPosterior,
                 system: ControlAffineSystem, inputs: np.ndarray,
                 half_widths: Sequence[float], mode: str = "worst-case",
                 fixed_error: Optional[Sequence[float]] = None,
                 select_tol: float = 1e-9):
        if mode not in ("worst-case", "fixed"):
            raise ValueError("mode must be 'worst-case' or 'fixed'")
        if mode == "fixed":
            if fixed_error is None:
                raise ValueError("fixed mode needs an error vector")
            self.fixed_error = np.asarray(fixed_error, dtype=float)
        else:
            self.fixed_error = None
        self.candidate = candidate
        self.posterior = posterior
        self.system = system
        self.inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        self.half_widths = np.asarray(half_widths, dtype=float)
        self.mode = mode
        self.select_tol = float(select_tol)
        self._gU = self.inputs @ system.constant_input_matrix.T

    def condition_values(self, X: np.ndarray) -> np.ndarray:
        """Decrease condition for every admissible input, shape (B, K)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        G = np.atleast_2d(self.candidate.gradient(X))
        mu = np.atleast_2d(self.posterior.mean(X))
        if self.mode == "worst-case":
            base = np.einsum("be,be->b", G, mu) + np.abs(G) @ self.half_widths
        else:
            base = np.einsum("be,be->b", G, mu + self.fixed_error)
        return base[:, None] + G @ self._gU.T

    def select_batch(self, X: np.ndarray):
        """Vectorized selection: returns (input indices, ok mask, values)."""
        vals = self.condition_values(X)
        safe = vals <= self.select_tol
        ok = safe.any(axis=1)
        idx = np.argmax(safe, axis=1)
        return idx, ok, vals

    def select_input(self, x: np.ndarray) -> np.ndarray:
        """First admissible input with a nonpositive decrease condition."""
        idx, ok, vals = self.select_batch(np.asarray(x, dtype=float)[None, :])
        if not ok[0]:
            raise NoSafeInputError(x, vals[0])
        return self.inputs[idx[0]]


@dataclasses.dataclass(frozen=True)
class Trajectory:
    """Sampled closed-loop run: states at t, held inputs over each step,
    barrier values, and how the run ended."""

    t: np.ndarray
    X: np.ndarray
    U: np.ndarray
    B: np.ndarray
    termination: str  # "completed", "left-state-box", or "no-safe-input"

    def __post_init__(self):
        for name in ("t", "X", "U", "B"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.X.shape[0] != self.t.shape[0] or self.B.shape[0] != self.t.shape[0]:
            raise ValueError("t, X, and B must have one row per sample instant")
        if self.U.shape[0] != max(self.t.shape[0] - 1, 0):
            raise ValueError("U must have one row per step")

    @property
    def n_steps(self) -> int:
        return self.U.shape[0]


def simulate_batch(plant: ControlAffineSystem, controller: SafeController,
                   X0: np.ndarray, horizon: float, step: float,
                   problem: Optional[ProblemSpec] = None,
                   stop_on_exit: bool = False) -> List[Trajectory]:
    """Advance many closed-loop trajectories in lockstep.

    Per step and per still-active row: select the first safe input, hold it
    through one RK4 step of the plant.  Rows with no safe input terminate
    there (no exception); with ``stop_on_exit`` rows also stop once the state
    leaves the state box.  Arithmetic is row-independent, so results match
    one-at-a-time simulation exactly.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    n_steps = int(round(horizon / step))
    if n_steps < 1:
        raise ValueError("horizon must cover at least one step")
    B, n = X0.shape
    Xs = np.zeros((B, n_steps + 1, n))
    Us = np.zeros((B, n_steps, controller.inputs.shape[1]))
    Xs[:, 0] = X0
    end = np.full(B, n_steps, dtype=int)
    term = np.array(["completed"] * B, dtype=object)
    active = np.ones(B, dtype=bool)
    state = X0.copy()
    for s in range(n_steps):
        if not active.any():
            break
        rows = np.flatnonzero(active)
        idx, ok, _ = controller.select_batch(state[rows])
        failed = rows[~ok]
        if failed.size:
            end[failed] = s
            term[failed] = "no-safe-input"
            active[failed] = False
        rows = rows[ok]
        if rows.size == 0:
            continue
        u_held = controller.inputs[idx[ok]]
        Us[rows, s] = u_held

        def rhs(Z):
            return plant.drift(Z) + np.einsum("bnm,bm->bn", plant.input_matrix(Z), u_held)

        new = rk4_step(rhs, state[rows], step)
        state[rows] = new
        Xs[rows, s + 1] = new
        if stop_on_exit and problem is not None:
            outside = ~problem.state_box.contains(new)
            left = rows[outside]
            if left.size:
                end[left] = s + 1
                term[left] = "left-state-box"
                active[left] = False
    out = []
    t = np.arange(n_steps + 1) * step
    for i in range(B):
        e = end[i]
        Bvals = controller.candidate.eval(Xs[i, :e + 1])
        out.append(Trajectory(t[:e + 1], Xs[i, :e + 1], Us[i, :e], Bvals, str(term[i])))
    return out


def simulate_closed_loop(plant: ControlAffineSystem, controller: SafeController,
                         x0: np.ndarray, horizon: float, step: float,
                         problem: Optional[ProblemSpec] = None,
                         stop_on_exit: bool = False) -> Trajectory:
    """Single-trajectory convenience wrapper around the lockstep simulator.

    Unlike the batch form, running out of safe inputs raises
    :class:`NoSafeInputError` carrying the partial trajectory.
    """
    traj = simulate_batch(plant, controller, np.asarray(x0, dtype=float)[None, :],
                          horizon, step, problem=problem, stop_on_exit=stop_on_exit)[0]
    if traj.termination == "no-safe-input":
        x_fail = traj.X[-1]
        vals = controller.condition_values(x_fail[None, :])[0]
        raise NoSafeInputError(x_fail, vals, trajectory=traj)
    return traj


def check_trajectory_safety(traj: Trajectory, problem: ProblemSpec) -> dict:
    """Region bookkeeping along a trajectory."""
    in_unsafe = problem.in_unsafe(traj.X)
    in_box = problem.state_box.contains(traj.X)
    first_unsafe = int(np.argmax(in_unsafe)) if in_unsafe.any() else None
    first_exit = int(np.argmax(~in_box)) if (~in_box).any() else None
    return {
        "entered_unsafe": bool(in_unsafe.any()),
        "first_unsafe_index": first_unsafe,
        "left_state_box": bool((~in_box).any()),
        "first_exit_index": first_exit,
        "max_B": float(traj.B.max()),
        "starts_in_initial": bool(problem.in_initial(traj.X[0])),
    }


def barrier_monotonicity_check(traj: Trajectory) -> dict:
    """Initial sign and worst single-step increase of B along the run."""
    diffs = np.diff(traj.B) if traj.B.shape[0] > 1 else np.zeros(1)
    return {
        "initial_B": float(traj.B[0]),
        "max_B": float(traj.B.max()),
        "max_step_increase": float(diffs.max()),
    }


def save_trajectory(traj: Trajectory, problem: ProblemSpec,
                    path: Union[str, Path]) -> None:
    """CSV export: t, states, held input (blank on the final row), B, and a
    safe flag (0 when the state sits in an unsafe box)."""
    n = traj.X.shape[1]
    m = traj.U.shape[1]
    unsafe = problem.in_unsafe(traj.X)
    lines = [f"# termination={traj.termination}"]
    header = (["t"] + [f"x{i + 1}" for i in range(n)]
              + [f"u{i + 1}" for i in range(m)] + ["B", "safe"])
    lines.append(",".join(header))
    for k in range(traj.t.shape[0]):
        u_cells = ([repr(float(v)) for v in traj.U[k]] if k < traj.n_steps else [""] * m)
        cells = ([repr(float(traj.t[k]))] + [repr(float(v)) for v in traj.X[k]]
                 + u_cells + [repr(float(traj.B[k])), str(int(not unsafe[k]))])
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def load_trajectory(path: Union[str, Path]) -> Trajectory:
    text = Path(path).read_text().strip().split("\n")
    termination = "completed"
    if text[0].startswith("#"):
        termination = text[0].split("=", 1)[1].strip()
        text = text[1:]
    header = text[0].split(",")
    n = sum(1 for h in header if h.startswith("x"))
    m = sum(1 for h in header if h.startswith("u"))
    rows = [line.split(",") for line in text[1:]]
    t = np.array([float(r[0]) for r in rows])
    X = np.array([[float(v) for v in r[1:1 + n]] for r in rows])
    U = np.array([[float(v) for v in r[1 + n:1 + n + m]] for r in rows[:-1]])
    if U.size == 0:
        U = U.reshape(0, m)
    B = np.array([float(r[1 + n + m]) for r in rows])
    return Trajectory(t, X, U, B, termination)
