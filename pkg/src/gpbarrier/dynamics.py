"""Control-affine systems, safety geometry, and training data.

The plant model throughout is

    xdot = f(x) + g(x) u

with unknown drift f, known input matrix g, and a finite input set U.
States live in an axis-aligned box X; initial and unsafe regions are
unions of axis-aligned boxes inside X.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path
from typing import Callable, List, Optional, Union

import numpy as np

__all__ = [
    "Box",
    "ProblemSpec",
    "ControlAffineSystem",
    "TrainingSet",
    "rk4_step",
    "jet_engine_system",
    "jet_engine_problem",
    "generate_training_data",
    "finite_difference_measurement",
    "problem_to_json",
    "problem_from_json",
    "save_training_set",
    "load_training_set",
]


def _frozen_array(value, ndim: Optional[int] = None) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("array contains non-finite entries")
    arr.flags.writeable = False
    return arr


@dataclasses.dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lo_1, hi_1] x ... x [lo_n, hi_n]``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", _frozen_array(self.lo, ndim=1))
        object.__setattr__(self, "hi", _frozen_array(self.hi, ndim=1))
        if self.lo.shape != self.hi.shape:
            raise ValueError("lo and hi must have matching shapes")
        if np.any(self.hi < self.lo):
            raise ValueError("box has hi < lo in some dimension")

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, x: np.ndarray, atol: float = 0.0):
        """Membership test, vectorized over the leading axis of ``x``."""
        x = np.asarray(x, dtype=float)
        inside = np.logical_and(x >= self.lo - atol, x <= self.hi + atol)
        return np.all(inside, axis=-1)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(size, self.dim))

    def grid(self, per_dim: int) -> np.ndarray:
        """Endpoint-inclusive uniform grid, shape ``(per_dim**dim, dim)``."""
        axes = [np.linspace(self.lo[d], self.hi[d], per_dim) for d in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def vertices(self) -> np.ndarray:
        """All 2**dim corner points, shape ``(2**dim, dim)``."""
        idx = np.indices((2,) * self.dim).reshape(self.dim, -1).T
        return np.where(idx == 0, self.lo, self.hi)


def _boxes_overlap(a: Box, b: Box) -> bool:
    # strict interior overlap; shared faces are fine
    return bool(np.all(np.maximum(a.lo, b.lo) < np.minimum(a.hi, b.hi)))


@dataclasses.dataclass(frozen=True)
class ProblemSpec:
    """Safety problem geometry: state box, regions, and the finite input set.

    ``inputs`` has shape ``(K, m)``; one row per admissible input, in the
    order candidate inputs are tried by the controller.
    """

    state_box: Box
    initial_boxes: List[Box]
    unsafe_boxes: List[Box]
    inputs: np.ndarray
    name: str = ""

    def __post_init__(self):
        inputs = np.array(self.inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs[:, None]
        object.__setattr__(self, "inputs", _frozen_array(inputs, ndim=2))
        object.__setattr__(self, "initial_boxes", tuple(self.initial_boxes))
        object.__setattr__(self, "unsafe_boxes", tuple(self.unsafe_boxes))
        if self.inputs.shape[0] < 1:
            raise ValueError("need at least one admissible input")
        n = self.state_box.dim
        for box in (*self.initial_boxes, *self.unsafe_boxes):
            if box.dim != n:
                raise ValueError("region dimension does not match state box")
            if np.any(box.lo < self.state_box.lo) or np.any(box.hi > self.state_box.hi):
                raise ValueError("region box is not contained in the state box")
        for ib in self.initial_boxes:
            for ub in self.unsafe_boxes:
                if _boxes_overlap(ib, ub):
                    raise ValueError("initial and unsafe regions overlap")

    @property
    def n(self) -> int:
        return self.state_box.dim

    @property
    def m(self) -> int:
        return int(self.inputs.shape[1])

    def in_initial(self, x: np.ndarray, atol: float = 0.0):
        return self._in_union(self.initial_boxes, x, atol)

    def in_unsafe(self, x: np.ndarray, atol: float = 0.0):
        return self._in_union(self.unsafe_boxes, x, atol)

    @staticmethod
    def _in_union(boxes, x, atol):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1], dtype=bool)
        for box in boxes:
            out |= box.contains(x, atol=atol)
        return out


class ControlAffineSystem:
    """Plant ``xdot = f(x) + g(x) u`` with a vectorized drift callable.

    Parameters
    ----------
    n, m : state and input dimensions.
    drift : callable mapping ``(B, n)`` state batches to ``(B, n)`` drifts.
    input_matrix : constant ``(n, m)`` array, or a callable mapping
        ``(B, n)`` batches to ``(B, n, m)``.
    """

    def __init__(self, n: int, m: int, drift: Callable[[np.ndarray], np.ndarray],
                 input_matrix: Union[np.ndarray, Callable], name: str = ""):
        self.n = int(n)
        self.m = int(m)
        self._drift = drift
        self.name = name
        if callable(input_matrix):
            self._g_const = None
            self._g_fn = input_matrix
        else:
            g = _frozen_array(input_matrix, ndim=2)
            if g.shape != (self.n, self.m):
                raise ValueError(f"input matrix must have shape ({n}, {m})")
            self._g_const = g
            self._g_fn = None

    @property
    def has_constant_input_matrix(self) -> bool:
        return self._g_const is not None

    @property
    def constant_input_matrix(self) -> np.ndarray:
        if self._g_const is None:
            raise ValueError("input matrix is state dependent")
        return self._g_const

    def drift(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        out = self._drift(x[None, :] if single else x)
        out = np.asarray(out, dtype=float)
        return out[0] if single else out

    def input_matrix(self, x: np.ndarray) -> np.ndarray:
        """Evaluate g at a batch of states, shape ``(B, n, m)``."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        if self._g_const is not None:
            out = np.broadcast_to(self._g_const, (xb.shape[0], self.n, self.m))
        else:
            out = np.asarray(self._g_fn(xb), dtype=float)
        return out[0] if single else out

    def rhs(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Closed-loop right-hand side f(x) + g(x) u for a fixed input u."""
        u = np.asarray(u, dtype=float).reshape(self.m)
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        out = self.drift(xb) + self.input_matrix(xb) @ u
        return out[0] if single else out


@dataclasses.dataclass(frozen=True)
class TrainingSet:
    """Noisy drift measurements ``Y = f(X) + noise``; ``N >= 1`` rows."""

    X: np.ndarray
    Y: np.ndarray
    noise_std: float
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "X", _frozen_array(self.X, ndim=2))
        object.__setattr__(self, "Y", _frozen_array(self.Y, ndim=2))
        if self.X.shape != self.Y.shape:
            raise ValueError("X and Y must have matching shapes")
        if self.X.shape[0] < 1:
            raise ValueError("training set must contain at least one sample")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def rk4_step(rhs: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of size h; works on state batches."""
    k1 = rhs(x)
    k2 = rhs(x + 0.5 * h * k1)
    k3 = rhs(x + 0.5 * h * k2)
    k4 = rhs(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# ---------------------------------------------------------------------------
# Built-in benchmark plant: Moore-Greitzer jet engine surge model
# ---------------------------------------------------------------------------

def jet_engine_system() -> ControlAffineSystem:
    """Two-state jet engine surge model with scalar input.

    f1 = -x2 - 1.5 x1^2 - 0.5 x1^3, f2 = x1, g = (0, -1)^T.
    """

    def drift(x):
        x1, x2 = x[:, 0], x[:, 1]
        return np.stack([-x2 - 1.5 * x1 ** 2 - 0.5 * x1 ** 3, x1], axis=-1)

    g = np.array([[0.0], [-1.0]])
    return ControlAffineSystem(2, 1, drift, g, name="jet-engine")


def jet_engine_problem() -> ProblemSpec:
    """Safety geometry and input set for the jet engine benchmark."""
    state = Box([-1.0, -4.0], [3.0, 4.0])
    initial = [Box([0.0, -1.0], [1.0, 1.0])]
    unsafe = [Box([-1.0, -4.0], [0.0, -2.5]), Box([-1.0, 2.0], [3.0, 4.0])]
    inputs = np.arange(-2.0, 2.0 + 0.25, 0.5)[:, None]
    return ProblemSpec(state, initial, unsafe, inputs, name="jet-engine")


def generate_training_data(system: ControlAffineSystem, box: Box, n_samples: int,
                           noise_std: float, seed: int) -> TrainingSet:
    """Sample states uniformly from ``box`` and record noisy drift values."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    X = box.sample(rng, n_samples)
    Y = system.drift(X) + rng.normal(0.0, noise_std, size=X.shape)
    return TrainingSet(X, Y, noise_std=noise_std, seed=seed)


def finite_difference_measurement(system: ControlAffineSystem, x: np.ndarray,
                                  u: np.ndarray, h: float,
                                  n_substeps: int = 16) -> np.ndarray:
    """Estimate f(x) from a short closed-loop rollout under constant input.

    Integrates the true plant over [0, h] with RK4 substeps, then returns
    (x(h) - x(0)) / h - g(x(0)) u.  The estimate converges to f(x) at
    first order in h (the forward difference dominates the error).
    """
    x = np.asarray(x, dtype=float).reshape(system.n)
    u = np.asarray(u, dtype=float).reshape(system.m)
    rhs = lambda s: system.rhs(s, u)
    xt = x.copy()
    dt = h / n_substeps
    for _ in range(n_substeps):
        xt = rk4_step(rhs, xt, dt)
    return (xt - x) / h - system.input_matrix(x) @ u


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _box_to_dict(box: Box) -> dict:
    return {"lo": box.lo.tolist(), "hi": box.hi.tolist()}


def _box_from_dict(d: dict) -> Box:
    return Box(d["lo"], d["hi"])


def problem_to_json(problem: ProblemSpec, path: Optional[Union[str, Path]] = None) -> dict:
    """Serialize a ProblemSpec to a JSON-compatible dict; write it if a path is given."""
    doc = {
        "n": problem.n,
        "m": problem.m,
        "name": problem.name,
        "state_box": _box_to_dict(problem.state_box),
        "initial_boxes": [_box_to_dict(b) for b in problem.initial_boxes],
        "unsafe_boxes": [_box_to_dict(b) for b in problem.unsafe_boxes],
        "inputs": problem.inputs.tolist(),
    }
    if path is not None:
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")
    return doc


def problem_from_json(source: Union[str, Path, dict]) -> ProblemSpec:
    doc = source if isinstance(source, dict) else json.loads(Path(source).read_text())
    problem = ProblemSpec(
        state_box=_box_from_dict(doc["state_box"]),
        initial_boxes=[_box_from_dict(b) for b in doc["initial_boxes"]],
        unsafe_boxes=[_box_from_dict(b) for b in doc["unsafe_boxes"]],
        inputs=np.array(doc["inputs"], dtype=float),
        name=doc.get("name", ""),
    )
    if problem.n != doc["n"] or problem.m != doc["m"]:
        raise ValueError("declared dimensions disagree with box/input shapes")
    return problem


def save_training_set(data: TrainingSet, csv_path: Union[str, Path]) -> None:
    """Write samples as CSV (x1..xn, y1..yn) plus a sidecar metadata file."""
    csv_path = Path(csv_path)
    n = data.dim
    header = [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)]
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for xi, yi in zip(data.X, data.Y):
            writer.writerow([repr(float(v)) for v in xi] + [repr(float(v)) for v in yi])
    meta = {"noise_std": data.noise_std, "seed": data.seed, "n_samples": data.n_samples}
    csv_path.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def load_training_set(csv_path: Union[str, Path]) -> TrainingSet:
    csv_path = Path(csv_path)
    with csv_path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if len(header) % 2 != 0:
        raise ValueError("training CSV must have columns x1..xn, y1..yn")
    n = len(header) // 2
    vals = np.array([[float(v) for v in row] for row in body])
    meta_path = csv_path.with_suffix(".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    seed = meta.get("seed")
    return TrainingSet(vals[:, :n], vals[:, n:], noise_std=float(meta.get("noise_std", 0.0)),
                       seed=None if seed is None else int(seed))
