"""Multi-output Gaussian process regression with squared-exponential kernels.

Each drift component f_j gets an independent GP prior with its own signal
variance and per-dimension lengthscales; all outputs share the training
inputs.  Posteriors support exact mean/variance queries, marginal
likelihood hyperparameter fitting, rigorous state-space-wide bounds on the
posterior standard deviation, and lossless JSON serialization.
"""

from __future__ import annotations

import dataclasses
import heapq
import json
import warnings
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from .dynamics import Box, TrainingSet

__all__ = [
    "KernelSpec",
    "GPPosterior",
    "StdBound",
    "IllConditionedError",
    "HyperparameterFitError",
    "ExtrapolationWarning",
    "kernel_eval",
    "fit_posterior",
    "fit_hyperparameters",
    "max_std_bound",
    "save_model",
    "load_model",
]

# absolute tolerance below which a negative predictive variance is treated
# as roundoff and clamped; anything worse aborts
VARIANCE_CLAMP_TOL = 1e-10

_JITTER_START = 1e-10
_JITTER_MAX = 1e-6


class IllConditionedError(Exception):
    """Gram matrix could not be factorized at an acceptable jitter level."""


class HyperparameterFitError(Exception):
    """No restart of the marginal likelihood optimization converged."""


class ExtrapolationWarning(UserWarning):
    """A posterior query fell outside the declared state box."""


@dataclasses.dataclass(frozen=True)
class KernelSpec:
    """Squared-exponential kernel k(x, x') = s2 * exp(-sum_d (x_d - x'_d)^2 / (2 l_d^2))."""

    signal_var: float
    lengthscales: np.ndarray

    def __post_init__(self):
        ls = np.array(self.lengthscales, dtype=float)
        ls.flags.writeable = False
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_var", float(self.signal_var))
        if self.signal_var <= 0 or np.any(ls <= 0):
            raise ValueError("kernel hyperparameters must be positive")

    @property
    def dim(self) -> int:
        return self.lengthscales.shape[0]


def kernel_eval(kernel: KernelSpec, A: np.ndarray, B: Optional[np.ndarray] = None) -> np.ndarray:
    """Cross-covariance matrix k(A, B), shape (|A|, |B|).

    With B omitted the Gram matrix k(A, A) is returned, symmetrized exactly.
    """
    A = np.asarray(A, dtype=float) / kernel.lengthscales
    if B is None:
        D = cdist(A, A, "sqeuclidean")
        K = kernel.signal_var * np.exp(-0.5 * D)
        return 0.5 * (K + K.T)
    B = np.asarray(B, dtype=float) / kernel.lengthscales
    return kernel.signal_var * np.exp(-0.5 * cdist(A, B, "sqeuclidean"))


def _chol_with_jitter(A: np.ndarray) -> Tuple[np.ndarray, float]:
    """Lower Cholesky factor of A + jitter*I, escalating jitter tenfold as needed."""
    jitter = _JITTER_START
    while jitter <= _JITTER_MAX * (1 + 1e-12):
        try:
            L = cholesky(A + jitter * np.eye(A.shape[0]), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    cond = float(np.linalg.cond(A))
    raise IllConditionedError(
        f"Cholesky failed up to jitter {_JITTER_MAX:g}; condition estimate {cond:.3e}. "
        "Consider a larger noise level or fewer near-duplicate samples.")


class GPPosterior:
    """Exact GP posterior for every drift output, sharing one training input set.

    Build instances with :func:`fit_posterior`.  With ``data=None`` the object
    represents the prior (zero mean, full signal variance everywhere).
    """

    def __init__(self, kernels: Sequence[KernelSpec], noise_std: float,
                 data: Optional[TrainingSet], alphas, chols, jitters,
                 state_box: Optional[Box] = None):
        self.kernels = tuple(kernels)
        self.noise_std = float(noise_std)
        self.data = data
        self.alphas = None if alphas is None else tuple(alphas)
        self.chols = None if chols is None else tuple(chols)
        self.jitters = tuple(jitters)
        self.state_box = state_box

    @property
    def n_outputs(self) -> int:
        return len(self.kernels)

    @property
    def dim(self) -> int:
        return self.kernels[0].dim

    @property
    def is_prior(self) -> bool:
        return self.data is None

    def _check_queries(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.shape[1] != self.dim:
            raise ValueError(f"query dimension {X.shape[1]} does not match model dimension {self.dim}")
        if self.state_box is not None and not np.all(self.state_box.contains(X)):
            warnings.warn("posterior queried outside the declared state box",
                          ExtrapolationWarning, stacklevel=3)
        return X

    def mean(self, X: np.ndarray) -> np.ndarray:
        """Posterior mean of every output at a batch of states, shape (B, n_outputs)."""
        Xq = self._check_queries(X)
        if self.is_prior:
            out = np.zeros((Xq.shape[0], self.n_outputs))
        else:
            cols = [kernel_eval(k, Xq, self.data.X) @ a
                    for k, a in zip(self.kernels, self.alphas)]
            out = np.stack(cols, axis=-1)
        return out[0] if np.asarray(X).ndim == 1 else out

    def variance(self, X: np.ndarray) -> np.ndarray:
        """Posterior variance of every output, clamped at zero within roundoff."""
        Xq = self._check_queries(X)
        cols = []
        for j, k in enumerate(self.kernels):
            if self.is_prior:
                var = np.full(Xq.shape[0], k.signal_var)
            else:
                Kx = kernel_eval(k, self.data.X, Xq)
                v = solve_triangular(self.chols[j], Kx, lower=True)
                var = k.signal_var - np.einsum("ij,ij->j", v, v)
            bad = var < -VARIANCE_CLAMP_TOL
            if np.any(bad):
                raise IllConditionedError(
                    f"predictive variance {var[bad].min():.3e} below -{VARIANCE_CLAMP_TOL:g} "
                    f"for output {j}")
            cols.append(np.maximum(var, 0.0))
        out = np.stack(cols, axis=-1)
        return out[0] if np.asarray(X).ndim == 1 else out

    def std(self, X: np.ndarray) -> np.ndarray:
        return np.sqrt(self.variance(X))

    def rkhs_mean_norm(self, output: int) -> float:
        """RKHS norm of the posterior mean of one output, sqrt(alpha^T K alpha)."""
        if self.is_prior:
            return 0.0
        a = self.alphas[output]
        K = kernel_eval(self.kernels[output], self.data.X)
        return float(np.sqrt(max(a @ K @ a, 0.0)))


def fit_posterior(kernels: Sequence[KernelSpec], data: Optional[TrainingSet],
                  noise_std: Optional[float] = None,
                  state_box: Optional[Box] = None) -> GPPosterior:
    """Condition independent per-output GPs on shared training inputs.

    ``data=None`` yields the prior.  ``noise_std`` defaults to the value
    recorded in the training set.
    """
    kernels = list(kernels)
    if data is None:
        if noise_std is None:
            noise_std = 0.0
        return GPPosterior(kernels, noise_std, None, None, None,
                           jitters=(0.0,) * len(kernels), state_box=state_box)
    if len(kernels) != data.Y.shape[1]:
        raise ValueError(f"{len(kernels)} kernels for {data.Y.shape[1]} outputs")
    if any(k.dim != data.dim for k in kernels):
        raise ValueError("kernel lengthscale count does not match state dimension")
    if noise_std is None:
        noise_std = data.noise_std
    alphas, chols, jitters = [], [], []
    for j, k in enumerate(kernels):
        A = kernel_eval(k, data.X) + noise_std ** 2 * np.eye(data.n_samples)
        L, jit = _chol_with_jitter(A)
        alphas.append(cho_solve((L, True), data.Y[:, j]))
        chols.append(L)
        jitters.append(jit)
    return GPPosterior(kernels, noise_std, data, alphas, chols, jitters, state_box=state_box)


# ---------------------------------------------------------------------------
# Marginal likelihood hyperparameter fitting
# ---------------------------------------------------------------------------

def _nll_and_grad(theta: np.ndarray, X: np.ndarray, y: np.ndarray, noise_var: float):
    """Negative log marginal likelihood and gradient in log-parameter space.

    theta = [log signal_var, log l_1, ..., log l_n].
    """
    n, d = X.shape
    s2 = np.exp(theta[0])
    ls = np.exp(theta[1:])
    Xs = X / ls
    D = cdist(Xs, Xs, "sqeuclidean")
    K = s2 * np.exp(-0.5 * D)
    K = 0.5 * (K + K.T)
    A = K + (noise_var + _JITTER_START) * np.eye(n)
    try:
        L = cholesky(A, lower=True)
    except np.linalg.LinAlgError:
        return 1e25, np.zeros_like(theta)
    alpha = cho_solve((L, True), y)
    nll = 0.5 * y @ alpha + np.log(np.diag(L)).sum() + 0.5 * n * np.log(2 * np.pi)
    # dNLL/dtheta_i = 0.5 tr((A^-1 - alpha alpha^T) dK/dtheta_i)
    W = cho_solve((L, True), np.eye(n)) - np.outer(alpha, alpha)
    grad = np.empty_like(theta)
    grad[0] = 0.5 * np.einsum("ij,ji->", W, K)
    for i in range(d):
        dK = K * (np.subtract.outer(X[:, i], X[:, i]) ** 2 / ls[i] ** 2)
        grad[i + 1] = 0.5 * np.einsum("ij,ji->", W, dK)
    return nll, grad


def _default_fit_bounds(X: np.ndarray, y: np.ndarray):
    """Log-space box constraints keyed to the data scale.

    Signal variance may range over [1e-8, 1e2] times the sample variance and
    lengthscales over [1e-2, 1e6] times the per-dimension data span, which
    rules out degenerate pure-noise explanations while leaving room for
    effectively-linear dimensions.
    """
    vy = max(float(np.var(y)), 1e-12)
    spans = np.maximum(X.max(axis=0) - X.min(axis=0), 1e-6)
    bounds = [(np.log(1e-8 * vy), np.log(1e2 * vy))]
    bounds += [(np.log(1e-2 * s), np.log(1e6 * s)) for s in spans]
    return bounds


def fit_hyperparameters(data: TrainingSet, noise_std: Optional[float] = None,
                        n_restarts: int = 8, seed: int = 0,
                        bounds: Optional[list] = None):
    """Fit per-output kernels by L-BFGS-B on the negative log marginal likelihood.

    The noise level stays fixed at the measurement value.  Returns
    ``(kernels, info)`` where info records the best objective per output.
    """
    if noise_std is None:
        noise_std = data.noise_std
    if noise_std <= 0:
        raise HyperparameterFitError("hyperparameter fitting needs a positive noise level")
    rng = np.random.default_rng(seed)
    kernels: List[KernelSpec] = []
    info = {"nll": [], "n_restarts": n_restarts}
    for j in range(data.Y.shape[1]):
        y = data.Y[:, j]
        bnds = bounds if bounds is not None else _default_fit_bounds(data.X, y)
        lo = np.array([b[0] for b in bnds])
        hi = np.array([b[1] for b in bnds])
        # heuristic start: sample variance, a third of the span
        start = np.concatenate([[np.log(max(np.var(y), 1e-8))],
                                np.log(np.maximum(data.X.max(0) - data.X.min(0), 1e-6) / 3.0)])
        starts = [np.clip(start, lo, hi)]
        starts += [rng.uniform(lo, hi) for _ in range(n_restarts - 1)]
        best = None
        for s in starts:
            res = minimize(_nll_and_grad, s, args=(data.X, y, noise_std ** 2),
                           jac=True, method="L-BFGS-B", bounds=bnds)
            if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
                best = res
        if best is None:
            raise HyperparameterFitError(f"all restarts failed for output {j}")
        theta = best.x
        kernels.append(KernelSpec(np.exp(theta[0]), np.exp(theta[1:])))
        info["nll"].append(float(best.fun))
    return kernels, info


# ---------------------------------------------------------------------------
# State-space-wide bounds on the posterior standard deviation
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class StdBound:
    """Rigorous upper bounds on posterior std over a box, one value per output."""

    values: np.ndarray
    margins: np.ndarray
    mode: str
    resolution: int

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "margins", np.asarray(self.margins, dtype=float))


def _metric_margin(kernel: KernelSpec, half_widths: np.ndarray) -> float:
    """Kernel-metric distance from a cell center to its farthest corner.

    The posterior std is 1-Lipschitz in the kernel metric
    d_k(x, c) = sqrt(2 s2 (1 - k(x, c)/s2)), so this bounds how much the
    std can exceed its center value anywhere in the cell.
    """
    s = float(np.sum((half_widths / kernel.lengthscales) ** 2))
    return float(np.sqrt(2.0 * kernel.signal_var * (1.0 - np.exp(-0.5 * s))))


def _max_std_grid(posterior: GPPosterior, box: Box, per_dim: int):
    pts = box.grid(per_dim)
    stds = posterior.std(pts)
    half = box.widths / (per_dim - 1) / 2.0
    values, margins = [], []
    for j, k in enumerate(posterior.kernels):
        m = 0.0 if posterior.is_prior else _metric_margin(k, half)
        values.append(float(stds[:, j].max()) + m)
        margins.append(m)
    return np.array(values), np.array(margins)


def _max_std_bnb(posterior: GPPosterior, box: Box, output: int,
                 tol: float, max_cells: int):
    """Best-first interval refinement for one output; returns a certified sup bound."""
    k = posterior.kernels[output]
    if posterior.is_prior:
        return float(np.sqrt(k.signal_var)), 0.0

    def center_std(c):
        return float(posterior.std(c[None, :])[0, output])

    c0, h0 = box.center, box.widths / 2.0
    ub0 = center_std(c0) + _metric_margin(k, h0)
    heap = [(-ub0, 0, c0, h0)]
    lb = center_std(c0)
    tick = 1
    n_popped = 0
    while heap and n_popped < max_cells:
        neg_ub, _, c, h = heapq.heappop(heap)
        ub = -neg_ub
        if ub - lb <= tol:
            return ub, ub - lb
        n_popped += 1
        d = int(np.argmax(h / k.lengthscales))
        for side in (-1.0, 1.0):
            hc = h.copy()
            hc[d] /= 2.0
            cc = c.copy()
            cc[d] += side * hc[d]
            s = center_std(cc)
            lb = max(lb, s)
            heapq.heappush(heap, (-(s + _metric_margin(k, hc)), tick, cc, hc))
            tick += 1
    ub = -heap[0][0] if heap else lb
    return ub, ub - lb


def max_std_bound(posterior: GPPosterior, box: Box, mode: str = "grid",
                  per_dim: int = 201, tol: float = 1e-4,
                  max_cells: int = 20000) -> StdBound:
    """Upper-bound sup over the box of the posterior std, for every output.

    ``grid`` evaluates on an endpoint-inclusive grid and adds the kernel-metric
    margin of half a cell, so the result is a true upper bound at any
    resolution.  ``interval-bnb`` refines boxes best-first until the bound is
    within ``tol`` of an attained value or ``max_cells`` cells were explored.
    """
    if mode == "grid":
        if per_dim < 2:
            raise ValueError("per_dim must be at least 2")
        values, margins = _max_std_grid(posterior, box, per_dim)
        return StdBound(values, margins, mode, per_dim)
    if mode == "interval-bnb":
        values, gaps = [], []
        for j in range(posterior.n_outputs):
            v, gap = _max_std_bnb(posterior, box, j, tol, max_cells)
            values.append(v)
            gaps.append(gap)
        return StdBound(np.array(values), np.array(gaps), mode, max_cells)
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_model(posterior: GPPosterior, path: Union[str, Path]) -> None:
    """Write a posterior to JSON; queries after reload are bit-identical.

    Training inputs and the conditioning weights are stored as exact doubles
    (JSON round-trips repr), and the Cholesky factors are recomputed
    deterministically on load.
    """
    doc = {
        "noise_std": posterior.noise_std,
        "jitters": list(posterior.jitters),
        "kernels": [{"signal_var": k.signal_var, "lengthscales": k.lengthscales.tolist()}
                    for k in posterior.kernels],
        "state_box": None if posterior.state_box is None else
                     {"lo": posterior.state_box.lo.tolist(), "hi": posterior.state_box.hi.tolist()},
    }
    if posterior.is_prior:
        doc["training"] = None
    else:
        doc["training"] = {
            "X": posterior.data.X.tolist(),
            "Y": posterior.data.Y.tolist(),
            "noise_std": posterior.data.noise_std,
            "seed": posterior.data.seed,
        }
        doc["alphas"] = [a.tolist() for a in posterior.alphas]
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_model(path: Union[str, Path]) -> GPPosterior:
    doc = json.loads(Path(path).read_text())
    kernels = [KernelSpec(k["signal_var"], k["lengthscales"]) for k in doc["kernels"]]
    sb = doc.get("state_box")
    state_box = None if sb is None else Box(sb["lo"], sb["hi"])
    if doc["training"] is None:
        return fit_posterior(kernels, None, noise_std=doc["noise_std"], state_box=state_box)
    tr = doc["training"]
    data = TrainingSet(np.array(tr["X"]), np.array(tr["Y"]),
                       noise_std=tr["noise_std"], seed=tr["seed"])
    post = fit_posterior(kernels, data, noise_std=doc["noise_std"], state_box=state_box)
    stored = [np.array(a) for a in doc["alphas"]]
    for a_new, a_old in zip(post.alphas, stored):
        if not np.allclose(a_new, a_old, rtol=1e-6, atol=1e-12):
            raise IllConditionedError("stored conditioning weights disagree with recomputation")
    # use the stored weights verbatim so mean queries reproduce exactly
    return GPPosterior(kernels, doc["noise_std"], data, stored, post.chols,
                       tuple(doc["jitters"]), state_box=state_box)
