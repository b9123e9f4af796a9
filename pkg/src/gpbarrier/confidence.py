"""High-probability error bounds for the learned drift.

Turns state-space-wide posterior std bounds into a probabilistic box D
containing the model error f(x) - mu(x) for all x simultaneously, via
information-gain-based scaling factors.  Also provides Monte-Carlo
containment estimation with exact binomial confidence intervals.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.stats import beta as beta_dist

from .dynamics import Box
from .gp import GPPosterior, KernelSpec, StdBound, kernel_eval

__all__ = [
    "ConfidenceBox",
    "ContainmentEstimate",
    "beta_bound",
    "information_gain_greedy",
    "build_confidence_box",
    "monte_carlo_containment",
    "clopper_pearson",
]


def beta_bound(norm_bound: float, gamma: float, n_samples: int, epsilon: float) -> float:
    """Scaling factor linking posterior std to a uniform error bound.

    beta = sqrt(2 ||f||^2 + 300 gamma ln^3((N + 1) / epsilon)), natural log.
    Valid for epsilon in (0, 1); ||f|| is an RKHS norm bound on the target
    and gamma bounds the information gain of N noisy observations.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if norm_bound < 0 or gamma < 0 or n_samples < 0:
        raise ValueError("norm_bound, gamma, and n_samples must be nonnegative")
    log_term = np.log((n_samples + 1) / epsilon)
    return float(np.sqrt(2.0 * norm_bound ** 2 + 300.0 * gamma * log_term ** 3))


def information_gain_greedy(kernel: KernelSpec, candidates: np.ndarray,
                            n_select: int, noise_std: float) -> Tuple[float, np.ndarray]:
    """Greedy upper proxy for the maximum information gain of n_select observations.

    Repeatedly picks the candidate with the largest current posterior variance
    (ties broken by lowest index) and accumulates
    0.5 * ln(1 + sigma_{t-1}^2(x_t) / noise_var).  Returns the accumulated gain
    and the selected candidate indices.
    """
    if noise_std <= 0:
        raise ValueError("information gain needs a positive noise level")
    candidates = np.asarray(candidates, dtype=float)
    n_cand = candidates.shape[0]
    if not 1 <= n_select <= n_cand:
        raise ValueError("n_select must be between 1 and the number of candidates")
    noise_var = noise_std ** 2
    prior_var = np.full(n_cand, kernel.signal_var)
    # rows of V hold L^-1 K(S, C) for the selected set S; posterior variance
    # at every candidate is then prior minus the squared column norms
    V = np.zeros((n_select, n_cand))
    var = prior_var.copy()
    gain = 0.0
    chosen = np.zeros(n_select, dtype=int)
    K_cand = None
    for t in range(n_select):
        s = int(np.argmax(var))
        chosen[t] = s
        gain += 0.5 * np.log1p(max(var[s], 0.0) / noise_var)
        k_row = kernel_eval(kernel, candidates[s][None, :], candidates)[0]
        resid = k_row - V[:t].T @ V[:t, s]
        pivot = np.sqrt(max(k_row[s] - V[:t, s] @ V[:t, s] + noise_var, 1e-300))
        V[t] = resid / pivot
        var = np.maximum(prior_var - (V[:t + 1] ** 2).sum(axis=0), 0.0)
    return float(gain), chosen


@dataclasses.dataclass(frozen=True)
class ConfidenceBox:
    """Symmetric box D around zero that contains the drift error f - mu.

    half_widths[j] bounds |f_j(x) - mu_j(x)| uniformly over the state box,
    with probability at least 1 - epsilon when built from beta scaling.
    """

    half_widths: np.ndarray
    betas: Optional[np.ndarray] = None
    epsilon: Optional[float] = None

    def __post_init__(self):
        hw = np.array(self.half_widths, dtype=float)
        hw.flags.writeable = False
        object.__setattr__(self, "half_widths", hw)
        if np.any(hw < 0):
            raise ValueError("half widths must be nonnegative")
        if self.betas is not None:
            b = np.array(self.betas, dtype=float)
            b.flags.writeable = False
            object.__setattr__(self, "betas", b)

    @property
    def dim(self) -> int:
        return self.half_widths.shape[0]

    def as_box(self) -> Box:
        return Box(-self.half_widths, self.half_widths)

    def vertices(self) -> np.ndarray:
        return self.as_box().vertices()


def build_confidence_box(std_bound: StdBound, norm_bounds: Sequence[float],
                         gammas: Sequence[float], n_samples: int,
                         epsilon: float) -> ConfidenceBox:
    """Combine per-output std bounds with beta factors into the error box D."""
    norm_bounds = np.asarray(norm_bounds, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    if norm_bounds.shape != std_bound.values.shape or gammas.shape != std_bound.values.shape:
        raise ValueError("need one norm bound and one gamma per output")
    betas = np.array([beta_bound(nb, g, n_samples, epsilon)
                      for nb, g in zip(norm_bounds, gammas)])
    return ConfidenceBox(betas * std_bound.values, betas=betas, epsilon=epsilon)


@dataclasses.dataclass(frozen=True)
class ContainmentEstimate:
    """Monte-Carlo estimate of P(|f(x) - mu(x)| <= half_widths componentwise)."""

    successes: int
    n_trials: int
    lower: float
    upper: float
    confidence: float

    @property
    def estimate(self) -> float:
        return self.successes / self.n_trials


def clopper_pearson(successes: int, n_trials: int, confidence: float) -> Tuple[float, float]:
    """Exact two-sided binomial confidence interval for a success probability."""
    if not 0 <= successes <= n_trials or n_trials < 1:
        raise ValueError("need 0 <= successes <= n_trials, n_trials >= 1")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    alpha = 1.0 - confidence
    lo = 0.0 if successes == 0 else float(
        beta_dist.ppf(alpha / 2.0, successes, n_trials - successes + 1))
    hi = 1.0 if successes == n_trials else float(
        beta_dist.ppf(1.0 - alpha / 2.0, successes + 1, n_trials - successes))
    return lo, hi


def monte_carlo_containment(posterior: GPPosterior, box: Box,
                            half_widths: Sequence[float], n_trials: int, seed: int,
                            confidence: float = 0.99,
                            drift_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                            mode: str = "true-drift", grid_per_dim: int = 15,
                            chunk_size: int = 200_000) -> ContainmentEstimate:
    """Estimate how often the drift stays inside the band mu +/- half_widths.

    In ``true-drift`` mode one trial draws a state uniformly from the box and
    succeeds when every component of drift_fn(x) - mu(x) fits the band.  In
    ``posterior-draw`` mode a trial instead draws a function sample from the
    posterior on a fixed grid and succeeds when the whole sample stays in the
    band, which needs no ground-truth drift.  The returned interval is exact
    Clopper-Pearson at the requested confidence.
    """
    half_widths = np.asarray(half_widths, dtype=float)
    rng = np.random.default_rng(seed)
    successes = 0
    if mode == "true-drift":
        if drift_fn is None:
            raise ValueError("true-drift mode needs a drift_fn")
        done = 0
        while done < n_trials:
            m = min(chunk_size, n_trials - done)
            X = box.sample(rng, m)
            err = np.abs(drift_fn(X) - posterior.mean(X))
            successes += int(np.all(err <= half_widths, axis=1).sum())
            done += m
    elif mode == "posterior-draw":
        grid = box.grid(grid_per_dim)
        G = grid.shape[0]
        chols = []
        for j, k in enumerate(posterior.kernels):
            if posterior.is_prior:
                cov = kernel_eval(k, grid)
            else:
                Kx = kernel_eval(k, posterior.data.X, grid)
                v = solve_triangular(posterior.chols[j], Kx, lower=True)
                cov = kernel_eval(k, grid) - v.T @ v
            cov = 0.5 * (cov + cov.T) + 1e-10 * np.eye(G)
            chols.append(cholesky(cov, lower=True))
        done = 0
        draw_chunk = max(1, min(n_trials, 50_000_000 // (G * posterior.n_outputs)))
        while done < n_trials:
            m = min(draw_chunk, n_trials - done)
            ok = np.ones(m, dtype=bool)
            for j, L in enumerate(chols):
                dev = L @ rng.standard_normal((G, m))
                ok &= np.all(np.abs(dev) <= half_widths[j], axis=0)
            successes += int(ok.sum())
            done += m
    else:
        raise ValueError(f"unknown mode {mode!r}")
    lo, hi = clopper_pearson(successes, n_trials, confidence)
    return ContainmentEstimate(successes, n_trials, lo, hi, confidence)
