"""Counterexample-guided synthesis of uncertainty-robust barrier certificates.

A polynomial barrier B must satisfy, for margin eta > 0 and the error box D,

    B(x) <= 0                                   on the initial region,
    B(x) >= eta                                 on the unsafe region,
    min_u max_{d in vert(D)} dB(x).(mu(x)+d+g(x)u) <= 0   on the state box.

Candidates come from a big-M mixed-integer feasibility program over sampled
states (the input choice is disjunctive); a branch-and-bound verifier with
per-cell Lipschitz margins either certifies a candidate over the continuum
or returns the worst sampled violation as a new counterexample.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .dynamics import Box, ControlAffineSystem, ProblemSpec
from .gp import GPPosterior

__all__ = [
    "BarrierTemplate",
    "BarrierCandidate",
    "SampleSet",
    "Counterexample",
    "ConstraintSystem",
    "SolveResult",
    "VerificationResult",
    "VerifierConfig",
    "CegisConfig",
    "SynthesisResult",
    "SolverBudgetError",
    "VerifierInconsistencyError",
    "basis_eval",
    "basis_gradient",
    "initial_samples",
    "encode_feasibility",
    "solve_candidate",
    "verify_candidate",
    "cegis",
    "check_conditions_known_dynamics",
    "save_barrier",
    "load_barrier",
]


class SolverBudgetError(Exception):
    """The candidate solver hit its node limit without a usable incumbent."""


class VerifierInconsistencyError(Exception):
    """The loop produced a counterexample it had already seen, or a scaled
    certificate failed to re-verify; both indicate numerical trouble."""


# ---------------------------------------------------------------------------
# Monomial basis
# ---------------------------------------------------------------------------

class BarrierTemplate:
    """All monomials in n_vars variables up to total degree, graded lex order.

    Within each total degree, monomials are ordered lexicographically with
    x1 ranked highest: for n_vars=2, degree=2 the basis reads
    1, x1, x2, x1^2, x1*x2, x2^2.
    """

    def __init__(self, n_vars: int, degree: int):
        if n_vars < 1 or degree < 0:
            raise ValueError("need n_vars >= 1 and degree >= 0")
        self.n_vars = int(n_vars)
        self.degree = int(degree)
        exps = []
        for total in range(degree + 1):
            for combo in itertools.combinations_with_replacement(range(n_vars), total):
                e = np.zeros(n_vars, dtype=int)
                for v in combo:
                    e[v] += 1
                exps.append(e)
        self.exponents = np.array(exps, dtype=int)
        self.exponents.flags.writeable = False

    @property
    def size(self) -> int:
        return self.exponents.shape[0]

    def index_of(self, exponents: Sequence[int]) -> int:
        target = np.asarray(exponents, dtype=int)
        hits = np.where((self.exponents == target).all(axis=1))[0]
        if hits.size == 0:
            raise KeyError(f"monomial {tuple(exponents)} not in template")
        return int(hits[0])

    def __repr__(self):
        return f"BarrierTemplate(n_vars={self.n_vars}, degree={self.degree})"


def basis_eval(template: BarrierTemplate, X: np.ndarray) -> np.ndarray:
    """Evaluate every basis monomial at a state batch, shape (B, p)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.prod(X[:, None, :] ** template.exponents[None, :, :], axis=2)


def basis_gradient(template: BarrierTemplate, X: np.ndarray) -> np.ndarray:
    """Gradients of every basis monomial, shape (B, p, n)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    B, n = X.shape
    exps = template.exponents
    out = np.zeros((B, exps.shape[0], n))
    for d in range(n):
        e = exps.copy()
        active = e[:, d] > 0
        e[active, d] -= 1
        vals = np.prod(X[:, None, :] ** e[None, :, :], axis=2)
        out[:, active, d] = exps[active, d] * vals[:, active]
    return out


def _poly_derivative(coefs: np.ndarray, exps: np.ndarray, d: int):
    """Coefficients and exponents of d/dx_d of sum_k coefs_k x^exps_k."""
    active = exps[:, d] > 0
    if not np.any(active):
        return np.zeros(1), np.zeros((1, exps.shape[1]), dtype=int)
    c = coefs[active] * exps[active, d]
    e = exps[active].copy()
    e[:, d] -= 1
    return c, e


def _poly_abs_bound(coefs: np.ndarray, exps: np.ndarray, xmax: np.ndarray) -> np.ndarray:
    """sup of |polynomial| over cells, given per-cell componentwise max |x_d|."""
    mono = np.prod(xmax[:, None, :] ** exps[None, :, :], axis=2)
    return mono @ np.abs(coefs)


@dataclasses.dataclass(frozen=True)
class BarrierCandidate:
    """Polynomial barrier B(x) = phi(x) . coefficients with unsafe margin eta."""

    template: BarrierTemplate
    coefficients: np.ndarray
    margin: float

    def __post_init__(self):
        a = np.array(self.coefficients, dtype=float)
        if a.shape != (self.template.size,):
            raise ValueError("coefficient count does not match template size")
        a.flags.writeable = False
        object.__setattr__(self, "coefficients", a)
        if self.margin <= 0:
            raise ValueError("margin must be positive")

    def eval(self, X: np.ndarray) -> np.ndarray:
        vals = basis_eval(self.template, X) @ self.coefficients
        return vals[0] if np.asarray(X).ndim == 1 else vals

    def gradient(self, X: np.ndarray) -> np.ndarray:
        grads = np.einsum("bpn,p->bn", basis_gradient(self.template, X), self.coefficients)
        return grads[0] if np.asarray(X).ndim == 1 else grads

    def normalized(self) -> "BarrierCandidate":
        """Rescale to max-norm-1 coefficients; every condition scales with it."""
        s = float(np.max(np.abs(self.coefficients)))
        if s == 0:
            return self
        return BarrierCandidate(self.template, self.coefficients / s, self.margin / s)


# ---------------------------------------------------------------------------
# Samples and counterexamples
# ---------------------------------------------------------------------------

ROLES = ("init", "unsafe", "flow")


@dataclasses.dataclass(frozen=True)
class Counterexample:
    x: np.ndarray
    role: str
    violation: float

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        x.flags.writeable = False
        object.__setattr__(self, "x", x)
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}")


class SampleSet:
    """Mutable pools of states for the three constraint families."""

    def __init__(self, init: np.ndarray, unsafe: np.ndarray, flow: np.ndarray):
        self.init = np.atleast_2d(np.asarray(init, dtype=float))
        self.unsafe = np.atleast_2d(np.asarray(unsafe, dtype=float))
        self.flow = np.atleast_2d(np.asarray(flow, dtype=float))

    def pool(self, role: str) -> np.ndarray:
        return getattr(self, role)

    def contains(self, role: str, x: np.ndarray) -> bool:
        pool = self.pool(role)
        return bool(np.any(np.all(pool == np.asarray(x, dtype=float), axis=1)))

    def add(self, role: str, x: np.ndarray) -> None:
        pool = self.pool(role)
        setattr(self, role, np.vstack([pool, np.asarray(x, dtype=float)]))

    def counts(self) -> Dict[str, int]:
        return {r: self.pool(r).shape[0] for r in ROLES}


def initial_samples(problem: ProblemSpec, per_dim: int = 5) -> SampleSet:
    """Endpoint-inclusive per-region grids: one per initial and unsafe box,
    plus a grid over the whole state box for the flow condition."""
    init = np.vstack([b.grid(per_dim) for b in problem.initial_boxes])
    unsafe = np.vstack([b.grid(per_dim) for b in problem.unsafe_boxes])
    flow = problem.state_box.grid(per_dim)
    return SampleSet(init, unsafe, flow)


# ---------------------------------------------------------------------------
# Constraint encoding and the candidate solver
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class ConstraintSystem:
    """Linear-in-coefficients sample constraints.

    init_rows:   (Si, p)        phi(x) . a <= 0
    unsafe_rows: (Su, p)        phi(x) . a >= margin
    flow_rows:   (Sf, K, V, p)  row . a <= 0 for the chosen input, all vertices
    """

    init_rows: np.ndarray
    unsafe_rows: np.ndarray
    flow_rows: np.ndarray
    margin: float


def encode_feasibility(template: BarrierTemplate, samples: SampleSet,
                       mean_fn: Callable[[np.ndarray], np.ndarray],
                       input_matrix: np.ndarray, inputs: np.ndarray,
                       half_widths: np.ndarray, margin: float = 1.0) -> ConstraintSystem:
    """Assemble the disjunctive feasibility system over the current samples.

    Flow rows pair each flow sample with every admissible input and every
    vertex of the error box: row[s, l, v] . a is the barrier derivative at
    sample s under input l and error vertex v.
    """
    if margin <= 0:
        raise ValueError("margin must be positive")
    g = np.asarray(input_matrix, dtype=float)
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    half_widths = np.asarray(half_widths, dtype=float)
    init_rows = basis_eval(template, samples.init)
    unsafe_rows = basis_eval(template, samples.unsafe)
    mu = np.atleast_2d(mean_fn(samples.flow))
    gU = inputs @ g.T
    verts = Box(-half_widths, half_widths).vertices()
    # directions[s, l, v, :] = mu(x_s) + d_v + g u_l
    dirs = mu[:, None, None, :] + verts[None, None, :, :] + gU[None, :, None, :]
    grads = basis_gradient(template, samples.flow)
    flow_rows = np.einsum("spn,slvn->slvp", grads, dirs)
    return ConstraintSystem(init_rows, unsafe_rows, flow_rows, margin)


@dataclasses.dataclass(frozen=True)
class SolveResult:
    status: str  # "candidate" or "infeasible"
    coefficients: Optional[np.ndarray]
    slack: float


_SLACK_TOL = 1e-9


def solve_candidate(cs: ConstraintSystem, a_max: float = 1e6,
                    node_limit: int = 200_000,
                    time_limit: Optional[float] = None) -> SolveResult:
    """Max-slack big-M mixed-integer solve of the sample feasibility system.

    One binary per (flow sample, input) activates that input's vertex rows;
    at least one input per sample must be active.  The common slack t is
    maximized; t > 0 yields a strictly feasible candidate, and a proven
    optimum t <= 0 means no coefficient vector in [-a_max, a_max]^p
    satisfies the samples.
    """
    Si, p = cs.init_rows.shape
    Su = cs.unsafe_rows.shape[0]
    Sf, K, V, _ = cs.flow_rows.shape
    nz = Sf * K
    nvar = p + 1 + nz
    t_cap = 1e3

    # hard rows: [c | 1 | 0] . (a, t, z) <= rhs
    hard_A = np.vstack([cs.init_rows, -cs.unsafe_rows])
    hard_rhs = np.concatenate([np.zeros(Si), -cs.margin * np.ones(Su)])
    flow_A = cs.flow_rows.reshape(Sf * K * V, p)

    A = np.zeros((Si + Su + Sf * K * V, nvar))
    A[:Si + Su, :p] = hard_A
    A[:Si + Su, p] = 1.0
    A[Si + Su:, :p] = flow_A
    A[Si + Su:, p] = 1.0
    # big-M deactivation: row . a + t + M z <= rhs + M
    M_flow = np.abs(flow_A).sum(axis=1) * a_max + t_cap
    z_col = np.repeat(np.arange(nz), V)
    A[Si + Su + np.arange(Sf * K * V), p + 1 + z_col] = M_flow
    rhs = np.concatenate([hard_rhs, M_flow])

    pick = np.zeros((Sf, nvar))
    for s in range(Sf):
        pick[s, p + 1 + s * K: p + 1 + (s + 1) * K] = 1.0

    c_obj = np.zeros(nvar)
    c_obj[p] = -1.0  # maximize t
    integrality = np.zeros(nvar)
    integrality[p + 1:] = 1
    lb = np.concatenate([-a_max * np.ones(p), [-t_cap], np.zeros(nz)])
    ub = np.concatenate([a_max * np.ones(p), [t_cap], np.ones(nz)])
    constraints = [LinearConstraint(A, -np.inf, rhs),
                   LinearConstraint(pick, 1.0, np.inf)]
    options = {"node_limit": node_limit, "presolve": True}
    if time_limit is not None:
        options["time_limit"] = time_limit
    res = milp(c_obj, constraints=constraints, integrality=integrality,
               bounds=Bounds(lb, ub), options=options)
    if res.x is None:
        raise SolverBudgetError(f"candidate solver returned no incumbent (status {res.status})")

    # polish: fix the incumbent's input selection and re-solve the pure LP,
    # which removes any big-M slack from the returned coefficients
    z = res.x[p + 1:].reshape(Sf, K)
    selection = np.argmax(z, axis=1)
    sel_rows = cs.flow_rows[np.arange(Sf), selection].reshape(Sf * V, p)
    A_lp = np.vstack([hard_A, sel_rows])
    A_lp = np.hstack([A_lp, np.ones((A_lp.shape[0], 1))])
    rhs_lp = np.concatenate([hard_rhs, np.zeros(Sf * V)])
    lp = linprog(np.concatenate([np.zeros(p), [-1.0]]), A_ub=A_lp, b_ub=rhs_lp,
                 bounds=[(-a_max, a_max)] * p + [(-t_cap, t_cap)], method="highs")
    if lp.status == 0:
        a_vec, t = lp.x[:p].copy(), float(lp.x[p])
    else:
        a_vec, t = res.x[:p].copy(), float(res.x[p])
    if res.status == 0 and t <= _SLACK_TOL:
        return SolveResult("infeasible", None, t)
    if t <= _SLACK_TOL:
        raise SolverBudgetError(f"node limit hit with nonpositive incumbent slack {t:.3e}")
    return SolveResult("candidate", a_vec, t)


# ---------------------------------------------------------------------------
# Sound verification via adaptive refinement with Lipschitz margins
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class VerifierConfig:
    cex_tol: float = 1e-6
    max_depth: int = 14
    max_cells: int = 500_000
    initial_per_dim: int = 16


@dataclasses.dataclass(frozen=True)
class VerificationResult:
    status: str  # "certified", "violated", or "inconclusive"
    counterexamples: Tuple[Counterexample, ...]
    cells_explored: int
    max_depth_reached: int
    family: Optional[str] = None
    pending_cells: int = 0


class _DriftModel:
    """Mean evaluations plus the constants the flow margin needs."""

    def __init__(self, posterior: GPPosterior):
        self.posterior = posterior
        n_out = posterior.n_outputs
        dim = posterior.dim
        self.norms = np.array([posterior.rkhs_mean_norm(j) for j in range(n_out)])
        # global bound: |d mu_j / dx_d| <= ||mu_j||_H * sigma_j / l_{j,d}
        self.dmu = np.array([[self.norms[j] * np.sqrt(k.signal_var) / k.lengthscales[d]
                              for d in range(dim)]
                             for j, k in enumerate(posterior.kernels)])

    def mean(self, X: np.ndarray) -> np.ndarray:
        return np.atleast_2d(self.posterior.mean(X))

    def mean_cell_slack(self, half: np.ndarray) -> np.ndarray:
        """Per-output bound on |mu_j(x) - mu_j(center)| within a cell, via the
        1-Lipschitz property of the mean in the kernel metric scaled by norm."""
        out = np.empty(self.posterior.n_outputs)
        for j, k in enumerate(self.posterior.kernels):
            s = float(np.sum((half / k.lengthscales) ** 2))
            dk = np.sqrt(2.0 * k.signal_var * (1.0 - np.exp(-0.5 * s)))
            out[j] = self.norms[j] * dk
        return out


def _initial_cells(box: Box, per_dim: int):
    w = box.widths
    axes = [box.lo[d] + (np.arange(per_dim) + 0.5) * w[d] / per_dim
            for d in range(box.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=-1)
    return centers, w / (2 * per_dim)


def _split_cells(centers: np.ndarray, half: np.ndarray):
    n = centers.shape[1]
    offsets = np.array(list(itertools.product(*[( -h / 2, h / 2) for h in half])))
    children = (centers[:, None, :] + offsets[None, :, :]).reshape(-1, n)
    return children, half / 2


def _sorted_cexes(role: str, centers: np.ndarray, vals: np.ndarray) -> List[Counterexample]:
    order = sorted(range(len(vals)), key=lambda i: (-vals[i], tuple(centers[i])))
    return [Counterexample(centers[i], role, float(vals[i])) for i in order]


def verify_candidate(candidate: BarrierCandidate, posterior: GPPosterior,
                     system: ControlAffineSystem, problem: ProblemSpec,
                     half_widths: np.ndarray,
                     config: VerifierConfig = VerifierConfig()) -> VerificationResult:
    """Certify the three barrier conditions over the continuum, or find violations.

    Each region is covered by cells that are either certified (center value
    plus a per-cell Lipschitz margin stays nonpositive) or split; a center
    that strictly violates its condition becomes a counterexample.  Checks run
    family by family (init, unsafe, flow) and stop at the first violating
    family, reporting its violations worst-first.
    """
    if not system.has_constant_input_matrix:
        raise ValueError("verification requires a constant input matrix")
    g = system.constant_input_matrix
    half_widths = np.asarray(half_widths, dtype=float)
    a = candidate.coefficients
    exps = candidate.template.exponents
    n = candidate.template.n_vars
    drift = _DriftModel(posterior)
    gU = np.atleast_2d(problem.inputs) @ g.T
    g_max = np.abs(gU).max(axis=0)

    d1 = [_poly_derivative(a, exps, d) for d in range(n)]
    d2 = [[_poly_derivative(c, e, d2i) for d2i in range(n)] for c, e in d1]

    def grad_abs_bounds(xmax):
        return np.stack([_poly_abs_bound(c, e, xmax) for c, e in d1], axis=1)

    def hess_abs_bounds(xmax):
        return np.stack([np.stack([_poly_abs_bound(c2, e2, xmax)
                                   for c2, e2 in row], axis=1)
                         for row in d2], axis=1)

    cells_total = 0
    deepest = 0

    def run_family(role: str, box: Box):
        nonlocal cells_total, deepest
        centers, half = _initial_cells(box, config.initial_per_dim)
        depth = 0
        while True:
            cells_total += centers.shape[0]
            deepest = max(deepest, depth)
            xmax = np.maximum(np.abs(centers - half), np.abs(centers + half))
            B1 = grad_abs_bounds(xmax)
            if role == "flow":
                mu = drift.mean(centers)
                G = np.einsum("bpn,p->bn", basis_gradient(candidate.template, centers), a)
                vals = (np.einsum("be,be->b", G, mu)
                        + np.abs(G) @ half_widths
                        + (G @ gU.T).min(axis=1))
                B2 = hess_abs_bounds(xmax)
                amp = np.abs(mu) + drift.mean_cell_slack(half) + half_widths + g_max
                L = np.einsum("bed,be->bd", B2, amp) + B1 @ drift.dmu
                margins = L @ half
            else:
                B = basis_eval(candidate.template, centers) @ a
                vals = B if role == "init" else candidate.margin / 2.0 - B
                margins = B1 @ half
            violated = vals > config.cex_tol
            if np.any(violated):
                return "violated", _sorted_cexes(role, centers[violated], vals[violated])
            open_cells = vals + margins > 0
            if not np.any(open_cells):
                return "certified", []
            if depth >= config.max_depth or cells_total > config.max_cells:
                return "inconclusive", int(open_cells.sum())
            centers, half = _split_cells(centers[open_cells], half)
            depth += 1

    pending = 0
    inconclusive = False
    for role, boxes in (("init", problem.initial_boxes),
                        ("unsafe", problem.unsafe_boxes),
                        ("flow", (problem.state_box,))):
        for box in boxes:
            status, payload = run_family(role, box)
            if status == "violated":
                return VerificationResult("violated", tuple(payload), cells_total,
                                          deepest, family=role)
            if status == "inconclusive":
                inconclusive = True
                pending += payload
    if inconclusive:
        return VerificationResult("inconclusive", (), cells_total, deepest,
                                  pending_cells=pending)
    return VerificationResult("certified", (), cells_total, deepest)


# ---------------------------------------------------------------------------
# The CEGIS loop
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class CegisConfig:
    margin: float = 1.0
    a_max: float = 1e6
    max_iterations: int = 50
    sample_per_dim: int = 5
    node_limit: int = 200_000
    verifier: VerifierConfig = dataclasses.field(default_factory=VerifierConfig)


@dataclasses.dataclass
class SynthesisResult:
    status: str  # "certified", "infeasible-template", or "budget-exhausted"
    candidate: Optional[BarrierCandidate]
    iterations: int
    history: List[dict]
    verification: Optional[VerificationResult] = None


def cegis(posterior: GPPosterior, system: ControlAffineSystem, problem: ProblemSpec,
          template: BarrierTemplate, half_widths: np.ndarray,
          config: CegisConfig = CegisConfig()) -> SynthesisResult:
    """Alternate candidate solving and sound verification until certification.

    Exactly one counterexample (the verifier's worst) joins the matching
    sample pool per iteration.  A certified candidate is rescaled to unit
    max coefficient and re-verified before being returned.
    """
    samples = initial_samples(problem, config.sample_per_dim)
    g = system.constant_input_matrix
    history: List[dict] = []
    candidate = None
    for it in range(1, config.max_iterations + 1):
        cs = encode_feasibility(template, samples, posterior.mean, g,
                                problem.inputs, half_widths, config.margin)
        sr = solve_candidate(cs, a_max=config.a_max, node_limit=config.node_limit)
        if sr.status == "infeasible":
            history.append({"iteration": it, "solver": "infeasible", "slack": sr.slack})
            return SynthesisResult("infeasible-template", candidate, it, history)
        candidate = BarrierCandidate(template, sr.coefficients, config.margin)
        vr = verify_candidate(candidate, posterior, system, problem,
                              half_widths, config.verifier)
        record = {"iteration": it, "solver": "candidate", "slack": sr.slack,
                  "verdict": vr.status, "cells": vr.cells_explored,
                  "samples": samples.counts()}
        if vr.status == "certified":
            scaled = candidate.normalized()
            vr2 = verify_candidate(scaled, posterior, system, problem,
                                   half_widths, config.verifier)
            if vr2.status != "certified":
                raise VerifierInconsistencyError(
                    "rescaled certificate failed re-verification")
            history.append(record)
            return SynthesisResult("certified", scaled, it, history, verification=vr2)
        if vr.status == "inconclusive":
            record["pending_cells"] = vr.pending_cells
            history.append(record)
            return SynthesisResult("budget-exhausted", candidate, it, history,
                                   verification=vr)
        cex = vr.counterexamples[0]
        record["counterexample"] = {"x": cex.x.tolist(), "role": cex.role,
                                    "violation": cex.violation}
        history.append(record)
        if samples.contains(cex.role, cex.x):
            raise VerifierInconsistencyError(
                f"repeated counterexample {cex.x.tolist()} in role {cex.role}")
        samples.add(cex.role, cex.x)
    return SynthesisResult("budget-exhausted", candidate, config.max_iterations, history)


# ---------------------------------------------------------------------------
# Dense-grid condition checks against a known drift
# ---------------------------------------------------------------------------

def check_conditions_known_dynamics(candidate: BarrierCandidate,
                                    drift_fn: Callable[[np.ndarray], np.ndarray],
                                    input_matrix: np.ndarray, problem: ProblemSpec,
                                    half_widths: np.ndarray,
                                    per_dim: int = 400) -> Dict[str, float]:
    """Exhaustive grid evaluation of all three conditions for a given drift.

    Init and unsafe regions get per-box endpoint-inclusive grids; the flow
    condition (min over inputs, max over error-box vertices) is evaluated on
    a grid over the whole state box.  Returns worst values per family; the
    candidate passes when init_max <= 0, unsafe_min >= margin/2 and
    flow_max <= 0 up to the caller's tolerance.
    """
    g = np.asarray(input_matrix, dtype=float)
    half_widths = np.asarray(half_widths, dtype=float)
    init_max = -np.inf
    for box in problem.initial_boxes:
        init_max = max(init_max, float(candidate.eval(box.grid(per_dim)).max()))
    unsafe_min = np.inf
    for box in problem.unsafe_boxes:
        unsafe_min = min(unsafe_min, float(candidate.eval(box.grid(per_dim)).min()))
    X = problem.state_box.grid(per_dim)
    gU = np.atleast_2d(problem.inputs) @ g.T
    flow_max = -np.inf
    worst_x = None
    chunk = max(1, 2_000_000 // max(1, gU.shape[0]))
    for lo in range(0, X.shape[0], chunk):
        pts = X[lo:lo + chunk]
        G = candidate.gradient(pts)
        vals = (np.einsum("be,be->b", G, np.atleast_2d(drift_fn(pts)))
                + np.abs(G) @ half_widths + (G @ gU.T).min(axis=1))
        i = int(np.argmax(vals))
        if vals[i] > flow_max:
            flow_max = float(vals[i])
            worst_x = pts[i].copy()
    return {"init_max": init_max, "unsafe_min": unsafe_min,
            "flow_max": flow_max, "flow_worst_x": worst_x}


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_barrier(candidate: BarrierCandidate, path: Union[str, Path],
                 certificate: Optional[dict] = None) -> None:
    """Write a barrier and optional certificate metadata to JSON."""
    doc = {
        "n_vars": candidate.template.n_vars,
        "degree": candidate.template.degree,
        "basis_ordering": "graded-lexicographic",
        "exponents": candidate.template.exponents.tolist(),
        "coefficients": candidate.coefficients.tolist(),
        "margin": candidate.margin,
        "certificate": certificate,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_barrier(path: Union[str, Path]) -> Tuple[BarrierCandidate, Optional[dict]]:
    doc = json.loads(Path(path).read_text())
    template = BarrierTemplate(doc["n_vars"], doc["degree"])
    if doc["exponents"] != template.exponents.tolist():
        raise ValueError("stored basis ordering does not match graded lexicographic")
    candidate = BarrierCandidate(template, np.array(doc["coefficients"]), doc["margin"])
    return candidate, doc.get("certificate")
