"""Ground-reaction-force allocation as a small dense QP.

Decision variable: stacked per-foot forces lam in R^{3k} for the k feet
currently in stance.  Cost  0.5 lam' H lam + f' lam  with

    H = A' W1 A + alpha W2 + beta W3
    f = -A' W1 b_d - beta W3 lam_prev

where A maps foot forces to the COM wrench and b_d is the desired wrench.
Feasible set: an inner-pyramid linearization of the friction cone,
five rows per foot (lam_z >= 0, mu lam_z >= |lam_x|, mu lam_z >= |lam_y|),
optionally capped by lam_z <= lam_max.  Solved by a primal active-set
method with warm starting; lam = 0 is always feasible so the problem can
never be infeasible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k
from .errors import QPIterationLimitError


@dataclass(frozen=True)
class QPSettings:
    """Weights and solver knobs; w1 weighs wrench error (force, moment)."""
    w1: tuple = (5.0, 1.0, 3.0, 50.0, 50.0, 50.0)
    alpha: float = 1e-3
    beta: float = 1e-2
    w2: float = 1.0            # diagonal scale of W2
    w3: float = 1.0            # diagonal scale of W3
    mu: float = 0.6
    lambda_max: float = 0.0    # per-foot vertical cap; 0 disables
    tolerance: float = 1e-10
    max_iterations: int = 200


@dataclass(frozen=True)
class WrenchMap:
    """A in R^{6 x 3k}: per-foot blocks [I3; skew(r_i)], r_i COM-to-foot."""
    A: np.ndarray
    r: np.ndarray  # (k, 3) COM-to-foot vectors


@dataclass(frozen=True)
class QPProblem:
    H: np.ndarray
    f: np.ndarray
    constraints: np.ndarray       # rows of  C lam >= d
    lower_bounds: np.ndarray      # d (zero for cone rows)
    n_feet: int
    settings: QPSettings

    def __post_init__(self):
        # positive definiteness is part of the contract; an eigenvalue
        # check catches the roundoff-positive pivots Cholesky lets through
        eigs = np.linalg.eigvalsh(self.H)
        if eigs.min() <= 1e-12 * max(1.0, eigs.max()):
            raise ValueError(
                "QP Hessian is not positive definite; use alpha > 0 or "
                "beta > 0")


@dataclass(frozen=True)
class GRFSolution:
    lam: np.ndarray
    multipliers: np.ndarray
    kkt_residual: float
    active_set: tuple
    iterations: int


def skew(v):
    """Skew-symmetric matrix with skew(v) @ u == cross(v, u)."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def build_wrench_map(com_pos, foot_positions):
    """Map from stacked foot forces to the net COM wrench.

    `foot_positions` is (k, 3) with k >= 1 contact points in world frame.
    """
    feet = np.atleast_2d(np.asarray(foot_positions, float))
    k = feet.shape[0]
    if k < 1:
        raise ValueError("wrench map needs at least one contact point")
    A = np.zeros((6, 3 * k))
    r = feet - np.asarray(com_pos, float)
    for i in range(k):
        A[0:3, 3 * i:3 * i + 3] = np.eye(3)
        A[3:6, 3 * i:3 * i + 3] = skew(r[i])
    return WrenchMap(A=A, r=r)


def friction_constraints(k, mu):
    """Inner-pyramid rows, five per foot:  M lam >= 0."""
    if not mu > 0:
        raise ValueError("friction coefficient must be positive")
    block = np.array([
        [0.0, 0.0, 1.0],
        [-1.0, 0.0, mu],
        [1.0, 0.0, mu],
        [0.0, -1.0, mu],
        [0.0, 1.0, mu],
    ])
    M = np.zeros((5 * k, 3 * k))
    for i in range(k):
        M[5 * i:5 * i + 5, 3 * i:3 * i + 3] = block
    return M


def assemble_problem(wrench_map, b_d, lam_prev=None, settings=QPSettings()):
    """Build the QP for the current stance feet and desired wrench."""
    A = wrench_map.A
    k = A.shape[1] // 3
    n = 3 * k
    W1 = np.diag(settings.w1)
    H = A.T @ W1 @ A
    H += (settings.alpha * settings.w2 + settings.beta * settings.w3) \
        * np.eye(n)
    if lam_prev is None:
        lam_prev = np.zeros(n)
    lam_prev = np.asarray(lam_prev, float)
    f = -A.T @ W1 @ np.asarray(b_d, float) \
        - settings.beta * settings.w3 * lam_prev
    C = friction_constraints(k, settings.mu)
    d = np.zeros(C.shape[0])
    if settings.lambda_max > 0:
        cap = np.zeros((k, n))
        for i in range(k):
            cap[i, 3 * i + 2] = -1.0
        C = np.vstack([C, cap])
        d = np.concatenate([d, np.full(k, -settings.lambda_max)])
    return QPProblem(H=H, f=f, constraints=C, lower_bounds=d, n_feet=k,
                     settings=settings)


def project_feasible(problem, lam):
    """Project a warm-start guess into the feasible pyramid (per foot)."""
    lam = np.asarray(lam, float).copy()
    mu = problem.settings.mu
    cap = problem.settings.lambda_max
    for i in range(problem.n_feet):
        fx, fy, fz = lam[3 * i:3 * i + 3]
        fz = max(fz, 0.0)
        if cap > 0:
            fz = min(fz, cap)
        bound = mu * fz
        lam[3 * i] = min(max(fx, -bound), bound)
        lam[3 * i + 1] = min(max(fy, -bound), bound)
        lam[3 * i + 2] = fz
    return lam


def solve(problem, warm_start=None):
    """Minimize the QP; returns a GRFSolution with a KKT certificate.

    Raises QPIterationLimitError when the active-set loop hits the
    iteration cap (only plausible on pathological inputs: lam = 0 is
    always feasible).
    """
    s = problem.settings
    if warm_start is None or np.max(np.abs(warm_start)) < 1e-8:
        # the kernel seeds from the projected unconstrained minimizer: it
        # usually sits on (or near) the optimal pyramid faces; a near-zero
        # warm start would instead park at the heavily degenerate apex
        x0 = np.zeros(problem.H.shape[0])
        seed_cold = True
    else:
        x0 = project_feasible(problem, warm_start)
        seed_cold = False
    lam, nu, iters, status, residual = _k.qp_active_set(
        problem.H, problem.f, problem.constraints, problem.lower_bounds,
        x0, seed_cold, s.mu, s.lambda_max, s.tolerance, s.max_iterations)
    residual = float(residual)
    if status != 0:
        raise QPIterationLimitError(
            f"active-set QP hit the iteration cap "
            f"({problem.settings.max_iterations}); KKT residual {residual:.3e}",
            iterations=iters, kkt_residual=residual)
    slack = problem.constraints @ lam - problem.lower_bounds
    active = tuple(int(i) for i in np.flatnonzero(slack <= 1e-9))
    return GRFSolution(lam=lam, multipliers=nu, kkt_residual=residual,
                       active_set=active, iterations=iters)
