"""Force-allocation QP tests: wrench map, friction rows, solver optimality."""

import numpy as np
import pytest

from boundlab.errors import QPIterationLimitError
from boundlab.qp import (GRFSolution, QPSettings, assemble_problem,
                         build_wrench_map, friction_constraints,
                         project_feasible, skew, solve)


def random_problem(rng, k=None, wild=False):
    if k is None:
        k = int(rng.choice([1, 2, 4]))
    feet = rng.uniform(-0.3, 0.3, (k, 3))
    feet[:, 2] = -rng.uniform(0.2, 0.35, k)
    wmap = build_wrench_map(np.zeros(3), feet)
    scale = 300.0 if wild else 80.0
    b_d = rng.normal(0, scale, 6)
    lam_prev = rng.normal(0, 30.0, 3 * k)
    return assemble_problem(wmap, b_d, lam_prev)


def pg_oracle(problem, max_iter=1000000, tol=1e-10):
    """Projected-gradient oracle on the dual of

        min 0.5 x'Hx + f'x  s.t.  Cx >= d.

    Accelerated projected gradient (FISTA with function restarts and
    nonnegative clamping) finds the dual point; the constraints it declares
    active are then pinned exactly with one least-squares KKT solve, so the
    oracle's accuracy is limited by linear algebra, not by the iteration.
    The active set discovery is entirely independent of the solver under
    test.
    """
    H, f, C, d = (problem.H, problem.f, problem.constraints,
                  problem.lower_bounds)
    m = C.shape[0]
    n = H.shape[0]
    Q = C @ np.linalg.solve(H, C.T)       # dual Hessian (PSD)
    c0 = C @ np.linalg.solve(H, f) + d    # dual gradient offset
    L = np.linalg.eigvalsh(Q).max()
    nu = np.zeros(m)
    y = nu.copy()
    t_acc = 1.0
    fval = np.inf
    for _ in range(max_iter):
        grad = Q @ y - c0
        nu_next = np.maximum(y - grad / L, 0.0)
        f_next = 0.5 * nu_next @ Q @ nu_next - c0 @ nu_next
        if f_next > fval:                 # function restart
            y = nu.copy()
            t_acc = 1.0
            fval = np.inf
            continue
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t_acc * t_acc))
        y = nu_next + (t_acc - 1) / t_next * (nu_next - nu)
        nu, t_acc, fval = nu_next, t_next, f_next
        # optimality residual of the projected gradient map at nu itself
        resid = nu - np.maximum(nu - (Q @ nu - c0) / L, 0.0)
        if np.abs(resid).max() < tol * (1.0 + np.abs(nu).max()):
            break
    x = np.linalg.solve(H, C.T @ nu - f)

    # pin the PG-identified active set exactly (least-squares KKT), then
    # clean the set: add any row the pinned point violates, drop rows whose
    # pinned multiplier is negative
    slack = C @ x - d
    active = (slack < 1e-7 * (1 + np.abs(slack).max())) \
        | (nu > 1e-9 * (1 + nu.max()))

    def pin(active):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            return np.linalg.solve(H, -f), np.zeros(m)
        K = np.zeros((n + len(idx), n + len(idx)))
        K[:n, :n] = H
        K[n:, :n] = C[idx]
        K[:n, n:] = C[idx].T
        rhs = np.concatenate([-f, d[idx]])
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        nu_pin = np.zeros(m)
        nu_pin[idx] = -sol[n:]
        return sol[:n], nu_pin

    for _ in range(3 * m):
        x_pin, nu_pin = pin(active)
        slack_pin = C @ x_pin - d
        worst_violation = int(np.argmin(slack_pin))
        if slack_pin[worst_violation] < -1e-9 and \
                not active[worst_violation]:
            active[worst_violation] = True
            continue
        neg = np.flatnonzero(active & (nu_pin < -1e-9 * (1 + np.abs(
            nu_pin).max())))
        if len(neg):
            active[neg[int(np.argmin(nu_pin[neg]))]] = False
            continue
        if slack_pin.min() >= -1e-8:
            return x_pin, nu_pin
        break
    return x, nu


# ---------------------------------------------------------------------------
# wrench map


def test_wrench_map_force_and_moment_blocks():
    feet = np.array([[0.1, 0.0, -0.3]])
    wmap = build_wrench_map(np.zeros(3), feet)
    lam = np.array([0.0, 0.0, 10.0])
    wrench = wmap.A @ lam
    np.testing.assert_allclose(wrench[:3], lam, atol=1e-15)
    np.testing.assert_allclose(wrench[3:], [0.0, -1.0, 0.0], atol=1e-15)


def test_wrench_map_foot_below_com_no_moment():
    wmap = build_wrench_map(np.array([0.2, 0.1, 0.5]),
                            np.array([[0.2, 0.1, 0.0]]))
    wrench = wmap.A @ np.array([0.0, 0.0, 50.0])
    np.testing.assert_allclose(wrench[3:], 0.0, atol=1e-12)


def test_wrench_map_symmetric_feet_cancel_roll():
    feet = np.array([[0.0, 0.13, -0.3], [0.0, -0.13, -0.3]])
    wmap = build_wrench_map(np.zeros(3), feet)
    wrench = wmap.A @ np.array([0, 0, 50.0, 0, 0, 50.0])
    assert abs(wrench[3]) < 1e-12


def test_skew_blocks_antisymmetric(rng):
    feet = rng.uniform(-0.3, 0.3, (3, 3))
    wmap = build_wrench_map(np.zeros(3), feet)
    for i in range(3):
        block = wmap.A[3:6, 3 * i:3 * i + 3]
        np.testing.assert_allclose(block.T, -block, atol=1e-15)
        np.testing.assert_allclose(block, skew(wmap.r[i]), atol=1e-15)


# ---------------------------------------------------------------------------
# friction pyramid rows


def test_pure_normal_force_feasible():
    M = friction_constraints(1, 0.6)
    assert np.all(M @ np.array([0.0, 0.0, 10.0]) >= 0.0)


def test_excessive_tangential_infeasible():
    M = friction_constraints(1, 0.6)
    rows = M @ np.array([7.0, 0.0, 10.0])
    assert rows.min() == pytest.approx(-1.0)


def test_pyramid_face_boundary():
    M = friction_constraints(1, 0.6)
    rows = M @ np.array([6.0, 0.0, 10.0])
    assert rows.min() == pytest.approx(0.0, abs=1e-12)


def test_five_rows_per_foot():
    assert friction_constraints(3, 0.6).shape == (15, 9)


# ---------------------------------------------------------------------------
# solver


def test_zero_wrench_zero_solution():
    wmap = build_wrench_map(np.zeros(3), np.array([[0.1, 0.1, -0.3]]))
    problem = assemble_problem(wmap, np.zeros(6))
    sol = solve(problem)
    np.testing.assert_allclose(sol.lam, 0.0, atol=1e-9)


def test_interior_optimum_matches_linear_solve(rng):
    # supportive demand keeps the optimum strictly inside the pyramid
    feet = np.array([[0.15, -0.1, -0.3], [-0.15, 0.1, -0.3]])
    wmap = build_wrench_map(np.zeros(3), feet)
    problem = assemble_problem(wmap, np.array([0, 0, 120.0, 0, 0, 0]))
    sol = solve(problem)
    expected = np.linalg.solve(problem.H, -problem.f)
    np.testing.assert_allclose(sol.lam, expected, atol=1e-8)


def test_cone_riding_solution_on_face():
    # demanded tangential/normal ratio beyond mu lands on the pyramid face
    foot = np.array([[0.0, 0.0, -0.3]])
    wmap = build_wrench_map(np.zeros(3), foot)
    lam_des = np.array([100.0, 0.0, 100.0])
    b_d = np.concatenate([lam_des, np.cross(foot[0], lam_des)])
    sol = solve(assemble_problem(wmap, b_d))
    assert sol.lam[0] == pytest.approx(0.6 * sol.lam[2], abs=1e-8)
    x_pg, _ = pg_oracle(assemble_problem(wmap, b_d))
    np.testing.assert_allclose(sol.lam, x_pg, atol=1e-10)


def test_kkt_certificate_on_random_problems(rng):
    for _ in range(1000):
        problem = random_problem(rng)
        sol = solve(problem)
        slack = problem.constraints @ sol.lam - problem.lower_bounds
        assert sol.kkt_residual <= 1e-6
        assert slack.min() >= -1e-9
        assert np.all(sol.multipliers >= -1e-9)
        comp = np.abs(sol.multipliers * slack)
        assert comp.max() <= 1e-8


def test_matches_projected_gradient_oracle(rng):
    for _ in range(60):
        problem = random_problem(rng)
        sol = solve(problem)
        x_pg, _ = pg_oracle(problem)
        np.testing.assert_allclose(sol.lam, x_pg, atol=1e-6)


def test_warm_start_equivalence(rng):
    worst = 0.0
    for _ in range(1000):
        problem = random_problem(rng)
        cold = solve(problem)
        warm = solve(problem, warm_start=rng.normal(0, 50,
                                                    problem.H.shape[0]))
        worst = max(worst, np.abs(cold.lam - warm.lam).max())
    assert worst <= 1e-8


def test_wrench_scaling_linearity(rng):
    # with no regularization the unconstrained minimizer scales linearly;
    # one foot keeps A full column rank so H = A'W1A stays definite
    wmap = build_wrench_map(np.zeros(3), np.array([[0.1, -0.05, -0.3]]))
    settings = QPSettings(alpha=0.0, beta=0.0, w2=0.0, w3=0.0)
    b_d = np.array([5.0, -2.0, 120.0, 1.0, -1.0, 0.5])
    lam1 = np.linalg.solve(
        assemble_problem(wmap, b_d, settings=settings).H,
        -assemble_problem(wmap, b_d, settings=settings).f)
    lam3 = np.linalg.solve(
        assemble_problem(wmap, 3.0 * b_d, settings=settings).H,
        -assemble_problem(wmap, 3.0 * b_d, settings=settings).f)
    np.testing.assert_allclose(lam3, 3.0 * lam1, rtol=1e-12)


def test_hessian_must_be_positive_definite():
    # two feet with no regularization leave an internal-force null space
    # (any force pair along the line between the contacts)
    feet = np.array([[0.18, -0.13, -0.3], [-0.18, 0.13, -0.3]])
    wmap = build_wrench_map(np.zeros(3), feet)
    with pytest.raises(ValueError, match="positive definite"):
        assemble_problem(wmap, np.zeros(6),
                         settings=QPSettings(alpha=0.0, beta=0.0))


def test_vertical_cap_rows(rng):
    feet = np.array([[0.0, 0.0, -0.3]])
    wmap = build_wrench_map(np.zeros(3), feet)
    settings = QPSettings(lambda_max=100.0)
    problem = assemble_problem(wmap, np.array([0, 0, 500.0, 0, 0, 0]),
                               settings=settings)
    sol = solve(problem)
    assert sol.lam[2] <= 100.0 + 1e-9


def test_project_feasible_respects_pyramid(rng):
    problem = random_problem(rng, k=2)
    for _ in range(100):
        lam = project_feasible(problem, rng.normal(0, 100, 6))
        assert np.all(problem.constraints @ lam
                      >= problem.lower_bounds - 1e-12)


def test_hostile_demands_still_converge(rng):
    # straight-down demands park the optimum at the degenerate apex
    for _ in range(200):
        k = int(rng.choice([1, 2, 4]))
        feet = rng.uniform(-0.3, 0.3, (k, 3))
        feet[:, 2] = -rng.uniform(0.2, 0.35, k)
        wmap = build_wrench_map(np.zeros(3), feet)
        b_d = np.array([0, 0, -200.0, 0, 0, 0]) + rng.normal(0, 5, 6)
        problem = assemble_problem(wmap, b_d)
        sol = solve(problem, warm_start=rng.normal(0, 1e-13, 3 * k))
        assert sol.kkt_residual <= 1e-6
