"""Numba kernels: kinematic tree, rigid-body dynamics, ground contact, QP.

All kernels operate on flat arrays describing the 18-DOF tree.  The floating
base is expanded into six virtual single-DOF joints (three world-axis
prismatic joints followed by a yaw-pitch-roll revolute chain), so ordinary
tree algorithms yield exact Euler-angle dynamics without special-casing the
base.  Conventions:

- world frame: x forward, y left, z up; gravity along -z;
- node i has rotation R[i] and joint-frame origin o[i] in world coordinates;
- each node may carry a rigid body (mass, COM offset and inertia about the
  COM, both expressed in the node frame);
- `qidx[i]` maps tree node i to its slot in the generalized coordinates, so
  the (roll, pitch, yaw) storage order coexists with the yaw->pitch->roll
  joint chain.
"""

import math

import numpy as np
from numba import njit

N_TREE = 18
N_LEGS = 4
# tree node ordering: 0-2 base translation, 3-5 base rotation, then
# (hip, thigh, calf) per leg in FR, FL, RR, RL order
CALF_NODES = (8, 11, 14, 17)


@njit(cache=True)
def _axis_rot(axis, angle):
    """Rotation matrix about a unit axis (Rodrigues)."""
    x, y, z = axis[0], axis[1], axis[2]
    c = math.cos(angle)
    s = math.sin(angle)
    cc = 1.0 - c
    out = np.empty((3, 3))
    out[0, 0] = c + x * x * cc
    out[0, 1] = x * y * cc - z * s
    out[0, 2] = x * z * cc + y * s
    out[1, 0] = y * x * cc + z * s
    out[1, 1] = c + y * y * cc
    out[1, 2] = y * z * cc - x * s
    out[2, 0] = z * x * cc - y * s
    out[2, 1] = z * y * cc + x * s
    out[2, 2] = c + z * z * cc
    return out


@njit(cache=True)
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True)
def tree_fk(parent, jtype, qidx, axis, tr, q):
    """Forward pass: world rotation, joint origin and world joint axis per node."""
    n = parent.shape[0]
    R = np.empty((n, 3, 3))
    o = np.empty((n, 3))
    aw = np.empty((n, 3))
    for i in range(n):
        p = parent[i]
        if p < 0:
            Rp = np.eye(3)
            op = np.zeros(3)
        else:
            Rp = R[p]
            op = o[p]
        for r in range(3):
            aw[i, r] = (Rp[r, 0] * axis[i, 0] + Rp[r, 1] * axis[i, 1]
                        + Rp[r, 2] * axis[i, 2])
            o[i, r] = (op[r] + Rp[r, 0] * tr[i, 0] + Rp[r, 1] * tr[i, 1]
                       + Rp[r, 2] * tr[i, 2])
        qi = q[qidx[i]]
        if jtype[i] == 1:
            R[i] = Rp @ _axis_rot(axis[i], qi)
        else:
            R[i] = Rp
            for r in range(3):
                o[i, r] += aw[i, r] * qi
    return R, o, aw


@njit(cache=True)
def tree_velocities(parent, jtype, qidx, o, aw, qd):
    """Angular velocity and joint-origin linear velocity per node (world)."""
    n = parent.shape[0]
    w = np.zeros((n, 3))
    v = np.zeros((n, 3))
    for i in range(n):
        p = parent[i]
        if p >= 0:
            d = o[i] - o[p]
            w[i] = w[p]
            v[i] = v[p] + _cross(w[p], d)
        qdi = qd[qidx[i]]
        if jtype[i] == 1:
            w[i] = w[i] + aw[i] * qdi
        else:
            v[i] = v[i] + aw[i] * qdi
    return w, v


@njit(cache=True)
def foot_points(R, o, calf_length, foot_radius):
    """Foot sphere centers and ground contact points (center shifted down)."""
    centers = np.empty((N_LEGS, 3))
    contacts = np.empty((N_LEGS, 3))
    off = np.array([0.0, 0.0, -calf_length])
    for leg in range(N_LEGS):
        node = CALF_NODES[leg]
        centers[leg] = o[node] + R[node] @ off
        contacts[leg] = centers[leg]
        contacts[leg, 2] -= foot_radius
    return centers, contacts


@njit(cache=True)
def foot_velocities(R, o, w, v, calf_length):
    """Linear velocity of each foot sphere center (world)."""
    out = np.empty((N_LEGS, 3))
    off = np.array([0.0, 0.0, -calf_length])
    for leg in range(N_LEGS):
        node = CALF_NODES[leg]
        out[leg] = v[node] + _cross(w[node], R[node] @ off)
    return out


@njit(cache=True)
def point_jacobian(parent, jtype, qidx, R, o, aw, node, offset, nq):
    """Jacobian of a point rigidly attached to `node` at local `offset`."""
    J = np.zeros((3, nq))
    p = o[node] + R[node] @ offset
    j = node
    while j >= 0:
        if jtype[j] == 1:
            col = _cross(aw[j], p - o[j])
        else:
            col = aw[j]
        for r in range(3):
            J[r, qidx[j]] = col[r]
        j = parent[j]
    return J


@njit(cache=True)
def com_state(parent, jtype, qidx, axis, tr, mass, com, q, qd):
    """Whole-robot COM position and velocity (mass-weighted over all links)."""
    R, o, aw = tree_fk(parent, jtype, qidx, axis, tr, q)
    w, v = tree_velocities(parent, jtype, qidx, o, aw, qd)
    n = parent.shape[0]
    psum = np.zeros(3)
    vsum = np.zeros(3)
    mtot = 0.0
    for i in range(n):
        m = mass[i]
        if m > 0.0:
            cw = R[i] @ com[i]
            psum += m * (o[i] + cw)
            vsum += m * (v[i] + _cross(w[i], cw))
            mtot += m
    return psum / mtot, vsum / mtot


@njit(cache=True)
def _rnea_core(parent, jtype, qidx, mass, com, inertia, R, o, aw, qd, qdd, g):
    n = parent.shape[0]
    w = np.zeros((n, 3))
    v = np.zeros((n, 3))
    dw = np.zeros((n, 3))
    ao = np.zeros((n, 3))
    f = np.zeros((n, 3))
    nmom = np.zeros((n, 3))
    gvec = np.array([0.0, 0.0, -g])
    for i in range(n):
        p = parent[i]
        if p >= 0:
            d = o[i] - o[p]
            w[i] = w[p]
            dw[i] = dw[p]
            v[i] = v[p] + _cross(w[p], d)
            ao[i] = ao[p] + _cross(dw[p], d) + _cross(w[p], _cross(w[p], d))
        qdi = qd[qidx[i]]
        qddi = qdd[qidx[i]]
        if jtype[i] == 1:
            # axis fixed in parent: its rate is w_parent x axis
            dw[i] = dw[i] + aw[i] * qddi + _cross(w[i], aw[i]) * qdi
            w[i] = w[i] + aw[i] * qdi
        else:
            ao[i] = ao[i] + aw[i] * qddi + 2.0 * _cross(w[i], aw[i] * qdi)
            v[i] = v[i] + aw[i] * qdi
        m = mass[i]
        if m > 0.0:
            cw = R[i] @ com[i]
            acom = ao[i] + _cross(dw[i], cw) + _cross(w[i], _cross(w[i], cw))
            F = m * (acom - gvec)
            Iw = R[i] @ inertia[i] @ R[i].T
            N = Iw @ dw[i] + _cross(w[i], Iw @ w[i])
            f[i] += F
            nmom[i] += N + _cross(cw, F)
    nq = qd.shape[0]
    tau = np.zeros(nq)
    for i in range(n - 1, -1, -1):
        if jtype[i] == 1:
            tau[qidx[i]] = aw[i] @ nmom[i]
        else:
            tau[qidx[i]] = aw[i] @ f[i]
        p = parent[i]
        if p >= 0:
            f[p] += f[i]
            nmom[p] += nmom[i] + _cross(o[i] - o[p], f[i])
    return tau


@njit(cache=True)
def rnea(parent, jtype, qidx, axis, tr, mass, com, inertia, q, qd, qdd, g):
    """Inverse dynamics: generalized force = M qdd + C(q, qd) + G(q)."""
    R, o, aw = tree_fk(parent, jtype, qidx, axis, tr, q)
    return _rnea_core(parent, jtype, qidx, mass, com, inertia, R, o, aw,
                      qd, qdd, g)


@njit(cache=True)
def _inertia_shift(I, m, d):
    """Parallel-axis shift of an inertia tensor by COM displacement d."""
    out = I.copy()
    dd = d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
    for r in range(3):
        out[r, r] += m * dd
        for c in range(3):
            out[r, c] -= m * d[r] * d[c]
    return out


@njit(cache=True)
def _crba_core(parent, jtype, qidx, mass, com, inertia, R, o, aw, nq):
    n = parent.shape[0]
    mc = mass.copy()
    cc = np.empty((n, 3))
    Ic = np.empty((n, 3, 3))
    for i in range(n):
        cc[i] = o[i] + R[i] @ com[i]
        Ic[i] = R[i] @ inertia[i] @ R[i].T
    for i in range(n - 1, 0, -1):
        p = parent[i]
        mtot = mc[p] + mc[i]
        if mtot > 0.0:
            cnew = (mc[p] * cc[p] + mc[i] * cc[i]) / mtot
        else:
            cnew = cc[p].copy()
        Ic[p] = (_inertia_shift(Ic[p], mc[p], cc[p] - cnew)
                 + _inertia_shift(Ic[i], mc[i], cc[i] - cnew))
        cc[p] = cnew
        mc[p] = mtot
    M = np.zeros((nq, nq))
    for i in range(n):
        ai = aw[i]
        rc = cc[i] - o[i]
        if jtype[i] == 1:
            F = mc[i] * _cross(ai, rc)
            N = Ic[i] @ ai + _cross(rc, F)
        else:
            F = mc[i] * ai
            N = _cross(rc, F)
        j = i
        while j >= 0:
            if jtype[j] == 1:
                val = aw[j] @ (N + _cross(o[i] - o[j], F))
            else:
                val = aw[j] @ F
            M[qidx[j], qidx[i]] = val
            M[qidx[i], qidx[j]] = val
            j = parent[j]
    return M


@njit(cache=True)
def crba(parent, jtype, qidx, axis, tr, mass, com, inertia, q):
    """Joint-space mass matrix by composite-rigid-body accumulation."""
    R, o, aw = tree_fk(parent, jtype, qidx, axis, tr, q)
    return _crba_core(parent, jtype, qidx, mass, com, inertia, R, o, aw,
                      q.shape[0])


@njit(cache=True)
def contact_law(points, vels, kn, dn, mu, vreg, height):
    """Spring-damper normal force with tanh-regularized Coulomb friction.

    Normal force k_n*delta + d_n*ddelta/dt is active only while penetrating
    and never pulls; the tangential force opposes slip with magnitude
    mu*f_z*tanh(slip/v_reg), so it stays strictly inside the friction cone.
    """
    lam = np.zeros((N_LEGS, 3))
    flags = np.zeros(N_LEGS, np.bool_)
    for i in range(N_LEGS):
        pen = height - points[i, 2]
        if pen > 0.0:
            flags[i] = True
            fz = kn * pen + dn * (-vels[i, 2])
            if fz < 0.0:
                fz = 0.0
            if fz > 0.0:
                vx = vels[i, 0]
                vy = vels[i, 1]
                slip = math.sqrt(vx * vx + vy * vy)
                if slip > 1e-12:
                    ft = mu * fz * math.tanh(slip / vreg)
                    lam[i, 0] = -ft * vx / slip
                    lam[i, 1] = -ft * vy / slip
            lam[i, 2] = fz
    return lam, flags


@njit(cache=True)
def contact_state(parent, jtype, qidx, axis, tr, q, qd, calf_length,
                  foot_radius):
    """Foot contact points and center velocities for the current state."""
    R, o, aw = tree_fk(parent, jtype, qidx, axis, tr, q)
    w, v = tree_velocities(parent, jtype, qidx, o, aw, qd)
    centers, contacts = foot_points(R, o, calf_length, foot_radius)
    vels = foot_velocities(R, o, w, v, calf_length)
    return contacts, vels


@njit(cache=True)
def forward_accel(parent, jtype, qidx, axis, tr, mass, com, inertia,
                  q, qd, tau12, lam, flags, calf_length, g):
    """Solve M qdd = S tau + sum_i J_i^T lam_i - (C + G) for qdd."""
    R, o, aw = tree_fk(parent, jtype, qidx, axis, tr, q)
    nq = q.shape[0]
    bias = _rnea_core(parent, jtype, qidx, mass, com, inertia, R, o, aw,
                      qd, np.zeros(nq), g)
    rhs = -bias
    for j in range(12):
        rhs[6 + j] += tau12[j]
    off = np.array([0.0, 0.0, -calf_length])
    for leg in range(N_LEGS):
        if flags[leg]:
            J = point_jacobian(parent, jtype, qidx, R, o, aw,
                               CALF_NODES[leg], off, nq)
            rhs += J.T @ lam[leg]
    M = _crba_core(parent, jtype, qidx, mass, com, inertia, R, o, aw, nq)
    return np.linalg.solve(M, rhs)


@njit(cache=True)
def sim_step(parent, jtype, qidx, axis, tr, mass, com, inertia,
             q, qd, tau12, calf_length, foot_radius,
             kn, dn, mu, vreg, height, g, tau_limit, vel_limit, dt):
    """One semi-implicit Euler step; returns state, contact data, clamp count.

    Actuation envelope: the usual motor torque-speed line.  Braking torque
    is available up to +-tau_limit; driving torque derates linearly from
    tau_limit at zero joint speed to zero at the no-load speed vel_limit.
    """
    tcl = np.empty(12)
    nclamp = 0
    for j in range(12):
        t = tau12[j]
        w = qd[6 + j]
        drive = 1.0 - abs(w) / vel_limit
        if drive < 0.0:
            drive = 0.0
        hi = tau_limit * (drive if w > 0.0 else 1.0)
        lo = -tau_limit * (drive if w < 0.0 else 1.0)
        if t > hi:
            t = hi
            nclamp += 1
        elif t < lo:
            t = lo
            nclamp += 1
        tcl[j] = t
    R, o, aw = tree_fk(parent, jtype, qidx, axis, tr, q)
    w, v = tree_velocities(parent, jtype, qidx, o, aw, qd)
    centers, contacts = foot_points(R, o, calf_length, foot_radius)
    vels = foot_velocities(R, o, w, v, calf_length)
    lam, flags = contact_law(contacts, vels, kn, dn, mu, vreg, height)
    nq = q.shape[0]
    bias = _rnea_core(parent, jtype, qidx, mass, com, inertia, R, o, aw,
                      qd, np.zeros(nq), g)
    rhs = -bias
    for j in range(12):
        rhs[6 + j] += tcl[j]
    off = np.array([0.0, 0.0, -calf_length])
    for leg in range(N_LEGS):
        if flags[leg]:
            J = point_jacobian(parent, jtype, qidx, R, o, aw,
                               CALF_NODES[leg], off, nq)
            rhs += J.T @ lam[leg]
    M = _crba_core(parent, jtype, qidx, mass, com, inertia, R, o, aw, nq)
    qdd = np.linalg.solve(M, rhs)
    qd2 = qd + dt * qdd
    q2 = q + dt * qd2
    return q2, qd2, lam, flags, nclamp


@njit(cache=True)
def _gram_full_rank(C, active, cand, n):
    """Whether the active rows of C plus row `cand` stay linearly independent.

    Small manual Cholesky on the Gram matrix; returns False on a tiny pivot.
    """
    rows = []
    for ci in range(C.shape[0]):
        if active[ci]:
            rows.append(ci)
    rows.append(cand)
    na = len(rows)
    if na > n:
        return False
    G = np.empty((na, na))
    for i in range(na):
        for j in range(na):
            s = 0.0
            for c in range(n):
                s += C[rows[i], c] * C[rows[j], c]
            G[i, j] = s
    # in-place Cholesky with pivot check
    scale = 0.0
    for i in range(na):
        if G[i, i] > scale:
            scale = G[i, i]
    if scale <= 0.0:
        return False
    for i in range(na):
        for j in range(i):
            s = G[i, j]
            for k2 in range(j):
                s -= G[i, k2] * G[j, k2]
            G[i, j] = s / G[j, j]
        s = G[i, i]
        for k2 in range(i):
            s -= G[i, k2] * G[i, k2]
        if s <= 1e-12 * scale:
            return False
        G[i, i] = math.sqrt(s)
    return True


@njit(cache=True)
def _eqp_full_kkt(H, f, C, d, x, idx_map, na, restore_face, least_squares):
    """Stable equality-constrained step on the working set via the full KKT.

    Solves for (p, y) in [[H, C_a'], [C_a, 0]] [p; y] = [-(Hx+f); r] with
    r = d_a - C_a x when `restore_face` (pulls x back onto the active face)
    and r = 0 otherwise.  Multipliers are nu = -y.  With `least_squares`
    the system is solved by minimum-norm least squares, which tolerates a
    rank-deficient working set.
    """
    n = H.shape[0]
    K = np.zeros((n + na, n + na))
    rhs = np.zeros(n + na)
    g = H @ x + f
    for r in range(n):
        for c in range(n):
            K[r, c] = H[r, c]
        rhs[r] = -g[r]
    for i in range(na):
        ri = idx_map[i]
        for c in range(n):
            K[n + i, c] = C[ri, c]
            K[c, n + i] = C[ri, c]
        if restore_face:
            s = 0.0
            for c in range(n):
                s += C[ri, c] * x[c]
            rhs[n + i] = d[ri] - s
    if least_squares:
        sol, _, _, _ = np.linalg.lstsq(K, rhs, -1.0)
    else:
        sol = np.linalg.solve(K, rhs)
    return sol[:n], sol[n:]


@njit(cache=True)
def qp_active_set(H, f, C, d, x0, seed_cold, mu, cap, tol, max_iter):
    """Primal active-set solver for min 0.5 x'Hx + f'x  s.t.  Cx >= d.

    When `seed_cold` the start point is the unconstrained minimizer
    projected into the per-foot friction pyramid (mu, optional vertical cap);
    otherwise `x0` is used and must be feasible.  Returns (x, multipliers,
    iterations, status, kkt_residual) with status 0 on convergence, 1 on
    hitting the iteration cap.

    The working set is kept linearly independent (a dependent blocking row
    cannot truly block because the step already satisfies the rows it
    depends on), so each reduced system is nonsingular and the multipliers
    unique.  Each subproblem is solved through the Schur complement
    S = C_a H^-1 C_a' with H^-1 applied once up front:

        S y = -C_a (x + H^-1 f),   p = -(x + H^-1 f) - H^-1 C_a' y,

    nu = -y, so iterations cost one na x na solve.  If the Schur step drifts
    off the active face (ill-conditioned S), it is recomputed through the
    full KKT system, and the converged point is polished the same way.
    """
    n = H.shape[0]
    m = C.shape[0]
    u = np.linalg.solve(H, f)           # H^-1 f
    V = np.linalg.solve(H, C.T)         # H^-1 C', (n, m)
    P = C @ V                           # C H^-1 C', (m, m)
    # resolve degenerate vertices (many coincident faces, e.g. the pyramid
    # apex) by nudging each face outward a distinct epsilon; the final
    # polish restores the true faces, so the certificate is unaffected
    dp = np.empty(m)
    for ci in range(m):
        dp[ci] = d[ci] - 1e-12 * (ci + 1)
    if seed_cold:
        # project -u into the pyramid foot by foot
        x = np.empty(n)
        for foot in range(n // 3):
            fz = -u[3 * foot + 2]
            if fz < 0.0:
                fz = 0.0
            if cap > 0.0 and fz > cap:
                fz = cap
            bound = mu * fz
            for c in range(2):
                t = -u[3 * foot + c]
                if t > bound:
                    t = bound
                elif t < -bound:
                    t = -bound
                x[3 * foot + c] = t
            x[3 * foot + 2] = fz
    else:
        x = x0.copy()
    active = np.zeros(m, np.bool_)
    nu_full = np.zeros(m)
    status = 1
    iters = 0
    fscale = 1.0
    for r in range(n):
        if abs(f[r]) > fscale:
            fscale = abs(f[r])

    idx_map = np.empty(m, np.int64)
    p = np.empty(n)
    # robust mode switches every reduced solve to minimum-norm least
    # squares, which tolerates a (near-)dependent working set; entered when
    # the fast path gets stuck at a degenerate vertex
    robust = False
    while iters < max_iter:
        iters += 1
        na = 0
        for ci in range(m):
            if active[ci]:
                idx_map[na] = ci
                na += 1
        # xu = x + H^-1 f  (equals H^-1 (Hx + f))
        y = np.empty(0)
        if na == 0:
            for r in range(n):
                p[r] = -(x[r] + u[r])
        elif robust:
            p2, y2 = _eqp_full_kkt(H, f, C, d, x, idx_map, na, False, True)
            p = p2
            y = y2
        else:
            S = np.empty((na, na))
            rhs = np.empty(na)
            for i in range(na):
                ri = idx_map[i]
                for j in range(na):
                    S[i, j] = P[ri, idx_map[j]]
                s = 0.0
                for c in range(n):
                    s += C[ri, c] * (x[c] + u[c])
                rhs[i] = -s
            y = np.linalg.solve(S, rhs)
            for r in range(n):
                s = -(x[r] + u[r])
                for i in range(na):
                    s -= V[r, idx_map[i]] * y[i]
                p[r] = s
        pmax = 0.0
        xmax = 0.0
        for r in range(n):
            if abs(p[r]) > pmax:
                pmax = abs(p[r])
            if abs(x[r]) > xmax:
                xmax = abs(x[r])
        if na > 0 and not robust:
            # Schur accuracy check: the step must stay on the active face
            face_err = 0.0
            for i in range(na):
                s = 0.0
                for c in range(n):
                    s += C[idx_map[i], c] * p[c]
                if abs(s) > face_err:
                    face_err = abs(s)
            if face_err > 1e-9 * (1.0 + pmax):
                p2, y2 = _eqp_full_kkt(H, f, C, d, x, idx_map, na, False,
                                       False)
                p = p2
                y = y2
                pmax = 0.0
                for r in range(n):
                    if abs(p[r]) > pmax:
                        pmax = abs(p[r])
        stationary = pmax <= tol * (1.0 + xmax)
        step_converged = stationary
        if not stationary:
            alpha = 1.0
            blocking = -1
            cp_floor = -1e-10 * pmax
            for ci in range(m):
                if not active[ci]:
                    cp = 0.0
                    cx = 0.0
                    for c in range(n):
                        cp += C[ci, c] * p[c]
                        cx += C[ci, c] * x[c]
                    if cp < cp_floor:
                        a = (dp[ci] - cx) / cp
                        if a < alpha:
                            alpha = a if a > 0.0 else 0.0
                            blocking = ci
            x = x + alpha * p
            if blocking >= 0:
                if robust or _gram_full_rank(C, active, blocking, n):
                    active[blocking] = True
                elif alpha <= 0.0:
                    # a (near-)dependent row blocks a zero-length step:
                    # re-solve this vertex in least-squares mode, where the
                    # row can simply join the working set
                    robust = True
                    active[blocking] = True
        if stationary:
            # check multipliers nu = -y, drop the most negative
            worst = -1
            worst_val = -1e-9 * fscale
            for i in range(na):
                nu = -y[i]
                if nu < worst_val:
                    worst_val = nu
                    worst = i
            if worst < 0:
                if na > 0 and step_converged:
                    # polish: accurate step that also restores the face
                    p2, y2 = _eqp_full_kkt(H, f, C, d, x, idx_map, na, True,
                                           robust)
                    x = x + p2
                    for i in range(na):
                        nu_full[idx_map[i]] = -y2[i]
                status = 0
                break
            active[idx_map[worst]] = False

    resid = 0.0
    g = H @ x + f
    for r in range(n):
        s = g[r]
        for ci in range(m):
            s -= C[ci, r] * nu_full[ci]
        if abs(s) > resid:
            resid = abs(s)
    return x, nu_full, iters, status, resid
