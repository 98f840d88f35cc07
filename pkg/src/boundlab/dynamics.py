"""Forward dynamics of the floating-base quadruped with penalty ground contact.

The plant solves  M(q) qdd = S tau + sum_i J_i^T lam_i - (C(q, qd) + G(q))
every step and integrates semi-implicitly (velocity first, then position).
Sign convention: bias_forces returns C + G on the left-hand side, so the
vertical base entry of the gravity vector is +m*g and unforced free fall
yields qdd_z = -g.

Contact is a regularized penalty law evaluated on the current state:
normal force k_n*delta + d_n*(d delta/dt) while penetrating (never
negative), tangential force opposing slip with magnitude
mu * f_z * tanh(slip_speed / v_reg).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import _kernels as _k
from .errors import SimulationFault
from .model import NQ, _dyn_args, _fk_args

MAX_DT = 2e-3


@dataclass(frozen=True)
class GroundModel:
    """Flat-ground penalty contact parameters."""
    stiffness: float = 1e5          # N/m
    damping: float = 150.0          # N s/m, see default rationale in README
    friction: float = 0.6
    regularization_velocity: float = 0.2   # m/s
    height: float = 0.0

    def __post_init__(self):
        if not self.stiffness > 0:
            raise ValueError("ground stiffness must be positive")
        if self.damping < 0:
            raise ValueError("ground damping must be nonnegative")
        if not self.friction > 0:
            raise ValueError("friction coefficient must be positive")
        if not self.regularization_velocity > 0:
            raise ValueError("regularization velocity must be positive")


@dataclass(frozen=True)
class FullState:
    """Generalized positions/velocities plus simulation time."""
    q: np.ndarray
    qd: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, float))
        object.__setattr__(self, "qd", np.asarray(self.qd, float))
        if self.q.shape != (NQ,) or self.qd.shape != (NQ,):
            raise ValueError(f"state vectors must have shape ({NQ},)")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qd))):
            raise ValueError("state contains non-finite entries")


class StepInfo(NamedTuple):
    """Per-step contact and actuation diagnostics."""
    grf: np.ndarray        # (4, 3) ground reaction force per foot
    contact: np.ndarray    # (4,) bool penetration flags
    torque_clamps: int     # entries clipped to the torque limit


def mass_matrix(model, q):
    """18x18 joint-space mass matrix (symmetric, PD away from pitch = +-pi/2)."""
    return _k.crba(*_dyn_args(model), np.asarray(q, float))


def bias_forces(model, q, qd):
    """Coriolis/centrifugal plus gravity vector C(q, qd) + G(q)."""
    q = np.asarray(q, float)
    qd = np.asarray(qd, float)
    return _k.rnea(*_dyn_args(model), q, qd, np.zeros(NQ), model.gravity)


def contact_forces(model, state, ground):
    """Penalty-law ground reaction force and contact flag per foot."""
    points, vels = _k.contact_state(*_fk_args(model), state.q, state.qd,
                                    model.calf, model.foot_radius)
    lam, flags = _k.contact_law(points, vels, ground.stiffness,
                                ground.damping, ground.friction,
                                ground.regularization_velocity, ground.height)
    return lam, flags


def forward_accelerations(model, state, tau, ground):
    """Generalized accelerations under the given torques and current contact."""
    lam, flags = contact_forces(model, state, ground)
    tau = np.asarray(tau, float)
    return _k.forward_accel(*_dyn_args(model), state.q, state.qd, tau, lam,
                            flags, model.calf, model.gravity)


def step(model, state, tau, ground, dt):
    """Advance one fixed step of semi-implicit Euler; returns the new state.

    Torques are clamped to the model's actuation envelope before
    application (magnitude limit; beyond the joint speed limit the motor can
    only brake).  Raises SimulationFault if the linear solve fails (singular
    mass matrix).
    """
    new_state, _ = step_detailed(model, state, tau, ground, dt)
    return new_state


def step_detailed(model, state, tau, ground, dt):
    """Like step() but also returns StepInfo (GRFs, contact flags, clamps)."""
    if not 0.0 < dt <= MAX_DT:
        raise ValueError(f"dt must lie in (0, {MAX_DT}] s, got {dt}")
    tau = np.asarray(tau, float)
    if tau.shape != (12,):
        raise ValueError("torque command must have shape (12,)")
    try:
        q2, qd2, lam, flags, nclamp = _k.sim_step(
            *_dyn_args(model), state.q, state.qd, tau,
            model.calf, model.foot_radius,
            ground.stiffness, ground.damping, ground.friction,
            ground.regularization_velocity, ground.height,
            model.gravity, model.torque_limit, model.velocity_limit, dt)
    except Exception as exc:  # LinAlgError from the kernel solve
        raise SimulationFault(
            f"dynamics solve failed at t={state.t:.4f}: {exc}") from exc
    if not (np.all(np.isfinite(q2)) and np.all(np.isfinite(qd2))):
        raise SimulationFault(
            f"non-finite state after step at t={state.t:.4f}")
    new_state = FullState(q=q2, qd=qd2, t=state.t + dt)
    return new_state, StepInfo(grf=lam, contact=flags, torque_clamps=nclamp)


def kinetic_energy(model, q, qd):
    """0.5 qd' M qd."""
    qd = np.asarray(qd, float)
    return 0.5 * qd @ mass_matrix(model, q) @ qd


def potential_energy(model, q, qd=None):
    """m g z_com, measured from the world origin."""
    from .model import com_state
    pos, _ = com_state(model, q, np.zeros(NQ))
    return model.total_mass * model.gravity * pos[2]


def mechanical_energy(model, state):
    """Kinetic plus gravitational potential energy."""
    return (kinetic_energy(model, state.q, state.qd)
            + potential_energy(model, state.q))
