"""Spring-mass hip-height reference, COM reference transfer, desired wrench.

During a pair's stance the hip height follows a fitted sinusoidal arc

    z(t_s) = -(a1 + a2 v) sin(pi t_s / (T gamma)) + (a3 - a4 v)

with t_s the time since stance onset and v the forward COM speed, so the
hip dips by (a1 + a2 v) at mid-stance and touches down/lifts off at the
speed-dependent offset (a3 - a4 v).  The desired COM motion is the hip
reference shifted by the measured hip-to-COM vector, and the desired wrench
stacks m*(a_des - g_vec) over R I R' w_dot_des.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class SlipCoeffs:
    """Fitted hip-arc coefficients; a2, a4 multiply forward speed."""
    a1: float = 0.004   # m, dip amplitude at zero speed
    a2: float = 0.002   # s, amplitude gain per m/s
    a3: float = 0.250   # m, hip offset at zero speed
    a4: float = 0.010   # s, offset drop per m/s

    def __post_init__(self):
        if not (self.a1 > 0 and self.a3 > 0):
            raise ConfigError("slip coefficients a1 and a3 must be positive")
        if self.a2 < 0 or self.a4 < 0:
            raise ConfigError("slip coefficients a2 and a4 must be nonnegative")

    def amplitude(self, v):
        return self.a1 + self.a2 * v

    def offset(self, v):
        return self.a3 - self.a4 * v

    def check_speed(self, v, min_hip_height):
        if self.offset(v) - self.amplitude(v) < min_hip_height:
            raise ConfigError(
                f"slip arc at speed {v} m/s dips below the minimum hip "
                f"height {min_hip_height} m")


@dataclass(frozen=True)
class HipHeightRef:
    """Hip height and its first two time derivatives."""
    z: float
    zd: float
    zdd: float


@dataclass(frozen=True)
class ComReference:
    """Desired COM motion and torso angular targets."""
    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray
    ang_vel: np.ndarray
    ang_acc: np.ndarray


@dataclass(frozen=True)
class DesiredWrench:
    """Stacked desired force (top) and moment (bottom) on the COM."""
    b: np.ndarray  # (6,)


@dataclass(frozen=True)
class TorsoState:
    """Measured quantities the COM reference transfer needs."""
    com_pos: np.ndarray
    com_vel: np.ndarray
    hip_pos: np.ndarray   # stance-pair hip midpoint
    omega: np.ndarray     # torso angular velocity, world frame
    rotation: np.ndarray  # torso rotation matrix (body -> world)


@dataclass(frozen=True)
class ComGains:
    """PD gains for the COM acceleration law (1/s^2, 1/s)."""
    kp: float = 100.0
    kd: float = 20.0


def hip_height_reference(coeffs, v, params, t_s):
    """Hip-height arc sample at stance time t_s in [0, T*gamma]."""
    Tg = params.stride_duration * params.duty_factor
    amp = coeffs.amplitude(v)
    off = coeffs.offset(v)
    w = math.pi / Tg
    z = -amp * math.sin(w * t_s) + off
    zd = -amp * w * math.cos(w * t_s)
    zdd = amp * w * w * math.sin(w * t_s)
    return HipHeightRef(z, zd, zdd)


def fit_slip_coefficients(samples):
    """Fit (a1..a4) to per-speed hip-height stance arcs.

    Each sample is (speed, t_s, z, stance_duration) with t_s and z arrays
    covering one stance.  Per speed, amplitude and offset come from a linear
    least-squares fit on the basis (-sin(pi t/duration), 1); the four
    coefficients then come from a linear regression of amplitude and offset
    against speed.  Needs at least two distinct speeds.

    Returns (SlipCoeffs, residual_rms) where residual_rms is the root mean
    square height residual over all samples under the fitted model.
    """
    per_speed = []
    for speed, t_s, z, duration in samples:
        t_s = np.asarray(t_s, float)
        z = np.asarray(z, float)
        basis = np.column_stack([-np.sin(np.pi * t_s / duration),
                                 np.ones_like(t_s)])
        (amp, off), *_ = np.linalg.lstsq(basis, z, rcond=None)
        per_speed.append((speed, amp, off))
    speeds = np.array([s for s, _, _ in per_speed])
    if np.ptp(speeds) < 1e-12:
        raise ConfigError(
            "slip fit is rank-deficient: need samples at two or more "
            "distinct speeds")
    amps = np.array([a for _, a, _ in per_speed])
    offs = np.array([o for _, _, o in per_speed])
    vs = np.column_stack([np.ones_like(speeds), speeds])
    (a1, a2), *_ = np.linalg.lstsq(vs, amps, rcond=None)
    (a3, neg_a4), *_ = np.linalg.lstsq(vs, offs, rcond=None)
    coeffs = SlipCoeffs(a1=float(a1), a2=float(max(a2, 0.0)),
                        a3=float(a3), a4=float(max(-neg_a4, 0.0)))
    sq_sum = 0.0
    n = 0
    for speed, t_s, z, duration in samples:
        t_s = np.asarray(t_s, float)
        z = np.asarray(z, float)
        zhat = (-coeffs.amplitude(speed)
                * np.sin(np.pi * t_s / duration) + coeffs.offset(speed))
        sq_sum += float(np.sum((z - zhat) ** 2))
        n += len(t_s)
    return coeffs, math.sqrt(sq_sum / n)


def com_reference(hip_ref, torso, v_cmd, gains, lateral_target=None):
    """Transfer the hip reference to a desired COM motion.

    Desired COM position/velocity follow from the hip reference plus the
    measured hip-to-COM vector (velocity includes omega x r).  The desired
    acceleration is a PD on the position/velocity errors plus the analytic
    vertical feed-forward of the hip arc.  Horizontal position is not
    regulated (the x target rides along with the robot; pass
    `lateral_target` to hold a y line instead).
    """
    r_hipcom = torso.com_pos - torso.hip_pos
    hip_pos_des = np.array([torso.hip_pos[0], torso.hip_pos[1], hip_ref.z])
    if lateral_target is not None:
        hip_pos_des[1] = lateral_target
    hip_vel_des = np.array([v_cmd, 0.0, hip_ref.zd])
    pos = hip_pos_des + r_hipcom
    vel = hip_vel_des + np.cross(torso.omega, r_hipcom)
    acc = (gains.kp * (pos - torso.com_pos)
           + gains.kd * (vel - torso.com_vel)
           + np.array([0.0, 0.0, hip_ref.zdd]))
    return ComReference(pos=pos, vel=vel, acc=acc,
                        ang_vel=np.zeros(3), ang_acc=np.zeros(3))


def attitude_accel(rpy, omega, model, rotation, kp, kd,
                   pitch_kp=0.0, pitch_kd=0.0):
    """Desired angular acceleration stabilizing roll and yaw.

    The PD acts as a torque law (gains in N m/rad and N m s/rad) mapped
    through the inverse world inertia, so the resulting wrench moment is
    exactly the PD torque.  During bounding pitch stays unregulated apart
    from an optional rate-damping term (the torso rotates freely); standing
    control passes full pitch gains instead.
    """
    moment = np.array([
        -kp * rpy[0] - kd * omega[0],
        -pitch_kp * rpy[1] - pitch_kd * omega[1],
        -kp * rpy[2] - kd * omega[2],
    ])
    inertia_w = rotation @ model.torso_inertia @ rotation.T
    return np.linalg.solve(inertia_w, moment)


def desired_wrench(ref, model, rotation):
    """Stacked desired COM wrench: [m (a_des - g_vec); R I R' w_dot_des]."""
    gvec = np.array([0.0, 0.0, -model.gravity])
    force = model.total_mass * (ref.acc - gvec)
    inertia_w = rotation @ model.torso_inertia @ rotation.T
    moment = inertia_w @ ref.ang_acc
    return DesiredWrench(b=np.concatenate([force, moment]))
