"""Per-tick bounding control: QP stance torques and Raibert-placed swing legs.

One controller step queries the gait schedule, builds the COM reference and
desired wrench over the current stance pair, solves the force-allocation QP
over the feet scheduled in stance, and maps the result to joint torques
(tau = -J' lam on stance legs, i.e. the torque counteracting the desired
ground reaction; joint PD along an interpolated foot trajectory on swing
legs).  The controller is stateful (previous QP solution for warm starts
and regularization, swing anchors at lift-off) but repeated calls with the
same state and time return identical output: memory commits only when time
advances.

Off-schedule contact handling is touchdown-led with scheduled lift-off: a
swing leg that touches ground in late swing joins the force allocation
right away (an early-touching pair is usually the one that must catch the
torso), while a scheduled stance leg that has not touched down yet holds
its touchdown pose under swing PD and joins the moment it touches.
Commanding ground forces into airborne feet would only ever add upward
impulse (ground forces cannot pull), which ratchets the hop height up, so
the force allocation acts only on loaded legs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import gait as gait_mod
from . import qp as qp_mod
from . import slip as slip_mod
from .config import ControllerConfig
from .errors import UnreachableTargetError
from .model import (LEG_INDEX, LEG_SIDE, LEGS, ORI, com_state,
                    foot_jacobian, forward_kinematics, leg_inverse_kinematics,
                    leg_slice, rpy_rates_to_omega, rpy_to_matrix)

STANCE, SWING = "stance", "swing"
# swing legs touching ground earlier than this progress are treated as still
# lifting off, not as early touchdown
EARLY_TOUCHDOWN_PROGRESS = 0.5


@dataclass(frozen=True)
class ControlOutput:
    """One controller tick: torques plus diagnostics."""
    tau: np.ndarray                  # (12,)
    modes: tuple                     # per-leg mode in FR, FL, RR, RL order
    grf: dict                        # leg -> desired GRF (stance legs only)
    qp_solution: object              # GRFSolution | None
    com_ref: object                  # ComReference | None
    wrench: object                   # DesiredWrench | None
    ik_clamped: tuple                # legs whose swing target was clamped


def stance_torques(jac, lam):
    """Joint-space rows of J' lam for the leg owning the Jacobian.

    This is the generalized force the contact force lam induces on the
    leg's joints; the base rows of J' lam are the reaction wrench and are
    discarded.  To make a stance leg exert lam on the ground, command the
    negation of this value.
    """
    full = jac.matrix.T @ np.asarray(lam, float)
    return full[leg_slice(jac.leg)]


def swing_target(v, v_cmd, params, raibert_gain, hip_height, side, hip_link,
                 foot_radius):
    """Touchdown target for the foot center, in the hip-mount frame.

    Neutral-point placement plus speed-error feedback:
    x = v * stance_time / 2 + raibert_gain * (v - v_cmd); the lateral
    target is fixed relative to the hip mount (zero-roll posture), and the
    vertical drops to the ground given the current hip height.
    """
    stance_time = gait_mod.stance_duration(params)
    x = v * stance_time / 2.0 + raibert_gain * (v - v_cmd)
    return np.array([x, side * hip_link, -(hip_height - foot_radius)])


def _smoothstep(s):
    return s * s * (3.0 - 2.0 * s), 6.0 * s * (1.0 - s)


def swing_trajectory(start, target, progress, apex_z, duration):
    """Foot position/velocity reference along the swing arc.

    Horizontal: one cubic from start to target with zero end velocities.
    Vertical: two cubics through apex_z at mid-swing, again with zero end
    velocities.  `duration` scales the per-progress derivative into a true
    time velocity.
    """
    s = min(max(progress, 0.0), 1.0)
    start = np.asarray(start, float)
    target = np.asarray(target, float)
    pos = np.empty(3)
    vel = np.empty(3)
    h, hd = _smoothstep(s)
    for i in range(2):
        pos[i] = start[i] + (target[i] - start[i]) * h
        vel[i] = (target[i] - start[i]) * hd / duration
    if s < 0.5:
        u = s / 0.5
        h, hd = _smoothstep(u)
        pos[2] = start[2] + (apex_z - start[2]) * h
        vel[2] = (apex_z - start[2]) * hd * 2.0 / duration
    else:
        u = (s - 0.5) / 0.5
        h, hd = _smoothstep(u)
        pos[2] = apex_z + (target[2] - apex_z) * h
        vel[2] = (target[2] - apex_z) * hd * 2.0 / duration
    return pos, vel


class BoundingController:
    """Stateful gait controller driving one simulated robot.

    Not thread-safe across instances sharing state; create one controller
    per simulation.  `commanded_speed` may be adjusted between ticks (the
    trial harness ramps it); gait parameters are fixed per instance.
    """

    def __init__(self, model, params, cfg=None, ground_height=0.0,
                 soft_start_strides=3.0):
        if cfg is None:
            cfg = ControllerConfig()
        result = gait_mod.validate(params)
        if not result.ok:
            raise ValueError("invalid gait parameters: "
                             + "; ".join(result.violations))
        cfg.slip.check_speed(cfg.speed, cfg.min_hip_height)
        self.model = model
        self.params = params
        self.cfg = cfg
        self.ground_height = ground_height
        self.commanded_speed = cfg.speed
        self.standing = params.duty_factor >= 1.0
        # the hip arc assumes the gait's vertical limit cycle; fading its
        # amplitude in over the first strides lets a standing robot build
        # the oscillation in sync with the gait clock instead of being
        # launched by the full feed-forward
        self.soft_start_time = soft_start_strides * params.stride_duration
        # committed memory (consistent at a fixed time) and pending updates
        self._mem = {
            "lam": {leg: np.zeros(3) for leg in LEGS},
            "anchor": {leg: None for leg in LEGS},
            "mode": {leg: STANCE for leg in LEGS},
            "touchdown": {"rear": None, "front": None},
        }
        self._pending = None
        self._last_t = None

    # -- memory helpers -----------------------------------------------------

    def _begin_tick(self, t):
        if self._last_t is None or t > self._last_t:
            if self._pending is not None:
                self._mem = self._pending
            self._last_t = t
        self._pending = {
            "lam": dict(self._mem["lam"]),
            "anchor": dict(self._mem["anchor"]),
            "mode": dict(self._mem["mode"]),
            "touchdown": dict(self._mem["touchdown"]),
        }

    # -- one tick -----------------------------------------------------------

    def control_step(self, state, t):
        """Compute joint torques for the state at controller time t."""
        self._begin_tick(t)
        model, cfg, params = self.model, self.cfg, self.params
        q, qd = state.q, state.qd

        if self.standing:
            phases = {leg: gait_mod.LegPhase(True, 0.0, None, 0.0)
                      for leg in LEGS}
        else:
            phases = {leg: gait_mod.leg_phase(params, t, leg) for leg in LEGS}

        fk = forward_kinematics(model, q)
        com_pos, com_vel = com_state(model, q, qd)
        rot = rpy_to_matrix(q[ORI])
        omega = rpy_rates_to_omega(q[ORI]) @ qd[ORI]

        # force allocation acts on loaded legs: scheduled stance legs in
        # contact, plus early-touchdown legs in late swing
        if self.standing:
            stance_legs = list(LEGS)
            waiting_legs = []
            swing_legs = []
        else:
            touching = fk.foot[:, 2] <= self.ground_height + 1e-3
            stance_legs = []
            waiting_legs = []
            swing_legs = []
            for leg in LEGS:
                ph = phases[leg]
                if ph.in_stance:
                    if touching[LEG_INDEX[leg]]:
                        stance_legs.append(leg)
                    else:
                        waiting_legs.append(leg)
                elif (touching[LEG_INDEX[leg]]
                      and ph.swing_progress >= EARLY_TOUCHDOWN_PROGRESS):
                    stance_legs.append(leg)
                else:
                    swing_legs.append(leg)

        tau = np.zeros(12)
        modes = {}
        grf = {}
        sol = None
        ref = None
        wrench = None
        clamped = []

        # pair touchdown bookkeeping: the hip arc runs on time since the
        # measured touchdown, so a late landing does not start mid-arc
        for pair_name, members in (("rear", ("RR", "RL")),
                                   ("front", ("FR", "FL"))):
            loaded = any(leg in stance_legs for leg in members)
            was_loaded = any(self._mem["mode"][leg] == STANCE
                             for leg in members)
            if loaded and not was_loaded:
                self._pending["touchdown"][pair_name] = t
            elif not loaded:
                self._pending["touchdown"][pair_name] = None

        if stance_legs:
            sol, ref, wrench = self._stance_control(
                state, fk, com_pos, com_vel, rot, omega, stance_legs, phases,
                t, tau, grf)
        for leg in stance_legs:
            modes[leg] = STANCE
        for leg in waiting_legs:
            modes[leg] = self._swing_control(
                state, fk, com_vel, leg, phases[leg], tau, clamped,
                awaiting_touchdown=True)
        for leg in swing_legs:
            modes[leg] = self._swing_control(
                state, fk, com_vel, leg, phases[leg], tau, clamped)

        for leg in LEGS:
            self._pending["mode"][leg] = modes[leg]
        return ControlOutput(
            tau=tau,
            modes=tuple(modes[leg] for leg in LEGS),
            grf=grf,
            qp_solution=sol,
            com_ref=ref,
            wrench=wrench,
            ik_clamped=tuple(clamped),
        )

    # -- stance pair --------------------------------------------------------

    def _pair_stance_time(self, pair_name, t):
        """Time since the pair's measured touchdown (0 if just landed)."""
        td = self._pending["touchdown"][pair_name]
        if td is None:
            return 0.0
        return t - td

    def _reference_pair(self, stance_legs, t):
        """Stance pair owning the hip reference: the most recent touchdown."""
        pairs = []
        if "RR" in stance_legs or "RL" in stance_legs:
            pairs.append(("rear", ("RR", "RL")))
        if "FR" in stance_legs or "FL" in stance_legs:
            pairs.append(("front", ("FR", "FL")))
        return min(pairs, key=lambda p: self._pair_stance_time(p[0], t))

    def _stance_control(self, state, fk, com_pos, com_vel, rot, omega,
                        stance_legs, phases, t, tau, grf):
        model, cfg, params = self.model, self.cfg, self.params
        pair_name, pair = self._reference_pair(stance_legs, t)
        hip_mid = 0.5 * (fk.hip[LEG_INDEX[pair[0]]]
                         + fk.hip[LEG_INDEX[pair[1]]])
        v_x = com_vel[0]
        if self.standing:
            hip_ref = slip_mod.HipHeightRef(
                cfg.slip.offset(v_x) + self.ground_height, 0.0, 0.0)
        else:
            t_s = min(self._pair_stance_time(pair_name, t),
                      gait_mod.stance_duration(params))
            hip_ref = slip_mod.hip_height_reference(cfg.slip, v_x, params,
                                                    t_s)
            scale = 1.0
            if self.soft_start_time > 0:
                scale = min(1.0, self._last_t / self.soft_start_time)
            off = cfg.slip.offset(v_x)
            hip_ref = slip_mod.HipHeightRef(
                off + scale * (hip_ref.z - off) + self.ground_height,
                scale * hip_ref.zd, scale * hip_ref.zdd)
        torso = slip_mod.TorsoState(com_pos=com_pos, com_vel=com_vel,
                                    hip_pos=hip_mid, omega=omega,
                                    rotation=rot)
        ref = slip_mod.com_reference(hip_ref, torso, self.commanded_speed,
                                     cfg.com_gains)
        if self.standing:
            pitch_kp, pitch_kd = cfg.attitude_kp, cfg.attitude_kd
        else:
            pitch_kp, pitch_kd = 0.0, cfg.pitch_damping
        ang_acc = slip_mod.attitude_accel(state.q[ORI], omega, model, rot,
                                          cfg.attitude_kp, cfg.attitude_kd,
                                          pitch_kp, pitch_kd)
        ref = slip_mod.ComReference(pos=ref.pos, vel=ref.vel, acc=ref.acc,
                                    ang_vel=np.zeros(3), ang_acc=ang_acc)
        wrench = slip_mod.desired_wrench(ref, model, rot)

        feet = np.array([fk.foot[LEG_INDEX[leg]] for leg in stance_legs])
        wmap = qp_mod.build_wrench_map(com_pos, feet)
        lam_prev = np.concatenate([self._mem["lam"][leg]
                                   for leg in stance_legs])
        problem = qp_mod.assemble_problem(wmap, wrench.b, lam_prev, cfg.qp)
        sol = qp_mod.solve(problem, warm_start=lam_prev)
        for i, leg in enumerate(stance_legs):
            lam_i = sol.lam[3 * i:3 * i + 3]
            grf[leg] = lam_i
            self._pending["lam"][leg] = lam_i.copy()
            jac = foot_jacobian(model, state.q, leg)
            tau[leg_slice(leg).start - 6:leg_slice(leg).stop - 6] = \
                -stance_torques(jac, lam_i)
        for leg in LEGS:
            if leg not in stance_legs:
                self._pending["lam"][leg] = np.zeros(3)
        return sol, ref, wrench

    # -- swing legs ----------------------------------------------------------

    def _hip_frame_foot(self, fk, q, leg):
        """Foot center relative to the hip mount, world-aligned axes."""
        li = LEG_INDEX[leg]
        rot = rpy_to_matrix(q[ORI])
        mounts = self.model.hip_mounts()
        mount_w = q[0:3] + rot @ mounts[li]
        return fk.center[li] - mount_w, mount_w

    def _swing_control(self, state, fk, com_vel, leg, phase, tau, clamped,
                       awaiting_touchdown=False):
        model, cfg, params = self.model, self.cfg, self.params
        li = LEG_INDEX[leg]
        sl = leg_slice(leg)
        q_leg = state.q[sl]
        qd_leg = state.qd[sl]

        prev_mode = self._mem["mode"][leg]
        rel_foot, mount_w = self._hip_frame_foot(fk, state.q, leg)
        anchor = self._mem["anchor"][leg]
        if prev_mode == STANCE or anchor is None:
            anchor = rel_foot.copy()
        self._pending["anchor"][leg] = anchor

        sp = 1.0 if awaiting_touchdown else phase.swing_progress

        hip_height = mount_w[2] - self.ground_height
        target = swing_target(com_vel[0], self.commanded_speed, params,
                              cfg.raibert_gain, hip_height, LEG_SIDE[leg],
                              model.hip_link, model.foot_radius)
        apex_z = max(anchor[2], target[2]) + cfg.swing_apex
        duration = max(gait_mod.swing_duration(params), 1e-3)
        pos_ref, vel_ref = swing_trajectory(anchor, target, sp, apex_z,
                                            duration)

        pos_ref, was_clamped = self._clamp_workspace(pos_ref)
        if was_clamped:
            clamped.append(leg)
        try:
            q_des = leg_inverse_kinematics(model, pos_ref, leg)
        except UnreachableTargetError:
            clamped.append(leg)
            q_des = q_leg
        jac = foot_jacobian(model, state.q, leg).matrix[:, sl]
        # damped least squares; the damping floor bounds the inverse near
        # the straight-leg singularity
        qd_des = np.linalg.solve(jac.T @ jac + 1e-3 * np.eye(3),
                                 jac.T @ vel_ref)
        np.clip(qd_des, -30.0, 30.0, out=qd_des)
        tau[sl.start - 6:sl.stop - 6] = (cfg.swing_kp * (q_des - q_leg)
                                         + cfg.swing_kd * (qd_des - qd_leg))
        return SWING

    def _clamp_workspace(self, pos, margin=0.98):
        """Radially clamp a hip-frame target into the reachable shell."""
        model = self.model
        l1 = model.hip_link
        lo = abs(model.thigh - model.calf)
        hi = (model.thigh + model.calf) * margin
        rmin = math.sqrt(lo * lo + l1 * l1) + 1e-6
        rmax = math.sqrt(hi * hi + l1 * l1)
        r = float(np.linalg.norm(pos))
        if r < 1e-9:
            return np.array([0.0, l1, -rmax]), True
        if r > rmax:
            return pos * (rmax / r), True
        if r < rmin:
            return pos * (rmin / r), True
        return pos, False
