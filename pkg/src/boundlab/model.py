"""Robot model: configuration layout, model-file loading, kinematics.

Configuration vector layout (fixed everywhere in this package):

    q[0:3]   torso position (x, y, z) in the world frame
    q[3:6]   torso orientation as (roll, pitch, yaw); the rotation applied
             to the torso is R = Rz(yaw) @ Ry(pitch) @ Rx(roll)
    q[6:18]  leg joints in FR, FL, RR, RL order, each (hip, thigh, calf)

Legs: the hip joint rotates about the torso x axis at the hip mount, the
thigh and calf joints rotate about y.  At the all-zero configuration every
leg hangs straight down, so the foot sits below the thigh joint at a depth
of thigh + calf length.  Pitch must stay inside (-pi/2, pi/2); at the
boundary the Euler parameterization loses a rotational degree of freedom.
"""

from __future__ import annotations

import configparser
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from typing import NamedTuple

import numpy as np

from . import _kernels as _k
from .errors import ModelFileError, ModelValidationError, UnreachableTargetError

NQ = 18
NU = 12
LEGS = ("FR", "FL", "RR", "RL")
LEG_INDEX = {name: i for i, name in enumerate(LEGS)}
# +1 for left legs, -1 for right legs (sign of the lateral hip-link offset)
LEG_SIDE = {"FR": -1.0, "FL": 1.0, "RR": -1.0, "RL": 1.0}
POS = slice(0, 3)
ORI = slice(3, 6)

MODEL_SCHEMA_VERSION = 1


def leg_slice(leg):
    """Slice of the configuration vector holding a leg's (hip, thigh, calf)."""
    i = LEG_INDEX[leg]
    return slice(6 + 3 * i, 9 + 3 * i)


def rpy_to_matrix(rpy):
    """Torso rotation matrix from (roll, pitch, yaw)."""
    cr, sr = math.cos(rpy[0]), math.sin(rpy[0])
    cp, sp = math.cos(rpy[1]), math.sin(rpy[1])
    cy, sy = math.cos(rpy[2]), math.sin(rpy[2])
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


def rpy_rates_to_omega(rpy):
    """Matrix E with omega_world = E @ (roll_dot, pitch_dot, yaw_dot)."""
    cp, sp = math.cos(rpy[1]), math.sin(rpy[1])
    cy, sy = math.cos(rpy[2]), math.sin(rpy[2])
    return np.array([
        [cy * cp, -sy, 0.0],
        [sy * cp, cy, 0.0],
        [-sp, 0.0, 1.0],
    ])


class TreeArrays(NamedTuple):
    """Flat tree description consumed by the numba kernels."""
    parent: np.ndarray
    jtype: np.ndarray
    qidx: np.ndarray
    axis: np.ndarray
    tr: np.ndarray
    mass: np.ndarray
    com: np.ndarray
    inertia: np.ndarray


class FootKinematics(NamedTuple):
    """Foot contact points, sphere centers and hip (thigh joint) positions.

    Rows follow the FR, FL, RR, RL leg order; everything in world frame.
    The contact point is the sphere center shifted down by the foot radius.
    """
    foot: np.ndarray
    center: np.ndarray
    hip: np.ndarray


@dataclass(frozen=True)
class ContactJacobian:
    """3x18 map from generalized velocities to foot-point velocity."""
    matrix: np.ndarray
    leg: str


@dataclass(frozen=True, eq=False)
class RobotModel:
    """Kinematic and inertial description of the quadruped.

    Immutable after construction; all kinematics/dynamics functions treat it
    as read-only, so instances may be shared freely across threads.
    """
    total_mass: float
    gravity: float
    foot_radius: float
    torso_com: np.ndarray
    torso_inertia: np.ndarray
    hip_x: float
    hip_y: float
    hip_link: float
    thigh: float
    calf: float
    hip_mass: float
    thigh_mass: float
    calf_mass: float
    hip_com: np.ndarray
    thigh_com: np.ndarray
    calf_com: np.ndarray
    hip_inertia: np.ndarray
    thigh_inertia: np.ndarray
    calf_inertia: np.ndarray
    joint_lower: np.ndarray
    joint_upper: np.ndarray
    torque_limit: float
    velocity_limit: float
    tree: TreeArrays = field(init=False, repr=False)

    def __post_init__(self):
        _validate_model(self)
        object.__setattr__(self, "tree", _build_tree(self))

    @property
    def torso_mass(self):
        return self.total_mass - 4.0 * (self.hip_mass + self.thigh_mass
                                        + self.calf_mass)

    @property
    def leg_length(self):
        return self.thigh + self.calf

    def hip_mounts(self):
        """Hip mount offsets from the torso origin, (4, 3), FR FL RR RL."""
        out = np.empty((4, 3))
        for i, leg in enumerate(LEGS):
            sx = 1.0 if leg[0] == "F" else -1.0
            sy = LEG_SIDE[leg]
            out[i] = (sx * self.hip_x, sy * self.hip_y, 0.0)
        return out

    def weight(self):
        return self.total_mass * self.gravity


def _validate_model(m):
    def err(msg):
        raise ModelValidationError(msg)

    if not m.total_mass > 0:
        err("total_mass must be positive")
    if not m.gravity > 0:
        err("gravity must be positive")
    if not m.foot_radius > 0:
        err("foot_radius must be positive")
    for name in ("hip_mass", "thigh_mass", "calf_mass"):
        if getattr(m, name) < 0:
            err(f"{name} must be nonnegative")
    if m.torso_mass <= 0:
        err("torso mass (total_mass minus leg link masses) must be positive")
    for name in ("hip_x", "hip_y", "hip_link", "thigh", "calf"):
        if not getattr(m, name) > 0:
            err(f"{name} must be positive")
    for name in ("torso_inertia", "hip_inertia", "thigh_inertia",
                 "calf_inertia"):
        tensor = getattr(m, name)
        if not np.allclose(tensor, tensor.T, atol=1e-12):
            err(f"{name} must be symmetric")
        if np.linalg.eigvalsh(tensor).min() <= 0:
            err(f"{name} must be positive definite")
    if not np.all(m.joint_lower < m.joint_upper):
        err("joint limits must satisfy lower < upper")
    if not m.torque_limit > 0:
        err("torque_limit must be positive")
    if not m.velocity_limit > 0:
        err("velocity_limit must be positive")


def _build_tree(m):
    n = _k.N_TREE
    parent = np.empty(n, np.int64)
    jtype = np.empty(n, np.int64)
    qidx = np.empty(n, np.int64)
    axis = np.zeros((n, 3))
    tr = np.zeros((n, 3))
    mass = np.zeros(n)
    com = np.zeros((n, 3))
    inertia = np.zeros((n, 3, 3))
    for i in range(n):
        inertia[i] = np.zeros((3, 3))

    ex = np.array([1.0, 0.0, 0.0])
    ey = np.array([0.0, 1.0, 0.0])
    ez = np.array([0.0, 0.0, 1.0])

    # virtual base: world-axis translations, then yaw -> pitch -> roll
    parent[0:3] = (-1, 0, 1)
    jtype[0:3] = 0
    qidx[0:3] = (0, 1, 2)
    axis[0], axis[1], axis[2] = ex, ey, ez
    parent[3:6] = (2, 3, 4)
    jtype[3:6] = 1
    qidx[3:6] = (5, 4, 3)  # yaw, pitch, roll joints read q in that order
    axis[3], axis[4], axis[5] = ez, ey, ex

    mass[5] = m.torso_mass
    com[5] = m.torso_com
    inertia[5] = m.torso_inertia

    mounts = m.hip_mounts()
    for li, leg in enumerate(LEGS):
        b = 6 + 3 * li
        side = LEG_SIDE[leg]
        parent[b:b + 3] = (5, b, b + 1)
        jtype[b:b + 3] = 1
        qidx[b:b + 3] = (6 + 3 * li, 7 + 3 * li, 8 + 3 * li)
        axis[b], axis[b + 1], axis[b + 2] = ex, ey, ey
        tr[b] = mounts[li]
        tr[b + 1] = (0.0, side * m.hip_link, 0.0)
        tr[b + 2] = (0.0, 0.0, -m.thigh)
        mass[b], mass[b + 1], mass[b + 2] = (m.hip_mass, m.thigh_mass,
                                             m.calf_mass)
        com[b], com[b + 1], com[b + 2] = m.hip_com, m.thigh_com, m.calf_com
        inertia[b] = m.hip_inertia
        inertia[b + 1] = m.thigh_inertia
        inertia[b + 2] = m.calf_inertia
    return TreeArrays(parent, jtype, qidx, axis, tr, mass, com, inertia)


def _fk_args(model):
    t = model.tree
    return t.parent, t.jtype, t.qidx, t.axis, t.tr


def _dyn_args(model):
    t = model.tree
    return (t.parent, t.jtype, t.qidx, t.axis, t.tr, t.mass, t.com,
            t.inertia)


# ---------------------------------------------------------------------------
# model file I/O


def default_model_path():
    return resources.files("boundlab") / "data" / "a1.model"


def _get(cp, section, option, path):
    try:
        return cp.get(section, option)
    except (configparser.NoSectionError, configparser.NoOptionError):
        raise ModelFileError(
            f"{path}: missing field [{section}] {option}") from None


def _get_float(cp, section, option, path):
    raw = _get(cp, section, option, path)
    try:
        return float(raw)
    except ValueError:
        raise ModelFileError(
            f"{path}: field [{section}] {option} is not a number: {raw!r}"
        ) from None


def _get_vec(cp, section, option, path, n):
    raw = _get(cp, section, option, path).split()
    if len(raw) != n:
        raise ModelFileError(
            f"{path}: field [{section}] {option} needs {n} numbers, "
            f"got {len(raw)}")
    try:
        return np.array([float(x) for x in raw])
    except ValueError:
        raise ModelFileError(
            f"{path}: field [{section}] {option} is not numeric") from None


def _inertia_from_six(v):
    """Symmetric tensor from (ixx, ixy, ixz, iyy, iyz, izz)."""
    return np.array([
        [v[0], v[1], v[2]],
        [v[1], v[3], v[4]],
        [v[2], v[4], v[5]],
    ])


def load_model(path=None):
    """Load and validate a robot model file.

    Raises ModelFileError for syntax/missing-field problems (with the file
    and field named) and ModelValidationError when a physical invariant is
    violated.
    """
    if path is None:
        path = default_model_path()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            cp.read_file(fh, source=str(path))
    except OSError as exc:
        raise ModelFileError(f"{path}: cannot read model file: {exc}") from None
    except configparser.Error as exc:
        raise ModelFileError(f"{path}: parse error: {exc}") from None

    version = int(_get_float(cp, "model", "schema_version", path))
    if version != MODEL_SCHEMA_VERSION:
        raise ModelFileError(
            f"{path}: unsupported schema_version {version} "
            f"(expected {MODEL_SCHEMA_VERSION})")

    kwargs = dict(
        total_mass=_get_float(cp, "model", "total_mass", path),
        gravity=_get_float(cp, "model", "gravity", path),
        foot_radius=_get_float(cp, "model", "foot_radius", path),
        torso_com=_get_vec(cp, "torso", "com", path, 3),
        torso_inertia=_inertia_from_six(
            _get_vec(cp, "torso", "inertia", path, 6)),
        hip_x=_get_float(cp, "geometry", "hip_x", path),
        hip_y=_get_float(cp, "geometry", "hip_y", path),
        hip_link=_get_float(cp, "geometry", "hip_link", path),
        thigh=_get_float(cp, "geometry", "thigh", path),
        calf=_get_float(cp, "geometry", "calf", path),
        hip_mass=_get_float(cp, "hip", "mass", path),
        thigh_mass=_get_float(cp, "thigh", "mass", path),
        calf_mass=_get_float(cp, "calf", "mass", path),
        hip_com=_get_vec(cp, "hip", "com", path, 3),
        thigh_com=_get_vec(cp, "thigh", "com", path, 3),
        calf_com=_get_vec(cp, "calf", "com", path, 3),
        hip_inertia=_inertia_from_six(_get_vec(cp, "hip", "inertia", path, 6)),
        thigh_inertia=_inertia_from_six(
            _get_vec(cp, "thigh", "inertia", path, 6)),
        calf_inertia=_inertia_from_six(
            _get_vec(cp, "calf", "inertia", path, 6)),
        joint_lower=np.array([
            _get_vec(cp, "limits", "hip", path, 2)[0],
            _get_vec(cp, "limits", "thigh", path, 2)[0],
            _get_vec(cp, "limits", "calf", path, 2)[0],
        ]),
        joint_upper=np.array([
            _get_vec(cp, "limits", "hip", path, 2)[1],
            _get_vec(cp, "limits", "thigh", path, 2)[1],
            _get_vec(cp, "limits", "calf", path, 2)[1],
        ]),
        torque_limit=_get_float(cp, "limits", "torque", path),
        velocity_limit=_get_float(cp, "limits", "velocity", path),
    )
    return RobotModel(**kwargs)


# ---------------------------------------------------------------------------
# kinematics


def _check_joint_limits(model, q):
    joints = q[6:].reshape(4, 3)
    lo, up = model.joint_lower, model.joint_upper
    if np.any(joints < lo - 1e-9) or np.any(joints > up + 1e-9):
        warnings.warn("configuration exceeds joint limits", stacklevel=3)


def forward_kinematics(model, q):
    """Foot and hip positions for a configuration (see FootKinematics).

    Joint-limit violations warn but do not fail; the chain is evaluated
    regardless.
    """
    q = np.asarray(q, float)
    _check_joint_limits(model, q)
    R, o, _ = _k.tree_fk(*_fk_args(model), q)
    centers, contacts = _k.foot_points(R, o, model.calf, model.foot_radius)
    hips = np.empty((4, 3))
    for li in range(4):
        hips[li] = o[7 + 3 * li]  # thigh joint origin
    return FootKinematics(foot=contacts, center=centers, hip=hips)


def foot_jacobian(model, q, leg):
    """Contact Jacobian d(foot point)/dq for one leg; other legs' columns are 0."""
    q = np.asarray(q, float)
    li = LEG_INDEX[leg]
    R, o, aw = _k.tree_fk(*_fk_args(model), q)
    t = model.tree
    J = _k.point_jacobian(t.parent, t.jtype, t.qidx, R, o, aw,
                          _k.CALF_NODES[li],
                          np.array([0.0, 0.0, -model.calf]), NQ)
    return ContactJacobian(matrix=J, leg=leg)


def com_state(model, q, qd):
    """Whole-robot COM position and velocity (mass-weighted over all links)."""
    q = np.asarray(q, float)
    qd = np.asarray(qd, float)
    t = model.tree
    return _k.com_state(t.parent, t.jtype, t.qidx, t.axis, t.tr, t.mass,
                        t.com, q, qd)


def leg_inverse_kinematics(model, target, leg):
    """Joint angles (hip, thigh, calf) reaching a foot-center target.

    `target` is expressed in the hip-mount frame (origin at the hip joint,
    axes parallel to the torso).  Always returns the knee-backward branch
    (calf angle <= 0).  Raises UnreachableTargetError outside the workspace
    annulus.
    """
    px, py, pz = float(target[0]), float(target[1]), float(target[2])
    side = LEG_SIDE[leg]
    l1, l2, l3 = model.hip_link, model.thigh, model.calf

    ryz_sq = py * py + pz * pz
    if ryz_sq < l1 * l1:
        raise UnreachableTargetError(
            f"{leg}: target {target} inside the hip-link cylinder")
    lyz = math.sqrt(ryz_sq - l1 * l1)
    reach_sq = px * px + lyz * lyz
    reach = math.sqrt(reach_sq)
    lo, hi = abs(l2 - l3), l2 + l3
    if reach > hi + 1e-12 or reach < lo - 1e-12:
        raise UnreachableTargetError(
            f"{leg}: target at distance {reach:.6f} m outside "
            f"[{lo:.6f}, {hi:.6f}] m")

    hip = math.atan2(pz, py) + math.atan2(lyz, side * l1)
    # wrap toward zero so the straight-down pose maps to hip = 0
    if hip > math.pi:
        hip -= 2.0 * math.pi
    elif hip < -math.pi:
        hip += 2.0 * math.pi

    cos_calf = (reach_sq - l2 * l2 - l3 * l3) / (2.0 * l2 * l3)
    cos_calf = min(1.0, max(-1.0, cos_calf))
    calf = -math.acos(cos_calf)  # knee-backward branch
    thigh = (math.atan2(-px, lyz)
             - math.atan2(l3 * math.sin(calf), l2 + l3 * math.cos(calf)))
    return np.array([hip, thigh, calf])


def foot_in_hip_frame(model, q, leg):
    """Current foot-center position expressed in the leg's hip-mount frame."""
    q = np.asarray(q, float)
    R, o, _ = _k.tree_fk(*_fk_args(model), q)
    li = LEG_INDEX[leg]
    center = o[_k.CALF_NODES[li]] + R[_k.CALF_NODES[li]] @ np.array(
        [0.0, 0.0, -model.calf])
    mount = o[6 + 3 * li]
    Rt = rpy_to_matrix(q[ORI])
    return Rt.T @ (center - mount)


def standing_pose(model, hip_height, x=0.0, y=0.0, yaw=0.0):
    """Configuration standing with feet below the thigh joints.

    `hip_height` is the height of the hip (thigh joint) above the ground;
    foot centers end up one foot radius above ground, i.e. in light contact.
    """
    q = np.zeros(NQ)
    q[0], q[1], q[2] = x, y, hip_height
    q[5] = yaw
    depth = hip_height - model.foot_radius
    for leg in LEGS:
        target = np.array([0.0, LEG_SIDE[leg] * model.hip_link, -depth])
        q[leg_slice(leg)] = leg_inverse_kinematics(model, target, leg)
    return q
