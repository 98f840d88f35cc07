"""Controller configuration: dataclass plus INI-style file loading.

The file carries four sections: [slip] (hip-arc coefficients and COM
tracking gains), [qp] (force-allocation weights and solver knobs),
[swing] (swing-leg PD, foot placement, apex clearance) and [control]
(commanded speed, attitude gains, controller rate divisor).  Any missing
option falls back to the documented default, so a minimal file is valid.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from importlib import resources

from .errors import ConfigError
from .qp import QPSettings
from .slip import ComGains, SlipCoeffs


@dataclass(frozen=True)
class ControllerConfig:
    slip: SlipCoeffs = SlipCoeffs()
    com_gains: ComGains = ComGains()
    min_hip_height: float = 0.12
    qp: QPSettings = QPSettings()
    # swing leg
    swing_kp: float = 120.0        # joint PD proportional gain, N m/rad
    swing_kd: float = 4.0          # joint PD derivative gain, N m s/rad
    swing_apex: float = 0.06       # clearance above the higher endpoint, m
    raibert_gain: float = 0.10     # s, speed-error feedback on touchdown x
    # torso attitude (roll/yaw only; pitch is left free)
    attitude_kp: float = 60.0      # N m/rad
    attitude_kd: float = 4.0       # N m s/rad
    pitch_damping: float = 0.0     # N m s/rad, 0 keeps pitch fully free
    # commanded forward speed and controller rate
    speed: float = 0.5             # m/s
    rate_divisor: int = 1          # controller runs every N physics steps

    def __post_init__(self):
        if self.swing_kp <= 0 or self.swing_kd <= 0:
            raise ConfigError("swing PD gains must be positive")
        if self.swing_apex <= 0:
            raise ConfigError("swing apex clearance must be positive")
        if self.swing_apex >= self.slip.a3:
            raise ConfigError(
                "swing apex clearance must stay below the standing hip height")
        if self.raibert_gain < 0:
            raise ConfigError("raibert gain must be nonnegative")
        if self.attitude_kp <= 0 or self.attitude_kd <= 0:
            raise ConfigError("attitude gains must be positive")
        if self.speed < 0:
            raise ConfigError("commanded speed must be nonnegative")
        if self.rate_divisor < 1:
            raise ConfigError("rate divisor must be at least 1")
        self.slip.check_speed(self.speed, self.min_hip_height)


def default_config_path():
    return resources.files("boundlab") / "data" / "controller.cfg"


def _read(cp, section, option, conv, default):
    try:
        raw = cp.get(section, option)
    except (configparser.NoSectionError, configparser.NoOptionError):
        return default
    try:
        return conv(raw)
    except ValueError:
        raise ConfigError(
            f"controller config: [{section}] {option} is not valid: {raw!r}"
        ) from None


def load_controller_config(path=None, **overrides):
    """Load a controller config file; keyword overrides win over the file."""
    if path is None:
        path = default_config_path()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            cp.read_file(fh, source=str(path))
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read controller config: {exc}") \
            from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from None

    f = float
    defaults = ControllerConfig.__dataclass_fields__
    slip = SlipCoeffs(
        a1=_read(cp, "slip", "a1", f, SlipCoeffs.a1),
        a2=_read(cp, "slip", "a2", f, SlipCoeffs.a2),
        a3=_read(cp, "slip", "a3", f, SlipCoeffs.a3),
        a4=_read(cp, "slip", "a4", f, SlipCoeffs.a4),
    )
    com_gains = ComGains(
        kp=_read(cp, "slip", "com_kp", f, ComGains.kp),
        kd=_read(cp, "slip", "com_kd", f, ComGains.kd),
    )
    w1_raw = _read(cp, "qp", "w1", str, None)
    if w1_raw is not None:
        parts = tuple(float(x) for x in w1_raw.split())
        if len(parts) != 6:
            raise ConfigError("controller config: [qp] w1 needs 6 numbers")
    else:
        parts = QPSettings.w1
    qp_settings = QPSettings(
        w1=parts,
        alpha=_read(cp, "qp", "alpha", f, QPSettings.alpha),
        beta=_read(cp, "qp", "beta", f, QPSettings.beta),
        w2=_read(cp, "qp", "w2", f, QPSettings.w2),
        w3=_read(cp, "qp", "w3", f, QPSettings.w3),
        mu=_read(cp, "qp", "mu", f, QPSettings.mu),
        lambda_max=_read(cp, "qp", "lambda_max", f, QPSettings.lambda_max),
        tolerance=_read(cp, "qp", "tolerance", f, QPSettings.tolerance),
        max_iterations=_read(cp, "qp", "max_iterations", int,
                             QPSettings.max_iterations),
    )
    cfg = ControllerConfig(
        slip=slip,
        com_gains=com_gains,
        min_hip_height=_read(cp, "slip", "min_hip_height", f,
                             defaults["min_hip_height"].default),
        qp=qp_settings,
        swing_kp=_read(cp, "swing", "kp", f, defaults["swing_kp"].default),
        swing_kd=_read(cp, "swing", "kd", f, defaults["swing_kd"].default),
        swing_apex=_read(cp, "swing", "apex", f,
                         defaults["swing_apex"].default),
        raibert_gain=_read(cp, "swing", "raibert_gain", f,
                           defaults["raibert_gain"].default),
        attitude_kp=_read(cp, "control", "attitude_kp", f,
                          defaults["attitude_kp"].default),
        attitude_kd=_read(cp, "control", "attitude_kd", f,
                          defaults["attitude_kd"].default),
        pitch_damping=_read(cp, "control", "pitch_damping", f,
                            defaults["pitch_damping"].default),
        speed=_read(cp, "control", "speed", f, defaults["speed"].default),
        rate_divisor=_read(cp, "control", "rate_divisor", int,
                           defaults["rate_divisor"].default),
    )
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg
