"""Bounding gait schedule from (duty factor, phase shift, stride duration).

The rear pair (RR, RL) anchors the stride: it touches down at stride phase
0, the front pair (FR, FL) at stride phase `phase_shift`.  Legs within a
pair are synchronous.  A leg is in stance while its phase offset from the
pair's touchdown lies in [0, duty_factor), so each leg's scheduled stance
fraction equals the duty factor exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import LEGS

# stride-phase anchor of each leg's touchdown, as a multiple of phase_shift
_FRONT = ("FR", "FL")

# duty factors above this leave too little swing time at low speed;
# validation warns but does not reject
SWING_TIME_RISK_GAMMA = 0.68


@dataclass(frozen=True)
class GaitParams:
    """Bounding gait timing: duty factor, phase shift, stride duration (s)."""
    duty_factor: float
    phase_shift: float
    stride_duration: float


@dataclass(frozen=True)
class LegPhase:
    """Schedule sample for one leg at one instant.

    Exactly one of `stance_time` (time since stance onset) and
    `swing_progress` (0 at lift-off, 1 at next touchdown) is set.
    """
    in_stance: bool
    stance_time: float | None
    swing_progress: float | None
    stride_phase: float


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[str, ...]
    warnings: tuple[str, ...]

    @property
    def ok(self):
        return not self.violations


@dataclass(frozen=True)
class FlightPhases:
    """Aerial intervals per stride: how many and how long (seconds)."""
    count: int
    durations: tuple[float, ...]


def validate(params):
    """Range-check gait parameters; warns for known failure-prone regions."""
    violations = []
    warns = []
    g, p, T = params.duty_factor, params.phase_shift, params.stride_duration
    if not g > 0:
        violations.append("duty factor must be positive")
    if g > 1:
        violations.append("duty factor must be at most 1")
    if not 0 <= p < 1:
        violations.append("phase shift must lie in [0, 1)")
    if not T > 0:
        violations.append("stride duration must be positive")
    if not violations and g > SWING_TIME_RISK_GAMMA:
        warns.append(
            f"swing-time risk: duty factor {g} leaves the swing phase "
            f"less than {1 - SWING_TIME_RISK_GAMMA:.2f} of the stride")
    return ValidationResult(tuple(violations), tuple(warns))


def _leg_anchor(params, leg):
    return params.phase_shift if leg in _FRONT else 0.0


def leg_phase(params, t, leg):
    """Schedule sample for `leg` at time `t` (periodic in the stride)."""
    g, T = params.duty_factor, params.stride_duration
    phase = (t / T) % 1.0
    offset = (phase - _leg_anchor(params, leg)) % 1.0
    if offset >= 1.0:  # float rounding of the modulo at tiny anchors
        offset = 0.0
    if offset < g:
        return LegPhase(True, offset * T, None, phase)
    progress = (offset - g) / (1.0 - g)
    return LegPhase(False, None, progress, phase)


def stance_intervals(params, leg):
    """Scheduled stance of `leg` within one stride, as phase intervals.

    Returns a list of (start, end) phases in [0, 1]; two entries when the
    stance window wraps past the stride boundary.
    """
    g = params.duty_factor
    a = _leg_anchor(params, leg)
    end = a + g
    if end <= 1.0:
        return [(a, end)]
    return [(a, 1.0), (0.0, end - 1.0)]


def flight_phases(params):
    """Aerial intervals per stride computed from the schedule alone."""
    T = params.stride_duration
    stance = []
    for leg in ("RR", "FR"):  # one leg per pair; pairs are synchronous
        stance.extend(stance_intervals(params, leg))
    stance.sort()
    merged = []
    for s, e in stance:
        if merged and s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    gaps = []
    for i in range(len(merged) - 1):
        gaps.append(merged[i + 1][0] - merged[i][1])
    # wrap-around gap between the last stance end and the first start
    wrap = (1.0 - merged[-1][1]) + merged[0][0]
    if wrap > 0:
        gaps.append(wrap)
    durations = tuple(g * T for g in gaps if g > 1e-12)
    return FlightPhases(len(durations), durations)


def swing_duration(params):
    """Seconds each leg spends in swing per stride."""
    return (1.0 - params.duty_factor) * params.stride_duration


def stance_duration(params):
    """Seconds each leg spends in stance per stride."""
    return params.duty_factor * params.stride_duration
