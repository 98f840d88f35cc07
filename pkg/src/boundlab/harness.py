"""Trial execution and gait-parameter sweeps.

A trial starts the robot standing, settles briefly, then bounds with the
commanded gait while the speed command ramps linearly over the spin-up
interval; the strides after the ramp are recorded and analyzed.  Dynamical
problems are trial *statuses*, not exceptions: a trial fails with the first
triggered criterion among

    fall            torso height below 0.12 m
    pitch-limit     |pitch| beyond 60 degrees
    qp-fault        force-allocation QP hit its iteration cap
    ik-unreachable  swing targets clamped for most of a stride
    slip-divergence mean stride speed off the command by >50% for 5 strides
    no-steady-state the steadiness detector never fired

Everything is deterministic given the spec (including the seed, which only
perturbs the initial joint angles by up to 0.5 degrees), so sweeps are a
pure function of their inputs and may run on any number of workers.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import energetics as en
from .config import ControllerConfig, load_controller_config
from .control import BoundingController
from .dynamics import FullState, GroundModel, step_detailed
from .errors import ConfigError, QPIterationLimitError, SimulationFault
from .gait import GaitParams, validate
from .model import com_state, load_model, standing_pose
from .slip import SlipCoeffs

FALL_HEIGHT = 0.12
PITCH_LIMIT = math.radians(60.0)
SLIP_TOLERANCE = 0.5        # fraction of commanded speed
SLIP_STRIDES = 5
CLAMP_STRIDE_FRACTION = 0.5
SETTLE_TIME = 0.4
STEADY_WINDOW = 5
STEADY_APEX_BAND = 0.005    # m
STEADY_SPEED_BAND = 0.05    # fraction of commanded speed
DEFAULT_GAIT = (0.22, 0.50, 0.22)


@dataclass(frozen=True)
class TrialSpec:
    """One simulation run: gait, speed, recording length, seed, configs."""
    params: GaitParams = GaitParams(*DEFAULT_GAIT)
    speed: float = 0.5
    spin_up: float = 3.0
    recording_strides: int = 30
    steady_search_strides: int = 10
    seed: int = 0
    dt: float = 1e-3
    model_path: str | None = None
    control_path: str | None = None

    def __post_init__(self):
        if self.recording_strides < 5:
            raise ConfigError("recording_strides must be at least 5")
        if self.speed < 0:
            raise ConfigError("commanded speed must be nonnegative")
        if self.spin_up <= 0:
            raise ConfigError("spin-up duration must be positive")


@dataclass(frozen=True)
class TrialResult:
    """Outcome of one trial; `cot` is nonempty exactly when steady."""
    status: str                     # "steady" | "failed"
    reason: str | None
    cot: tuple
    mean_speed: float
    flight_phases: int | None
    steady_index: int | None
    n_strides: int
    trace: en.Trace | None = field(repr=False, default=None)
    trace_path: str | None = None

    def __post_init__(self):
        if (self.status == "steady") != bool(self.cot):
            raise ValueError("cot list must be nonempty exactly for steady "
                             "trials")


@dataclass(frozen=True)
class SweepSpec:
    """Grid over one gait parameter, the other two held at the defaults."""
    param: str                      # "gamma" | "phi" | "stride"
    values: tuple
    speed: float = 0.5
    seeds: int = 1
    base: GaitParams = GaitParams(*DEFAULT_GAIT)
    trial: TrialSpec = TrialSpec()

    def __post_init__(self):
        if self.param not in ("gamma", "phi", "stride"):
            raise ConfigError(f"unknown sweep parameter {self.param!r}")
        if len(self.values) == 0:
            raise ConfigError("sweep grid is empty")
        if self.seeds < 1:
            raise ConfigError("seeds must be at least 1")

    def gait_for(self, value):
        g, p, T = (self.base.duty_factor, self.base.phase_shift,
                   self.base.stride_duration)
        if self.param == "gamma":
            g = value
        elif self.param == "phi":
            p = value
        else:
            T = value
        return GaitParams(g, p, T)


def parse_range(text):
    """Parse MIN:MAX:STEP into an inclusive tuple of grid values."""
    try:
        lo, hi, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise ConfigError(f"bad range {text!r}: expected MIN:MAX:STEP") \
            from None
    if step <= 0 or hi < lo:
        raise ConfigError(f"bad range {text!r}: need MIN <= MAX and STEP > 0")
    n = int(round((hi - lo) / step))
    values = [round(lo + i * step, 10) for i in range(n + 1)]
    return tuple(v for v in values if v <= hi + 1e-9)


def com_heights(trace, model):
    """Per-sample COM height for a recorded trace."""
    out = np.empty(len(trace))
    for i in range(len(trace)):
        pos, _ = com_state(model, trace.q[i], trace.qd[i])
        out[i] = pos[2]
    return out


def detect_steady_state(trace, model=None):
    """First steady stride index, or None.

    Steady means: over STEADY_WINDOW consecutive strides the stride-apex COM
    height varies at most 5 mm and the per-stride mean forward speed varies
    at most 5% of the commanded speed (taken from the trace metadata).
    Falls back to torso height when no model is given.
    """
    try:
        windows = en.stride_segmentation(trace)
    except ValueError:
        return None
    if len(windows) < STEADY_WINDOW:
        return None
    heights = com_heights(trace, model) if model is not None else None
    apex = np.array([en.stride_apex(trace, w, heights) for w in windows])
    speeds = np.array([en.stride_speed(trace, w) for w in windows])
    v_cmd = float(trace.meta.get("speed", 0.0))
    speed_band = max(STEADY_SPEED_BAND * v_cmd, 0.02)
    for i in range(len(windows) - STEADY_WINDOW + 1):
        if (np.ptp(apex[i:i + STEADY_WINDOW]) <= STEADY_APEX_BAND
                and np.ptp(speeds[i:i + STEADY_WINDOW]) <= speed_band):
            return i
    return None


def _failed(reason, mean_speed, n_strides, trace):
    return TrialResult(status="failed", reason=reason, cot=(),
                       mean_speed=mean_speed, flight_phases=None,
                       steady_index=None, n_strides=n_strides, trace=trace)


def run_trial(spec):
    """Execute one trial and classify its outcome.

    Deterministic per spec: identical specs (including the seed) produce
    byte-identical traces and results.
    """
    model = load_model(spec.model_path)
    cfg = load_controller_config(spec.control_path, speed=spec.speed)
    ground = GroundModel()
    rng = np.random.default_rng(spec.seed)

    stand_height = cfg.slip.a3
    q0 = standing_pose(model, stand_height)
    q0[6:] += rng.uniform(-1.0, 1.0, 12) * math.radians(0.5)
    state = FullState(q0, np.zeros(18), t=0.0)

    # settle on four feet before the gait engages
    stand_cfg = replace(cfg, speed=0.0)
    stand = BoundingController(model, GaitParams(1.0, 0.5, 0.22), stand_cfg)
    n_settle = int(round(SETTLE_TIME / spec.dt))
    for _ in range(n_settle):
        out = stand.control_step(state, state.t)
        state, _ = step_detailed(model, state, out.tau, ground, spec.dt)

    controller = BoundingController(model, spec.params, cfg)
    total_strides = spec.recording_strides + spec.steady_search_strides
    t_record = spec.spin_up
    t_end = spec.spin_up + total_strides * spec.params.stride_duration
    n_steps = int(round(t_end / spec.dt))
    n_rec0 = int(round(t_record / spec.dt))

    rec = {key: [] for key in ("t", "q", "qd", "tau", "contact", "grf")}
    clamp_ticks = []
    t0 = state.t
    divisor = max(1, cfg.rate_divisor)
    out = None
    for i in range(n_steps):
        t_gait = state.t - t0
        controller.commanded_speed = spec.speed * min(1.0,
                                                      t_gait / spec.spin_up)
        try:
            if out is None or i % divisor == 0:
                out = controller.control_step(state, t_gait)
            state, info = step_detailed(model, state, out.tau, ground,
                                        spec.dt)
        except QPIterationLimitError:
            return _failed("qp-fault", _speed_estimate(rec), 0,
                           _trace_from(rec, spec))
        except SimulationFault:
            return _failed("fall", _speed_estimate(rec), 0,
                           _trace_from(rec, spec))
        if i >= n_rec0:
            rec["t"].append(t_gait)
            rec["q"].append(state.q.copy())
            rec["qd"].append(state.qd.copy())
            rec["tau"].append(out.tau.copy())
            rec["contact"].append(info.contact.copy())
            rec["grf"].append(info.grf.reshape(-1).copy())
            clamp_ticks.append(1.0 if out.ik_clamped else 0.0)
        if state.q[2] < FALL_HEIGHT:
            return _failed("fall", _speed_estimate(rec), 0,
                           _trace_from(rec, spec))
        if abs(state.q[4]) > PITCH_LIMIT:
            return _failed("pitch-limit", _speed_estimate(rec), 0,
                           _trace_from(rec, spec))

    trace = _trace_from(rec, spec)
    clamp_ticks = np.asarray(clamp_ticks)
    try:
        windows = en.stride_segmentation(trace)
    except ValueError:
        return _failed("no-steady-state", _speed_estimate(rec), 0, trace)

    # stride-based monitors, in temporal order
    speeds = [en.stride_speed(trace, w) for w in windows]
    slip_run = 0
    for k, w in enumerate(windows):
        frac = clamp_ticks[w.start:w.stop + 1].mean()
        if frac > CLAMP_STRIDE_FRACTION:
            return _failed("ik-unreachable", float(np.mean(speeds)),
                           len(windows), trace)
        if abs(speeds[k] - spec.speed) > SLIP_TOLERANCE * spec.speed:
            slip_run += 1
            if slip_run >= SLIP_STRIDES:
                return _failed("slip-divergence", float(np.mean(speeds)),
                               len(windows), trace)
        else:
            slip_run = 0

    steady = detect_steady_state(trace, model)
    if steady is None:
        return _failed("no-steady-state", float(np.mean(speeds)),
                       len(windows), trace)

    chosen = windows[steady:steady + spec.recording_strides]
    cots = tuple(en.cot(trace, w, model) for w in chosen)
    flight = int(np.median([en.measured_flight_phases(trace, w)
                            for w in chosen]))
    mean_speed = float(np.mean([en.stride_speed(trace, w) for w in chosen]))
    return TrialResult(status="steady", reason=None, cot=cots,
                       mean_speed=mean_speed, flight_phases=flight,
                       steady_index=steady, n_strides=len(windows),
                       trace=trace)


def _speed_estimate(rec):
    if len(rec["qd"]) < 2:
        return 0.0
    return float(np.mean([qd[0] for qd in rec["qd"]]))


def _trace_from(rec, spec):
    if not rec["t"]:
        return None
    return en.Trace(
        t=np.asarray(rec["t"]),
        q=np.asarray(rec["q"]),
        qd=np.asarray(rec["qd"]),
        tau=np.asarray(rec["tau"]),
        contact=np.asarray(rec["contact"], bool),
        grf=np.asarray(rec["grf"]),
        dt=spec.dt,
        meta={"gamma": spec.params.duty_factor,
              "phi": spec.params.phase_shift,
              "stride": spec.params.stride_duration,
              "speed": spec.speed,
              "seed": spec.seed},
    )


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepRow:
    """One (grid value, seed) outcome, as serialized to sweep CSV."""
    param_value: float
    seed: int
    status: str
    reason: str
    cot_median: float | None
    cot_q1: float | None
    cot_q3: float | None
    mean_speed: float
    flight_phases: int | None
    trace_path: str
    cot: tuple = ()   # in-memory only; not serialized


def _run_point(args):
    spec, value = args
    result = run_trial(spec)
    if result.status == "steady":
        stats = en.cot_statistics(result.cot)
        return SweepRow(param_value=value, seed=spec.seed, status="steady",
                        reason="", cot_median=stats.median, cot_q1=stats.q1,
                        cot_q3=stats.q3, mean_speed=result.mean_speed,
                        flight_phases=result.flight_phases, trace_path="",
                        cot=result.cot)
    return SweepRow(param_value=value, seed=spec.seed, status="failed",
                    reason=result.reason or "", cot_median=None, cot_q1=None,
                    cot_q3=None, mean_speed=result.mean_speed,
                    flight_phases=None, trace_path="", cot=())


def sweep(sweep_spec, jobs=1):
    """Run the grid; returns rows sorted by (value, seed).

    The result set is a pure function of the spec: each trial is seeded
    independently, so the worker count only affects wall time.
    """
    tasks = []
    for value in sweep_spec.values:
        params = sweep_spec.gait_for(value)
        check = validate(params)
        if not check.ok:
            raise ConfigError(
                f"sweep value {value} invalid: " + "; ".join(check.violations))
        for seed in range(sweep_spec.seeds):
            spec = replace(sweep_spec.trial, params=params,
                           speed=sweep_spec.speed, seed=seed)
            tasks.append((spec, value))
    if jobs <= 1:
        rows = [_run_point(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_point, tasks))
    return sorted(rows, key=lambda r: (r.param_value, r.seed))


@dataclass(frozen=True)
class PointSummary:
    """Aggregated statistics for one grid value."""
    param_value: float
    n_steady: int
    n_failed: int
    stats: en.BoxStats | None
    flight_phases: int | None
    failure_reasons: tuple


def aggregate(rows):
    """Per-point box statistics over all steady strides, plus flight count.

    Failed trials are excluded from the statistics but counted and their
    reasons reported; per-stride COT values from all steady seeds at a grid
    value are pooled, giving both within-trial and across-seed spread.
    """
    points = {}
    for row in rows:
        points.setdefault(row.param_value, []).append(row)
    out = []
    for value in sorted(points):
        group = points[value]
        steady = [r for r in group if r.status == "steady"]
        failed = [r for r in group if r.status != "steady"]
        pooled = [c for r in steady for c in r.cot]
        stats = en.cot_statistics(pooled) if pooled else None
        flight = (int(np.median([r.flight_phases for r in steady]))
                  if steady else None)
        out.append(PointSummary(
            param_value=value, n_steady=len(steady), n_failed=len(failed),
            stats=stats, flight_phases=flight,
            failure_reasons=tuple(sorted({r.reason for r in failed if
                                          r.reason}))))
    return out


# ---------------------------------------------------------------------------
# CSV / JSON serialization

SWEEP_COLUMNS = ("param_value,seed,status,reason,cot_median,cot_q1,cot_q3,"
                 "mean_speed,flight_phases,trace_path")


def write_sweep_csv(rows, path):
    with open(path, "w") as fh:
        fh.write(SWEEP_COLUMNS + "\n")
        for r in rows:
            fh.write(",".join([
                repr(r.param_value), str(r.seed), r.status, r.reason,
                "" if r.cot_median is None else repr(r.cot_median),
                "" if r.cot_q1 is None else repr(r.cot_q1),
                "" if r.cot_q3 is None else repr(r.cot_q3),
                repr(r.mean_speed),
                "" if r.flight_phases is None else str(r.flight_phases),
                r.trace_path,
            ]) + "\n")


def read_sweep_csv(path):
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != SWEEP_COLUMNS:
            raise ConfigError(f"{path}: not a sweep CSV (bad header)")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            if len(parts) != 10:
                raise ConfigError(f"{path}: malformed sweep row {line!r}")
            rows.append(SweepRow(
                param_value=float(parts[0]), seed=int(parts[1]),
                status=parts[2], reason=parts[3],
                cot_median=float(parts[4]) if parts[4] else None,
                cot_q1=float(parts[5]) if parts[5] else None,
                cot_q3=float(parts[6]) if parts[6] else None,
                mean_speed=float(parts[7]),
                flight_phases=int(parts[8]) if parts[8] else None,
                trace_path=parts[9]))
    return rows


def stats_to_json(rows, path):
    """Per-point statistics over the per-seed COT medians in a sweep CSV.

    The full per-stride pooling needs in-memory results (see aggregate);
    from a CSV alone the spread across seeds is what remains, so the JSON
    reports box statistics of the per-seed medians plus failure counts.
    """
    points = {}
    for row in rows:
        points.setdefault(row.param_value, []).append(row)
    payload = []
    for value in sorted(points):
        group = points[value]
        medians = [r.cot_median for r in group
                   if r.status == "steady" and r.cot_median is not None]
        entry = {
            "param_value": value,
            "n_steady": sum(1 for r in group if r.status == "steady"),
            "n_failed": sum(1 for r in group if r.status != "steady"),
            "failure_reasons": sorted({r.reason for r in group if r.reason}),
        }
        if medians:
            stats = en.cot_statistics(medians)
            entry.update(cot_median=stats.median, cot_q1=stats.q1,
                         cot_q3=stats.q3, whisker_low=stats.whisker_low,
                         whisker_high=stats.whisker_high,
                         outliers=list(stats.outliers))
            flights = [r.flight_phases for r in group
                       if r.flight_phases is not None]
            entry["flight_phases"] = int(np.median(flights)) if flights \
                else None
        payload.append(entry)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return payload
