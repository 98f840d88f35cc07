"""Per-joint power traces and work-based cost of transport.

Cost of transport over a stride window is the time integral of the summed
absolute joint powers |tau_r * qd_r| (both positive and negative mechanical
work count as cost), divided by weight times forward displacement:

    COT = integral(sum_r |tau_r qd_r|) / (m g (x_end - x_start))

Strides are delimited by rising edges of rear-pair ground contact.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

TRACE_SCHEMA = "boundlab-trace-v1"

_COLUMNS = (["t"]
            + [f"q[{i}]" for i in range(18)]
            + [f"qd[{i}]" for i in range(18)]
            + [f"tau[{i}]" for i in range(12)]
            + [f"contact[{leg}]" for leg in ("FR", "FL", "RR", "RL")]
            + [f"grf[{leg}.{ax}]" for leg in ("FR", "FL", "RR", "RL")
               for ax in "xyz"])


@dataclass
class Trace:
    """Uniformly sampled simulation record.

    Arrays share the first (time) axis: t (n,), q (n, 18), qd (n, 18),
    tau (n, 12), contact (n, 4) bool, grf (n, 12).  `meta` carries trial
    provenance (gait parameters, commanded speed, seed).
    """
    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    tau: np.ndarray
    contact: np.ndarray
    grf: np.ndarray
    dt: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.t)
        shapes = {"q": (n, 18), "qd": (n, 18), "tau": (n, 12),
                  "contact": (n, 4), "grf": (n, 12)}
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"trace column {name} must have shape {shape}")

    def __len__(self):
        return len(self.t)

    def slice(self, start, stop):
        return Trace(t=self.t[start:stop], q=self.q[start:stop],
                     qd=self.qd[start:stop], tau=self.tau[start:stop],
                     contact=self.contact[start:stop],
                     grf=self.grf[start:stop], dt=self.dt,
                     meta=dict(self.meta))


@dataclass(frozen=True)
class StrideWindow:
    """Inclusive sample bounds of one stride (rear touchdown to the next)."""
    start: int
    stop: int

    def __post_init__(self):
        if not self.stop > self.start:
            raise ValueError("stride window must have stop > start")


@dataclass(frozen=True)
class BoxStats:
    """Box-plot statistics: quartiles, 1.5 IQR whiskers, outliers."""
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: tuple


def write_trace_csv(trace, path):
    """Write the trace in the documented CSV schema (one header comment)."""
    with open(path, "w") as fh:
        fh.write(f"# schema={TRACE_SCHEMA}")
        for key in sorted(trace.meta):
            fh.write(f" {key}={trace.meta[key]!r}")
        fh.write("\n")
        fh.write(",".join(_COLUMNS) + "\n")
        data = np.column_stack([trace.t, trace.q, trace.qd, trace.tau,
                                trace.contact.astype(float), trace.grf])
        for row in data:
            fh.write(",".join(repr(v) for v in row) + "\n")


def read_trace_csv(path):
    """Read a trace written by write_trace_csv."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith(f"# schema={TRACE_SCHEMA}"):
            raise ValueError(f"{path}: not a {TRACE_SCHEMA} file")
        meta = {}
        for token in header.split()[2:]:
            key, _, raw = token.partition("=")
            try:
                meta[key] = eval(raw, {"__builtins__": {}})  # repr round-trip
            except Exception:
                meta[key] = raw
        names = fh.readline().strip().split(",")
        if names != _COLUMNS:
            raise ValueError(f"{path}: unexpected column layout")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    t = data[:, 0]
    dt = float(np.median(np.diff(t))) if len(t) > 1 else 0.0
    return Trace(t=t, q=data[:, 1:19], qd=data[:, 19:37], tau=data[:, 37:49],
                 contact=data[:, 49:53] > 0.5, grf=data[:, 53:65], dt=dt,
                 meta=meta)


def stride_segmentation(trace):
    """Stride windows delimited by rising edges of rear-pair contact.

    Incomplete leading/trailing strides are dropped.  Raises ValueError when
    fewer than two rising edges exist (e.g. constant full contact).
    """
    rear = trace.contact[:, 2] | trace.contact[:, 3]
    rising = np.flatnonzero(rear[1:] & ~rear[:-1]) + 1
    if rear[0] and len(trace) > 0:
        # a trace starting mid-stance has no leading edge, by design
        pass
    if len(rising) < 2:
        raise ValueError("no strides found: fewer than two rear-pair "
                         "touchdown edges in the trace")
    return [StrideWindow(int(a), int(b))
            for a, b in zip(rising[:-1], rising[1:])]


def joint_power(trace):
    """Absolute mechanical power per joint and its sum over the 12 joints."""
    per_joint = np.abs(trace.tau * trace.qd[:, 6:])
    return per_joint, per_joint.sum(axis=1)


def cot(trace, window, model):
    """Work-based cost of transport over one stride window.

    Trapezoidal quadrature of the summed absolute joint power divided by
    weight times forward displacement; raises ValueError when the robot did
    not move forward over the window.
    """
    _, total = joint_power(trace)
    seg = slice(window.start, window.stop + 1)
    dx = trace.q[window.stop, 0] - trace.q[window.start, 0]
    if dx <= 0:
        raise ValueError(f"nonpositive displacement over stride: {dx:.4f} m")
    energy = np.trapezoid(total[seg], trace.t[seg])
    return float(energy / (model.total_mass * model.gravity * dx))


def stride_speed(trace, window):
    """Mean forward speed over a stride window."""
    span = trace.t[window.stop] - trace.t[window.start]
    return float((trace.q[window.stop, 0] - trace.q[window.start, 0]) / span)


def stride_apex(trace, window, com_heights=None):
    """Peak COM height within a stride window.

    Pass precomputed per-sample COM heights to avoid re-deriving them for
    every window; falls back to torso height otherwise.
    """
    seg = slice(window.start, window.stop + 1)
    if com_heights is not None:
        return float(np.max(com_heights[seg]))
    return float(np.max(trace.q[seg, 2]))


def cot_statistics(values):
    """Box statistics with type-7 (linear interpolation) quartiles.

    Whiskers extend to the farthest data point within 1.5 IQR of the
    quartiles; anything beyond is an outlier.
    """
    values = np.asarray(list(values), float)
    if len(values) == 0:
        raise ValueError("cot_statistics needs at least one value")
    q1, med, q3 = np.percentile(values, [25.0, 50.0, 75.0])
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = values[(values >= lo_fence) & (values <= hi_fence)]
    outliers = tuple(float(v) for v in np.sort(values[(values < lo_fence)
                                                      | (values > hi_fence)]))
    return BoxStats(median=float(med), q1=float(q1), q3=float(q3),
                    whisker_low=float(inside.min()),
                    whisker_high=float(inside.max()),
                    outliers=outliers)


def count_power_peaks(trace, window, smooth_ms=5.0, prominence_frac=0.10):
    """Number of prominent local maxima of the summed power in one stride.

    The power series is smoothed with a short moving average and peaks are
    counted with a prominence threshold relative to the window's peak power,
    so contact-rate jitter does not register as fluctuation.
    """
    _, total = joint_power(trace)
    seg = total[window.start:window.stop + 1]
    width = max(1, int(round(smooth_ms * 1e-3 / trace.dt)))
    if width > 1:
        kernel = np.ones(width) / width
        seg = np.convolve(seg, kernel, mode="same")
    if seg.max() <= 0:
        return 0
    peaks, _ = find_peaks(seg, prominence=prominence_frac * seg.max())
    return int(len(peaks))


def measured_flight_phases(trace, window, min_samples=3):
    """Count aerial intervals (no foot in contact) within a stride window."""
    seg = trace.contact[window.start:window.stop + 1]
    airborne = ~seg.any(axis=1)
    count = 0
    run = 0
    for a in airborne:
        if a:
            run += 1
        else:
            if run >= min_samples:
                count += 1
            run = 0
    if run >= min_samples:
        count += 1
    return count
