"""Window averaging of raw traces into fixed-interval feature vectors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import SentinelError, Trace

# Guards floor(t / interval) against representation error, e.g. 0.6 / 0.2 = 2.9999999999999996.
_EDGE_EPS = 1e-9


class ResampleError(SentinelError):
    pass


@dataclass(frozen=True)
class ResampleSpec:
    interval_s: float

    def __post_init__(self):
        if not (self.interval_s > 0 and math.isfinite(self.interval_s)):
            raise ResampleError(f"interval_s must be positive, got {self.interval_s}")

    def check(self, native_rate_hz: float) -> None:
        spacing = 1.0 / native_rate_hz
        if self.interval_s < spacing * (1 - _EDGE_EPS):
            raise ResampleError(
                f"interval {self.interval_s} s is finer than the native spacing {spacing} s"
            )


def window_index(timestamps: np.ndarray, interval_s: float) -> np.ndarray:
    """Window number ``k`` with ``t`` in ``[k*interval, (k+1)*interval)``."""
    return np.floor(np.asarray(timestamps, dtype=float) / interval_s + _EDGE_EPS).astype(np.int64)


def resample_arrays(timestamps: np.ndarray, values: np.ndarray, interval_s: float):
    """Average rows sharing a time window.

    Returns ``(window_starts, means, counts)``; empty windows are absent.
    """
    ts = np.asarray(timestamps, dtype=float)
    vals = np.asarray(values, dtype=float)
    if ts.shape[0] == 0:
        raise ResampleError("cannot resample an empty trace")
    k = window_index(ts, interval_s)
    # timestamps are sorted, so window ids are non-decreasing and runs are contiguous
    starts_idx = np.flatnonzero(np.r_[True, k[1:] != k[:-1]])
    counts = np.diff(np.r_[starts_idx, len(k)])
    sums = np.add.reduceat(vals, starts_idx, axis=0)
    means = sums / counts[:, None]
    return k[starts_idx] * interval_s, means, counts


def resample(trace: Trace, spec: ResampleSpec) -> list[tuple[float, np.ndarray]]:
    """Resample a trace; each entry is ``(window_start_s, 9-dim mean vector)``."""
    starts, means, _ = resample_trace(trace, spec)
    return list(zip(starts.tolist(), means))


def resample_trace(trace: Trace, spec: ResampleSpec):
    """Array form of :func:`resample`: ``(window_starts, means, counts)``."""
    if len(trace) == 0:
        raise ResampleError(f"trace for {trace.user_id!r} is empty")
    spec.check(trace.native_rate_hz)
    return resample_arrays(trace.timestamps, trace.values, spec.interval_s)


def resample_count(trace: Trace, k: int) -> np.ndarray:
    """Average every ``k`` consecutive samples; the trailing group may be shorter.

    On a gap-free trace starting at t=0 this matches time windows of
    ``k / native_rate_hz`` seconds.
    """
    if k < 1:
        raise ResampleError("group size must be >= 1")
    n = len(trace)
    if n == 0:
        raise ResampleError(f"trace for {trace.user_id!r} is empty")
    starts = np.arange(0, n, k)
    counts = np.diff(np.r_[starts, n])
    return np.add.reduceat(trace.values, starts, axis=0) / counts[:, None]


def effective_count(n_samples: int, native_rate_hz: float, interval_s: float) -> int:
    """Number of vectors a gap-free uniform trace of ``n_samples`` resamples to."""
    per_window = native_rate_hz * interval_s
    return math.ceil(n_samples / per_window - _EDGE_EPS)
