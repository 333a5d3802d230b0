"""Domain types shared across the package: sensor samples, traces, sensor sets.

Feature order is fixed everywhere as
``acc_x, acc_y, acc_z, ori_x, ori_y, ori_z, mag_x, mag_y, mag_z``.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

FEATURE_NAMES = (
    "acc_x", "acc_y", "acc_z",
    "ori_x", "ori_y", "ori_z",
    "mag_x", "mag_y", "mag_z",
)
N_FEATURES = 9


class SentinelError(ValueError):
    """Base class for all validation errors raised by the package."""


class DimensionError(SentinelError):
    pass


class Sensor(enum.Flag):
    ACC = enum.auto()
    ORI = enum.auto()
    MAG = enum.auto()


# canonical order, also the order of the triples inside a 9-dim vector
SENSOR_ORDER = (Sensor.ACC, Sensor.ORI, Sensor.MAG)
_SENSOR_NAMES = {Sensor.ACC: "acc", Sensor.ORI: "ori", Sensor.MAG: "mag"}
_NAME_TO_SENSOR = {v: k for k, v in _SENSOR_NAMES.items()}


@dataclass(frozen=True)
class SensorSet:
    """Non-empty subset of {acc, ori, mag}."""

    flags: Sensor

    def __post_init__(self):
        if not isinstance(self.flags, Sensor) or not self.flags:
            raise SentinelError("a sensor set needs at least one sensor")

    @classmethod
    def all(cls) -> "SensorSet":
        return cls(Sensor.ACC | Sensor.ORI | Sensor.MAG)

    @classmethod
    def parse(cls, text: str) -> "SensorSet":
        """Parse ``"acc,mag"``, ``"acc+mag"`` or ``"all"``."""
        text = text.strip().lower()
        if text == "all":
            return cls.all()
        flags = Sensor(0)
        for part in text.replace("+", ",").split(","):
            part = part.strip()
            if part not in _NAME_TO_SENSOR:
                raise SentinelError(f"unknown sensor {part!r} (expected acc, ori or mag)")
            flags |= _NAME_TO_SENSOR[part]
        return cls(flags)

    @property
    def sensors(self) -> tuple[Sensor, ...]:
        return tuple(s for s in SENSOR_ORDER if s in self.flags)

    @property
    def dim(self) -> int:
        return 3 * len(self.sensors)

    @property
    def indices(self) -> np.ndarray:
        """Column indices of the enabled triples inside a 9-dim vector."""
        idx = [3 * SENSOR_ORDER.index(s) + k for s in self.sensors for k in range(3)]
        return np.array(idx, dtype=np.intp)

    @property
    def name(self) -> str:
        return "+".join(_SENSOR_NAMES[s] for s in self.sensors)

    def to_list(self) -> list[str]:
        return [_SENSOR_NAMES[s] for s in self.sensors]

    @classmethod
    def from_list(cls, names: Sequence[str]) -> "SensorSet":
        return cls.parse(",".join(names))

    def __str__(self) -> str:
        return self.name


def all_sensor_sets() -> list[SensorSet]:
    """The seven non-empty combinations: singles, then pairs, then all three."""
    out = []
    for r in (1, 2, 3):
        for combo in itertools.combinations(SENSOR_ORDER, r):
            flags = Sensor(0)
            for s in combo:
                flags |= s
            out.append(SensorSet(flags))
    return out


def _as_triple(values, name: str) -> tuple[float, float, float]:
    vals = tuple(float(v) for v in values)
    if len(vals) != 3:
        raise DimensionError(f"{name} must have 3 components, got {len(vals)}")
    return vals  # type: ignore[return-value]


@dataclass(frozen=True)
class SensorSample:
    """One reading: seconds since trace start plus the three 3-axis sensors."""

    timestamp: float
    acc: tuple[float, float, float]
    ori: tuple[float, float, float]
    mag: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "timestamp", float(self.timestamp))
        object.__setattr__(self, "acc", _as_triple(self.acc, "acc"))
        object.__setattr__(self, "ori", _as_triple(self.ori, "ori"))
        object.__setattr__(self, "mag", _as_triple(self.mag, "mag"))
        if not math.isfinite(self.timestamp) or self.timestamp < 0:
            raise SentinelError(f"timestamp must be finite and >= 0, got {self.timestamp}")
        if not all(math.isfinite(v) for v in self.acc + self.ori + self.mag):
            raise SentinelError("sensor components must be finite")

    def vector(self) -> np.ndarray:
        return np.array(self.acc + self.ori + self.mag, dtype=float)

    @classmethod
    def from_row(cls, timestamp: float, values: Sequence[float]) -> "SensorSample":
        if len(values) != N_FEATURES:
            raise DimensionError(f"expected 9 sensor values, got {len(values)}")
        return cls(timestamp, tuple(values[0:3]), tuple(values[3:6]), tuple(values[6:9]))


class Trace:
    """Ordered readings for one user, stored column-wise.

    ``timestamps`` has shape ``(n,)`` and ``values`` shape ``(n, 9)``; both
    arrays are read-only.
    """

    __slots__ = ("user_id", "timestamps", "values", "native_rate_hz")

    def __init__(self, user_id: str, timestamps, values, native_rate_hz: float):
        if not isinstance(user_id, str) or not user_id:
            raise SentinelError("user_id must be a non-empty string")
        native_rate_hz = float(native_rate_hz)
        if not (native_rate_hz > 0 and math.isfinite(native_rate_hz)):
            raise SentinelError(f"native_rate_hz must be positive, got {native_rate_hz}")
        ts = np.array(timestamps, dtype=float).reshape(-1)
        vals = np.array(values, dtype=float).reshape(-1, N_FEATURES) if len(ts) else np.empty((0, N_FEATURES))
        if vals.shape[0] != ts.shape[0]:
            raise DimensionError(f"{ts.shape[0]} timestamps but {vals.shape[0]} value rows")
        if len(ts):
            if not np.all(np.isfinite(ts)) or ts[0] < 0:
                raise SentinelError("timestamps must be finite and non-negative")
            if np.any(np.diff(ts) <= 0):
                bad = int(np.argmax(np.diff(ts) <= 0)) + 1
                raise SentinelError(f"timestamps not strictly increasing at sample {bad}")
            if not np.all(np.isfinite(vals)):
                raise SentinelError("sensor values must be finite")
        ts.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "user_id", user_id)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "native_rate_hz", native_rate_hz)

    def __setattr__(self, name, value):
        raise AttributeError("Trace is immutable")

    @classmethod
    def from_samples(cls, user_id: str, samples: Iterable[SensorSample], native_rate_hz: float) -> "Trace":
        samples = list(samples)
        ts = [s.timestamp for s in samples]
        vals = [s.acc + s.ori + s.mag for s in samples]
        return cls(user_id, ts, vals, native_rate_hz)

    def __len__(self) -> int:
        return self.timestamps.shape[0]

    def __getitem__(self, i: int) -> SensorSample:
        return SensorSample.from_row(self.timestamps[i], self.values[i])

    def __iter__(self) -> Iterator[SensorSample]:
        for i in range(len(self)):
            yield self[i]

    @property
    def samples(self) -> list[SensorSample]:
        return list(self)

    @property
    def duration_s(self) -> float:
        """Covered span, counting the last sample's native period."""
        if not len(self):
            return 0.0
        return float(self.timestamps[-1]) + 1.0 / self.native_rate_hz

    def truncate(self, until_s: float) -> "Trace":
        """Samples with ``t < until_s``."""
        k = int(np.searchsorted(self.timestamps, until_s, side="left"))
        return Trace(self.user_id, self.timestamps[:k], self.values[:k], self.native_rate_hz)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trace):
            return NotImplemented
        return (
            self.user_id == other.user_id
            and self.native_rate_hz == other.native_rate_hz
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self) -> str:
        return f"Trace(user_id={self.user_id!r}, n={len(self)}, native_rate_hz={self.native_rate_hz})"


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray = field(compare=False)
    sensor_set: SensorSet
    label: int | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.shape[0] != self.sensor_set.dim:
            raise DimensionError(
                f"vector of dimension {vals.shape[0]} does not match sensor set {self.sensor_set} "
                f"(dimension {self.sensor_set.dim})"
            )
        if not np.all(np.isfinite(vals)):
            raise SentinelError("feature vector components must be finite")
        if self.label not in (None, -1, 1):
            raise SentinelError(f"label must be +1 or -1, got {self.label}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return (
            self.sensor_set == other.sensor_set
            and self.label == other.label
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None  # type: ignore[assignment]


def project(v, s: SensorSet) -> FeatureVector:
    """Keep the enabled sensor triples of a 9-dim vector, in acc, ori, mag order."""
    label = None
    if isinstance(v, FeatureVector):
        label = v.label
        v = v.values
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape[0] != N_FEATURES:
        raise DimensionError(f"project expects a 9-dim vector, got dimension {arr.shape[0]}")
    return FeatureVector(arr[s.indices], s, label)


def project_rows(X: np.ndarray, s: SensorSet) -> np.ndarray:
    """Batch form of :func:`project` for an ``(n, 9)`` matrix."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != N_FEATURES:
        raise DimensionError(f"project_rows expects shape (n, 9), got {X.shape}")
    return X[:, s.indices]
