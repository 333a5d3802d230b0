"""Owner profiles, per-window verdicts and the streaming monitor."""

from __future__ import annotations

import datetime as dt
import enum
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import jsonschema
import numpy as np

from .core import SensorSample, SensorSet, SentinelError, Trace, project_rows
from .resample import ResampleSpec, resample_arrays, resample_trace, window_index
from .svm import DEFAULT_LAMBDA, LinearModel, Scaler, SolverConfig, decision_function, fit_scaler, solve

log = logging.getLogger(__name__)

PROFILE_FORMAT = "sentinel-profile/1"
MIN_OWNER_VECTORS = 20
DEFAULT_DETECTION_WINDOW_S = 20.0
SECONDS_PER_DAY = 86400.0

PROFILE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": [
        "format", "owner", "w", "b", "lambda", "scaler", "sensor_set", "interval_s", "seed",
        "detection_window_s", "decision_rule", "trained_at", "negative_source_ids",
        "negatives_with_replacement", "n_train", "solver",
    ],
    "properties": {
        "format": {"const": PROFILE_FORMAT},
        "owner": {"type": "string", "minLength": 1},
        "w": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 9},
        "b": {"type": "number"},
        "lambda": {"type": "number", "exclusiveMinimum": 0},
        "scaler": {
            "type": "object",
            "required": ["mean", "std"],
            "properties": {
                "mean": {"type": "array", "items": {"type": "number"}},
                "std": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            },
        },
        "sensor_set": {
            "type": "array",
            "items": {"enum": ["acc", "ori", "mag"]},
            "minItems": 1, "maxItems": 3, "uniqueItems": True,
        },
        "interval_s": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer"},
        "detection_window_s": {"type": "number", "exclusiveMinimum": 0},
        "decision_rule": {"enum": ["mean", "vote"]},
        "trained_at": {"type": "string", "pattern": r"^\d{4}-\d{2}-\d{2}$"},
        "negative_source_ids": {"type": "array", "items": {"type": "string"}},
        "negatives_with_replacement": {"type": "boolean"},
        "n_train": {"type": "integer", "minimum": 2},
        "solver": {"type": "object"},
    },
    "additionalProperties": False,
}


class ProfileError(SentinelError):
    pass


class Decision(str, enum.Enum):
    AUTHENTIC = "AUTHENTIC"
    ANOMALOUS = "ANOMALOUS"


@dataclass(frozen=True)
class Profile:
    owner: str
    model: LinearModel
    scaler: Scaler
    sensor_set: SensorSet
    interval_s: float
    seed: int
    trained_at: dt.date
    negative_source_ids: tuple[str, ...]
    n_train: int
    detection_window_s: float = DEFAULT_DETECTION_WINDOW_S
    decision_rule: str = "mean"
    negatives_with_replacement: bool = False
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.model.dim != self.sensor_set.dim:
            raise ProfileError(
                f"model dimension {self.model.dim} does not match sensor set {self.sensor_set}"
            )
        if self.scaler.mean.shape[0] != self.sensor_set.dim:
            raise ProfileError("scaler dimension does not match sensor set")
        if self.detection_window_s < self.interval_s:
            raise ProfileError(
                f"detection window {self.detection_window_s} s is shorter than the "
                f"resample interval {self.interval_s} s"
            )
        if self.decision_rule not in ("mean", "vote"):
            raise ProfileError(f"unknown decision rule {self.decision_rule!r}")

    def to_dict(self) -> dict:
        return {
            "format": PROFILE_FORMAT,
            "owner": self.owner,
            **self.model.to_dict(),
            "scaler": self.scaler.to_dict(),
            "sensor_set": self.sensor_set.to_list(),
            "interval_s": self.interval_s,
            "seed": self.seed,
            "detection_window_s": self.detection_window_s,
            "decision_rule": self.decision_rule,
            "trained_at": self.trained_at.isoformat(),
            "negative_source_ids": list(self.negative_source_ids),
            "negatives_with_replacement": self.negatives_with_replacement,
            "n_train": self.n_train,
            "solver": asdict(self.solver),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, obj: dict) -> "Profile":
        try:
            jsonschema.validate(obj, PROFILE_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ProfileError(f"invalid profile: {exc.message}") from None
        solver = dict(obj["solver"])
        solver["seed"] = obj["seed"]
        return cls(
            owner=obj["owner"],
            model=LinearModel.from_dict(obj),
            scaler=Scaler.from_dict(obj["scaler"]),
            sensor_set=SensorSet.from_list(obj["sensor_set"]),
            interval_s=float(obj["interval_s"]),
            seed=int(obj["seed"]),
            trained_at=dt.date.fromisoformat(obj["trained_at"]),
            negative_source_ids=tuple(obj["negative_source_ids"]),
            n_train=int(obj["n_train"]),
            detection_window_s=float(obj["detection_window_s"]),
            decision_rule=obj["decision_rule"],
            negatives_with_replacement=bool(obj["negatives_with_replacement"]),
            solver=SolverConfig(**solver),
        )

    @classmethod
    def load(cls, path) -> "Profile":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ProfileError(f"profile {path} is not valid JSON: {exc}") from None
        return cls.from_dict(obj)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    def score(self, vectors9: np.ndarray) -> np.ndarray:
        """Scores of raw (unprojected, unscaled) 9-dim vectors."""
        X = self.scaler.transform(project_rows(np.atleast_2d(vectors9), self.sensor_set))
        return decision_function(self.model, X)


@dataclass(frozen=True)
class Verdict:
    decision: Decision
    mean_score: float
    window_start: float
    window_end: float
    n_vectors: int

    def to_dict(self) -> dict:
        return {
            "decision": self.decision.value,
            "mean_score": self.mean_score,
            "window_start": self.window_start,
            "window_end": self.window_end,
            "n_vectors": self.n_vectors,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class TrainingSet:
    X: np.ndarray  # raw 9-dim vectors
    y: np.ndarray
    with_replacement: bool
    negative_source_ids: tuple[str, ...]


def balanced_training_set(
    owner_vectors: np.ndarray,
    others_vectors: Mapping[str, np.ndarray],
    seed: int,
) -> TrainingSet:
    """All owner vectors as +1 plus as many negatives drawn from the pooled others.

    Negatives are drawn uniformly without replacement, falling back to drawing
    with replacement when the pool is smaller than the owner set.
    """
    ids = tuple(sorted(others_vectors))
    if not ids:
        raise ProfileError("no other users to draw negatives from")
    pool = np.concatenate([np.asarray(others_vectors[u]) for u in ids], axis=0)
    n = owner_vectors.shape[0]
    if pool.shape[0] == 0:
        raise ProfileError("the pool of other users' vectors is empty")
    rng = np.random.default_rng(seed)
    replace = pool.shape[0] < n
    if replace:
        log.warning("negative pool (%d) smaller than owner set (%d); sampling with replacement",
                    pool.shape[0], n)
    picks = rng.choice(pool.shape[0], size=n, replace=replace)
    X = np.concatenate([owner_vectors, pool[picks]], axis=0)
    y = np.r_[np.ones(n), -np.ones(n)]
    return TrainingSet(X, y, replace, ids)


def _resampled(trace: Trace, interval_s: float) -> np.ndarray:
    return resample_trace(trace, ResampleSpec(interval_s))[1]


def build_profile(
    owner: Trace,
    others: Mapping[str, Trace],
    sensor_set: SensorSet,
    spec: ResampleSpec | float,
    lam: float = DEFAULT_LAMBDA,
    seed: int = 0,
    *,
    detection_window_s: float = DEFAULT_DETECTION_WINDOW_S,
    trained_at: dt.date | None = None,
    decision_rule: str = "mean",
    solver: SolverConfig | None = None,
) -> Profile:
    spec = spec if isinstance(spec, ResampleSpec) else ResampleSpec(float(spec))
    others = {uid: t for uid, t in others.items() if uid != owner.user_id}
    if not others:
        raise ProfileError("at least one other user is required for negatives")
    if len(owner) == 0:
        raise ProfileError(f"owner trace {owner.user_id!r} is empty")
    owner_vecs = _resampled(owner, spec.interval_s)
    if owner_vecs.shape[0] < MIN_OWNER_VECTORS:
        raise ProfileError(
            f"insufficient owner data: {owner_vecs.shape[0]} vectors at {spec.interval_s} s, "
            f"need {MIN_OWNER_VECTORS}"
        )
    others_vecs = {uid: _resampled(t, spec.interval_s) for uid, t in others.items() if len(t)}
    ts = balanced_training_set(owner_vecs, others_vecs, seed)
    X = project_rows(ts.X, sensor_set)
    scaler = fit_scaler(X)
    solver = SolverConfig(**{**asdict(solver or SolverConfig()), "seed": seed})
    result = solve(scaler.transform(X), ts.y, lam, solver)
    return Profile(
        owner=owner.user_id,
        model=result.model,
        scaler=scaler,
        sensor_set=sensor_set,
        interval_s=spec.interval_s,
        seed=seed,
        trained_at=trained_at or dt.date.today(),
        negative_source_ids=ts.negative_source_ids,
        n_train=int(ts.y.shape[0]),
        detection_window_s=detection_window_s,
        decision_rule=decision_rule,
        negatives_with_replacement=ts.with_replacement,
        solver=solver,
    )


def _as_arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(samples, Trace):
        return np.asarray(samples.timestamps), np.asarray(samples.values)
    samples = list(samples)
    ts = np.array([s.timestamp for s in samples], dtype=float)
    vals = np.array([s.acc + s.ori + s.mag for s in samples], dtype=float).reshape(-1, 9)
    return ts, vals


def decide(profile: Profile, scores: np.ndarray) -> Decision:
    if profile.decision_rule == "vote":
        ok = np.count_nonzero(scores > 0) * 2 > scores.shape[0]
    else:
        ok = float(scores.mean()) > 0
    return Decision.AUTHENTIC if ok else Decision.ANOMALOUS


def authenticate_window(
    profile: Profile,
    samples: Trace | Sequence[SensorSample],
    window_start: float | None = None,
    window_end: float | None = None,
) -> Verdict:
    """Resample, project, scale and score the samples of one detection window."""
    ts, vals = _as_arrays(samples)
    if ts.shape[0] == 0:
        raise ProfileError("empty window: no samples to authenticate")
    span = float(ts[-1] - ts[0])
    if span > profile.detection_window_s * (1 + 1e-9):
        raise ProfileError(
            f"samples span {span:.3f} s, longer than the detection window {profile.detection_window_s} s"
        )
    _, means, _ = resample_arrays(ts, vals, profile.interval_s)
    scores = profile.score(means)
    mean_score = float(scores.mean())
    return Verdict(
        decision=decide(profile, scores),
        mean_score=mean_score,
        window_start=float(ts[0]) if window_start is None else float(window_start),
        window_end=float(ts[-1]) if window_end is None else float(window_end),
        n_vectors=int(scores.shape[0]),
    )


class StreamMonitor:
    """Tumbling-window monitor; one instance per sample stream.

    Windows are ``[k*W, (k+1)*W)`` in stream time. A window's verdict is
    emitted once a sample from a later window arrives, or on :meth:`flush`.
    """

    def __init__(self, profile: Profile):
        self.profile = profile
        self.window_s = profile.detection_window_s
        self.dropped = 0
        self._current: int | None = None
        self._ts: list[float] = []
        self._rows: list[tuple[float, ...]] = []
        self._last_t = -math.inf

    def _emit(self) -> list[Verdict]:
        if not self._ts:
            return []
        k = self._current
        verdict = authenticate_window(
            self.profile,
            [SensorSample.from_row(t, r) for t, r in zip(self._ts, self._rows)],
            window_start=k * self.window_s,
            window_end=(k + 1) * self.window_s,
        )
        self._ts, self._rows = [], []
        return [verdict]

    def feed(self, sample: SensorSample) -> list[Verdict]:
        if sample.timestamp <= self._last_t:
            self.dropped += 1
            log.warning("dropping out-of-order sample at t=%s (last t=%s)", sample.timestamp, self._last_t)
            return []
        self._last_t = sample.timestamp
        k = int(window_index(np.array([sample.timestamp]), self.window_s)[0])
        out: list[Verdict] = []
        if self._current is not None and k != self._current:
            out = self._emit()
        self._current = k
        self._ts.append(sample.timestamp)
        self._rows.append(sample.acc + sample.ori + sample.mag)
        return out

    def flush(self) -> list[Verdict]:
        return self._emit()


def stream_monitor(profile: Profile, samples: Iterable[SensorSample]) -> Iterator[Verdict]:
    monitor = StreamMonitor(profile)
    for sample in samples:
        yield from monitor.feed(sample)
    yield from monitor.flush()


def monitor_trace(profile: Profile, trace: Trace) -> list[Verdict]:
    """Vectorised equivalent of :func:`stream_monitor` over a whole trace."""
    if len(trace) == 0:
        return []
    W = profile.detection_window_s
    k = window_index(trace.timestamps, W)
    bounds = np.flatnonzero(np.r_[True, k[1:] != k[:-1], True])
    out = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        _, means, _ = resample_arrays(trace.timestamps[lo:hi], trace.values[lo:hi], profile.interval_s)
        scores = profile.score(means)
        out.append(Verdict(decide(profile, scores), float(scores.mean()),
                           float(k[lo] * W), float((k[lo] + 1) * W), int(scores.shape[0])))
    return out


def daily_retrain(
    profile: Profile,
    new_owner: Trace,
    others: Mapping[str, Trace],
    *,
    trained_at: dt.date | None = None,
    allow_short: bool = False,
) -> Profile:
    """Replace the profile with one trained only on the new day's data."""
    if len(new_owner) == 0:
        raise ProfileError("new owner trace is empty")
    if new_owner.duration_s < SECONDS_PER_DAY * (1 - 1e-9) and not allow_short:
        raise ProfileError(
            f"new owner trace spans {new_owner.duration_s:.0f} s, less than one day; "
            "pass allow_short=True to retrain anyway"
        )
    return build_profile(
        new_owner,
        others,
        profile.sensor_set,
        ResampleSpec(profile.interval_s),
        profile.model.lam,
        profile.seed,
        detection_window_s=profile.detection_window_s,
        trained_at=trained_at or dt.date.today(),
        decision_rule=profile.decision_rule,
        solver=profile.solver,
    )
