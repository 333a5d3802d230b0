"""Synthetic multi-user sensor traces with a tunable class separation.

Each user is a Gaussian process around fixed baselines: the accelerometer
carries a sinusoidal gait component, the magnetometer a slow linear drift, and
orientation noise is inflated by ``ori_variability``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import SentinelError, Trace

SECONDS_PER_DAY = 86400.0
DEFAULT_RATE_HZ = 5.0

# Baselines loosely resembling a phone held upright indoors.
BASE_ACC = (0.2, 0.6, 9.6)   # m/s^2
BASE_ORI = (0.1, -0.4, 1.3)  # rad
BASE_MAG = (22.0, -8.0, -38.0)  # uT
NOISE_ACC = (0.6, 0.6, 0.6)
NOISE_ORI = (0.08, 0.08, 0.08)
NOISE_MAG = (1.5, 1.5, 1.5)


class ScenarioError(SentinelError):
    pass


def _vec3(v) -> tuple[float, float, float]:
    t = tuple(float(x) for x in v)
    if len(t) != 3:
        raise ScenarioError(f"expected a 3-vector, got {v!r}")
    return t  # type: ignore[return-value]


@dataclass(frozen=True)
class UserParams:
    user_id: str
    acc_mean: tuple[float, float, float] = BASE_ACC
    ori_mean: tuple[float, float, float] = BASE_ORI
    mag_mean: tuple[float, float, float] = BASE_MAG
    acc_std: tuple[float, float, float] = NOISE_ACC
    ori_std: tuple[float, float, float] = NOISE_ORI
    mag_std: tuple[float, float, float] = NOISE_MAG
    gait_amplitude: float = 0.8
    gait_frequency_hz: float = 1.8
    ori_variability: float = 3.0
    mag_drift_per_day: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.user_id:
            raise ScenarioError("user_id must be non-empty")
        for name in ("acc_mean", "ori_mean", "mag_mean", "acc_std", "ori_std", "mag_std", "mag_drift_per_day"):
            object.__setattr__(self, name, _vec3(getattr(self, name)))
        for name in ("acc_std", "ori_std", "mag_std"):
            if min(getattr(self, name)) <= 0:
                raise ScenarioError(f"{name} components must be positive")
        if not self.gait_frequency_hz > 0:
            raise ScenarioError("gait_frequency_hz must be positive")
        if self.gait_amplitude < 0:
            raise ScenarioError("gait_amplitude must be non-negative")
        if not self.ori_variability > 0:
            raise ScenarioError("ori_variability must be positive")

    @property
    def mean9(self) -> np.ndarray:
        return np.array(self.acc_mean + self.ori_mean + self.mag_mean)

    @property
    def noise9(self) -> np.ndarray:
        """Effective per-axis noise std (orientation includes its multiplier)."""
        ori = tuple(self.ori_variability * s for s in self.ori_std)
        return np.array(self.acc_std + ori + self.mag_std)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, obj: dict) -> "UserParams":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ScenarioError(f"unknown user parameter(s): {sorted(unknown)}")
        return cls(**obj)


def generate_trace(params: UserParams, duration_s: float, rate_hz: float = DEFAULT_RATE_HZ, seed: int = 0) -> Trace:
    """Sample ``floor(duration_s * rate_hz)`` readings at ``t = k / rate_hz``.

    The gait sinusoid acts on the accelerometer's z axis.
    """
    if not duration_s > 0:
        raise ScenarioError(f"duration must be positive, got {duration_s}")
    if not rate_hz > 0:
        raise ScenarioError(f"rate must be positive, got {rate_hz}")
    n = int(math.floor(duration_s * rate_hz + 1e-9))
    rng = np.random.default_rng(seed)
    t = np.arange(n) / rate_hz
    noise = rng.standard_normal((n, 9)) * params.noise9
    vals = np.empty((n, 9))
    vals[:] = params.mean9
    vals[:, 2] += params.gait_amplitude * np.sin(2 * np.pi * params.gait_frequency_hz * t)
    vals[:, 6:9] += np.outer(t / SECONDS_PER_DAY, params.mag_drift_per_day)
    vals += noise
    return Trace(params.user_id, t, vals, rate_hz)


def separation(a: UserParams, b: UserParams) -> float:
    """Distance between baseline means in units of the pooled noise std."""
    return _separation(a, b)


def _separation(a: UserParams, b: UserParams) -> float:
    pooled = np.sqrt(0.5 * (a.noise9 ** 2 + b.noise9 ** 2))
    return float(np.linalg.norm((a.mean9 - b.mean9) / pooled))


@dataclass(frozen=True)
class Takeover:
    time_s: float
    from_user: str
    to_user: str


@dataclass(frozen=True)
class ScenarioSpec:
    users: tuple[UserParams, ...]
    duration_s: float
    native_rate_hz: float = DEFAULT_RATE_HZ
    takeovers: tuple[Takeover, ...] = ()
    seed: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "takeovers", tuple(self.takeovers))
        if not self.duration_s > 0:
            raise ScenarioError("duration_s must be positive")
        if not self.native_rate_hz > 0:
            raise ScenarioError("native_rate_hz must be positive")
        ids = [u.user_id for u in self.users]
        if len(set(ids)) != len(ids):
            raise ScenarioError(f"duplicate user ids in scenario: {ids}")
        last = -math.inf
        for ev in self.takeovers:
            if not 0 <= ev.time_s <= self.duration_s:
                raise ScenarioError(f"takeover at {ev.time_s} s lies outside the scenario")
            if ev.time_s <= last:
                raise ScenarioError("takeover times must be strictly increasing")
            if ev.from_user not in ids or ev.to_user not in ids:
                raise ScenarioError(f"takeover references unknown user: {ev}")
            last = ev.time_s

    @classmethod
    def from_dict(cls, obj: dict) -> "ScenarioSpec":
        """Build from JSON; ``users`` may be explicit or a ``population`` block.

        A population block is ``{"n_users": 4, "separation": 3.0,
        "ori_variability": 3.0}`` and is expanded with :func:`make_population`.
        """
        try:
            seed = int(obj.get("seed", 0))
            if "users" in obj:
                users = [UserParams.from_dict(u) for u in obj["users"]]
            elif "population" in obj:
                pop = dict(obj["population"])
                users = make_population(seed=seed, **pop)
            else:
                raise ScenarioError("scenario needs either 'users' or 'population'")
            takeovers = [Takeover(float(e["time_s"]), str(e["from_user"]), str(e["to_user"]))
                         for e in obj.get("takeovers", [])]
            return cls(
                users=tuple(users),
                duration_s=float(obj["duration_s"]),
                native_rate_hz=float(obj.get("native_rate_hz", DEFAULT_RATE_HZ)),
                takeovers=tuple(takeovers),
                seed=seed,
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SentinelError):
                raise
            raise ScenarioError(f"malformed scenario: {exc!r}") from None

    @classmethod
    def load(cls, path) -> "ScenarioSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {
            "users": [u.to_dict() for u in self.users],
            "duration_s": self.duration_s,
            "native_rate_hz": self.native_rate_hz,
            "takeovers": [asdict(ev) for ev in self.takeovers],
            "seed": self.seed,
        }


def user_seed(seed: int, index: int) -> int:
    """Independent per-user stream derived from the scenario seed."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint64)[0])


def generate_population(spec: ScenarioSpec) -> dict[str, Trace]:
    if len(spec.users) < 2:
        raise ScenarioError(f"a population needs at least 2 users, got {len(spec.users)}")
    return {
        u.user_id: generate_trace(u, spec.duration_s, spec.native_rate_hz, user_seed(spec.seed, i))
        for i, u in enumerate(spec.users)
    }


def generate_session(spec: ScenarioSpec, population: dict[str, Trace] | None = None) -> Trace:
    """One device's trace: the active user switches at each takeover.

    Before the first takeover the device belongs to that event's ``from_user``
    (or the first user when there are no takeovers).
    """
    population = population if population is not None else generate_population(spec)
    ids = [u.user_id for u in spec.users]
    first = spec.takeovers[0].from_user if spec.takeovers else ids[0]
    ref = population[first]
    ts = ref.timestamps
    owner_of = np.full(len(ts), ids.index(first))
    for ev in spec.takeovers:
        owner_of[ts >= ev.time_s] = ids.index(ev.to_user)
    vals = np.empty_like(ref.values)
    for k, uid in enumerate(ids):
        mask = owner_of == k
        if mask.any():
            vals[mask] = population[uid].values[mask]
    session_id = spec.extra.get("session_id", "session")
    return Trace(session_id, ts, vals, spec.native_rate_hz)


def _simplex(n: int, dim: int) -> np.ndarray:
    """``n`` vertices of a regular simplex with unit edges, centred at 0."""
    if n > dim + 1:
        raise ScenarioError(f"cannot place {n} equidistant users in {dim} dimensions")
    pts = np.eye(n)[:, :n] / math.sqrt(2.0)
    pts -= pts.mean(axis=0)
    # orthonormal basis of the (n-1)-dim affine hull
    u, _, _ = np.linalg.svd(pts.T, full_matrices=False)
    coords = pts @ u[:, : n - 1]
    out = np.zeros((n, dim))
    out[:, : n - 1] = coords
    return out


def _rotation(rng: np.random.Generator, dim: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def make_population(
    n_users: int = 4,
    separation: float = 3.0,
    ori_variability: float = 3.0,
    seed: int = 0,
    mag_drift_per_day: float = 0.0,
    prefix: str = "user",
) -> list[UserParams]:
    """Users whose baselines are pairwise at least ``separation`` apart.

    Offsets are measured in units of the *base* noise std. With up to four
    users each sensor block gets its own randomly rotated regular simplex, so
    every block separates every pair equally and orientation, whose noise is
    inflated by ``ori_variability``, is the least separable block. Larger
    populations fall back to one rotated simplex across all nine axes. The
    layout is rescaled so the closest pair sits exactly at ``separation``.
    """
    if n_users < 2:
        raise ScenarioError("a population needs at least 2 users")
    if separation < 0:
        raise ScenarioError("separation must be non-negative")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    if n_users <= 4:
        unit = np.hstack([_simplex(n_users, 3) @ _rotation(rng, 3).T for _ in range(3)])
    else:
        unit = _simplex(n_users, 9) @ _rotation(rng, 9).T
    base_noise = np.array(NOISE_ACC + NOISE_ORI + NOISE_MAG)
    offsets = unit * base_noise
    drifts = rng.normal(0.0, mag_drift_per_day, size=(n_users, 3)) if mag_drift_per_day else np.zeros((n_users, 3))
    base_mean = np.array(BASE_ACC + BASE_ORI + BASE_MAG)

    def build(scale: float) -> list[UserParams]:
        users = []
        for i in range(n_users):
            m = base_mean + scale * offsets[i]
            users.append(UserParams(
                user_id=f"{prefix}{i}",
                acc_mean=tuple(m[0:3]), ori_mean=tuple(m[3:6]), mag_mean=tuple(m[6:9]),
                ori_variability=ori_variability,
                mag_drift_per_day=tuple(drifts[i]),
            ))
        return users

    if separation == 0:
        return build(0.0)
    probe = build(1.0)
    closest = min(_separation(probe[i], probe[j]) for i in range(n_users) for j in range(i + 1, n_users))
    return build(separation / closest)

