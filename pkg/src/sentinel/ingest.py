"""Trace CSV files and dataset manifests.

A trace file is UTF-8 CSV with ``\\n`` line endings::

    t,acc_x,acc_y,acc_z,ori_x,ori_y,ori_z,mag_x,mag_y,mag_z
    0.0,0.1,0.2,9.8,0.0,0.1,1.2,30.0,0.5,-40.0

A manifest is JSON: ``{"native_rate_hz": 5, "users": [{"id": "u0", "path": "u0.csv"}]}``
with paths resolved relative to the manifest's directory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import FEATURE_NAMES, SentinelError, Trace

HEADER = "t," + ",".join(FEATURE_NAMES)
N_COLUMNS = 1 + len(FEATURE_NAMES)


class TraceFormatError(SentinelError):
    """Malformed trace file; ``line`` is 1-based (the header is line 1)."""

    def __init__(self, line: int, message: str, source: str | None = None):
        prefix = f"{source}: " if source else ""
        super().__init__(f"{prefix}line {line}: {message}")
        self.line = line
        self.message = message


class DatasetError(SentinelError):
    pass


def _decode(data) -> str:
    if isinstance(data, (bytes, bytearray, memoryview)):
        return bytes(data).decode("utf-8")
    return str(data)


def parse_row(line: str, lineno: int) -> list[float]:
    """Parse one data row into 10 finite floats, raising TraceFormatError."""
    parts = line.split(",")
    if len(parts) != N_COLUMNS:
        raise TraceFormatError(lineno, f"expected {N_COLUMNS} fields, got {len(parts)}")
    try:
        row = [float(p) for p in parts]
    except ValueError:
        raise TraceFormatError(lineno, f"non-numeric field in {line!r}") from None
    if not all(math.isfinite(v) for v in row):
        raise TraceFormatError(lineno, "NaN or infinite value")
    return row


def _slow_scan(lines: list[str]) -> None:
    """Walk data rows one by one so the first bad row can be reported by line."""
    prev = None
    for i, line in enumerate(lines):
        lineno = i + 2
        row = parse_row(line, lineno)
        if row[0] < 0:
            raise TraceFormatError(lineno, f"negative timestamp {row[0]}")
        if prev is not None and row[0] <= prev:
            raise TraceFormatError(lineno, f"timestamp {row[0]} not after previous {prev}")
        prev = row[0]


def parse_trace(data, user_id: str, native_rate_hz: float) -> Trace:
    text = _decode(data)
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    lines = [ln[:-1] if ln.endswith("\r") else ln for ln in lines]
    if not lines:
        raise TraceFormatError(1, "missing header")
    if lines[0].replace(" ", "") != HEADER:
        raise TraceFormatError(1, f"bad header {lines[0]!r}, expected {HEADER!r}")
    body = lines[1:]
    if not body:
        return Trace(user_id, [], [], native_rate_hz)

    if any(not ln.strip() for ln in body):
        _slow_scan(body)  # blank line raises with its number
    try:
        arr = np.loadtxt(body, delimiter=",", ndmin=2, dtype=float)
    except ValueError:
        _slow_scan(body)
        raise  # pragma: no cover - slow scan always finds the culprit
    if arr.shape[1] != N_COLUMNS or arr.shape[0] != len(body):
        _slow_scan(body)
    finite = np.isfinite(arr).all(axis=1)
    if not finite.all():
        raise TraceFormatError(int(np.argmin(finite)) + 2, "NaN or infinite value")
    ts = arr[:, 0]
    if ts[0] < 0:
        raise TraceFormatError(2, f"negative timestamp {ts[0]}")
    bad = np.diff(ts) <= 0
    if bad.any():
        k = int(np.argmax(bad)) + 1
        raise TraceFormatError(k + 2, f"timestamp {ts[k]} not after previous {ts[k - 1]}")
    return Trace(user_id, ts, arr[:, 1:], native_rate_hz)


def format_row(t: float, values) -> str:
    return ",".join(f"{float(v):.9g}" for v in (t, *values))


def write_trace(trace: Trace) -> bytes:
    out = [HEADER]
    for t, row in zip(trace.timestamps.tolist(), trace.values.tolist()):
        out.append(format_row(t, row))
    return ("\n".join(out) + "\n").encode("utf-8")


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    users: tuple[tuple[str, str], ...]
    native_rate_hz: float
    extra: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_dict(cls, obj: dict, root: Path) -> "DatasetManifest":
        try:
            rate = float(obj["native_rate_hz"])
            users = tuple((str(u["id"]), str(u["path"])) for u in obj["users"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"malformed manifest: {exc}") from None
        if not rate > 0:
            raise DatasetError("native_rate_hz must be positive")
        extra = {k: v for k, v in obj.items() if k not in ("native_rate_hz", "users")}
        return cls(Path(root), users, rate, extra)

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise DatasetError(f"manifest not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise DatasetError(f"manifest {path} is not valid JSON: {exc}") from None
        return cls.from_dict(obj, path.parent)

    def to_dict(self) -> dict:
        return {
            "native_rate_hz": self.native_rate_hz,
            "users": [{"id": uid, "path": p} for uid, p in self.users],
            **self.extra,
        }

    def user_ids(self) -> list[str]:
        return [uid for uid, _ in self.users]


def load_dataset(manifest: DatasetManifest) -> dict[str, Trace]:
    ids = manifest.user_ids()
    seen = set()
    for uid in ids:
        if uid in seen:
            raise DatasetError(f"duplicate user {uid!r} in manifest")
        seen.add(uid)
    if len(ids) < 2:
        raise DatasetError(f"insufficient users: need at least 2, manifest lists {len(ids)}")
    out = {}
    for uid, rel in manifest.users:
        path = manifest.root / rel
        if not path.is_file():
            raise DatasetError(f"missing trace file for user {uid!r}: {path}")
        try:
            out[uid] = parse_trace(path.read_bytes(), uid, manifest.native_rate_hz)
        except TraceFormatError as exc:
            raise TraceFormatError(exc.line, exc.message, source=str(path)) from None
    return out


def write_dataset(dataset: dict[str, Trace], out_dir, extra: dict | None = None) -> Path:
    """Write one CSV per user plus ``manifest.json``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rates = {t.native_rate_hz for t in dataset.values()}
    if len(rates) != 1:
        raise DatasetError("all traces in a dataset must share one native rate")
    users = []
    for uid, trace in dataset.items():
        name = f"{uid}.csv"
        (out_dir / name).write_bytes(write_trace(trace))
        users.append((uid, name))
    manifest = DatasetManifest(out_dir, tuple(users), rates.pop(), dict(extra or {}))
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
