"""Cross-validated accuracy sweeps, training-time and data-size curves, reports."""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import multiprocessing
import statistics
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .authenticator import Decision, Verdict, balanced_training_set
from .core import SensorSet, SentinelError, Trace, all_sensor_sets, project_rows
from .resample import ResampleSpec, resample_trace
from .svm import DEFAULT_LAMBDA, SolverConfig, fit_scaler, predict_labels, solve

log = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400.0

# Sampling-interval grid (seconds) used by the published accuracy table.
DEFAULT_INTERVALS_S = (5, 10, 20, 40, 60, 120, 240, 360, 480, 600, 900, 1200)
TIMING_INTERVALS_S = (1, 2, 5, 10, 20, 40, 60)

# Published figures, kept as context in reports and never asserted.
REFERENCE_ACCURACY_PCT = {
    "PU": {
        "acc": (90.1, 88.3, 85.4, 85.3, 84.5, 84.0, 80.2, 79.2, 76.4, 69.2, 68.8, 58.6),
        "mag": (91.0, 88.9, 86.2, 84.6, 83.4, 74.7, 73.3, 73.7, 68.0, 66.4, 62.2, 60.2),
        "ori": (76.5, 74.2, 72.2, 71.3, 69.8, 67.1, 65.8, 64.7, 63.9, 62.1, 60.4, 59.0),
        "acc+mag": (92.0, 90.0, 86.4, 86.6, 85.9, 85.3, 81.5, 80.3, 77.9, 70.6, 70.5, 60.4),
        "acc+ori": (91.8, 90.3, 87.7, 86.2, 86.1, 83.3, 82.0, 80.6, 77.3, 72.2, 69.1, 67.1),
        "ori+mag": (92.8, 91.1, 87.7, 86.7, 84.7, 86.5, 81.3, 74.0, 69.1, 65.9, 63.2, 58.3),
        "acc+ori+mag": (93.9, 92.8, 90.1, 89.1, 87.2, 85.2, 84.3, 82.7, 78.7, 72.4, 70.8, 67.2),
    },
    "GCU": {
        "acc": (91.0, 88.4, 87.8, 87.9, 87.5, 82.4, 83.1, 77.8, 78.3, 80.2, 75.3, 73.0),
        "mag": (92.3, 91.2, 91.0, 85.7, 85.2, 83.4, 79.5, 76.7, 75.3, 72.2, 69.8, 69.5),
        "ori": (64.2, 63.9, 63.8, 60.8, 60.7, 60.6, 60.0, 60.0, 59.1, 58.0, 57.5, 57.3),
        "acc+mag": (95.5, 95.8, 94.7, 93.7, 92.7, 91.8, 89.2, 86.7, 84.0, 83.1, 81.4, 79.6),
        "acc+ori": (96.4, 96.6, 95.5, 94.3, 93.1, 92.0, 90.0, 87.1, 84.7, 83.5, 82.7, 79.4),
        "ori+mag": (91.8, 90.3, 87.7, 86.2, 84.3, 82.2, 80.8, 79.1, 76.2, 73.2, 71.1, 70.1),
        "acc+ori+mag": (97.4, 97.1, 96.7, 95.7, 95.3, 93.1, 90.0, 89.1, 87.5, 85.9, 83.1, 80.2),
    },
}
REFERENCE_TRAIN_TIME_S = {
    "PU": dict(zip(TIMING_INTERVALS_S, (33502, 1855, 170.72, 39.85, 6.07, 1.19, 0.51))),
    "GCU": dict(zip(TIMING_INTERVALS_S, (23101, 485, 62.41, 9.43, 1.02, 0.21, 0.17))),
}


class EvaluationError(SentinelError):
    pass


class CellError(EvaluationError):
    def __init__(self, coords: dict, cause: Exception):
        super().__init__(f"cell {coords} failed: {cause}")
        self.coords = coords
        self.cause = cause


class CVMode(str, enum.Enum):
    PAPER_LITERAL = "paper-literal"  # train on 1 fold, test on k-1
    STANDARD = "standard"  # train on k-1 folds, test on 1


@dataclass(frozen=True)
class EvalConfig:
    k: int = 10
    mode: CVMode = CVMode.PAPER_LITERAL
    intervals_s: tuple[float, ...] = DEFAULT_INTERVALS_S
    sensor_sets: tuple[SensorSet, ...] = tuple(all_sensor_sets())
    data_sizes: tuple[float | None, ...] = (None,)  # days; None = whole trace
    lam: float = DEFAULT_LAMBDA
    seed: int = 0
    repetitions: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        object.__setattr__(self, "mode", CVMode(self.mode))
        for name in ("intervals_s", "sensor_sets", "data_sizes"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.k < 2:
            raise EvaluationError("k must be >= 2")
        if not (self.intervals_s and self.sensor_sets and self.data_sizes):
            raise EvaluationError("intervals, sensor sets and data sizes must be non-empty")
        if self.repetitions < 1:
            raise EvaluationError("repetitions must be >= 1")
        for d in self.data_sizes:
            if d is not None and not d > 0:
                raise EvaluationError(f"data size must be positive days, got {d}")

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "mode": self.mode.value,
            "intervals_s": list(self.intervals_s),
            "sensor_sets": [s.name for s in self.sensor_sets],
            "data_sizes": list(self.data_sizes),
            "lambda": self.lam,
            "seed": self.seed,
            "repetitions": self.repetitions,
            "solver": asdict(self.solver),
        }


@dataclass(frozen=True)
class CellRecord:
    owner: str
    sensor_set: str
    interval_s: float
    data_size_days: float | None
    mode: str
    k: int
    accuracy: float
    fp_rate: float
    fn_rate: float
    train_time_s: float
    n_train: int
    n_test: int
    seed: int


CSV_COLUMNS = tuple(f.name for f in fields(CellRecord))


def kfold_split(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Shuffle ``range(n)`` and cut it into ``k`` folds.

    The first ``n % k`` folds hold one extra index, so fold sizes depend only
    on ``(n, k)``.
    """
    if k < 2:
        raise EvaluationError(f"k must be at least 2, got {k}")
    if n < k:
        raise EvaluationError(f"cannot split {n} items into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    base, extra = divmod(n, k)
    sizes = [base + (1 if i < extra else 0) for i in range(k)]
    cuts = np.cumsum([0] + sizes)
    return [np.sort(perm[cuts[i]:cuts[i + 1]]) for i in range(k)]


def _sub_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1, dtype=np.uint64)[0])


class VectorCache:
    """Resampled 9-dim vectors keyed by (user, interval, data size)."""

    def __init__(self, dataset: Mapping[str, Trace]):
        self.dataset = dataset
        self._store: dict = {}

    def get(self, user: str, interval_s: float, days: float | None) -> np.ndarray:
        key = (user, float(interval_s), days)
        if key not in self._store:
            trace = self.dataset[user]
            if days is not None:
                trace = trace.truncate(days * SECONDS_PER_DAY)
            self._store[key] = resample_trace(trace, ResampleSpec(float(interval_s)))[1]
        return self._store[key]


def _check_size(dataset: Mapping[str, Trace], owner: str, days: float | None) -> None:
    if days is None:
        return
    if not days > 0:
        raise EvaluationError(f"data size must be positive, got {days} days")
    have = dataset[owner].duration_s
    if have < days * SECONDS_PER_DAY * (1 - 1e-9):
        raise EvaluationError(
            f"insufficient trace length: owner {owner!r} covers {have / SECONDS_PER_DAY:.4g} days, "
            f"{days} requested"
        )


def evaluate_cell(
    dataset: Mapping[str, Trace],
    owner: str,
    sensor_set: SensorSet,
    interval_s: float,
    config: EvalConfig,
    data_size: float | None = None,
    cache: VectorCache | None = None,
) -> CellRecord:
    """k-fold accuracy, FP rate, FN rate and mean training time for one cell.

    Folds are stratified: positives and negatives are split separately with
    identical fold sizes, so every train and test set is class-balanced.
    """
    if owner not in dataset:
        raise EvaluationError(f"unknown owner {owner!r}")
    _check_size(dataset, owner, data_size)
    cache = cache or VectorCache(dataset)
    owner_vecs = cache.get(owner, interval_s, data_size)
    n = owner_vecs.shape[0]
    if n < config.k:
        raise EvaluationError(
            f"insufficient data for {config.k} folds: owner has {n} vectors at {interval_s} s"
        )
    others = {u: cache.get(u, interval_s, data_size) for u in dataset if u != owner}
    others = {u: v for u, v in others.items() if v.shape[0]}

    accs, fps, fns, times, n_train, n_test = [], [], [], [], [], []
    for rep in range(config.repetitions):
        seed = config.seed if rep == 0 else _sub_seed(config.seed, 100 + rep)
        ts = balanced_training_set(owner_vecs, others, seed)
        X = project_rows(ts.X, sensor_set)
        pos_folds = kfold_split(n, config.k, _sub_seed(seed, 1))
        neg_folds = [f + n for f in kfold_split(n, config.k, _sub_seed(seed, 2))]
        folds = [np.concatenate([p, q]) for p, q in zip(pos_folds, neg_folds)]
        solver = SolverConfig(**{**asdict(config.solver), "seed": seed})
        for i in range(config.k):
            rest = np.concatenate([folds[j] for j in range(config.k) if j != i])
            train_idx, test_idx = (folds[i], rest) if config.mode is CVMode.PAPER_LITERAL else (rest, folds[i])
            t0 = time.perf_counter()
            scaler = fit_scaler(X[train_idx])
            model = solve(scaler.transform(X[train_idx]), ts.y[train_idx], config.lam, solver).model
            times.append(time.perf_counter() - t0)
            pred = predict_labels(model, scaler.transform(X[test_idx]))
            y_test = ts.y[test_idx]
            pos = y_test > 0
            accs.append(float(np.mean(pred == y_test)))
            fps.append(float(np.mean(pred[~pos] > 0)))
            fns.append(float(np.mean(pred[pos] < 0)))
            n_train.append(train_idx.shape[0])
            n_test.append(test_idx.shape[0])
    return CellRecord(
        owner=owner,
        sensor_set=sensor_set.name,
        interval_s=float(interval_s),
        data_size_days=data_size,
        mode=config.mode.value,
        k=config.k,
        accuracy=float(np.mean(accs)),
        fp_rate=float(np.mean(fps)),
        fn_rate=float(np.mean(fns)),
        train_time_s=float(np.mean(times)),
        n_train=int(round(np.mean(n_train))),
        n_test=int(round(np.mean(n_test))),
        seed=config.seed,
    )


@dataclass
class EvalReport:
    config: EvalConfig
    records: list[CellRecord]
    kind: str = "sweep"

    def rows(self, timing: bool = True) -> list[dict]:
        out = []
        for r in self.records:
            row = asdict(r)
            if not timing:
                row["train_time_s"] = None
            out.append(row)
        return out

    def to_csv(self, timing: bool = True) -> str:
        buf = io.StringIO()
        buf.write(f"# sentinel {self.kind} report\n")
        buf.write(f"# mode: {self.config.mode.value}\n")
        buf.write(f"# config: {json.dumps(self.config.to_dict(), sort_keys=True)}\n")
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows(timing):
            writer.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                             for k, v in row.items()})
        return buf.getvalue()

    def to_json(self, timing: bool = True) -> str:
        obj = {
            "kind": self.kind,
            "config": self.config.to_dict(),
            "records": self.rows(timing),
            "reference": {"accuracy_pct": {"intervals_s": list(DEFAULT_INTERVALS_S), **REFERENCE_ACCURACY_PCT},
                          "train_time_s": {ds: {str(k): v for k, v in t.items()}
                                           for ds, t in REFERENCE_TRAIN_TIME_S.items()}},
        }
        return json.dumps(obj, indent=2, sort_keys=True) + "\n"

    def cell(self, sensor_set: str, interval_s: float, data_size=None, owner: str | None = None) -> CellRecord:
        for r in self.records:
            if (r.sensor_set == sensor_set and r.interval_s == float(interval_s)
                    and r.data_size_days == data_size and (owner is None or r.owner == owner)):
                return r
        raise KeyError((sensor_set, interval_s, data_size, owner))


def _cells(config: EvalConfig):
    for s in config.sensor_sets:
        for interval in config.intervals_s:
            for size in config.data_sizes:
                yield s, float(interval), size


_WORKER_DATASET: Mapping[str, Trace] | None = None


def _worker_cell(args):
    owner, s, interval, size, config = args
    return _eval_with_coords(_WORKER_DATASET, owner, s, interval, size, config, None)


def _eval_with_coords(dataset, owner, s, interval, size, config, cache):
    try:
        return evaluate_cell(dataset, owner, s, interval, config, size, cache)
    except Exception as exc:
        coords = {"owner": owner, "sensor_set": s.name, "interval_s": interval, "data_size_days": size}
        raise CellError(coords, exc) from exc


def sweep(dataset: Mapping[str, Trace], owner: str, config: EvalConfig, jobs: int = 1) -> EvalReport:
    """One record per (sensor set, interval, data size); cells are independent."""
    if owner not in dataset:
        raise EvaluationError(f"unknown owner {owner!r}")
    cells = list(_cells(config))
    if jobs > 1 and len(cells) > 1 and "fork" in multiprocessing.get_all_start_methods():
        global _WORKER_DATASET
        _WORKER_DATASET = dataset
        ctx = multiprocessing.get_context("fork")
        try:
            with ctx.Pool(jobs) as pool:
                records = pool.map(_worker_cell, [(owner, s, i, z, config) for s, i, z in cells])
        finally:
            _WORKER_DATASET = None
    else:
        cache = VectorCache(dataset)
        records = [_eval_with_coords(dataset, owner, s, i, z, config, cache) for s, i, z in cells]
    return EvalReport(config, records)


def mean_records(records: Sequence[CellRecord]) -> list[CellRecord]:
    """Average per-owner records cell by cell into ``owner="mean"`` rows."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.sensor_set, r.interval_s, r.data_size_days), []).append(r)
    out = []
    for (s, interval, size), rs in groups.items():
        out.append(CellRecord(
            owner="mean", sensor_set=s, interval_s=interval, data_size_days=size,
            mode=rs[0].mode, k=rs[0].k,
            accuracy=float(np.mean([r.accuracy for r in rs])),
            fp_rate=float(np.mean([r.fp_rate for r in rs])),
            fn_rate=float(np.mean([r.fn_rate for r in rs])),
            train_time_s=float(np.mean([r.train_time_s for r in rs])),
            n_train=int(round(np.mean([r.n_train for r in rs]))),
            n_test=int(round(np.mean([r.n_test for r in rs]))),
            seed=rs[0].seed,
        ))
    return out


def sweep_owners(
    dataset: Mapping[str, Trace],
    config: EvalConfig,
    owners: Sequence[str] | None = None,
    jobs: int = 1,
) -> EvalReport:
    """Sweep every owner in turn and append the per-cell mean rows."""
    owners = list(owners) if owners is not None else sorted(dataset)
    records: list[CellRecord] = []
    for owner in owners:
        records.extend(sweep(dataset, owner, config, jobs).records)
    if len(owners) > 1:
        records.extend(mean_records(records))
    return EvalReport(config, records)


@dataclass(frozen=True)
class TimingRecord:
    interval_s: float
    n_train: int
    train_time_s: float
    reference_train_time_s: float | None


@dataclass
class TimingCurve:
    owner: str
    records: list[TimingRecord]

    @property
    def non_increasing(self) -> bool:
        times = [r.train_time_s for r in sorted(self.records, key=lambda r: r.interval_s)]
        return all(b <= a for a, b in zip(times, times[1:]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# sentinel timing report\n# owner: {self.owner}\n")
        buf.write(f"# non_increasing: {str(self.non_increasing).lower()}\n")
        buf.write("interval_s,n_train,train_time_s,reference_train_time_s\n")
        for r in self.records:
            ref = "" if r.reference_train_time_s is None else repr(r.reference_train_time_s)
            buf.write(f"{r.interval_s!r},{r.n_train},{r.train_time_s!r},{ref}\n")
        return buf.getvalue()


def timing_curve(
    dataset: Mapping[str, Trace],
    owner: str,
    intervals: Sequence[float],
    config: EvalConfig,
    repeats: int = 3,
) -> TimingCurve:
    """Median wall-clock time to train a full owner profile at each interval.

    One warm-up run per interval is discarded. Runs serially by design.
    """
    if owner not in dataset:
        raise EvaluationError(f"unknown owner {owner!r}")
    cache = VectorCache(dataset)
    s = SensorSet.all()
    solver = SolverConfig(**{**asdict(config.solver), "seed": config.seed})
    records = []
    for interval in sorted(float(i) for i in intervals):
        owner_vecs = cache.get(owner, interval, None)
        others = {u: cache.get(u, interval, None) for u in dataset if u != owner}
        ts = balanced_training_set(owner_vecs, others, config.seed)
        X = project_rows(ts.X, s)
        samples = []
        for rep in range(repeats + 1):
            t0 = time.perf_counter()
            scaler = fit_scaler(X)
            solve(scaler.transform(X), ts.y, config.lam, solver)
            elapsed = time.perf_counter() - t0
            if rep:
                samples.append(elapsed)
        ref = REFERENCE_TRAIN_TIME_S["PU"].get(int(interval)) if float(interval).is_integer() else None
        records.append(TimingRecord(interval, int(ts.y.shape[0]), statistics.median(samples), ref))
    return TimingCurve(owner, records)


def data_size_curve(
    dataset: Mapping[str, Trace],
    owner: str,
    days: Sequence[float],
    config: EvalConfig,
    interval_s: float | None = None,
    sensor_set: SensorSet | None = None,
) -> list[CellRecord]:
    """Accuracy and training time with traces truncated to each size in days."""
    interval_s = float(interval_s if interval_s is not None else config.intervals_s[0])
    sensor_set = sensor_set or SensorSet.all()
    for d in days:
        if d is None or not d > 0:
            raise EvaluationError(f"data size must be positive, got {d}")
        _check_size(dataset, owner, d)
    cache = VectorCache(dataset)
    return [evaluate_cell(dataset, owner, sensor_set, interval_s, config, float(d), cache) for d in days]


def detection_latency(verdicts: Sequence[Verdict], takeover_s: float) -> float | None:
    """Seconds from takeover to the end of the first later ANOMALOUS window."""
    for v in verdicts:
        if v.window_end > takeover_s and v.decision is Decision.ANOMALOUS:
            return v.window_end - takeover_s
    return None


def false_alarms(verdicts: Sequence[Verdict], takeover_s: float) -> int:
    """ANOMALOUS verdicts on windows that end before the takeover."""
    return sum(1 for v in verdicts if v.window_end <= takeover_s and v.decision is Decision.ANOMALOUS)


PLOT_FIGURES = ("single", "pairs", "all", "size")


def write_plot_data(report: EvalReport, out_dir, figures: Sequence[str] = PLOT_FIGURES,
                    owner: str | None = None) -> list[Path]:
    """Write one series CSV per requested figure; returns the written paths.

    ``single``/``pairs``/``all`` give accuracy against interval for the
    matching sensor sets; ``size`` gives accuracy and training time against
    data size for the three-sensor set.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    owners = {r.owner for r in report.records}
    owner = owner or ("mean" if "mean" in owners else sorted(owners)[0])
    recs = [r for r in report.records if r.owner == owner]
    sizes = sorted({r.data_size_days for r in recs}, key=lambda d: (d is not None, d or 0))
    first_size = sizes[0] if sizes else None
    groups = {
        "single": [s.name for s in all_sensor_sets() if len(s.sensors) == 1],
        "pairs": [s.name for s in all_sensor_sets() if len(s.sensors) == 2],
        "all": [s.name for s in all_sensor_sets()],
    }
    names = {"single": "accuracy_single_sensor.csv", "pairs": "accuracy_sensor_pairs.csv",
             "all": "accuracy_all_combinations.csv", "size": "size_accuracy_time.csv"}
    written = []
    for fig in figures:
        if fig not in names:
            raise EvaluationError(f"unknown figure {fig!r}; choose from {PLOT_FIGURES}")
        path = out_dir / names[fig]
        buf = io.StringIO()
        if fig == "size":
            buf.write("data_size_days,accuracy,train_time_s\n")
            for r in sorted((r for r in recs if r.sensor_set == "acc+ori+mag" and r.data_size_days is not None),
                            key=lambda r: (r.data_size_days, r.interval_s)):
                buf.write(f"{r.data_size_days!r},{r.accuracy!r},{r.train_time_s!r}\n")
        else:
            cols = [c for c in groups[fig] if any(r.sensor_set == c for r in recs)]
            buf.write(",".join(["interval_s", *cols]) + "\n")
            for interval in sorted({r.interval_s for r in recs}):
                vals = []
                for c in cols:
                    match = [r for r in recs if r.sensor_set == c and r.interval_s == interval
                             and r.data_size_days == first_size]
                    vals.append(repr(match[0].accuracy) if match else "")
                buf.write(",".join([repr(interval), *vals]) + "\n")
        path.write_text(buf.getvalue(), encoding="utf-8")
        written.append(path)
    return written


def accuracy_identity_gap(record: CellRecord) -> float:
    """``|accuracy - (1 - (fp + fn) / 2)|``, zero on balanced test sets."""
    return abs(record.accuracy - (1.0 - 0.5 * (record.fp_rate + record.fn_rate)))

