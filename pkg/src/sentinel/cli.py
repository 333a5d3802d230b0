"""``sentinel`` command line: gen, train, eval, sweep, timing, monitor, validate.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import sys
from pathlib import Path

from .authenticator import DEFAULT_DETECTION_WINDOW_S, Profile, StreamMonitor, build_profile
from .core import SensorSample, SensorSet, SentinelError, all_sensor_sets
from .evaluation import (
    DEFAULT_INTERVALS_S,
    PLOT_FIGURES,
    CVMode,
    EvalConfig,
    EvalReport,
    evaluate_cell,
    sweep_owners,
    timing_curve,
    write_plot_data,
)
from .ingest import HEADER, DatasetManifest, TraceFormatError, load_dataset, parse_row, parse_trace, write_dataset
from .resample import ResampleSpec
from .svm import DEFAULT_LAMBDA, SolverConfig
from .syngen import ScenarioSpec, generate_population, generate_session

log = logging.getLogger("sentinel")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class ConfigError(SentinelError):
    pass


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("SENTINEL_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"SENTINEL_SEED must be an integer, got {env!r}") from None
    return 0


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _sizes(text: str) -> list[float | None]:
    if text.strip().lower() in ("all", "full"):
        return [None]
    return _floats(text)


def _sensor_sets(text: str) -> list[SensorSet]:
    if text.strip().lower() in ("every", "combinations"):
        return all_sensor_sets()
    return [SensorSet.parse(part) for part in text.split(";") if part.strip()]


def _load_manifest(path):
    if not Path(path).is_file():
        raise ConfigError(f"manifest not found: {path}")
    return load_dataset(DatasetManifest.load(path))


def _check_owner(dataset, owner):
    if owner not in dataset:
        raise ConfigError(f"unknown owner {owner!r}; dataset has {sorted(dataset)}")


def _emit(text: str, out) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _solver(args, seed: int) -> SolverConfig:
    return SolverConfig(epochs=args.epochs, seed=seed)


def cmd_gen(args) -> int:
    path = Path(args.spec)
    if not path.is_file():
        raise ConfigError(f"scenario spec not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario spec {path} is not valid JSON: {exc}") from None
    if args.seed is not None or "SENTINEL_SEED" in os.environ:
        obj["seed"] = _seed(args)
    try:
        spec = ScenarioSpec.from_dict(obj)
    except SentinelError as exc:
        raise ConfigError(str(exc)) from None
    population = generate_population(spec)
    extra = {"seed": spec.seed, "scenario": spec.to_dict()}
    out = Path(args.out)
    if spec.takeovers:
        session = generate_session(spec, population)
        from .ingest import write_trace

        out.mkdir(parents=True, exist_ok=True)
        (out / "session.csv").write_bytes(write_trace(session))
        extra["session"] = "session.csv"
    manifest = write_dataset(population, out, extra)
    log.info("wrote %d users to %s", len(population), manifest)
    return EXIT_OK


def cmd_train(args) -> int:
    seed = _seed(args)
    dataset = _load_manifest(args.manifest)
    _check_owner(dataset, args.owner)
    sensors = SensorSet.parse(args.sensors)
    trained_at = dt.date.fromisoformat(args.trained_at) if args.trained_at else None
    profile = build_profile(
        dataset[args.owner],
        {u: t for u, t in dataset.items() if u != args.owner},
        sensors,
        ResampleSpec(args.interval),
        args.lam,
        seed,
        detection_window_s=args.detection_window,
        trained_at=trained_at,
        decision_rule=args.decision_rule,
        solver=_solver(args, seed),
    )
    _emit(profile.to_json(), args.out)
    return EXIT_OK


def _eval_config(args, seed: int, **overrides) -> EvalConfig:
    params = dict(
        k=args.folds,
        mode=CVMode(args.mode),
        lam=args.lam,
        seed=seed,
        repetitions=args.repetitions,
        solver=_solver(args, seed),
    )
    params.update(overrides)
    return EvalConfig(**params)


def _write_report(report: EvalReport, args) -> None:
    timing = not args.no_timing
    text = report.to_json(timing) if args.format == "json" else report.to_csv(timing)
    _emit(text, args.out)
    if args.plot_data:
        figures = args.figures.split(",") if args.figures else PLOT_FIGURES
        write_plot_data(report, args.plot_data, figures)


def cmd_eval(args) -> int:
    seed = _seed(args)
    dataset = _load_manifest(args.manifest)
    _check_owner(dataset, args.owner)
    sensors = SensorSet.parse(args.sensors)
    config = _eval_config(args, seed, intervals_s=(args.interval,), sensor_sets=(sensors,),
                          data_sizes=(args.size,))
    record = evaluate_cell(dataset, args.owner, sensors, args.interval, config, args.size)
    _write_report(EvalReport(config, [record], kind="eval"), args)
    return EXIT_OK


def cmd_sweep(args) -> int:
    seed = _seed(args)
    dataset = _load_manifest(args.manifest)
    owners = args.owner or None
    for o in owners or []:
        _check_owner(dataset, o)
    config = _eval_config(args, seed, intervals_s=tuple(args.intervals), sensor_sets=tuple(args.sensor_sets),
                          data_sizes=tuple(args.sizes))
    report = sweep_owners(dataset, config, owners, jobs=args.jobs)
    _write_report(report, args)
    return EXIT_OK


def cmd_timing(args) -> int:
    seed = _seed(args)
    dataset = _load_manifest(args.manifest)
    _check_owner(dataset, args.owner)
    config = EvalConfig(lam=args.lam, seed=seed, solver=_solver(args, seed))
    curve = timing_curve(dataset, args.owner, args.intervals, config, repeats=args.repeats)
    _emit(curve.to_csv(), args.out)
    return EXIT_OK


def cmd_monitor(args) -> int:
    path = Path(args.profile)
    if not path.is_file():
        raise ConfigError(f"profile not found: {path}")
    profile = Profile.load(path)
    log.info("monitoring with profile %s", json.dumps({k: v for k, v in profile.to_dict().items()
                                                        if k not in ("w", "scaler")}, sort_keys=True))
    monitor = StreamMonitor(profile)
    stream = open(args.input, encoding="utf-8") if args.input else sys.stdin
    out = sys.stdout
    try:
        for lineno, raw in enumerate(stream, start=1):
            line = raw.strip()
            if not line or line.replace(" ", "") == HEADER:
                continue
            try:
                row = parse_row(line, lineno)
                sample = SensorSample.from_row(row[0], row[1:])
            except (TraceFormatError, SentinelError) as exc:
                print(f"warning: skipping input line {lineno}: {exc}", file=sys.stderr)
                continue
            for verdict in monitor.feed(sample):
                out.write(verdict.to_json() + "\n")
                out.flush()
        for verdict in monitor.flush():
            out.write(verdict.to_json() + "\n")
    finally:
        if args.input:
            stream.close()
    if monitor.dropped:
        print(f"warning: dropped {monitor.dropped} out-of-order sample(s)", file=sys.stderr)
    return EXIT_OK


def _detect_kind(path: Path, text: str) -> str:
    if text.startswith(HEADER[:5]):
        return "trace"
    obj = json.loads(text)
    if isinstance(obj, dict) and obj.get("format", "").startswith("sentinel-profile"):
        return "profile"
    if isinstance(obj, dict) and "users" in obj and "native_rate_hz" in obj and "duration_s" not in obj:
        return "manifest"
    return "scenario"


def cmd_validate(args) -> int:
    path = Path(args.file)
    if not path.is_file():
        raise ConfigError(f"file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        kind = args.kind or _detect_kind(path, text)
        if kind == "trace":
            trace = parse_trace(text, path.stem, args.rate)
            detail = f"{len(trace)} samples"
        elif kind == "profile":
            profile = Profile.from_dict(json.loads(text))
            detail = f"owner {profile.owner}, sensors {profile.sensor_set}"
        elif kind == "manifest":
            detail = f"{len(_load_manifest(path))} users"
        else:
            spec = ScenarioSpec.from_dict(json.loads(text))
            detail = f"{len(spec.users)} users, {spec.duration_s} s"
    except (SentinelError, json.JSONDecodeError) as exc:
        print(f"invalid {args.kind or 'file'} {path}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(f"ok: {kind} {path} ({detail})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sentinel", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True, solver=True):
        if seed:
            p.add_argument("--seed", type=int, default=None,
                           help="RNG seed (falls back to $SENTINEL_SEED, then 0)")
        if solver:
            p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
            p.add_argument("--epochs", type=int, default=SolverConfig.epochs)

    def reporting(p):
        p.add_argument("--mode", choices=[m.value for m in CVMode], default=CVMode.PAPER_LITERAL.value)
        p.add_argument("--folds", type=int, default=10)
        p.add_argument("--repetitions", type=int, default=1)
        p.add_argument("--format", choices=["csv", "json"], default="csv")
        p.add_argument("--out", help="report path (default stdout)")
        p.add_argument("--no-timing", action="store_true",
                       help="leave training times out so reports are byte-reproducible")
        p.add_argument("--plot-data", metavar="DIR", help="also write per-figure series files")
        p.add_argument("--figures", help=f"comma-separated subset of {','.join(PLOT_FIGURES)}")

    p = sub.add_parser("gen", help="generate a synthetic dataset from a scenario JSON")
    p.add_argument("spec")
    p.add_argument("--out", required=True)
    common(p, solver=False)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train an owner profile")
    p.add_argument("--manifest", required=True)
    p.add_argument("--owner", required=True)
    p.add_argument("--sensors", default="all")
    p.add_argument("--interval", type=float, default=5.0, help="resample interval in seconds")
    p.add_argument("--detection-window", type=float, default=DEFAULT_DETECTION_WINDOW_S)
    p.add_argument("--decision-rule", choices=["mean", "vote"], default="mean")
    p.add_argument("--trained-at", help="ISO date recorded in the profile (default today)")
    p.add_argument("--out", help="profile path (default stdout)")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="cross-validate one (sensor set, interval) cell")
    p.add_argument("--manifest", required=True)
    p.add_argument("--owner", required=True)
    p.add_argument("--sensors", default="all")
    p.add_argument("--interval", type=float, default=20.0)
    p.add_argument("--size", type=float, default=None, help="truncate traces to this many days")
    common(p)
    reporting(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="sensor-set x interval x data-size grid")
    p.add_argument("--manifest", required=True)
    p.add_argument("--owner", action="append", help="owner id (repeatable; default every user plus mean rows)")
    p.add_argument("--intervals", type=_floats, default=list(DEFAULT_INTERVALS_S))
    p.add_argument("--sensor-sets", type=_sensor_sets, default=all_sensor_sets(),
                   help="';'-separated sets such as 'acc;acc,mag;all' (default: all seven)")
    p.add_argument("--sizes", type=_sizes, default=[None], help="comma-separated days (default full trace)")
    p.add_argument("--jobs", type=int, default=1)
    common(p)
    reporting(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("timing", help="median training time against resample interval")
    p.add_argument("--manifest", required=True)
    p.add_argument("--owner", required=True)
    p.add_argument("--intervals", type=_floats, default=[1.0, 2.0, 5.0, 10.0, 20.0])
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_timing)

    p = sub.add_parser("monitor", help="score a CSV sample stream, one JSON verdict per line")
    p.add_argument("--profile", required=True)
    p.add_argument("--input", help="trace CSV to read instead of stdin")
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("validate", help="check a trace, manifest, profile or scenario file")
    p.add_argument("file")
    p.add_argument("--kind", choices=["trace", "manifest", "profile", "scenario"])
    p.add_argument("--rate", type=float, default=5.0, help="native rate for trace files")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SentinelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
