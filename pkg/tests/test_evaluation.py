import csv
import io
import json

import numpy as np
import pytest

from sentinel.core import SensorSet, all_sensor_sets
from sentinel.evaluation import (
    CellError,
    CVMode,
    EvalConfig,
    EvaluationError,
    VectorCache,
    accuracy_identity_gap,
    data_size_curve,
    evaluate_cell,
    kfold_split,
    sweep,
    sweep_owners,
    timing_curve,
    write_plot_data,
)
from sentinel.resample import ResampleSpec, resample_trace
from sentinel.syngen import ScenarioSpec, generate_population, make_population

from conftest import small_population

ALL = SensorSet.all()


def test_kfold_examples():
    folds = kfold_split(10, 10, seed=0)
    assert sorted(len(f) for f in folds) == [1] * 10
    folds = kfold_split(103, 10, seed=0)
    assert sorted(len(f) for f in folds) == [10] * 7 + [11] * 3
    joined = np.concatenate(folds)
    assert sorted(joined.tolist()) == list(range(103))
    with pytest.raises(EvaluationError):
        kfold_split(4, 5, seed=0)
    with pytest.raises(EvaluationError):
        kfold_split(10, 1, seed=0)


def test_kfold_seeded_shuffle():
    a, b, c = kfold_split(40, 4, 1), kfold_split(40, 4, 1), kfold_split(40, 4, 2)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not all(np.array_equal(x, y) for x, y in zip(a, c))


def nearest_mean_accuracy(dataset, owner, interval):
    """Independent reference: classify by distance to the two class means on scaled data."""
    own = resample_trace(dataset[owner], ResampleSpec(interval))[1]
    oth = np.concatenate([resample_trace(t, ResampleSpec(interval))[1] for u, t in dataset.items() if u != owner])
    mu, sd = np.r_[own, oth].mean(0), np.r_[own, oth].std(0)
    own, oth = (own - mu) / sd, (oth - mu) / sd
    co, cn = own.mean(0), oth.mean(0)
    closer = lambda X: np.linalg.norm(X - co, axis=1) < np.linalg.norm(X - cn, axis=1)
    return 0.5 * (closer(own).mean() + (~closer(oth)).mean())


def test_separable_fixture_high_accuracy(easy_dataset):
    for mode in CVMode:
        rec = evaluate_cell(easy_dataset, "user0", ALL, 20.0, EvalConfig(mode=mode, seed=3))
        assert rec.accuracy >= 0.95
    assert nearest_mean_accuracy(easy_dataset, "user0", 20.0) >= 0.95


def test_record_fields_and_balance_identity(easy_dataset):
    pl = evaluate_cell(easy_dataset, "user1", SensorSet.parse("ori"), 10.0, EvalConfig(seed=1))
    st = evaluate_cell(easy_dataset, "user1", SensorSet.parse("ori"), 10.0,
                       EvalConfig(seed=1, mode=CVMode.STANDARD))
    for rec in (pl, st):
        assert 0 <= rec.accuracy <= 1 and 0 <= rec.fp_rate <= 1 and 0 <= rec.fn_rate <= 1
        assert accuracy_identity_gap(rec) < 1e-12
        assert rec.n_train + rec.n_test == 2 * 720
    assert pl.n_train == 144 and st.n_train == 1296


def test_cell_errors(easy_dataset):
    with pytest.raises(EvaluationError):
        evaluate_cell(easy_dataset, "nobody", ALL, 20.0, EvalConfig())
    with pytest.raises(EvaluationError, match="insufficient data"):
        evaluate_cell(easy_dataset, "user0", ALL, 1200.0, EvalConfig())
    cfg = EvalConfig(intervals_s=(20.0, 1200.0), sensor_sets=(ALL,))
    with pytest.raises(CellError) as exc:
        sweep(easy_dataset, "user0", cfg)
    assert exc.value.coords["interval_s"] == 1200.0


def test_config_validation():
    with pytest.raises(EvaluationError):
        EvalConfig(k=1)
    with pytest.raises(EvaluationError):
        EvalConfig(intervals_s=())


def test_sweep_cell_count_and_order_independence(easy_dataset):
    sets = all_sensor_sets()[:3]
    cfg = EvalConfig(intervals_s=(60.0, 120.0), sensor_sets=tuple(sets), data_sizes=(None, 1 / 24), seed=5)
    report = sweep(easy_dataset, "user2", cfg)
    assert len(report.records) == 3 * 2 * 2
    cache = VectorCache(easy_dataset)
    for rec in reversed(report.records):
        again = evaluate_cell(easy_dataset, "user2", SensorSet.parse(rec.sensor_set), rec.interval_s, cfg,
                              rec.data_size_days, cache)
        assert (again.accuracy, again.fp_rate, again.fn_rate) == (rec.accuracy, rec.fp_rate, rec.fn_rate)


def test_report_serialization(easy_dataset):
    cfg = EvalConfig(intervals_s=(60.0,), sensor_sets=(ALL, SensorSet.parse("acc")), seed=2)
    report = sweep(easy_dataset, "user0", cfg)
    text = report.to_csv()
    header = [l for l in text.splitlines() if l.startswith("#")]
    assert any("paper-literal" in l for l in header)
    assert json.loads(header[-1].split(":", 1)[1])["seed"] == 2
    rows = list(csv.DictReader(io.StringIO("\n".join(l for l in text.splitlines() if not l.startswith("#")))))
    assert len(rows) == 2 and float(rows[0]["train_time_s"]) > 0
    assert report.to_csv(timing=False) == sweep(easy_dataset, "user0", cfg).to_csv(timing=False)
    obj = json.loads(report.to_json())
    assert obj["reference"]["accuracy_pct"]["PU"]["acc+ori+mag"][0] == 93.9
    assert report.cell("acc", 60.0).owner == "user0"


def test_sweep_owners_adds_mean_rows(easy_dataset):
    cfg = EvalConfig(intervals_s=(120.0,), sensor_sets=(ALL,))
    report = sweep_owners(easy_dataset, cfg)
    owners = [r.owner for r in report.records]
    assert owners == sorted(easy_dataset) + ["mean"]
    mean = report.records[-1]
    assert mean.accuracy == pytest.approx(np.mean([r.accuracy for r in report.records[:-1]]))


def test_parallel_sweep_matches_serial(easy_dataset):
    cfg = EvalConfig(intervals_s=(60.0, 240.0), sensor_sets=tuple(all_sensor_sets()[:2]))
    assert sweep(easy_dataset, "user3", cfg, jobs=2).to_csv(False) == sweep(easy_dataset, "user3", cfg).to_csv(False)


def test_plot_data_files(easy_dataset, tmp_path):
    cfg = EvalConfig(intervals_s=(60.0, 120.0), data_sizes=(1 / 24, 1 / 12))
    report = sweep(easy_dataset, "user0", cfg)
    paths = write_plot_data(report, tmp_path)
    assert sorted(p.name for p in paths) == ["accuracy_all_combinations.csv", "accuracy_sensor_pairs.csv",
                                             "accuracy_single_sensor.csv", "size_accuracy_time.csv"]
    single = (tmp_path / "accuracy_single_sensor.csv").read_text().splitlines()
    assert single[0] == "interval_s,acc,ori,mag" and len(single) == 3
    size = (tmp_path / "size_accuracy_time.csv").read_text().splitlines()
    assert len(size) == 1 + 4
    with pytest.raises(EvaluationError):
        write_plot_data(report, tmp_path, ["pie"])


def test_timing_curve_counts(easy_dataset):
    curve = timing_curve(easy_dataset, "user0", [20, 1, 5], EvalConfig(), repeats=1)
    by = {r.interval_s: r for r in curve.records}
    assert by[1.0].n_train > by[5.0].n_train > by[20.0].n_train
    assert by[20.0].reference_train_time_s == 6.07
    assert "non_increasing" in curve.to_csv()


def test_data_size_curve_errors(easy_dataset):
    with pytest.raises(EvaluationError):
        data_size_curve(easy_dataset, "user0", [0], EvalConfig(), interval_s=60)
    with pytest.raises(EvaluationError):
        data_size_curve(easy_dataset, "user0", [1.0], EvalConfig(), interval_s=60)


def test_train_time_grows_with_size(easy_dataset):
    recs = data_size_curve(easy_dataset, "user0", [1 / 48, 1 / 12], EvalConfig(mode=CVMode.STANDARD), interval_s=5)
    assert recs[1].n_train > recs[0].n_train
    assert recs[1].train_time_s > recs[0].train_time_s


@pytest.mark.slow
def test_accuracy_non_decreasing_in_separation():
    bad = 0
    for seed in range(20):
        accs = []
        for sep in (0.0, 1.0, 3.0, 6.0):
            pop = small_population(separation=sep, seed=seed, hours=2.0)
            accs.append(evaluate_cell(pop, "user0", ALL, 20.0, EvalConfig(seed=seed)).accuracy)
        inversions = sum(b < a for a, b in zip(accs, accs[1:]))
        bad += inversions > 1
    assert bad == 0


@pytest.mark.slow
def test_more_days_no_worse():
    ok = 0
    for seed in range(20):
        spec = ScenarioSpec(make_population(4, 1.0, seed=seed), 5 * 86400.0, seed=seed)
        pop = generate_population(spec)
        one, five = data_size_curve(pop, "user0", [1, 5], EvalConfig(seed=seed), interval_s=1200)
        ok += five.accuracy >= one.accuracy - 0.02
        del pop
    assert ok >= 18
