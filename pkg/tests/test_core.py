import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sentinel.core import (
    DimensionError,
    FeatureVector,
    Sensor,
    SensorSample,
    SensorSet,
    SentinelError,
    Trace,
    all_sensor_sets,
    project,
    project_rows,
)

V = np.arange(1.0, 10.0)
finite = st.floats(-1e6, 1e6, allow_nan=False)


@pytest.mark.parametrize("text,expected", [
    ("all", [1, 2, 3, 4, 5, 6, 7, 8, 9]),
    ("acc", [1, 2, 3]),
    ("acc,mag", [1, 2, 3, 7, 8, 9]),
    ("mag+acc", [1, 2, 3, 7, 8, 9]),
    ("ori", [4, 5, 6]),
])
def test_project_fixed_order(text, expected):
    out = project(V, SensorSet.parse(text))
    assert out.values.tolist() == expected
    assert out.values.shape[0] == SensorSet.parse(text).dim


def test_sensor_set_dims_and_names():
    sets = all_sensor_sets()
    assert len(sets) == 7
    assert [s.dim for s in sets] == [3, 3, 3, 6, 6, 6, 9]
    assert sets[-1].name == "acc+ori+mag"
    assert SensorSet.from_list(SensorSet.all().to_list()) == SensorSet.all()


def test_sensor_set_requires_one_sensor():
    with pytest.raises(SentinelError):
        SensorSet(Sensor(0))
    with pytest.raises(SentinelError):
        SensorSet.parse("gps")


def test_project_dimension_mismatch():
    with pytest.raises(DimensionError):
        project(np.ones(6), SensorSet.all())


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=9, max_size=9), st.lists(finite, min_size=9, max_size=9),
       st.sampled_from(all_sensor_sets()))
def test_project_linear_and_value_preserving(a, b, s):
    a, b = np.array(a), np.array(b)
    lhs = project(a + b, s).values
    rhs = project(a, s).values + project(b, s).values
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-6)
    assert np.array_equal(project(a, s).values, a[s.indices])
    full = project(a, SensorSet.all())
    assert np.array_equal(project(full, SensorSet.all()).values, a)


def test_project_rows_matches_project():
    X = np.arange(27.0).reshape(3, 9)
    s = SensorSet.parse("ori,mag")
    assert np.array_equal(project_rows(X, s), np.stack([project(r, s).values for r in X]))


def test_sample_validation():
    with pytest.raises(SentinelError):
        SensorSample(-0.1, (0, 0, 0), (0, 0, 0), (0, 0, 0))
    with pytest.raises(SentinelError):
        SensorSample(0.0, (0, np.nan, 0), (0, 0, 0), (0, 0, 0))
    s = SensorSample.from_row(0.5, range(9))
    assert s.mag == (6.0, 7.0, 8.0)
    assert s.vector().tolist() == list(range(9))


def test_trace_invariants():
    with pytest.raises(SentinelError):
        Trace("u", [0.0, 0.2, 0.2], np.zeros((3, 9)), 5.0)
    with pytest.raises(SentinelError):
        Trace("", [0.0], np.zeros((1, 9)), 5.0)
    with pytest.raises(SentinelError):
        Trace("u", [0.0], np.zeros((1, 9)), 0.0)
    t = Trace("u", [0.0, 0.2, 0.4], np.arange(27.0).reshape(3, 9), 5.0)
    assert len(t) == 3 and t[1].acc == (9.0, 10.0, 11.0)
    assert Trace.from_samples("u", t.samples, 5.0) == t
    assert len(t.truncate(0.4)) == 2
    with pytest.raises((AttributeError, ValueError)):
        t.values[0, 0] = 1.0


def test_feature_vector_checks():
    with pytest.raises(SentinelError):
        FeatureVector(np.ones(4), SensorSet.all())
    with pytest.raises(SentinelError):
        FeatureVector(np.ones(3), SensorSet.parse("acc"), label=0)
    assert FeatureVector(np.ones(3), SensorSet.parse("acc"), label=-1).label == -1
