import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamsage.core import ConfigError, FeatureSpec, Schema, SchemaError, TargetSpec
from streamsage.streams import (
    AGRAWAL_SCHEMA,
    SCENARIOS,
    AgrawalGenerator,
    CsvStream,
    DriftComposer,
    StaggerGenerator,
    agrawal_label,
    stagger_label,
    take,
)


def agrawal_row(salary, age, commission=0.0, elevel=0, loan=0.0):
    return np.array([salary, commission, age, elevel, 0, 0, 100_000.0, 5, loan])


def concept1_predicate(age, salary):
    return ((age < 40) and 50_000 <= salary <= 100_000) or (
        40 <= age < 60 and 75_000 <= salary <= 125_000) or (age >= 60 and 25_000 <= salary <= 75_000)


def test_agrawal_concept1_examples():
    assert agrawal_label(agrawal_row(70_000, 30), 1)[0] == 1
    assert agrawal_label(agrawal_row(60_000, 50), 1)[0] == 0


def test_agrawal_feature_laws():
    gen = AgrawalGenerator(1, np.random.default_rng(0))
    X, Y = gen.generate(100_000)
    assert X.shape == (100_000, 9)
    assert np.mean(X[:, 1] == 0) == pytest.approx(75 / 130, abs=0.01)
    assert np.all((X[:, 0] >= 20_000) & (X[:, 0] <= 150_000))
    assert np.all((X[:, 1] == 0) == (X[:, 0] > 75_000))
    assert np.all((X[:, 2] >= 20) & (X[:, 2] <= 80))
    for j, spec in enumerate(AGRAWAL_SCHEMA.features):
        if spec.kind == "categorical":
            assert set(np.unique(X[:, j])) <= set(range(spec.cardinality))
    expected = [int(concept1_predicate(x[2], x[0])) for x in X[:5_000]]
    assert Y[:5_000].tolist() == expected


@pytest.mark.parametrize("concept", range(1, 7))
def test_agrawal_concepts_are_non_degenerate(concept):
    _, Y = AgrawalGenerator(concept, np.random.default_rng(concept)).generate(20_000)
    assert 0.05 < Y.mean() < 0.95


def test_agrawal_rejects_bad_concept():
    with pytest.raises(ConfigError):
        AgrawalGenerator(7)


def test_generator_determinism():
    a = AgrawalGenerator(3, np.random.default_rng(42)).generate(1_000)
    b = AgrawalGenerator(3, np.random.default_rng(42)).generate(1_000)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_stagger_examples_and_rates():
    assert stagger_label(np.array([0.0, 0.0, 0.0]), 1)[0] == 1
    assert stagger_label(np.array([0.0, 2.0, 1.0]), 3)[0] == 0
    for concept, rate in zip((1, 2, 3), (1 / 9, 5 / 9, 2 / 3)):
        _, Y = StaggerGenerator(concept, np.random.default_rng(concept)).generate(50_000)
        assert Y.mean() == pytest.approx(rate, abs=0.01)


def test_composer_without_switching():
    comp = DriftComposer([StaggerGenerator(c, np.random.default_rng(c)) for c in (1, 2, 3)], 0.0,
                         np.random.default_rng(0))
    assert {comp.next()[1] for _ in range(2_000)} == {1}


def test_composer_sojourn_length():
    p = SCENARIOS["high"]
    steps = switches = 0
    for run in range(50):
        rng = np.random.default_rng(run)
        comp = DriftComposer([StaggerGenerator(c, rng) for c in (1, 2, 3)], p, rng)
        for _ in range(20_000):
            switches += comp.next()[2]
        steps += 20_000
    # steps per switch estimates the mean sojourn without truncating long sojourns at run ends
    assert steps / switches == pytest.approx(2_000, rel=0.1)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 6))
def test_switch_flag_changes_concept(seed, k):
    rng = np.random.default_rng(seed)
    comp = DriftComposer([StaggerGenerator(1, rng) for _ in range(k)], 0.2, rng)
    prev = comp.concept
    for _ in range(200):
        _, concept, switched = comp.next()
        assert switched == (concept != prev)
        assert 1 <= concept <= k
        prev = concept


def test_composer_validation():
    with pytest.raises(ConfigError):
        DriftComposer([], 0.1)
    with pytest.raises(ConfigError):
        DriftComposer([StaggerGenerator(1)], 1.5)


@pytest.fixture
def csv_schema():
    return Schema((FeatureSpec("a"), FeatureSpec("c", "categorical", ("x", "y"))), TargetSpec("t", "real"))


def test_csv_in_order_then_end(tmp_path, csv_schema):
    path = tmp_path / "d.csv"
    path.write_text("a,c,t\n1.5,x,0.1\n2.5,y,0.2\n3.5,x,0.3\n")
    stream = CsvStream(path, csv_schema)
    rows = list(stream)
    assert [r.x.tolist() for r in rows] == [[1.5, 0.0], [2.5, 1.0], [3.5, 0.0]]
    assert [r.y for r in rows] == [0.1, 0.2, 0.3]


def test_csv_shuffle_is_seeded(tmp_path, csv_schema):
    path = tmp_path / "d.csv"
    path.write_text("a,c,t\n" + "".join(f"{i},x,{i}\n" for i in range(50)))
    a = [s.y for s in CsvStream(path, csv_schema, shuffle=True, seed=3)]
    b = [s.y for s in CsvStream(path, csv_schema, shuffle=True, seed=3)]
    assert a == b and a != sorted(a) and sorted(a) == [float(i) for i in range(50)]


def test_csv_bad_value_names_row_and_column(tmp_path, csv_schema):
    lines = ["a,c,t"] + [f"{i},x,0" for i in range(1, 17)] + ["abc,x,0", "1,x,0"]
    path = tmp_path / "d.csv"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaError, match=r"row 17, column 1 \('a'\)"):
        CsvStream(path, csv_schema)


def test_csv_header_mismatch(tmp_path, csv_schema):
    path = tmp_path / "d.csv"
    path.write_text("a,b,t\n1,x,0\n")
    with pytest.raises(SchemaError, match="header"):
        CsvStream(path, csv_schema)


def test_take():
    X, Y = take(StaggerGenerator(2, np.random.default_rng(1)), 7)
    assert X.shape == (7, 3) and Y.shape == (7,)
