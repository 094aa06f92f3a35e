"""Synthetic drift streams and CSV ingestion.

Streams are iterators of :class:`LabeledSample` with a ``schema`` attribute.
Synthetic generators are infinite; ``take`` and ``generate`` pull finite
prefixes.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .core import ConfigError, FeatureSpec, LabeledSample, Schema, SchemaError, TargetSpec

__all__ = [
    "AGRAWAL_SCHEMA",
    "STAGGER_SCHEMA",
    "SCENARIOS",
    "AgrawalGenerator",
    "StaggerGenerator",
    "DriftComposer",
    "CsvStream",
    "agrawal_label",
    "stagger_label",
    "take",
]

SCENARIOS = {"high": 0.0005, "middle": 0.0002, "low": 0.0001}

AGRAWAL_SCHEMA = Schema(
    (
        FeatureSpec("salary"),
        FeatureSpec("commission"),
        FeatureSpec("age"),
        FeatureSpec("elevel", "categorical", tuple(str(i) for i in range(5))),
        FeatureSpec("car", "categorical", tuple(str(i) for i in range(1, 21))),
        FeatureSpec("zipcode", "categorical", tuple(str(i) for i in range(9))),
        FeatureSpec("hvalue"),
        FeatureSpec("hyears"),
        FeatureSpec("loan"),
    ),
    TargetSpec("class", "class", 2),
)

STAGGER_SCHEMA = Schema(
    (
        FeatureSpec("size", "categorical", ("small", "medium", "large")),
        FeatureSpec("color", "categorical", ("red", "green", "blue")),
        FeatureSpec("shape", "categorical", ("circle", "square", "triangle")),
    ),
    TargetSpec("class", "class", 2),
)

SALARY, COMMISSION, AGE, ELEVEL, CAR, ZIPCODE, HVALUE, HYEARS, LOAN = range(9)


def _between(v, lo, hi):
    return (v >= lo) & (v <= hi)


def agrawal_label(X: np.ndarray, concept: int) -> np.ndarray:
    """Binary labels (1 where the concept's predicate holds) for encoded rows."""
    X = np.atleast_2d(X)
    salary, commission, age = X[:, SALARY], X[:, COMMISSION], X[:, AGE]
    elevel, loan = X[:, ELEVEL], X[:, LOAN]
    young = age < 40
    middle = (age >= 40) & (age < 60)
    old = age >= 60
    if concept == 1:
        hit = (
            (young & _between(salary, 50_000, 100_000))
            | (middle & _between(salary, 75_000, 125_000))
            | (old & _between(salary, 25_000, 75_000))
        )
    elif concept == 2:
        hit = (
            (young & np.isin(elevel, (0, 1)))
            | (middle & np.isin(elevel, (1, 2, 3)))
            | (old & np.isin(elevel, (2, 3, 4)))
        )
    elif concept == 3:
        hit = (
            (young & np.where(np.isin(elevel, (0, 1)), _between(salary, 25_000, 75_000),
                              _between(salary, 50_000, 100_000)))
            | (middle & np.where(np.isin(elevel, (1, 2, 3)), _between(salary, 50_000, 100_000),
                                 _between(salary, 75_000, 125_000)))
            | (old & np.where(np.isin(elevel, (2, 3, 4)), _between(salary, 50_000, 100_000),
                              _between(salary, 25_000, 75_000)))
        )
    elif concept == 4:
        hit = (
            (young & np.where(_between(salary, 50_000, 100_000), _between(loan, 100_000, 300_000),
                              _between(loan, 200_000, 400_000)))
            | (middle & np.where(_between(salary, 75_000, 125_000), _between(loan, 200_000, 400_000),
                                 _between(loan, 300_000, 500_000)))
            | (old & np.where(_between(salary, 25_000, 75_000), _between(loan, 300_000, 500_000),
                              _between(loan, 100_000, 300_000)))
        )
    elif concept == 5:
        total = salary + commission
        hit = (
            (young & _between(total, 50_000, 100_000))
            | (middle & _between(total, 75_000, 125_000))
            | (old & _between(total, 25_000, 75_000))
        )
    elif concept == 6:
        hit = 0.67 * (salary + commission) - 0.2 * loan - 20_000 > 0
    else:
        raise ConfigError(f"agrawal concept must be in 1..6, got {concept}")
    return hit.astype(np.int64)


class _BlockStream:
    """Infinite generator drawing samples in vectorised blocks."""

    schema: Schema
    block = 512

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self._X = np.empty((0, 0))
        self._Y = np.empty(0, dtype=np.int64)
        self._pos = 0

    def _draw(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def __iter__(self) -> Iterator[LabeledSample]:
        return self

    def __next__(self) -> LabeledSample:
        if self._pos >= len(self._Y):
            self._X, self._Y = self._draw(self.block)
            self._pos = 0
        i = self._pos
        self._pos += 1
        return LabeledSample(self._X[i], int(self._Y[i]))

    def generate(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Next ``n`` samples as arrays; continues the same sequence as ``next``."""
        xs, ys = [], []
        for _ in range(n):
            s = next(self)
            xs.append(s.x)
            ys.append(s.y)
        return np.array(xs).reshape(n, self.schema.d), np.array(ys, dtype=np.int64)


class AgrawalGenerator(_BlockStream):
    """Loan-applicant stream with nine features and six selectable concepts."""

    schema = AGRAWAL_SCHEMA

    def __init__(self, concept: int = 1, rng: np.random.Generator | None = None):
        if concept not in range(1, 7):
            raise ConfigError(f"agrawal concept must be in 1..6, got {concept}")
        super().__init__(np.random.default_rng() if rng is None else rng)
        self.concept = concept

    def _draw(self, n):
        rng = self.rng
        X = np.empty((n, 9))
        salary = rng.uniform(20_000, 150_000, n)
        X[:, SALARY] = salary
        X[:, COMMISSION] = np.where(salary <= 75_000, rng.uniform(10_000, 75_000, n), 0.0)
        X[:, AGE] = rng.uniform(20, 80, n)
        X[:, ELEVEL] = rng.integers(0, 5, n)
        X[:, CAR] = rng.integers(0, 20, n)  # code of car make 1..20
        zipcode = rng.integers(0, 9, n)
        X[:, ZIPCODE] = zipcode
        X[:, HVALUE] = (9 - zipcode) * 100_000 * (0.5 + rng.random(n))
        X[:, HYEARS] = rng.integers(1, 31, n)
        X[:, LOAN] = rng.uniform(0, 500_000, n)
        return X, agrawal_label(X, self.concept)


def stagger_label(X: np.ndarray, concept: int) -> np.ndarray:
    X = np.atleast_2d(X)
    size, color, shape = X[:, 0], X[:, 1], X[:, 2]
    if concept == 1:
        hit = (size == 0) & (color == 0)
    elif concept == 2:
        hit = (color == 1) | (shape == 0)
    elif concept == 3:
        hit = (size == 1) | (size == 2)
    else:
        raise ConfigError(f"stagger concept must be in 1..3, got {concept}")
    return hit.astype(np.int64)


class StaggerGenerator(_BlockStream):
    """Three uniform categorical features (size, color, shape) and three concepts."""

    schema = STAGGER_SCHEMA

    def __init__(self, concept: int = 1, rng: np.random.Generator | None = None):
        if concept not in (1, 2, 3):
            raise ConfigError(f"stagger concept must be in 1..3, got {concept}")
        super().__init__(np.random.default_rng() if rng is None else rng)
        self.concept = concept

    def _draw(self, n):
        X = self.rng.integers(0, 3, (n, 3)).astype(float)
        return X, stagger_label(X, self.concept)


class DriftComposer:
    """Sudden-drift stream that hops between substreams at random times.

    Before each emission, with probability ``p_switch`` the active substream
    is replaced by one drawn uniformly among the others.
    """

    def __init__(self, streams: Sequence, p_switch: float, rng: np.random.Generator | None = None,
                 start: int = 0):
        if not streams:
            raise ConfigError("drift composer needs at least one substream")
        if not 0 <= p_switch <= 1:
            raise ConfigError(f"p_switch must lie in [0, 1], got {p_switch}")
        if not 0 <= start < len(streams):
            raise ConfigError("start index out of range")
        self.streams = list(streams)
        self.schema = self.streams[0].schema
        self.p_switch = float(p_switch)
        self.rng = np.random.default_rng() if rng is None else rng
        self.active = start

    @property
    def concept(self) -> int:
        """1-based index of the active substream."""
        return self.active + 1

    def next(self) -> tuple[LabeledSample, int, bool]:
        switched = False
        k = len(self.streams)
        if k > 1 and self.rng.random() < self.p_switch:
            other = int(self.rng.integers(k - 1))
            self.active = other if other < self.active else other + 1
            switched = True
        return next(self.streams[self.active]), self.concept, switched

    def __iter__(self):
        return self

    def __next__(self) -> LabeledSample:
        return self.next()[0]


class CsvStream:
    """Rows of a CSV file parsed against a schema, in file or seeded-shuffle order."""

    def __init__(self, path: str | Path, schema: Schema, shuffle: bool = False, seed: int | None = None):
        self.path = Path(path)
        self.schema = schema
        self.X, self.Y = load_csv(self.path, schema)
        order = np.arange(len(self.Y))
        if shuffle:
            np.random.default_rng(seed).shuffle(order)
        self.order = order
        self._pos = 0

    def __len__(self) -> int:
        return len(self.Y)

    def __iter__(self):
        return self

    def __next__(self) -> LabeledSample:
        if self._pos >= len(self.order):
            raise StopIteration
        i = self.order[self._pos]
        self._pos += 1
        y = self.Y[i]
        return LabeledSample(self.X[i], int(y) if self.schema.is_classification else float(y))


def load_csv(path: str | Path, schema: Schema) -> tuple[np.ndarray, np.ndarray]:
    """Parse a headered CSV into encoded arrays; errors name the data row and column."""
    path = Path(path)
    expected = schema.feature_names + [schema.target.name]
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot open {path}: {exc.strerror}") from None
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file, expected header {expected}")
        header = [h.strip() for h in header]
        if header != expected:
            raise SchemaError(f"{path}: header {header} does not match schema columns {expected}")
        xs, ys = [], []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(expected):
                raise SchemaError(f"{path}: row {row_no} has {len(row)} fields, expected {len(expected)}")
            x = np.empty(schema.d)
            for j, (spec, raw) in enumerate(zip(schema.features, row)):
                try:
                    x[j] = spec.encode(raw.strip())
                except SchemaError as exc:
                    raise SchemaError(f"{path}: row {row_no}, column {j + 1} ({spec.name!r}): {exc}") from None
            try:
                y = schema.encode_target(row[-1].strip())
            except SchemaError as exc:
                raise SchemaError(
                    f"{path}: row {row_no}, column {len(expected)} ({schema.target.name!r}): {exc}"
                ) from None
            xs.append(x)
            ys.append(y)
    if not xs:
        raise SchemaError(f"{path}: no data rows")
    dtype = np.int64 if schema.is_classification else float
    return np.array(xs), np.array(ys, dtype=dtype)


def take(stream, n: int) -> tuple[np.ndarray, np.ndarray]:
    """First ``n`` samples of any stream as ``(X, Y)`` arrays."""
    xs, ys = [], []
    for _ in range(n):
        s = next(stream)
        xs.append(s.x)
        ys.append(s.y)
    return np.array(xs), np.array(ys)
