"""Shared domain types: stream schema, losses, permutations and seeded RNG."""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "StreamSageError",
    "SchemaError",
    "LossError",
    "EmptyReservoirError",
    "UntrainedModelError",
    "ModelError",
    "ConfigError",
    "FeatureSpec",
    "TargetSpec",
    "Schema",
    "LabeledSample",
    "Loss",
    "CrossEntropy",
    "AbsoluteError",
    "loss_for_schema",
    "sample_permutation",
    "preceding_sets",
    "make_rng",
]


class StreamSageError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(StreamSageError, ValueError):
    pass


class LossError(StreamSageError, ValueError):
    pass


class EmptyReservoirError(StreamSageError, LookupError):
    pass


class UntrainedModelError(StreamSageError, RuntimeError):
    pass


class ModelError(StreamSageError, ValueError):
    pass


class ConfigError(StreamSageError, ValueError):
    pass


# ---------------------------------------------------------------------------
# schema
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureSpec:
    """One input column.

    Categorical values are carried inside instances as the integer position
    of the symbol in ``alphabet`` (stored as float so instances stay a single
    ``float64`` vector).
    """

    name: str
    kind: str = "numeric"
    alphabet: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("numeric", "categorical"):
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical" and len(self.alphabet) < 1:
            raise SchemaError(f"feature {self.name!r}: categorical feature needs an alphabet")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise SchemaError(f"feature {self.name!r}: alphabet has duplicate symbols")

    @property
    def is_categorical(self) -> bool:
        return self.kind == "categorical"

    @property
    def cardinality(self) -> int:
        """Alphabet size, 0 for numeric features."""
        return len(self.alphabet) if self.is_categorical else 0

    def encode(self, raw) -> float:
        if self.is_categorical:
            symbol = str(raw)
            try:
                return float(self.alphabet.index(symbol))
            except ValueError:
                raise SchemaError(
                    f"feature {self.name!r}: symbol {symbol!r} not in alphabet {list(self.alphabet)}"
                ) from None
        try:
            value = float(raw)
        except (TypeError, ValueError):
            raise SchemaError(f"feature {self.name!r}: cannot parse {raw!r} as numeric") from None
        if not math.isfinite(value):
            raise SchemaError(f"feature {self.name!r}: non-finite value {raw!r}")
        return value

    def decode(self, value: float):
        if self.is_categorical:
            return self.alphabet[int(value)]
        return float(value)


@dataclass(frozen=True)
class TargetSpec:
    name: str
    kind: str = "class"
    classes: int | None = None

    def __post_init__(self):
        if self.kind not in ("class", "real"):
            raise SchemaError(f"target {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "class" and (self.classes is None or self.classes < 2):
            raise SchemaError(f"target {self.name!r}: class targets need classes >= 2")


@dataclass(frozen=True)
class Schema:
    """Column layout of a labelled stream."""

    features: tuple[FeatureSpec, ...]
    target: TargetSpec
    _cards: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if not self.features:
            raise SchemaError("schema needs at least one feature")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        object.__setattr__(self, "_cards", tuple(f.cardinality for f in self.features))

    @property
    def d(self) -> int:
        return len(self.features)

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def cardinalities(self) -> tuple[int, ...]:
        """Per-feature alphabet size; 0 marks a numeric feature."""
        return self._cards

    @property
    def is_classification(self) -> bool:
        return self.target.kind == "class"

    @property
    def n_classes(self) -> int | None:
        return self.target.classes

    def encode(self, values: Sequence) -> np.ndarray:
        """Turn raw values (numbers and symbols) into an instance vector."""
        if len(values) != self.d:
            raise SchemaError(f"expected {self.d} feature values, got {len(values)}")
        return np.array([f.encode(v) for f, v in zip(self.features, values)], dtype=float)

    def decode(self, x: np.ndarray) -> list:
        return [f.decode(v) for f, v in zip(self.features, x)]

    def encode_target(self, raw):
        if self.is_classification:
            try:
                label = int(str(raw).strip())
            except ValueError:
                raise SchemaError(f"target {self.target.name!r}: cannot parse {raw!r} as class label") from None
            if not 0 <= label < self.target.classes:
                raise SchemaError(f"target {self.target.name!r}: label {label} outside [0, {self.target.classes})")
            return label
        try:
            value = float(raw)
        except (TypeError, ValueError):
            raise SchemaError(f"target {self.target.name!r}: cannot parse {raw!r} as real") from None
        if not math.isfinite(value):
            raise SchemaError(f"target {self.target.name!r}: non-finite value {raw!r}")
        return value

    def validate(self, x: np.ndarray) -> None:
        """Raise :class:`SchemaError` unless ``x`` is a valid encoded instance."""
        x = np.asarray(x)
        if x.shape != (self.d,):
            raise SchemaError(f"instance has shape {x.shape}, schema expects ({self.d},)")
        if not np.all(np.isfinite(x)):
            raise SchemaError("instance contains non-finite values")
        for i, card in enumerate(self._cards):
            if card:
                v = x[i]
                if v != int(v) or not 0 <= v < card:
                    raise SchemaError(
                        f"feature {self.features[i].name!r}: code {v} is not a symbol of its alphabet"
                    )

    def to_dict(self) -> dict:
        feats = []
        for f in self.features:
            entry = {"name": f.name, "kind": f.kind}
            if f.is_categorical:
                entry["alphabet"] = list(f.alphabet)
            feats.append(entry)
        target = {"name": self.target.name, "kind": self.target.kind}
        if self.target.classes is not None:
            target["classes"] = self.target.classes
        return {"features": feats, "target": target}

    @classmethod
    def from_dict(cls, data: dict) -> "Schema":
        try:
            feats = tuple(
                FeatureSpec(f["name"], f.get("kind", "numeric"), tuple(str(a) for a in f.get("alphabet", ())))
                for f in data["features"]
            )
            t = data["target"]
            target = TargetSpec(t["name"], t.get("kind", "class"), t.get("classes"))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema: {exc}") from None
        return cls(feats, target)

    @classmethod
    def load(cls, path: str | Path) -> "Schema":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise SchemaError(f"cannot read schema file {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise SchemaError(f"schema file {path} is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


class LabeledSample(NamedTuple):
    x: np.ndarray
    y: int | float


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


class Loss:
    """Per-sample loss between a prediction and a target.

    ``__call__`` scores one prediction; ``many`` scores a batch, where
    predictions are stacked along the first axis.
    """

    name: str = ""
    task: str = ""

    def __call__(self, pred, target) -> float:
        raise NotImplementedError

    def many(self, preds: np.ndarray, targets) -> np.ndarray:
        raise NotImplementedError


class CrossEntropy(Loss):
    """Negative log-probability of the true class, probabilities clipped to [eps, 1-eps]."""

    name = "cross_entropy"
    task = "classification"

    def __init__(self, eps: float = 1e-15):
        if not 0 < eps < 0.5:
            raise LossError(f"clip epsilon must be in (0, 0.5), got {eps}")
        self.eps = eps

    def __call__(self, pred, target) -> float:
        p = np.asarray(pred, dtype=float)
        if p.ndim != 1:
            raise LossError("cross-entropy needs a probability vector prediction")
        if isinstance(target, (float, np.floating)) and not float(target).is_integer():
            raise LossError(f"cross-entropy needs a class label target, got {target!r}")
        k = int(target)
        if not 0 <= k < p.shape[0]:
            raise LossError(f"class label {k} outside prediction of length {p.shape[0]}")
        pk = p[k]
        if not math.isfinite(pk):
            raise LossError("non-finite probability in prediction")
        return -math.log(min(max(pk, self.eps), 1.0 - self.eps))

    def many(self, preds: np.ndarray, targets) -> np.ndarray:
        p = np.asarray(preds, dtype=float)
        if p.ndim != 2:
            raise LossError("cross-entropy needs a (n, K) matrix of probability vectors")
        idx = np.broadcast_to(np.asarray(targets, dtype=np.int64), (p.shape[0],))
        picked = p[np.arange(p.shape[0]), idx]
        if not np.all(np.isfinite(picked)):
            raise LossError("non-finite probability in prediction")
        return -np.log(np.clip(picked, self.eps, 1.0 - self.eps))


class AbsoluteError(Loss):
    name = "absolute_error"
    task = "regression"

    def __call__(self, pred, target) -> float:
        if np.ndim(pred) != 0:
            raise LossError("absolute error needs a real-valued prediction")
        out = abs(float(pred) - float(target))
        if not math.isfinite(out):
            raise LossError("non-finite prediction or target")
        return out

    def many(self, preds: np.ndarray, targets) -> np.ndarray:
        p = np.asarray(preds, dtype=float)
        if p.ndim != 1:
            raise LossError("absolute error needs a vector of real predictions")
        out = np.abs(p - np.asarray(targets, dtype=float))
        if not np.all(np.isfinite(out)):
            raise LossError("non-finite prediction or target")
        return out


def loss_for_schema(schema: Schema) -> Loss:
    """Cross-entropy for class targets, absolute error for real ones."""
    return CrossEntropy() if schema.is_classification else AbsoluteError()


# ---------------------------------------------------------------------------
# permutations
# ---------------------------------------------------------------------------


def sample_permutation(d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random ordering of ``range(d)``."""
    if d < 1:
        raise ValueError(f"permutation size must be >= 1, got {d}")
    return rng.permutation(d)


def preceding_sets(pi: Sequence[int], i: int) -> tuple[frozenset, frozenset]:
    """Features strictly before ``i`` in ``pi``, and the same set plus ``i``."""
    order = [int(v) for v in pi]
    d = len(order)
    if not 0 <= i < d:
        raise ValueError(f"feature index {i} outside 0..{d - 1}")
    try:
        pos = order.index(i)
    except ValueError:
        raise ValueError(f"feature {i} does not appear in the permutation") from None
    before = frozenset(order[:pos])
    return before, before | {i}


# ---------------------------------------------------------------------------
# rng
# ---------------------------------------------------------------------------


def make_rng(seed: int | None, *path: str | int) -> np.random.Generator:
    """Independent generator for a named component.

    Children are keyed by name rather than by spawn order, so adding or
    reordering components never shifts another component's draws.
    """
    key = tuple(p if isinstance(p, int) else zlib.crc32(str(p).encode()) for p in path)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def as_mask(subset: Iterable[int] | np.ndarray, d: int) -> np.ndarray:
    """Boolean membership vector for a feature subset given as indices or a mask."""
    arr = np.asarray(subset if not isinstance(subset, (set, frozenset)) else sorted(subset))
    if arr.dtype == bool:
        if arr.shape != (d,):
            raise ValueError(f"mask must have shape ({d},)")
        return arr.copy()
    mask = np.zeros(d, dtype=bool)
    if arr.size:
        idx = arr.astype(int)
        if idx.min() < 0 or idx.max() >= d:
            raise ValueError(f"feature index outside 0..{d - 1}")
        mask[idx] = True
    return mask
