"""Models to be explained, behind one duck-typed interface.

Every model exposes ``task`` ("classification" or "regression"),
``predict_one(x)``, ``predict_many(X)``, ``learn_one(x, y)`` and ``freeze()``.
Classifiers predict probability vectors, regressors real numbers. Instances
are encoded float vectors where categorical features hold alphabet codes.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .core import ConfigError, ModelError, Schema, UntrainedModelError
from .itree import IncrementalTree, TreeConfig

__all__ = [
    "ModelSpec",
    "parse_model_spec",
    "model_build",
    "ConstantModel",
    "LinearModel",
    "LogisticModel",
    "HoeffdingTreeModel",
    "HoeffdingForestModel",
    "FrozenModel",
    "CountingModel",
    "FunctionModel",
    "SwitchingModel",
    "save_model",
    "load_model",
]

FORMAT_VERSION = 1
_KIND_ALIASES = {
    "hoeffding": "hoeffding_tree",
    "hat": "hoeffding_tree",
    "hoeffding_tree": "hoeffding_tree",
    "forest": "hoeffding_forest",
    "hoeffding_forest": "hoeffding_forest",
    "sgd_logistic": "sgd_logistic",
    "logistic": "sgd_logistic",
    "sgd_linear": "sgd_linear",
    "linear": "sgd_linear",
    "constant": "constant",
}
_TREE_KEYS = {f.name for f in fields(TreeConfig)}


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KIND_ALIASES.values():
            raise ConfigError(f"unknown model kind {self.kind!r}")


def _parse_value(text: str):
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_model_spec(text: str) -> ModelSpec:
    """Parse ``kind[:arg][,key=value...]``, e.g. ``hoeffding,grace_period=100`` or ``constant:0.7/0.3``."""
    head, *rest = [p.strip() for p in text.split(",")]
    kind, _, arg = head.partition(":")
    kind = _KIND_ALIASES.get(kind.strip().lower())
    if kind is None:
        raise ConfigError(f"unknown model kind in {text!r}; expected one of {sorted(set(_KIND_ALIASES.values()))}")
    params = {}
    if arg:
        if kind != "constant":
            raise ConfigError(f"model kind {kind!r} takes no ':' argument")
        try:
            params["value"] = [float(v) for v in arg.split("/")]
        except ValueError:
            raise ConfigError(f"constant value {arg!r} is not a number or '/'-separated vector") from None
    for item in rest:
        if not item:
            continue
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigError(f"model option {item!r} is not of the form key=value")
        params[key.strip()] = _parse_value(value.strip())
    return ModelSpec(kind, params)


class _Base:
    task = "classification"
    n_classes: int | None = None

    def predict_one(self, x):
        return self.predict_many(np.asarray(x, dtype=float)[None, :])[0]

    def predict_many(self, X):
        raise NotImplementedError

    def learn_one(self, x, y) -> None:
        raise NotImplementedError

    def freeze(self) -> "FrozenModel":
        return FrozenModel(self)


class ConstantModel(_Base):
    """Predicts the same value (probability vector or real) for every input."""

    kind = "constant"

    def __init__(self, value, task: str | None = None):
        arr = np.atleast_1d(np.asarray(value, dtype=float))
        if task is None:
            task = "classification" if arr.size > 1 else "regression"
        self.task = task
        if task == "classification":
            if arr.size < 2 or np.any(arr < 0) or abs(arr.sum() - 1.0) > 1e-9:
                raise ConfigError(f"constant classifier needs a probability vector, got {arr.tolist()}")
            self.value = arr
            self.n_classes = arr.size
        else:
            if arr.size != 1:
                raise ConfigError("constant regressor needs a single value")
            self.value = float(arr[0])

    def predict_one(self, x):
        return self.value.copy() if self.task == "classification" else self.value

    def predict_many(self, X):
        n = np.shape(X)[0]
        if self.task == "classification":
            return np.tile(self.value, (n, 1))
        return np.full(n, self.value)

    def learn_one(self, x, y) -> None:
        pass

    def state_dict(self) -> dict:
        return {"value": np.atleast_1d(self.value).tolist(), "task": self.task}

    @classmethod
    def from_state(cls, state: dict, schema=None) -> "ConstantModel":
        return cls(state["value"], state["task"])


class _OneHot:
    """Numeric columns pass through, categorical codes become alphabet-ordered indicators."""

    def __init__(self, cardinalities):
        self.cards = tuple(cardinalities)
        self.offsets = []
        p = 0
        for c in self.cards:
            self.offsets.append(p)
            p += c if c > 0 else 1
        self.width = p
        self._num = [i for i, c in enumerate(self.cards) if c == 0]
        self._cat = [i for i, c in enumerate(self.cards) if c > 0]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        Z = np.zeros((X.shape[0], self.width))
        for i in self._num:
            Z[:, self.offsets[i]] = X[:, i]
        rows = np.arange(X.shape[0])
        for i in self._cat:
            codes = X[:, i].astype(np.int64)
            if codes.size and (codes.min() < 0 or codes.max() >= self.cards[i]):
                raise ModelError(f"category code outside alphabet of feature {i}")
            Z[rows, self.offsets[i] + codes] = 1.0
        return Z


class _SGDBase(_Base):
    def __init__(self, schema: Schema, lr: float = 0.01, standardize: bool = False, l2: float = 0.0):
        if lr < 0:
            raise ConfigError("learning rate must be >= 0")
        if l2 < 0:
            raise ConfigError("l2 penalty must be >= 0")
        self.schema = schema
        self.lr = float(lr)
        self.l2 = float(l2)
        self.standardize = bool(standardize)
        self.encoder = _OneHot(schema.cardinalities)
        p = self.encoder.width
        self.n_seen = 0
        self._mean = np.zeros(p)
        self._m2 = np.zeros(p)

    def _features(self, X: np.ndarray) -> np.ndarray:
        Z = self.encoder(X)
        if self.standardize and self.n_seen > 1:
            std = np.sqrt(self._m2 / self.n_seen)
            Z = (Z - self._mean) / np.where(std > 0, std, 1.0)
        return Z

    def _track(self, z: np.ndarray) -> None:
        if not self.standardize:
            return
        self.n_seen += 1
        diff = z - self._mean
        self._mean += diff / self.n_seen
        self._m2 += diff * (z - self._mean)

    def _check_finite(self, *arrays):
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ModelError("non-finite gradient in SGD update")

    def _base_state(self) -> dict:
        return {
            "lr": self.lr,
            "l2": self.l2,
            "standardize": self.standardize,
            "n_seen": self.n_seen,
            "mean": self._mean.tolist(),
            "m2": self._m2.tolist(),
        }

    def _load_base(self, state: dict) -> None:
        self.n_seen = state["n_seen"]
        self._mean = np.asarray(state["mean"], dtype=float)
        self._m2 = np.asarray(state["m2"], dtype=float)


class LinearModel(_SGDBase):
    """Linear regressor trained by SGD on squared loss."""

    kind = "sgd_linear"
    task = "regression"

    def __init__(self, schema: Schema, lr: float = 0.01, standardize: bool = False, l2: float = 0.0):
        if schema.is_classification:
            raise ConfigError("sgd_linear needs a real-valued target")
        super().__init__(schema, lr, standardize, l2)
        self.weights = np.zeros(self.encoder.width)
        self.bias = 0.0

    def predict_many(self, X):
        return self._features(X) @ self.weights + self.bias

    def learn_one(self, x, y) -> None:
        raw = self.encoder(np.asarray(x, dtype=float)[None, :])[0]
        self._track(raw)
        z = self._features(np.asarray(x, dtype=float)[None, :])[0]
        with np.errstate(invalid="ignore", over="ignore"):
            err = float(z @ self.weights + self.bias) - float(y)
            grad_w = err * z + self.l2 * self.weights
        self._check_finite(grad_w, np.array([err]))
        self.weights = self.weights - self.lr * grad_w
        self.bias -= self.lr * err

    def state_dict(self) -> dict:
        return {**self._base_state(), "weights": self.weights.tolist(), "bias": self.bias}

    @classmethod
    def from_state(cls, state: dict, schema: Schema) -> "LinearModel":
        model = cls(schema, state["lr"], state["standardize"], state["l2"])
        model._load_base(state)
        model.weights = np.asarray(state["weights"], dtype=float)
        model.bias = float(state["bias"])
        return model


class LogisticModel(_SGDBase):
    """Multinomial logistic classifier trained by SGD on log-loss."""

    kind = "sgd_logistic"
    task = "classification"

    def __init__(self, schema: Schema, lr: float = 0.01, standardize: bool = False, l2: float = 0.0):
        if not schema.is_classification:
            raise ConfigError("sgd_logistic needs a class target")
        super().__init__(schema, lr, standardize, l2)
        self.n_classes = schema.n_classes
        self.weights = np.zeros((self.n_classes, self.encoder.width))
        self.bias = np.zeros(self.n_classes)

    def predict_many(self, X):
        logits = self._features(X) @ self.weights.T + self.bias
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=1, keepdims=True)

    def learn_one(self, x, y) -> None:
        x = np.asarray(x, dtype=float)
        self._track(self.encoder(x[None, :])[0])
        z = self._features(x[None, :])[0]
        with np.errstate(invalid="ignore", over="ignore"):
            logits = self.weights @ z + self.bias
            logits -= logits.max()
            p = np.exp(logits)
            p /= p.sum()
            p[int(y)] -= 1.0
            grad_w = np.outer(p, z) + self.l2 * self.weights
        self._check_finite(grad_w, p)
        self.weights = self.weights - self.lr * grad_w
        self.bias = self.bias - self.lr * p

    def state_dict(self) -> dict:
        return {**self._base_state(), "weights": self.weights.tolist(), "bias": self.bias.tolist()}

    @classmethod
    def from_state(cls, state: dict, schema: Schema) -> "LogisticModel":
        model = cls(schema, state["lr"], state["standardize"], state["l2"])
        model._load_base(state)
        model.weights = np.asarray(state["weights"], dtype=float)
        model.bias = np.asarray(state["bias"], dtype=float)
        return model


class HoeffdingTreeModel(_Base):
    kind = "hoeffding_tree"

    def __init__(self, schema: Schema, config: TreeConfig | None = None):
        self.schema = schema
        self.task = "classification" if schema.is_classification else "regression"
        self.n_classes = schema.n_classes
        self.tree = IncrementalTree(schema.cardinalities, schema.n_classes, config)

    def predict_one(self, x):
        return self.tree.predict_one(x)

    def predict_many(self, X):
        return self.tree.predict_many(X)

    def learn_one(self, x, y) -> None:
        self.tree.learn_one(x, y)

    def state_dict(self) -> dict:
        return {"tree": self.tree.to_dict()}

    @classmethod
    def from_state(cls, state: dict, schema: Schema) -> "HoeffdingTreeModel":
        model = cls(schema)
        model.tree = IncrementalTree.from_dict(state["tree"])
        return model


class HoeffdingForestModel(_Base):
    """Online-bagged Hoeffding trees with a random feature subset per leaf.

    Each tree learns every sample with a Poisson(``lam``) weight and only
    considers ``max_features`` randomly chosen features when a leaf looks for
    a split, so members fall back on weaker or redundant features when the
    strongest one is not offered. Predictions average the trained members.
    """

    kind = "hoeffding_forest"

    def __init__(self, schema: Schema, n_trees: int = 10, lam: float = 6.0, max_features: int | str = "sqrt",
                 seed: int = 0, config: TreeConfig | None = None):
        if n_trees < 1:
            raise ConfigError("n_trees must be >= 1")
        if lam <= 0:
            raise ConfigError("lam must be > 0")
        if max_features == "sqrt":
            k = max(1, round(math.sqrt(schema.d)))
        elif isinstance(max_features, int) and max_features >= 1:
            k = max_features
        else:
            raise ConfigError(f"max_features must be 'sqrt' or an integer >= 1, got {max_features!r}")
        self.schema = schema
        self.task = "classification" if schema.is_classification else "regression"
        self.n_classes = schema.n_classes
        self.n_trees = int(n_trees)
        self.lam = float(lam)
        self.max_features = max_features
        self.seed = int(seed)
        base = config or TreeConfig()
        seeds = np.random.SeedSequence(self.seed).generate_state(self.n_trees)
        self.trees = [
            IncrementalTree(schema.cardinalities, schema.n_classes, replace(base, max_features=k, seed=int(s)))
            for s in seeds
        ]
        self.rng = np.random.default_rng(np.random.SeedSequence(self.seed).spawn(1)[0])

    @property
    def n_seen(self) -> int:
        return max(t.n_seen for t in self.trees)

    def predict_many(self, X):
        X = np.asarray(X, dtype=float)
        preds = [t.predict_many(X) for t in self.trees if t.n_seen]
        if not preds:
            raise UntrainedModelError("forest has not seen any sample")
        return np.mean(preds, axis=0)

    def learn_one(self, x, y) -> None:
        weights = self.rng.poisson(self.lam, self.n_trees)
        for tree, w in zip(self.trees, weights.tolist()):
            if w:
                tree.learn_one(x, y, w)

    def state_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "lam": self.lam,
            "max_features": self.max_features,
            "seed": self.seed,
            "trees": [t.to_dict() for t in self.trees],
            "rng": self.rng.bit_generator.state,
        }

    @classmethod
    def from_state(cls, state: dict, schema: Schema) -> "HoeffdingForestModel":
        model = cls(schema, state["n_trees"], state["lam"], state["max_features"], state["seed"])
        model.trees = [IncrementalTree.from_dict(t) for t in state["trees"]]
        model.rng.bit_generator.state = state["rng"]
        return model


class FrozenModel(_Base):
    """Immutable deep copy of a model; learning raises."""

    kind = "frozen"

    def __init__(self, model):
        inner = model.inner if isinstance(model, FrozenModel) else model
        self.inner = copy.deepcopy(inner)
        self.task = inner.task
        self.n_classes = getattr(inner, "n_classes", None)

    def predict_one(self, x):
        return self.inner.predict_one(x)

    def predict_many(self, X):
        return self.inner.predict_many(X)

    def learn_one(self, x, y) -> None:
        raise ModelError("frozen models cannot learn")

    def freeze(self) -> "FrozenModel":
        return self


class CountingModel(_Base):
    """Pass-through wrapper counting how many instances were evaluated."""

    def __init__(self, model):
        self.inner = model
        self.task = model.task
        self.n_classes = getattr(model, "n_classes", None)
        self.n_evals = 0

    def predict_one(self, x):
        self.n_evals += 1
        return self.inner.predict_one(x)

    def predict_many(self, X):
        self.n_evals += np.shape(X)[0]
        return self.inner.predict_many(X)

    def learn_one(self, x, y) -> None:
        self.inner.learn_one(x, y)

    def freeze(self):
        return self.inner.freeze()


class FunctionModel(_Base):
    """Static model from a vectorised function ``X -> predictions``."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], task: str = "regression",
                 n_classes: int | None = None):
        self.fn = fn
        self.task = task
        self.n_classes = n_classes

    def predict_many(self, X):
        return np.asarray(self.fn(np.asarray(X, dtype=float)), dtype=float)

    def learn_one(self, x, y) -> None:
        pass


class SwitchingModel(_Base):
    """Delegates to one of several models; ``active`` selects which."""

    def __init__(self, models: list):
        if not models:
            raise ConfigError("switching model needs at least one model")
        self.models = list(models)
        self.task = models[0].task
        self.n_classes = getattr(models[0], "n_classes", None)
        self.active = 0

    def predict_one(self, x):
        return self.models[self.active].predict_one(x)

    def predict_many(self, X):
        return self.models[self.active].predict_many(X)

    def learn_one(self, x, y) -> None:
        self.models[self.active].learn_one(x, y)


def model_build(spec: ModelSpec | str, schema: Schema):
    """Untrained model for ``spec`` on ``schema``."""
    if isinstance(spec, str):
        spec = parse_model_spec(spec)
    params = dict(spec.params)
    try:
        if spec.kind == "constant":
            if "value" not in params:
                raise ConfigError("constant model needs a value, e.g. constant:0.7/0.3")
            model = ConstantModel(params.pop("value"),
                                  "classification" if schema.is_classification else "regression")
            if model.task == "classification" and model.n_classes != schema.n_classes:
                raise ConfigError(f"constant vector has {model.n_classes} entries, target has {schema.n_classes} classes")
        elif spec.kind == "hoeffding_forest":
            own = {k: params.pop(k) for k in ("n_trees", "lam", "max_features", "seed") if k in params}
            unknown = set(params) - _TREE_KEYS
            if unknown:
                raise ConfigError(f"unknown hoeffding_forest options {sorted(unknown)}")
            model = HoeffdingForestModel(schema, config=TreeConfig(**params), **own)
            params = {}
        elif spec.kind == "hoeffding_tree":
            unknown = set(params) - _TREE_KEYS
            if unknown:
                raise ConfigError(f"unknown hoeffding_tree options {sorted(unknown)}")
            model = HoeffdingTreeModel(schema, TreeConfig(**params))
            params = {}
        else:
            cls = LogisticModel if spec.kind == "sgd_logistic" else LinearModel
            unknown = set(params) - {"lr", "standardize", "l2"}
            if unknown:
                raise ConfigError(f"unknown {spec.kind} options {sorted(unknown)}")
            model = cls(schema, **params)
            params = {}
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if params:
        raise ConfigError(f"unknown options {sorted(params)} for {spec.kind}")
    return model


_LOADERS = {
    "constant": ConstantModel,
    "sgd_linear": LinearModel,
    "sgd_logistic": LogisticModel,
    "hoeffding_tree": HoeffdingTreeModel,
    "hoeffding_forest": HoeffdingForestModel,
}


def model_to_dict(model, schema: Schema) -> dict:
    frozen = isinstance(model, FrozenModel)
    inner = model.inner if frozen else model
    if getattr(inner, "kind", None) not in _LOADERS:
        raise ModelError(f"cannot serialise model of type {type(inner).__name__}")
    return {
        "format": "streamsage-model",
        "version": FORMAT_VERSION,
        "kind": inner.kind,
        "frozen": frozen,
        "schema": schema.to_dict(),
        "state": inner.state_dict(),
    }


def model_from_dict(data: dict):
    if data.get("format") != "streamsage-model":
        raise ModelError("not a serialised model")
    if data.get("version") != FORMAT_VERSION:
        raise ModelError(f"unsupported model format version {data.get('version')}")
    schema = Schema.from_dict(data["schema"])
    model = _LOADERS[data["kind"]].from_state(data["state"], schema)
    return FrozenModel(model) if data["frozen"] else model


def save_model(model, schema: Schema, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, schema)))


def load_model(path: str | Path):
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read model file {path}: {exc}") from None
    return model_from_dict(data)


def check_trained(model) -> None:
    """Raise ``UntrainedModelError`` when the model cannot predict yet."""
    inner = getattr(model, "inner", model)
    tree = getattr(inner, "tree", None)
    if tree is not None and tree.n_seen == 0:
        raise UntrainedModelError("model has not seen any sample")
    if isinstance(inner, HoeffdingForestModel) and inner.n_seen == 0:
        raise UntrainedModelError("model has not seen any sample")
