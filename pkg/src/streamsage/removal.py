"""Feature-removal samplers and the restricted-model evaluator.

A removal strategy answers one question: given an instance ``x`` and the set
``S`` of features that are kept, which values should stand in for the removed
features? Every strategy returns *spliced* instances that agree with ``x`` on
``S`` and carry sampled values elsewhere.

* ``InterventionalRemoval`` draws replacements from one geometric reservoir of
  recent instances, ignoring ``x``.
* ``ObservationalRemoval`` keeps, for every feature, an incremental tree that
  predicts it from the others and a reservoir per tree leaf; replacements come
  from the leaf that ``x`` reaches given only its kept features.
* ``DatasetRemoval`` draws from a fixed dataset, the batch setting.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import EmptyReservoirError, SchemaError, StreamSageError, as_mask
from .itree import IncrementalTree, TreeConfig

__all__ = [
    "GeometricReservoir",
    "ConditionalTreeStore",
    "RemovalStrategy",
    "InterventionalRemoval",
    "ObservationalRemoval",
    "DatasetRemoval",
    "restricted_predict",
    "make_removal",
]


class GeometricReservoir:
    """Fixed-capacity store where new items overwrite a uniformly chosen slot.

    Unlike classic reservoir sampling the insertion always happens, so an item
    inserted ``k`` updates ago survives with probability ``(1 - 1/L)**k`` and
    the store is biased toward recent data.
    """

    __slots__ = ("capacity", "n", "_data")

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("reservoir capacity must be >= 1")
        self.capacity = int(capacity)
        self.n = 0
        self._data = None

    def __len__(self) -> int:
        return min(self.n, self.capacity)

    @property
    def items(self) -> np.ndarray:
        if self._data is None:
            return np.empty((0, 0))
        return self._data[: len(self)]

    def update(self, x, rng: np.random.Generator) -> None:
        x = np.asarray(x, dtype=float)
        if self._data is None:
            self._data = np.empty((self.capacity,) + x.shape)
        if self.n < self.capacity:
            self._data[self.n] = x
        else:
            self._data[int(rng.random() * self.capacity)] = x
        self.n += 1

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        size = len(self)
        if size == 0:
            raise EmptyReservoirError("cannot sample from an empty reservoir")
        return self._data[int(rng.random() * size)]

    def sample_many(self, k: int, rng: np.random.Generator) -> np.ndarray:
        size = len(self)
        if size == 0:
            raise EmptyReservoirError("cannot sample from an empty reservoir")
        return self._data[rng.integers(size, size=k)]


class ConditionalTreeStore:
    """Per-feature conditional trees with a geometric reservoir at every leaf.

    Tree ``i`` predicts feature ``i`` from the remaining features; numeric
    features get regression trees and categorical ones classification trees.
    Leaf reservoirs hold full instances.
    """

    def __init__(self, cardinalities: Sequence[int], capacity: int = 100, tree_config: TreeConfig | None = None):
        self.cards = tuple(int(c) for c in cardinalities)
        self.d = len(self.cards)
        self.capacity = int(capacity)
        if self.capacity < 1:
            raise ValueError("reservoir capacity must be >= 1")
        self.trees = []
        self.reservoirs: list[dict[int, GeometricReservoir]] = []
        for i, card in enumerate(self.cards):
            n_classes = card if card >= 2 else None
            tree = IncrementalTree(self.cards, n_classes, tree_config, exclude=(i,))
            self.trees.append(tree)
            self.reservoirs.append({lid: GeometricReservoir(self.capacity) for lid in tree.leaf_ids()})
        self.n = 0

    def update(self, x, rng: np.random.Generator) -> None:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise SchemaError(f"store expects instances of shape ({self.d},), got {x.shape}")
        for i, tree in enumerate(self.trees):
            res = self.reservoirs[i]
            event = tree.learn_one(x, x[i])
            for lid in event.destroyed:
                del res[lid]
            for lid in event.created:
                res[lid] = GeometricReservoir(self.capacity)
            res[tree.leaf_of(x)].update(x, rng)
        self.n += 1

    def _fallback(self, i: int, leaf_id: int, rng: np.random.Generator) -> np.ndarray:
        tree = self.trees[i]
        res = self.reservoirs[i]
        node = tree.parent_of(leaf_id)
        while node is not None:
            pool = [res[lid] for lid in tree.subtree_leaf_ids(node) if len(res[lid])]
            if pool:
                sizes = np.array([len(r) for r in pool])
                k = int(rng.random() * sizes.sum())
                for r, size in zip(pool, sizes):
                    if k < size:
                        return r.items[k]
                    k -= size
            node = node.parent
        raise EmptyReservoirError(f"conditional store for feature {i} holds no instances")

    def draw(self, i: int, x, present, rng: np.random.Generator) -> float:
        """One replacement value for feature ``i`` given the kept features of ``x``."""
        lid = self.trees[i].route(x, present, rng)
        res = self.reservoirs[i][lid]
        if len(res):
            return res.sample(rng)[i]
        return self._fallback(i, lid, rng)[i]

    def n_stored(self) -> int:
        return sum(len(r) for per in self.reservoirs for r in per.values())


class RemovalStrategy:
    """Common interface: ``update`` with each stream instance, ``sample`` spliced instances."""

    kind = "abstract"

    def __init__(self, m: int = 5):
        if m < 1:
            raise ValueError("inner-sample count m must be >= 1")
        self.m = int(m)

    @property
    def ready(self) -> bool:
        raise NotImplementedError

    @property
    def t0(self) -> int:
        """Number of updates after which the store is fully initialised."""
        return 1

    def update(self, x, rng: np.random.Generator) -> None:
        raise NotImplementedError

    def sample(self, x, present: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
        """Spliced instances of shape ``(P, m, d)`` for a ``(P, d)`` boolean mask array."""
        raise NotImplementedError

    def _check_ready(self):
        if not self.ready:
            raise EmptyReservoirError(f"{self.kind} removal has not observed any instance")


class InterventionalRemoval(RemovalStrategy):
    kind = "interventional"

    def __init__(self, capacity: int = 100, m: int = 5):
        super().__init__(m)
        self.reservoir = GeometricReservoir(capacity)

    @property
    def ready(self) -> bool:
        return len(self.reservoir) > 0

    @property
    def t0(self) -> int:
        return self.reservoir.capacity

    def update(self, x, rng):
        self.reservoir.update(x, rng)

    def sample(self, x, present, m, rng):
        self._check_ready()
        present = np.asarray(present, dtype=bool)
        draws = self.reservoir.sample_many(present.shape[0] * m, rng)
        draws = draws.reshape(present.shape[0], m, -1)
        return np.where(present[:, None, :], np.asarray(x, dtype=float), draws)


class ObservationalRemoval(RemovalStrategy):
    kind = "observational"

    def __init__(self, cardinalities: Sequence[int], capacity: int = 100, m: int = 5,
                 tree_config: TreeConfig | None = None):
        super().__init__(m)
        self.store = ConditionalTreeStore(cardinalities, capacity, tree_config)

    @property
    def ready(self) -> bool:
        return self.store.n > 0

    @property
    def t0(self) -> int:
        return self.store.capacity

    def update(self, x, rng):
        self.store.update(x, rng)

    def sample(self, x, present, m, rng):
        self._check_ready()
        x = np.asarray(x, dtype=float)
        present = np.asarray(present, dtype=bool)
        out = np.broadcast_to(x, (present.shape[0], m, x.size)).copy()
        xl = x.tolist()
        draw = self.store.draw
        for p, row in enumerate(present):
            pres = row.tolist()
            absent = [j for j, keep in enumerate(pres) if not keep]
            for k in range(m):
                for j in absent:
                    out[p, k, j] = draw(j, xl, pres, rng)
        return out


class DatasetRemoval(RemovalStrategy):
    """Replacement values drawn uniformly from a fixed dataset."""

    kind = "dataset"

    def __init__(self, data: np.ndarray, m: int = 5):
        super().__init__(m)
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or data.shape[0] == 0:
            raise EmptyReservoirError("dataset removal needs a nonempty (n, d) array")
        self.data = data

    @property
    def ready(self) -> bool:
        return True

    def update(self, x, rng):
        pass

    def sample(self, x, present, m, rng):
        present = np.asarray(present, dtype=bool)
        idx = rng.integers(self.data.shape[0], size=(present.shape[0], m))
        return np.where(present[:, None, :], np.asarray(x, dtype=float), self.data[idx])


def make_removal(kind: str, cardinalities: Sequence[int], capacity: int = 100, m: int = 5,
                 tree_config: TreeConfig | None = None) -> RemovalStrategy:
    if kind == "interventional":
        return InterventionalRemoval(capacity, m)
    if kind == "observational":
        return ObservationalRemoval(cardinalities, capacity, m, tree_config)
    raise StreamSageError(f"unknown removal strategy {kind!r}")


def restricted_predict(model, strategy: RemovalStrategy, x, S, rng: np.random.Generator, m: int | None = None):
    """Monte-Carlo estimate of the model's prediction with only features ``S`` known.

    Averages ``m`` predictions on instances spliced from ``x`` (on ``S``) and
    the strategy's replacement values (elsewhere). With every feature kept
    this is exactly ``model.predict_one(x)`` and no randomness is used.
    """
    x = np.asarray(x, dtype=float)
    mask = as_mask(S, x.size)
    if mask.all():
        return model.predict_one(x)
    m = strategy.m if m is None else m
    spliced = strategy.sample(x, mask[None, :], m, rng)[0]
    return np.mean(model.predict_many(spliced), axis=0)
