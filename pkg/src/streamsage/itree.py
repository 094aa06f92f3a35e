"""Incremental Hoeffding-style decision tree with drift-triggered subtree resets.

The tree serves two roles: as an explainable model (classification or
regression on the stream target) and as the routing structure of the
observational feature-removal store, where one tree per feature predicts that
feature from all the others.

Numeric splits are ``x <= threshold`` tests over a small set of candidate
thresholds; categorical splits are one-vs-rest ``x == code`` tests. Every split
node keeps how many samples went to each child, which is what absent-feature
routing samples from.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .core import ConfigError, SchemaError, UntrainedModelError

__all__ = ["TreeConfig", "LeafEvent", "IncrementalTree"]


@dataclass(frozen=True)
class TreeConfig:
    grace_period: int = 200
    delta: float = 1e-7
    max_depth: int = 6
    max_splits: int = 30
    adaptive: bool = True
    n_candidates: int = 10
    tie_threshold: float = 0.05
    min_branch_fraction: float = 0.01
    drift_decay: float = 0.01
    drift_min_samples: int = 500
    leaf_prior: float = 0.0
    max_features: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.grace_period < 1:
            raise ConfigError("grace_period must be >= 1")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.max_splits < 1:
            raise ConfigError("max_splits must be >= 1")
        if self.n_candidates < 1:
            raise ConfigError("n_candidates must be >= 1")
        if not 0 < self.drift_decay < 1:
            raise ConfigError("drift_decay must lie in (0, 1)")
        if self.leaf_prior < 0:
            raise ConfigError("leaf_prior must be >= 0")
        if self.max_features is not None and self.max_features < 1:
            raise ConfigError("max_features must be >= 1 (or None for all features)")


class LeafEvent(NamedTuple):
    """Leaves that appeared and disappeared during one learning step."""

    created: list
    destroyed: list

    def __bool__(self):
        return bool(self.created or self.destroyed)


class _DriftMonitor:
    """Recent (exponentially weighted) error against the long-run error of a node.

    The spread of the EWMA is taken as the larger of its stationary value for
    independent errors and its observed spread over the node's history, since
    successive errors of a tree are autocorrelated.
    """

    __slots__ = ("decay", "min_n", "min_gap", "rel_gap", "n", "mean", "m2", "ewma", "k", "e_mean", "e_m2")

    def __init__(self, decay, min_n, min_gap, rel_gap):
        self.decay = decay
        self.min_n = min_n
        self.min_gap = min_gap
        self.rel_gap = rel_gap
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0
        self.ewma = 0.0
        self.k = 0
        self.e_mean = 0.0
        self.e_m2 = 0.0

    def update(self, err: float) -> bool:
        self.n += 1
        diff = err - self.mean
        self.mean += diff / self.n
        self.m2 += diff * (err - self.mean)
        if self.n == 1:
            self.ewma = err
        else:
            self.ewma += self.decay * (err - self.ewma)
        if self.n * self.decay >= 1.0:
            self.k += 1
            e_diff = self.ewma - self.e_mean
            self.e_mean += e_diff / self.k
            self.e_m2 += e_diff * (self.ewma - self.e_mean)
        if self.n < self.min_n:
            return False
        var = max(self.m2 / self.n * self.decay / (2.0 - self.decay), self.e_m2 / self.k)
        gap = self.ewma - self.mean
        return gap > 3.0 * math.sqrt(var) and gap > max(self.min_gap, self.rel_gap * self.mean)

    def state(self):
        return [self.n, self.mean, self.m2, self.ewma, self.k, self.e_mean, self.e_m2]

    def load(self, state):
        self.n, self.mean, self.m2, self.ewma, self.k, self.e_mean, self.e_m2 = state


class _Leaf:
    __slots__ = (
        "id", "depth", "parent",
        "counts", "rn", "rmean", "rm2", "prior",
        "n_learn", "last_attempt", "buf_x", "buf_y", "buf_w", "thr", "shift", "stats", "features", "_pred",
    )

    def __init__(self, node_id, depth, parent):
        self.id = node_id
        self.depth = depth
        self.parent = parent
        self.counts = None  # class counts (classification)
        self.rn = 0.0  # regression target moments
        self.rmean = 0.0
        self.rm2 = 0.0
        self.prior = None
        self.n_learn = 0
        self.last_attempt = 0
        self.buf_x = []
        self.buf_y = []
        self.buf_w = []
        self.thr = None
        self.shift = 0.0
        self.stats = None
        self.features = None  # split candidates of this leaf; None means every usable feature
        self._pred = None


class _Split:
    __slots__ = ("id", "depth", "parent", "feature", "is_cat", "value", "children", "counts", "monitor")

    def __init__(self, node_id, depth, parent, feature, is_cat, value, monitor):
        self.id = node_id
        self.depth = depth
        self.parent = parent
        self.feature = feature
        self.is_cat = is_cat
        self.value = value
        self.children = [None, None]
        self.counts = [0, 0]
        self.monitor = monitor

    def branch(self, v) -> int:
        if self.is_cat:
            return 0 if v == self.value else 1
        return 0 if v <= self.value else 1


def _whole(v):
    v = float(v)
    return int(v) if v.is_integer() else v


def _entropy(counts: np.ndarray) -> np.ndarray:
    tot = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(tot > 0, counts / np.where(tot > 0, tot, 1), 0.0)
        logp = np.where(p > 0, np.log2(np.where(p > 0, p, 1)), 0.0)
    return -(p * logp).sum(axis=-1)


class IncrementalTree:
    """Hoeffding tree over encoded instances.

    Args:
        cardinalities: per input feature, 0 for numeric or the alphabet size
            for categorical features (values are alphabet codes).
        n_classes: number of target classes, or ``None`` for a real target.
        config: growth and adaptation settings.
        exclude: feature indices never used in split tests. The conditional
            store excludes the feature a tree predicts.
    """

    def __init__(
        self,
        cardinalities: Sequence[int],
        n_classes: int | None = None,
        config: TreeConfig | None = None,
        exclude: Iterable[int] = (),
    ):
        self.cards = tuple(int(c) for c in cardinalities)
        self.d = len(self.cards)
        if self.d < 1:
            raise ConfigError("tree needs at least one input feature")
        self.n_classes = n_classes
        if n_classes is not None and n_classes < 2:
            raise ConfigError("classification trees need n_classes >= 2")
        self.config = config or TreeConfig()
        self.exclude = frozenset(int(e) for e in exclude)
        self._cat = np.array([c > 0 for c in self.cards])
        self._n_bins = max(self.config.n_candidates + 1, max(self.cards))
        self._usable = [f for f in range(self.d) if f not in self.exclude]
        k = self.config.max_features
        self._subspace = k if k is not None and k < len(self._usable) else None
        self._rng = np.random.default_rng(self.config.seed) if self._subspace else None
        self._ar = np.arange(self.d)
        self.n_splits = 0
        self.n_seen = 0
        self._next_id = 0
        self.leaves: dict[int, _Leaf] = {}
        self.root = self._new_leaf(0, None)

    # -- construction helpers -------------------------------------------------

    @property
    def is_classifier(self) -> bool:
        return self.n_classes is not None

    def _new_leaf(self, depth, parent) -> _Leaf:
        leaf = _Leaf(self._next_id, depth, parent)
        self._next_id += 1
        if self.is_classifier:
            leaf.counts = np.zeros(self.n_classes)
        if self._subspace:
            picked = self._rng.choice(len(self._usable), self._subspace, replace=False)
            leaf.features = [self._usable[i] for i in sorted(picked)]
        self.leaves[leaf.id] = leaf
        return leaf

    def _new_monitor(self) -> _DriftMonitor:
        cfg = self.config
        if self.is_classifier:
            return _DriftMonitor(cfg.drift_decay, cfg.drift_min_samples, 0.15, 0.0)
        return _DriftMonitor(cfg.drift_decay, cfg.drift_min_samples, 0.0, 0.25)

    # -- inspection -------------------------------------------------------------

    def leaf_ids(self) -> list[int]:
        return sorted(self.leaves)

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    def depth(self) -> int:
        return max(leaf.depth for leaf in self.leaves.values())

    def split_nodes(self) -> list[_Split]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, _Split):
                out.append(node)
                stack.extend(node.children)
        return out

    def parent_of(self, leaf_id: int):
        return self.leaves[leaf_id].parent

    def subtree_leaf_ids(self, node) -> list[int]:
        out, stack = [], [node]
        while stack:
            n = stack.pop()
            if isinstance(n, _Split):
                stack.extend(n.children)
            else:
                out.append(n.id)
        return out

    # -- prediction -------------------------------------------------------------

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise SchemaError(f"tree expects instances of shape ({self.d},), got {x.shape}")
        return x

    def leaf_of(self, x) -> int:
        """Id of the leaf ``x`` descends to with every feature known."""
        xl = self._check(x).tolist()
        node = self.root
        while isinstance(node, _Split):
            node = node.children[node.branch(xl[node.feature])]
        return node.id

    def _leaf_prediction(self, leaf: _Leaf):
        if leaf._pred is not None:
            return leaf._pred
        if self.is_classifier:
            counts = leaf.counts
            total = counts.sum()
            if total <= 0:
                if leaf.prior is None:
                    raise UntrainedModelError("tree has not seen any sample")
                counts = np.asarray(leaf.prior)
                total = counts.sum()
            a = self.config.leaf_prior
            pred = (counts + a) / (total + a * self.n_classes)
        else:
            if leaf.rn > 0:
                pred = leaf.rmean
            elif leaf.prior is not None:
                pred = leaf.prior[1]
            else:
                raise UntrainedModelError("tree has not seen any sample")
        leaf._pred = pred
        return pred

    def predict_one(self, x):
        xl = self._check(x).tolist()
        node = self.root
        while isinstance(node, _Split):
            node = node.children[node.branch(xl[node.feature])]
        pred = self._leaf_prediction(node)
        return pred.copy() if self.is_classifier else pred

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise SchemaError(f"tree expects a (n, {self.d}) matrix, got {X.shape}")
        n = X.shape[0]
        out = np.empty((n, self.n_classes)) if self.is_classifier else np.empty(n)
        if n <= 32:
            for r, row in enumerate(X.tolist()):
                node = self.root
                while isinstance(node, _Split):
                    node = node.children[node.branch(row[node.feature])]
                out[r] = self._leaf_prediction(node)
            return out
        stack = [(self.root, np.arange(n))]
        while stack:
            node, idx = stack.pop()
            if not idx.size:
                continue
            if isinstance(node, _Split):
                col = X[idx, node.feature]
                go_left = col == node.value if node.is_cat else col <= node.value
                stack.append((node.children[0], idx[go_left]))
                stack.append((node.children[1], idx[~go_left]))
            else:
                out[idx] = self._leaf_prediction(node)
        return out

    def route(self, x, present: Sequence[bool], rng: np.random.Generator) -> int:
        """Descend to a leaf, sampling a branch at every split on an absent feature.

        Splits on features flagged in ``present`` follow ``x``; at the others
        the child is drawn with probability proportional to how many samples
        went each way (uniformly when both counts are zero).
        """
        node = self.root
        if not isinstance(node, _Split):
            return node.id
        xl = x.tolist() if isinstance(x, np.ndarray) else x
        pres = present.tolist() if isinstance(present, np.ndarray) else present
        while isinstance(node, _Split):
            f = node.feature
            if pres[f]:
                node = node.children[node.branch(xl[f])]
            else:
                c0, c1 = node.counts
                tot = c0 + c1
                u = rng.random()
                if tot > 0:
                    node = node.children[0 if u * tot < c0 else 1]
                else:
                    node = node.children[0 if u < 0.5 else 1]
        return node.id

    # -- learning ---------------------------------------------------------------

    def learn_one(self, x, y, weight: float = 1) -> LeafEvent:
        """One incremental step; returns the leaves created and destroyed by it.

        ``weight`` scales the sample in every statistic (as if it had been
        seen that many times) while drift monitors see it once. A zero
        weight leaves the tree untouched.
        """
        if weight < 0:
            raise ConfigError("sample weight must be >= 0")
        if weight == 0:
            return LeafEvent([], [])
        x = self._check(x)
        if self.is_classifier:
            y = int(y)
            if not 0 <= y < self.n_classes:
                raise SchemaError(f"class label {y} outside [0, {self.n_classes})")
        else:
            y = float(y)
        self.n_seen += 1
        xl = x.tolist()
        node = self.root
        path = []
        while isinstance(node, _Split):
            c = node.branch(xl[node.feature])
            node.counts[c] += weight
            path.append(node)
            node = node.children[c]
        leaf = node
        created, destroyed = [], []

        if self.config.adaptive and path:
            err = self._error(leaf, y)
            if err is not None:
                hit = None
                for s in path:
                    if s.monitor.update(err) and hit is None:
                        hit = s
                if hit is not None:
                    leaf = self._reset(hit, created, destroyed)
                    # ancestors would otherwise react to the fresh leaf's errors
                    for s in path:
                        if s is hit:
                            break
                        s.monitor = self._new_monitor()

        self._learn_leaf(leaf, x, y, weight)
        if leaf.n_learn - leaf.last_attempt >= self.config.grace_period:
            leaf.last_attempt = leaf.n_learn
            self._attempt_split(leaf, created, destroyed)
        return LeafEvent(created, destroyed)

    def _error(self, leaf: _Leaf, y):
        try:
            pred = self._leaf_prediction(leaf)
        except UntrainedModelError:
            return None
        if self.is_classifier:
            return 0.0 if int(np.argmax(pred)) == y else 1.0
        return abs(y - pred)

    def _reset(self, node: _Split, created, destroyed) -> _Leaf:
        """Swap the subtree under ``node`` for a fresh leaf."""
        old_ids = self.subtree_leaf_ids(node)
        n_removed = sum(1 for _ in self._iter_splits(node))
        prior = self._merged_target(old_ids)
        for lid in old_ids:
            del self.leaves[lid]
        self.n_splits -= n_removed
        fresh = self._new_leaf(node.depth, node.parent)
        fresh.prior = prior
        self._replace_child(node, fresh)
        destroyed.extend(old_ids)
        created.append(fresh.id)
        return fresh

    def _iter_splits(self, node):
        stack = [node]
        while stack:
            n = stack.pop()
            if isinstance(n, _Split):
                yield n
                stack.extend(n.children)

    def _merged_target(self, leaf_ids):
        if self.is_classifier:
            tot = np.zeros(self.n_classes)
            for lid in leaf_ids:
                leaf = self.leaves[lid]
                tot += leaf.counts
                if leaf.counts.sum() == 0 and leaf.prior is not None:
                    tot += leaf.prior
            return tot if tot.sum() > 0 else None
        n = mean = m2 = 0.0
        for lid in leaf_ids:
            leaf = self.leaves[lid]
            ln, lm, l2 = leaf.rn, leaf.rmean, leaf.rm2
            if ln == 0 and leaf.prior is not None:
                ln, lm, l2 = leaf.prior
            if ln == 0:
                continue
            tot = n + ln
            delta = lm - mean
            mean += delta * ln / tot
            m2 += l2 + delta * delta * n * ln / tot
            n = tot
        return (n, mean, m2) if n > 0 else None

    def _replace_child(self, old, new):
        parent = old.parent
        if parent is None:
            self.root = new
        else:
            parent.children[parent.children.index(old)] = new

    def _learn_leaf(self, leaf: _Leaf, x: np.ndarray, y, w):
        leaf._pred = None
        if self.is_classifier:
            leaf.counts[y] += w
        else:
            leaf.rn += w
            delta = y - leaf.rmean
            leaf.rmean += w * delta / leaf.rn
            leaf.rm2 += w * delta * (y - leaf.rmean)
        leaf.n_learn += w
        if leaf.thr is None:
            leaf.buf_x.append(x)
            leaf.buf_y.append(y)
            leaf.buf_w.append(w)
        else:
            self._accumulate(leaf, x[None, :], [y], [w])

    def _accumulate(self, leaf: _Leaf, X: np.ndarray, ys, ws):
        thr = leaf.thr
        codes = np.where(self._cat, X, 0).astype(np.int64)
        ranks = (X[:, :, None] > thr[None, :, :]).sum(axis=2)
        bins = np.where(self._cat, codes, ranks)
        ar = self._ar
        st = leaf.stats
        for b, y, w in zip(bins, ys, ws):
            if self.is_classifier:
                st[ar, b, y] += w
            else:
                yc = y - leaf.shift
                st[ar, b, 0] += w
                st[ar, b, 1] += w * yc
                st[ar, b, 2] += w * yc * yc

    def _init_candidates(self, leaf: _Leaf):
        X = np.asarray(leaf.buf_x)
        c = self.config.n_candidates
        thr = np.full((self.d, c), np.inf)
        qs = np.arange(1, c + 1) / (c + 1)
        for f in self._usable:
            if self._cat[f]:
                continue
            col = X[:, f]
            cand = np.unique(np.quantile(col, qs))
            cand = cand[cand < col.max()]
            thr[f, : cand.size] = cand
        leaf.thr = thr
        width = self.n_classes if self.is_classifier else 3
        leaf.stats = np.zeros((self.d, self._n_bins, width))
        if not self.is_classifier:
            leaf.shift = float(np.average(leaf.buf_y, weights=leaf.buf_w))
        self._accumulate(leaf, X, leaf.buf_y, leaf.buf_w)
        leaf.buf_x = []
        leaf.buf_y = []
        leaf.buf_w = []

    def _candidate_splits(self, leaf: _Leaf):
        """Best (merit, feature, value, left_stats, right_stats) per usable feature."""
        out = []
        n = leaf.n_learn
        min_branch = max(1.0, self.config.min_branch_fraction * n)
        for f in self._usable if leaf.features is None else leaf.features:
            st = leaf.stats[f]
            total = st.sum(axis=0) if self.is_classifier else None
            if self._cat[f]:
                card = self.cards[f]
                left = st[:card]
                values = np.arange(card, dtype=float)
            else:
                finite = np.isfinite(leaf.thr[f])
                k = int(finite.sum())
                if k == 0:
                    continue
                left = np.cumsum(st[: k + 1], axis=0)[:k]
                values = leaf.thr[f, :k]
            tot = st.sum(axis=0)
            right = tot[None, :] - left
            if self.is_classifier:
                nl = left.sum(axis=1)
                nr = right.sum(axis=1)
                ntot = tot.sum()
                merit = _entropy(tot) - (nl * _entropy(left) + nr * _entropy(right)) / ntot
            else:
                nl = left[:, 0]
                nr = right[:, 0]
                ntot = tot[0]
                var_t = tot[2] / ntot - (tot[1] / ntot) ** 2
                if var_t <= 1e-12 * max(1.0, (tot[1] / ntot) ** 2):
                    continue
                with np.errstate(divide="ignore", invalid="ignore"):
                    var_l = np.where(nl > 0, left[:, 2] / nl - (left[:, 1] / nl) ** 2, 0.0)
                    var_r = np.where(nr > 0, right[:, 2] / nr - (right[:, 1] / nr) ** 2, 0.0)
                var_l = np.maximum(var_l, 0.0)
                var_r = np.maximum(var_r, 0.0)
                merit = (var_t - (nl * var_l + nr * var_r) / ntot) / var_t
            valid = (nl >= min_branch) & (nr >= min_branch)
            if not valid.any():
                continue
            merit = np.where(valid, merit, -np.inf)
            j = int(np.argmax(merit))
            out.append((float(merit[j]), f, float(values[j]), left[j].copy(), right[j].copy()))
        return out

    def _attempt_split(self, leaf: _Leaf, created, destroyed):
        cfg = self.config
        if leaf.thr is None:
            self._init_candidates(leaf)
        if leaf.depth >= cfg.max_depth or self.n_splits >= cfg.max_splits:
            return
        cands = self._candidate_splits(leaf)
        if not cands:
            return
        # stable sort keeps the lowest feature index first among equal merits
        cands.sort(key=lambda c: -c[0])
        best = cands[0]
        second = cands[1][0] if len(cands) > 1 else 0.0
        if best[0] <= 0:
            return
        r = math.log2(self.n_classes) if self.is_classifier else 1.0
        eps = math.sqrt(r * r * math.log(1.0 / cfg.delta) / (2.0 * leaf.n_learn))
        if best[0] - second > eps or eps < cfg.tie_threshold:
            self._split(leaf, best, created, destroyed)

    def _split(self, leaf: _Leaf, cand, created, destroyed):
        _, f, value, left, right = cand
        node = _Split(leaf.id, leaf.depth, leaf.parent, f, bool(self._cat[f]), value, self._new_monitor())
        del self.leaves[leaf.id]
        self._replace_child(leaf, node)
        for c, part in enumerate((left, right)):
            child = self._new_leaf(leaf.depth + 1, node)
            if self.is_classifier:
                child.counts = part.astype(float).copy()
                node.counts[c] = _whole(part.sum())
            else:
                cnt, s1, s2 = part
                mean = s1 / cnt
                child.rn = float(cnt)
                child.rmean = float(mean + leaf.shift)
                child.rm2 = float(max(s2 - s1 * mean, 0.0))
                node.counts[c] = _whole(cnt)
            node.children[c] = child
            created.append(child.id)
        destroyed.append(leaf.id)
        self.n_splits += 1

    # -- serialisation ----------------------------------------------------------

    def structure(self) -> dict:
        """Split tests and visit counts only; stable across runs for golden files."""

        def walk(node):
            if isinstance(node, _Split):
                return {
                    "id": node.id,
                    "feature": node.feature,
                    "test": "eq" if node.is_cat else "le",
                    "value": node.value,
                    "counts": list(node.counts),
                    "children": [walk(c) for c in node.children],
                }
            return {"id": node.id, "leaf": True}

        return walk(self.root)

    def to_dict(self) -> dict:
        def walk(node):
            if isinstance(node, _Split):
                return {
                    "type": "split",
                    "id": node.id,
                    "depth": node.depth,
                    "feature": node.feature,
                    "is_cat": node.is_cat,
                    "value": node.value,
                    "counts": list(node.counts),
                    "monitor": node.monitor.state(),
                    "children": [walk(c) for c in node.children],
                }
            out = {
                "type": "leaf",
                "id": node.id,
                "depth": node.depth,
                "n_learn": node.n_learn,
                "last_attempt": node.last_attempt,
                "shift": node.shift,
                "features": node.features,
            }
            if self.is_classifier:
                out["counts"] = node.counts.tolist()
                out["prior"] = None if node.prior is None else np.asarray(node.prior).tolist()
            else:
                out["moments"] = [node.rn, node.rmean, node.rm2]
                out["prior"] = None if node.prior is None else list(node.prior)
            if node.thr is None:
                out["buffer_x"] = [b.tolist() for b in node.buf_x]
                out["buffer_y"] = list(node.buf_y)
                out["buffer_w"] = list(node.buf_w)
            else:
                out["thresholds"] = [[v if math.isfinite(v) else None for v in row] for row in node.thr.tolist()]
                out["stats"] = node.stats.tolist()
            return out

        return {
            "cardinalities": list(self.cards),
            "n_classes": self.n_classes,
            "config": asdict(self.config),
            "exclude": sorted(self.exclude),
            "n_splits": self.n_splits,
            "n_seen": self.n_seen,
            "next_id": self._next_id,
            "root": walk(self.root),
            "rng": None if self._rng is None else self._rng.bit_generator.state,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IncrementalTree":
        tree = cls(data["cardinalities"], data["n_classes"], TreeConfig(**data["config"]), data["exclude"])
        tree.leaves = {}

        def build(spec, parent):
            if spec["type"] == "split":
                node = _Split(spec["id"], spec["depth"], parent, spec["feature"], spec["is_cat"], spec["value"],
                              tree._new_monitor())
                node.counts = list(spec["counts"])
                node.monitor.load(spec["monitor"])
                node.children = [build(c, node) for c in spec["children"]]
                return node
            leaf = _Leaf(spec["id"], spec["depth"], parent)
            leaf.n_learn = spec["n_learn"]
            leaf.last_attempt = spec["last_attempt"]
            leaf.shift = spec["shift"]
            leaf.features = spec["features"]
            if tree.is_classifier:
                leaf.counts = np.asarray(spec["counts"], dtype=float)
                leaf.prior = None if spec["prior"] is None else np.asarray(spec["prior"], dtype=float)
            else:
                leaf.rn, leaf.rmean, leaf.rm2 = spec["moments"]
                leaf.prior = None if spec["prior"] is None else tuple(spec["prior"])
            if "thresholds" in spec:
                leaf.thr = np.array([[np.inf if v is None else v for v in row] for row in spec["thresholds"]])
                leaf.stats = np.asarray(spec["stats"], dtype=float)
            else:
                leaf.buf_x = [np.asarray(b, dtype=float) for b in spec["buffer_x"]]
                leaf.buf_y = list(spec["buffer_y"])
                leaf.buf_w = list(spec["buffer_w"])
            tree.leaves[leaf.id] = leaf
            return leaf

        tree.root = build(data["root"], None)
        tree.n_splits = data["n_splits"]
        tree.n_seen = data["n_seen"]
        tree._next_id = data["next_id"]
        if tree._rng is not None:
            tree._rng.bit_generator.state = data["rng"]
        return tree
