"""SAGE estimators: incremental (iSAGE), sliding-window, batch and exhaustive.

All estimators attribute a loss improvement to features through random
feature orderings. Along an ordering, features are added one at a time to the
kept set, the restricted model is re-evaluated, and each feature is credited
with the drop in loss its arrival causes. The credits of one ordering
telescope: they sum to the loss of the mean prediction minus the loss of the
full model.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import ConfigError, EmptyReservoirError, Loss, as_mask, sample_permutation
from .removal import DatasetRemoval, InterventionalRemoval, RemovalStrategy

__all__ = [
    "DEFAULT_ALPHA",
    "DEFAULT_M",
    "ImportanceState",
    "StepDelta",
    "isage_step",
    "IncrementalSAGE",
    "batch_sage",
    "WindowBuffer",
    "SlidingWindowSAGE",
    "swsage_step",
    "GameOracle",
    "brute_force_shapley",
    "make_loss_game",
]

DEFAULT_ALPHA = 0.001
DEFAULT_M = 5
HARMONIC = "1/t"
_CHUNK_ROWS = 200_000


@dataclass
class ImportanceState:
    """Running importance vector and smoothed mean prediction.

    ``alpha`` is either a constant rate in (0, 1] or the string ``"1/t"``
    for the running average. The first step always uses rate 1, so the state
    starts from that step's credits and that step's prediction.
    """

    d: int
    alpha: float | str = DEFAULT_ALPHA
    phi: np.ndarray = field(default=None)
    y_empty: np.ndarray | float | None = None
    t: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError("need at least one feature")
        if isinstance(self.alpha, str):
            if self.alpha != HARMONIC:
                raise ConfigError(f"alpha must be a number or '1/t', got {self.alpha!r}")
        elif not 0 < self.alpha <= 1:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.phi is None:
            self.phi = np.zeros(self.d)

    def next_rate(self) -> float:
        if self.t == 0:
            return 1.0
        if self.alpha == HARMONIC:
            return 1.0 / (self.t + 1)
        return float(self.alpha)


class StepDelta:
    """Per-feature credits of one step and the two end-point losses."""

    __slots__ = ("delta", "loss_empty", "loss_full", "permutation")

    def __init__(self, delta, loss_empty, loss_full, permutation):
        self.delta = delta
        self.loss_empty = loss_empty
        self.loss_full = loss_full
        self.permutation = permutation

    def __repr__(self):
        return f"StepDelta(delta={self.delta!r}, loss_empty={self.loss_empty}, loss_full={self.loss_full})"


def _smooth(y_empty, pred, rate):
    pred = np.asarray(pred, dtype=float)
    if y_empty is None or rate >= 1.0:
        return pred.copy() if pred.ndim else float(pred)
    out = (1.0 - rate) * np.asarray(y_empty) + rate * pred
    if out.ndim:
        return out / out.sum()
    return float(out)


def _prefix_masks(pi: np.ndarray, d: int) -> np.ndarray:
    # row k keeps the first k+1 features of the ordering
    ranks = np.empty(d, dtype=np.int64)
    ranks[pi] = np.arange(d)
    return ranks[None, :] <= np.arange(d - 1)[:, None]


def isage_step(state: ImportanceState, model, strategy: RemovalStrategy, x, y, loss: Loss,
               rng: np.random.Generator, m: int | None = None) -> StepDelta:
    """One explanation step on the labelled sample ``(x, y)``.

    The full prediction ``f(x)`` is computed once and serves both the mean
    prediction update and the last prefix, so a step costs ``1 + (d-1)*m``
    model evaluations, batched into a single ``predict_many`` call.
    """
    x = np.asarray(x, dtype=float)
    d = state.d
    if x.shape != (d,):
        raise ConfigError(f"instance has shape {x.shape}, state expects ({d},)")
    if not strategy.ready:
        raise EmptyReservoirError(f"{strategy.kind} removal has not observed any instance")
    m = strategy.m if m is None else m
    pi = sample_permutation(d, rng)
    if d > 1:
        spliced = strategy.sample(x, _prefix_masks(pi, d), m, rng)
        rows = np.concatenate([x[None, :], spliced.reshape(-1, d)])
    else:
        rows = x[None, :]
    preds = model.predict_many(rows)
    f_full = preds[0]

    rate = state.next_rate()
    state.y_empty = _smooth(state.y_empty, f_full, rate)
    state.t += 1

    losses = np.empty(d + 1)
    losses[0] = loss(state.y_empty, y)
    if d > 1:
        restricted = preds[1:].reshape((d - 1, m) + preds.shape[1:]).mean(axis=1)
        losses[1:d] = loss.many(restricted, y)
    losses[d] = loss(f_full, y)
    delta = np.empty(d)
    delta[pi] = losses[:-1] - losses[1:]
    state.phi = (1.0 - rate) * state.phi + rate * delta
    return StepDelta(delta, float(losses[0]), float(losses[d]), pi)


class IncrementalSAGE:
    """Convenience wrapper binding a state to a model, loss and removal strategy."""

    def __init__(self, d: int, strategy: RemovalStrategy, loss: Loss, alpha: float | str = DEFAULT_ALPHA,
                 m: int | None = None):
        self.state = ImportanceState(d, alpha)
        self.strategy = strategy
        self.loss = loss
        self.m = strategy.m if m is None else int(m)
        if self.m < 1:
            raise ConfigError("inner-sample count m must be >= 1")

    @property
    def phi(self) -> np.ndarray:
        return self.state.phi

    def explain_one(self, model, x, y, rng) -> StepDelta:
        return isage_step(self.state, model, self.strategy, x, y, self.loss, rng, self.m)

    def evals_per_step(self) -> int:
        return 1 + (self.state.d - 1) * self.m


def batch_sage(X: np.ndarray, Y, model, loss: Loss, m: int, rng: np.random.Generator,
               background: np.ndarray | None = None) -> np.ndarray:
    """Permutation-sampling SAGE over a dataset, one ordering per sample.

    Removed features take values of rows drawn uniformly (with replacement)
    from ``background``, which defaults to ``X`` itself. The baseline is the
    dataset-average prediction. Costs ``N + N*(d-1)*m`` model evaluations.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyReservoirError("batch SAGE needs a nonempty (n, d) dataset")
    Y = np.asarray(Y)
    if Y.shape[0] != X.shape[0]:
        raise ConfigError("X and Y lengths differ")
    if m < 1:
        raise ConfigError("inner-sample count m must be >= 1")
    bg = X if background is None else np.asarray(background, dtype=float)
    n, d = X.shape
    full = model.predict_many(X)
    y_empty = full.mean(axis=0)
    if np.ndim(y_empty):
        y_empty = y_empty / y_empty.sum()
    perms = rng.permuted(np.tile(np.arange(d), (n, 1)), axis=1)
    loss_prev = loss.many(np.broadcast_to(y_empty, full.shape), Y)
    sums = np.zeros(d)
    present = np.zeros((n, d), dtype=bool)
    rows = np.arange(n)
    chunk = max(1, _CHUNK_ROWS // m)
    for k in range(d):
        present[rows, perms[:, k]] = True
        if k == d - 1:
            cur = full
        else:
            cur = np.empty_like(full)
            for lo in range(0, n, chunk):
                hi = min(n, lo + chunk)
                idx = rng.integers(bg.shape[0], size=(hi - lo, m))
                spliced = np.where(present[lo:hi, None, :], X[lo:hi, None, :], bg[idx])
                p = model.predict_many(spliced.reshape(-1, d))
                cur[lo:hi] = p.reshape((hi - lo, m) + p.shape[1:]).mean(axis=1)
        lk = loss.many(cur, Y)
        sums += np.bincount(perms[:, k], weights=loss_prev - lk, minlength=d)
        loss_prev = lk
    return sums / n


class WindowBuffer:
    """Ring buffer of the most recent ``w`` labelled samples."""

    def __init__(self, w: int):
        if w < 1:
            raise ConfigError("window length must be >= 1")
        self.w = int(w)
        self._x = deque(maxlen=self.w)
        self._y = deque(maxlen=self.w)
        self.t = 0

    def __len__(self):
        return len(self._x)

    @property
    def full(self) -> bool:
        return len(self._x) == self.w

    def push(self, x, y) -> None:
        self._x.append(np.asarray(x, dtype=float))
        self._y.append(y)
        self.t += 1

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self._x), np.array(self._y)


def swsage_step(buf: WindowBuffer, model, loss: Loss, m: int, stride: int, rng: np.random.Generator,
                x=None, y=None) -> np.ndarray | None:
    """Push ``(x, y)`` (when given) and recompute batch SAGE on the window when due.

    Outputs start once the window is full and repeat every ``stride`` pushes.
    """
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    if x is not None:
        buf.push(x, y)
    if not buf.full or (buf.t - buf.w) % stride:
        return None
    X, Y = buf.arrays()
    return batch_sage(X, Y, model, loss, m, rng)


class SlidingWindowSAGE:
    """Batch SAGE recomputed over the last ``w`` samples every ``stride`` steps."""

    def __init__(self, w: int, loss: Loss, m: int = DEFAULT_M, stride: int | None = None):
        self.buffer = WindowBuffer(w)
        self.loss = loss
        self.m = int(m)
        self.stride = max(1, w // 20) if stride is None else int(stride)
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        self.phi: np.ndarray | None = None

    def step(self, model, x, y, rng) -> np.ndarray | None:
        out = swsage_step(self.buffer, model, self.loss, self.m, self.stride, rng, x, y)
        if out is not None:
            self.phi = out
        return out


class GameOracle:
    """Set function over feature subsets with ``v(empty) = 0`` and memoised values."""

    def __init__(self, fn: Callable[[frozenset], float], d: int):
        self.fn = fn
        self.d = int(d)
        self._cache: dict[frozenset, float] = {}

    def __call__(self, S) -> float:
        key = frozenset(int(i) for i in S)
        if not key:
            return 0.0
        if key not in self._cache:
            self._cache[key] = float(self.fn(key))
        return self._cache[key]


def brute_force_shapley(game: Callable, d: int) -> np.ndarray:
    """Exact Shapley values by enumerating all ``2**d`` coalitions."""
    if d < 1:
        raise ConfigError("need at least one player")
    if d > 12:
        raise ConfigError(f"exhaustive enumeration supports d <= 12, got {d}")
    n_sets = 1 << d
    values = np.empty(n_sets)
    sizes = np.zeros(n_sets, dtype=np.int64)
    for mask in range(n_sets):
        members = [i for i in range(d) if mask >> i & 1]
        sizes[mask] = len(members)
        values[mask] = game(frozenset(members)) if members else 0.0
    weight = np.array([math.factorial(s) * math.factorial(d - s - 1) / math.factorial(d) for s in range(d)])
    masks = np.arange(n_sets)
    phi = np.empty(d)
    for i in range(d):
        without = masks[(masks >> i & 1) == 0]
        phi[i] = np.sum(weight[sizes[without]] * (values[without | (1 << i)] - values[without]))
    return phi


def make_loss_game(model, strategy: RemovalStrategy | np.ndarray, X: np.ndarray, Y, loss: Loss,
                   m: int = 200, rng: np.random.Generator | None = None) -> GameOracle:
    """Loss-improvement game of a model on a dataset.

    ``v(S)`` is the dataset-average loss of the mean prediction minus that of
    the model restricted to ``S``. ``strategy`` may be a removal strategy
    (snapshot of its current store) or a background array for interventional
    draws.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyReservoirError("loss game needs a nonempty (n, d) dataset")
    Y = np.asarray(Y)
    rng = np.random.default_rng() if rng is None else rng
    n, d = X.shape
    full = model.predict_many(X)
    y_bar = full.mean(axis=0)
    if np.ndim(y_bar):
        y_bar = y_bar / y_bar.sum()
    base = float(np.mean(loss.many(np.broadcast_to(y_bar, full.shape), Y)))

    if isinstance(strategy, np.ndarray):
        background = strategy
    elif isinstance(strategy, DatasetRemoval):
        background = strategy.data
    elif isinstance(strategy, InterventionalRemoval):
        background = strategy.reservoir.items
    else:
        background = None
    chunk = max(1, _CHUNK_ROWS // m)

    def value(S: frozenset) -> float:
        mask = as_mask(S, d)
        if mask.all():
            return base - float(np.mean(loss.many(full, Y)))
        preds = np.empty_like(full)
        for lo in range(0, n, chunk):
            hi = min(n, lo + chunk)
            if background is not None:
                idx = rng.integers(background.shape[0], size=(hi - lo, m))
                spliced = np.where(mask, X[lo:hi, None, :], background[idx])
            else:
                spliced = np.stack([strategy.sample(x, mask[None, :], m, rng)[0] for x in X[lo:hi]])
            p = model.predict_many(spliced.reshape(-1, d))
            preds[lo:hi] = p.reshape((hi - lo, m) + p.shape[1:]).mean(axis=1)
        return base - float(np.mean(loss.many(preds, Y)))

    return GameOracle(value, d)
