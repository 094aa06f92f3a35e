"""Prequential explanation loop, ground-truth drift experiment and result export."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import CrossEntropy, LabeledSample, Loss, StreamSageError, UntrainedModelError, make_rng
from .estimators import IncrementalSAGE, SlidingWindowSAGE, batch_sage
from .models import CountingModel, FrozenModel, SwitchingModel, model_build
from .removal import InterventionalRemoval, RemovalStrategy
from .streams import SCENARIOS, AgrawalGenerator, DriftComposer, StaggerGenerator

__all__ = [
    "Trajectory",
    "RunError",
    "prequential_run",
    "trajectory_error",
    "GtExperimentConfig",
    "gt_experiment",
    "gt_repetition",
    "aggregate_report",
    "write_report",
    "validate_report",
    "REPORT_SCHEMA_PATH",
]

REPORT_SCHEMA_PATH = Path(__file__).with_name("schemas") / "error_report.schema.json"


class RunError(StreamSageError):
    """A component failed inside the prequential loop."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {type(cause).__name__}: {cause}")
        self.step = step
        self.cause = cause


@dataclass
class Trajectory:
    """Recorded explanation states of one run, in increasing time order."""

    feature_names: list
    t: list = field(default_factory=list)
    phi: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    concept: list = field(default_factory=list)
    warmup: list = field(default_factory=list)
    n_evals: int = 0

    def __len__(self) -> int:
        return len(self.t)

    @property
    def d(self) -> int:
        return len(self.feature_names)

    def append(self, t: int, phi, loss: float, concept: int | None = None, warmup: bool = False) -> None:
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (self.d,):
            raise ValueError(f"phi has shape {phi.shape}, trajectory expects ({self.d},)")
        if self.t and t <= self.t[-1]:
            raise ValueError(f"time {t} does not follow {self.t[-1]}")
        self.t.append(int(t))
        self.phi.append(phi.copy())
        self.loss.append(float(loss))
        self.concept.append(concept)
        self.warmup.append(bool(warmup))

    def phi_array(self) -> np.ndarray:
        return np.array(self.phi).reshape(len(self.t), self.d)

    def header(self) -> list[str]:
        return ["t", "loss", "concept", "warmup"] + [f"phi_{n}" for n in self.feature_names]

    def row(self, k: int) -> list[str]:
        c = self.concept[k]
        return [str(self.t[k]), repr(self.loss[k]), "" if c is None else str(c), str(int(self.warmup[k]))] + [
            repr(float(v)) for v in self.phi[k]
        ]

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        try:
            with path.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(self.header())
                for k in range(len(self.t)):
                    writer.writerow(self.row(k))
        except OSError as exc:
            raise StreamSageError(f"cannot write trajectory to {path}: {exc.strerror}") from None

    @classmethod
    def read_csv(cls, path: str | Path) -> "Trajectory":
        path = Path(path)
        try:
            with path.open(newline="", encoding="utf-8") as fh:
                rows = list(csv.reader(fh))
        except OSError as exc:
            raise StreamSageError(f"cannot read trajectory {path}: {exc.strerror}") from None
        header = rows[0]
        if header[:4] != ["t", "loss", "concept", "warmup"]:
            raise StreamSageError(f"{path} is not a trajectory file")
        traj = cls([h[4:] for h in header[4:]])
        for row in rows[1:]:
            traj.append(int(row[0]), [float(v) for v in row[4:]], float(row[1]),
                        int(row[2]) if row[2] else None, row[3] == "1")
        return traj


def _next_sample(stream):
    if isinstance(stream, DriftComposer):
        sample, concept, _ = stream.next()
        return sample, concept
    sample = next(stream)
    return sample, getattr(stream, "concept", None)


def prequential_run(
    stream,
    model,
    estimator: IncrementalSAGE | SlidingWindowSAGE,
    strategy: RemovalStrategy | None,
    loss: Loss,
    budget: int,
    rng: np.random.Generator,
    sink: Callable | None = None,
    record_stride: int | str = 1,
    learn: bool = True,
    warmup: int | None = None,
    on_sample: Callable | None = None,
    progress: Callable | None = None,
    feature_names: Sequence[str] | None = None,
) -> Trajectory:
    """Test-then-train loop with an explanation step between prediction and learning.

    Per sample: predict and score, explain with the current model, update the
    removal store, then let the model learn (unless ``learn`` is false).
    ``record_stride`` is a step interval or ``"outputs"`` to record only when a
    sliding-window estimator emits. Model evaluations spent on explanation are
    counted into ``Trajectory.n_evals``.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    d = stream.schema.d
    names = list(feature_names or stream.schema.feature_names)
    traj = Trajectory(names)
    counter = CountingModel(model)
    sliding = isinstance(estimator, SlidingWindowSAGE)
    if strategy is None and not sliding:
        raise ValueError("iSAGE needs a removal strategy")
    if warmup is None:
        warmup = estimator.buffer.w if sliding else max(strategy.t0, 1)
    phi = np.zeros(d)
    for t in range(1, budget + 1):
        try:
            sample, concept = _next_sample(stream)
        except StopIteration:
            break
        x, y = sample
        if on_sample is not None:
            on_sample(t, concept)
        try:
            try:
                step_loss = loss(model.predict_one(x), y)
            except UntrainedModelError:
                step_loss = math.nan
            emitted = False
            if sliding:
                estimator.buffer.push(x, y)
                out = _sw_output(estimator, counter, rng)
                if out is not None:
                    phi = out
                    emitted = True
            elif strategy.ready and not math.isnan(step_loss):
                estimator.explain_one(counter, x, y, rng)
                phi = estimator.phi
            if strategy is not None:
                strategy.update(x, rng)
            if learn:
                model.learn_one(x, y)
        except StreamSageError as exc:
            raise RunError(t, exc) from exc
        if record_stride == "outputs":
            record = emitted
        else:
            record = t % record_stride == 0
        if record:
            traj.append(t, phi, step_loss, concept, t < warmup)
            if sink is not None:
                sink(traj, len(traj) - 1)
        if progress is not None and t % 1000 == 0:
            progress(t)
    traj.n_evals = counter.n_evals
    return traj


def _sw_output(est: SlidingWindowSAGE, model, rng):
    buf = est.buffer
    if not buf.full or (buf.t - buf.w) % est.stride:
        return None
    X, Y = buf.arrays()
    try:
        out = batch_sage(X, Y, model, est.loss, est.m, rng)
    except UntrainedModelError:
        return None
    est.phi = out
    return out


def trajectory_error(est: Trajectory, gt: Trajectory, exclude_warmup: bool = True) -> tuple[float, float]:
    """Mean squared and mean absolute deviation over steps and features.

    Steps flagged as warm-up in ``est`` are skipped. With no scored step both
    values are NaN.
    """
    if est.t != gt.t:
        raise ValueError("trajectories are not aligned on the same time steps")
    if not est.t:
        return math.nan, math.nan
    diff = est.phi_array() - gt.phi_array()
    if exclude_warmup:
        diff = diff[~np.asarray(est.warmup, dtype=bool)]
    if diff.size == 0:
        return math.nan, math.nan
    return float(np.mean(diff**2)), float(np.mean(np.abs(diff)))


# ---------------------------------------------------------------------------
# ground-truth drift experiment
# ---------------------------------------------------------------------------


@dataclass
class GtExperimentConfig:
    scenario: str = "high"
    p_switch: float | None = None
    generator: str = "agrawal"
    n_concepts: int = 6
    pretrain_samples: int = 20_000
    m_gt: int = 10
    windows: tuple = (100, 500, 1000, 2000)
    m: int = 1
    stride_divisors: tuple = (20, 1)
    reservoir: int = 100
    stream_length: int = 30_000
    reps: int = 5
    seed: int = 0
    # Laplace-smoothed leaves keep cross-entropy finite on the frozen models
    model: str = "hoeffding,leaf_prior=1"
    record_stride: int = 1

    def __post_init__(self):
        if self.p_switch is None:
            if self.scenario not in SCENARIOS:
                raise ValueError(f"scenario must be one of {sorted(SCENARIOS)}, got {self.scenario!r}")
            self.p_switch = SCENARIOS[self.scenario]
        if not 0 <= self.p_switch <= 1:
            raise ValueError("p_switch must lie in [0, 1]")
        self.windows = tuple(int(w) for w in self.windows)
        self.stride_divisors = tuple(int(c) for c in self.stride_divisors)
        if any(w < 1 for w in self.windows):
            raise ValueError("window sizes must be >= 1")
        if any(c < 1 for c in self.stride_divisors):
            raise ValueError("stride divisors must be >= 1")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.stream_length < 0 or self.pretrain_samples < 1 or self.m < 1 or self.m_gt < 1:
            raise ValueError("stream_length >= 0, pretrain_samples, m and m_gt >= 1 required")
        if self.generator not in ("agrawal", "stagger"):
            raise ValueError("generator must be 'agrawal' or 'stagger'")
        max_concepts = 6 if self.generator == "agrawal" else 3
        if not 1 <= self.n_concepts <= max_concepts:
            raise ValueError(f"n_concepts must lie in 1..{max_concepts}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["windows"] = list(self.windows)
        out["stride_divisors"] = list(self.stride_divisors)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "GtExperimentConfig":
        return cls(**data)


class _ArrayStream:
    def __init__(self, schema, X, Y, concepts):
        self.schema = schema
        self.X, self.Y, self.concepts = X, Y, concepts
        self._pos = 0
        self.concept = None

    def __next__(self):
        if self._pos >= len(self.Y):
            raise StopIteration
        i = self._pos
        self._pos += 1
        self.concept = int(self.concepts[i])
        return LabeledSample(self.X[i], int(self.Y[i]))


def _generator(cfg: GtExperimentConfig, concept: int, rng):
    cls = AgrawalGenerator if cfg.generator == "agrawal" else StaggerGenerator
    return cls(concept, rng)


def _estimator_labels(cfg: GtExperimentConfig) -> list[str]:
    return ["isage"] + [f"sw{c}" for c in cfg.stride_divisors]


def gt_repetition(cfg: GtExperimentConfig, rep: int, trajectory_dir: str | Path | None = None) -> dict:
    """One repetition: pretrain, compute ground truth, run every estimator, score.

    Returns ``{(estimator, window): (mse, mae, n_evals)}`` keyed by strings
    ``"<estimator>@<w>"``.
    """
    loss = CrossEntropy()
    models, gts = [], []
    schema = None
    for c in range(1, cfg.n_concepts + 1):
        gen = _generator(cfg, c, make_rng(cfg.seed, "gt", rep, "pretrain", c))
        schema = gen.schema
        X, Y = gen.generate(cfg.pretrain_samples)
        model = model_build(cfg.model, schema)
        for x, y in zip(X, Y):
            model.learn_one(x, y)
        frozen = FrozenModel(model)
        models.append(frozen)
        gts.append(batch_sage(X, Y, frozen, loss, cfg.m_gt, make_rng(cfg.seed, "gt", rep, "truth", c)))

    subs = [_generator(cfg, c, make_rng(cfg.seed, "gt", rep, "stream", c)) for c in range(1, cfg.n_concepts + 1)]
    comp_rng = make_rng(cfg.seed, "gt", rep, "switch")
    composer = DriftComposer(subs, cfg.p_switch, comp_rng, start=int(comp_rng.integers(len(subs))))
    xs, ys, cs = [], [], []
    for _ in range(cfg.stream_length):
        s, concept, _ = composer.next()
        xs.append(s.x)
        ys.append(s.y)
        cs.append(concept)
    X = np.array(xs).reshape(cfg.stream_length, schema.d)
    Y = np.array(ys, dtype=np.int64)
    C = np.array(cs, dtype=np.int64)

    gt_traj = Trajectory(schema.feature_names)
    for t in range(cfg.record_stride, cfg.stream_length + 1, cfg.record_stride):
        gt_traj.append(t, gts[C[t - 1] - 1], math.nan, int(C[t - 1]))

    results = {}
    for w in cfg.windows:
        warmup = max(cfg.reservoir, w)
        runs = {"isage": None}
        for c in cfg.stride_divisors:
            runs[f"sw{c}"] = max(1, w // c)
        for label, stride in runs.items():
            switching = SwitchingModel(models)

            def hook(t, concept, switching=switching):
                switching.active = concept - 1

            run_rng = make_rng(cfg.seed, "gt", rep, "explain", label, w)
            if stride is None:
                strategy = InterventionalRemoval(cfg.reservoir, cfg.m)
                est = IncrementalSAGE(schema.d, strategy, loss, alpha=2.0 / (w + 1), m=cfg.m)
            else:
                strategy = None
                est = SlidingWindowSAGE(w, loss, cfg.m, stride)
            traj = prequential_run(
                _ArrayStream(schema, X, Y, C), switching, est, strategy, loss, cfg.stream_length, run_rng,
                record_stride=cfg.record_stride, learn=False, warmup=warmup, on_sample=hook,
            )
            mse, mae = trajectory_error(traj, gt_traj)
            results[f"{label}@{w}"] = (mse, mae, traj.n_evals)
            if trajectory_dir is not None:
                traj.write_csv(Path(trajectory_dir) / f"rep{rep}_{label}_w{w}.csv")
    if trajectory_dir is not None:
        gt_traj.write_csv(Path(trajectory_dir) / f"rep{rep}_gt.csv")
    return results


def _nan_stat(values, fn):
    arr = np.asarray([v for v in values if not math.isnan(v)], dtype=float)
    return None if arr.size == 0 else float(fn(arr))


def aggregate_report(cfg: GtExperimentConfig, per_rep: list[dict]) -> dict:
    """Mean/std over repetitions for every (estimator, window) cell."""
    cells = []
    if cfg.stream_length > 0:
        for w in cfg.windows:
            for label in _estimator_labels(cfg):
                key = f"{label}@{w}"
                mse = [r[key][0] for r in per_rep]
                mae = [r[key][1] for r in per_rep]
                evals = [int(r[key][2]) for r in per_rep]
                stride = None if label == "isage" else max(1, w // int(label[2:]))
                cells.append({
                    "estimator": label,
                    "window": w,
                    "alpha": 2.0 / (w + 1) if label == "isage" else None,
                    "stride": stride,
                    "mse_mean": _nan_stat(mse, np.mean),
                    "mse_std": _nan_stat(mse, np.std),
                    "mae_mean": _nan_stat(mae, np.mean),
                    "mae_std": _nan_stat(mae, np.std),
                    "mse": [None if math.isnan(v) else v for v in mse],
                    "mae": [None if math.isnan(v) else v for v in mae],
                    "n_evals": evals,
                })
    return {
        "format": "streamsage-error-report",
        "version": 1,
        "scenario": cfg.scenario,
        "p_switch": cfg.p_switch,
        "reps": cfg.reps,
        "config": cfg.to_dict(),
        "cells": cells,
    }


def _rep_job(args):
    cfg_dict, rep, trajectory_dir = args
    return gt_repetition(GtExperimentConfig.from_dict(cfg_dict), rep, trajectory_dir)


def gt_experiment(cfg: GtExperimentConfig, jobs: int = 1, trajectory_dir: str | Path | None = None,
                  progress: Callable | None = None) -> dict:
    """Run all repetitions (optionally in worker processes) and aggregate the errors."""
    if cfg.stream_length == 0:
        return aggregate_report(cfg, [])
    if trajectory_dir is not None:
        Path(trajectory_dir).mkdir(parents=True, exist_ok=True)
    jobs_args = [(cfg.to_dict(), rep, trajectory_dir) for rep in range(cfg.reps)]
    per_rep = []
    if jobs > 1 and cfg.reps > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for rep, res in enumerate(pool.map(_rep_job, jobs_args)):
                per_rep.append(res)
                if progress is not None:
                    progress(rep + 1)
    else:
        for rep, job in enumerate(jobs_args):
            per_rep.append(_rep_job(job))
            if progress is not None:
                progress(rep + 1)
    return aggregate_report(cfg, per_rep)


def write_report(report: dict, path: str | Path) -> None:
    path = Path(path)
    try:
        path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StreamSageError(f"cannot write report to {path}: {exc.strerror}") from None


def validate_report(report: dict) -> None:
    """Check a report against the shipped JSON schema (needs ``jsonschema``)."""
    import jsonschema

    schema = json.loads(REPORT_SCHEMA_PATH.read_text(encoding="utf-8"))
    jsonschema.validate(report, schema)
