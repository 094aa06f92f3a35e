"""Command-line interface: ``explain``, ``gt`` and ``static-check``.

Exit codes: 0 when the run completes, 1 on runtime errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import ConfigError, Schema, StreamSageError, loss_for_schema, make_rng
from .estimators import HARMONIC, IncrementalSAGE, SlidingWindowSAGE, batch_sage
from .harness import GtExperimentConfig, gt_experiment, prequential_run, write_report
from .models import FrozenModel, model_build, parse_model_spec
from .removal import InterventionalRemoval, make_removal
from .streams import SCENARIOS, AgrawalGenerator, CsvStream, DriftComposer, StaggerGenerator, load_csv

PROGRESS_EVERY = 1000


# -- argument types ---------------------------------------------------------------


def _alpha(text: str):
    if text == HARMONIC:
        return HARMONIC
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"must be a number in (0, 1] or '1/t', got {text!r}") from None
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError(f"must be a number in (0, 1] or '1/t', got {text}")
    return value


def _int_at_least(low: int):
    def parse(text: str) -> int:
        try:
            value = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"must be an integer >= {low}, got {text!r}") from None
        if value < low:
            raise argparse.ArgumentTypeError(f"must be an integer >= {low}, got {value}")
        return value

    return parse


def _probability(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"must be a probability in [0, 1], got {text!r}") from None
    if not 0 <= value <= 1:
        raise argparse.ArgumentTypeError(f"must be a probability in [0, 1], got {value}")
    return value


# -- stream specifiers -------------------------------------------------------------

_GENERATORS = {"agrawal": (AgrawalGenerator, 6), "stagger": (StaggerGenerator, 3)}


def build_stream(spec: str, schema_path: str | None, seed: int, shuffle: bool = False):
    """Stream from ``kind[:concept][,key=value...]`` or, with a schema, a CSV path.

    Synthetic kinds are ``agrawal``, ``stagger`` and their drifting variants
    ``agrawal-drift`` / ``stagger-drift`` (options ``p_switch`` or
    ``scenario`` and ``concepts``).
    """
    if schema_path is not None:
        schema = Schema.load(schema_path)
        return CsvStream(spec, schema, shuffle=shuffle, seed=seed)
    head, *rest = [p.strip() for p in spec.split(",")]
    kind, _, concept_text = head.partition(":")
    opts = {}
    for item in rest:
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigError(f"stream option {item!r} is not of the form key=value")
        opts[key.strip()] = value.strip()
    drift = kind.endswith("-drift")
    base = kind[: -len("-drift")] if drift else kind
    if base not in _GENERATORS:
        raise ConfigError(f"unknown stream kind {kind!r}; expected agrawal, stagger, agrawal-drift or stagger-drift "
                          "(or a CSV path together with --schema)")
    cls, n_concepts = _GENERATORS[base]
    if not drift:
        if opts:
            raise ConfigError(f"stream {kind!r} takes no options, got {sorted(opts)}")
        try:
            concept = int(concept_text) if concept_text else 1
        except ValueError:
            raise ConfigError(f"concept {concept_text!r} is not an integer") from None
        return cls(concept, make_rng(seed, "stream", base, concept))
    if concept_text:
        raise ConfigError(f"{kind} takes no ':concept' part")
    unknown = set(opts) - {"p_switch", "scenario", "concepts"}
    if unknown:
        raise ConfigError(f"unknown {kind} options {sorted(unknown)}")
    if "p_switch" in opts and "scenario" in opts:
        raise ConfigError("give either p_switch or scenario, not both")
    if "scenario" in opts:
        if opts["scenario"] not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {sorted(SCENARIOS)}")
        p_switch = SCENARIOS[opts["scenario"]]
    else:
        try:
            p_switch = float(opts.get("p_switch", SCENARIOS["high"]))
        except ValueError:
            raise ConfigError("p_switch must be a number") from None
    k = int(opts.get("concepts", n_concepts))
    if not 1 <= k <= n_concepts:
        raise ConfigError(f"concepts must lie in 1..{n_concepts}")
    subs = [cls(c, make_rng(seed, "stream", base, c)) for c in range(1, k + 1)]
    return DriftComposer(subs, p_switch, make_rng(seed, "stream", "switch"))


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streamsage", description="Incremental SAGE explanations for data streams.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("explain", help="explain a model learning on a stream")
    ex.add_argument("--stream", required=True, help="agrawal[:c], stagger[:c], agrawal-drift[,p_switch=..], "
                                                     "or a CSV path with --schema")
    ex.add_argument("--schema", help="schema JSON for a CSV stream")
    ex.add_argument("--shuffle", action="store_true", help="seeded shuffle of CSV rows")
    ex.add_argument("--model", default="hoeffding", help="e.g. hoeffding[,grace_period=..], "
                    "forest[,n_trees=..], sgd_logistic[,lr=..]")
    ex.add_argument("--estimator", choices=("isage", "swsage"), default="isage")
    ex.add_argument("--removal", choices=("interventional", "observational"), default="interventional")
    ex.add_argument("--alpha", type=_alpha, default=0.001, help="smoothing rate in (0, 1] or '1/t'")
    ex.add_argument("--window", type=_int_at_least(1), default=1000, help="SW-SAGE window length")
    ex.add_argument("--stride", type=_int_at_least(1), help="SW-SAGE stride (default window/20)")
    ex.add_argument("--inner-samples", type=_int_at_least(1), default=5, help="inner samples m")
    ex.add_argument("--reservoir", type=_int_at_least(1), default=100, help="reservoir capacity L")
    ex.add_argument("--steps", type=_int_at_least(0), default=10_000)
    ex.add_argument("--record-stride", type=_int_at_least(1), help="record every n-th step "
                    "(default every step for isage, every output for swsage)")
    ex.add_argument("--seed", type=int)
    ex.add_argument("--out", required=True, help="trajectory CSV path")

    gt = sub.add_parser("gt", help="ground-truth drift experiment")
    gt.add_argument("--config", help="experiment config JSON; explicit flags override it")
    gt.add_argument("--scenario", choices=sorted(SCENARIOS))
    gt.add_argument("--p-switch", type=_probability, help="explicit switch probability")
    gt.add_argument("--stream", choices=sorted(_GENERATORS), help="generator family (default agrawal)")
    gt.add_argument("--model", help="model spec for the per-concept models (default hoeffding,leaf_prior=1)")
    gt.add_argument("--window", type=_int_at_least(1), nargs="+", help="window sizes")
    gt.add_argument("--inner-samples", type=_int_at_least(1), help="inner samples m of the estimators")
    gt.add_argument("--reservoir", type=_int_at_least(1), help="reservoir capacity L")
    gt.add_argument("--pretrain", type=_int_at_least(1), help="pretraining samples per concept")
    gt.add_argument("--steps", type=_int_at_least(0), help="stream length")
    gt.add_argument("--reps", type=_int_at_least(1))
    gt.add_argument("--jobs", type=_int_at_least(1), default=1)
    gt.add_argument("--record-stride", type=_int_at_least(1), default=10, help="trajectory recording interval")
    gt.add_argument("--seed", type=int)
    gt.add_argument("--out", required=True, help="report JSON path; trajectories go to <out>_trajectories/")

    sc = sub.add_parser("static-check", help="compare iSAGE and batch SAGE on a static dataset")
    sc.add_argument("--stream", required=True, help="CSV dataset path")
    sc.add_argument("--schema", required=True, help="schema JSON")
    sc.add_argument("--model", required=True, help="model spec, trained on the dataset once and frozen")
    sc.add_argument("--inner-samples", type=_int_at_least(1), default=1)
    sc.add_argument("--reservoir", type=_int_at_least(1), default=100)
    sc.add_argument("--reps", type=_int_at_least(1), default=20)
    sc.add_argument("--seed", type=int)
    sc.add_argument("--out", help="optional result JSON path")
    return parser


# -- commands ----------------------------------------------------------------------


def _progress(label: str):
    def report(n):
        print(f"{label} {n}", file=sys.stderr, flush=True)

    return report


def cmd_explain(args) -> int:
    stream = build_stream(args.stream, args.schema, args.seed, args.shuffle)
    schema = stream.schema
    model = model_build(args.model, schema)
    loss = loss_for_schema(schema)
    if args.estimator == "isage":
        strategy = make_removal(args.removal, schema.cardinalities, args.reservoir, args.inner_samples)
        estimator = IncrementalSAGE(schema.d, strategy, loss, args.alpha, args.inner_samples)
        record = args.record_stride or 1
    else:
        strategy = None
        estimator = SlidingWindowSAGE(args.window, loss, args.inner_samples, args.stride)
        record = args.record_stride or "outputs"
    traj = prequential_run(stream, model, estimator, strategy, loss, args.steps, make_rng(args.seed, "explain"),
                           record_stride=record, progress=_progress("step"))
    traj.write_csv(args.out)
    losses = np.array(traj.loss, dtype=float)
    final = traj.phi[-1] if len(traj) else np.zeros(schema.d)
    print(f"steps recorded: {len(traj)}")
    print(f"model evaluations: {traj.n_evals}")
    mean_loss = float(np.nanmean(losses)) if np.isfinite(losses).any() else math.nan
    print(f"mean prequential loss: {mean_loss:.6f}")
    print("final importance:")
    for name, value in zip(schema.feature_names, final):
        print(f"  {name}: {value:.6f}")
    return 0


def _gt_config(args) -> GtExperimentConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise StreamSageError(f"cannot read config {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from None
    overrides = {
        "scenario": args.scenario,
        "generator": args.stream,
        "model": args.model,
        "windows": args.window,
        "m": args.inner_samples,
        "reservoir": args.reservoir,
        "pretrain_samples": args.pretrain,
        "stream_length": args.steps,
        "reps": args.reps,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.p_switch is not None:
        data["p_switch"] = args.p_switch
    elif args.scenario is not None:
        data["p_switch"] = None
    data["seed"] = args.seed
    data["record_stride"] = args.record_stride
    if data.get("generator") == "stagger" and "n_concepts" not in data:
        data["n_concepts"] = 3
    try:
        cfg = GtExperimentConfig(**data)
        parse_model_spec(cfg.model)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def cmd_gt(args, cfg: GtExperimentConfig) -> int:
    out = Path(args.out)
    traj_dir = out.with_name(out.stem + "_trajectories")
    report = gt_experiment(cfg, jobs=args.jobs, trajectory_dir=traj_dir, progress=_progress("repetition"))
    write_report(report, out)
    print(f"scenario {cfg.scenario} (p_switch={cfg.p_switch}), {cfg.reps} repetitions")
    for cell in report["cells"]:
        mse = "nan" if cell["mse_mean"] is None else f"{cell['mse_mean']:.5f}"
        mae = "nan" if cell["mae_mean"] is None else f"{cell['mae_mean']:.5f}"
        print(f"  {cell['estimator']:>6} w={cell['window']:<5} MSE {mse}  MAE {mae}  evals {int(np.mean(cell['n_evals']))}")
    return 0


def static_check(X, Y, schema: Schema, model_spec: str, m: int, reservoir: int, reps: int, seed: int) -> dict:
    """iSAGE over shuffled passes versus batch SAGE on the same frozen model."""
    model = model_build(model_spec, schema)
    for x, y in zip(X, Y):
        model.learn_one(x, y)
    frozen = FrozenModel(model)
    loss = loss_for_schema(schema)
    inc, bat = [], []
    for r in range(reps):
        rng = make_rng(seed, "static", r)
        bat.append(batch_sage(X, Y, frozen, loss, m, rng))
        strategy = InterventionalRemoval(reservoir, m)
        est = IncrementalSAGE(schema.d, strategy, loss, HARMONIC, m)
        for i in rng.permutation(len(Y)):
            if strategy.ready:
                est.explain_one(frozen, X[i], Y[i], rng)
            strategy.update(X[i], rng)
        inc.append(est.phi.copy())
    inc = np.array(inc)
    bat = np.array(bat)
    diff = np.abs(inc.mean(axis=0) - bat.mean(axis=0))
    std = bat.std(axis=0, ddof=1) if reps > 1 else np.zeros(schema.d)
    ok = diff <= 3 * std
    return {
        "features": schema.feature_names,
        "isage_mean": inc.mean(axis=0).tolist(),
        "batch_mean": bat.mean(axis=0).tolist(),
        "batch_std": std.tolist(),
        "abs_diff": diff.tolist(),
        "within": ok.tolist(),
        "passed": bool(ok.all()),
        "reps": reps,
    }


def cmd_static_check(args) -> int:
    schema = Schema.load(args.schema)
    X, Y = load_csv(args.stream, schema)
    result = static_check(X, Y, schema, args.model, args.inner_samples, args.reservoir, args.reps, args.seed)
    if args.out:
        Path(args.out).write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")
    print(f"{'feature':<16}{'isage':>12}{'batch':>12}{'|diff|':>12}{'3*std':>12}  ok")
    for k, name in enumerate(result["features"]):
        print(f"{name:<16}{result['isage_mean'][k]:>12.5f}{result['batch_mean'][k]:>12.5f}"
              f"{result['abs_diff'][k]:>12.5f}{3 * result['batch_std'][k]:>12.5f}  {'yes' if result['within'][k] else 'no'}")
    print("static check " + ("passed" if result["passed"] else "FAILED"))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().entropy % (2**32))
        print(f"seed: {args.seed}", file=sys.stderr)
    try:
        if args.command == "explain":
            parse_model_spec(args.model)
            if args.schema is None and args.shuffle:
                raise ConfigError("--shuffle applies to CSV streams only")
            return cmd_explain(args)
        if args.command == "gt":
            cfg = _gt_config(args)
            return cmd_gt(args, cfg)
        parse_model_spec(args.model)
        return cmd_static_check(args)
    except ConfigError as exc:
        print(f"streamsage {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (StreamSageError, OSError, ValueError) as exc:
        print(f"streamsage {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
