"""Acceptance criteria 1-9, each printing one PASS/FAIL line."""

import json
import time

import numpy as np
import pytest

from streamsage.cli import main
from streamsage.core import AbsoluteError, CrossEntropy, FeatureSpec, Schema, TargetSpec, make_rng
from streamsage.estimators import IncrementalSAGE, SlidingWindowSAGE, brute_force_shapley, make_loss_game
from streamsage.harness import GtExperimentConfig, gt_experiment, prequential_run
from streamsage.models import FunctionModel, model_build
from streamsage.removal import GeometricReservoir, InterventionalRemoval, make_removal
from streamsage.streams import AGRAWAL_SCHEMA, SCENARIOS, AgrawalGenerator, DriftComposer

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail, elapsed):
        with capsys.disabled():
            print(f"\n{name}: {'PASS' if ok else 'FAIL'} ({detail}; {elapsed:.1f}s)")
        assert ok, detail

    return emit


def linear_game_setup(seed):
    """Frozen linear regressor on three iid uniform features; the third is unused."""
    model = FunctionModel(lambda Z: 2.0 * Z[:, 0] + Z[:, 1])

    def draw(rng, n):
        X = rng.random((n, 3))
        return X, 2.0 * X[:, 0] + X[:, 1] + 0.1 * rng.normal(size=n)

    return model, draw


def test_c1_telescoping_efficiency(report):
    start = time.perf_counter()
    rng = make_rng(1, "c1")
    subs = [AgrawalGenerator(c, make_rng(1, "c1", c)) for c in (1, 2, 3)]
    stream = DriftComposer(subs, SCENARIOS["high"], make_rng(1, "c1", "switch"))
    model = model_build("hoeffding", AGRAWAL_SCHEMA)
    strategy = InterventionalRemoval(100, 2)
    est = IncrementalSAGE(9, strategy, CrossEntropy(), alpha=0.001)
    worst, steps = 0.0, 0
    for t in range(10_000):
        x, y = next(stream)
        if t > 0:
            delta = est.explain_one(model, x, y, rng)
            worst = max(worst, abs(delta.delta.sum() - (delta.loss_empty - delta.loss_full)))
            steps += 1
        strategy.update(x, rng)
        model.learn_one(x, y)
    elapsed = time.perf_counter() - start
    report("C1 telescoping", worst <= 1e-9 and elapsed < 10, f"{steps} steps, max residual {worst:.2e}", elapsed)


def test_c2_oracle_convergence(report):
    start = time.perf_counter()
    worst = []
    for seed in range(5):
        rng = make_rng(seed, "c2")
        model, draw = linear_game_setup(seed)
        loss = AbsoluteError()
        X_bg, _ = draw(rng, 20_000)
        X_ev, Y_ev = draw(rng, 20_000)
        game = make_loss_game(model, X_bg, X_ev, Y_ev, loss, m=200, rng=rng)
        oracle = brute_force_shapley(game, 3)
        scale = max(1.0, abs(game([0, 1, 2])))
        strategy = InterventionalRemoval(100, 8)
        est = IncrementalSAGE(3, strategy, loss, alpha="1/t", m=8)
        X, Y = draw(rng, 50_100)
        for x in X[:100]:
            strategy.update(x, rng)
        for x, y in zip(X[100:], Y[100:]):
            est.explain_one(model, x, y, rng)
            strategy.update(x, rng)
        worst.append(float(np.max(np.abs(est.phi - oracle)) / scale))
    elapsed = time.perf_counter() - start
    ok = max(worst) <= 0.05 and elapsed < 120
    report("C2 oracle convergence", ok, f"max scaled error per seed {np.round(worst, 4).tolist()} (limit 0.05)", elapsed)


def converged_phi(alpha, seed, steps):
    rng = make_rng(seed, "c3", alpha)
    model, draw = linear_game_setup(seed)
    strategy = InterventionalRemoval(100, 1)
    est = IncrementalSAGE(3, strategy, AbsoluteError(), alpha=alpha, m=1)
    X, Y = draw(rng, steps + 100)
    for x in X[:100]:
        strategy.update(x, rng)
    for x, y in zip(X[100:], Y[100:]):
        est.explain_one(model, x, y, rng)
        strategy.update(x, rng)
    return est.phi.copy()


def test_c3_variance_scaling(report):
    start = time.perf_counter()
    # 8000 steps are eight time constants at the smaller rate
    big = np.array([converged_phi(0.004, s, 8_000) for s in range(30)])
    small = np.array([converged_phi(0.001, s, 8_000) for s in range(30)])
    ratio = big.var(axis=0, ddof=1) / small.var(axis=0, ddof=1)
    elapsed = time.perf_counter() - start
    ok = bool(np.all((ratio >= 2) & (ratio <= 8))) and elapsed < 300
    report("C3 variance scaling", ok, f"per-feature variance ratios {np.round(ratio, 2).tolist()} (range [2, 8])",
           elapsed)


def test_c4_static_equivalence(tmp_path, report):
    start = time.perf_counter()
    schema = Schema((FeatureSpec("x0"), FeatureSpec("x1"), FeatureSpec("x2")), TargetSpec("y", "real"))
    (tmp_path / "schema.json").write_text(json.dumps(schema.to_dict()))
    rng = np.random.default_rng(4)
    X = rng.random((5_000, 3))
    Y = 2.0 * X[:, 0] + X[:, 1] + 0.1 * rng.normal(size=5_000)
    lines = ["x0,x1,x2,y"] + [",".join(repr(float(v)) for v in (*x, y)) for x, y in zip(X, Y)]
    (tmp_path / "data.csv").write_text("\n".join(lines) + "\n")
    out = tmp_path / "static.json"
    code = main(["static-check", "--stream", str(tmp_path / "data.csv"), "--schema", str(tmp_path / "schema.json"),
                 "--model", "sgd_linear,lr=0.05", "--reps", "20", "--seed", "4", "--out", str(out)])
    result = json.loads(out.read_text())
    elapsed = time.perf_counter() - start
    ok = code == 0 and result["passed"] and elapsed < 180
    detail = (f"|diff| {np.round(result['abs_diff'], 4).tolist()} vs 3*std "
              f"{np.round(3 * np.array(result['batch_std']), 4).tolist()}")
    report("C4 static equivalence", ok, detail, elapsed)


def test_c5_reservoir_law(report):
    start = time.perf_counter()
    L, s, trials = 10, 40, 50_000
    rng = np.random.default_rng(5)
    counts = np.zeros(s)
    for _ in range(trials):
        res = GeometricReservoir(L)
        for t in range(1, s):
            res.update(np.array([float(t)]), rng)
        counts[int(res.sample(rng)[0])] += 1
    r = np.arange(L, s)
    expected = (1 / L) * (1 - 1 / L) ** (s - r - 1)
    dev = float(np.max(np.abs(counts[L:s] / trials - expected)))
    elapsed = time.perf_counter() - start
    report("C5 reservoir law", dev <= 0.01 and elapsed < 30, f"max deviation {dev:.4f} (limit 0.01)", elapsed)


def test_c6_gt_directionality(report):
    start = time.perf_counter()
    cfg = GtExperimentConfig(scenario="high", windows=(500, 1000), stream_length=30_000, reps=5,
                             stride_divisors=(20, 1))
    rep = gt_experiment(cfg)
    cells = {(c["estimator"], c["window"]): c["mse_mean"] for c in rep["cells"]}
    elapsed = time.perf_counter() - start
    parts, ok = [], elapsed < 1200
    for w in (500, 1000):
        inc, sw = cells["isage", w], cells["sw1", w]
        ok = ok and inc < sw
        parts.append(f"w={w}: iSAGE {inc:.4f} vs SW1 {sw:.4f} (SW20 {cells['sw20', w]:.4f})")
    report("C6 GT directionality", ok, "; ".join(parts), elapsed)


def converged_importance(kind, seed):
    gen = AgrawalGenerator(1, make_rng(seed, "pre"))
    model = model_build(f"forest,leaf_prior=1,seed={seed}", AGRAWAL_SCHEMA)
    X, Y = gen.generate(40_000)
    for x, y in zip(X, Y):
        model.learn_one(x, y)
    frozen = model.freeze()
    rng = make_rng(seed, "run", kind)
    strategy = make_removal(kind, AGRAWAL_SCHEMA.cardinalities, 100, 5)
    est = IncrementalSAGE(9, strategy, CrossEntropy(), alpha="1/t", m=5)
    stream = AgrawalGenerator(1, make_rng(seed, "stream"))
    # the first 2000 instances only fill the removal store
    for t in range(20_000):
        x, y = next(stream)
        if strategy.ready and t >= 2_000:
            est.explain_one(frozen, x, y, rng)
        strategy.update(x, rng)
    return est.phi


def test_c7_observational_vs_interventional(report):
    start = time.perf_counter()
    salary, commission = 0, 1
    rows, ok = [], True
    for seed in range(3):
        inter = converged_importance("interventional", seed)
        obs = converged_importance("observational", seed)
        com_ok = obs[commission] < 0.5 * inter[commission]
        sal_ok = obs[salary] >= inter[salary]
        ok = ok and com_ok and sal_ok
        rows.append(f"seed {seed}: commission obs {obs[commission]:.4f} / int {inter[commission]:.4f}, "
                    f"salary obs {obs[salary]:.4f} / int {inter[salary]:.4f}")
    elapsed = time.perf_counter() - start
    report("C7 observational vs interventional", ok and elapsed < 600, "; ".join(rows), elapsed)


def test_c8_compute_accounting(report):
    start = time.perf_counter()
    w, n = 500, 20_000
    counts = {}
    for label in ("isage", "swsage"):
        subs = [AgrawalGenerator(c, make_rng(8, "c8", c)) for c in (1, 2)]
        stream = DriftComposer(subs, SCENARIOS["high"], make_rng(8, "c8", "switch"))
        model = model_build("hoeffding,leaf_prior=1", AGRAWAL_SCHEMA)
        X, Y = AgrawalGenerator(1, make_rng(8, "c8", "pretrain")).generate(5_000)
        for x, y in zip(X, Y):
            model.learn_one(x, y)
        frozen = model.freeze()
        rng = make_rng(8, "c8", label)
        if label == "isage":
            strategy = InterventionalRemoval(100, 1)
            est = IncrementalSAGE(9, strategy, CrossEntropy(), alpha=2 / (w + 1), m=1)
        else:
            strategy = None
            est = SlidingWindowSAGE(w, CrossEntropy(), m=1, stride=w // 20)
        traj = prequential_run(stream, frozen, est, strategy, CrossEntropy(), n, rng, learn=False)
        counts[label] = traj.n_evals
    ratio = counts["swsage"] / counts["isage"]
    elapsed = time.perf_counter() - start
    ok = 18 <= ratio <= 22 and elapsed < 60
    report("C8 compute accounting", ok, f"SW-SAGE {counts['swsage']} vs iSAGE {counts['isage']} evaluations, "
           f"ratio {ratio:.2f} (range [18, 22])", elapsed)


def test_c9_determinism(tmp_path, report):
    start = time.perf_counter()
    schema = Schema((FeatureSpec("a"), FeatureSpec("b")), TargetSpec("y", "class", 2))
    (tmp_path / "schema.json").write_text(json.dumps(schema.to_dict()))
    rng = np.random.default_rng(9)
    X = rng.random((800, 2))
    lines = ["a,b,y"] + [f"{a!r},{b!r},{int(a > b)}" for a, b in X.tolist()]
    (tmp_path / "d.csv").write_text("\n".join(lines) + "\n")
    runs = {
        "explain-isage": ["explain", "--stream", "agrawal-drift,p_switch=0.002", "--model", "hoeffding",
                          "--inner-samples", "2", "--steps", "3000"],
        "explain-observational": ["explain", "--stream", "stagger:2", "--model", "forest,n_trees=3",
                                  "--removal", "observational", "--steps", "1500"],
        "explain-swsage": ["explain", "--stream", "d.csv", "--schema", "schema.json", "--shuffle", "--model",
                           "sgd_logistic", "--estimator", "swsage", "--window", "100", "--steps", "800"],
        "gt": ["gt", "--scenario", "high", "--window", "100", "--reps", "2", "--pretrain", "800", "--steps", "1500",
               "--jobs", "2"],
        "static-check": ["static-check", "--stream", "d.csv", "--schema", "schema.json", "--model", "sgd_logistic",
                         "--reps", "3"],
    }
    mismatched = []
    for name, argv in runs.items():
        outputs = []
        for attempt in range(2):
            out = tmp_path / f"{name}-{attempt}.{'json' if name in ('gt', 'static-check') else 'csv'}"
            argv_full = [a if not a.endswith((".csv", ".json")) else str(tmp_path / a) for a in argv]
            assert main(argv_full + ["--seed", "31", "--out", str(out)]) == 0
            outputs.append(out.read_bytes())
            if name == "gt":
                outputs.append(b"".join(p.read_bytes() for p in sorted(tmp_path.glob(f"{out.stem}_trajectories/*"))))
        if outputs[: len(outputs) // 2] != outputs[len(outputs) // 2:]:
            mismatched.append(name)
    elapsed = time.perf_counter() - start
    report("C9 determinism", not mismatched, f"{len(runs)} command kinds, mismatched: {mismatched or 'none'}", elapsed)
