import csv
import math

import numpy as np
import pytest

from streamsage.core import AbsoluteError, CrossEntropy, LabeledSample, ModelError, Schema
from streamsage.estimators import IncrementalSAGE, SlidingWindowSAGE
from streamsage.harness import (
    GtExperimentConfig,
    RunError,
    Trajectory,
    aggregate_report,
    gt_experiment,
    gt_repetition,
    prequential_run,
    trajectory_error,
    validate_report,
    write_report,
)
from streamsage.models import ConstantModel, FunctionModel
from streamsage.removal import InterventionalRemoval


class ListStream:
    def __init__(self, schema, X, Y):
        self.schema = schema
        self.it = iter([LabeledSample(x, y) for x, y in zip(X, Y)])

    def __next__(self):
        return next(self.it)


class SpyModel:
    """Regression model recording the order of prediction and learning calls."""

    task = "regression"
    n_classes = None

    def __init__(self, log):
        self.log = log

    def predict_one(self, x):
        self.log.append(("predict_one", float(x[0])))
        return 0.0

    def predict_many(self, X):
        self.log.append(("predict_many", len(X)))
        return np.zeros(len(X))

    def learn_one(self, x, y):
        self.log.append(("learn", float(x[0])))


class SpyRemoval(InterventionalRemoval):
    def __init__(self, log):
        super().__init__(10, 2)
        self.log = log

    def update(self, x, rng):
        self.log.append(("update", float(x[0])))
        super().update(x, rng)


def make_stream(numeric_schema, n=20, d=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    X[:, 0] = np.arange(n)
    return ListStream(numeric_schema(d), X, X.sum(axis=1))


def test_zero_budget_gives_empty_trajectory(numeric_schema, rng):
    strat = InterventionalRemoval(10, 1)
    est = IncrementalSAGE(3, strat, AbsoluteError())
    traj = prequential_run(make_stream(numeric_schema), ConstantModel(0.0), est, strat, AbsoluteError(), 0, rng)
    assert len(traj) == 0 and traj.n_evals == 0


def test_prequential_order(numeric_schema, rng):
    log = []
    strat = SpyRemoval(log)
    est = IncrementalSAGE(3, strat, AbsoluteError())
    prequential_run(make_stream(numeric_schema, n=5), SpyModel(log), est, strat, AbsoluteError(), 5, rng)
    for t in range(5):
        pos = {kind: log.index((kind, float(t))) for kind in ("predict_one", "update", "learn")}
        assert pos["predict_one"] < pos["update"] < pos["learn"]
        if t > 0:
            # the explanation batch sits between scoring and the store update
            explain = [i for i, e in enumerate(log) if e[0] == "predict_many"
                       and pos["predict_one"] < i < pos["update"]]
            assert len(explain) == 1
    assert log[0] == ("predict_one", 0.0)


def test_constant_model_constant_target(numeric_schema, rng):
    stream = ListStream(numeric_schema(3), rng.random((400, 3)), np.full(400, 0.25))
    strat = InterventionalRemoval(20, 2)
    est = IncrementalSAGE(3, strat, AbsoluteError(), alpha=0.05)
    traj = prequential_run(stream, ConstantModel(0.5), est, strat, AbsoluteError(), 400, rng)
    assert set(traj.loss) == {0.25}
    assert np.all(traj.phi_array() == 0.0)


def test_eval_count_per_isage_step(numeric_schema, rng):
    d, m, n = 4, 3, 50
    strat = InterventionalRemoval(20, m)
    est = IncrementalSAGE(d, strat, AbsoluteError())
    stream = ListStream(numeric_schema(d), rng.random((n, d)), np.zeros(n))
    traj = prequential_run(stream, ConstantModel(0.0), est, strat, AbsoluteError(), n, rng)
    # the first step has no stored instance to draw from, so it is not explained
    assert traj.n_evals == (n - 1) * (1 + (d - 1) * m)


def test_eval_count_sliding_window(numeric_schema, rng):
    d, w, stride, n = 3, 20, 5, 100
    est = SlidingWindowSAGE(w, AbsoluteError(), m=2, stride=stride)
    stream = ListStream(numeric_schema(d), rng.random((n, d)), np.zeros(n))
    traj = prequential_run(stream, ConstantModel(0.0), est, None, AbsoluteError(), n, rng, record_stride="outputs")
    outputs = (n - w) // stride + 1
    assert len(traj) == outputs
    assert traj.t[0] == w
    assert traj.n_evals == outputs * (w + w * (d - 1) * 2)


def test_component_error_reports_step(numeric_schema, rng):
    class Exploding(ConstantModel):
        def __init__(self):
            super().__init__(0.0)
            self.n = 0

        def learn_one(self, x, y):
            self.n += 1
            if self.n == 7:
                raise ModelError("boom")

    strat = InterventionalRemoval(10, 1)
    est = IncrementalSAGE(3, strat, AbsoluteError())
    with pytest.raises(RunError) as info:
        prequential_run(make_stream(numeric_schema), Exploding(), est, strat, AbsoluteError(), 20, rng)
    assert info.value.step == 7 and "boom" in str(info.value)


def test_warmup_flags(numeric_schema, rng):
    strat = InterventionalRemoval(10, 1)
    est = IncrementalSAGE(3, strat, AbsoluteError())
    traj = prequential_run(make_stream(numeric_schema), ConstantModel(0.0), est, strat, AbsoluteError(), 20, rng,
                           warmup=8)
    assert traj.warmup == [t < 8 for t in range(1, 21)]


def traj_from(phis, warm=None):
    traj = Trajectory(["a", "b"])
    for k, p in enumerate(phis):
        traj.append(k + 1, p, 0.0, 1, bool(warm and warm[k]))
    return traj


def test_trajectory_error_examples():
    gt = traj_from([[0.0, 0.0]])
    assert trajectory_error(traj_from([[1.0, 0.0]]), gt) == (0.5, 0.5)
    rng = np.random.default_rng(0)
    phis = rng.normal(size=(10, 2))
    assert trajectory_error(traj_from(phis), traj_from(phis)) == (0.0, 0.0)
    mse, mae = trajectory_error(traj_from(phis + 0.3), traj_from(phis))
    assert mse == pytest.approx(0.09) and mae == pytest.approx(0.3)


def test_trajectory_error_skips_warmup_and_checks_alignment():
    est = traj_from([[5.0, 5.0], [1.0, 1.0]], warm=[True, False])
    gt = traj_from([[0.0, 0.0], [0.0, 0.0]])
    assert trajectory_error(est, gt) == (1.0, 1.0)
    assert math.isnan(trajectory_error(Trajectory(["a"]), Trajectory(["a"]))[0])
    with pytest.raises(ValueError):
        trajectory_error(est, traj_from([[0.0, 0.0]]))


def test_trajectory_rejects_non_increasing_time():
    traj = traj_from([[0.0, 0.0]])
    with pytest.raises(ValueError):
        traj.append(1, [0.0, 0.0], 0.0)


def test_trajectory_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    traj = Trajectory(["salary", "age"])
    for t in range(1, 30):
        traj.append(t * 3, rng.normal(size=2) / 7, float(rng.random()), int(rng.integers(1, 4)), t < 5)
    traj.append(100, [1e-300, -2.5], math.nan, None, False)
    path = tmp_path / "t.csv"
    traj.write_csv(path)
    back = Trajectory.read_csv(path)
    assert back.t == traj.t and back.concept == traj.concept and back.warmup == traj.warmup
    assert np.array_equal(back.phi_array(), traj.phi_array())
    assert back.loss[:-1] == traj.loss[:-1] and math.isnan(back.loss[-1])
    with path.open() as fh:
        assert next(csv.reader(fh)) == ["t", "loss", "concept", "warmup", "phi_salary", "phi_age"]


def test_empty_trajectory_is_header_only(tmp_path):
    path = tmp_path / "e.csv"
    Trajectory(["a"]).write_csv(path)
    assert path.read_text() == "t,loss,concept,warmup,phi_a\n"


SMALL = dict(pretrain_samples=1_500, stream_length=1_200, windows=(100,), reps=2, m_gt=2,
             reservoir=50, record_stride=10, seed=4)


def test_gt_report_validates_and_counts(tmp_path):
    cfg = GtExperimentConfig(scenario="high", n_concepts=3, **SMALL)
    report = gt_experiment(cfg, trajectory_dir=tmp_path)
    validate_report(report)
    cells = {(c["estimator"], c["window"]): c for c in report["cells"]}
    assert set(cells) == {("isage", 100), ("sw20", 100), ("sw1", 100)}
    d = 9
    assert cells["isage", 100]["n_evals"] == [(1_200 - 1) * d] * 2
    assert cells["sw20", 100]["n_evals"] == [((1_200 - 100) // 5 + 1) * 100 * d] * 2
    assert cells["sw1", 100]["n_evals"] == [((1_200 - 100) // 100 + 1) * 100 * d] * 2
    for c in report["cells"]:
        assert all(v >= 0 for v in c["mse"] + c["mae"])
    write_report(report, tmp_path / "r.json")
    assert (tmp_path / "rep1_isage_w100.csv").exists()


def test_gt_is_piecewise_constant(tmp_path):
    cfg = GtExperimentConfig(p_switch=0.01, n_concepts=3, **{**SMALL, "reps": 1, "record_stride": 1})
    gt_repetition(cfg, 0, tmp_path)
    gt = Trajectory.read_csv(tmp_path / "rep0_gt.csv")
    phi = gt.phi_array()
    changed = np.any(phi[1:] != phi[:-1], axis=1)
    switched = np.array(gt.concept[1:]) != np.array(gt.concept[:-1])
    assert np.array_equal(changed, switched) and switched.any()


def test_zero_length_report():
    cfg = GtExperimentConfig(scenario="low", **{**SMALL, "stream_length": 0})
    report = gt_experiment(cfg)
    assert report["cells"] == [] and report["p_switch"] == 0.0001
    validate_report(report)


def test_single_concept_isage_beats_sliding_window():
    cfg = GtExperimentConfig(p_switch=0.0, n_concepts=1, pretrain_samples=5_000, stream_length=6_000,
                             windows=(500,), stride_divisors=(1,), reps=1, seed=2, model="hoeffding,leaf_prior=1")
    res = gt_repetition(cfg, 0)
    assert res["isage@500"][0] < res["sw1@500"][0]
    assert res["isage@500"][2] == pytest.approx(res["sw1@500"][2], rel=0.1)


def test_config_validation():
    with pytest.raises(ValueError):
        GtExperimentConfig(scenario="extreme")
    with pytest.raises(ValueError):
        GtExperimentConfig(reps=0)
    cfg = GtExperimentConfig(scenario="middle")
    assert cfg.p_switch == 0.0002
    assert GtExperimentConfig.from_dict(cfg.to_dict()) == cfg
