import math

import numpy as np
import pytest

from genmem import evaluation as E
from genmem import influence as infl
from genmem import models as M
from genmem.dataset import CapacityError, Dataset, stratified_subsample
from genmem.kernel import KernelSpec
from helpers import blobs

LIN = KernelSpec("linear")
SMALL = E.GridSpec(C=(0.5, 4.0), lam=(1.0,), tau=(1.0,), sigma=(1.0, 4.0))


def test_default_grids():
    g = E.GridSpec()
    assert len(g.C) == len(g.lam) == len(g.tau) == 16
    assert g.C[0] == 2.0 ** -8 and g.C[-1] == 2.0 ** 7
    assert len(g.sigma) == 16 and g.sigma[0] == 2.0 ** -10 and g.sigma[-1] == 32.0
    assert g.epsilon == (5, 1, 0.5, 0.1, 0.05, 0.01, 0.005, 0.001)
    assert len(g.rho) == 21 and g.k == tuple(range(1, 8))
    assert len(g.specs("hgmm")) == 16 * 16
    assert len(g.specs("sgmm", influence="knn")) == 16 * 16 * 7
    assert len(g.specs("svm", kernel="rbf")) == 16 * 16


@pytest.mark.parametrize("kw", [dict(C=()), dict(lam=(0.0,)), dict(k=(1.5,)), dict(sigma=(-1.0,))])
def test_grid_validation(kw):
    with pytest.raises(ValueError):
        E.GridSpec(**kw)


def test_grid_round_trip():
    g = E.GridSpec(C=(1.0, 2.0), k=(1, 3))
    assert E.GridSpec.from_dict(g.to_dict()) == g
    assert E.GridSpec.from_dict({"lambda": [2.0]}).lam == (2.0,)


def test_loo_separable_hgmm():
    ds = blobs(np.random.default_rng(0), 6)
    res = E.loo_evaluate(M.hgmm(LIN, infl.InfluenceSpec("rbf", sigma=1.0), 1.0), ds)
    assert res.train_acc_mean == 1.0 and res.train_acc_std == 0.0
    assert res.test_acc == 1.0
    assert res.fold_correct.size == ds.m


def test_loo_two_points_uses_single_class_path():
    ds = Dataset(np.array([[0.0], [1.0]]), np.array([1, -1]))
    res = E.loo_evaluate(M.svm(LIN, 1.0), ds)
    # each fold sees one class only and predicts it; the held-out point has the other
    assert res.train_acc_mean == 1.0
    assert res.test_acc == 0.0


def test_loo_counts_over_m():
    ds = blobs(np.random.default_rng(1), 7, shift=0.3)
    res = E.loo_evaluate(M.svm(LIN, 1.0), ds)
    assert res.test_acc * ds.m == pytest.approx(round(res.test_acc * ds.m))
    assert 0.0 <= res.test_acc <= 1.0


@pytest.mark.parametrize("spec", [
    M.hgmm(LIN, infl.InfluenceSpec("rbf", sigma=2.0), 1.0),
    M.sgmm(KernelSpec("rbf", 0.5), infl.InfluenceSpec("knn", k=2), 1.0, 1.0),
    M.svm_m(LIN, 4.0, 0.5, 1.0),
])
def test_cached_and_uncached_splits_agree(spec):
    ds = blobs(np.random.default_rng(2), 12, shift=0.5)
    plan = stratified_subsample(ds, 5, 3)
    a = E.evaluate_split(spec, ds, plan, E.MatrixCache(ds.X))
    b = E.evaluate_split(spec, ds, plan, None)
    assert a == pytest.approx(b)


def test_split_predictions_match_trained_model():
    ds = blobs(np.random.default_rng(3), 10, shift=0.4)
    spec = M.sgmm(LIN, infl.InfluenceSpec("rbf", sigma=1.0), 1.0, 1.0)
    plan = stratified_subsample(ds, 4, 0)
    _, test_acc = E.evaluate_split(spec, ds, plan)
    model = M.train(spec, ds.subset(plan.train_indices))
    expect = np.mean(M.predict(model, ds.X[plan.test_indices]) == ds.y[plan.test_indices])
    assert test_acc == pytest.approx(expect)


def test_grid_singleton_and_dominating_point():
    ds = blobs(np.random.default_rng(4), 8)
    only = [M.svm(LIN, 1.0)]
    res = E.grid_search(only, ds)
    assert res.best_spec == only[0] and len(res.table) == 1
    # a linear svm cannot separate an xor layout; the rbf-memory hgmm can
    X = np.array([[0, 0], [1, 1], [0, 1], [1, 0], [0.1, 0.05], [0.9, 0.95], [0.05, 0.9], [0.95, 0.1]], float)
    xor = Dataset(X, np.array([1, 1, -1, -1, 1, 1, -1, -1]), "xor")
    specs = [M.svm(LIN, 1.0), M.hgmm(LIN, infl.InfluenceSpec("rbf", sigma=8.0), 1.0)]
    res = E.grid_search(specs, xor)
    assert res.best_spec == specs[1]
    assert res.best in res.table


def test_tie_break_prefers_smaller_C():
    ds = blobs(np.random.default_rng(5), 6, shift=3.0)
    specs = [M.svm(LIN, 4.0), M.svm(LIN, 1.0), M.svm(LIN, 2.0)]
    res = E.grid_search(specs, ds)
    assert res.best_spec.C == 1.0


def test_failed_point_is_recorded():
    ds = Dataset(np.array([[0.0], [0.0], [1.0], [2.0]]), np.array([1, -1, 1, -1]))
    specs = [M.hgmm(LIN, infl.InfluenceSpec("rbf", sigma=1.0), 1.0), M.svm(LIN, 1.0)]
    res = E.grid_search(specs, ds, protocol=[stratified_subsample(ds, 2, 0)])
    assert res.table[0].note.startswith("failed")
    assert res.best_spec == specs[1]


def test_grid_is_deterministic_and_parallel_safe():
    ds = blobs(np.random.default_rng(6), 10, shift=0.4)
    specs = SMALL.specs("sgmm")
    a = E.grid_search(specs, ds)
    b = E.grid_search(specs, ds, jobs=2)
    assert a.best_spec == b.best_spec
    assert E.results_csv(a.table) == E.results_csv(b.table)


def test_subsample_missing_rows_and_shapes():
    ds = blobs(np.random.default_rng(7), 12, shift=0.5)
    grids = {"svm": SMALL.specs("svm")}
    rows = E.subsample_experiment(grids, ds, sizes=(10, 30), reps=3, seed=1)
    assert rows[0].repetitions == 3 and rows[0].setting == "size=10"
    assert rows[1].note == "--" and math.isnan(rows[1].test_mean)
    assert "--" in E.format_table(rows)


def test_noise_zero_block_equals_subsample():
    ds = blobs(np.random.default_rng(8), 20, shift=0.5)
    grids = {"sgmm": SMALL.specs("sgmm")}
    noise = E.noise_experiment(grids, ds, fractions=(0.0, 0.1), train_size=20, reps=3, seed=5)
    sub = E.subsample_experiment(grids, ds, sizes=(20,), reps=3, seed=5)
    assert noise[0].accuracies() == sub[0].accuracies()
    assert noise[0].hyperparameters == sub[0].hyperparameters
    with pytest.raises(CapacityError):
        E.noise_experiment(grids, ds, train_size=40)


def test_noise_hgmm_keeps_full_training_accuracy():
    ds = blobs(np.random.default_rng(9), 30, shift=0.5)
    grids = {"hgmm": E.GridSpec(lam=(1.0,), sigma=(16.0,)).specs("hgmm")}
    rows = E.noise_experiment(grids, ds, fractions=(0.0, 0.15), train_size=20, reps=3, seed=0)
    for row in rows:
        assert (row.train_mean, row.train_std) == (100.0, 0.0)


def test_csv_and_table_output(tmp_path):
    rows = [E.ResultRow("d", "svm", {"C": 0.5}, 100.0, 0.0, 87.5, 1.25, 4, seconds=3.2, setting="loo")]
    text = E.results_csv(rows)
    assert text.splitlines()[1] == "d,loo,svm,C=0.5,100.00,0.00,87.50,1.25,4,"
    assert "seconds" not in text
    assert E.results_csv(rows, include_timing=True).splitlines()[1].endswith(",3.200")
    table = E.format_table(rows)
    assert "87.50+-1.25" in table
    E.write_results_csv(rows, tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text() == text


def test_toy(tmp_path):
    res = E.toy_experiment(seed=7, out_dir=tmp_path, steps=11)
    assert res.train_accuracy["hgmm"] == 1.0
    assert res.planted_correct["hgmm"]
    assert res.train_accuracy["sgmm"] < 1.0 and not res.planted_correct["sgmm"]
    lines = (tmp_path / "toy_sgmm_grid.csv").read_text().splitlines()
    assert lines[0] == "x,y,g,label" and len(lines) == 1 + 11 * 11
