import json

import numpy as np
import pytest

from genmem import cli
from genmem import evaluation as E
from genmem import influence as infl
from genmem import models as M
from genmem.dataset import Dataset, load_csv, write_csv
from genmem.kernel import KernelSpec
from helpers import blobs

HGMM_TOY = ["--family", "hgmm", "--kernel", "linear", "--influence", "rbf", "--influence-param", "1.0",
            "--lambda", "1.0"]


@pytest.fixture
def toy_csv(tmp_path):
    path = tmp_path / "toy.csv"
    write_csv(E.make_toy(7), path)
    return path


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_train_and_predict_toy(tmp_path, toy_csv, capsys):
    model = tmp_path / "m.json"
    code, out, _ = run(capsys, "train", *HGMM_TOY, "--data", toy_csv, "--out", model)
    assert code == 0
    assert "train_accuracy 100.00" in out
    code, out, _ = run(capsys, "predict", "--model", model, "--data", toy_csv)
    assert code == 0
    labels = np.array([int(line) for line in out.splitlines()])
    np.testing.assert_array_equal(labels, load_csv(toy_csv).y)
    code, out, _ = run(capsys, "predict", "--model", model, "--data", toy_csv, "--scores")
    first = out.splitlines()[0].split(",")
    assert len(first) == 2
    assert len(first[1].replace("-", "").replace(".", "").split("e")[0]) <= 13


@pytest.mark.parametrize("argv, needle", [
    (["--family", "hgmm", "--influence", "rbf", "--influence-param", "1"], "--lambda"),
    (["--family", "sgmm", "--influence", "rbf", "--influence-param", "1", "--lambda", "1", "--C", "unbounded"],
     "only valid for hgmm"),
    (["--family", "svm", "--C", "1", "--lambda", "1"], "not accepted"),
    (["--family", "svm", "--C", "1", "--kernel", "rbf"], "--kernel-sigma"),
    (["--family", "hgmm", "--influence", "knn", "--lambda", "1"], "--influence-param"),
])
def test_usage_errors(tmp_path, toy_csv, capsys, argv, needle):
    code, _, err = run(capsys, "train", *argv, "--data", toy_csv, "--out", tmp_path / "x.json")
    assert code == cli.EXIT_USAGE
    assert needle in err


def test_unknown_family_is_usage_error(toy_csv, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["train", "--family", "lasso", "--data", str(toy_csv), "--out", "x"])
    assert exc.value.code == 2


def test_empty_data_predicts_nothing(tmp_path, toy_csv, capsys):
    model = tmp_path / "m.json"
    run(capsys, "train", *HGMM_TOY, "--data", toy_csv, "--out", model)
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    code, out, _ = run(capsys, "predict", "--model", model, "--data", empty)
    assert code == 0 and out == ""


def test_data_and_format_errors(tmp_path, toy_csv, capsys):
    model = tmp_path / "m.json"
    run(capsys, "train", *HGMM_TOY, "--data", toy_csv, "--out", model)
    wide = tmp_path / "wide.csv"
    wide.write_text("1,0,0,0\n")
    code, _, err = run(capsys, "predict", "--model", model, "--data", wide)
    assert code == cli.EXIT_DATA and "features" in err
    d = json.loads(model.read_text())
    d["alpha"][3] = "oops"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(d))
    code, _, err = run(capsys, "predict", "--model", bad, "--data", toy_csv)
    assert code == cli.EXIT_FORMAT and "model.alpha[3]" in err
    del d["spec"]
    bad.write_text(json.dumps(d))
    code, _, err = run(capsys, "predict", "--model", bad, "--data", toy_csv)
    assert code == cli.EXIT_FORMAT and "model.spec" in err
    bad.write_text("{not json")
    assert run(capsys, "predict", "--model", bad, "--data", toy_csv)[0] == cli.EXIT_FORMAT


def test_infeasible_exit_code(tmp_path, capsys):
    path = tmp_path / "clash.csv"
    path.write_text("1,0.0\n-1,0.0\n1,1.0\n")
    code, _, err = run(capsys, "train", *HGMM_TOY, "--data", path, "--out", tmp_path / "m.json")
    assert code == cli.EXIT_SOLVER and "infeasible" in err


@pytest.mark.parametrize("exact", [False, True])
@pytest.mark.parametrize("spec", [
    M.hgmm(KernelSpec("rbf", 0.7), infl.InfluenceSpec("knn", k=2), 0.5),
    M.sgmm(KernelSpec("linear"), infl.InfluenceSpec("triangular", rho=1.5), 1.0, 2.0),
    M.svm_m(KernelSpec("linear"), 32.0, 0.5, 1.0),
    M.sgmm_equivalent_of_svm_m(M.svm_m(KernelSpec("linear"), 32.0, 0.5, 1.0)),
])
def test_model_round_trip_is_bitwise(tmp_path, spec, exact):
    rng = np.random.default_rng(1)
    ds = blobs(rng, 8, shift=0.4)
    model = M.train(spec, ds)
    path = tmp_path / "m.json"
    cli.save_model(model, path, exact=exact)
    back, scaling = cli.load_model(path)
    assert scaling is None and back.spec == spec
    Xq = rng.normal(size=(20, 2))
    assert M.decision_function(back, Xq).tobytes() == M.decision_function(model, Xq).tobytes()


def test_scaling_is_stored(tmp_path, capsys):
    ds = Dataset(np.array([[0.0, 100.0], [10.0, 300.0], [1.0, 120.0], [9.0, 280.0]]), np.array([-1, 1, -1, 1]))
    data = tmp_path / "d.csv"
    write_csv(ds, data)
    model = tmp_path / "m.json"
    code, out, _ = run(capsys, "train", "--family", "svm", "--C", "1", "--scale", "--data", data, "--out", model)
    assert code == 0
    _, scaling = cli.load_model(model)
    np.testing.assert_array_equal(scaling[0], [0.0, 100.0])
    code, out, _ = run(capsys, "predict", "--model", model, "--data", data)
    assert [int(v) for v in out.split()] == [-1, 1, -1, 1]


def test_unlabeled_predict(tmp_path, toy_csv, capsys):
    model = tmp_path / "m.json"
    run(capsys, "train", *HGMM_TOY, "--data", toy_csv, "--out", model)
    ds = load_csv(toy_csv)
    raw = tmp_path / "raw.csv"
    np.savetxt(raw, ds.X, delimiter=",", fmt="%.17g")
    code, out, _ = run(capsys, "predict", "--model", model, "--data", raw, "--unlabeled")
    assert code == 0
    np.testing.assert_array_equal([int(v) for v in out.split()], ds.y)


def test_experiment_toy(tmp_path, capsys):
    code, out, _ = run(capsys, "experiment", "toy", "--seed", "7", "--out-dir", tmp_path, "--steps", "5")
    assert code == 0
    assert "hgmm      100.00  correct" in out
    assert "misclassified" in out
    assert (tmp_path / "toy_hgmm_grid.csv").exists() and (tmp_path / "toy_sgmm_grid.csv").exists()


def test_experiment_loo_with_grid_file(tmp_path, capsys):
    data = tmp_path / "d.csv"
    write_csv(blobs(np.random.default_rng(2), 6), data)
    grid = tmp_path / "g.json"
    grid.write_text(json.dumps({"C": [1.0], "lambda": [1.0], "sigma": [1.0]}))
    csv_out = tmp_path / "r.csv"
    code, out, _ = run(capsys, "experiment", "loo", "--family", "hgmm", "--family", "svm", "--data", data,
                       "--grid", grid, "--jobs", "1", "--csv", csv_out)
    assert code == 0
    assert "100.00+-0.00" in out
    assert csv_out.read_text().count("\n") == 3


def test_experiment_seed_from_environment(tmp_path, capsys, monkeypatch):
    data = tmp_path / "d.csv"
    write_csv(blobs(np.random.default_rng(3), 15, shift=0.3), data)
    grid = tmp_path / "g.json"
    grid.write_text(json.dumps({"C": [1.0]}))
    argv = ["experiment", "subsample", "--family", "svm", "--data", data, "--grid", grid, "--sizes", "10",
            "--reps", "2", "--jobs", "1"]
    monkeypatch.setenv("GMM_SEED", "11")
    from_env = run(capsys, *argv)[1]
    monkeypatch.delenv("GMM_SEED")
    explicit = run(capsys, *argv, "--seed", "11")[1]
    assert from_env == explicit
    monkeypatch.setenv("GMM_SEED", "x")
    assert run(capsys, *argv)[0] == cli.EXIT_USAGE


def test_experiment_requires_data(capsys):
    assert run(capsys, "experiment", "loo")[0] == cli.EXIT_USAGE
