"""Experiment protocols: leave-one-out, grid search, subsampling, label noise.

Selection convention for every table: among grid points the one with the
highest mean test accuracy wins; ties go to higher train accuracy, then
smaller C, smaller lambda/tau, smaller sigma. The full grid table is kept
next to each selected row so other conventions can be applied afterwards.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import influence as infl
from . import models as M
from .dataset import CapacityError, Dataset, SplitPlan, inject_label_noise, loo_splits, stratified_subsample
from .kernel import KernelSpec, gram


def _pow2(lo, hi):
    return tuple(2.0 ** i for i in range(lo, hi + 1))


@dataclass(frozen=True)
class GridSpec:
    C: tuple = _pow2(-8, 7)
    lam: tuple = _pow2(-8, 7)
    tau: tuple = _pow2(-8, 7)
    sigma: tuple = _pow2(-10, 5)
    epsilon: tuple = (5, 1, 0.5, 0.1, 0.05, 0.01, 0.005, 0.001)
    rho: tuple = _pow2(-10, 10)
    k: tuple = tuple(range(1, 8))

    def __post_init__(self):
        for name in ("C", "lam", "tau", "sigma", "epsilon", "rho", "k"):
            values = tuple(getattr(self, name))
            if not values:
                raise ValueError(f"grid list {name!r} is empty")
            if any(not v > 0 for v in values):
                raise ValueError(f"grid list {name!r} must be positive")
            if name == "k" and any(int(v) != v for v in values):
                raise ValueError("k values must be integers")
            object.__setattr__(self, name, values)

    def influence_params(self, kind: str) -> tuple:
        return {
            "rbf": self.sigma,
            "kernel_factor": self.sigma,
            "ball": self.epsilon,
            "triangular": self.rho,
            "knn": self.k,
        }.get(kind, (None,))

    def specs(self, family: str, kernel: str = "linear", influence: str = "rbf",
              tol: float = 1e-3) -> list[M.ModelSpec]:
        """Every ModelSpec of ``family`` on this grid, in a fixed order."""
        kernels = [KernelSpec("linear")] if kernel == "linear" else [KernelSpec("rbf", s) for s in self.sigma]
        out = []
        for kern in kernels:
            if family == "svm":
                out += [M.ModelSpec("svm", kern, C=C, tol=tol) for C in self.C]
            elif family == "svm_m":
                out += [
                    M.ModelSpec("svm_m", kern, memor_kernel=KernelSpec("rbf", s), tau=t, C=C, tol=tol)
                    for C, t, s in itertools.product(self.C, self.tau, self.sigma)
                ]
            elif family == "hgmm":
                out += [
                    M.ModelSpec("hgmm", kern, influence=infl.make(influence, v), lam=lam, tol=tol)
                    for lam, v in itertools.product(self.lam, self.influence_params(influence))
                ]
            elif family == "sgmm":
                out += [
                    M.ModelSpec("sgmm", kern, influence=infl.make(influence, v), lam=lam, C=C, tol=tol)
                    for C, lam, v in itertools.product(self.C, self.lam, self.influence_params(influence))
                ]
            else:
                raise M.SpecError(f"unknown family {family!r}")
        return out

    def to_dict(self) -> dict:
        return {name: list(getattr(self, name)) for name in ("C", "lam", "tau", "sigma", "epsilon", "rho", "k")}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        aliases = {"lambda": "lam"}
        return cls(**{aliases.get(k, k): tuple(v) for k, v in d.items()})


@dataclass
class ResultRow:
    dataset: str
    family: str
    hyperparameters: dict
    train_mean: float
    train_std: float
    test_mean: float
    test_std: float
    repetitions: int
    seconds: float = 0.0
    setting: str = ""
    note: str = ""

    def accuracies(self) -> tuple:
        return self.train_mean, self.train_std, self.test_mean, self.test_std


def _missing_row(dataset, family, setting, note):
    nan = float("nan")
    return ResultRow(dataset, family, {}, nan, nan, nan, nan, 0, 0.0, setting, note)


class MatrixCache:
    """Full-sample kernel and influence matrices, reused across grid points and folds.

    Only influence kinds that do not depend on the training subset are cached;
    kNN radii and kernel factors are rebuilt per training set.
    """

    def __init__(self, X, max_m: int = 3000):
        self.X = X
        self.enabled = X.shape[0] <= max_m
        self._store: dict = {}

    def _get(self, key, build):
        if not self.enabled:
            return None
        if key not in self._store:
            self._store[key] = build()
        return self._store[key]

    def kernel(self, spec: KernelSpec):
        return self._get(("k", spec), lambda: gram(spec, self.X))

    def influence(self, spec: infl.InfluenceSpec):
        if spec.kind not in M.POINTWISE_KINDS:
            return None
        return self._get(("d", spec), lambda: infl.influence_matrix(spec, infl.build_context(spec, self.X)))


def evaluate_split(spec: M.ModelSpec, ds: Dataset, plan: SplitPlan, cache: MatrixCache | None = None,
                   train_labels=None) -> tuple[float, float]:
    """Train on ``plan.train_indices``, return (train accuracy, test accuracy).

    ``train_labels`` overrides the training labels (label-noise protocol);
    training accuracy is measured against the labels actually trained on.
    """
    tr, te = plan.train_indices, plan.test_indices
    X = ds.X
    y_tr = ds.y[tr] if train_labels is None else np.asarray(train_labels)
    full_K = cache.kernel(spec.kernel) if cache is not None else None
    if full_K is not None:
        K_tr, K_te = full_K[np.ix_(tr, tr)], full_K[np.ix_(te, tr)]
    else:
        K_tr, K_te = gram(spec.kernel, X[tr]), gram(spec.kernel, X[te], X[tr])
    Delta = K2 = None
    memo_te = None
    if spec.family in M.GMM:
        full_D = cache.influence(spec.influence) if cache is not None else None
        if full_D is not None:
            Delta, D_te = full_D[np.ix_(tr, tr)], full_D[np.ix_(te, tr)]
        else:
            ctx = infl.build_context(spec.influence, X[tr])
            Delta = infl.influence_matrix(spec.influence, ctx)
            D_te = infl.influence_cross_many(spec.influence, ctx, X[te])
    elif spec.family == "svm_m":
        full_K2 = cache.kernel(spec.memor_kernel) if cache is not None else None
        if full_K2 is not None:
            K2, K2_te = full_K2[np.ix_(tr, tr)], full_K2[np.ix_(te, tr)]
        else:
            K2, K2_te = gram(spec.memor_kernel, X[tr]), gram(spec.memor_kernel, X[te], X[tr])
    fit = M.fit_matrices(spec, y_tr, K_tr, Delta, K2)
    train_acc = float(np.mean(M.labels_from_scores(fit.train_scores) == y_tr))
    if te.size == 0:
        return train_acc, float("nan")
    ya = y_tr * fit.alpha
    g = K_te @ ya + fit.b
    if spec.family in M.GMM:
        g = g + D_te @ (y_tr * fit.c)
    elif spec.family == "svm_m":
        g = g + spec.tau * (K2_te @ ya)
    test_acc = float(np.mean(M.labels_from_scores(g) == ds.y[te]))
    return train_acc, test_acc


@dataclass
class LooResult:
    train_acc_mean: float
    train_acc_std: float
    test_acc: float
    fold_train_acc: np.ndarray = field(repr=False)
    fold_correct: np.ndarray = field(repr=False)


def loo_evaluate(spec: M.ModelSpec, ds: Dataset, cache: MatrixCache | None = None) -> LooResult:
    """Leave-one-out: m folds, each trained on m-1 samples.

    Test accuracy counts correct held-out predictions over m; the train
    statistics are over the m per-fold training accuracies. Accuracies are
    fractions in [0, 1].
    """
    cache = cache if cache is not None else MatrixCache(ds.X)
    train_acc = np.empty(ds.m)
    correct = np.empty(ds.m, dtype=bool)
    for plan in loo_splits(ds):
        i = int(plan.test_indices[0])
        try:
            train_acc[i], test_acc = evaluate_split(spec, ds, plan, cache)
        except Exception as exc:
            raise type(exc)(f"fold {i}: {exc}") from exc
        correct[i] = test_acc == 1.0
    return LooResult(float(train_acc.mean()), float(train_acc.std()), float(correct.mean()), train_acc, correct)


def _tie_key(row: ResultRow):
    h = row.hyperparameters
    return (
        -row.test_mean,
        -row.train_mean,
        h.get("C", 0.0),
        h.get("lambda", h.get("tau", 0.0)),
        h.get("kernel_sigma", 0.0),
        h.get("influence_param", h.get("memor_sigma", 0.0)),
    )


def _run_point(args):
    spec, ds, protocol, noise, setting = args
    t0 = time.perf_counter()
    row_h = spec.hyperparameters()
    try:
        if protocol == "loo":
            res = loo_evaluate(spec, ds)
            tr = [res.train_acc_mean]
            train_std = res.train_acc_std
            te = [res.test_acc]
            test_std = 0.0
            reps = ds.m
        else:
            cache = MatrixCache(ds.X)
            tr, te = [], []
            for plan, labels in zip(protocol, noise or [None] * len(protocol)):
                a, b = evaluate_split(spec, ds, plan, cache, labels)
                tr.append(a)
                te.append(b)
            train_std = float(np.std(tr))
            test_std = float(np.std(te))
            reps = len(protocol)
        return ResultRow(ds.name, spec.family, row_h, 100 * float(np.mean(tr)), 100 * train_std,
                         100 * float(np.mean(te)), 100 * test_std, reps,
                         time.perf_counter() - t0, setting)
    except Exception as exc:  # a failed grid point is recorded, not fatal
        row = _missing_row(ds.name, spec.family, setting, f"failed: {type(exc).__name__}: {exc}")
        row.hyperparameters = row_h
        row.seconds = time.perf_counter() - t0
        return row


def _map(fn, jobs_args, jobs: int | None):
    if jobs is None or jobs <= 1 or len(jobs_args) <= 1:
        return [fn(a) for a in jobs_args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, jobs_args, chunksize=max(1, len(jobs_args) // (4 * jobs))))


@dataclass
class GridResult:
    best_spec: M.ModelSpec | None
    best: ResultRow
    table: list[ResultRow]
    specs: list[M.ModelSpec]


def grid_search(specs: list[M.ModelSpec], ds: Dataset, protocol="loo", noise_labels=None,
                setting: str = "", jobs: int | None = 1) -> GridResult:
    """Evaluate every spec under ``protocol`` and pick the best.

    ``protocol`` is ``"loo"`` or a list of :class:`SplitPlan` (hold-out reps,
    aggregated by mean and population std). ``noise_labels`` optionally gives,
    per plan, the training labels to use instead of the clean ones.
    """
    if not specs:
        raise ValueError("empty grid")
    args = [(s, ds, protocol, noise_labels, setting) for s in specs]
    table = _map(_run_point, args, jobs)
    ok = [(r, s) for r, s in zip(table, specs) if not r.note]
    if not ok:
        return GridResult(None, _missing_row(ds.name, specs[0].family, setting, "all grid points failed"),
                          table, specs)
    best, best_spec = min(ok, key=lambda rs: _tie_key(rs[0]))
    return GridResult(best_spec, best, table, specs)


DEFAULT_SIZES = (50, 100, 150, 200, 300, 400, 500)


def subsample_experiment(grids: dict[str, list[M.ModelSpec]], ds: Dataset, sizes=DEFAULT_SIZES,
                         reps: int = 20, seed: int = 0, jobs: int | None = 1,
                         keep_tables: list | None = None) -> list[ResultRow]:
    """Balanced training sets of increasing size, rest as test.

    ``grids`` maps a family name to its list of specs. Rep ``r`` draws its
    split with seed ``seed + r``. Sizes a class cannot supply yield a ``--``
    row.
    """
    rows = []
    for size in sizes:
        setting = f"size={size}"
        try:
            plans = [stratified_subsample(ds, size // 2, seed + r) for r in range(reps)]
        except CapacityError:
            rows += [_missing_row(ds.name, fam, setting, "--") for fam in grids]
            continue
        for fam, specs in grids.items():
            res = grid_search(specs, ds, plans, setting=setting, jobs=jobs)
            rows.append(res.best)
            if keep_tables is not None:
                keep_tables.extend(res.table)
    return rows


def noise_experiment(grids: dict[str, list[M.ModelSpec]], ds: Dataset, fractions=(0.0, 0.05, 0.10, 0.15),
                     train_size: int = 500, reps: int = 20, seed: int = 0, jobs: int | None = 1,
                     keep_tables: list | None = None) -> list[ResultRow]:
    """Label-noise protocol: flip a fraction of the training labels only.

    The training draw is the same balanced draw as :func:`subsample_experiment`
    at ``train_size`` (seed ``seed + r``), so the zero-noise block coincides
    with it. Flipped indices for rep ``r`` come from seed ``seed + r`` as well.
    """
    if ds.m <= train_size:
        raise CapacityError(f"{ds.name}: noise protocol needs more than {train_size} samples, got {ds.m}")
    plans = [stratified_subsample(ds, train_size // 2, seed + r) for r in range(reps)]
    rows = []
    for frac in fractions:
        setting = f"noise={frac:g}"
        labels = [
            inject_label_noise(ds.subset(p.train_indices), frac, seed + r).y
            for r, p in enumerate(plans)
        ]
        for fam, specs in grids.items():
            res = grid_search(specs, ds, plans, noise_labels=labels, setting=setting, jobs=jobs)
            rows.append(res.best)
            if keep_tables is not None:
                keep_tables.extend(res.table)
    return rows


# --- output ----------------------------------------------------------------

_COLUMNS = ["dataset", "setting", "family", "hyperparameters", "train_mean", "train_std",
            "test_mean", "test_std", "repetitions", "note"]


def _fmt_h(h: dict) -> str:
    return ";".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}" for k, v in h.items())


def _fmt_num(v: float) -> str:
    return "--" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.2f}"


def results_csv(rows: list[ResultRow], include_timing: bool = False) -> str:
    """CSV text of ``rows``; wall time is left out unless asked for so output is reproducible."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_COLUMNS + (["seconds"] if include_timing else []))
    for r in rows:
        line = [r.dataset, r.setting, r.family, _fmt_h(r.hyperparameters), _fmt_num(r.train_mean),
                _fmt_num(r.train_std), _fmt_num(r.test_mean), _fmt_num(r.test_std), r.repetitions, r.note]
        if include_timing:
            line.append(f"{r.seconds:.3f}")
        writer.writerow(line)
    return buf.getvalue()


def write_results_csv(rows: list[ResultRow], path, include_timing: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(results_csv(rows, include_timing))


def format_table(rows: list[ResultRow]) -> str:
    """Aligned plain-text table, accuracies as mean+-std percent."""
    header = ["dataset", "setting", "family", "train(%)", "test(%)", "reps", "hyperparameters"]
    body = []
    for r in rows:
        if r.note and math.isnan(r.train_mean):
            body.append([r.dataset, r.setting, r.family, "--", "--", str(r.repetitions), r.note])
            continue
        body.append([r.dataset, r.setting, r.family,
                     f"{r.train_mean:.2f}+-{r.train_std:.2f}", f"{r.test_mean:.2f}+-{r.test_std:.2f}",
                     str(r.repetitions), _fmt_h(r.hyperparameters)])
    widths = [max(len(str(row[k])) for row in [header] + body) for k in range(len(header))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip() for row in [header] + body]
    return "\n".join(lines) + "\n"


# --- toy example -------------------------------------------------------------

def make_toy(seed: int = 7, per_class: int = 30) -> Dataset:
    """Two separable 2-D clouds plus one positive point planted inside the negative cloud."""
    rng = np.random.default_rng(seed)
    pos = rng.normal([1.5, 1.5], 0.6, size=(per_class, 2))
    neg = rng.normal([-1.5, -1.5], 0.6, size=(per_class, 2))
    planted = neg.mean(axis=0, keepdims=True)
    X = np.vstack([pos, neg, planted])
    y = np.concatenate([np.ones(per_class), -np.ones(per_class), [1]])
    return Dataset(X, y, "toy")


TOY_SPECS = {
    "hgmm": M.ModelSpec("hgmm", KernelSpec("linear"), influence=infl.InfluenceSpec("rbf", sigma=4.0),
                        lam=1.0, tol=1e-6),
    "sgmm": M.ModelSpec("sgmm", KernelSpec("linear"), influence=infl.InfluenceSpec("rbf", sigma=4.0),
                        lam=1.0, C=0.5, tol=1e-6),
}


def decision_grid(model: M.TrainedModel, lo, hi, steps: int = 101) -> np.ndarray:
    """Rows (x, y, g(x), label) over a ``steps`` x ``steps`` lattice."""
    xs = np.linspace(lo[0], hi[0], steps)
    ys = np.linspace(lo[1], hi[1], steps)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    P = np.column_stack([gx.ravel(), gy.ravel()])
    g = M.decision_function(model, P)
    return np.column_stack([P, g, M.labels_from_scores(g)])


def write_grid_csv(grid: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "g", "label"])
        for x, y, g, label in grid:
            writer.writerow([f"{x:.17g}", f"{y:.17g}", f"{g:.17g}", int(label)])


@dataclass
class ToyResult:
    dataset: Dataset
    models: dict
    train_accuracy: dict
    planted_correct: dict
    grid_paths: dict


def toy_experiment(seed: int = 7, out_dir=None, steps: int = 101, specs: dict | None = None) -> ToyResult:
    """Train hgmm and sgmm on :func:`make_toy` and optionally write decision grids."""
    ds = make_toy(seed)
    specs = specs or TOY_SPECS
    lo = ds.X.min(axis=0) - 1.0
    hi = ds.X.max(axis=0) + 1.0
    models, acc, planted, paths = {}, {}, {}, {}
    for name, spec in specs.items():
        model = M.train(spec, ds)
        models[name] = model
        pred = M.predict(model, ds.X)
        acc[name] = float(np.mean(pred == ds.y))
        planted[name] = bool(pred[-1] == ds.y[-1])
        if out_dir is not None:
            path = os.path.join(out_dir, f"toy_{name}_grid.csv")
            write_grid_csv(decision_grid(model, lo, hi, steps), path)
            paths[name] = path
    return ToyResult(ds, models, acc, planted, paths)
