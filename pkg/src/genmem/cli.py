"""Command-line interface: ``genmem train | predict | experiment``.

Exit codes: 0 success, 2 usage, 3 data, 4 solver or infeasible, 5 model format.
Tables go to stdout, logs to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation as E
from . import influence as infl
from . import models as M
from .dataset import Dataset, DatasetError, load_csv, minmax_params, minmax_scale
from .kernel import KernelSpec

log = logging.getLogger("genmem")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER, EXIT_FORMAT = 0, 2, 3, 4, 5
FORMAT_VERSION = 1
CLI_FAMILIES = {"svm": "svm", "svmm": "svm_m", "hgmm": "hgmm", "sgmm": "sgmm"}
CLI_INFLUENCE = ("rbf", "ball", "triangular", "knn", "identity")


class UsageError(Exception):
    pass


class FormatError(Exception):
    """Malformed model file; the message starts with the offending field path."""


# --- model file ----------------------------------------------------------------

def _enc(x, exact: bool):
    if isinstance(x, np.ndarray):
        return [_enc(float(v), exact) for v in x.ravel()]
    x = float(x)
    if exact:
        return x.hex()
    if math.isfinite(x):
        return x  # json writes repr(), the shortest string that round-trips
    return str(x)


def _dec(v, path: str) -> float:
    if isinstance(v, bool):
        raise FormatError(f"{path}: expected a number, got {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        try:
            return float.fromhex(v) if "0x" in v.lower() else float(v)
        except ValueError:
            pass
    raise FormatError(f"{path}: expected a number, got {v!r}")


def _dec_array(v, path: str, shape=None) -> np.ndarray:
    if not isinstance(v, list):
        raise FormatError(f"{path}: expected a list")
    arr = np.array([_dec(x, f"{path}[{k}]") for k, x in enumerate(v)], dtype=float)
    if shape is not None:
        if int(np.prod(shape)) != arr.size:
            raise FormatError(f"{path}: {arr.size} values do not fill shape {list(shape)}")
        arr = arr.reshape(shape)
    return arr


def model_to_dict(model: M.TrainedModel, exact: bool = False, scaling=None) -> dict:
    ctx = model.influence_ctx
    d = {
        "format_version": FORMAT_VERSION,
        "encoding": "exact" if exact else "decimal",
        "spec": model.spec.to_dict(),
        "support_X": {"shape": list(model.support_X.shape), "data": _enc(model.support_X, exact)},
        "y": [int(v) for v in model.y],
        "alpha": _enc(model.alpha, exact),
        "c": _enc(model.c, exact),
        "b": _enc(model.b, exact),
        "diagnostics": {k: (v if isinstance(v, (str, int)) else _enc(v, exact))
                        for k, v in model.diagnostics.items()},
    }
    if ctx is not None and ctx.knn_radii is not None:
        d["knn_radii"] = _enc(ctx.knn_radii, exact)
    if ctx is not None and ctx.factor is not None:
        d["factor"] = {"shape": list(ctx.factor.shape), "data": _enc(ctx.factor, exact)}
    if scaling is not None:
        d["scaling"] = {"offset": _enc(scaling[0], exact), "span": _enc(scaling[1], exact)}
    return d


def _field(d: dict, key: str, path: str):
    if not isinstance(d, dict):
        raise FormatError(f"{path}: expected an object")
    if key not in d:
        raise FormatError(f"{path}.{key}: missing")
    return d[key]


def model_from_dict(d: dict) -> tuple[M.TrainedModel, tuple | None]:
    """Inverse of :func:`model_to_dict`; returns (model, scaling or None)."""
    version = _field(d, "format_version", "model")
    if version != FORMAT_VERSION:
        raise FormatError(f"model.format_version: unsupported version {version!r}")
    try:
        spec = M.ModelSpec.from_dict(_field(d, "spec", "model"))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"model.spec: {exc}") from None
    sx = _field(d, "support_X", "model")
    shape = _field(sx, "shape", "model.support_X")
    if not (isinstance(shape, list) and len(shape) == 2 and all(isinstance(s, int) and s >= 0 for s in shape)):
        raise FormatError("model.support_X.shape: expected two non-negative integers")
    X = _dec_array(_field(sx, "data", "model.support_X"), "model.support_X.data", shape)
    m = shape[0]
    arrays = {}
    for key in ("y", "alpha", "c"):
        arr = _dec_array(_field(d, key, "model"), f"model.{key}")
        if key == "c" and spec.family not in M.GMM:
            if arr.size:
                raise FormatError(f"model.c: {spec.family} carries no memory costs")
        elif arr.size != m:
            raise FormatError(f"model.{key}: expected {m} values, got {arr.size}")
        arrays[key] = arr
    if not np.all(np.isin(arrays["y"], (-1, 1))):
        raise FormatError("model.y: labels must be -1 or +1")
    b = _dec(_field(d, "b", "model"), "model.b")
    radii = factor = None
    if "knn_radii" in d:
        radii = _dec_array(d["knn_radii"], "model.knn_radii")
        if radii.size != m:
            raise FormatError(f"model.knn_radii: expected {m} values, got {radii.size}")
    if "factor" in d:
        factor = _dec_array(_field(d["factor"], "data", "model.factor"), "model.factor.data", (m, m))
    ctx = None
    if spec.influence is not None:
        if spec.influence.kind == "knn" and radii is None:
            raise FormatError("model.knn_radii: missing for knn influence")
        if spec.influence.kind == "kernel_factor" and factor is None:
            raise FormatError("model.factor: missing for kernel_factor influence")
        anchors = X.copy()
        anchors.setflags(write=False)
        ctx = infl.InfluenceContext(anchors, radii, factor)
    scaling = None
    if "scaling" in d:
        s = d["scaling"]
        scaling = (_dec_array(_field(s, "offset", "model.scaling"), "model.scaling.offset"),
                   _dec_array(_field(s, "span", "model.scaling"), "model.scaling.span"))
        if scaling[0].size != shape[1] or scaling[1].size != shape[1]:
            raise FormatError("model.scaling: length does not match the feature count")
    diag = d.get("diagnostics", {})
    model = M.TrainedModel(spec, X, arrays["y"], arrays["alpha"], arrays["c"], b, ctx,
                           dict(diag) if isinstance(diag, dict) else {})
    return model, scaling


def save_model(model: M.TrainedModel, path, exact: bool = False, scaling=None) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model, exact, scaling), fh, indent=1)
        fh.write("\n")


def load_model(path) -> tuple[M.TrainedModel, tuple | None]:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"model: not valid JSON ({exc})") from None
    return model_from_dict(d)


# --- argument handling -----------------------------------------------------------

def _c_value(text: str) -> float:
    if text.lower() == "unbounded":
        return math.inf
    return _positive(text)


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


_REQUIRED = {
    "svm": ("--C",),
    "svmm": ("--C", "--tau", "--memor-sigma"),
    "hgmm": ("--influence", "--lambda"),
    "sgmm": ("--influence", "--lambda", "--C"),
}
_FLAG_ATTR = {"--C": "C", "--tau": "tau", "--memor-sigma": "memor_sigma", "--influence": "influence",
              "--lambda": "lam", "--influence-param": "influence_param"}


def spec_from_args(args) -> M.ModelSpec:
    """Build a ModelSpec from train flags, raising UsageError on any mismatch."""
    fam = args.family
    required = _REQUIRED[fam]
    allowed = set(required) | ({"--influence-param"} if "--influence" in required else set())
    missing = [f for f in required if getattr(args, _FLAG_ATTR[f]) is None]
    extra = [f for f, a in _FLAG_ATTR.items() if f not in allowed and getattr(args, a) is not None]
    if missing or extra:
        parts = [f"{fam} requires {' '.join(required)}"]
        if missing:
            parts.append(f"missing {' '.join(missing)}")
        if extra:
            parts.append(f"not accepted: {' '.join(extra)}")
        raise UsageError("; ".join(parts))
    if args.C is not None and math.isinf(args.C) and fam != "hgmm":
        raise UsageError("--C unbounded is only valid for hgmm")
    if args.kernel == "rbf" and args.kernel_sigma is None:
        raise UsageError("--kernel rbf requires --kernel-sigma")
    if args.kernel == "linear" and args.kernel_sigma is not None:
        raise UsageError("--kernel-sigma only applies to --kernel rbf")
    kernel = KernelSpec(args.kernel, args.kernel_sigma)
    influence = None
    if args.influence is not None:
        needs_param = args.influence != "identity"
        if needs_param and args.influence_param is None:
            raise UsageError(f"--influence {args.influence} requires --influence-param")
        if not needs_param and args.influence_param is not None:
            raise UsageError("--influence identity takes no --influence-param")
        try:
            influence = infl.make(args.influence, args.influence_param)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    return M.ModelSpec(
        CLI_FAMILIES[fam],
        kernel,
        influence=influence,
        memor_kernel=KernelSpec("rbf", args.memor_sigma) if args.memor_sigma is not None else None,
        C=None if fam == "hgmm" else args.C,
        lam=args.lam,
        tau=args.tau,
        tol=args.tol,
    )


def _load(args) -> Dataset:
    return load_csv(args.data, label_column=args.label_column, has_header=args.header)


def _is_blank(path) -> bool:
    with open(path) as fh:
        return not any(line.strip() for line in fh)


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("GMM_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"GMM_SEED must be an integer, got {env!r}") from None


# --- commands --------------------------------------------------------------------

def cmd_train(args) -> int:
    spec = spec_from_args(args)
    ds = _load(args)
    scaling = None
    if args.scale:
        scaling = minmax_params(ds.X)
        ds = minmax_scale(ds, scaling)
    model = M.train(spec, ds, max_iter=args.max_iter)
    save_model(model, args.out, exact=args.model_format == "exact", scaling=scaling)
    diag = model.diagnostics
    acc = M.accuracy(model, ds)
    log.info("wrote %s", args.out)
    print(f"status {diag.get('status')}")
    if "objective" in diag:
        print(f"objective {diag['objective']:.12g}")
        print(f"kkt_violation {diag['kkt_violation']:.3g}")
        print(f"iterations {diag['iterations']}")
    print(f"train_accuracy {100 * acc:.2f}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model, scaling = load_model(args.model)
    if _is_blank(args.data):
        return EXIT_OK
    if args.unlabeled:
        try:
            X = np.loadtxt(args.data, delimiter=",", ndmin=2, skiprows=1 if args.header else 0)
        except ValueError as exc:
            raise DatasetError(str(exc)) from None
    else:
        X = _load(args).X
    if X.shape[1] != model.n_features:
        raise DatasetError(f"model expects {model.n_features} features, data has {X.shape[1]}")
    if scaling is not None:
        X = (X - scaling[0]) / scaling[1]
    g = M.decision_function(model, X)
    labels = M.labels_from_scores(g)
    out = sys.stdout
    for label, score in zip(labels, g):
        out.write(f"{int(label)},{score:.12g}\n" if args.scores else f"{int(label)}\n")
    return EXIT_OK


def _grid(args) -> E.GridSpec:
    if args.grid in (None, "default"):
        return E.GridSpec()
    try:
        with open(args.grid) as fh:
            return E.GridSpec.from_dict(json.load(fh))
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        raise UsageError(f"--grid {args.grid}: {exc}") from None


def _family_grids(args, grid: E.GridSpec) -> dict:
    fams = args.family or ["svm", "svmm", "hgmm", "sgmm"]
    out = {}
    for fam in fams:
        specs = grid.specs(CLI_FAMILIES[fam], kernel=args.kernel, influence=args.influence, tol=args.tol)
        out[CLI_FAMILIES[fam]] = specs
        log.info("%s: %d grid points", fam, len(specs))
    return out


def _emit(rows, args, tables=None) -> None:
    sys.stdout.write(E.format_table(rows))
    if args.csv:
        E.write_results_csv(rows, args.csv, include_timing=args.timing)
        log.info("wrote %s", args.csv)
    if args.full_table and tables is not None:
        E.write_results_csv(tables, args.full_table, include_timing=args.timing)
        log.info("wrote %s", args.full_table)


def cmd_experiment(args) -> int:
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    seed = _seed(args)
    if args.protocol == "toy":
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        res = E.toy_experiment(seed=seed, out_dir=out_dir, steps=args.steps)
        print("family  train(%)  planted_point")
        for name in res.models:
            mark = "correct" if res.planted_correct[name] else "misclassified"
            print(f"{name:<6}  {100 * res.train_accuracy[name]:8.2f}  {mark}")
        for path in res.grid_paths.values():
            log.info("wrote %s", path)
        return EXIT_OK
    if args.data is None:
        raise UsageError(f"experiment {args.protocol} requires --data")
    ds = _load(args)
    if args.scale:
        ds = minmax_scale(ds)
    grids = _family_grids(args, _grid(args))
    tables: list = []
    if args.protocol in ("loo", "grid"):
        if args.protocol == "loo":
            protocol = "loo"
        else:
            from .dataset import stratified_subsample
            protocol = [stratified_subsample(ds, args.train_size // 2, seed + r) for r in range(args.reps)]
        rows = []
        for fam, specs in grids.items():
            res = E.grid_search(specs, ds, protocol, setting=args.protocol, jobs=jobs)
            rows.append(res.best)
            tables.extend(res.table)
    elif args.protocol == "subsample":
        rows = E.subsample_experiment(grids, ds, sizes=args.sizes, reps=args.reps, seed=seed, jobs=jobs,
                                      keep_tables=tables)
    else:
        rows = E.noise_experiment(grids, ds, fractions=args.fractions, train_size=args.train_size,
                                  reps=args.reps, seed=seed, jobs=jobs, keep_tables=tables)
    _emit(rows, args, tables)
    return EXIT_OK


# --- parser ----------------------------------------------------------------------

def _data_flags(p, required: bool) -> None:
    p.add_argument("--data", required=required, help="CSV file, label in the first column")
    p.add_argument("--label-column", type=int, default=0)
    p.add_argument("--header", action="store_true", help="first row holds column names")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genmem", description="Generalization-memorization classifiers.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="fit a model and write it to a file")
    tr.add_argument("--family", required=True, choices=list(CLI_FAMILIES))
    _data_flags(tr, True)
    tr.add_argument("--kernel", choices=["linear", "rbf"], default="linear")
    tr.add_argument("--kernel-sigma", type=_positive)
    tr.add_argument("--influence", choices=CLI_INFLUENCE)
    tr.add_argument("--influence-param", type=float)
    tr.add_argument("--C", type=_c_value, help="box bound, or 'unbounded' (hgmm only)")
    tr.add_argument("--lambda", dest="lam", type=_positive)
    tr.add_argument("--tau", type=_positive)
    tr.add_argument("--memor-sigma", type=_positive)
    tr.add_argument("--tol", type=_positive, default=1e-3)
    tr.add_argument("--max-iter", type=int)
    tr.add_argument("--scale", action="store_true", help="min-max scale features, stored in the model")
    tr.add_argument("--model-format", choices=["decimal", "exact"], default="decimal")
    tr.add_argument("--out", required=True)
    tr.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="label the rows of a data file")
    pr.add_argument("--model", required=True)
    _data_flags(pr, True)
    pr.add_argument("--unlabeled", action="store_true", help="every column is a feature")
    pr.add_argument("--scores", action="store_true", help="also print g(x)")
    pr.set_defaults(func=cmd_predict)

    ex = sub.add_parser("experiment", help="run an evaluation protocol")
    ex.add_argument("protocol", choices=["loo", "grid", "subsample", "noise", "toy"])
    _data_flags(ex, False)
    ex.add_argument("--family", action="append", choices=list(CLI_FAMILIES),
                    help="repeatable; default all four")
    ex.add_argument("--kernel", choices=["linear", "rbf"], default="linear")
    ex.add_argument("--influence", choices=CLI_INFLUENCE, default="rbf")
    ex.add_argument("--grid", default="default", help="'default' or a JSON file of value lists")
    ex.add_argument("--tol", type=_positive, default=1e-3)
    ex.add_argument("--seed", type=int, help="base seed (fallback: GMM_SEED, then 0)")
    ex.add_argument("--reps", type=int, default=20)
    ex.add_argument("--sizes", type=_int_list, default=list(E.DEFAULT_SIZES))
    ex.add_argument("--fractions", type=_float_list, default=[0.0, 0.05, 0.10, 0.15])
    ex.add_argument("--train-size", type=int, default=500)
    ex.add_argument("--scale", action="store_true")
    ex.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
    ex.add_argument("--csv", help="write selected rows as CSV")
    ex.add_argument("--full-table", help="write every grid point as CSV")
    ex.add_argument("--timing", action="store_true", help="include wall time in CSV output")
    ex.add_argument("--out-dir", default=".", help="toy: directory for decision-grid CSVs")
    ex.add_argument("--steps", type=int, default=101, help="toy: lattice points per axis")
    ex.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"genmem: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, OSError) as exc:
        print(f"genmem: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FormatError as exc:
        print(f"genmem: model format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (M.InfeasibleError, M.SpecError, ValueError, ArithmeticError) as exc:
        print(f"genmem: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
