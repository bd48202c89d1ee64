"""SVM, SVM^m and the hard/soft generalization-memorization machines.

All four families share one decision shape::

    g(x) = sum_i y_i a_i K(x_i, x) + b + memorization(x)

where the memorization part is ``tau * sum_i y_i a_i K2(x_i, x)`` for
``svm_m`` and ``sum_i y_i c_i delta(x_i, x)`` for ``hgmm``/``sgmm``, with
memory costs ``c = (1/lambda) * Y Delta^T Y a`` recovered from the dual.
The weight vector of the generalization part is never formed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import influence as infl
from .dataset import Dataset
from .kernel import KernelSpec, gram
from .qp import UNBOUNDED, DualProblem, solve_dual

FAMILIES = ("svm", "svm_m", "hgmm", "sgmm")
GMM = ("hgmm", "sgmm")

# influence kinds whose training matrix is a plain submatrix of the matrix
# over a larger sample (no dependence on which points are in the training set)
POINTWISE_KINDS = ("rbf", "ball", "triangular", "identity", "zero")


class SpecError(ValueError):
    """A model spec is missing or carries parameters for its family."""


class InfeasibleError(RuntimeError):
    """The hard-margin machine has no feasible primal point on this data."""


@dataclass(frozen=True)
class ModelSpec:
    family: str
    kernel: KernelSpec = field(default_factory=KernelSpec)
    influence: infl.InfluenceSpec | None = None
    memor_kernel: KernelSpec | None = None
    C: float | None = None
    lam: float | None = None
    tau: float | None = None
    tol: float = 1e-3

    def __post_init__(self):
        fam = self.family
        if fam not in FAMILIES:
            raise SpecError(f"unknown family {fam!r}; expected one of {FAMILIES}")
        need = {
            "svm": {"C"},
            "svm_m": {"C", "memor_kernel", "tau"},
            "hgmm": {"influence", "lam"},
            "sgmm": {"influence", "lam", "C"},
        }[fam]
        present = {k for k in ("C", "influence", "memor_kernel", "lam", "tau") if getattr(self, k) is not None}
        if fam == "hgmm" and self.C is not None:
            if self.C != UNBOUNDED:
                raise SpecError("hgmm has no C (its dual is unbounded above)")
            present.discard("C")
        missing = need - present
        extra = present - need
        if missing:
            raise SpecError(f"{fam} needs {sorted(missing)}")
        if extra:
            raise SpecError(f"{fam} does not take {sorted(extra)}")
        if self.C is not None and fam != "hgmm" and not (0 < self.C < math.inf):
            raise SpecError(f"{fam} needs a finite positive C, got {self.C}")
        for name in ("lam", "tau"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise SpecError(f"{name} must be positive")
        if self.memor_kernel is not None and self.memor_kernel.kind != "rbf":
            raise SpecError("the memorization kernel of svm_m is an rbf kernel")

    @property
    def upper(self) -> float:
        return UNBOUNDED if self.family == "hgmm" else float(self.C)

    def hyperparameters(self) -> dict:
        """Flat dict of the tunable values, for result tables."""
        d = {}
        if self.C is not None and self.family != "hgmm":
            d["C"] = self.C
        if self.lam is not None:
            d["lambda"] = self.lam
        if self.tau is not None:
            d["tau"] = self.tau
        if self.kernel.kind == "rbf":
            d["kernel_sigma"] = self.kernel.sigma
        if self.memor_kernel is not None:
            d["memor_sigma"] = self.memor_kernel.sigma
        if self.influence is not None:
            d["influence"] = self.influence.kind
            if self.influence.param is not None:
                d["influence_param"] = self.influence.param
        return d

    def to_dict(self) -> dict:
        d = {"family": self.family, "kernel": self.kernel.to_dict(), "tol": self.tol}
        if self.influence is not None:
            d["influence"] = self.influence.to_dict()
        if self.memor_kernel is not None:
            d["memor_kernel"] = self.memor_kernel.to_dict()
        for name in ("C", "lam", "tau"):
            value = getattr(self, name)
            if value is not None:
                d[name] = "unbounded" if value == UNBOUNDED else value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        C = d.get("C")
        return cls(
            family=d["family"],
            kernel=KernelSpec.from_dict(d["kernel"]),
            influence=infl.InfluenceSpec.from_dict(d["influence"]) if "influence" in d else None,
            memor_kernel=KernelSpec.from_dict(d["memor_kernel"]) if "memor_kernel" in d else None,
            C=UNBOUNDED if C == "unbounded" else C,
            lam=d.get("lam"),
            tau=d.get("tau"),
            tol=d.get("tol", 1e-3),
        )


def svm(kernel: KernelSpec, C: float, **kw) -> ModelSpec:
    return ModelSpec("svm", kernel, C=C, **kw)


def svm_m(kernel: KernelSpec, memor_sigma: float, tau: float, C: float, **kw) -> ModelSpec:
    return ModelSpec("svm_m", kernel, memor_kernel=KernelSpec("rbf", memor_sigma), tau=tau, C=C, **kw)


def hgmm(kernel: KernelSpec, influence: infl.InfluenceSpec, lam: float, **kw) -> ModelSpec:
    return ModelSpec("hgmm", kernel, influence=influence, lam=lam, **kw)


def sgmm(kernel: KernelSpec, influence: infl.InfluenceSpec, lam: float, C: float, **kw) -> ModelSpec:
    return ModelSpec("sgmm", kernel, influence=influence, lam=lam, C=C, **kw)


def sgmm_equivalent_of_svm_m(spec: ModelSpec) -> ModelSpec:
    """The SGMM whose dual and decision coincide with a given SVM^m.

    The influence matrix is the Cholesky factor of the memorization Gram
    (``K2 = Delta Delta^T``) and ``lambda = 1 / tau``.
    """
    if spec.family != "svm_m":
        raise SpecError("expected an svm_m spec")
    return ModelSpec(
        "sgmm",
        spec.kernel,
        influence=infl.InfluenceSpec("kernel_factor", sigma=spec.memor_kernel.sigma),
        lam=1.0 / spec.tau,
        C=spec.C,
        tol=spec.tol,
    )


@dataclass(frozen=True)
class TrainedModel:
    spec: ModelSpec
    support_X: np.ndarray
    y: np.ndarray
    alpha: np.ndarray
    c: np.ndarray
    b: float
    influence_ctx: infl.InfluenceContext | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("support_X", "y", "alpha", "c"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_features(self) -> int:
        return self.support_X.shape[1]


def assemble_q(family: str, K, y, Delta=None, K2=None, lam: float | None = None,
               tau: float | None = None) -> np.ndarray:
    """Labelled dual Hessian ``Q_ij = y_i y_j M_ij`` for each family.

    ``M`` is ``K`` (svm), ``K + tau K2`` (svm_m) or ``K + (1/lam) Delta Delta^T``
    (hgmm/sgmm).
    """
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    if family == "svm":
        M = K
    elif family == "svm_m":
        if K2 is None or tau is None:
            raise SpecError("svm_m needs K2 and tau")
        M = K + tau * np.asarray(K2, dtype=float)
    elif family in GMM:
        if Delta is None or lam is None:
            raise SpecError(f"{family} needs Delta and lambda")
        Delta = np.asarray(Delta, dtype=float)
        M = K + (Delta @ Delta.T) / lam
    else:
        raise SpecError(f"unknown family {family!r}")
    if M.shape != (y.shape[0], y.shape[0]):
        raise ValueError(f"matrix shape {M.shape} does not match {y.shape[0]} labels")
    Q = y[:, None] * M * y[None, :]
    return 0.5 * (Q + Q.T)


def recover_memory_costs(alpha, Delta, y, lam: float) -> np.ndarray:
    """Memory costs from the stationarity condition, c_i = (1/lam) y_i sum_j Delta_ji y_j a_j."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    alpha = np.asarray(alpha, dtype=float)
    y = np.asarray(y, dtype=float)
    return y * (np.asarray(Delta, dtype=float).T @ (y * alpha)) / lam


def compute_bias(alpha, y, scores, upper: float) -> tuple[float, str]:
    """Bias from the training scores ``s_k = g(x_k) - b``.

    Averages ``y_k - s_k`` over margin support vectors (``a_k > tol`` and,
    when bounded, ``a_k < upper - tol``). Without any, takes the midpoint of
    the interval allowed by the KKT conditions. Returns ``(b, how)``.
    """
    alpha = np.asarray(alpha, dtype=float)
    y = np.asarray(y, dtype=float)
    r = y - np.asarray(scores, dtype=float)
    bounded = math.isfinite(upper)
    tol_sv = 1e-8 * max(1.0, upper if bounded else 1.0)
    free = alpha > tol_sv
    if bounded:
        free &= alpha < upper - tol_sv
    if free.any():
        return float(r[free].mean()), "support"
    at_zero = alpha <= tol_sv
    at_top = ~at_zero
    pos = y > 0
    lower_side = (pos & at_zero) | (~pos & at_top)
    upper_side = (pos & at_top) | (~pos & at_zero)
    lo = r[lower_side].max() if lower_side.any() else None
    hi = r[upper_side].min() if upper_side.any() else None
    if lo is not None and hi is not None:
        return float(0.5 * (lo + hi)), "interval"
    if lo is not None or hi is not None:
        return float(lo if lo is not None else hi), "interval"
    warnings.warn("no support vector and empty KKT interval; bias set to 0", RuntimeWarning)
    return 0.0, "degenerate"


def _training_parts(spec: ModelSpec, X):
    """Grams needed to train ``spec`` on ``X``: (K, Delta, K2, ctx)."""
    K = gram(spec.kernel, X)
    Delta = K2 = ctx = None
    if spec.family in GMM:
        ctx = infl.build_context(spec.influence, X)
        Delta = infl.influence_matrix(spec.influence, ctx)
    elif spec.family == "svm_m":
        K2 = gram(spec.memor_kernel, X)
    return K, Delta, K2, ctx


@dataclass
class Fit:
    alpha: np.ndarray
    c: np.ndarray
    b: float
    diagnostics: dict
    train_scores: np.ndarray


def fit_matrices(spec: ModelSpec, y, K, Delta=None, K2=None, max_iter: int | None = None) -> Fit:
    """Solve the dual for precomputed training matrices.

    Raises :class:`InfeasibleError` when the hgmm dual is unbounded.
    """
    y = np.asarray(y, dtype=float)
    m = y.shape[0]
    if np.all(y == y[0]):
        c = np.zeros(m) if spec.family in GMM else np.zeros(0)
        diag = {"objective": 0.0, "kkt_violation": 0.0, "iterations": 0,
                "status": "single_class", "bias": "single_class"}
        return Fit(np.zeros(m), c, float(y[0]), diag, np.full(m, float(y[0])))
    Q = assemble_q(spec.family, K, y, Delta, K2, spec.lam, spec.tau)
    sol = solve_dual(DualProblem(Q, y, spec.upper, spec.tol, max_iter))
    if sol.status == "infeasible":
        raise InfeasibleError(
            "hgmm is infeasible on this data: its dual is unbounded, so no decision "
            "of this form classifies every training sample correctly"
        )
    if sol.status == "max_iter":
        warnings.warn(f"{spec.family}: solver stopped at max_iter with gap {sol.kkt_violation:.3e}",
                      RuntimeWarning)
    alpha = sol.alpha
    ya = y * alpha
    scores = K @ ya
    if spec.family in GMM:
        c = recover_memory_costs(alpha, Delta, y, spec.lam)
        scores = scores + Delta @ (y * c)
    else:
        c = np.zeros(0)
        if spec.family == "svm_m":
            scores = scores + spec.tau * (K2 @ ya)
    b, how = compute_bias(alpha, y, scores, spec.upper)
    diag = {"objective": sol.objective, "kkt_violation": sol.kkt_violation,
            "iterations": sol.iterations, "status": sol.status, "bias": how}
    return Fit(alpha, c, b, diag, scores + b)


def train(spec: ModelSpec, ds: Dataset, max_iter: int | None = None) -> TrainedModel:
    """Fit ``spec`` on ``ds`` through its dual.

    A single-class training set yields a constant model predicting that
    class (``diagnostics["status"] == "single_class"``).
    """
    K, Delta, K2, ctx = _training_parts(spec, ds.X)
    fit = fit_matrices(spec, ds.y, K, Delta, K2, max_iter)
    return TrainedModel(spec, ds.X, ds.y, fit.alpha, fit.c, fit.b, ctx, fit.diagnostics)


def decision_parts(model: TrainedModel, X) -> tuple[np.ndarray, np.ndarray]:
    """(generalization part incl. bias, memorization part) of g at each row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[1]}")
    ya = model.y * model.alpha
    general = gram(model.spec.kernel, X, model.support_X) @ ya + model.b
    fam = model.spec.family
    if fam in GMM:
        D = infl.influence_cross_many(model.spec.influence, model.influence_ctx, X)
        memo = D @ (model.y * model.c)
    elif fam == "svm_m":
        memo = model.spec.tau * (gram(model.spec.memor_kernel, X, model.support_X) @ ya)
    else:
        memo = np.zeros(X.shape[0])
    return general, memo


def decision_function(model: TrainedModel, X) -> np.ndarray:
    general, memo = decision_parts(model, X)
    return general + memo


def decision(model: TrainedModel, x) -> float:
    x = np.asarray(x, dtype=float).ravel()
    return float(decision_function(model, x[None, :])[0])


def labels_from_scores(g) -> np.ndarray:
    # a zero score goes to the positive class
    return np.where(np.asarray(g) >= 0.0, 1, -1)


def predict(model: TrainedModel, X) -> np.ndarray:
    return labels_from_scores(decision_function(model, X))


def empirical_risk(model: TrainedModel, ds: Dataset) -> float:
    return float(np.mean(predict(model, ds.X) != ds.y))


def accuracy(model: TrainedModel, ds: Dataset) -> float:
    return 1.0 - empirical_risk(model, ds)


def slacks(model: TrainedModel, ds: Dataset) -> np.ndarray:
    """Hinge slacks max(0, 1 - y g(x)) on ``ds``."""
    return np.maximum(0.0, 1.0 - ds.y * decision_function(model, ds.X))


@dataclass(frozen=True)
class RiskBound:
    m: int
    h: float
    eta: float
    g_gap: float


def generalization_gap(m: int, h: float, eta: float) -> RiskBound:
    """VC confidence term ``(ln(2m/h + 1) - ln(eta/4)) / (m/h)``.

    The logarithm of the confidence is read as ``ln(eta / 4)``, the usual
    VC-bound form, which keeps the term positive for small ``eta``.
    """
    if not (m >= 1 and h > 0 and 0 < eta < 1):
        raise ValueError("need m >= 1, h > 0 and 0 < eta < 1")
    g = (math.log(2.0 * m / h + 1.0) - math.log(eta / 4.0)) / (m / h)
    return RiskBound(m, h, eta, g)


def risk_bound(r_emp: float, gap: RiskBound, regime: str) -> float:
    """Upper bound on the expected risk, holding with probability 1 - eta.

    ``regime="large_emp"`` (empirical risk far above the gap) adds
    ``sqrt(2 G)``; ``regime="small_emp"`` (near-zero empirical risk) adds
    ``sqrt(2) G``. The caller decides which regime applies.
    """
    if not 0.0 <= r_emp <= 1.0:
        raise ValueError("empirical risk must lie in [0, 1]")
    if regime == "large_emp":
        return r_emp + math.sqrt(2.0 * gap.g_gap)
    if regime == "small_emp":
        return r_emp + math.sqrt(2.0) * gap.g_gap
    raise ValueError(f"regime must be 'large_emp' or 'small_emp', got {regime!r}")
