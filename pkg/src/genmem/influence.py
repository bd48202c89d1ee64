"""Memory influence functions delta(x_i, x) and the influence matrix.

Conventions: ``anchors`` are the memorized training samples. The influence
matrix has ``Delta[i, j] = delta(x_j, x_i)``: row ``i`` is the sample being
decided, column ``j`` the anchor whose memory acts on it. For a training
point ``x_i``, :func:`influence_cross` returns exactly row ``i``.

Kinds
-----
rbf         exp(-sigma |x - x_i|^2)
ball        1 if |x - x_i| <= epsilon else 0 (epsilon = 0 is exact match)
triangular  max(rho - |x - x_i|, 0)
knn         1 if |x - x_i| <= distance from x_i to its k-th nearest
            training neighbour, else 0 (radius frozen at training time)
identity    1 if x equals anchor i exactly, else 0
zero        always 0; memorization switched off
kernel_factor
            rows of a Cholesky factor P of an rbf Gram K2 = P P^T, extended
            off-sample by delta(x, X) = P^{-1} K2(X, x)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, eigh, solve_triangular

from .kernel import KernelSpec, gram, sq_distances

KINDS = ("rbf", "ball", "triangular", "knn", "identity", "zero", "kernel_factor")

_PARAMS = {
    "rbf": {"sigma"},
    "ball": {"epsilon"},
    "triangular": {"rho"},
    "knn": {"k"},
    "identity": set(),
    "zero": set(),
    "kernel_factor": {"sigma"},
}


@dataclass(frozen=True)
class InfluenceSpec:
    kind: str
    sigma: float | None = None
    epsilon: float | None = None
    rho: float | None = None
    k: int | None = None
    jitter: float = 1e-10

    def __post_init__(self):
        if self.kind not in _PARAMS:
            raise ValueError(f"unknown influence kind {self.kind!r}")
        given = {name for name in ("sigma", "epsilon", "rho", "k") if getattr(self, name) is not None}
        if given != _PARAMS[self.kind]:
            need = ", ".join(sorted(_PARAMS[self.kind])) or "no parameters"
            raise ValueError(f"influence {self.kind!r} takes {need}; got {sorted(given)}")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if self.epsilon is not None and not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if self.rho is not None and not self.rho > 0:
            raise ValueError("rho must be > 0")
        if self.k is not None:
            if int(self.k) != self.k or self.k < 1:
                raise ValueError("k must be a positive integer")
            object.__setattr__(self, "k", int(self.k))

    @property
    def param(self):
        """The single shape parameter of this kind, or None."""
        for name in ("sigma", "epsilon", "rho", "k"):
            value = getattr(self, name)
            if value is not None:
                return value
        return None

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for name in ("sigma", "epsilon", "rho", "k"):
            if getattr(self, name) is not None:
                d[name] = getattr(self, name)
        if self.kind == "kernel_factor":
            d["jitter"] = self.jitter
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "InfluenceSpec":
        return cls(**d)


def make(kind: str, param=None) -> InfluenceSpec:
    """Build a spec from a kind and its one shape parameter."""
    name = next(iter(_PARAMS.get(kind, ())), None)
    if name is None:
        return InfluenceSpec(kind)
    if param is None:
        raise ValueError(f"influence {kind!r} needs {name}")
    return InfluenceSpec(kind, **{name: int(param) if name == "k" else float(param)})


@dataclass(frozen=True)
class InfluenceContext:
    anchors: np.ndarray
    knn_radii: np.ndarray | None = None
    factor: np.ndarray | None = None


def knn_radii(X, k: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    m = X.shape[0]
    if k >= m:
        raise ValueError(f"k={k} needs at least {k + 1} training samples, got {m}")
    dist = np.sqrt(sq_distances(X, X))
    radii = np.empty(m)
    for i in range(m):
        others = np.delete(dist[i], i)
        # stable sort: equal distances keep lower index first
        radii[i] = others[np.argsort(others, kind="stable")[k - 1]]
    return radii


def psd_factor(K: np.ndarray, jitter: float = 1e-10, escalations: int = 3) -> np.ndarray:
    """Lower factor P with P P^T = K + jitter I.

    The jitter is multiplied by 100 after each failed Cholesky attempt; after
    ``escalations`` failures an eigendecomposition (negative eigenvalues
    clipped) supplies a square-root factor instead.
    """
    K = np.asarray(K, dtype=float)
    eye = np.eye(K.shape[0])
    for attempt in range(escalations + 1):
        try:
            return cholesky(K + jitter * (100.0 ** attempt) * eye, lower=True)
        except np.linalg.LinAlgError:
            continue
    w, V = eigh(K)
    return V * np.sqrt(np.clip(w, 0.0, None))


def build_context(spec: InfluenceSpec, X) -> InfluenceContext:
    X = np.array(X, dtype=float)
    X.setflags(write=False)
    if spec.kind == "knn":
        return InfluenceContext(X, knn_radii=knn_radii(X, spec.k))
    if spec.kind == "kernel_factor":
        K2 = gram(KernelSpec("rbf", spec.sigma), X)
        return InfluenceContext(X, factor=psd_factor(K2, spec.jitter))
    return InfluenceContext(X)


def influence_cross_many(spec: InfluenceSpec, ctx: InfluenceContext, Xq) -> np.ndarray:
    """Matrix with entry (q, i) = delta(anchor_i, Xq[q])."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    A = ctx.anchors
    if Xq.shape[1] != A.shape[1]:
        raise ValueError(f"dimension mismatch: {Xq.shape[1]} vs {A.shape[1]}")
    kind = spec.kind
    if kind == "zero":
        return np.zeros((Xq.shape[0], A.shape[0]))
    if kind == "identity":
        return np.all(Xq[:, None, :] == A[None, :, :], axis=-1).astype(float)
    if kind == "kernel_factor":
        K2 = gram(KernelSpec("rbf", spec.sigma), A, Xq)
        return solve_triangular(ctx.factor, K2, lower=True).T
    d2 = sq_distances(Xq, A)
    if kind == "rbf":
        return np.exp(-spec.sigma * d2)
    dist = np.sqrt(d2)
    if kind == "ball":
        return (dist <= spec.epsilon).astype(float)
    if kind == "triangular":
        return np.maximum(spec.rho - dist, 0.0)
    if kind == "knn":
        return (dist <= ctx.knn_radii[None, :]).astype(float)
    raise AssertionError(kind)


def influence_cross(spec: InfluenceSpec, ctx: InfluenceContext, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    return influence_cross_many(spec, ctx, x[None, :])[0]


def eval_influence(spec: InfluenceSpec, ctx: InfluenceContext, i: int, x) -> float:
    m = ctx.anchors.shape[0]
    if not 0 <= i < m:
        raise IndexError(f"anchor index {i} out of range [0, {m})")
    return float(influence_cross(spec, ctx, x)[i])


def influence_matrix(spec: InfluenceSpec, ctx: InfluenceContext) -> np.ndarray:
    """Training influence matrix, ``Delta[i, j] = delta(x_j, x_i)``.

    For ``kernel_factor`` this is the stored factor itself rather than its
    off-sample extension evaluated at the anchors (they agree up to jitter).
    """
    if spec.kind == "kernel_factor":
        return ctx.factor.copy()
    return influence_cross_many(spec, ctx, ctx.anchors)
