"""Dual quadratic programs of the SVM family.

Every model in the package trains through the same convex program::

    minimize    0.5 * a^T Q a - sum(a)
    subject to  y^T a = 0,  0 <= a <= upper

where ``Q`` already carries the labels (``Q_ij = y_i y_j M_ij``) and
``upper`` may be ``inf`` for the hard-margin machine. :func:`solve_dual` is
a two-variable SMO solver; :func:`oracle_solve` is a slow, independent
projected-gradient solver used only to check it.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

UNBOUNDED = math.inf

CURVATURE_FLOOR = -1e-8
_TAU = 1e-12


class CurvatureError(ArithmeticError):
    """Q is not positive semidefinite along a selected working pair."""


class OracleError(RuntimeError):
    """The verification oracle did not reach stationarity."""


class DenseQ:
    """Row provider over a materialized matrix."""

    def __init__(self, Q):
        Q = np.asarray(Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValueError(f"Q must be square, got {Q.shape}")
        if not np.allclose(Q, Q.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(Q).max(initial=0.0))):
            raise ValueError("Q is not symmetric")
        self.Q = Q
        self.diag = np.diag(Q).copy()

    def __len__(self):
        return self.Q.shape[0]

    def row(self, i: int) -> np.ndarray:
        return self.Q[i]

    def matrix(self) -> np.ndarray:
        return self.Q


class CachedRowQ:
    """Row provider computing rows on demand behind an LRU cache."""

    def __init__(self, row_fn: Callable[[int], np.ndarray], diag, cache_rows: int = 512):
        self.row_fn = row_fn
        self.diag = np.asarray(diag, dtype=float)
        self.cache_rows = cache_rows
        self._cache: OrderedDict[int, np.ndarray] = OrderedDict()

    def __len__(self):
        return self.diag.shape[0]

    def row(self, i: int) -> np.ndarray:
        r = self._cache.get(i)
        if r is not None:
            self._cache.move_to_end(i)
            return r
        r = np.asarray(self.row_fn(i), dtype=float)
        self._cache[i] = r
        if len(self._cache) > self.cache_rows:
            self._cache.popitem(last=False)
        return r

    def matrix(self) -> np.ndarray:
        return np.vstack([self.row_fn(i) for i in range(len(self))])


@dataclass
class DualProblem:
    Q: object
    y: np.ndarray
    upper: float = 1.0
    tol: float = 1e-3
    max_iter: int | None = None
    cap: float = 1e8
    objective_floor: float = -1e12

    def __post_init__(self):
        if not hasattr(self.Q, "row"):
            self.Q = DenseQ(self.Q)
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.y.shape[0] != len(self.Q):
            raise ValueError(f"Q is {len(self.Q)}x{len(self.Q)} but y has {self.y.shape[0]} entries")
        if not np.all(np.abs(self.y) == 1.0):
            raise ValueError("y entries must be -1 or +1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.upper > 0:
            raise ValueError("upper bound must be positive")
        if self.max_iter is None:
            self.max_iter = max(1_000_000, 100 * self.m)

    @property
    def m(self) -> int:
        return self.y.shape[0]

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.upper)


@dataclass
class DualSolution:
    alpha: np.ndarray
    objective: float
    kkt_violation: float
    iterations: int
    status: str  # "converged" | "max_iter" | "infeasible"
    gradient: np.ndarray | None = field(default=None, repr=False)


def _candidates(alpha, y, upper):
    below = alpha < upper
    above = alpha > 0
    pos = y > 0
    up = (pos & below) | (~pos & above)
    low = (pos & above) | (~pos & below)
    return up, low


def _gap(G, alpha, y, upper):
    f = -y * G
    up, low = _candidates(alpha, y, upper)
    if not up.any() or not low.any():
        return 0.0, -1, -1
    fu = np.where(up, f, -np.inf)
    fl = np.where(low, f, np.inf)
    i = int(np.argmax(fu))
    j = int(np.argmin(fl))
    return float(fu[i] - fl[j]), i, j


def _objective(alpha, G):
    # 0.5 a^T Q a - e^T a with Q a = G + e
    return 0.5 * float(alpha @ G) - 0.5 * float(alpha.sum())


def kkt_violation(p: DualProblem, alpha) -> float:
    """SMO optimality gap max_up(-y g) - min_low(-y g) with g = Q a - e.

    Non-positive at an exact optimum. Defined as 0 when no feasible working
    pair exists (e.g. a single sample).
    """
    alpha = np.asarray(alpha, dtype=float)
    scale = max(1.0, float(np.abs(alpha).sum()))
    if alpha.shape != p.y.shape:
        raise ValueError("alpha has the wrong length")
    if np.any(alpha < -1e-12 * scale) or (p.bounded and np.any(alpha > p.upper * (1 + 1e-12))):
        raise ValueError("alpha violates the box constraints")
    if abs(float(p.y @ alpha)) > 1e-9 * scale:
        raise ValueError("alpha violates y^T alpha = 0")
    G = np.array([p.Q.row(i) @ alpha for i in range(p.m)]) - 1.0
    return _gap(G, np.clip(alpha, 0.0, p.upper), p.y, p.upper)[0]


def _second_order_partner(i, Qi, diag, G, alpha, y, C):
    """Partner of ``i`` maximizing the guaranteed decrease gap^2 / curvature."""
    f = -y * G
    _, low = _candidates(alpha, y, C)
    b = f[i] - f
    cand = low & (b > 0)
    a = Qi[i] + diag - 2.0 * y[i] * y * Qi
    a = np.where(a > _TAU, a, _TAU)
    score = np.where(cand, -(b * b) / a, np.inf)
    j = int(np.argmin(score))
    return j, float(b[j])


def solve_dual(p: DualProblem, callback: Callable[[int, float, float], None] | None = None,
               log_every: int = 1000, second_order: bool = False) -> DualSolution:
    """Maximal-violating-pair SMO.

    With ``upper = inf`` no upper clip is applied; if the iterates run past
    ``p.cap`` or the objective drops below ``p.objective_floor`` the dual is
    declared unbounded and the solution comes back with status
    ``"infeasible"`` (the primal hard-margin problem has no solution).
    """
    y, C, m = p.y, p.upper, p.m
    alpha = np.zeros(m)
    G = -np.ones(m)
    if np.all(y > 0) or np.all(y < 0):
        return DualSolution(alpha, 0.0, 0.0, 0, "converged", G)

    obj = 0.0
    status = "max_iter"
    it = 0
    refreshed = False
    while it < p.max_iter:
        gap, i, j = _gap(G, alpha, y, C)
        if gap <= p.tol:
            # guard against drift in the incrementally updated gradient
            if not refreshed and hasattr(p.Q, "matrix") and isinstance(p.Q, DenseQ):
                G = p.Q.Q @ alpha - 1.0
                refreshed = True
                continue
            status = "converged"
            break
        refreshed = False
        Qi = p.Q.row(i)
        if second_order:
            j, gap = _second_order_partner(i, Qi, p.Q.diag, G, alpha, y, C)
        Qj = p.Q.row(j)
        yi, yj = y[i], y[j]
        curv = Qi[i] + Qj[j] - 2.0 * yi * yj * Qi[j]
        if curv < CURVATURE_FLOOR:
            raise CurvatureError(f"negative curvature {curv:.3e} on pair ({i}, {j}); Q is not PSD")
        room_i = (C - alpha[i]) if yi > 0 else alpha[i]
        room_j = alpha[j] if yj > 0 else (C - alpha[j])
        t_max = min(room_i, room_j)
        t = t_max if curv <= _TAU else min(gap / curv, t_max)
        if not math.isfinite(t):
            status = "infeasible"
            break
        alpha[i] += yi * t
        alpha[j] -= yj * t
        if t == room_i:
            alpha[i] = C if yi > 0 else 0.0
        if t == room_j:
            alpha[j] = 0.0 if yj > 0 else C
        G += t * (yi * Qi - yj * Qj)
        step = -gap * t + 0.5 * max(curv, 0.0) * t * t
        if step > 1e-12 * max(1.0, abs(obj)):
            raise AssertionError(f"SMO step increased the objective by {step:.3e}")
        obj += step
        it += 1
        if callback is not None and it % log_every == 0:
            callback(it, gap, obj)
        if not p.bounded and (alpha[i] > p.cap or alpha[j] > p.cap or obj < p.objective_floor):
            status = "infeasible"
            break

    gap = _gap(G, alpha, y, C)[0]
    return DualSolution(alpha, _objective(alpha, G), gap, it, status, G)


def project_feasible(v, y, upper: float) -> np.ndarray:
    """Euclidean projection of ``v`` onto {a : y^T a = 0, 0 <= a <= upper}.

    ``a(mu) = clip(v - mu y, 0, upper)`` and ``y^T a(mu)`` is piecewise linear
    and non-increasing in mu, so the root is found exactly between
    consecutive breakpoints.
    """
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    bps = y * v
    if math.isfinite(upper):
        bps = np.concatenate([bps, y * (v - upper)])
    bps = np.unique(bps)
    A = np.clip(v[None, :] - bps[:, None] * y[None, :], 0.0, upper)
    phi = A @ y
    k = int(np.searchsorted(-phi, 0.0, side="left"))
    if k == 0:
        mu = bps[0]
    elif k >= bps.shape[0]:
        mu = bps[-1]
    else:
        lo, hi = phi[k - 1], phi[k]
        mu = bps[k - 1] + (bps[k] - bps[k - 1]) * (lo / (lo - hi)) if lo != hi else bps[k]
    return np.clip(v - mu * y, 0.0, upper)


def _polish(Q, y, upper, alpha, tol):
    """Solve the KKT system on the active set guessed from ``alpha``."""
    m = y.shape[0]
    thr = 1e-7 * max(1.0, float(alpha.max(initial=0.0)))
    at_zero = alpha <= thr
    at_top = (alpha >= upper - thr) & ~at_zero
    free = ~(at_zero | at_top)
    fixed = np.where(at_top, upper, 0.0)
    F = np.flatnonzero(free)
    rhs = np.concatenate([1.0 - Q[np.ix_(F, ~free)] @ fixed[~free], [-(y[~free] @ fixed[~free])]])
    K = np.zeros((F.size + 1, F.size + 1))
    K[:F.size, :F.size] = Q[np.ix_(F, F)]
    K[:F.size, F.size] = y[F]
    K[F.size, :F.size] = y[F]
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    cand = fixed.copy()
    cand[F] = sol[:F.size]
    mu = sol[F.size]
    scale = max(1.0, float(np.abs(cand).max()))
    if np.any(cand < -1e-12 * scale) or np.any(cand > upper * (1 + 1e-12)):
        return None
    cand = np.clip(cand, 0.0, upper)
    r = Q @ cand - 1.0 + mu * y
    gscale = max(1.0, float(np.abs(Q).max()) * scale)
    if np.any(np.abs(r[free]) > tol * gscale):
        return None
    if np.any(r[at_zero] < -tol * gscale) or np.any(r[at_top] > tol * gscale):
        return None
    if abs(float(y @ cand)) > 1e-12 * scale * m:
        return None
    return cand


def oracle_solve(p: DualProblem, max_iter: int = 1_000_000, stationarity: float = 1e-10) -> DualSolution:
    """Reference solver: accelerated projected gradient with exact projection.

    Test-scale only (m <= 16) and needs a finite upper bound. Once the
    iterate is close to stationary the guessed active set is polished by
    solving its KKT system exactly; the polished point is accepted only if
    it passes the full KKT check.
    """
    if p.m > 16:
        raise ValueError("oracle_solve is for m <= 16")
    if not p.bounded:
        raise ValueError("oracle_solve needs a finite upper bound (use 1e8 for 'unbounded')")
    Q = p.Q.matrix()
    y, C = p.y, p.upper
    L = max(float(np.linalg.eigvalsh(Q).max()), 1e-12)
    a = project_feasible(np.zeros(p.m), y, C)
    z, t = a.copy(), 1.0
    obj_prev = np.inf
    restarted = False
    for it in range(1, max_iter + 1):
        a_new = project_feasible(z - (Q @ z - 1.0) / L, y, C)
        obj = 0.5 * a_new @ Q @ a_new - a_new.sum()
        if obj > obj_prev and not restarted:
            # adaptive restart; the plain gradient step that follows is always kept
            z, t = a.copy(), 1.0
            restarted = True
            continue
        restarted = False
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        z = a_new + ((t - 1.0) / t_new) * (a_new - a)
        a, t, obj_prev = a_new, t_new, obj
        res = np.abs(a - project_feasible(a - (Q @ a - 1.0) / L, y, C)).max()
        if it % 50 == 0 and res < 1e-5 * max(1.0, a.max()):
            cand = _polish(Q, y, C, a, 1e-9)
            if cand is not None:
                a = cand
                break
        if res <= stationarity * max(1.0, a.max()):
            break
    else:
        raise OracleError(f"no stationarity after {max_iter} iterations")
    G = Q @ a - 1.0
    return DualSolution(a, _objective(a, G), _gap(G, a, y, C)[0], it, "converged", G)
