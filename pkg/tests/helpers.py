"""Random instance generators shared by the unit and acceptance tests."""

import numpy as np

from genmem import influence as infl
from genmem import models as M
from genmem.dataset import Dataset
from genmem.kernel import KernelSpec, gram, sq_distances


def labels(rng, m):
    """Random +-1 labels with both classes present."""
    y = rng.choice([-1.0, 1.0], size=m)
    y[:2] = [1.0, -1.0]
    rng.shuffle(y)
    return y


def random_kernel(rng):
    if rng.random() < 0.5:
        return KernelSpec("linear")
    return KernelSpec("rbf", float(2.0 ** rng.integers(-3, 3)))


def random_influence(rng):
    kind = rng.choice(["rbf", "ball", "triangular", "identity"])
    param = {"rbf": 2.0 ** rng.integers(-2, 3), "ball": 0.5, "triangular": 1.0, "identity": None}[kind]
    return infl.make(str(kind), param)


def random_dual(rng, m_max=12):
    """(Q, y, C) from random kernel and influence grams; Q is PSD by construction.

    C = 1e8 stands in for an unbounded dual, which is only well posed when Q
    is nonsingular; such draws are redrawn until Q has condition below 1e6.
    """
    C = float(rng.choice([1.0, 10.0, 1e8]))
    while True:
        m = int(rng.integers(2, m_max + 1))
        n = int(rng.integers(1, 4))
        X = rng.normal(size=(m, n))
        y = labels(rng, m)
        K = gram(random_kernel(rng), X)
        spec = random_influence(rng)
        D = infl.influence_matrix(spec, infl.build_context(spec, X))
        Q = M.assemble_q("sgmm", K, y, D, lam=float(2.0 ** rng.integers(-2, 3)))
        w = np.linalg.eigvalsh(Q)
        if C < 1e8 or w[0] > 1e-6 * w[-1]:
            return Q, y, C


def spread_points(rng, m, n):
    """Distinct points in [-1, 1]^n and an rbf width that keeps Delta well conditioned.

    The width is at least 1/d_min^2, so neighbouring influences stay below
    exp(-1) and the influence matrix is safely nonsingular.
    """
    X = rng.uniform(-1.0, 1.0, size=(m, n))
    d2 = sq_distances(X, X)
    np.fill_diagonal(d2, np.inf)
    sigma = max(float(2.0 ** rng.integers(-2, 4)), 1.0 / float(d2.min()))
    return X, sigma


def memorizable_instance(rng):
    m = int(rng.integers(4, 61))
    n = int(rng.integers(1, 6))
    X, sigma = spread_points(rng, m, n)
    ds = Dataset(X, labels(rng, m), "random")
    lam = float(2.0 ** rng.integers(-3, 4))
    return ds, M.hgmm(KernelSpec("linear"), infl.InfluenceSpec("rbf", sigma=sigma), lam)


def blobs(rng, per_class, n=2, shift=1.5, scale=0.6):
    X = np.vstack([rng.normal(shift, scale, (per_class, n)), rng.normal(-shift, scale, (per_class, n))])
    y = np.r_[np.ones(per_class), -np.ones(per_class)]
    return Dataset(X, y, "blobs")
