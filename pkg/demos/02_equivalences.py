"""Special cases that collapse onto familiar machines.

* With the memory switched off (all influences zero) the soft model is the
  ordinary soft-margin SVM.
* With identity influence the hard model's dual is the L2-slack SVM dual.
* The SVM with an added rbf memorization kernel is the soft model whose
  influence matrix is a Cholesky factor of that kernel's Gram matrix.

Run:  python3 demos/02_equivalences.py
"""

# %%
import numpy as np

from genmem import influence as infl
from genmem import models as M
from genmem import qp
from genmem.dataset import Dataset
from genmem.kernel import KernelSpec, gram

rng = np.random.default_rng(11)
X = rng.normal(size=(14, 2))
y = np.where(X[:, 0] * X[:, 1] > 0, 1, -1)
ds = Dataset(X, y, "quadrants")
Xq = rng.normal(size=(5, 2))
rbf = KernelSpec("rbf", 0.5)

# %%
soft_zero = M.train(M.sgmm(rbf, infl.InfluenceSpec("zero"), 1.0, 2.0, tol=1e-10), ds)
svm = M.train(M.svm(rbf, 2.0, tol=1e-10), ds)
print("zero memory vs svm, max decision gap:",
      np.abs(M.decision_function(soft_zero, Xq) - M.decision_function(svm, Xq)).max())

# %%
lam = 0.5
hard_id = M.train(M.hgmm(rbf, infl.InfluenceSpec("identity"), lam, tol=1e-10), ds)
Q = (y[:, None] * gram(rbf, X) * y[None, :]) + np.eye(ds.m) / lam
ref = qp.oracle_solve(qp.DualProblem(Q, y, upper=1e8, tol=1e-10))
print("identity memory vs L2-slack dual, max alpha gap:", np.abs(hard_id.alpha - ref.alpha).max())

# %%
svmm = M.svm_m(rbf, memor_sigma=32.0, tau=0.25, C=4.0, tol=1e-10)
twin = M.sgmm_equivalent_of_svm_m(svmm)
print(f"svm_m(tau={svmm.tau}) <-> sgmm(lambda={twin.lam}, influence={twin.influence.kind})")
a, b = M.train(svmm, ds), M.train(twin, ds)
print("  max alpha gap:", np.abs(a.alpha - b.alpha).max())
print("  max held-out decision gap:", np.abs(M.decision_function(a, Xq) - M.decision_function(b, Xq)).max())
