"""Hard versus soft memorization on a 2-D toy.

Two Gaussian clouds, plus one positive sample planted at the centre of the
negative cloud. The hard model has to classify every training sample
correctly, so it grows a small positive pocket around the planted point.
The soft model pays a hinge penalty instead and gives that point up.

Run:  python3 demos/01_memorize_a_planted_point.py [out_dir]
"""

# %%
import sys

import numpy as np

from genmem import evaluation as E
from genmem import models as M

out_dir = sys.argv[1] if len(sys.argv) > 1 else None
res = E.toy_experiment(seed=7, out_dir=out_dir, steps=61)
ds = res.dataset
print(f"{ds.m} training samples, planted point at {np.round(ds.X[-1], 3)}")

# %%
for name, model in res.models.items():
    g = M.decision_function(model, ds.X)
    print(f"{name}: train accuracy {100 * res.train_accuracy[name]:.2f}%, "
          f"g(planted) = {g[-1]:+.3f}, alpha range [{model.alpha.min():.3g}, {model.alpha.max():.3g}]")

# %%
# The memorized pocket is local: a few steps away from the planted point the
# hard model falls back to the negative side.
hgmm = res.models["hgmm"]
for r in (0.0, 0.25, 0.5, 1.0):
    probe = ds.X[-1] + np.array([r, 0.0])
    print(f"  hgmm g at planted + ({r:.2f}, 0): {M.decision(hgmm, probe):+.3f}")

# %%
# The decision splits into a generalization part (kernel expansion plus bias)
# and a memorization part (sum of y_i c_i delta(x_i, x)).
general, memo = M.decision_parts(hgmm, ds.X[-1:])
print(f"planted point: generalization {general[0]:+.3f}, memorization {memo[0]:+.3f}")
if res.grid_paths:
    print("decision grids:", ", ".join(sorted(res.grid_paths.values())))
