"""Training accuracy under label noise.

Draw a balanced training set, flip 0, 10 or 20 percent of its labels, and
grid-search both memorization models on the clean remainder. The hard model
keeps 100% training accuracy on the noisy labels (it memorizes every flip);
the soft model trades some of them away. Test accuracy shows what that
memorization costs or buys.

Run:  python3 demos/03_label_noise.py
"""

# %%
import numpy as np

from genmem import evaluation as E
from genmem.dataset import Dataset

rng = np.random.default_rng(0)
n = 5
X = np.vstack([rng.normal(0.5, 1.0, (150, n)), rng.normal(-0.5, 1.0, (150, n))])
y = np.r_[np.ones(150), -np.ones(150)]
ds = Dataset(X, y, "gauss300")

grid = E.GridSpec(C=(0.25, 1.0, 4.0), lam=(1.0,), sigma=(2.0, 8.0))
grids = {"hgmm": grid.specs("hgmm"), "sgmm": grid.specs("sgmm")}

# %%
rows = E.noise_experiment(grids, ds, fractions=(0.0, 0.10, 0.20), train_size=100, reps=3, seed=0)
print(E.format_table(rows))
