"""How loose is the VC-style guarantee?

The confidence term G = (ln(2m/h + 1) - ln(eta/4)) / (m/h) shrinks as the
sample grows relative to the capacity h. With zero empirical risk (what the
hard model always achieves on its training set) the bound is sqrt(2) G.

Run:  python3 demos/04_risk_bound.py
"""

# %%
from genmem import models as M

print("     m      h    G_gap   bound at R_emp=0   bound at R_emp=0.1")
for m in (100, 1000, 10000):
    for h in (10, 100):
        if h >= m:
            continue
        gap = M.generalization_gap(m, h, 0.05)
        print(f"{m:6d} {h:6d} {gap.g_gap:8.4f} {M.risk_bound(0.0, gap, 'small_emp'):18.4f}"
              f" {M.risk_bound(0.1, gap, 'large_emp'):20.4f}")
