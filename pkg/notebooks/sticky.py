# ---
# jupytext:
#   formats: py:percent
# ---

# %% [markdown]
# # Sticky left-right motion
#
# The left-right SDE is solved by reflecting the difference with a Skorohod map and
# slowing the clock while the two motions are together. On the lattice, the same
# behaviour comes from walkers that share a near-0/1 environment.

# %%
import numpy as np

from wns.mu import FiniteMeasure
from wns.sticky import check_covariation, max_slope, npoint_sticky, solve_left_right

# a coarse dt can miss the short excursions below zero, so keep it small
sol = solve_left_right(0.0, 0.0, T=1.0, dt=1e-3, seed=2)
L, R = sol
print("time together", round(sol.time_together, 4), "final gap", float(R.x[-1] - L.x[-1]))

# %%
ens = npoint_sticky(2, 0.0, FiniteMeasure.delta(0.5), T=0.5, eps=0.05, dt_report=0.01,
                    reps=400, seed=2)
cov = check_covariation(ens)
for row in cov.rows():
    print(row)

# %%
s = max_slope(ens, target=2.0)
print(s)
