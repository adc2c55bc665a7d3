# ---
# jupytext:
#   formats: py:percent
# ---

# %% [markdown]
# # True self-avoiding walk
#
# The walker steps across the adjacent edge with the smaller local time and breaks ties with a
# fair coin. The added local-time area equals the number of steps, and |X_n| grows like n^(2/3).

# %%
import numpy as np

from wns.tsaw import profile_check, run_tsaw, scaling_exponent

r = run_tsaw(10_000, seed=5)
print("area", r.state.area(), "position", r.state.position, profile_check(r.state).ok)
print("range", int(r.trajectory.min()), int(r.trajectory.max()))

# %%
t = scaling_exponent(2**16, 40, seed=5)
s = scaling_exponent(2**16, 40, seed=5, walk="srw")
print("tsaw slope", round(t.slope, 3), "srw slope", round(s.slope, 3))
