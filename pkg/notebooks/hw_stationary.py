# ---
# jupytext:
#   formats: py:percent
# ---

# %% [markdown]
# # Atoms of the stationary measure
#
# Lebesgue measure transported by a random walk in a Beta(2a eps, 2a eps) space-time environment
# concentrates into atoms. We compare the count of atoms heavier than u per unit length with two
# candidate laws:
# - the E1-type curve E1(u/a)/a;
# - the curve 2a E1(2a u), whose second moment matches the exact pair computation.

# %%
from wns.hw import stationary_atoms

r = stationary_atoms(a=1.0, eps=0.04, t_burn=4.0, width=100, reps=2, seed=3)

# %%
for row in r.rows():
    print({k: round(v, 4) for k, v in row.items()})
print("mass per length", r.mass_per_length.mean)
print("second moment", r.second_moment.mean, "exact", r.second_moment_exact)
