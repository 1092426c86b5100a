# %% [markdown]
# # Two atoms, dependent draws
#
# Observations come from a 0.3 / 0.7 mix of N(0,1) and N(2.5,1), but the
# N(0,1) part is an AR(1) series. The recursion still finds the weight 0.3;
# it just gets there more slowly as the autocorrelation grows.

# %%
import numpy as np

from mixrec import gaussian, harmonic, pr_fit, uniform_density
from mixrec.processes import simulate_ar1_mixture
from mixrec.support import discrete_grid, normalize

grid = discrete_grid([0.0, 2.5])
f0 = normalize([0.7, 0.3], grid)   # start on the wrong side

# %%
for r in (0.3, 0.7, 0.99, 0.999):
    finals = []
    for seed in range(10):
        x = simulate_ar1_mixture(0.3, r, 2.5, 5000, seed).values
        f, _ = pr_fit(x, f0, harmonic(), gaussian())
        finals.append(f.masses[0])
    finals = np.array(finals)
    print(f"r={r:<6} mean mass at 0: {finals.mean():.3f}   mean |error|: "
          f"{np.abs(finals - 0.3).mean():.4f}")

# %% [markdown]
# The trace keeps the path of every atom. A quick look at how the single
# seed-0 path for r = 0.99 wanders:

# %%
x = simulate_ar1_mixture(0.3, 0.99, 2.5, 5000, 0).values
_, trace = pr_fit(x, uniform_density(grid), harmonic(), gaussian())
for n in (10, 100, 1000, 5000):
    print(n, round(float(trace.masses[trace.at(n), 0]), 3))
