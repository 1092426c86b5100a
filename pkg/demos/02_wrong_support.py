# %% [markdown]
# # When the grid misses the truth
#
# Data are N(5, 1) but the grid only covers [-3, 3]. The recursion cannot
# put mass at 5, so it heads for the closest mixture in KL, which here is
# a point mass on the boundary at 3. The batch projection agrees.

# %%
from scipy import stats

from mixrec import gaussian, harmonic, pr_fit, uniform_density, uniform_grid
from mixrec.oracle import Quadrature, kl_projection
from mixrec.processes import ThetaLaw, simulate_mean_mixture_ar1

grid = uniform_grid(-3, 3, 200)
k = gaussian(1.0)

# %%
x = simulate_mean_mixture_ar1(ThetaLaw.points([5.0], [1.0]), 0.0, 5000, 0).values
f, _ = pr_fit(x, uniform_density(grid), harmonic(), k)
print("recursion: mass within 0.3 of 3 =", round(f.mass_near(3.0, 0.3), 4))

# %%
proj = kl_projection(lambda v: stats.norm.pdf(v, 5.0), grid, k, Quadrature.trapezoid(-7, 15))
print("projection: mass within 0.2 of 3 =", round(proj.f_tilde.mass_near(3.0, 0.2), 4))
print("KL gap", round(proj.k_tilde, 4), "(a single atom at 3 gives (5-3)^2/2 = 2)")
