# %% [markdown]
# # How fast does dependence fade?
#
# For a pure Gaussian AR(1) series the chi-square distance between the law of
# X_{i+n} given the past and its marginal is rho^2 / (1 - rho^2) with
# rho = r^n, so it shrinks roughly like r^(2n). The Monte Carlo estimate
# should line up with that.

# %%
from mixrec.diagnostics import dependence_profile
from mixrec.processes import ProcessConfig

r = 0.7
est = dependence_profile(ProcessConfig("ar1_mixture", 10, {"p": 1.0, "r": r}),
                         range(1, 7), mc_size=100_000)

# %%
for lag, chi2, se, _ in est.rows():
    rho = r ** lag
    print(f"lag {lag}: {chi2:.5f} +/- {se:.5f}   exact {rho**2 / (1 - rho**2):.5f}")
print("fitted decay rate:", round(est.rho_hat, 3))
