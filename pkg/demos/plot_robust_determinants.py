"""
Least squares against MM regression
===================================

With few observations a single wild CAR can drive an OLS coefficient. The MM
estimator starts from a high-breakdown S-estimate and then downweights large
residuals with a bisquare function, so a handful of outliers barely move it.
"""

import numpy as np

from fanstudy import MMConfig, fit_mm, fit_ols

rng = np.random.default_rng(0)
n = 100
x = rng.normal(size=n)
X = np.column_stack([np.ones(n), x])
y = 1.0 + 2.0 * x + rng.normal(0, 0.5, n)
print("clean OLS slope      ", round(fit_ols(X, y).coef[1], 4))

# push a fifth of the rows, all at high x, far below the line
y_bad = y.copy()
y_bad[np.argsort(x)[-20:]] -= 30.0

ols = fit_ols(X, y_bad)
mm = fit_mm(X, y_bad, MMConfig(seed=0))
print("contaminated OLS slope", round(ols.coef[1], 4))
print("contaminated MM slope ", round(mm.coef[1], 4), f"(scale {mm.scale:.3f})")

###############################################################################
# The final weights show which rows the estimator set aside.

w = mm.weights
print("mean weight, outliers:", round(w[np.argsort(x)[-20:]].mean(), 3))
print("mean weight, others:  ", round(np.delete(w, np.argsort(x)[-20:]).mean(), 3))
