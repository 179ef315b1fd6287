"""Epsilon-SVR with a cross-validated RBF kernel on a noisy sine."""
import numpy as np

from climregion import regressors

rng = np.random.default_rng(0)
x = rng.uniform(0, 2 * np.pi, size=200)
y = np.sin(x) + 0.1 * rng.normal(size=200)

# 27-point grid over C, epsilon and gamma; epsilon is in target-std units
params, report = regressors.grid_search(x[:, None], y, folds=10, seed=0)
print("best:", params, "cv rmse %.4f +- %.4f" % (report.mean_rmse, report.std_rmse))

model = regressors.svr_train(x[:, None], y, **params)
print("support vectors:", model.dual_coefs.size, "of", y.size)
print("converged:", model.converged, "after", model.n_iter, "SMO steps")

xt = np.linspace(0, 2 * np.pi, 9)
for a, b in zip(np.sin(xt), model.predict(xt[:, None])):
    print("%7.3f %7.3f" % (a, b))

# a straight line cannot follow the curve
line = regressors.ols_fit(x[:, None], y)
print("OLS test rmse %.3f, SVR test rmse %.3f" % (
    regressors.rmse(line.predict(xt[:, None]), np.sin(xt)),
    regressors.rmse(model.predict(xt[:, None]), np.sin(xt))))
