"""Per-region regression models: epsilon-SVR (SMO dual solver) and OLS.

Both learners standardize their inputs internally.  For the SVR the target
is standardized too, so ``epsilon`` is measured in target standard
deviations, not in the target's physical units.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numba
import numpy as np

from .clustering import Scaler, fit_scaler
from .errors import (
    ClimRegionError,
    DimensionMismatch,
    EmptyGrid,
    NoConvergence,
    NonFiniteInput,
    SingularSystem,
    TooFewSamples,
)
from .folds import make_folds

__all__ = [
    "KernelSpec", "SvrModel", "LinearModel", "CvReport", "make_folds",
    "kernel_matrix", "solve_svr_dual", "svr_dual_objective", "svr_train",
    "svr_predict", "ols_fit", "ols_predict", "cv_rmse", "grid_search",
    "default_svr_grid", "rmse",
]

_TAU = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in ("rbf", "linear"):
            raise ValueError(f"unsupported kernel {self.kind!r}")
        if self.kind == "rbf" and self.gamma is not None and not self.gamma > 0:
            raise ValueError("rbf gamma must be > 0")

    def resolved(self, d: int) -> "KernelSpec":
        if self.kind == "rbf" and self.gamma is None:
            return KernelSpec("rbf", 1.0 / d)
        return self


def kernel_matrix(a, b, kernel: KernelSpec) -> np.ndarray:
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    if kernel.kind == "linear":
        return a @ b.T
    d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2)
    return np.exp(-kernel.gamma * d2)


# --- SMO -------------------------------------------------------------------

@dataclass(frozen=True)
class DualSolution:
    beta: np.ndarray
    bias: float
    n_iter: int
    max_violation: float
    converged: bool


def svr_dual_objective(K, z, beta, epsilon) -> float:
    """``-1/2 b'Kb - epsilon*sum|b| + z'b``, the quantity SMO maximises."""
    beta = np.asarray(beta, dtype=float)
    return float(-0.5 * beta @ K @ beta - epsilon * np.abs(beta).sum() + z @ beta)


def solve_svr_dual(K, z, C: float, epsilon: float, tol: float = 1e-3,
                   max_iter: int | None = None) -> DualSolution:
    """Solve the epsilon-SVR dual for a precomputed kernel matrix.

    Uses the split form with ``2n`` variables (``alpha`` and ``alpha*``)
    in ``[0, C]`` and one equality constraint.  Each iteration takes the
    maximal KKT violator ``i``, pairs it with the violator ``j`` giving the
    largest second-order objective gain, and solves the pair analytically.
    The loop stops when the KKT gap ``m - M`` is at most ``tol``.
    ``beta = alpha - alpha*``.
    """
    K = np.ascontiguousarray(K, dtype=float)
    z = np.ascontiguousarray(z, dtype=float)
    n = z.size
    if max_iter is None:
        max_iter = max(1_000_000, 200 * n)
    y = np.concatenate([np.ones(n), -np.ones(n)])
    a = np.zeros(2 * n)
    G = np.concatenate([epsilon - z, epsilon + z])
    it, gap = _smo_loop(K, y, a, G, float(C), float(tol), int(max_iter))
    converged = gap <= tol
    bias = -_rho(a, G, y, C)
    beta = a[:n] - a[n:]
    return DualSolution(beta=beta, bias=bias, n_iter=int(it), max_violation=max(float(gap), 0.0),
                        converged=bool(converged))


@numba.njit(cache=True)
def _smo_loop(K, y, a, G, C, tol, max_iter):  # pragma: no cover - compiled
    """Pairwise SMO updates of ``a`` and gradient ``G`` in place.

    Returns ``(iterations, final KKT gap)``.
    """
    m = a.size
    n = m // 2
    it = 0
    while True:
        # i: maximal violator in I_up; gap = m(a) - M(a)
        g_max = -np.inf
        i = -1
        g_min = np.inf
        for t in range(m):
            v = -y[t] * G[t]
            if (y[t] > 0 and a[t] < C) or (y[t] < 0 and a[t] > 0):
                if v >= g_max:
                    g_max = v
                    i = t
            if (y[t] > 0 and a[t] > 0) or (y[t] < 0 and a[t] < C):
                if v < g_min:
                    g_min = v
        if i < 0 or g_min == np.inf:
            return it, 0.0
        gap = g_max - g_min
        if gap <= tol or it >= max_iter:
            return it, gap
        it += 1

        ki = i % n
        j = -1
        best = -np.inf
        for t in range(m):
            if (y[t] > 0 and a[t] > 0) or (y[t] < 0 and a[t] < C):
                gd = g_max + y[t] * G[t]
                if gd > 0:
                    kt = t % n
                    quad = K[ki, ki] + K[kt, kt] - 2.0 * K[ki, kt]
                    if quad <= 0:
                        quad = _TAU
                    gain = gd * gd / quad
                    if gain > best:
                        best = gain
                        j = t
        kj = j % n
        q_ij = y[i] * y[j] * K[ki, kj]
        old_ai = a[i]
        old_aj = a[j]
        if y[i] != y[j]:
            quad = K[ki, ki] + K[kj, kj] + 2.0 * q_ij
            if quad <= 0:
                quad = _TAU
            delta = (-G[i] - G[j]) / quad
            diff = a[i] - a[j]
            a[i] += delta
            a[j] += delta
            if diff > 0:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = diff
            elif a[i] < 0:
                a[i] = 0.0
                a[j] = -diff
            if diff > 0:
                if a[i] > C:
                    a[i] = C
                    a[j] = C - diff
            elif a[j] > C:
                a[j] = C
                a[i] = C + diff
        else:
            quad = K[ki, ki] + K[kj, kj] - 2.0 * q_ij
            if quad <= 0:
                quad = _TAU
            delta = (G[i] - G[j]) / quad
            total = a[i] + a[j]
            a[i] -= delta
            a[j] += delta
            if total > C:
                if a[i] > C:
                    a[i] = C
                    a[j] = total - C
            elif a[j] < 0:
                a[j] = 0.0
                a[i] = total
            if total > C:
                if a[j] > C:
                    a[j] = C
                    a[i] = total - C
            elif a[i] < 0:
                a[i] = 0.0
                a[j] = total
        da_i = a[i] - old_ai
        da_j = a[j] - old_aj
        for t in range(m):
            kt = t % n
            G[t] += y[t] * (y[i] * K[ki, kt] * da_i + y[j] * K[kj, kt] * da_j)


def _rho(a, G, y, C) -> float:
    yg = y * G
    at_upper = a >= C
    at_lower = a <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        return float(yg[free].mean())
    ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = yg[ub_mask].min() if ub_mask.any() else math.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -math.inf
    return float((ub + lb) / 2.0)


@dataclass(frozen=True, eq=False)
class SvrModel:
    """Trained epsilon-SVR; support vectors are stored standardized."""

    kernel: KernelSpec
    C: float
    epsilon: float
    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    feature_scaler: Scaler
    target_scaler: Scaler
    converged: bool = True
    n_iter: int = 0
    max_violation: float = 0.0

    @property
    def n_features(self) -> int:
        return self.feature_scaler.mean.size

    def decision(self, X) -> np.ndarray:
        """Kernel expansion in standardized target units."""
        X = _check_dim(X, self.n_features)
        if self.dual_coefs.size == 0:
            return np.full(X.shape[0], self.bias)
        Z = self.feature_scaler.transform(X)
        return kernel_matrix(Z, self.support_vectors, self.kernel) @ self.dual_coefs + self.bias

    def predict(self, X) -> np.ndarray:
        return self.target_scaler.inverse(self.decision(X))

    def to_dict(self) -> dict:
        return {
            "kind": "svr",
            "kernel": {"kind": self.kernel.kind, "gamma": self.kernel.gamma},
            "C": self.C,
            "epsilon": self.epsilon,
            "support_vectors": self.support_vectors.tolist(),
            "dual_coefs": self.dual_coefs.tolist(),
            "bias": self.bias,
            "feature_scaler": self.feature_scaler.to_dict(),
            "target_scaler": self.target_scaler.to_dict(),
            "converged": self.converged,
            "n_iter": self.n_iter,
            "max_violation": self.max_violation,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SvrModel":
        d = len(doc["feature_scaler"]["mean"])
        return cls(
            kernel=KernelSpec(**doc["kernel"]),
            C=float(doc["C"]),
            epsilon=float(doc["epsilon"]),
            support_vectors=np.asarray(doc["support_vectors"], dtype=float).reshape(-1, d),
            dual_coefs=np.asarray(doc["dual_coefs"], dtype=float),
            bias=float(doc["bias"]),
            feature_scaler=Scaler.from_dict(doc["feature_scaler"]),
            target_scaler=Scaler.from_dict(doc["target_scaler"]),
            converged=bool(doc.get("converged", True)),
            n_iter=int(doc.get("n_iter", 0)),
            max_violation=float(doc.get("max_violation", 0.0)),
        )


def _check_inputs(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.size:
        raise DimensionMismatch(f"{X.shape[0]} feature rows vs {y.size} targets")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NonFiniteInput("features and targets must be finite")
    return X, y


def _check_dim(X, d) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :] if X.size == d else X[:, None]
    if X.shape[1] != d:
        raise DimensionMismatch(f"model expects {d} features, got {X.shape[1]}")
    return X


def svr_train(X, y, C: float = 10.0, epsilon: float = 0.1, kernel: KernelSpec | str = "rbf",
              gamma: float | None = None, kkt_tol: float = 1e-3,
              max_iter: int | None = None, seed: int = 0) -> SvrModel:
    """Fit an epsilon-SVR.

    ``gamma`` overrides the kernel's width; the RBF default is ``1/d`` in
    standardized feature units.  ``seed`` is accepted for interface symmetry
    with the other trainers; SMO itself is deterministic.  Stopping on
    ``max_iter`` warns with :class:`NoConvergence` and returns the last
    iterate with ``converged=False``.
    """
    X, y = _check_inputs(X, y)
    if y.size < 2:
        raise TooFewSamples("SVR needs at least 2 samples")
    if not C > 0 or epsilon < 0:
        raise ValueError("need C > 0 and epsilon >= 0")
    if isinstance(kernel, str):
        kernel = KernelSpec(kernel, gamma)
    elif gamma is not None:
        kernel = KernelSpec(kernel.kind, gamma)
    kernel = kernel.resolved(X.shape[1])

    fs = fit_scaler(X)
    ts = fit_scaler(y[:, None])
    Z = fs.transform(X)
    t = ts.transform(y[:, None])[:, 0]
    sol = solve_svr_dual(kernel_matrix(Z, Z, kernel), t, C, epsilon, kkt_tol, max_iter)
    if not sol.converged:
        warnings.warn(
            f"SMO stopped after {sol.n_iter} iterations with KKT gap {sol.max_violation:.3g}",
            NoConvergence, stacklevel=2)
    keep = sol.beta != 0
    return SvrModel(
        kernel=kernel, C=float(C), epsilon=float(epsilon),
        support_vectors=Z[keep], dual_coefs=sol.beta[keep], bias=sol.bias,
        feature_scaler=fs, target_scaler=ts, converged=sol.converged,
        n_iter=sol.n_iter, max_violation=sol.max_violation,
    )


def svr_predict(model: SvrModel, x) -> float | np.ndarray:
    """Prediction for one feature vector (float) or a matrix of rows."""
    x = np.asarray(x, dtype=float)
    out = model.predict(x)
    return float(out[0]) if x.ndim == 1 else out


# --- OLS -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearModel:
    """Affine model in standardized features: ``y = z . coefficients + intercept``.

    ``raw_coefficients`` / ``raw_intercept`` give the same map in the
    original feature units.
    """

    coefficients: np.ndarray
    intercept: float
    feature_scaler: Scaler

    @property
    def n_features(self) -> int:
        return self.coefficients.size

    @property
    def raw_coefficients(self) -> np.ndarray:
        return self.coefficients / self.feature_scaler.scale

    @property
    def raw_intercept(self) -> float:
        return float(self.intercept - self.raw_coefficients @ self.feature_scaler.mean)

    def predict(self, X) -> np.ndarray:
        Z = self.feature_scaler.transform(_check_dim(X, self.n_features))
        return Z @ self.coefficients + self.intercept

    def to_dict(self) -> dict:
        return {
            "kind": "ols",
            "coefficients": self.coefficients.tolist(),
            "intercept": self.intercept,
            "feature_scaler": self.feature_scaler.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LinearModel":
        return cls(
            coefficients=np.asarray(doc["coefficients"], dtype=float),
            intercept=float(doc["intercept"]),
            feature_scaler=Scaler.from_dict(doc["feature_scaler"]),
        )


def ols_fit(X, y, ridge_jitter: float = 1e-10) -> LinearModel:
    """Least squares via the normal equations of standardized features.

    ``ridge_jitter * I`` is added to ``Z'Z`` so that near-collinear columns
    give a slightly shrunk fit instead of an exploding one.
    """
    X, y = _check_inputs(X, y)
    n, d = X.shape
    if n < d + 1:
        raise TooFewSamples(f"OLS with {d} features needs at least {d + 1} samples, got {n}")
    fs = fit_scaler(X)
    Z = fs.transform(X)
    y_mean = float(y.mean())
    A = Z.T @ Z + ridge_jitter * np.eye(d)
    rhs = Z.T @ (y - y_mean)
    try:
        w = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        raise SingularSystem("normal equations are singular") from None
    if not np.all(np.isfinite(w)) or np.linalg.cond(A) > 1e15:
        raise SingularSystem("normal equations are numerically singular")
    return LinearModel(coefficients=w, intercept=y_mean, feature_scaler=fs)


def ols_predict(model: LinearModel, x) -> float | np.ndarray:
    x = np.asarray(x, dtype=float)
    out = model.predict(x)
    return float(out[0]) if x.ndim == 1 else out


# --- cross-validation ------------------------------------------------------

def rmse(pred, actual) -> float:
    d = np.asarray(pred, dtype=float) - np.asarray(actual, dtype=float)
    return float(math.sqrt(np.mean(d * d)))


@dataclass(frozen=True)
class CvReport:
    per_fold_rmse: tuple[float, ...]
    mean_rmse: float
    std_rmse: float
    chosen_hyperparams: dict = field(default_factory=dict)


Trainer = Callable[[np.ndarray, np.ndarray], object]


def cv_rmse(X, y, trainer: Trainer, folds: int = 10, seed: int = 0,
            hyperparams: Mapping | None = None) -> CvReport:
    """K-fold RMSE of ``trainer``.

    ``trainer(X_train, y_train)`` must return an object with
    ``predict(X)``.  An error raised inside a fold propagates with a
    ``fold`` attribute naming it.
    """
    X, y = _check_inputs(X, y)
    scores = []
    for f, test_idx in enumerate(make_folds(y.size, folds, seed)):
        train = np.ones(y.size, dtype=bool)
        train[test_idx] = False
        try:
            model = trainer(X[train], y[train])
            scores.append(rmse(model.predict(X[test_idx]), y[test_idx]))
        except ClimRegionError as exc:
            exc.fold = f
            raise
    scores = tuple(scores)
    return CvReport(per_fold_rmse=scores, mean_rmse=float(np.mean(scores)),
                    std_rmse=float(np.std(scores)), chosen_hyperparams=dict(hyperparams or {}))


def default_svr_grid(d: int) -> list[dict]:
    """C in {1, 10, 100} x epsilon in {0.01, 0.1, 0.5} x gamma in {0.1, 1, 10}/d."""
    return [
        {"C": C, "epsilon": eps, "gamma": g / d}
        for C, eps, g in itertools.product((1.0, 10.0, 100.0), (0.01, 0.1, 0.5), (0.1, 1.0, 10.0))
    ]


def expand_grid(param_grid) -> list[dict]:
    """A list of dicts is used as is; a dict of lists is expanded in key order."""
    if isinstance(param_grid, Mapping):
        keys = list(param_grid)
        return [dict(zip(keys, vals)) for vals in itertools.product(*(param_grid[k] for k in keys))]
    return [dict(p) for p in param_grid]


def grid_search(X, y, param_grid=None, folds: int = 10, seed: int = 0,
                train: Callable = svr_train) -> tuple[dict, CvReport]:
    """Exhaustive CV over ``param_grid``; lowest mean RMSE wins, ties to
    the earliest grid point.  All grid points share one fold split."""
    X, y = _check_inputs(X, y)
    grid = default_svr_grid(X.shape[1]) if param_grid is None else expand_grid(param_grid)
    if not grid:
        raise EmptyGrid("parameter grid is empty")
    best = None
    for params in grid:
        report = cv_rmse(X, y, lambda Xt, yt, p=params: train(Xt, yt, **p),
                         folds=folds, seed=seed, hyperparams=params)
        if best is None or report.mean_rmse < best[1].mean_rmse:
            best = (params, report)
    return best


def model_from_dict(doc: dict):
    if doc["kind"] == "svr":
        return SvrModel.from_dict(doc)
    return LinearModel.from_dict(doc)
