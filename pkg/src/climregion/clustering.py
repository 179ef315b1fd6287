"""Diagonal-covariance Gaussian mixtures fitted by EM, and a k-means baseline.

All fitting happens on standardized inputs; the fitted models carry the
:class:`Scaler` so they can be applied to raw climatology vectors.  The
E-step is evaluated in log space (log-sum-exp), so responsibilities stay
finite even for points tens of standard deviations from every component.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateComponent, TooFewPoints
from .folds import derive_seed, make_folds

LOG_2PI = math.log(2.0 * math.pi)
WEIGHT_UNDERFLOW = 1e-12


# --- standardization -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Scaler:
    """Per-dimension affine map ``z = (x - mean) / scale``.

    ``scale`` is the population standard deviation (``ddof=0``); constant
    dimensions get scale 1 and are only centred.
    """

    mean: np.ndarray
    scale: np.ndarray

    def transform(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.scale

    def inverse(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.scale + self.mean

    @property
    def log_det(self) -> float:
        """Log-Jacobian of the inverse map, ``sum(log(scale))``."""
        return float(np.sum(np.log(self.scale)))

    @classmethod
    def identity(cls, d: int) -> "Scaler":
        return cls(np.zeros(d), np.ones(d))

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "Scaler":
        return cls(np.asarray(doc["mean"], dtype=float), np.asarray(doc["scale"], dtype=float))


def fit_scaler(points) -> Scaler:
    x = np.atleast_2d(np.asarray(points, dtype=float))
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return Scaler(mean, scale)


def standardize(points) -> tuple[np.ndarray, Scaler]:
    """Return ``(z, scaler)`` with every non-constant column of ``z`` at
    mean 0 and population standard deviation 1."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if x.shape[0] < 2:
        raise TooFewPoints(f"standardization needs at least 2 points, got {x.shape[0]}")
    scaler = fit_scaler(x)
    return scaler.transform(x), scaler


# --- model types -----------------------------------------------------------

@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    variance: np.ndarray


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """Fitted mixture, parameters in standardized coordinates.

    ``history`` holds the log-likelihood after every EM iteration of the
    winning restart (first entry: the initialisation).
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    scaler: Scaler
    final_log_likelihood: float = float("nan")
    history: tuple = field(default=(), repr=False)

    @property
    def k(self) -> int:
        return self.weights.size

    @property
    def components(self) -> list[GaussianComponent]:
        return [
            GaussianComponent(float(w), m.copy(), v.copy())
            for w, m, v in zip(self.weights, self.means, self.variances)
        ]

    def to_dict(self) -> dict:
        return {
            "kind": "gaussian_mixture",
            "k": self.k,
            "scaler": self.scaler.to_dict(),
            "components": [
                {"weight": float(w), "mean": m.tolist(), "variance": v.tolist()}
                for w, m, v in zip(self.weights, self.means, self.variances)
            ],
            "final_log_likelihood": float(self.final_log_likelihood),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MixtureModel":
        comps = doc["components"]
        return cls(
            weights=np.array([c["weight"] for c in comps], dtype=float),
            means=np.array([c["mean"] for c in comps], dtype=float),
            variances=np.array([c["variance"] for c in comps], dtype=float),
            scaler=Scaler.from_dict(doc["scaler"]),
            final_log_likelihood=float(doc["final_log_likelihood"]),
        )


@dataclass(frozen=True, eq=False)
class KMeansModel:
    centroids: np.ndarray
    scaler: Scaler
    inertia: float
    history: tuple = field(default=(), repr=False)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def to_dict(self) -> dict:
        return {
            "kind": "kmeans",
            "k": self.k,
            "scaler": self.scaler.to_dict(),
            "centroids": self.centroids.tolist(),
            "inertia": float(self.inertia),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "KMeansModel":
        return cls(
            centroids=np.asarray(doc["centroids"], dtype=float),
            scaler=Scaler.from_dict(doc["scaler"]),
            inertia=float(doc["inertia"]),
        )


@dataclass(frozen=True, eq=False)
class RegionAssignment:
    """Hard partition: ``labels[c]`` is the region of cell ``c``."""

    labels: np.ndarray
    region_count: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= self.region_count):
            raise ValueError("region index out of range")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.region_count)

    def as_dict(self) -> dict[int, int]:
        return {c: int(r) for c, r in enumerate(self.labels)}

    def compact(self) -> "RegionAssignment":
        """Renumber so that the occupied regions are ``0 .. m-1`` in order."""
        used = np.flatnonzero(self.sizes())
        remap = np.full(self.region_count, -1)
        remap[used] = np.arange(used.size)
        return RegionAssignment(remap[self.labels], int(used.size))


def model_from_dict(doc: dict):
    if doc.get("kind") == "kmeans":
        return KMeansModel.from_dict(doc)
    return MixtureModel.from_dict(doc)


# --- EM core (standardized coordinates) ------------------------------------

def _log_joint(z, weights, means, variances) -> np.ndarray:
    """``log(weight_j) + log N(z_i | mean_j, diag(variance_j))``, shape (n, k)."""
    d = z.shape[1]
    diff2 = (z[:, None, :] - means[None, :, :]) ** 2
    maha = np.sum(diff2 / variances[None, :, :], axis=2)
    log_norm = -0.5 * (d * LOG_2PI + np.sum(np.log(variances), axis=1))
    with np.errstate(divide="ignore"):
        log_w = np.log(weights)
    return log_w[None, :] + log_norm[None, :] - 0.5 * maha


def _responsibilities(log_joint) -> tuple[np.ndarray, np.ndarray]:
    lse = logsumexp(log_joint, axis=1)
    resp = np.exp(log_joint - lse[:, None])
    resp /= resp.sum(axis=1, keepdims=True)
    return resp, lse


def e_step(points, model: MixtureModel) -> np.ndarray:
    """Posterior component probabilities, one row per point."""
    z = model.scaler.transform(np.atleast_2d(points))
    resp, _ = _responsibilities(_log_joint(z, model.weights, model.means, model.variances))
    return resp


def m_step(points, responsibilities, variance_floor: float = 1e-6):
    """Maximise the expected complete-data log-likelihood.

    Operates in whatever coordinates ``points`` are given in.  Returns
    ``(weights, means, variances)``.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    resp = np.asarray(responsibilities, dtype=float)
    n = x.shape[0]
    nk = resp.sum(axis=0)
    if np.any(nk / n < WEIGHT_UNDERFLOW):
        bad = np.flatnonzero(nk / n < WEIGHT_UNDERFLOW).tolist()
        raise DegenerateComponent(f"components {bad} lost all responsibility")
    weights = nk / nk.sum()
    means = (resp.T @ x) / nk[:, None]
    diff2 = (x[:, None, :] - means[None, :, :]) ** 2
    variances = np.einsum("nk,nkd->kd", resp, diff2) / nk[:, None]
    variances = np.maximum(variances, variance_floor)
    return weights, means, variances


def log_likelihood(points, model: MixtureModel) -> float:
    """Total log density of raw ``points`` under ``model``.

    Includes the Jacobian of the standardizing map, so the value is a
    proper density in the original units.
    """
    z = model.scaler.transform(np.atleast_2d(points))
    lj = _log_joint(z, model.weights, model.means, model.variances)
    return float(np.sum(logsumexp(lj, axis=1)) - z.shape[0] * model.scaler.log_det)


def run_em(z, weights, means, variances, max_iter=200, rel_tol=1e-7, variance_floor=1e-6):
    """Iterate EM from the given start on standardized ``z``.

    Stops when the relative log-likelihood gain drops below ``rel_tol`` or
    after ``max_iter`` M-steps.  Returns ``(weights, means, variances,
    history)``; ``history[-1]`` is the log-likelihood of the returned
    parameters (standardized coordinates).
    """
    lj = _log_joint(z, weights, means, variances)
    resp, lse = _responsibilities(lj)
    ll = float(lse.sum())
    history = [ll]
    for _ in range(max_iter):
        weights, means, variances = m_step(z, resp, variance_floor)
        lj = _log_joint(z, weights, means, variances)
        resp, lse = _responsibilities(lj)
        new_ll = float(lse.sum())
        history.append(new_ll)
        converged = new_ll - ll < rel_tol * abs(ll)
        ll = new_ll
        if converged:
            break
    return weights, means, variances, history


def _init_from_kmeans(z, k, rng, variance_floor):
    centroids, labels, _, _ = _lloyd(z, _kmeans_pp(z, k, rng), max_iter=300, tol=1e-9)
    n, d = z.shape
    global_var = z.var(axis=0)
    weights = np.bincount(labels, minlength=k) / n
    variances = np.empty((k, d))
    for j in range(k):
        members = z[labels == j]
        variances[j] = members.var(axis=0) if members.shape[0] >= 2 else global_var
    return weights, centroids, np.maximum(variances, variance_floor)


def em_fit(
    points,
    k: int,
    max_iter: int = 200,
    rel_tol: float = 1e-7,
    variance_floor: float = 1e-6,
    seed: int = 0,
    n_init: int = 5,
) -> MixtureModel:
    """Fit a ``k``-component diagonal Gaussian mixture.

    Each of ``n_init`` restarts is initialised from a k-means++/Lloyd run
    with its own derived seed; the restart with the highest final
    log-likelihood wins.  Restarts whose components collapse are dropped;
    if all collapse, :class:`DegenerateComponent` is raised.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if k < 1:
        raise ValueError("k must be >= 1")
    if x.shape[0] < max(k, 2):
        raise TooFewPoints(f"{x.shape[0]} points cannot support {k} components")
    z, scaler = standardize(x)

    best = None
    last_error = None
    for r in range(n_init):
        rng = np.random.default_rng(derive_seed(seed, r))
        try:
            init = _init_from_kmeans(z, k, rng, variance_floor)
            w, m, v, hist = run_em(z, *init, max_iter=max_iter, rel_tol=rel_tol,
                                   variance_floor=variance_floor)
        except DegenerateComponent as exc:
            last_error = exc
            continue
        if best is None or hist[-1] > best[3][-1]:
            best = (w, m, v, hist)
    if best is None:
        raise DegenerateComponent(f"every restart degenerated: {last_error}")
    w, m, v, hist = best
    jac = x.shape[0] * scaler.log_det
    return MixtureModel(
        weights=w, means=m, variances=v, scaler=scaler,
        final_log_likelihood=hist[-1] - jac,
        history=tuple(h - jac for h in hist),
    )


def assign_hard(points, model: MixtureModel) -> RegionAssignment:
    """Most responsible component per point; ties go to the lowest index."""
    resp = e_step(points, model)
    return RegionAssignment(np.argmax(resp, axis=1), model.k)


def select_k_cv(
    points,
    k_min: int = 1,
    k_max: int = 12,
    folds: int = 10,
    seed: int = 0,
    abs_improve_tol: float = 0.0,
    **em_options,
) -> int:
    """Choose the component count by cross-validated log-likelihood.

    Starting at ``k_min``, ``k`` grows while the mean held-out
    log-likelihood over ``folds`` folds improves by more than
    ``abs_improve_tol``; the last improving ``k`` is returned.  A ``k`` that
    cannot be fitted on some training split ends the search.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    n = x.shape[0]
    if n < folds:
        raise TooFewPoints(f"{n} points cannot fill {folds} folds")
    parts = make_folds(n, folds, seed)
    cv_scores = cv_log_likelihoods(x, range(k_min, k_max + 1), parts, seed, **em_options)
    best_k, best_score = k_min, cv_scores.get(k_min, -np.inf)
    for k in range(k_min + 1, k_max + 1):
        score = cv_scores.get(k)
        if score is None or not score > best_score + abs_improve_tol:
            break
        best_k, best_score = k, score
    return best_k


def cv_log_likelihoods(x, ks, parts, seed, stop_early=True, **em_options) -> dict[int, float]:
    """Mean held-out log-likelihood per ``k`` over the given folds.

    With ``stop_early`` the scan ends at the first ``k`` that does not
    improve on the best so far or cannot be fitted.
    """
    n = x.shape[0]
    scores: dict[int, float] = {}
    best = -np.inf
    for k in ks:
        fold_ll = []
        try:
            for f, test_idx in enumerate(parts):
                train = np.ones(n, dtype=bool)
                train[test_idx] = False
                model = em_fit(x[train], k, seed=derive_seed(seed, k, f), **em_options)
                fold_ll.append(log_likelihood(x[test_idx], model))
        except (DegenerateComponent, TooFewPoints):
            break
        score = float(np.mean(fold_ll))
        scores[k] = score
        if stop_early and not score > best:
            break
        best = max(best, score)
    return scores


# --- k-means -----------------------------------------------------------------

def _sq_dist(z, centroids) -> np.ndarray:
    return np.sum((z[:, None, :] - centroids[None, :, :]) ** 2, axis=2)


def _kmeans_pp(z, k, rng) -> np.ndarray:
    n = z.shape[0]
    centers = [z[rng.integers(n)]]
    d2 = np.sum((z - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            i = int(rng.choice(n, p=d2 / total))
        else:
            i = int(rng.integers(n))
        centers.append(z[i])
        d2 = np.minimum(d2, np.sum((z - z[i]) ** 2, axis=1))
    return np.array(centers)


def _update_centroids(z, labels, centroids):
    """Cluster means; an empty cluster takes the point farthest from its
    own centroid (that point is moved into the empty cluster)."""
    k = centroids.shape[0]
    labels = labels.copy()
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        own = np.sum((z - centroids[labels]) ** 2, axis=1)
        movable = counts[labels] > 1
        if not movable.any():
            continue
        own[~movable] = -1.0
        i = int(np.argmax(own))
        counts[labels[i]] -= 1
        labels[i] = j
        counts[j] = 1
        centroids = centroids.copy()
        centroids[j] = z[i]
    new = np.empty_like(centroids)
    for j in range(k):
        new[j] = z[labels == j].mean(axis=0)
    return new, labels


def _lloyd(z, centroids, max_iter=300, tol=1e-9):
    """Lloyd iterations from ``centroids``.

    Stops once assignments no longer change (the usual exit, leaving a
    fixed point) or the relative inertia gain is at most ``tol``.  Returns
    ``(centroids, labels, inertia, history)``.
    """
    labels = np.argmin(_sq_dist(z, centroids), axis=1)
    history = [float(np.min(_sq_dist(z, centroids), axis=1).sum())]
    for _ in range(max_iter):
        centroids, labels = _update_centroids(z, labels, centroids)
        d2 = _sq_dist(z, centroids)
        new_labels = np.argmin(d2, axis=1)
        inertia = float(d2[np.arange(z.shape[0]), new_labels].sum())
        history.append(inertia)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        # plateau stop: labels may still differ from the means' argmin here
        if history[-2] - inertia <= tol * history[-2]:
            break
    return centroids, labels, history[-1], history


def kmeans_fit(
    points,
    k: int,
    max_iter: int = 300,
    tol: float = 1e-9,
    seed: int = 0,
    n_init: int = 10,
) -> KMeansModel:
    """Best-of-``n_init`` k-means (k-means++ seeding, Lloyd iterations)
    on standardized points, ranked by inertia."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if k < 1:
        raise ValueError("k must be >= 1")
    if x.shape[0] < max(k, 2):
        raise TooFewPoints(f"{x.shape[0]} points cannot support {k} clusters")
    z, scaler = standardize(x)
    best = None
    for r in range(n_init):
        rng = np.random.default_rng(derive_seed(seed, r))
        c, _, inertia, hist = _lloyd(z, _kmeans_pp(z, k, rng), max_iter, tol)
        if best is None or inertia < best[1]:
            best = (c, inertia, hist)
    c, inertia, hist = best
    return KMeansModel(centroids=c, scaler=scaler, inertia=inertia, history=tuple(hist))


def kmeans_assign(points, model: KMeansModel) -> RegionAssignment:
    """Nearest centroid in standardized space; ties go to the lowest index."""
    z = model.scaler.transform(np.atleast_2d(points))
    return RegionAssignment(np.argmin(_sq_dist(z, model.centroids), axis=1), model.k)
