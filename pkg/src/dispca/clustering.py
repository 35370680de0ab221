"""k-means machinery, distributed k-means on projected data, and PCR."""

from dataclasses import dataclass, field
import math
from typing import NamedTuple

import numpy as np

from ._random import derive_seed
from .exceptions import ParameterError, RankError
from .linalg import Subspace, as_matrix
from .protocol import COORDINATOR, DisPcaParams, Transcript, dispca, node_id


@dataclass(frozen=True)
class ClusteringSolution:
    centers: np.ndarray
    assignment: np.ndarray
    cost: float
    cost_history: list = field(default_factory=list, repr=False)

    @property
    def k(self):
        return self.centers.shape[0]


@dataclass(frozen=True)
class WeightedPoints:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.weights.shape != (self.points.shape[0],):
            raise ParameterError("need one weight per point")
        if np.any(self.weights <= 0):
            raise ParameterError("weights must be positive")

    @classmethod
    def concat(cls, parts):
        return cls(np.vstack([p.points for p in parts]), np.concatenate([p.weights for p in parts]))


def _sq_dists(p, centers):
    d2 = (np.einsum("ij,ij->i", p, p)[:, None] - 2.0 * p @ centers.T
          + np.einsum("ij,ij->i", centers, centers)[None, :])
    return np.maximum(d2, 0.0)


def assign(p, centers):
    """Nearest center per row (lowest index on ties) and the exact squared distance to it."""
    labels = np.argmin(_sq_dists(p, centers), axis=1)
    diff = p - centers[labels]
    return labels, np.einsum("ij,ij->i", diff, diff)


def kmeans_cost(p, centers):
    """``sum_i min_j ||p_i - c_j||^2``."""
    p = as_matrix(p, "p")
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim != 2 or centers.shape[0] == 0:
        raise ParameterError("centers must be a non-empty k x d matrix")
    if centers.shape[1] != p.shape[1]:
        raise ParameterError(f"centers have {centers.shape[1]} columns, points have {p.shape[1]}")
    return float(np.sum(assign(p, centers)[1]))


def subspace_cost(p, subspaces):
    """Sum over rows of the squared distance to the nearest of several linear subspaces."""
    p = as_matrix(p, "p")
    if not subspaces:
        raise ParameterError("need at least one subspace")
    per_center = []
    for s in subspaces:
        b = s.basis
        resid = p - (p @ b) @ b.T
        per_center.append(np.einsum("ij,ij->i", resid, resid))
    return float(np.sum(np.min(np.vstack(per_center), axis=0)))


def _kmeanspp(p, w, k, rng):
    n = p.shape[0]
    idx = [int(rng.choice(n, p=w / w.sum()))]
    d2 = _sq_dists(p, p[idx])[:, 0]
    for _ in range(1, k):
        mass = w * d2
        total = mass.sum()
        probs = mass / total if total > 0 else w / w.sum()
        nxt = int(rng.choice(n, p=probs))
        idx.append(nxt)
        d2 = np.minimum(d2, _sq_dists(p, p[[nxt]])[:, 0])
    return p[idx].copy()


def _forgy(p, k, rng):
    return p[rng.choice(p.shape[0], size=k, replace=False)].copy()


def _update(p, w, labels, d2, k, centers):
    new = np.zeros_like(centers)
    mass = np.bincount(labels, weights=w, minlength=k)
    np.add.at(new, labels, w[:, None] * p)
    filled = mass > 0
    new[filled] /= mass[filled][:, None]
    if not np.all(filled):
        # re-seed empty clusters at the currently farthest points
        far = np.argsort(-(w * d2), kind="stable")
        for j, src in zip(np.flatnonzero(~filled), far):
            new[j] = p[src]
    return new


def _lloyd_once(p, w, k, init, max_iters, rng):
    centers = _kmeanspp(p, w, k, rng) if init == "kmeanspp" else _forgy(p, k, rng)
    labels, d2 = assign(p, centers)
    history = [float(w @ d2)]
    for _ in range(max_iters):
        centers = _update(p, w, labels, d2, k, centers)
        new_labels, d2 = assign(p, centers)
        history.append(float(w @ d2))
        done = np.array_equal(new_labels, labels)
        labels = new_labels
        if done:
            break
    return ClusteringSolution(centers, labels, history[-1], history)


def lloyd(p, k, init="kmeanspp", max_iters=100, seed=0, weights=None, n_init=10):
    """Lloyd's method, best of ``n_init`` seeded restarts.

    Parameters
    ----------
    p : array_like, shape (n, d)
    k : int
        Number of centers, ``1 <= k <= n``.
    init : {"kmeanspp", "forgy"}
    max_iters : int
        Cap on center updates per restart; a restart also stops at an
        assignment fixpoint.
    seed : int
    weights : array_like, optional
        Positive per-point weights; the cost becomes the weighted sum.
    n_init : int

    Returns
    -------
    ClusteringSolution
        ``cost_history`` is the (non-increasing) cost after each assignment
        step of the winning restart.
    """
    p = as_matrix(p, "p")
    n = p.shape[0]
    if not 1 <= k <= n:
        raise ParameterError(f"k must lie in [1, {n}], got {k}")
    if init not in ("kmeanspp", "forgy"):
        raise ParameterError(f"unknown init {init!r}")
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (n,) or np.any(w <= 0):
            raise ParameterError("weights must be positive, one per point")
        # normalizing by the max makes equal weights behave exactly like no weights
        w = w / w.max()
    scale = 1.0 if weights is None else float(np.max(weights))
    best = None
    for run in range(max(1, n_init)):
        rng = np.random.default_rng(derive_seed(seed, run))
        sol = _lloyd_once(p, w, k, init, max_iters, rng)
        if best is None or sol.cost < best.cost:
            best = sol
    if scale != 1.0:
        best = ClusteringSolution(best.centers, best.assignment, best.cost * scale,
                                  [c * scale for c in best.cost_history])
    return best


def kmeans_projection_dim(k, eps, d):
    """``min(k + ceil(4k / eps^2) - 1, d)``."""
    return min(k + int(math.ceil(4.0 * k / eps ** 2 - 1e-9)) - 1, d)


def coreset_words(k_i, t, m, full_block=False):
    """Words a node sends to the coordinator in the clustering round."""
    if full_block:
        return m * (t + 1)
    return k_i * t + k_i + m * (t + 1)


def _node_summary(coords, k, m, seed, max_iters, n_init):
    """Weighted local summary: local centers plus cost-proportional samples."""
    n_i = coords.shape[0]
    if m >= n_i:
        return WeightedPoints(coords, np.ones(n_i)), True
    local = lloyd(coords, min(k, n_i), max_iters=max_iters, seed=seed, n_init=n_init)
    sizes = np.bincount(local.assignment, minlength=local.k).astype(np.float64)
    occupied = sizes > 0
    centers = WeightedPoints(local.centers[occupied], sizes[occupied])
    _, d2 = assign(coords, local.centers)
    total = d2.sum()
    probs = d2 / total if total > 0 else np.full(n_i, 1.0 / n_i)
    rng = np.random.default_rng(derive_seed(seed, 1 << 20))
    picked = rng.choice(n_i, size=m, p=probs)
    samples = WeightedPoints(coords[picked], 1.0 / (m * probs[picked]))
    return WeightedPoints.concat([centers, samples]), False


def distributed_kmeans(data, k, eps, coreset_size, seed=0, dispca_params=None,
                       max_iters=100, n_init=10):
    """Distributed k-means on disPCA-projected data.

    Runs disPCA with ``t1 = t2 = min(k + ceil(4k/eps^2) - 1, d)`` and
    broadcasts the subspace ``E``. Each node clusters its projected
    coordinates ``P_i E`` and sends its weighted local centers plus
    ``coreset_size`` points sampled proportionally to their local cost
    (weighted by inverse sampling probability); a node with at most
    ``coreset_size`` rows sends its whole block instead. The coordinator
    clusters the union and lifts the centers back to R^d.

    Returns
    -------
    solution : ClusteringSolution
        Centers in R^d (inside ``span E``) with cost measured on the
        original data.
    transcript : Transcript
    """
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if not 0 < eps < 1.0 / 3.0:
        raise ParameterError(f"eps must lie in (0, 1/3), got {eps}")
    if coreset_size < 1:
        raise ParameterError("coreset_size must be >= 1")
    if dispca_params is None:
        t = kmeans_projection_dim(k, eps, data.dim_d)
        dispca_params = DisPcaParams(t, t, seed=derive_seed(seed, 0), broadcast=True)
    result = dispca(data, dispca_params)
    transcript = result.transcript
    e = result.subspace.basis
    t = e.shape[1]
    parts = []
    for i, block in enumerate(data.blocks):
        coords = np.asarray(block @ e)
        m = min(coreset_size, coords.shape[0])
        summary, full = _node_summary(coords, k, m, derive_seed(seed, 1, i), max_iters, n_init)
        k_i = summary.points.shape[0] - m
        transcript.record(node_id(i), COORDINATOR, "coreset-points", coreset_words(k_i, t, m, full))
        parts.append(summary)
    union = WeightedPoints.concat(parts)
    if union.points.shape[0] < k:
        raise ParameterError(f"only {union.points.shape[0]} summary points for k = {k}")
    merged = lloyd(union.points, k, max_iters=max_iters, seed=seed, weights=union.weights, n_init=n_init)
    lifted = merged.centers @ e.T
    p = data.reconstruct()
    p = p.toarray() if hasattr(p, "toarray") else p
    labels, d2 = assign(p, lifted)
    return ClusteringSolution(lifted, labels, float(d2.sum())), transcript


class PcrFit(NamedTuple):
    coefficients: np.ndarray
    fit_error: float
    lifted: np.ndarray


def pcr(features, targets, sub, ridge=0.0):
    """Least squares of ``targets`` on the subspace coordinates ``features @ B``.

    Returns
    -------
    PcrFit
        ``coefficients`` in subspace coordinates, root-mean-square residual
        ``fit_error``, and the same model in feature coordinates
        (``lifted = B @ coefficients``).

    Raises
    ------
    RankError
        If ``ridge == 0`` and the projected design is rank deficient.
    """
    x = as_matrix(features, "features")
    y = np.asarray(targets, dtype=np.float64).ravel()
    if y.size != x.shape[0]:
        raise ParameterError(f"{y.size} targets for {x.shape[0]} rows")
    if ridge < 0:
        raise ParameterError("ridge must be >= 0")
    b = sub.basis if isinstance(sub, Subspace) else np.asarray(sub, dtype=np.float64)
    if b.shape[0] != x.shape[1]:
        raise ParameterError("subspace dimension does not match the features")
    z = x @ b
    if ridge == 0:
        sv = np.linalg.svd(z, compute_uv=False)
        if sv.size < z.shape[1] or sv[-1] <= max(z.shape) * np.finfo(float).eps * sv[0]:
            raise RankError("projected design is rank deficient; use ridge > 0")
        coef = np.linalg.lstsq(z, y, rcond=None)[0]
    else:
        coef = np.linalg.solve(z.T @ z + ridge * np.eye(z.shape[1]), z.T @ y)
    resid = y - z @ coef
    return PcrFit(coef, float(np.sqrt(np.mean(resid ** 2))), b @ coef)

