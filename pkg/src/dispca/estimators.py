"""scikit-learn style wrappers around the distributed pipeline.

Each estimator simulates the distributed setting on one machine: ``fit``
splits the rows over ``n_nodes`` nodes with power-law sizes (or takes the
blocks as given through ``fit_partitioned``) and runs the protocol. Data is
centered globally before the protocol starts; the centering round is not
part of the recorded transcript.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .clustering import assign, distributed_kmeans, kmeans_projection_dim, pcr
from .exceptions import ParameterError
from .protocol import DisPcaParams, PartitionedDataset, SketchConfig, dispca, partition_powerlaw


def _protocol_params(est, t1, t2, seed, broadcast=False):
    if est.backend == "exact":
        return DisPcaParams(t1, t2, seed=seed, broadcast=broadcast)
    if est.backend != "fast":
        raise ParameterError(f"backend must be 'exact' or 'fast', got {est.backend!r}")
    if est.ell is None:
        raise ParameterError("the fast backend needs ell (sketch rows per node)")
    sketch = SketchConfig(est.ell, 0.5, est.delta)
    return DisPcaParams(t1, t2, "randomized", sketch, est.power_iterations, seed, broadcast)


def _partition(est, x):
    return partition_powerlaw(x, min(est.n_nodes, x.shape[0]), est.alpha, seed=est.random_state)


class DistributedPCA(TransformerMixin, BaseEstimator):
    """Principal subspace computed by the two-stage distributed protocol.

    Parameters
    ----------
    n_components : int
        Dimension ``t2`` of the returned subspace.
    local_components : int, optional
        Per-node truncation ``t1``; defaults to ``n_components``.
    n_nodes : int
    alpha : float
        Power-law exponent for the simulated row partition.
    backend : {"exact", "fast"}
        ``"fast"`` sketches each block with CountSketch and uses randomized SVD.
    ell, delta, power_iterations
        Sketch rows, booster failure probability (``None`` = single sketch)
        and power iterations for the fast backend.
    random_state : int

    Attributes
    ----------
    components_ : ndarray, shape (n_components, n_features)
    mean_ : ndarray, shape (n_features,)
    transcript_ : Transcript
        Word-counted message log of the fit.
    """

    def __init__(self, n_components=2, local_components=None, n_nodes=5, alpha=2.0,
                 backend="exact", ell=None, delta=None, power_iterations=2, random_state=0):
        self.n_components = n_components
        self.local_components = local_components
        self.n_nodes = n_nodes
        self.alpha = alpha
        self.backend = backend
        self.ell = ell
        self.delta = delta
        self.power_iterations = power_iterations
        self.random_state = random_state

    def _run(self, data):
        d = data.dim_d
        if not 1 <= self.n_components <= d:
            raise ParameterError(f"n_components must lie in [1, {d}]")
        t1 = self.n_components if self.local_components is None else self.local_components
        result = dispca(data, _protocol_params(self, t1, self.n_components, self.random_state))
        self.components_ = result.subspace.basis.T.copy()
        self.transcript_ = result.transcript
        self.n_features_in_ = d
        return self

    def fit(self, X, y=None):
        x = check_array(X, dtype=np.float64)
        self.mean_ = x.mean(axis=0)
        return self._run(_partition(self, x - self.mean_))

    def fit_partitioned(self, blocks):
        """Fit on explicit per-node blocks (one array per node)."""
        blocks = [check_array(b, dtype=np.float64) for b in blocks]
        self.mean_ = np.vstack(blocks).mean(axis=0)
        return self._run(PartitionedDataset.from_blocks([b - self.mean_ for b in blocks]))

    def transform(self, X):
        check_is_fitted(self, "components_")
        x = check_array(X, dtype=np.float64)
        if x.shape[1] != self.n_features_in_:
            raise ParameterError(f"expected {self.n_features_in_} features, got {x.shape[1]}")
        return (x - self.mean_) @ self.components_.T

    def inverse_transform(self, Z):
        check_is_fitted(self, "components_")
        return np.asarray(Z, dtype=np.float64) @ self.components_ + self.mean_


class DistributedKMeans(ClusterMixin, BaseEstimator):
    """k-means on data projected by the distributed protocol, merged from node summaries.

    Attributes
    ----------
    cluster_centers_ : ndarray, shape (n_clusters, n_features)
    labels_ : ndarray, shape (n_samples,)
    inertia_ : float
        k-means cost of the centers on the training data.
    transcript_ : Transcript
    """

    def __init__(self, n_clusters=8, n_nodes=5, eps=0.3, coreset_size=200, alpha=2.0,
                 max_iter=100, n_init=10, backend="exact", ell=None, delta=None,
                 power_iterations=2, random_state=0):
        self.n_clusters = n_clusters
        self.n_nodes = n_nodes
        self.eps = eps
        self.coreset_size = coreset_size
        self.alpha = alpha
        self.max_iter = max_iter
        self.n_init = n_init
        self.backend = backend
        self.ell = ell
        self.delta = delta
        self.power_iterations = power_iterations
        self.random_state = random_state

    def fit(self, X, y=None):
        x = check_array(X, dtype=np.float64)
        self.mean_ = x.mean(axis=0)
        data = _partition(self, x - self.mean_)
        t = kmeans_projection_dim(self.n_clusters, self.eps, data.dim_d)
        params = _protocol_params(self, t, t, self.random_state, broadcast=True)
        sol, transcript = distributed_kmeans(data, self.n_clusters, self.eps, self.coreset_size,
                                             seed=self.random_state, dispca_params=params,
                                             max_iters=self.max_iter, n_init=self.n_init)
        self.cluster_centers_ = sol.centers + self.mean_
        self.labels_ = sol.assignment
        self.inertia_ = sol.cost
        self.transcript_ = transcript
        self.n_features_in_ = x.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        x = check_array(X, dtype=np.float64)
        return assign(x, self.cluster_centers_)[0]


class DistributedPCR(RegressorMixin, BaseEstimator):
    """Least squares on the principal subspace found by the distributed protocol.

    Attributes
    ----------
    coef_ : ndarray, shape (n_features,)
    intercept_ : float
    components_ : ndarray, shape (n_components, n_features)
    transcript_ : Transcript
    """

    def __init__(self, n_components=2, n_nodes=5, alpha=2.0, ridge=0.0, backend="exact",
                 ell=None, delta=None, power_iterations=2, random_state=0):
        self.n_components = n_components
        self.n_nodes = n_nodes
        self.alpha = alpha
        self.ridge = ridge
        self.backend = backend
        self.ell = ell
        self.delta = delta
        self.power_iterations = power_iterations
        self.random_state = random_state

    def fit(self, X, y):
        x, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        x_mean, y_mean = x.mean(axis=0), y.mean()
        xc = x - x_mean
        d = x.shape[1]
        if not 1 <= self.n_components <= d:
            raise ParameterError(f"n_components must lie in [1, {d}]")
        t = self.n_components
        result = dispca(_partition(self, xc), _protocol_params(self, t, t, self.random_state))
        fit = pcr(xc, y - y_mean, result.subspace, ridge=self.ridge)
        self.components_ = result.subspace.basis.T.copy()
        self.coef_ = fit.lifted
        self.intercept_ = float(y_mean - x_mean @ fit.lifted)
        self.transcript_ = result.transcript
        self.n_features_in_ = d
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        x = check_array(X, dtype=np.float64)
        return x @ self.coef_ + self.intercept_
