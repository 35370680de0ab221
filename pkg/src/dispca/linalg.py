"""Dense matrix kernel.

Exact SVD, truncation, projections and the squared-distance functional
``dist_sq(A, span B) = ||A - A B B^T||_F^2`` in which every guarantee of the
package is stated. Matrices are plain 2-D ``float64`` numpy arrays; points are
rows.
"""

from dataclasses import dataclass
import math

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .exceptions import NumericError, ParameterError

#: Orthonormality tolerance (scaled by the number of columns).
ORTHO_TOL = 1e-10
#: Relative Frobenius tolerance for reconstructions.
RECON_TOL = 1e-8


def as_matrix(a, name="a", allow_sparse=False):
    """Validate ``a`` as a finite 2-D real matrix with at least one row and column.

    Dense inputs come back as C-contiguous ``float64`` arrays. With
    ``allow_sparse`` a scipy sparse input is returned in CSR form instead of
    being densified.
    """
    if sp.issparse(a):
        if not allow_sparse:
            a = a.toarray()
        else:
            a = sp.csr_matrix(a, dtype=np.float64)
            if a.shape[0] < 1 or a.shape[1] < 1:
                raise ParameterError(f"{name} must have at least one row and one column, got {a.shape}")
            if not np.all(np.isfinite(a.data)):
                raise ParameterError(f"{name} contains non-finite entries")
            return a
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ParameterError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ParameterError(f"{name} must have at least one row and one column, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(arr)


def _check_orthonormal(basis, name):
    m = basis.shape[1]
    gram = basis.T @ basis
    err = np.max(np.abs(gram - np.eye(m))) if m else 0.0
    if err > ORTHO_TOL * max(m, 1):
        raise ParameterError(f"{name} columns are not orthonormal (max |B^T B - I| = {err:.3e})")


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``a = u @ diag(sigma) @ v.T`` with ``sigma`` non-increasing.

    ``u`` may be ``None`` when only the right factors are kept (nodes never
    transmit their left singular vectors).
    """

    u: np.ndarray | None
    sigma: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if sigma.ndim != 1:
            raise ParameterError("sigma must be a vector")
        if np.any(sigma < 0) or np.any(np.diff(sigma) > 1e-12 * max(1.0, sigma[0] if sigma.size else 1.0)):
            raise ParameterError("sigma must be non-negative and non-increasing")
        if self.v.ndim != 2 or self.v.shape[1] != sigma.size:
            raise ParameterError(f"v must have {sigma.size} columns, got shape {self.v.shape}")
        if self.u is not None and (self.u.ndim != 2 or self.u.shape[1] != sigma.size):
            raise ParameterError(f"u must have {sigma.size} columns, got shape {self.u.shape}")
        object.__setattr__(self, "sigma", sigma)

    @property
    def rank(self):
        """Number of factor triples ``m``."""
        return self.sigma.size

    @property
    def dim(self):
        """Ambient column dimension ``d``."""
        return self.v.shape[0]

    def weighted_rows(self):
        """The ``m x d`` matrix ``diag(sigma) @ v.T``."""
        return self.sigma[:, None] * self.v.T

    def reconstruct(self):
        if self.u is None:
            raise ParameterError("left factors were not retained")
        return (self.u * self.sigma) @ self.v.T


@dataclass(frozen=True)
class Subspace:
    """Linear subspace of R^d represented by a ``d x t`` orthonormal basis."""

    basis: np.ndarray

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=np.float64)
        if basis.ndim != 2 or basis.shape[1] > basis.shape[0]:
            raise ParameterError(f"basis must be d x t with t <= d, got shape {basis.shape}")
        _check_orthonormal(basis, "basis")
        object.__setattr__(self, "basis", basis)

    @property
    def dim(self):
        return self.basis.shape[1]

    @property
    def ambient_dim(self):
        return self.basis.shape[0]

    def leading(self, t):
        """Subspace spanned by the first ``t`` basis vectors."""
        if not 1 <= t <= self.dim:
            raise ParameterError(f"t must lie in [1, {self.dim}], got {t}")
        return Subspace(self.basis[:, :t])

    @classmethod
    def full(cls, d):
        return cls(np.eye(d))

    @classmethod
    def from_span(cls, vectors, tol=1e-12):
        """Orthonormal basis for the column span of ``vectors`` (``d x m``).

        Directions with singular value below ``tol`` times the largest are
        dropped, so the result has dimension ``rank(vectors)``.
        """
        vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        u, s, _ = np.linalg.svd(vectors, full_matrices=False)
        if s.size == 0 or s[0] == 0:
            raise ParameterError("cannot span a subspace from zero vectors")
        keep = int(np.sum(s > tol * s[0]))
        return cls(u[:, :keep])


def center(points):
    """Subtract the column means."""
    p = as_matrix(points, "points")
    return p - p.mean(axis=0, keepdims=True)


def _normalize_signs(u, v):
    # make the largest-magnitude entry of every right singular vector non-negative
    if v.shape[1] == 0:
        return u, v
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    v = v * signs
    if u is not None:
        u = u * signs
    return u, v


def svd(a):
    """Exact thin SVD with ``m = min(rows, cols)`` factor triples.

    Raises
    ------
    NumericError
        If LAPACK fails to converge with both the divide-and-conquer and the
        QR-iteration drivers.
    """
    a = as_matrix(a)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError:
        try:
            u, s, vt = scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"SVD did not converge: {exc}") from exc
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(u)) and np.all(np.isfinite(vt))):
        raise NumericError("SVD produced non-finite factors")
    u, v = _normalize_signs(u, vt.T)
    return SvdFactors(u=np.ascontiguousarray(u), sigma=s, v=np.ascontiguousarray(v))


def truncate(f, t):
    """Leading ``t`` factor triples of ``f``."""
    if not 1 <= t <= f.rank:
        raise ParameterError(f"t must lie in [1, {f.rank}], got {t}")
    u = None if f.u is None else f.u[:, :t]
    return SvdFactors(u=u, sigma=f.sigma[:t], v=f.v[:, :t])


def orthonormal_complement(basis, count):
    """``count`` orthonormal columns orthogonal to the orthonormal ``basis``."""
    d, m = basis.shape
    if m + count > d:
        raise ParameterError(f"cannot complete {m} columns with {count} more in R^{d}")
    if count == 0:
        return np.zeros((d, 0))
    q, _ = np.linalg.qr(np.hstack([basis, np.eye(d)]), mode="reduced")
    # Householder QR of [B, I] keeps span(B) in the first m columns
    comp = q[:, m:m + count]
    # re-orthogonalize against the basis for numerical hygiene
    comp = comp - basis @ (basis.T @ comp)
    comp, _ = np.linalg.qr(comp)
    return comp


def pad_factors(f, t):
    """Extend ``f`` to exactly ``t`` right factors.

    Missing directions are filled with an orthonormal complement of ``f.v``
    carrying zero singular values; extra directions are truncated. The left
    factors are dropped whenever padding happens.
    """
    if t <= f.rank:
        return truncate(f, t)
    extra = orthonormal_complement(f.v, t - f.rank)
    sigma = np.concatenate([f.sigma, np.zeros(t - f.rank)])
    return SvdFactors(u=None, sigma=sigma, v=np.hstack([f.v, extra]))


def _basis(s):
    return s.basis if isinstance(s, Subspace) else np.asarray(s, dtype=np.float64)


def project(a, s):
    """``A @ B @ B.T`` for the orthonormal basis ``B`` of ``s``."""
    a = as_matrix(a, allow_sparse=True)
    b = _basis(s)
    if a.shape[1] != b.shape[0]:
        raise ParameterError(f"dimension mismatch: a has {a.shape[1]} columns, basis has {b.shape[0]} rows")
    coords = a @ b
    return np.asarray(coords) @ b.T


def frobenius_sq(a):
    if sp.issparse(a):
        return float(np.sum(a.data ** 2))
    a = np.asarray(a, dtype=np.float64)
    return float(np.vdot(a, a))


def dist_sq(a, s):
    """Sum over rows of the squared distance to ``span(s)``."""
    a = as_matrix(a, allow_sparse=True)
    b = _basis(s)
    if a.shape[1] != b.shape[0]:
        raise ParameterError(f"dimension mismatch: a has {a.shape[1]} columns, basis has {b.shape[0]} rows")
    coords = np.asarray(a @ b)
    if sp.issparse(a):
        return max(frobenius_sq(a) - frobenius_sq(coords), 0.0)
    return frobenius_sq(a - coords @ b.T)


def _effective_sigma(a):
    s = np.linalg.svd(as_matrix(a), compute_uv=False)
    if s.size and s[0] > 0:
        # singular values at roundoff level are exact zeros for the predicates below
        s = np.where(s <= max(a.shape) * np.finfo(float).eps * s[0], 0.0, s)
    return s


def tau(a, r, eps):
    """Smallest ``t`` with ``sigma_t^2 <= (eps / r) * sum_{i>r} sigma_i^2``.

    Returns ``min(rows, cols)`` when no ``t`` in range satisfies the predicate.
    """
    a = as_matrix(a)
    m = min(a.shape)
    if not 1 <= r < m:
        raise ParameterError(f"r must lie in [1, {m - 1}], got {r}")
    if not 0 < eps <= 1:
        raise ParameterError(f"eps must lie in (0, 1], got {eps}")
    s2 = _effective_sigma(a) ** 2
    threshold = eps / r * float(np.sum(s2[r:]))
    hits = np.nonzero(s2 <= threshold)[0]
    return int(hits[0]) + 1 if hits.size else m


def spectral_norm(a, tol=1e-6, max_iter=1000, seed=0):
    """Largest singular value by power iteration on ``A^T A``.

    Converges to relative tolerance ``tol`` on the estimate; exact for
    matrices with a spectral gap, slower when the top two values coincide.
    """
    a = as_matrix(a, allow_sparse=True)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(a.shape[1])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iter):
        y = a.T @ (a @ x)
        norm = float(np.linalg.norm(y))
        if norm == 0.0:
            return 0.0
        x = y / norm
        new = math.sqrt(norm)
        if abs(new - est) <= tol * new:
            return new
        est = new
    return est


def qr_factorize(a):
    """Reduced QR with a non-negative diagonal in ``R``."""
    a = as_matrix(a)
    q, r = np.linalg.qr(a, mode="reduced")
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs, r * signs[:, None]


def matmul(a, b):
    return as_matrix(a) @ as_matrix(b, "b")


def transpose(a):
    return np.ascontiguousarray(as_matrix(a).T)
