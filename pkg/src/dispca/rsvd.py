"""Randomized SVD with power iterations.

A Gaussian probe with ``2t`` columns finds an approximate row space of ``A``;
``q`` rounds of subspace iteration sharpen it toward the top singular
directions, and an exact SVD of the small projected matrix finishes the job.
With high probability ``||A - A V V^T||_2 <= 2 sigma_{t+1}(A)``.
"""

from dataclasses import dataclass
import math

import numpy as np

from .exceptions import ParameterError
from .linalg import SvdFactors, _normalize_signs, as_matrix
from .sketching import gaussian_matrix


@dataclass(frozen=True)
class RsvdParams:
    target_rank_t: int
    power_iterations_q: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.target_rank_t < 1:
            raise ParameterError(f"target rank must be >= 1, got {self.target_rank_t}")
        if self.power_iterations_q < 0:
            raise ParameterError(f"power iterations must be >= 0, got {self.power_iterations_q}")


def default_power_iterations(d, s, k, eps):
    """``max(ceil(log(d/eps)), ceil(log(s*k/eps)))``."""
    return max(int(math.ceil(math.log(d / eps))), int(math.ceil(math.log(s * k / eps))), 0)


def _orth(y):
    # Householder QR: Q stays orthonormal even when y is rank deficient
    q, _ = np.linalg.qr(y, mode="reduced")
    return q


def range_svd(a, width, q, seed):
    """Randomized SVD with an explicit probe width (``1 <= width <= min(a.shape)``).

    This is the engine behind :func:`randomized_svd`; the protocol calls it
    directly so that blocks narrower than ``2t`` can still be factored.
    """
    n, d = a.shape
    omega = gaussian_matrix(n, width, seed)
    basis = _orth(np.asarray(a.T @ omega))
    for _ in range(q):
        # (A^T A)^q A^T Omega, re-orthonormalized after each half step
        basis = _orth(np.asarray(a @ basis))
        basis = _orth(np.asarray(a.T @ basis))
    b = np.asarray(a @ basis)
    u, sigma, vt_small = np.linalg.svd(b, full_matrices=False)
    v = basis @ vt_small.T
    u, v = _normalize_signs(u, v)
    return SvdFactors(u=np.ascontiguousarray(u), sigma=sigma, v=np.ascontiguousarray(v))


def randomized_svd(a, p):
    """Approximate SVD of ``a`` with ``2 * p.target_rank_t`` factor triples.

    Parameters
    ----------
    a : array_like or scipy sparse matrix, shape (ell, d)
    p : RsvdParams

    Returns
    -------
    SvdFactors
        ``v`` is ``d x 2t`` with orthonormal columns.
    """
    a = as_matrix(a, allow_sparse=True)
    width = 2 * p.target_rank_t
    if width > min(a.shape):
        raise ParameterError(f"2t = {width} exceeds min(a.shape) = {min(a.shape)}")
    return range_svd(a, width, p.power_iterations_q, p.seed)
