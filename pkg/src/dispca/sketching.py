"""Sparse subspace embeddings.

A CountSketch ``H = Phi @ D`` sends row ``i`` of ``A`` to bucket ``h(i)`` with a
random sign, so ``H @ A`` costs one pass over the non-zeros of ``A``. A single
sketch succeeds with constant probability; :func:`boost_embedding` amplifies
that to ``1 - delta`` by cross-validating ``O(log 1/delta)`` independent
sketches against each other.
"""

from dataclasses import dataclass, field
import math

import numpy as np
import scipy.sparse as sp

from ._random import derive_seed
from .exceptions import BoostFailure, ParameterError
from .linalg import SvdFactors, as_matrix, svd


def sketch_rows(d, eps):
    """Target row count ``ceil(d^2 / eps^2)`` for accuracy ``eps``."""
    if d < 1 or not eps > 0:
        raise ParameterError(f"need d >= 1 and eps > 0, got d={d}, eps={eps}")
    return int(math.ceil(d * d / (eps * eps) - 1e-9))


def candidate_count(delta):
    """Number of independent candidates the booster draws for failure probability ``delta``."""
    if not 0 < delta < 1:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    return max(2, int(math.ceil(6.0 * math.log(1.0 / delta))))


@dataclass(frozen=True)
class CountSketchPlan:
    """Bucket map and signs of one CountSketch ``H`` of shape ``output_rows x input_rows``."""

    input_rows: int
    output_rows: int
    bucket_of: np.ndarray = field(repr=False)
    sign_of: np.ndarray = field(repr=False)
    seed: int | None = None

    def __post_init__(self):
        bucket_of = np.asarray(self.bucket_of, dtype=np.int64)
        sign_of = np.asarray(self.sign_of, dtype=np.float64)
        if bucket_of.shape != (self.input_rows,) or sign_of.shape != (self.input_rows,):
            raise ParameterError("bucket_of and sign_of must have one entry per input row")
        if self.input_rows and (bucket_of.min() < 0 or bucket_of.max() >= self.output_rows):
            raise ParameterError(f"bucket indices must lie in [0, {self.output_rows})")
        if not np.all(np.abs(sign_of) == 1.0):
            raise ParameterError("signs must be exactly +1 or -1")
        bucket_of.setflags(write=False)
        sign_of.setflags(write=False)
        object.__setattr__(self, "bucket_of", bucket_of)
        object.__setattr__(self, "sign_of", sign_of)

    @classmethod
    def from_maps(cls, bucket_of, sign_of, output_rows):
        """Plan with explicit maps, bypassing randomness."""
        bucket_of = np.asarray(bucket_of)
        return cls(len(bucket_of), int(output_rows), bucket_of, sign_of, seed=None)

    def to_sparse(self):
        """The embedding matrix ``H`` as a CSR matrix."""
        return sp.csr_matrix(
            (self.sign_of, (self.bucket_of, np.arange(self.input_rows))),
            shape=(self.output_rows, self.input_rows),
        )


@dataclass(frozen=True)
class EmbeddingCandidate:
    """One sketched copy ``H_j A`` together with its SVD."""

    plan: CountSketchPlan
    embedded: np.ndarray
    factors: SvdFactors


def plan_countsketch(n, ell, seed):
    if n < 1 or ell < 1:
        raise ParameterError(f"need n >= 1 and ell >= 1, got n={n}, ell={ell}")
    rng = np.random.default_rng(int(seed))
    bucket_of = rng.integers(0, ell, size=n)
    sign_of = np.where(rng.integers(0, 2, size=n) == 1, 1.0, -1.0)
    return CountSketchPlan(int(n), int(ell), bucket_of, sign_of, seed=int(seed))


def apply_countsketch(plan, a, compact=False):
    """Compute ``H @ A`` in time proportional to ``nnz(A)``.

    Parameters
    ----------
    plan : CountSketchPlan
    a : array_like or scipy sparse matrix, shape (n, d)
    compact : bool
        Drop the buckets that received no row. The result then has at most
        ``n`` rows but the same Gram matrix ``(HA)^T (HA)``, hence the same
        singular values and right singular vectors.

    Returns
    -------
    ndarray, shape (ell, d)
        Dense even for sparse input; the caller decides whether ``ell x d``
        is small enough to hold.
    """
    a = as_matrix(a, allow_sparse=True)
    if a.shape[0] != plan.input_rows:
        raise ParameterError(f"plan expects {plan.input_rows} rows, got {a.shape[0]}")
    buckets = plan.bucket_of
    out_rows = plan.output_rows
    if compact:
        occupied, buckets = np.unique(buckets, return_inverse=True)
        out_rows = occupied.size
    if sp.issparse(a):
        coo = a.tocoo()
        out = np.zeros((out_rows, a.shape[1]))
        np.add.at(out, (buckets[coo.row], coo.col), plan.sign_of[coo.row] * coo.data)
        return out
    out = np.zeros((out_rows, a.shape[1]))
    np.add.at(out, buckets, plan.sign_of[:, None] * a)
    return out


def gaussian_matrix(rows, cols, seed):
    """I.i.d. standard normal ``rows x cols`` matrix, deterministic per seed."""
    if rows < 1 or cols < 1:
        raise ParameterError(f"need rows, cols >= 1, got {rows}, {cols}")
    return np.random.default_rng(int(seed)).standard_normal((rows, cols))


def distortion(plan, a, probes, seed):
    """Largest observed ``| ||H A y|| / ||A y|| - 1 |`` over random unit ``y``.

    Probes with ``A y = 0`` are skipped; returns 0 when all are.
    """
    if probes < 1:
        raise ParameterError(f"probes must be >= 1, got {probes}")
    a = as_matrix(a, allow_sparse=True)
    ha = apply_countsketch(plan, a, compact=True)
    y = gaussian_matrix(a.shape[1], probes, seed)
    y /= np.linalg.norm(y, axis=0, keepdims=True)
    ay = np.linalg.norm(np.asarray(a @ y), axis=0)
    hay = np.linalg.norm(ha @ y, axis=0)
    scale = max(float(ay.max()), 1.0)
    ok = ay > 1e-12 * scale
    if not np.any(ok):
        return 0.0
    return float(np.max(np.abs(hay[ok] / ay[ok] - 1.0)))


def exact_distortion(plan, a):
    """``sup_y | ||H A y|| / ||A y|| - 1 |`` over all ``y`` with ``A y != 0``.

    With ``Q`` an orthonormal basis of ``range(A)`` this is the largest
    deviation from 1 among the singular values of ``H Q``.
    """
    a = as_matrix(a, allow_sparse=True)
    dense = a.toarray() if sp.issparse(a) else a
    u, s, _ = np.linalg.svd(dense, full_matrices=False)
    q = u[:, s > max(dense.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)]
    if q.shape[1] == 0:
        return 0.0
    sv = np.linalg.svd(apply_countsketch(plan, q, compact=True), compute_uv=False)
    if sv.size < q.shape[1]:
        return 1.0  # H Q has fewer rows than the rank: some direction is annihilated
    return float(max(abs(sv[0] - 1.0), abs(sv[-1] - 1.0)))


def _full_rank(candidate):
    sigma = candidate.factors.sigma
    return sigma.size == candidate.factors.dim and sigma[-1] > 1e-12 * sigma[0]


def band_singular_values(reference, other):
    """Singular values of ``Sigma_o V_o^T V_r Sigma_r^{-1}``.

    For ``y = Sigma_r V_r^T x`` the operator maps ``||H_r A x||`` to
    ``||H_o A x||``, so its singular values bound the ratio of the two
    embedded norms over all ``x``. Returns ``None`` when ``reference`` is
    rank deficient.
    """
    if not _full_rank(reference):
        return None
    sr = reference.factors.sigma
    so = other.factors.sigma
    vo = other.factors.v
    vr = reference.factors.v
    m = (so[:, None] * (vo.T @ vr)) / sr[None, :]
    return np.linalg.svd(m, compute_uv=False)


def passes_band(reference, other, eps):
    """Whether every singular value of the comparison operator lies in ``[1 - eps/3, 1 + eps/3]``."""
    sv = band_singular_values(reference, other)
    if sv is None or sv.size < reference.factors.dim:
        return False
    return bool(np.all(np.abs(sv - 1.0) <= eps / 3.0))


def make_candidate(plan, a):
    embedded = apply_countsketch(plan, a)
    factors = svd(apply_countsketch(plan, a, compact=True))
    return EmbeddingCandidate(plan=plan, embedded=embedded, factors=SvdFactors(None, factors.sigma, factors.v))


def select_embedding(candidates, eps, seed):
    """Index of the first candidate, in a seeded random visiting order, that agrees with at least half the others.

    Returns
    -------
    (index, trials) : tuple of int
        ``trials`` counts the candidates examined, including the winner.

    Raises
    ------
    BoostFailure
        If no candidate passes.
    """
    r = len(candidates)
    if r < 2:
        raise ParameterError("need at least two candidates")
    order = np.random.default_rng(int(seed)).permutation(r)
    needed = math.ceil((r - 1) / 2)
    for trials, j in enumerate(order, start=1):
        ref = candidates[j]
        if not _full_rank(ref):
            continue  # rank-deficient sketches are disqualified
        agree = 0
        for jp in range(r):
            if jp != j and passes_band(ref, candidates[jp], eps):
                agree += 1
                if agree >= needed:
                    return int(j), trials
    raise BoostFailure(f"none of {r} candidate embeddings passed the consistency test", candidates=r)


def boost_embedding(a, eps, delta, seed, ell=None, return_trials=False):
    """Subspace embedding of ``a`` with accuracy ``eps`` and failure probability ``delta``.

    Draws :func:`candidate_count` independent CountSketches, each sized for
    accuracy ``eps / 9`` (or ``ell`` rows when given), and returns the first
    one that agrees with at least half of the rest.

    Returns
    -------
    plan : CountSketchPlan
    embedded : ndarray, shape (ell, d)
    trials : int
        Only when ``return_trials`` is set.
    """
    if not 0 < eps <= 0.5:
        raise ParameterError(f"eps must lie in (0, 1/2], got {eps}")
    a = as_matrix(a, allow_sparse=True)
    n, d = a.shape
    if n <= d:
        raise ParameterError(f"need more rows than columns, got {a.shape}")
    rows = sketch_rows(d, eps / 9.0) if ell is None else int(ell)
    r = candidate_count(delta)
    candidates = [make_candidate(plan_countsketch(n, rows, derive_seed(seed, 0, j)), a) for j in range(r)]
    j, trials = select_embedding(candidates, eps, derive_seed(seed, 1))
    chosen = candidates[j]
    if return_trials:
        return chosen.plan, chosen.embedded, trials
    return chosen.plan, chosen.embedded
