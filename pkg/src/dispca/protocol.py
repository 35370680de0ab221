"""Star-network simulation of two-stage distributed PCA.

Each node factors its block (optionally after a CountSketch), ships the top
``t1`` singular values and right singular vectors to the coordinator, and
the coordinator factors the stacked summaries ``Y`` to obtain a ``t2``
dimensional subspace. Every transfer is logged in a :class:`Transcript`,
one word per real number.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import json
import os

import numpy as np
import scipy.sparse as sp

from ._random import derive_seed
from .exceptions import ParameterError
from .linalg import (
    SvdFactors,
    Subspace,
    as_matrix,
    dist_sq,
    frobenius_sq,
    pad_factors,
    svd,
    truncate,
)
from .rsvd import range_svd
from .sketching import apply_countsketch, boost_embedding, plan_countsketch

COORDINATOR = "coordinator"
MESSAGE_KINDS = ("local-factors", "global-subspace", "coreset-points", "other")
BACKENDS = ("exact", "randomized")


def node_id(i):
    return f"node-{i}"


def worker_threads():
    """Worker cap from ``DISPCA_THREADS`` (default 1)."""
    raw = os.environ.get("DISPCA_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ParameterError(f"DISPCA_THREADS must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class Message:
    sender: str
    receiver: str
    kind: str
    words: int

    def __post_init__(self):
        if self.kind not in MESSAGE_KINDS:
            raise ParameterError(f"unknown message kind {self.kind!r}")
        if self.words < 0:
            raise ParameterError("word counts are non-negative")

    def to_dict(self):
        return {"from": self.sender, "to": self.receiver, "kind": self.kind, "words": int(self.words)}


class Transcript:
    """Ordered, word-counted log of protocol messages."""

    def __init__(self, messages=()):
        self.messages = list(messages)

    def record(self, sender, receiver, kind, words):
        self.messages.append(Message(sender, receiver, kind, int(words)))

    def extend(self, other):
        self.messages.extend(other.messages)
        return self

    @property
    def total_words(self):
        return sum(m.words for m in self.messages)

    def words_by_kind(self):
        out = {}
        for m in self.messages:
            out[m.kind] = out.get(m.kind, 0) + m.words
        return out

    def __len__(self):
        return len(self.messages)

    def __eq__(self, other):
        return isinstance(other, Transcript) and self.messages == other.messages

    def dumps(self):
        """Line-delimited JSON: one object per message, then ``{"total_words": N}``."""
        lines = [json.dumps(m.to_dict(), sort_keys=True) for m in self.messages]
        lines.append(json.dumps({"total_words": self.total_words}))
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text):
        messages, total = [], None
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "total_words" in obj and "words" not in obj:
                total = int(obj["total_words"])
                continue
            messages.append(Message(obj["from"], obj["to"], obj["kind"], int(obj["words"])))
        transcript = cls(messages)
        if total is not None and total != transcript.total_words:
            raise ParameterError(f"transcript total {total} does not match message sum {transcript.total_words}")
        return transcript

    @classmethod
    def read(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


@dataclass(frozen=True)
class PartitionedDataset:
    """Global data split row-wise across ``s`` nodes.

    ``origin[g] = (node, local_row)`` locates global row ``g``.
    """

    blocks: list
    dim_d: int
    origin: np.ndarray = field(repr=False)
    partition_seed: int | None = None

    def __post_init__(self):
        if not self.blocks:
            raise ParameterError("need at least one block")
        for i, b in enumerate(self.blocks):
            if b.shape[0] < 1 or b.shape[1] != self.dim_d:
                raise ParameterError(f"block {i} has shape {b.shape}, expected (>=1, {self.dim_d})")
        sizes = [b.shape[0] for b in self.blocks]
        if self.origin.shape != (sum(sizes), 2):
            raise ParameterError("origin must map every global row to (node, local row)")

    @classmethod
    def from_blocks(cls, blocks, partition_seed=None):
        """Dataset whose global order is the blocks stacked in node order."""
        blocks = [as_matrix(b, f"block {i}", allow_sparse=True) for i, b in enumerate(blocks)]
        origin = np.vstack([
            np.column_stack([np.full(b.shape[0], i), np.arange(b.shape[0])]) for i, b in enumerate(blocks)
        ]).astype(np.int64)
        return cls(blocks, blocks[0].shape[1], origin, partition_seed)

    @property
    def n_nodes(self):
        return len(self.blocks)

    @property
    def n_rows(self):
        return self.origin.shape[0]

    @property
    def sizes(self):
        return [b.shape[0] for b in self.blocks]

    def stacked(self):
        """Blocks concatenated in node order."""
        if any(sp.issparse(b) for b in self.blocks):
            return sp.vstack(self.blocks, format="csr")
        return np.vstack(self.blocks)

    def reconstruct(self):
        """The global matrix in its original row order."""
        offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        rows = offsets[self.origin[:, 0]] + self.origin[:, 1]
        return self.stacked()[rows]


def partition_powerlaw(p, s, alpha=2.0, seed=0):
    """Assign each row to a node with probability proportional to power-law node weights.

    Node weights have density proportional to ``w^-alpha`` on ``[1, inf)``.
    Empty nodes are repaired by moving one row from the current largest
    block, so every node ends with at least one row.
    """
    p = as_matrix(p, "p", allow_sparse=True)
    n = p.shape[0]
    if s < 1 or n < s:
        raise ParameterError(f"need 1 <= s <= rows, got s={s}, rows={n}")
    if not alpha > 1:
        raise ParameterError(f"alpha must exceed 1, got {alpha}")
    rng = np.random.default_rng(int(seed))
    weights = rng.pareto(alpha - 1.0, size=s) + 1.0
    owner = rng.choice(s, size=n, p=weights / weights.sum())
    counts = np.bincount(owner, minlength=s)
    for empty in np.flatnonzero(counts == 0):
        donor = int(np.argmax(counts))
        moved = np.flatnonzero(owner == donor)[-1]
        owner[moved] = empty
        counts[donor] -= 1
        counts[empty] += 1
    blocks, origin = [], np.zeros((n, 2), dtype=np.int64)
    for i in range(s):
        rows = np.flatnonzero(owner == i)
        blocks.append(p[rows])
        origin[rows, 0] = i
        origin[rows, 1] = np.arange(rows.size)
    return PartitionedDataset(blocks, p.shape[1], origin, int(seed))


@dataclass(frozen=True)
class SketchConfig:
    """Local embedding settings for the fast path.

    ``ell`` is the CountSketch row count. With ``delta`` set, the booster
    picks one of several candidates at accuracy ``eps`` and overall failure
    probability ``delta`` (split as ``delta / 2s`` per node); without it a
    single sketch is used.
    """

    ell: int
    eps: float = 0.5
    delta: float | None = None

    def __post_init__(self):
        if self.ell < 1:
            raise ParameterError(f"ell must be >= 1, got {self.ell}")


@dataclass(frozen=True)
class DisPcaParams:
    t1: int
    t2: int
    backend: str = "exact"
    sketch: SketchConfig | None = None
    rsvd_q: int = 2
    seed: int = 0
    broadcast: bool = False

    def __post_init__(self):
        if not 1 <= self.t2 <= self.t1:
            raise ParameterError(f"need 1 <= t2 <= t1, got t1={self.t1}, t2={self.t2}")
        if self.backend not in BACKENDS:
            raise ParameterError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.rsvd_q < 0:
            raise ParameterError("rsvd_q must be >= 0")

    @classmethod
    def fast(cls, t1, t2, ell, eps=0.5, delta=None, rsvd_q=2, seed=0, broadcast=False):
        """Sketch + randomized-SVD configuration."""
        return cls(t1, t2, "randomized", SketchConfig(ell, eps, delta), rsvd_q, seed, broadcast)


@dataclass(frozen=True)
class DisPcaResult:
    subspace: Subspace
    transcript: Transcript
    local_summaries: list = field(repr=False)


def local_factor_words(t1, d):
    """Words in one local-factors message: ``t1`` vectors in R^d plus ``t1`` singular values."""
    return t1 * d + t1


def expected_words(s, d, t1, t2=None, broadcast=False):
    """Closed-form transcript total of :func:`dispca`."""
    words = s * local_factor_words(t1, d)
    if broadcast:
        words += s * t2 * d
    return words


def _factor(a, t, backend, q, seed):
    if backend == "exact":
        dense = a.toarray() if sp.issparse(a) else a
        f = svd(dense)
        f = truncate(f, min(t, f.rank))
    else:
        width = min(2 * t, min(a.shape))
        f = range_svd(a, width, q, seed)
        f = truncate(f, min(t, f.rank))
    return pad_factors(SvdFactors(None, f.sigma, f.v), t)


def _embed(block, sketch, node, n_nodes, seed):
    # a sketch with at least as many rows as the block cannot shrink it; the identity is an exact embedding
    if sketch is None or block.shape[0] <= sketch.ell:
        return block
    node_seed = derive_seed(seed, 0, node)
    if sketch.delta is None:
        return apply_countsketch(plan_countsketch(block.shape[0], sketch.ell, node_seed), block)
    _, embedded = boost_embedding(block, sketch.eps, sketch.delta / (2 * n_nodes), node_seed, ell=sketch.ell)
    return embedded


def local_stage(p_i, params, node=0, n_nodes=1):
    """Summarize one block.

    Returns
    -------
    summary : SvdFactors
        ``t1`` singular values and right singular vectors (``u`` is not kept).
    fragment : Transcript
        The single local-factors message to the coordinator.
    """
    block = as_matrix(p_i, "p_i", allow_sparse=True)
    d = block.shape[1]
    if params.t1 > d:
        raise ParameterError(f"t1 = {params.t1} exceeds d = {d}")
    work = _embed(block, params.sketch, node, n_nodes, params.seed)
    summary = _factor(work, params.t1, params.backend, params.rsvd_q, derive_seed(params.seed, 2, node))
    fragment = Transcript()
    fragment.record(node_id(node), COORDINATOR, "local-factors", local_factor_words(params.t1, d))
    return summary, fragment


def global_stage(summaries, params):
    """Top ``t2`` right singular subspace of the stacked ``Y_i = Sigma_i V_i^T``."""
    if not summaries:
        raise ParameterError("need at least one summary")
    d = summaries[0].dim
    if any(f.dim != d for f in summaries):
        raise ParameterError("summaries disagree on the dimension d")
    if params.t2 > d:
        raise ParameterError(f"t2 = {params.t2} exceeds d = {d}")
    y = np.vstack([f.weighted_rows() for f in summaries])
    f = _factor(y, params.t2, params.backend, params.rsvd_q, derive_seed(params.seed, 1))
    return Subspace(f.v)


def dispca(data, params, threads=None):
    """Run the two-stage protocol on a partitioned dataset.

    Local stages run on up to ``threads`` worker threads (``DISPCA_THREADS``
    by default); results and transcript order do not depend on scheduling.
    """
    if params.t1 > data.dim_d:
        raise ParameterError(f"t1 = {params.t1} exceeds d = {data.dim_d}")
    s = data.n_nodes
    threads = worker_threads() if threads is None else max(1, int(threads))

    def run(i):
        return local_stage(data.blocks[i], params, node=i, n_nodes=s)

    if threads > 1 and s > 1:
        with ThreadPoolExecutor(max_workers=min(threads, s)) as pool:
            outputs = list(pool.map(run, range(s)))
    else:
        outputs = [run(i) for i in range(s)]
    transcript = Transcript()
    summaries = []
    for summary, fragment in outputs:
        summaries.append(summary)
        transcript.extend(fragment)
    subspace = global_stage(summaries, params)
    if params.broadcast:
        for i in range(s):
            transcript.record(COORDINATOR, node_id(i), "global-subspace", params.t2 * data.dim_d)
    return DisPcaResult(subspace, transcript, summaries)


def projected_dataset(data, sub):
    """Replace every block ``P_i`` by ``P_i E E^T``."""
    if sub.ambient_dim != data.dim_d:
        raise ParameterError(f"subspace lives in R^{sub.ambient_dim}, data in R^{data.dim_d}")
    blocks = [np.asarray(b @ sub.basis) @ sub.basis.T for b in data.blocks]
    return PartitionedDataset(blocks, data.dim_d, data.origin, data.partition_seed)


@dataclass(frozen=True)
class CloseProjectionReport:
    """Both close-projection quantities for one test subspace ``X``.

    ``proj_diff = ||P X - P~ X||_F^2`` and ``norm_gap = ||P X||_F^2 - ||P~ X||_F^2``.
    In relaxed mode both are compared against ``eps * dist_sq + eps * ||P X||_F^2``.
    """

    proj_diff: float
    norm_gap: float
    dist_sq: float
    proj_norm_sq: float
    bound: float
    c0: float
    relaxed: bool
    proj_diff_ok: bool
    norm_gap_ok: bool

    @property
    def passed(self):
        return self.proj_diff_ok and self.norm_gap_ok


def verify_close_projection(p, p_tilde, x, eps, relaxed=False, atol=1e-8):
    p = as_matrix(p, "p")
    p_tilde = as_matrix(p_tilde, "p_tilde")
    if p.shape != p_tilde.shape:
        raise ParameterError(f"shape mismatch: {p.shape} vs {p_tilde.shape}")
    b = x.basis if isinstance(x, Subspace) else Subspace(x).basis
    if b.shape[0] != p.shape[1]:
        raise ParameterError("subspace dimension does not match the data")
    px = p @ b
    ptx = p_tilde @ b
    proj_diff = frobenius_sq(px - ptx)
    proj_norm_sq = frobenius_sq(px)
    norm_gap = proj_norm_sq - frobenius_sq(ptx)
    dist = dist_sq(p, b)
    bound = eps * dist + (eps * proj_norm_sq if relaxed else 0.0)
    c0 = frobenius_sq(p) - frobenius_sq(p_tilde)
    if relaxed:
        gap_ok = abs(norm_gap) <= bound + atol
    else:
        gap_ok = -atol <= norm_gap <= bound + atol
    return CloseProjectionReport(
        proj_diff=proj_diff,
        norm_gap=norm_gap,
        dist_sq=dist,
        proj_norm_sq=proj_norm_sq,
        bound=bound,
        c0=c0,
        relaxed=relaxed,
        proj_diff_ok=-atol <= proj_diff <= bound + atol,
        norm_gap_ok=gap_ok,
    )
