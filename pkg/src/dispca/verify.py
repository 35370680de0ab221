"""Property checks on synthetic data, shared by the ``verify`` subcommand and the tests."""

from dataclasses import dataclass
import math

import numpy as np

from ._random import derive_seed
from .clustering import kmeans_cost, kmeans_projection_dim
from .datasets import make_low_rank_plus_noise, make_spectrum_data
from .linalg import Subspace, dist_sq, frobenius_sq, project, svd
from .protocol import DisPcaParams, dispca, expected_words, partition_powerlaw, verify_close_projection
from .rsvd import RsvdParams, default_power_iterations, randomized_svd
from .sketching import boost_embedding, distortion, plan_countsketch, sketch_rows


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def lowrank_t1(r, eps):
    """``r + ceil(4r / eps) - 1``."""
    return r + int(math.ceil(4.0 * r / eps - 1e-9)) - 1


def close_projection_t(k, eps):
    """``k + ceil(8k / eps) - 1``."""
    return k + int(math.ceil(8.0 * k / eps - 1e-9)) - 1


def fast_projection_t(k, eps, s, delta):
    """``max(ceil(k / eps^2), ceil(log(s / delta)))``."""
    return max(int(math.ceil(k / eps ** 2 - 1e-9)), int(math.ceil(math.log(s / delta))))


@dataclass(frozen=True)
class SandwichCheck:
    cost: float
    proxy_cost: float
    slack: float
    lower_ok: bool
    upper_ok: bool

    @property
    def passed(self):
        return self.lower_ok and self.upper_ok


def check_sandwich(p, p_tilde, centers, eps, relaxed=False, atol=1e-6):
    """``(1-eps) d2(P,C) [- slack] <= d2(P~,C) + c0 <= (1+eps) d2(P,C) [+ slack]``.

    ``slack = eps * ||P X||_F^2`` in relaxed mode, where ``X`` spans the centers.
    """
    c0 = frobenius_sq(p) - frobenius_sq(p_tilde)
    cost = kmeans_cost(p, centers)
    proxy = kmeans_cost(p_tilde, centers) + c0
    slack = 0.0
    if relaxed:
        x = Subspace.from_span(np.asarray(centers).T)
        slack = eps * frobenius_sq(p @ x.basis)
    return SandwichCheck(
        cost=cost,
        proxy_cost=proxy,
        slack=slack,
        lower_ok=(1 - eps) * cost - slack - atol <= proxy,
        upper_ok=proxy <= (1 + eps) * cost + slack + atol,
    )


def random_centers(p, k, rng, jitter=0.5):
    """``k`` data rows perturbed by Gaussian noise scaled to the data spread."""
    rows = p[rng.choice(p.shape[0], size=k, replace=False)]
    scale = math.sqrt(frobenius_sq(p) / p.size)
    return rows + jitter * scale * rng.standard_normal(rows.shape)


def random_orthonormal(d, k, rng):
    q, _ = np.linalg.qr(rng.standard_normal((d, k)))
    return Subspace(q)


def _check_lowrank(seed):
    r, eps = 3, 0.5
    p = make_spectrum_data(300, 30, 1.0 / np.arange(1, 31), seed=seed)
    data = partition_powerlaw(p, 5, 2.0, seed=seed)
    params = DisPcaParams(lowrank_t1(r, eps), r, seed=seed)
    res = dispca(data, params)
    ratio = dist_sq(p, res.subspace) / dist_sq(p, svd(p).v[:, :r])
    words_ok = res.transcript.total_words == expected_words(5, 30, params.t1)
    return CheckResult("low-rank ratio", ratio <= 1 + eps and words_ok,
                       f"ratio {ratio:.4f} <= {1 + eps}, words exact: {words_ok}")


def _check_close_projection(seed):
    k, eps = 2, 0.5
    t = close_projection_t(k, eps)
    p = make_spectrum_data(300, 40, 1.0 / np.arange(1, 41), seed=seed)
    res = dispca(partition_powerlaw(p, 5, 2.0, seed=seed), DisPcaParams(t, t, seed=seed))
    p_tilde = project(p, res.subspace)
    rng = np.random.default_rng(derive_seed(seed, 7))
    fails = sum(not verify_close_projection(p, p_tilde, random_orthonormal(40, k, rng), eps).passed
                for _ in range(20))
    return CheckResult("close projection", fails == 0, f"{fails}/20 test subspaces violated the bound")


def _check_sandwich(seed):
    k, eps = 2, 0.5
    d = 120
    t = kmeans_projection_dim(k, eps, d)
    p = make_low_rank_plus_noise(400, d, rank=4, noise=1.0, seed=seed)
    res = dispca(partition_powerlaw(p, 4, 2.0, seed=seed), DisPcaParams(t, t, seed=seed))
    p_tilde = project(p, res.subspace)
    rng = np.random.default_rng(derive_seed(seed, 8))
    fails = sum(not check_sandwich(p, p_tilde, random_centers(p, k, rng), eps).passed for _ in range(20))
    return CheckResult("k-means cost sandwich", fails == 0, f"t = {t}; {fails}/20 center sets violated")


def _check_fast_sandwich(seed):
    k, eps, s, delta = 2, 0.4, 4, 0.1
    n, d = 4000, 20
    p = make_low_rank_plus_noise(n, d, rank=4, noise=0.5, seed=seed)
    t = fast_projection_t(k, eps, s, delta)
    params = DisPcaParams.fast(t, t, ell=sketch_rows(d, eps), eps=eps, delta=delta,
                               rsvd_q=default_power_iterations(d, s, k, eps), seed=seed)
    res = dispca(partition_powerlaw(p, s, 2.0, seed=seed), params)
    p_tilde = project(p, res.subspace)
    rng = np.random.default_rng(derive_seed(seed, 9))
    fails = sum(not check_sandwich(p, p_tilde, random_centers(p, k, rng), eps, relaxed=True).passed
                for _ in range(20))
    words_ok = res.transcript.total_words == expected_words(s, d, t)
    return CheckResult("fast-pipeline relaxed sandwich", fails == 0 and words_ok,
                       f"{fails}/20 center sets violated, words exact: {words_ok}")


def _check_countsketch(seed):
    d, eps = 4, 0.1
    a = np.random.default_rng(seed).standard_normal((2000, d))
    ell = sketch_rows(d, eps)
    worst = max(distortion(plan_countsketch(2000, ell, derive_seed(seed, j)), a, 100, j) for j in range(10))
    return CheckResult("countsketch distortion", worst <= 2 * eps, f"worst of 10 sketches {worst:.4f}")


def _check_booster(seed):
    eps = 0.3
    a = np.random.default_rng(seed).standard_normal((300, 3))
    plan, _ = boost_embedding(a, eps, 0.05, seed)
    dist = distortion(plan, a, 200, seed)
    return CheckResult("boosted embedding", dist <= eps, f"distortion {dist:.4f} <= {eps}")


def _check_rsvd(seed):
    rng = np.random.default_rng(seed)
    spectrum = 0.7 ** np.arange(20)
    a = make_spectrum_data(60, 20, spectrum, seed=seed)
    ok = 0
    for trial in range(20):
        f = randomized_svd(a, RsvdParams(5, 4, int(rng.integers(2**31))))
        err = np.linalg.norm(a - a @ f.v @ f.v.T, 2)
        ok += err <= 2 * spectrum[5]
    return CheckResult("randomized SVD spectral bound", ok >= 19, f"{ok}/20 trials within 2 sigma_6")


CHECKS = (
    _check_lowrank,
    _check_close_projection,
    _check_sandwich,
    _check_fast_sandwich,
    _check_countsketch,
    _check_booster,
    _check_rsvd,
)


def run_all(seed=0):
    return [check(seed) for check in CHECKS]
