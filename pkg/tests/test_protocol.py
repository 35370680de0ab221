import json
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from dispca.datasets import make_low_rank_plus_noise, make_spectrum_data
from dispca.exceptions import ParameterError
from dispca.linalg import Subspace, dist_sq, frobenius_sq, project, svd
from dispca.protocol import (
    DisPcaParams,
    PartitionedDataset,
    SketchConfig,
    Transcript,
    dispca,
    expected_words,
    global_stage,
    local_stage,
    partition_powerlaw,
    projected_dataset,
    verify_close_projection,
)
from dispca.verify import check_sandwich, random_centers
from oracles import residual_sq


def rand(n, d, seed=0):
    return np.random.default_rng(seed).standard_normal((n, d))


# partitioning

def test_single_node_partition():
    p = rand(20, 4)
    data = partition_powerlaw(p, 1, seed=3)
    assert data.n_nodes == 1
    np.testing.assert_array_equal(data.blocks[0], p)


def test_repair_gives_every_node_a_row():
    p = rand(6, 2)
    for seed in range(20):
        data = partition_powerlaw(p, 6, alpha=1.05, seed=seed)
        assert data.sizes == [1] * 6


def test_round_trip_reference_setting():
    p = rand(1000, 5)
    data = partition_powerlaw(p, 25, 2.0, seed=1)
    assert sum(data.sizes) == 1000 and data.n_nodes == 25
    assert all(b.shape[1] == 5 for b in data.blocks)
    np.testing.assert_array_equal(data.reconstruct(), p)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 60), st.data())
def test_partition_invariants(n, data):
    s = data.draw(st.integers(1, n))
    seed = data.draw(st.integers(0, 2**31 - 1))
    p = rand(n, 3, seed)
    part = partition_powerlaw(p, s, 2.0, seed=seed)
    assert min(part.sizes) >= 1 and sum(part.sizes) == n
    np.testing.assert_array_equal(part.reconstruct(), p)


def test_partition_validation():
    with pytest.raises(ParameterError):
        partition_powerlaw(rand(3, 2), 4)
    with pytest.raises(ParameterError):
        partition_powerlaw(rand(3, 2), 2, alpha=1.0)
    with pytest.raises(ParameterError):
        PartitionedDataset.from_blocks([rand(2, 3), rand(2, 4)])


def test_partition_sparse():
    m = sp.random(40, 6, density=0.2, random_state=0, format="csr")
    data = partition_powerlaw(m, 4, seed=0)
    assert all(sp.issparse(b) for b in data.blocks)
    np.testing.assert_array_equal(data.reconstruct().toarray(), m.toarray())


# transcript

def test_transcript_jsonl_round_trip(tmp_path):
    t = Transcript()
    t.record("node-0", "coordinator", "local-factors", 21)
    t.record("coordinator", "node-0", "global-subspace", 12)
    lines = t.dumps().splitlines()
    assert json.loads(lines[0]) == {"from": "node-0", "to": "coordinator", "kind": "local-factors", "words": 21}
    assert json.loads(lines[-1]) == {"total_words": 33}
    path = tmp_path / "log.jsonl"
    t.write(path)
    assert Transcript.read(path) == t
    assert t.words_by_kind() == {"local-factors": 21, "global-subspace": 12}


def test_transcript_rejects_bad_total_and_kind():
    with pytest.raises(ParameterError):
        Transcript.loads('{"from": "a", "to": "b", "kind": "other", "words": 3}\n{"total_words": 4}\n')
    with pytest.raises(ParameterError):
        Transcript().record("a", "b", "gossip", 1)
    with pytest.raises(ParameterError):
        Transcript().record("a", "b", "other", -1)


# local stage

def test_local_stage_words_and_capture():
    block = rand(50, 6)
    summary, fragment = local_stage(block, DisPcaParams(3, 3))
    assert fragment.total_words == 3 * 6 + 3
    assert summary.u is None and summary.v.shape == (6, 3)
    low = rand(30, 2, 1) @ rand(2, 6, 2)
    s2, _ = local_stage(low, DisPcaParams(2, 2))
    assert dist_sq(low, Subspace(s2.v)) == pytest.approx(0.0, abs=1e-18)
    s6, _ = local_stage(block, DisPcaParams(6, 6))
    np.testing.assert_allclose(project(block, Subspace(s6.v)), block, atol=1e-12)


def test_local_stage_pads_short_blocks():
    summary, fragment = local_stage(rand(2, 6), DisPcaParams(4, 4))
    assert summary.rank == 4
    np.testing.assert_array_equal(summary.sigma[2:], 0.0)
    assert fragment.total_words == 4 * 6 + 4


def test_local_stage_rejects_t_above_d():
    with pytest.raises(ParameterError):
        local_stage(rand(10, 3), DisPcaParams(4, 4))


# global stage

def test_single_node_is_plain_svd():
    p = rand(15, 5)
    data = PartitionedDataset.from_blocks([p])
    res = dispca(data, DisPcaParams(5, 5))
    assert dist_sq(p, res.subspace) == pytest.approx(dist_sq(p, svd(p).v), abs=1e-8)
    res3 = dispca(data, DisPcaParams(5, 3))
    assert dist_sq(p, res3.subspace) == pytest.approx(dist_sq(p, svd(p).v[:, :3]), rel=1e-8)


def test_identical_rank_one_blocks():
    direction = np.array([1.0, 2.0, 2.0]) / 3.0
    block = np.outer(np.arange(1.0, 5.0), direction)
    data = PartitionedDataset.from_blocks([block, block, block])
    res = dispca(data, DisPcaParams(1, 1))
    assert dist_sq(data.stacked(), res.subspace) == pytest.approx(0.0, abs=1e-20)


def test_orthogonal_rank_one_blocks():
    b1 = np.outer([1.0, 2.0], [1.0, 0.0, 0.0])
    b2 = np.outer([3.0, -1.0, 2.0], [0.0, 0.0, 1.0])
    data = PartitionedDataset.from_blocks([b1, b2])
    res = dispca(data, DisPcaParams(2, 2))
    assert dist_sq(data.stacked(), res.subspace) == pytest.approx(0.0, abs=1e-20)


def test_global_stage_validation():
    s1, _ = local_stage(rand(5, 3), DisPcaParams(2, 2))
    s2, _ = local_stage(rand(5, 4), DisPcaParams(2, 2))
    with pytest.raises(ParameterError):
        global_stage([s1, s2], DisPcaParams(2, 2))
    with pytest.raises(ParameterError):
        global_stage([], DisPcaParams(2, 2))


# end to end

@pytest.mark.parametrize("seed", range(5))
def test_exact_rank_recovered_for_any_split(seed):
    p = rand(80, 3, seed) @ rand(3, 9, seed + 1)
    for s in (1, 3, 7):
        res = dispca(partition_powerlaw(p, s, seed=seed), DisPcaParams(3, 3, seed=seed))
        assert dist_sq(p, res.subspace) <= 1e-18 * frobenius_sq(p)


@pytest.mark.parametrize("seed", range(5))
def test_lowrank_ratio_small_example(seed):
    p = rand(200, 10, seed)
    r, eps = 2, 0.5
    t1 = min(r + math.ceil(4 * r / eps) - 1, 10)
    res = dispca(partition_powerlaw(p, 4, seed=seed), DisPcaParams(t1, r, seed=seed))
    assert dist_sq(p, res.subspace) / dist_sq(p, svd(p).v[:, :r]) <= 1.5


def test_word_count_examples():
    p = rand(30, 5)
    res = dispca(partition_powerlaw(p, 3, seed=0), DisPcaParams(2, 2))
    assert res.transcript.total_words == 36 == expected_words(3, 5, 2)
    res_b = dispca(partition_powerlaw(p, 3, seed=0), DisPcaParams(2, 2, broadcast=True))
    assert res_b.transcript.total_words == 36 + 3 * 2 * 5 == expected_words(3, 5, 2, 2, True)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(2, 8), st.data())
def test_word_count_closed_form(s, d, data):
    t1 = data.draw(st.integers(1, d))
    t2 = data.draw(st.integers(1, t1))
    broadcast = data.draw(st.booleans())
    p = rand(40, d, t1)
    res = dispca(partition_powerlaw(p, s, seed=d), DisPcaParams(t1, t2, broadcast=broadcast))
    assert res.transcript.total_words == s * (t1 * d + t1) + (s * t2 * d if broadcast else 0)


def test_threads_do_not_change_results(monkeypatch):
    p = make_low_rank_plus_noise(300, 12, rank=3, seed=0)
    data = partition_powerlaw(p, 6, seed=0)
    params = DisPcaParams.fast(6, 4, ell=40, rsvd_q=2, seed=5)
    one = dispca(data, params, threads=1)
    monkeypatch.setenv("DISPCA_THREADS", "4")
    many = dispca(data, params)
    np.testing.assert_array_equal(one.subspace.basis, many.subspace.basis)
    assert one.transcript == many.transcript


def test_bad_thread_env(monkeypatch):
    monkeypatch.setenv("DISPCA_THREADS", "lots")
    with pytest.raises(ParameterError):
        dispca(partition_powerlaw(rand(10, 3), 2), DisPcaParams(2, 2))


def test_fast_pipeline_deterministic_and_accurate():
    p = make_low_rank_plus_noise(8000, 4, rank=2, noise=0.2, seed=1)
    data = partition_powerlaw(p, 4, seed=1)
    assert max(data.sizes) > 2000  # the booster runs on at least one block
    params = DisPcaParams.fast(3, 2, ell=2000, eps=0.5, delta=0.1, rsvd_q=3, seed=2)
    a, b = dispca(data, params), dispca(data, params)
    np.testing.assert_array_equal(a.subspace.basis, b.subspace.basis)
    ratio = dist_sq(p, a.subspace) / dist_sq(p, svd(p).v[:, :2])
    assert ratio <= 1.1
    assert a.transcript.total_words == expected_words(4, 4, 3)


def test_sketch_config_validation():
    with pytest.raises(ParameterError):
        SketchConfig(0)
    with pytest.raises(ParameterError):
        DisPcaParams(2, 3)
    with pytest.raises(ParameterError):
        DisPcaParams(2, 2, backend="magic")


# projected data

def test_projected_dataset():
    p = rand(30, 5)
    data = partition_powerlaw(p, 3, seed=0)
    full = projected_dataset(data, Subspace.full(5))
    for a, b in zip(full.blocks, data.blocks):
        np.testing.assert_allclose(a, b, atol=1e-12)
    sub = Subspace(np.linalg.qr(rand(5, 2, 1))[0])
    once = projected_dataset(data, sub)
    twice = projected_dataset(once, sub)
    for a, b in zip(once.blocks, twice.blocks):
        np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_allclose(once.reconstruct(), project(p, sub), atol=1e-12)


# close projection

def test_close_projection_trivial_cases():
    p = rand(20, 5)
    x = Subspace(np.eye(5)[:, :2])
    same = verify_close_projection(p, p, x, 0.5)
    assert same.passed and same.proj_diff == 0 and same.norm_gap == 0 and same.c0 == 0
    zero = verify_close_projection(p, np.zeros_like(p), x, 0.5)
    assert zero.norm_gap == pytest.approx(frobenius_sq(p @ x.basis))
    assert zero.passed == (frobenius_sq(p @ x.basis) <= 0.5 * residual_sq(p, x.basis))
    heavy = p * np.array([10.0, 10.0, 1.0, 1.0, 1.0])  # mass concentrated in span X
    assert not verify_close_projection(heavy, np.zeros_like(heavy), x, 0.5).passed


@pytest.mark.parametrize("seed", range(3))
def test_close_projection_at_stated_dimension(seed):
    k, eps = 2, 0.5
    t = min(k + math.ceil(8 * k / eps) - 1, 8)
    p = rand(100, 8, seed)
    res = dispca(partition_powerlaw(p, 4, seed=seed), DisPcaParams(t, t, seed=seed))
    p_tilde = project(p, res.subspace)
    rng = np.random.default_rng(seed)
    for _ in range(50):
        x = Subspace(np.linalg.qr(rng.standard_normal((8, k)))[0])
        assert verify_close_projection(p, p_tilde, x, eps).passed


@pytest.mark.parametrize("seed", range(3))
def test_sandwich_nontrivial_dimension(seed):
    k, eps = 2, 0.5
    d = 80
    t = k + math.ceil(4 * k / eps ** 2) - 1
    assert t < d
    p = make_spectrum_data(400, d, 1.0 / np.arange(1, d + 1), seed=seed)
    res = dispca(partition_powerlaw(p, 5, seed=seed), DisPcaParams(t, t, seed=seed))
    p_tilde = project(p, res.subspace)
    assert frobenius_sq(p) - frobenius_sq(p_tilde) >= -1e-10
    rng = np.random.default_rng(seed)
    for _ in range(30):
        assert check_sandwich(p, p_tilde, random_centers(p, k, rng), eps).passed


def test_relaxed_report_uses_slack():
    p = rand(20, 4)
    x = Subspace(np.eye(4)[:, :1])
    strict = verify_close_projection(p, 0.9 * p, x, 0.2)
    relaxed = verify_close_projection(p, 0.9 * p, x, 0.2, relaxed=True)
    assert relaxed.bound == pytest.approx(strict.bound + 0.2 * strict.proj_norm_sq)
