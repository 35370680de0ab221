import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dispca.datasets import make_spectrum_data
from dispca.exceptions import ParameterError
from dispca.linalg import frobenius_sq, svd
from dispca.rsvd import RsvdParams, default_power_iterations, randomized_svd, range_svd


def test_params_validation():
    with pytest.raises(ParameterError):
        RsvdParams(0)
    with pytest.raises(ParameterError):
        RsvdParams(2, -1)
    with pytest.raises(ParameterError):
        randomized_svd(np.ones((5, 3)), RsvdParams(2))


def test_default_power_iterations():
    assert default_power_iterations(30, 8, 3, 0.4) == max(math.ceil(math.log(75)), math.ceil(math.log(60)))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(0, 3), st.integers(0, 2**31 - 1))
def test_exact_rank_captured(t, q, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((30, t)) @ rng.standard_normal((t, 12))
    f = randomized_svd(a, RsvdParams(t, max(q, 1), seed))
    assert f.v.shape == (12, 2 * t)
    assert np.linalg.norm(a - a @ f.v @ f.v.T) <= 1e-8 * max(1.0, np.linalg.norm(a))


def test_padded_diagonal_spectral_bound():
    a = np.zeros((8, 4))
    a[:4, :4] = np.diag([5.0, 4.0, 0.01, 0.01])
    f = randomized_svd(a, RsvdParams(2, 3, 0))
    assert np.linalg.norm(a - a @ f.v @ f.v.T, 2) <= 0.02 + 1e-12
    np.testing.assert_allclose(f.sigma[:2], [5.0, 4.0], rtol=1e-10)


def test_power_iterations_help_on_slow_decay():
    spectrum = 1.0 / np.sqrt(np.arange(1, 31))
    wins = 0
    for seed in range(100):
        a = make_spectrum_data(80, 30, spectrum, seed=seed)
        err0 = np.linalg.norm(a - a @ (v := randomized_svd(a, RsvdParams(3, 0, seed)).v) @ v.T, 2)
        err4 = np.linalg.norm(a - a @ (w := randomized_svd(a, RsvdParams(3, 4, seed)).v) @ w.T, 2)
        wins += err4 <= err0 + 1e-12
    assert wins >= 90


def test_orthonormal_output_and_determinism():
    a = np.random.default_rng(0).standard_normal((40, 15))
    f = randomized_svd(a, RsvdParams(4, 2, 7))
    g = randomized_svd(a, RsvdParams(4, 2, 7))
    assert f.v.shape[1] == 8
    np.testing.assert_allclose(f.v.T @ f.v, np.eye(8), atol=1e-10)
    np.testing.assert_array_equal(f.v, g.v)
    np.testing.assert_array_equal(f.sigma, g.sigma)


def test_frobenius_side_bound():
    k, eps = 2, 0.8
    t = k + math.ceil(6 * k / eps ** 2) - 1
    spectrum = 0.85 ** np.arange(60)
    good = trials = 0
    for seed in range(40):
        a = make_spectrum_data(100, 60, spectrum, seed=seed)
        f = randomized_svd(a, RsvdParams(t, 2, seed))
        v = f.v[:, :t]
        a_hat = a @ v @ v.T
        tail = float(np.sum(spectrum[k:] ** 2))
        rng = np.random.default_rng(seed)
        for _ in range(5):
            x = np.linalg.qr(rng.standard_normal((60, k)))[0]
            trials += 1
            good += frobenius_sq((a - a_hat) @ x) <= eps ** 2 / 3 * tail
    assert good >= 0.95 * trials


def test_range_svd_narrow_width_and_sparse():
    import scipy.sparse as sp

    m = sp.random(50, 10, density=0.3, random_state=0, format="csr")
    f = range_svd(m, 3, 2, 0)
    assert f.v.shape == (10, 3)
    exact = svd(m.toarray()).sigma
    assert f.sigma[0] == pytest.approx(exact[0], rel=1e-3)
