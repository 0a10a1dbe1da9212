"""Property-based checks of the numerical kernels."""

from math import comb

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from closurekit.chaos_diagnostics import block_average, delay_embed, diks_statistic
from closurekit.config import ExperimentConfig, parse_config, preset
from closurekit.features import MonomialLibrary, count_reduced
from closurekit.fft import fft, ifft
from closurekit.observability import (gamma_matrix, minimal_memory_full, numerical_rank,
                                      obsv_matrix, random_dual_system)
from closurekit.sparse_regression import lasso_fit, lasso_objective, ols_fit, soft_threshold

FAST = settings(max_examples=40, deadline=None)
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@FAST
@given(arrays(float, st.integers(1, 50), elements=finite), st.floats(0, 100))
def test_soft_threshold_shrinks(v, t):
    s = soft_threshold(v, t)
    assert np.all(np.abs(s) <= np.abs(v))
    assert np.all(np.sign(s) * np.sign(v) >= 0)
    np.testing.assert_allclose(np.abs(v) - np.abs(s), np.minimum(np.abs(v), t), atol=1e-9)


@FAST
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 12), st.floats(1e-4, 1.0))
def test_lasso_solution_beats_reference_points(seed, L, lam):
    rng = np.random.default_rng(seed)
    Phi = rng.normal(size=(60, L))
    z = Phi @ rng.normal(size=L) + 0.1 * rng.normal(size=60)
    w = lasso_fit(Phi, z, lam, tol=1e-12)
    f = lasso_objective(Phi, z, w, lam)
    for ref in (np.zeros(L), ols_fit(Phi, z), 0.5 * ols_fit(Phi, z)):
        assert f <= lasso_objective(Phi, z, ref, lam) + 1e-10


@FAST
@given(st.integers(1, 5), st.integers(0, 4))
def test_library_size_is_binomial(n, k):
    lib = MonomialLibrary(n, k)
    assert len(lib) == comb(n + k, k)
    assert len(set(map(tuple, lib.terms))) == len(lib)
    assert np.all(lib.terms.sum(axis=1) <= k)


@FAST
@given(st.integers(1, 3), st.integers(0, 3), st.integers(1, 3))
def test_reduced_count_formula(q, p, k):
    assert count_reduced(q, p, k) == (1 + p) * comb(2 * q + k, k) - p


@FAST
@given(st.integers(0, 10), st.integers(0, 2 ** 32 - 1))
def test_fft_round_trip_linearity_and_parseval(log_n, seed):
    n = 2 ** log_n
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n) + 1j * rng.normal(size=n)
    y = rng.normal(size=n)
    X = fft(x)
    assert np.max(np.abs(ifft(X) - x)) < 1e-12 * max(1.0, np.max(np.abs(x))) * (log_n + 1)
    np.testing.assert_allclose(fft(2.0 * x + y), 2.0 * X + fft(y), atol=1e-9 * n)
    np.testing.assert_allclose(np.sum(np.abs(X) ** 2) / n, np.sum(np.abs(x) ** 2), rtol=1e-10)


@FAST
@given(arrays(float, st.integers(10, 200), elements=finite), st.integers(1, 4),
       st.integers(1, 3))
def test_delay_embedding_rows_are_shifted_series(x, m, tau):
    if x.size <= (m - 1) * tau:
        return
    E = delay_embed(x, m, tau)
    assert E.shape == (x.size - (m - 1) * tau, m)
    for j in range(m):
        np.testing.assert_array_equal(E[:, j], x[j * tau: j * tau + E.shape[0]])


@FAST
@given(arrays(float, st.integers(1, 200), elements=finite), st.integers(1, 20))
def test_block_average_preserves_the_mean(x, l):
    b = block_average(x, l)
    k = x.size // l
    assert b.size == k
    if k:
        np.testing.assert_allclose(b.mean(), x[: k * l].mean(), atol=1e-9)


@FAST
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.05, 2.0))
def test_diks_statistic_is_symmetric(seed, d):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 2))
    Y = rng.normal(loc=0.3, size=(35, 2))
    q1, v1 = diks_statistic(X, Y, d)
    q2, v2 = diks_statistic(Y, X, d)
    assert abs(q1 - q2) <= 1e-12 * max(1.0, abs(q1))
    assert abs(v1 - v2) <= 1e-12 * max(1.0, abs(v1))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3), st.integers(1, 5), st.integers(0, 4))
def test_gamma_rank_formula_and_memory_bound(seed, q, m, p):
    s = random_dual_system(q, m, seed)
    G = gamma_matrix(s.A12, s.A22, 0.1, p)
    assert numerical_rank(G) == p * m + numerical_rank(obsv_matrix(s.A12, s.A22, p + 1))
    assert minimal_memory_full(s.A12, s.A22).p_star_closure <= m - 1


@FAST
@given(st.lists(st.integers(1, 32), min_size=1, max_size=3),
       st.sampled_from(["tanh", "relu", "selu"]), st.integers(1, 5000),
       st.floats(1e-6, 1e-1), st.integers(0, 2 ** 31))
def test_nn_config_round_trips(hidden, act, epochs, lr, seed):
    d = preset("lorenz_chaotic").to_dict()
    d["model"]["nn"].update(hidden=hidden, activation=act, epochs=epochs, learning_rate=lr)
    d["seed"] = seed
    cfg = ExperimentConfig.from_dict(d)
    assert parse_config(cfg.to_toml()).to_dict() == cfg.to_dict()
