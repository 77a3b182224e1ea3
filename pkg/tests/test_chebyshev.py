import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from chebgraph.chebyshev import (apply_filter, apply_filter_bank, batch_basis, cheb_basis,
                                 grad_input, grad_theta)
from chebgraph.graph import (SparseOperator, count_spmv, normalized_laplacian, random_graph,
                             scale_laplacian, scaled_laplacian)
from chebgraph.spectral import dense_cheby_oracle, eigendecompose
from conftest import corpus_graph


def matrix_chebyshev(Lt_dense, theta):
    """sum_k theta_k T_k(Lt) from the power-basis coefficients, evaluated by Horner."""
    power = np.polynomial.chebyshev.cheb2poly(theta)
    M = np.zeros_like(Lt_dense)
    eye = np.eye(Lt_dense.shape[0])
    for c in reversed(power):
        M = Lt_dense @ M + c * eye
    return M


def neg_identity(n):
    return scale_laplacian(SparseOperator.from_scipy(sp.csr_matrix((n, n))), 1.0)


def test_cheb_basis_trivial_cases():
    x = np.arange(4.0)
    Lt = neg_identity(4)
    np.testing.assert_array_equal(cheb_basis(Lt, x, 1), [x])
    np.testing.assert_array_equal(cheb_basis(Lt, x, 2), [x, -x])
    with pytest.raises(ValueError):
        cheb_basis(Lt, x, 0)
    with pytest.raises(ValueError):
        cheb_basis(Lt, np.ones(3), 2)


def test_cheb_basis_rows_against_dense_oracle():
    g = random_graph(8, 14, 1)
    L = normalized_laplacian(g)
    Lt = scale_laplacian(L, 2.0)
    b = eigendecompose(L)
    x = np.random.default_rng(1).standard_normal(8)
    xbar = cheb_basis(Lt, x, 4)
    for k in range(4):
        np.testing.assert_allclose(xbar[k], dense_cheby_oracle(b, 2.0, np.eye(4)[k], x),
                                   atol=1e-12)


def test_apply_filter_identity_and_shift():
    g = random_graph(16, 30, 2)
    Lt = scaled_laplacian(g)
    x = np.random.default_rng(2).standard_normal(16)
    np.testing.assert_allclose(apply_filter(Lt, [1, 0, 0, 0], x), x, atol=0)
    np.testing.assert_allclose(apply_filter(Lt, [0, 1, 0], x), Lt.operator.to_dense() @ x,
                               atol=1e-14)


@given(st.integers(0, 10_000), st.sampled_from([1, 2, 5, 25]))
def test_apply_filter_matches_spectral_and_matrix_oracles(seed, K):
    g = corpus_graph(seed)
    rng = np.random.default_rng(seed)
    L = normalized_laplacian(g)
    Lt = scale_laplacian(L, 2.0)
    theta, x = rng.standard_normal(K), rng.standard_normal(g.n)
    y = apply_filter(Lt, theta, x)
    ref = dense_cheby_oracle(eigendecompose(L), 2.0, theta, x)
    assert np.linalg.norm(y - ref) <= 1e-10 * np.linalg.norm(ref)
    if K <= 5:
        # power-basis conversion loses accuracy at high order; low orders only
        ref2 = matrix_chebyshev(Lt.operator.to_dense(), theta) @ x
        assert np.linalg.norm(y - ref2) <= 1e-10 * np.linalg.norm(ref2)


@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(seed, a, c):
    g = corpus_graph(seed)
    rng = np.random.default_rng(seed)
    Lt = scaled_laplacian(g)
    theta = rng.standard_normal(6)
    x, z = rng.standard_normal((2, g.n))
    lhs = apply_filter(Lt, theta, a * x + c * z)
    rhs = a * apply_filter(Lt, theta, x) + c * apply_filter(Lt, theta, z)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * max(1.0, np.abs(rhs).max()))


def test_bank_reduces_to_single_filter():
    g = random_graph(12, 25, 4)
    Lt = scaled_laplacian(g)
    rng = np.random.default_rng(4)
    theta, x = rng.standard_normal(5), rng.standard_normal(12)
    y = apply_filter_bank(Lt, theta.reshape(1, 1, 5), x.reshape(1, 12, 1))
    np.testing.assert_allclose(y[0, :, 0], apply_filter(Lt, theta, x), atol=1e-14)


def test_bank_identity_sums_feature_maps():
    g = random_graph(10, 20, 5)
    Lt = scaled_laplacian(g)
    x = np.random.default_rng(5).standard_normal((2, 10, 3))
    theta = np.zeros((3, 4, 3))
    theta[:, :, 0] = 1.0
    y = apply_filter_bank(Lt, theta, x)
    for j in range(4):
        np.testing.assert_allclose(y[:, :, j], x.sum(axis=2), atol=1e-14)


def test_bank_matches_triple_loop():
    g = random_graph(10, 22, 6)
    L = normalized_laplacian(g)
    Lt = scale_laplacian(L, 2.0)
    b = eigendecompose(L)
    rng = np.random.default_rng(6)
    S, F_in, F_out, K = 2, 3, 4, 5
    theta = rng.standard_normal((F_in, F_out, K))
    x = rng.standard_normal((S, 10, F_in))
    ref = np.zeros((S, 10, F_out))
    for s in range(S):
        for j in range(F_out):
            for i in range(F_in):
                ref[s, :, j] += dense_cheby_oracle(b, 2.0, theta[i, j], x[s, :, i])
    np.testing.assert_allclose(apply_filter_bank(Lt, theta, x), ref, atol=1e-10)


def test_bank_shape_errors():
    Lt = scaled_laplacian(random_graph(6, 8, 0))
    with pytest.raises(ValueError):
        apply_filter_bank(Lt, np.ones((2, 3, 4)), np.ones((1, 6, 3)))
    with pytest.raises(ValueError):
        apply_filter_bank(Lt, np.ones((2, 3)), np.ones((1, 6, 2)))
    with pytest.raises(ValueError):
        apply_filter_bank(Lt, np.ones((2, 3, 4)), np.ones((1, 5, 2)))


@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 10))
def test_spmv_count(S, F_in, K):
    Lt = scaled_laplacian(random_graph(9, 15, 0))
    x = np.ones((S, 9, F_in))
    with count_spmv() as c:
        apply_filter_bank(Lt, np.ones((F_in, 2, K)), x)
    assert c.count == S * F_in * (K - 1)


def test_grad_theta_examples():
    Lt = scaled_laplacian(random_graph(7, 10, 3))
    x = np.random.default_rng(3).standard_normal((1, 7, 1))
    xbar = batch_basis(Lt, x, 2)
    np.testing.assert_array_equal(grad_theta(xbar, np.zeros((1, 7, 2))), 0)
    dy = np.zeros((1, 7, 1))
    dy[0, 4, 0] = 1.0
    np.testing.assert_allclose(grad_theta(xbar, dy)[0, 0], [xbar[0, 4, 0, 0], xbar[1, 4, 0, 0]])
    with pytest.raises(ValueError):
        grad_theta(xbar, np.zeros((2, 7, 1)))


def test_grad_input_examples():
    Lt = scaled_laplacian(random_graph(7, 10, 3))
    dy = np.random.default_rng(3).standard_normal((2, 7, 3))
    np.testing.assert_array_equal(grad_input(Lt, np.zeros((2, 3, 4)), dy), 0)
    e0 = np.zeros((1, 1, 4))
    e0[..., 0] = 1
    np.testing.assert_array_equal(grad_input(Lt, e0, dy[:, :, :1]), dy[:, :, :1])


def _fd_instance(seed):
    rng = np.random.default_rng(seed)
    g = corpus_graph(seed)
    Lt = scaled_laplacian(g)
    S, F_in, F_out, K = rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 8)
    theta = rng.standard_normal((F_in, F_out, K))
    x = rng.standard_normal((S, g.n, F_in))
    c = rng.standard_normal((S, g.n, F_out))
    # scalar loss E = sum(c * y^2) / 2, so dE/dy = c * y
    loss = lambda th, xx: 0.5 * np.sum(c * apply_filter_bank(Lt, th, xx) ** 2)
    return Lt, theta, x, c, loss


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


@pytest.mark.parametrize("seed", range(50))
def test_gradients_match_central_differences(seed):
    Lt, theta, x, c, loss = _fd_instance(seed)
    y, xbar = apply_filter_bank(Lt, theta, x, return_basis=True)
    dy = c * y
    h = 1e-5
    gt = grad_theta(xbar, dy)
    num = np.zeros_like(theta)
    for idx in np.ndindex(theta.shape):
        e = np.zeros_like(theta)
        e[idx] = h
        num[idx] = (loss(theta + e, x) - loss(theta - e, x)) / (2 * h)
    assert _rel(gt, num) < 1e-5
    gx = grad_input(Lt, theta, dy)
    rng = np.random.default_rng(seed)
    # probe a random subset of input entries
    flat = rng.choice(x.size, size=min(x.size, 12), replace=False)
    num_x, ana_x = [], []
    for f in flat:
        idx = np.unravel_index(f, x.shape)
        e = np.zeros_like(x)
        e[idx] = h
        num_x.append((loss(theta, x + e) - loss(theta, x - e)) / (2 * h))
        ana_x.append(gx[idx])
    assert _rel(np.array(ana_x), np.array(num_x)) < 1e-5
