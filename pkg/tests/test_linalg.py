import numpy as np
import pytest

from metacolloc.errors import InvalidInput, RankDeficient
from metacolloc.linalg import condition_number, lstsq, lstsq_value_gradient, lstsq_vjp

from oracles import central_difference, jacobi_singular_values, min_norm_by_search


def test_identity_solve():
    res = lstsq(np.eye(2), [3.0, 4.0])
    np.testing.assert_allclose(res.solution, [3, 4])
    assert res.residual_norm == pytest.approx(0, abs=1e-15)
    assert res.effective_rank == 2


def test_overdetermined_column():
    res = lstsq([[1.0], [1.0]], [1.0, 3.0])
    np.testing.assert_allclose(res.solution, [2.0])
    assert res.residual_norm == pytest.approx(np.sqrt(2))


def test_underdetermined_min_norm():
    A = np.array([[1.0, 1.0]])
    res = lstsq(A, [2.0])
    np.testing.assert_allclose(res.solution, [1.0, 1.0], atol=1e-14)
    np.testing.assert_allclose(res.solution, min_norm_by_search(A, [2.0]), atol=1e-10)


def test_zero_matrix_gives_zero_solution():
    res = lstsq(np.zeros((3, 2)), [1.0, 2.0, 3.0])
    assert res.effective_rank == 0
    np.testing.assert_array_equal(res.solution, 0)


def test_non_finite_rejected():
    with pytest.raises(InvalidInput):
        lstsq([[np.nan, 1.0]], [1.0])
    with pytest.raises(InvalidInput):
        condition_number([[np.inf]])


def test_rhs_shape_checked():
    with pytest.raises(InvalidInput):
        lstsq(np.eye(3), [1.0, 2.0])


def test_singular_values_sorted():
    rng = np.random.default_rng(0)
    s = lstsq(rng.normal(size=(7, 4)), rng.normal(size=7)).singular_values
    assert np.all(np.diff(s) <= 0) and np.all(s >= 0)


@pytest.mark.parametrize("seed", range(50))
def test_normal_equations_stationarity(seed):
    rng = np.random.default_rng(seed)
    m, n = rng.integers(5, 33), rng.integers(1, 17)
    m = max(m, n)
    A, b = rng.normal(size=(m, n)), rng.normal(size=m)
    w = lstsq(A, b).solution
    tol = 1e-10 * np.linalg.norm(A, 2) * np.linalg.norm(b)
    assert np.linalg.norm(A.T @ (A @ w - b)) <= tol


@pytest.mark.parametrize("seed", range(10))
def test_min_norm_against_null_space(seed):
    rng = np.random.default_rng(seed)
    # rank-3 matrix with 6 columns
    A = rng.normal(size=(8, 3)) @ rng.normal(size=(3, 6))
    b = rng.normal(size=8)
    w = lstsq(A, b).solution
    _, _, Vt = np.linalg.svd(A)
    null = Vt[3:].T
    for _ in range(100):
        z = null @ rng.normal(size=3)
        assert np.linalg.norm(w) <= np.linalg.norm(w + z)
    np.testing.assert_allclose(w, min_norm_by_search(A, b, n_samples=2000, seed=seed), atol=1e-8)


def test_value_gradient_examples():
    loss, grad = lstsq_value_gradient(np.eye(3), [1.0, -2.0, 0.5])
    assert loss == pytest.approx(0, abs=1e-30)
    np.testing.assert_allclose(grad, 0, atol=1e-15)
    # w = 2, r = Aw - b = (1, -1): loss = |r|^2 / 2, grad = (2/2) r w^T
    loss, grad = lstsq_value_gradient([[1.0], [1.0]], [1.0, 3.0])
    assert loss == pytest.approx(1.0)
    np.testing.assert_allclose(grad, [[2.0], [-2.0]])


def _value(A, b):
    return lstsq_value_gradient(A, b)[0]


def test_value_gradient_fd_8x3():
    rng = np.random.default_rng(11)
    A, b = rng.normal(size=(8, 3)), rng.normal(size=8)
    _, grad = lstsq_value_gradient(A, b)
    fd = central_difference(lambda M: _value(M, b), A, h=1e-6)
    assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-6


@pytest.mark.parametrize("seed", range(50))
def test_value_gradient_fd_random(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(1, 17))
    m = int(rng.integers(n + 1, 33))
    A, b = rng.normal(size=(m, n)), rng.normal(size=m)
    _, grad = lstsq_value_gradient(A, b)
    fd = central_difference(lambda M: _value(M, b), A, h=1e-6)
    assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-5


def test_vjp_zero_upstream():
    rng = np.random.default_rng(1)
    A, b = rng.normal(size=(6, 3)), rng.normal(size=6)
    w = lstsq(A, b).solution
    np.testing.assert_array_equal(lstsq_vjp(A, b, w, np.zeros(3)), 0)


def test_vjp_square_exact_fit():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(4, 4))
    b = A @ rng.normal(size=4)
    w = lstsq(A, b).solution
    g = rng.normal(size=4)
    s = np.linalg.solve(A.T @ A, g)
    np.testing.assert_allclose(lstsq_vjp(A, b, w, g), -np.outer(A @ s, w), rtol=1e-8, atol=1e-10)


def _vjp_fd_error(A, b, g):
    w = lstsq(A, b).solution
    bar = lstsq_vjp(A, b, w, g)
    fd = central_difference(lambda M: g @ lstsq(M, b).solution, A, h=1e-6)
    return np.linalg.norm(bar - fd) / np.linalg.norm(fd)


def test_vjp_fd_10x4():
    rng = np.random.default_rng(3)
    assert _vjp_fd_error(rng.normal(size=(10, 4)), rng.normal(size=10), rng.normal(size=4)) < 1e-6


@pytest.mark.parametrize("seed", range(50))
def test_vjp_fd_random(seed):
    rng = np.random.default_rng(200 + seed)
    n = int(rng.integers(1, 17))
    m = int(rng.integers(n + 1, 33))
    err = _vjp_fd_error(rng.normal(size=(m, n)), rng.normal(size=m), rng.normal(size=n))
    assert err < 1e-5


def test_vjp_rank_deficient():
    A = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    b = np.array([1.0, 2.0, 3.0])
    with pytest.raises(RankDeficient):
        lstsq_vjp(A, b, lstsq(A, b).solution, np.ones(2))


def test_condition_number_examples():
    assert condition_number(np.eye(3)) == pytest.approx(1.0)
    assert condition_number(np.diag([1.0, 10.0])) == pytest.approx(10.0)
    assert condition_number(np.array([[1.0, 0.0], [0.0, 0.0]])) == np.inf


@pytest.mark.parametrize("seed", range(50))
def test_condition_number_jacobi(seed):
    rng = np.random.default_rng(300 + seed)
    A = rng.normal(size=(20, 5))
    s = jacobi_singular_values(A)
    assert condition_number(A) == pytest.approx(s[0] / s[-1], rel=1e-10)
    np.testing.assert_allclose(lstsq(A, np.ones(20)).singular_values, s, rtol=1e-10)


def _ill_conditioned(rng, m, n, cond):
    U, _ = np.linalg.qr(rng.normal(size=(m, n)))
    V, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return U @ np.diag(np.logspace(0, -np.log10(cond), n)) @ V.T


def test_fp32_precision_contract():
    rng = np.random.default_rng(7)
    worse = 0
    trials = 40
    for _ in range(trials):
        A = _ill_conditioned(rng, 60, 20, 1e8)
        b = A @ rng.normal(size=20)
        r64 = lstsq(A, b).residual_norm
        r32 = lstsq(A.astype(np.float32), b.astype(np.float32)).residual_norm
        worse += r32 >= 10 * r64
    assert worse >= 0.9 * trials


def test_precision_follows_dtype():
    res = lstsq(np.eye(2, dtype=np.float32), np.ones(2, dtype=np.float32))
    assert res.solution.dtype == np.float32
