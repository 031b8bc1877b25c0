"""Dense least squares and the gradients that flow through it.

Matrices are plain numpy arrays; the dtype (float32 or float64) is the
precision tag and every routine here computes in the dtype of its input.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, RankDeficient

PRECISIONS = {"fp32": np.float32, "fp64": np.float64}


def dtype_for(precision):
    try:
        return np.dtype(PRECISIONS[precision])
    except KeyError:
        raise InvalidInput(f"unknown precision {precision!r}") from None


def as_matrix(A, precision=None):
    """Return ``A`` as a 2-D floating array, cast to ``precision`` if given."""
    A = np.asarray(A)
    if precision is not None:
        A = A.astype(dtype_for(precision), copy=False)
    elif A.dtype not in (np.float32, np.float64):
        A = A.astype(np.float64)
    if A.ndim != 2:
        raise InvalidInput(f"expected a 2-D matrix, got shape {A.shape}")
    return A


@dataclass
class LstsqResult:
    solution: np.ndarray
    residual_norm: float
    effective_rank: int
    singular_values: np.ndarray


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise InvalidInput("non-finite entries in input")


def _prepare(A, b):
    A = as_matrix(A)
    b = np.asarray(b, dtype=A.dtype)
    if b.ndim != 1 or b.shape[0] != A.shape[0]:
        raise InvalidInput(f"rhs shape {b.shape} does not match matrix rows {A.shape[0]}")
    _check_finite(A, b)
    return A, b


def rcond_for(A):
    return max(A.shape) * np.finfo(A.dtype).eps


def _svd_solve(A, b):
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros(A.shape[1], dtype=A.dtype), s, 0, Vt
    keep = s > rcond_for(A) * s[0]
    rank = int(np.count_nonzero(keep))
    coef = (U[:, :rank].T @ b) / s[:rank]
    w = Vt[:rank].T @ coef
    return w, s, rank, Vt


def lstsq(A, b):
    """Minimum-norm least-squares solution of ``A w = b`` via truncated SVD.

    Singular values below ``max(rows, cols) * eps * sigma_max`` are treated
    as zero, with ``eps`` the machine epsilon of the input dtype.
    """
    A, b = _prepare(A, b)
    w, s, rank, _ = _svd_solve(A, b)
    r = A @ w - b
    return LstsqResult(
        solution=w,
        residual_norm=float(np.linalg.norm(r)),
        effective_rank=rank,
        singular_values=s,
    )


def lstsq_value_gradient(A, b):
    """Mean squared residual at the least-squares optimum and its gradient in ``A``.

    Because ``w`` is stationary for the inner problem, the gradient of the
    optimal value is the partial gradient ``(2/rows) r w^T`` at fixed ``w``.
    """
    A, b = _prepare(A, b)
    w, _, _, _ = _svd_solve(A, b)
    r = A @ w - b
    m = A.shape[0]
    loss = float(r @ r) / m
    grad = (2.0 / m) * np.outer(r, w)
    return loss, grad


def lstsq_vjp(A, b, w, gbar):
    """Pull ``gbar`` (a gradient on the solution ``w``) back to the matrix ``A``.

    Requires full column rank at the rcond cutoff; raises RankDeficient
    otherwise so the caller can pick another gradient path.
    """
    A, b = _prepare(A, b)
    w = np.asarray(w, dtype=A.dtype)
    gbar = np.asarray(gbar, dtype=A.dtype)
    _check_finite(w, gbar)
    _, s, Vt = np.linalg.svd(A, full_matrices=False)
    n = A.shape[1]
    if s.size < n or s[0] == 0 or s[-1] <= rcond_for(A) * s[0]:
        raise RankDeficient("matrix is rank deficient at the rcond cutoff")
    # (A^T A)^{-1} gbar = V diag(1/s^2) V^T gbar
    sol = Vt.T @ ((Vt @ gbar) / s**2)
    r = b - A @ w
    return np.outer(r, sol) - np.outer(A @ sol, w)


def condition_number(A):
    A = as_matrix(A)
    if A.size == 0:
        raise InvalidInput("empty matrix")
    _check_finite(A)
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] == 0 or s.size < min(A.shape):
        return float("inf")
    return float(s[0] / s[-1])
