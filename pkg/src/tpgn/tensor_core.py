"""Dense numeric kernels shared by every other module.

Conventions: everything is float64, row-major, and immutable once built.
`Vec`, `Mat`, `Tensor3` and `Tensor4` are plain numpy arrays of the
corresponding rank; the ``as_*`` validators are the single place where
shape and finiteness invariants are enforced.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

# Singular values below CUTOFF_RATIO * s_max are treated as zero when
# pseudo-inverting; condition numbers above COND_EXACT_LIMIT disqualify a
# square matrix from the "exact inverse" path.
PINV_CUTOFF_RATIO = 1e-10
COND_EXACT_LIMIT = 1e12


def _as_float_array(x, rank: int, what: str) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != rank:
        raise ValueError(f"{what} must have rank {rank}, got shape {a.shape}")
    if a.size == 0:
        raise ValueError(f"{what} must be non-empty")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} contains non-finite entries")
    return a


def as_vec(x) -> np.ndarray:
    """Validate a 1-d finite float64 vector."""
    return _as_float_array(x, 1, "vector")


def as_mat(x) -> np.ndarray:
    """Validate a 2-d finite float64 matrix."""
    return _as_float_array(x, 2, "matrix")


def as_tensor3(x) -> np.ndarray:
    return _as_float_array(x, 3, "order-3 tensor")


def as_tensor4(x) -> np.ndarray:
    return _as_float_array(x, 4, "order-4 tensor")


def outer_product(a, b) -> np.ndarray:
    """Outer product a b^T: result[i, j] = a[i] * b[j]."""
    a = as_vec(a)
    b = as_vec(b)
    return np.outer(a, b)


def order3_apply(t, x) -> np.ndarray:
    """Contract an order-3 tensor with a vector over the last index.

    result[i, j] = sum_k t[i, j, k] * x[k]
    """
    t = as_tensor3(t)
    x = as_vec(x)
    if t.shape[2] != x.shape[0]:
        raise ValueError(
            f"contraction mismatch: tensor last dim {t.shape[2]} vs vector length {x.shape[0]}"
        )
    return t @ x


def order4_apply(t, m) -> np.ndarray:
    """Contract an order-4 tensor with a matrix over the last two indices.

    result[i, j] = sum_kl t[i, j, k, l] * m[k, l]
    """
    t = as_tensor4(t)
    m = as_mat(m)
    if t.shape[2:] != m.shape:
        raise ValueError(
            f"contraction mismatch: tensor trailing dims {t.shape[2:]} vs matrix shape {m.shape}"
        )
    return np.einsum("ijkl,kl->ij", t, m)


class InverseResult(NamedTuple):
    matrix: np.ndarray
    exact: bool
    cond: float


def invert_or_pinv(r) -> InverseResult:
    """Invert a matrix, falling back to the Moore-Penrose pseudo-inverse.

    A square matrix with 2-norm condition number below COND_EXACT_LIMIT is
    inverted exactly (``exact=True``); anything else gets the SVD
    pseudo-inverse with singular values below ``PINV_CUTOFF_RATIO * s_max``
    dropped. The condition number is reported either way.
    """
    r = as_mat(r)
    u, s, vt = np.linalg.svd(r, full_matrices=False)
    smax = s[0]
    smin = s[-1]
    cond = float(smax / smin) if smin > 0.0 else float("inf")
    square = r.shape[0] == r.shape[1]
    if square and cond < COND_EXACT_LIMIT:
        return InverseResult(np.linalg.inv(r), True, cond)
    cutoff = PINV_CUTOFF_RATIO * smax
    s_inv = np.zeros_like(s)
    keep = s > cutoff
    s_inv[keep] = 1.0 / s[keep]
    pinv = vt.T @ (s_inv[:, None] * u.T)
    return InverseResult(pinv, False, cond)


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Elementwise logistic sigmoid, overflow-safe on both tails."""
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z) -> np.ndarray:
    """Stable softmax: exponentials are taken after max subtraction."""
    z = as_vec(z)
    shifted = z - z.max()
    e = np.exp(shifted)
    return e / e.sum()


def log_softmax(z) -> np.ndarray:
    """Stable log-probabilities; never produces -inf for finite input."""
    z = as_vec(z)
    shifted = z - z.max()
    return shifted - np.log(np.exp(shifted).sum())
