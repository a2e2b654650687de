"""Nonuniform discrete Fourier sums on tensor frequency lattices.

Lattice nodes along each axis are xi_c = (n0 + c) * dxi, c = 0..size-1.  The
forward sum is F(xi) = sum_j w_j exp(-i xi.x_j); the adjoint evaluates a
series f(x_j) = sum_xi C(xi) exp(+i xi.x_j).

Both are exact direct sums.  Phase tables are built from one complex
exponential per point and repeated multiplication, and the 1-D sum splits the
mode index c = a + K1 b so the bulk of the work is a single complex matrix
product.  For a fixed BLAS configuration the summation order is fixed, hence
results are bitwise reproducible.
"""

from __future__ import annotations

import numpy as np


def _split(size: int) -> tuple[int, int]:
    """Factor size = k1 * k2 with k1 ~ sqrt(size) for powers of two."""
    if size & (size - 1):
        return size, 1
    k1 = 1 << ((size.bit_length()) // 2)
    return k1, size // k1


def phase_table(x: np.ndarray, n0: float, dxi: float, count: int, sign: int = -1) -> np.ndarray:
    """Rows exp(sign * i * (n0 + c) * dxi * x) for c < count, shape (count, len(x))."""
    x = np.asarray(x, dtype=float)
    out = np.empty((count, x.size), dtype=complex)
    out[0] = np.exp(sign * 1j * n0 * dxi * x)
    if count > 1:
        step = np.exp(sign * 1j * dxi * x)
        for c in range(1, count):
            np.multiply(out[c - 1], step, out=out[c])
    return out


def _nudft_1d(x, w, n0, dxi, size):
    # w: (N, B)
    N, B = w.shape
    k1, k2 = _split(size)
    p1 = phase_table(x, n0, dxi, k1)
    if k2 == 1:
        return p1 @ w
    p2 = phase_table(x, 0.0, k1 * dxi, k2)
    lhs = (p1[:, None, :] * w.T[None, :, :]).reshape(k1 * B, N)
    g = (lhs @ p2.T).reshape(k1, B, k2)  # g[a, q, b] for mode a + k1 b
    return g.transpose(2, 0, 1).reshape(size, B)


def nudft(x: np.ndarray, w: np.ndarray, n0: float, dxi: float, size: int) -> np.ndarray:
    """F[c...] = sum_j w_j exp(-i xi_c . x_j) on a size^d tensor lattice.

    ``x`` is (N, d); ``w`` is (N,) or (N, B).  Returns (size,)*d or (size,)*d + (B,).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    N, d = x.shape
    w = np.asarray(w)
    squeeze = w.ndim == 1
    W = w.reshape(N, -1)
    if d == 1:
        out = _nudft_1d(x[:, 0], W, n0, dxi, size)
    elif d == 2:
        e1 = phase_table(x[:, 0], n0, dxi, size)
        e2 = phase_table(x[:, 1], n0, dxi, size)
        B = W.shape[1]
        lhs = (e1[:, None, :] * W.T[None, :, :]).reshape(size * B, N)
        out = (lhs @ e2.T).reshape(size, B, size).transpose(0, 2, 1)
    else:
        raise ValueError("only d = 1, 2 are supported")
    return out[..., 0] if squeeze else out


def eval_series(x: np.ndarray, C: np.ndarray, n0: float, dxi: float) -> np.ndarray:
    """f(x_j) = sum_c C[c...] exp(+i xi_c . x_j); C has shape (size,)*d (+ (B,))."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    N, d = x.shape
    C = np.asarray(C, dtype=complex)
    size = C.shape[0]
    squeeze = C.ndim == d
    if squeeze:
        C = C[..., None]
    B = C.shape[-1]
    if d == 1:
        k1, k2 = _split(size)
        p1 = phase_table(x[:, 0], n0, dxi, k1, sign=+1)
        if k2 == 1:
            out = (C.T @ p1).T
        else:
            p2 = phase_table(x[:, 0], 0.0, k1 * dxi, k2, sign=+1)
            cm = C.reshape(k2, k1, B).transpose(0, 2, 1).reshape(k2 * B, k1)
            t = (cm @ p1).reshape(k2, B, N)
            out = np.einsum("bj,bqj->jq", p2, t)
    elif d == 2:
        e1 = phase_table(x[:, 0], n0, dxi, size, sign=+1)
        e2 = phase_table(x[:, 1], n0, dxi, size, sign=+1)
        t = (C.transpose(1, 2, 0).reshape(size * B, size) @ e1).reshape(size, B, N)
        out = np.einsum("kj,kqj->jq", e2, t)
    else:
        raise ValueError("only d = 1, 2 are supported")
    return out[:, 0] if squeeze else out


def nudft_reference(x: np.ndarray, w: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Plain loop over frequencies, for tests: F(xi_k) = sum_j w_j exp(-i xi_k . x_j)."""
    x = np.asarray(x, dtype=float).reshape(len(w), -1)
    xi = np.asarray(xi, dtype=float).reshape(-1, x.shape[1])
    out = np.empty(xi.shape[0], dtype=complex)
    for k in range(xi.shape[0]):
        out[k] = np.sum(w * np.exp(-1j * (x @ xi[k])))
    return out


def nudft_finufft(x: np.ndarray, w: np.ndarray, n0: float, dxi: float, size: int,
                  eps: float = 1e-12) -> np.ndarray:
    """Optional type-1 fast transform (requires the ``finufft`` package).

    Only centred lattices (n0 = -size/2) are supported; positions are rescaled
    so that dxi * x lies in [-pi, pi).
    """
    import finufft  # optional dependency

    if n0 != -size // 2:
        raise ValueError("finufft backend needs a centred lattice")
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    d = x.shape[1]
    t = dxi * x
    if np.any(np.abs(t) > 3.0 * np.pi):
        raise ValueError("positions too large for the lattice spacing")
    c = np.ascontiguousarray(np.asarray(w, dtype=complex))
    if d == 1:
        return finufft.nufft1d1(t[:, 0], c, size, eps=eps, isign=-1, modeord=0)
    return finufft.nufft2d1(t[:, 0], t[:, 1], c, (size, size), eps=eps, isign=-1, modeord=0)
