"""Evaluation of the interaction kernel against empirical measures and grid fields.

Two routes compute (k * mu)(x) = (1/N) sum_j k(x - X_j):

* ``direct``: the O(N^2) minimal-image double sum, chunked over targets;
* ``spectral``: a Fourier series of the kernel periodised on [-L, L)^d,
  truncated once its coefficients fall below a relative tolerance.

The spectral route reproduces the direct one up to that tolerance and the
(negligible) kernel mass beyond distance L.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import PeriodicGrid
from .scenario.specs import KernelSpec

_CHUNK_ELEMS = 2_000_000


def _minimal_image(z: np.ndarray, L: float | None) -> np.ndarray:
    if L is None:
        return z
    # [-L, L), the same convention as PeriodicGrid.offsets
    return z - 2.0 * L * np.floor((z + L) / (2.0 * L))


def kernel_sum(targets: np.ndarray, sources: np.ndarray, weights: np.ndarray | None,
               k: KernelSpec, L: float | None = None) -> np.ndarray:
    """sum_j w_j k(x_i - y_j) for targets x (n, d), sources y (N, d); returns (n, d).

    Unit weights 1/N when ``weights`` is None.  Minimal image when L is given.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    sources = np.atleast_2d(np.asarray(sources, dtype=float))
    n, d = targets.shape
    N = sources.shape[0]
    if weights is None:
        weights = np.full(N, 1.0 / N)
    out = np.zeros((n, d))
    if k.is_zero or N == 0:
        return out
    step = max(1, _CHUNK_ELEMS // max(N, 1))
    for a in range(0, n, step):
        z = _minimal_image(targets[a:a + step, None, :] - sources[None, :, :], L)
        out[a:a + step] = np.einsum("ijd,j->id", k(z), weights)
    return out


def pairwise_drift(positions: np.ndarray, k: KernelSpec, L: float | None = None) -> np.ndarray:
    """Drift vectors -(1/N) sum_j k(X_i - X_j), self-interaction included."""
    X = np.atleast_2d(np.asarray(positions, dtype=float))
    if not np.all(np.isfinite(X)):
        raise FloatingPointError("non-finite particle positions")
    return -kernel_sum(X, X, None, k, L)


@dataclass(frozen=True)
class SpectralKernel:
    """Truncated Fourier series of the periodised kernel on the box dual lattice.

    k_per(z) = sum_n c_n exp(i n.z pi / L), |n_i| <= K; ``coef`` has shape
    (2K+1,)*d + (d,) and is indexed by n + K.
    """

    d: int
    L: float
    K: int
    coef: np.ndarray
    converged: bool = True

    @classmethod
    def build(cls, k: KernelSpec, d: int, L: float, tol: float = 1e-15,
              table_size: int | None = None) -> SpectralKernel:
        if k.is_zero:
            return cls(d, L, 0, np.zeros((1,) * d + (d,), dtype=complex))
        if table_size is None:
            table_size = 2048 if d == 1 else 256
        g = PeriodicGrid(d, L, table_size)
        vals = k(g.offsets)  # k at minimal-image offsets, node 0 at z = 0
        c = np.fft.fftn(vals, axes=tuple(range(d))) / table_size**d
        c = np.fft.fftshift(c, axes=tuple(range(d)))
        mag = np.abs(c).max(axis=-1)
        big = np.argwhere(mag > tol * mag.max()) - table_size // 2
        K = int(np.abs(big).max()) if big.size else 0
        converged = K < table_size // 2 - 1
        K = min(K, table_size // 2 - 1)
        sl = tuple(slice(table_size // 2 - K, table_size // 2 + K + 1) for _ in range(d))
        return cls(d, L, K, np.ascontiguousarray(c[sl]), converged)

    @property
    def dxi(self) -> float:
        return math.pi / self.L

    def _phases(self, X: np.ndarray) -> list[np.ndarray]:
        """Per-axis tables exp(i n xi x), n = 0..K, shape (K+1, N)."""
        out = []
        for ax in range(self.d):
            z = np.exp(1j * self.dxi * X[:, ax])
            tab = np.empty((self.K + 1, X.shape[0]), dtype=complex)
            tab[0] = 1.0
            if self.K >= 1:
                tab[1] = z
            for n in range(2, self.K + 1):
                np.multiply(tab[n - 1], z, out=tab[n])
            out.append(tab)
        return out

    def _full(self, tab: np.ndarray) -> np.ndarray:
        # rows n = -K..K
        return np.concatenate([tab[:0:-1].conj(), tab], axis=0)

    def structure(self, X: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
        """S_n = sum_j w_j exp(-i n.xi X_j) on the (2K+1)^d modes."""
        X = np.atleast_2d(X)
        N = X.shape[0]
        w = np.full(N, 1.0 / N) if weights is None else np.asarray(weights, dtype=float)
        tabs = [self._full(t) for t in self._phases(X)]
        if self.d == 1:
            return tabs[0].conj() @ w
        return (tabs[0].conj() * w) @ tabs[1].conj().T

    def evaluate(self, X: np.ndarray, S: np.ndarray) -> np.ndarray:
        """sum_n c_n S_n exp(i n.xi x) at points X; returns real (n, d)."""
        X = np.atleast_2d(X)
        C = self.coef * S[..., None]
        tabs = [self._full(t) for t in self._phases(X)]
        if self.d == 1:
            return (tabs[0].T @ C).real
        t = np.einsum("aj,abq->bqj", tabs[0], C)
        return np.einsum("bj,bqj->jq", tabs[1], t).real

    def convolve_measure(self, targets: np.ndarray, sources: np.ndarray,
                         weights: np.ndarray | None = None) -> np.ndarray:
        """(k * mu)(x) at targets for mu = sum_j w_j delta_{y_j} (default w = 1/N)."""
        return self.evaluate(targets, self.structure(sources, weights))

    def _self_convolve_1d(self, X: np.ndarray) -> np.ndarray:
        # real kernel and weights: only modes n >= 0 are needed
        tab = self._phases(X)[0]
        S = tab.conj() @ np.full(X.shape[0], 1.0 / X.shape[0])
        C = self.coef[self.K:] * S[:, None]
        C[1:] *= 2.0
        C[0] = C[0].real
        return (tab.T @ C).real

    def drift(self, positions: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(positions)
        if self.K == 0 and not np.any(self.coef):
            return np.zeros_like(X)
        if self.d == 1:
            return -self._self_convolve_1d(X)
        return -self.convolve_measure(X, X)


def kernel_on_grid(k: KernelSpec, grid: PeriodicGrid) -> np.ndarray:
    """Kernel tabulated at minimal-image node offsets, shape (M,)*d + (d,)."""
    return k(grid.offsets)
