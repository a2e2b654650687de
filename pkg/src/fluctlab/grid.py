"""Uniform periodic grid on [-L, L)^d and its spectral operators."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class PeriodicGrid:
    """M^d nodes x_j = -L + j h, h = 2L/M, on the periodic box [-L, L)^d."""

    d: int
    L: float
    M: int

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.M

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.M,) * self.d

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.M)

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape (M,)*d + (d,)."""
        mesh = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)

    @cached_property
    def offsets(self) -> np.ndarray:
        """Minimal-image displacement of node j from node 0, shape (M,)*d + (d,)."""
        n = np.arange(self.M)
        off = np.where(n < self.M // 2, n, n - self.M) * self.h
        mesh = np.meshgrid(*([off] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)

    @cached_property
    def rwavenumbers(self) -> list[np.ndarray]:
        """Angular wavenumbers broadcastable against an rfftn array (last axis halved)."""
        k_full = np.fft.fftfreq(self.M, d=self.h) * 2.0 * np.pi
        k_half = np.fft.rfftfreq(self.M, d=self.h) * 2.0 * np.pi
        out = []
        for ax in range(self.d):
            k = k_half if ax == self.d - 1 else k_full
            shape = [1] * self.d
            shape[ax] = k.size
            out.append(k.reshape(shape))
        return out

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """Boolean rfft-shaped mask, False on any Nyquist index (those modes are zeroed)."""
        mask = np.ones(self.rshape, dtype=bool)
        for ax in range(self.d):
            idx = [slice(None)] * self.d
            idx[ax] = self.M // 2
            mask[tuple(idx)] = False
        return mask

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask on the rfft layout."""
        kmax = np.pi / self.h
        mask = np.ones(self.rshape, dtype=bool)
        for k in self.rwavenumbers:
            mask &= np.abs(k) < (2.0 / 3.0) * kmax
        return mask

    @property
    def rshape(self) -> tuple[int, ...]:
        return (self.M,) * (self.d - 1) + (self.M // 2 + 1,)

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.d, 0))

    def wrap(self, x: np.ndarray) -> np.ndarray:
        """Map positions into [-L, L)."""
        y = np.mod(x + self.L, 2.0 * self.L) - self.L
        # mod can round up to exactly +L
        return np.where(y >= self.L, -self.L, y)

    def minimal_image(self, z: np.ndarray) -> np.ndarray:
        """Displacements mapped into [-L, L), matching ``offsets``."""
        return z - 2.0 * self.L * np.floor((z + self.L) / (2.0 * self.L))

    # -- transforms over the trailing d axes --------------------------------
    def rfft(self, f: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(f, axes=self.axes)

    def irfft(self, F: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(F, s=self.shape, axes=self.axes)

    def integrate(self, f: np.ndarray) -> np.ndarray:
        return f.sum(axis=self.axes) * self.cell_volume

    def gradient(self, f: np.ndarray) -> np.ndarray:
        """Spectral gradient; returns shape f.shape + (d,)."""
        F = self.rfft(f) * self.nyquist_mask
        return np.stack([self.irfft(1j * k * F) for k in self.rwavenumbers], axis=-1)

    def divergence(self, v: np.ndarray) -> np.ndarray:
        """Spectral divergence of a vector field with trailing component axis."""
        acc = 0.0
        for i, k in enumerate(self.rwavenumbers):
            acc = acc + 1j * k * self.rfft(v[..., i])
        return self.irfft(acc * self.nyquist_mask)

    def interpolate(self, f: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Periodic multilinear interpolation of grid values f at points x (n, d)."""
        u = (self.wrap(x) + self.L) / self.h
        i0 = np.floor(u).astype(int)
        frac = u - i0
        out = np.zeros(x.shape[0])
        for corner in range(2**self.d):
            w = np.ones(x.shape[0])
            idx = []
            for ax in range(self.d):
                bit = (corner >> ax) & 1
                w = w * (frac[:, ax] if bit else 1.0 - frac[:, ax])
                idx.append((i0[:, ax] + bit) % self.M)
            out += w * f[tuple(idx)]
        return out
