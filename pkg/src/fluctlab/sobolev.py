"""Fourier transforms of measures and fields, and Bessel-weighted H^{-alpha} norms.

Convention: F[mu](xi) = (2 pi)^{-d/2} int exp(-i xi.x) dmu(x).  Norms are
Riemann sums over a uniform frequency lattice on [-Xi, Xi)^d plus an
analytic bound on the omitted tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import integrate, special

from .fourier import nudft, nudft_finufft
from .grid import PeriodicGrid
from .kernels import SpectralKernel, kernel_sum
from .meanfield import DensityField, GridConvolver
from .scenario.specs import KernelSpec
from .scenario.testfunctions import TestFunction

SOURCE_TAGS = ("particles", "field", "difference", "interaction_particles",
               "interaction_field", "interaction_difference", "zero")


class IncommensurateLattice(ValueError):
    """Lattice nodes are not on the box dual lattice."""


@dataclass(frozen=True)
class FrequencyLattice:
    """Nodes xi = (-size/2 + c) * spacing per axis, spacing = 2 cutoff / size."""

    d: int
    cutoff: float
    size: int

    @property
    def spacing(self) -> float:
        return 2.0 * self.cutoff / self.size

    @property
    def n0(self) -> int:
        return -(self.size // 2)

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.d

    @cached_property
    def axis(self) -> np.ndarray:
        return (self.n0 + np.arange(self.size)) * self.spacing

    @cached_property
    def nodes(self) -> np.ndarray:
        """Shape (size,)*d + (d,)."""
        mesh = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)

    @cached_property
    def norm2(self) -> np.ndarray:
        return np.sum(self.nodes**2, axis=-1)

    @classmethod
    def dual(cls, grid: PeriodicGrid) -> FrequencyLattice:
        """The box dual lattice n pi / L, |n| <= M/2, matching the grid's FFT modes."""
        return cls(grid.d, math.pi / grid.h, grid.M)

    def is_commensurate(self, grid: PeriodicGrid, tol: float = 1e-12) -> bool:
        ratio = self.spacing / (math.pi / grid.L)
        return abs(ratio - round(ratio)) < tol and round(ratio) >= 1

    def bessel_weight(self, alpha: float) -> np.ndarray:
        return (1.0 + self.norm2) ** (-alpha)


@dataclass(frozen=True)
class EmpiricalSpectrum:
    """Transform values on a lattice plus what is known about their size.

    ``sup_bound`` and ``growth`` encode |F(xi)| <= sup_bound * (1 + |xi|^2)^{growth/2},
    used for the tail residual.  ``point_mass`` marks sources containing atoms.
    """

    values: np.ndarray
    lattice: FrequencyLattice
    source: str
    sup_bound: float
    growth: int = 0
    point_mass: bool = False

    def __sub__(self, other: EmpiricalSpectrum) -> EmpiricalSpectrum:
        return self._combine(other, -1.0)

    def __add__(self, other: EmpiricalSpectrum) -> EmpiricalSpectrum:
        return self._combine(other, 1.0)

    def _combine(self, other: EmpiricalSpectrum, sign: float) -> EmpiricalSpectrum:
        if other.lattice != self.lattice:
            raise ValueError("spectra live on different lattices")
        tag = "interaction_difference" if self.source.startswith("interaction") else "difference"
        return EmpiricalSpectrum(self.values + sign * other.values, self.lattice, tag,
                                 self.sup_bound + other.sup_bound, max(self.growth, other.growth),
                                 self.point_mass or other.point_mass)

    def scale(self, c: float) -> EmpiricalSpectrum:
        return EmpiricalSpectrum(c * self.values, self.lattice, self.source,
                                 abs(c) * self.sup_bound, self.growth, self.point_mass)


@dataclass(frozen=True)
class SobolevNormResult:
    alpha: float
    cutoff: float
    norm_sq: float
    residual: float

    @property
    def norm(self) -> float:
        return math.sqrt(self.norm_sq)


def _prefactor(d: int) -> float:
    return (2.0 * math.pi) ** (-d / 2)


def empirical_fourier(positions: np.ndarray, lattice: FrequencyLattice,
                      weights: np.ndarray | None = None, backend: str = "direct") -> EmpiricalSpectrum:
    """F[mu](xi) for mu = (1/N) sum_j delta_{X_j} (or given weights)."""
    X = np.atleast_2d(np.asarray(positions, dtype=float))
    N = X.shape[0]
    if N < 1:
        raise ValueError("need at least one particle")
    w = np.full(N, 1.0 / N) if weights is None else np.asarray(weights, dtype=float)
    if backend == "direct":
        vals = nudft(X, w, lattice.n0, lattice.spacing, lattice.size)
    elif backend == "finufft":
        vals = nudft_finufft(X, w, lattice.n0, lattice.spacing, lattice.size)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    pre = _prefactor(lattice.d)
    return EmpiricalSpectrum(pre * vals, lattice, "particles", pre * float(np.abs(w).sum()),
                             0, True)


def _axis_phases(grid: PeriodicGrid, lattice: FrequencyLattice, band_limited: bool) -> np.ndarray:
    """exp(-i xi_c x_g) (size, M) along one axis, zeroed beyond the grid Nyquist."""
    E = np.exp(-1j * np.outer(lattice.axis, grid.axis))
    if band_limited:
        E[np.abs(lattice.axis) > math.pi / grid.h + 1e-12] = 0.0
    return E


def field_fourier(field: DensityField, lattice: FrequencyLattice, require_dual: bool = False,
                  weight_field: np.ndarray | None = None, tag: str = "field") -> EmpiricalSpectrum:
    """Quadrature transform h^d sum_g rho_g exp(-i xi.x_g) of a grid function.

    The grid function is read as band-limited: values at |xi_i| beyond the
    grid Nyquist frequency are zero rather than periodic aliases.  With
    ``require_dual`` the lattice must be commensurate with the box.
    """
    grid = field.grid
    if require_dual and not lattice.is_commensurate(grid):
        raise IncommensurateLattice("lattice spacing is not a multiple of pi / L")
    if lattice.d != grid.d:
        raise ValueError("dimension mismatch")
    vals = field.values if weight_field is None else weight_field
    E = _axis_phases(grid, lattice, True)
    if grid.d == 1:
        F = E @ vals
    else:
        F = E @ vals @ E.T
    F = F * grid.cell_volume * _prefactor(grid.d)
    bound = _prefactor(grid.d) * float(np.sum(np.abs(vals)) * grid.cell_volume)
    return EmpiricalSpectrum(F, lattice, tag, bound, 0, False)


def _tail_integral(d: int, cutoff: float, exponent: float) -> float:
    """int_{|xi| > cutoff} (1 + |xi|^2)^{-exponent} dxi over R^d."""
    if exponent <= d / 2:
        return math.inf
    surface = 2.0 * math.pi ** (d / 2) / special.gamma(d / 2)
    val, _ = integrate.quad(lambda r: r ** (d - 1) * (1.0 + r * r) ** (-exponent), cutoff, np.inf,
                            epsabs=0.0, epsrel=1e-10, limit=200)
    return surface * val


def _endpoint_allowance(d: int, lat: FrequencyLattice, exponent: float) -> float:
    """Euler-Maclaurin endpoint term of the lattice sum for the envelope (1 + |xi|^2)^{-exponent}.

    Twice the leading term dxi^2/12 |w'(cutoff)| over the 2d faces of the cube, as a margin.
    """
    X = lat.cutoff
    slope = 2.0 * exponent * X * (1.0 + X * X) ** (-exponent - 1.0)
    return 2.0 * lat.spacing**2 / 12.0 * slope * 2 * d * (2.0 * X) ** (d - 1)


def h_neg_alpha_norm(spectrum: EmpiricalSpectrum, alpha: float) -> SobolevNormResult:
    """Squared H^{-alpha} norm by lattice quadrature.

    The residual is the analytic tail bound plus an endpoint allowance for the
    lattice sum itself.
    """
    lat = spectrum.lattice
    d = lat.d
    if spectrum.point_mass and alpha <= d / 2:
        raise ValueError(f"alpha must exceed d/2 = {d / 2} for sources with point masses")
    w = lat.bessel_weight(alpha)
    norm_sq = float(np.sum(w * (spectrum.values.real**2 + spectrum.values.imag**2)) * lat.cell_volume)
    if spectrum.sup_bound == 0.0:
        residual = 0.0
    else:
        expo = alpha - spectrum.growth
        residual = float(spectrum.sup_bound**2 * (_tail_integral(d, lat.cutoff, expo)
                                                  + _endpoint_allowance(d, lat, expo)))
    return SobolevNormResult(alpha, lat.cutoff, norm_sq, residual)


def norms_for_alphas(spectrum: EmpiricalSpectrum, alphas) -> list[SobolevNormResult]:
    return [h_neg_alpha_norm(spectrum, a) for a in alphas]


# --------------------------------------------------------------------------
# interaction term  div((k * mu) mu)
# --------------------------------------------------------------------------


def _interaction_from_values(X: np.ndarray, kmu: np.ndarray, lattice: FrequencyLattice,
                             weights: np.ndarray) -> np.ndarray:
    # F = (2pi)^{-d/2} i sum_j w_j exp(-i xi.X_j) xi.(k*mu)(X_j)
    G = nudft(X, kmu * weights[:, None], lattice.n0, lattice.spacing, lattice.size)
    return 1j * _prefactor(lattice.d) * np.sum(lattice.nodes * G, axis=-1)


def interaction_spectrum(positions: np.ndarray, k: KernelSpec, lattice: FrequencyLattice,
                         L: float | None = None, method: str = "direct",
                         spectral_kernel: SpectralKernel | None = None) -> EmpiricalSpectrum:
    """F[div((k * mu) mu)](xi) for the empirical measure of ``positions``."""
    X = np.atleast_2d(np.asarray(positions, dtype=float))
    N = X.shape[0]
    bound = _prefactor(lattice.d) * k.sup_norm()
    if k.is_zero:
        return EmpiricalSpectrum(np.zeros(lattice.nodes.shape[:-1], dtype=complex), lattice,
                                 "interaction_particles", 0.0, 1, True)
    if method == "spectral":
        sk = spectral_kernel or SpectralKernel.build(k, lattice.d, L)
        kmu = sk.convolve_measure(X, X)
    else:
        kmu = kernel_sum(X, X, None, k, L)
    vals = _interaction_from_values(X, kmu, lattice, np.full(N, 1.0 / N))
    return EmpiricalSpectrum(vals, lattice, "interaction_particles", bound, 1, True)


def interaction_spectrum_field(field: DensityField, k: KernelSpec, lattice: FrequencyLattice,
                               convolver: GridConvolver | None = None) -> EmpiricalSpectrum:
    """F[div((k * rho) rho)](xi) by grid quadrature."""
    grid = field.grid
    if k.is_zero:
        return EmpiricalSpectrum(np.zeros(lattice.nodes.shape[:-1], dtype=complex), lattice,
                                 "interaction_field", 0.0, 1, False)
    conv = convolver or GridConvolver(grid, k)
    u = conv(field.values)  # (M^d, d)
    comps = []
    for i in range(grid.d):
        comps.append(field_fourier(field, lattice, weight_field=u[..., i] * field.values).values)
    G = np.stack(comps, axis=-1)
    vals = 1j * np.sum(lattice.nodes * G, axis=-1)
    bound = _prefactor(grid.d) * k.sup_norm() * float(np.sum(np.abs(field.values)) * grid.cell_volume)
    return EmpiricalSpectrum(vals, lattice, "interaction_field", bound, 1, False)


# --------------------------------------------------------------------------
# bilinear pairing  <phi . k * (mu - rho), mu - rho>
# --------------------------------------------------------------------------


def _phi_vector(phi: TestFunction | Callable, x: np.ndarray) -> np.ndarray:
    v = np.asarray(phi(x), dtype=float)
    if v.shape == x.shape:
        return v
    return np.repeat(v[..., None], x.shape[-1], axis=-1)


def pair_test_bilinear(positions: np.ndarray, field: DensityField, phi, k: KernelSpec,
                       method: str = "direct", spectral_kernel: SpectralKernel | None = None,
                       convolver: GridConvolver | None = None) -> float:
    """<phi . k*(mu - rho), mu - rho> as PP - PF - FP + FF.

    A scalar phi acts as phi (1, ..., 1).  Field terms use grid quadrature
    with (k * rho)(x) = h^d sum_g k(x - x_g) rho_g.
    """
    X = np.atleast_2d(np.asarray(positions, dtype=float))
    if k.is_zero:
        return 0.0
    grid = field.grid
    N = X.shape[0]
    xg = grid.coords.reshape(-1, grid.d)
    rho = field.values.reshape(-1)
    wg = rho * grid.cell_volume
    phi_p = _phi_vector(phi, X)
    phi_g = _phi_vector(phi, xg)
    if method == "spectral":
        sk = spectral_kernel or SpectralKernel.build(k, grid.d, grid.L)
        S_mu = sk.structure(X)
        S_rho = sk.structure(xg, wg)
        kmu_p = sk.evaluate(X, S_mu)
        krho_p = sk.evaluate(X, S_rho)
        kmu_g = sk.evaluate(xg, S_mu)
        krho_g = sk.evaluate(xg, S_rho)
    elif method == "direct":
        kmu_p = kernel_sum(X, X, None, k, grid.L)
        krho_p = kernel_sum(X, xg, wg, k, grid.L)
        kmu_g = kernel_sum(xg, X, None, k, grid.L)
        conv = convolver or GridConvolver(grid, k, dealias=False)
        krho_g = conv(field.values).reshape(-1, grid.d)
    else:
        raise ValueError(f"unknown method {method!r}")
    pp = np.sum(phi_p * kmu_p) / N
    pf = np.sum(phi_p * krho_p) / N
    fp = np.sum(wg[:, None] * phi_g * kmu_g)
    ff = np.sum(wg[:, None] * phi_g * krho_g)
    return float(pp - pf - fp + ff)
