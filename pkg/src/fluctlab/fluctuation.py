"""Linear fluctuation SPDE driven by the common noise and a white-noise forcing.

    d eta = [div(eta (k * rho)) + div(rho (k * eta)) + 1/2 d_i d_j(a_ij eta)] dt
            - div(eta nu dW) - div(sqrt(rho) sigma xi) dt,     a = sigma sigma^T + nu nu^T

The interaction terms are the linearisation of the mean-field drift used by
the Fokker-Planck solver.  Time stepping reuses that solver's splitting; the
forcing enters as -div(sqrt(max(rho, 0)) sigma G) sqrt(dt) with G i.i.d.
N(0, 1/h^d) per cell and component, which is the cell-averaged white noise
xi = G / sqrt(dt) times dt.

Fields may carry a leading batch axis (independent runs sharing W and rho).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalAbort
from .grid import PeriodicGrid
from .fourier import phase_table
from .meanfield import DensityPath, FokkerPlanckSolver
from .scenario.specs import CoefficientSpec, KernelSpec

BLOWUP = 1e12
ETA0_MODES = ("zero", "gaussian", "projected")


@dataclass
class FluctuationField:
    grid: PeriodicGrid
    values: np.ndarray
    t: float = 0.0

    @property
    def spectral(self) -> np.ndarray:
        return self.grid.rfft(self.values)

    def total(self) -> np.ndarray:
        return self.grid.integrate(self.values)


def white_noise(rng: np.random.Generator, grid: PeriodicGrid, m: int, batch: int | None = None) -> np.ndarray:
    """G with i.i.d. N(0, 1/h^d) entries, shape ([batch,] M^d, m)."""
    shape = ((batch,) if batch else ()) + grid.shape + (m,)
    return rng.standard_normal(shape) / math.sqrt(grid.cell_volume)


class FluctuationSolver(FokkerPlanckSolver):
    """Splitting solver for the fluctuation SPDE along a recorded rho path."""

    def __init__(self, grid: PeriodicGrid, k: KernelSpec, sigma: CoefficientSpec,
                 nu: CoefficientSpec, dt: float, dealias: bool = True):
        super().__init__(grid, k, sigma, nu, dt, dealias)

    def linear_interaction_hat(self, eta: np.ndarray, rho: np.ndarray) -> np.ndarray | float:
        if self.conv.zero:
            return 0.0
        u_rho = self.conv(rho)
        u_eta = self.conv(eta)
        flux = eta[..., None] * u_rho + rho[..., None] * u_eta
        return self.dt * self._div_hat(flux)

    def forcing_hat(self, rho: np.ndarray, t: float, G: np.ndarray) -> np.ndarray | float:
        """F[-div(sqrt(rho_+) sigma G)] * sqrt(dt); G has shape ([batch,] M^d, m)."""
        g = self.grid
        if self.sigma.is_zero(g.d):
            return 0.0
        sig = self.sigma(t, g.coords, g.L)  # (M^d, d, m)
        amp = np.sqrt(np.maximum(rho, 0.0))
        flux = np.einsum("...ij,...j->...i", sig, G) * amp[..., None]
        acc = 0.0
        for i in range(g.d):
            acc = acc + 1j * self.ks[i] * g.rfft(flux[..., i])
        return -math.sqrt(self.dt) * acc * g.nyquist_mask

    def fluct_step(self, eta: np.ndarray, rho: np.ndarray, t: float, dW: np.ndarray,
                   G: np.ndarray | None) -> np.ndarray:
        g = self.grid
        new_hat = (g.rfft(eta) + self.linear_interaction_hat(eta, rho)
                   + self.variable_hat(eta, t, dW))
        if G is not None:
            new_hat = new_hat + self.forcing_hat(rho, t, G)
        return g.irfft(self.propagate(new_hat, dW))


def fluct_step(eta: FluctuationField, rho: np.ndarray, dt: float, k: KernelSpec,
               sigma: CoefficientSpec, nu: CoefficientSpec, dW: np.ndarray,
               G: np.ndarray | None) -> FluctuationField:
    """Single step (builds a throwaway solver)."""
    solver = FluctuationSolver(eta.grid, k, sigma, nu, dt)
    new = solver.fluct_step(eta.values, rho, eta.t, np.asarray(dW, dtype=float), G)
    _check(new, 1)
    return FluctuationField(eta.grid, new, eta.t + dt)


def _check(eta: np.ndarray, step: int) -> None:
    if not np.all(np.isfinite(eta)) or np.max(np.abs(eta)) > BLOWUP:
        raise NumericalAbort(f"fluctuation field blew up at step {step}; reduce dt")


def projected_fluctuation(X: np.ndarray, rho: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Grid projection of sqrt(N)(mu^N - rho): band-limited to the grid's Fourier modes.

    Uses the exact empirical transform at the box dual modes, then an inverse FFT.
    Accepts X of shape (N, d) or (batch, N, d).
    """
    X = np.asarray(X, dtype=float)
    batched = X.ndim == 3
    Xb = X if batched else X[None]
    d, M, L = grid.d, grid.M, grid.L
    N = Xb.shape[1]
    dual = math.pi / L
    n_full = np.fft.fftfreq(M, d=1.0 / M)  # integers, FFT order
    n_half = np.arange(M // 2 + 1)
    out = np.empty((Xb.shape[0],) + grid.shape)
    rho_hat = grid.rfft(rho) * grid.cell_volume
    # phase of node 0 at -L: grid.rfft uses x_g = -L + g h
    shift = [np.exp(-1j * dual * (n_full if ax < d - 1 else n_half) * (-L)) for ax in range(d)]
    for b in range(Xb.shape[0]):
        pts = Xb[b]
        if d == 1:
            S = phase_table(pts[:, 0], 0.0, dual, M // 2 + 1).mean(axis=1)
            S = S * np.conj(shift[0])
        else:
            e1 = np.exp(-1j * dual * np.outer(n_full, pts[:, 0]))
            e2 = np.exp(-1j * dual * np.outer(n_half, pts[:, 1]))
            S = (e1 @ e2.T) / N
            S = S * np.conj(shift[0])[:, None] * np.conj(shift[1])[None, :]
        coef = math.sqrt(N) * (S - rho_hat) * grid.nyquist_mask
        out[b] = grid.irfft(coef) / grid.cell_volume
    return out if batched else out[0]


def gaussian_fluctuation(rng: np.random.Generator, rho: np.ndarray, grid: PeriodicGrid,
                         batch: int | None = None) -> np.ndarray:
    """Centred Gaussian field with Cov(<eta,f>,<eta,g>) = <fg,rho> - <f,rho><g,rho>."""
    zeta = white_noise(rng, grid, 1, batch)[..., 0]
    amp = np.sqrt(np.maximum(rho, 0.0))
    tot = grid.integrate(amp * zeta)
    tot = np.reshape(tot, np.shape(tot) + (1,) * grid.d)
    return amp * zeta - rho * tot


@dataclass
class FluctuationRun:
    """Pairings <eta_t, phi> at recorded steps: ``pairings`` (n_rec, R, n_phi)."""

    steps: np.ndarray
    times: np.ndarray
    pairings: np.ndarray
    names: list[str]
    final: np.ndarray
    total_drift: float


def run_fluctuation(cfg, rho_path: DensityPath, increments: np.ndarray, runs: int, *,
                    run_offset: int = 0, eta0: str = "zero", N0: int | None = None,
                    tests=None, stride: int = 1, batch: int = 250,
                    dealias: bool = True) -> FluctuationRun:
    """R independent SPDE runs sharing W and rho; streams addressed by run id."""
    if eta0 not in ETA0_MODES:
        raise ValueError(f"eta0 must be one of {ETA0_MODES}")
    grid = rho_path.grid
    solver = FluctuationSolver(grid, cfg.kernel, cfg.sigma, cfg.nu, cfg.dt, dealias)
    tests = tests if tests is not None else cfg.tests()
    phis = np.stack([tf(grid.coords) for tf in tests], axis=-1) * grid.cell_volume  # (M^d, n)
    n_steps = increments.shape[0]
    plan = cfg.rng
    m = cfg.m
    rec_steps = [n for n in range(n_steps + 1) if n % stride == 0 or n == n_steps]
    pair = np.zeros((len(rec_steps), runs, len(tests)))
    finals = np.empty((runs,) + grid.shape)
    drift = 0.0
    rho0 = rho_path.at_step(0)
    for start in range(0, runs, batch):
        ids = list(range(run_offset + start, run_offset + min(start + batch, runs)))
        B = len(ids)
        if eta0 == "zero":
            eta = np.zeros((B,) + grid.shape)
        elif eta0 == "gaussian":
            eta = np.stack([gaussian_fluctuation(plan.stream("eta0", r), rho0, grid) for r in ids])
        else:
            if N0 is None:
                raise ValueError("projected eta0 needs the particle count N0")
            eta = np.stack([
                projected_fluctuation(
                    cfg.rho0.sample(N0, cfg.d, cfg.L, cfg.M, plan.stream("eta0", r)), rho0, grid)
                for r in ids])
        gens = [plan.stream("white", r) for r in ids]
        total0 = grid.integrate(eta)
        ri = 0
        for n in range(n_steps + 1):
            if n == rec_steps[ri]:
                pair[ri, start:start + B] = eta.reshape(B, -1) @ phis.reshape(-1, len(tests))
                ri += 1
            if n == n_steps:
                break
            G = None
            if not cfg.sigma.is_zero(cfg.d):
                G = np.stack([white_noise(g, grid, m) for g in gens])
            eta = solver.fluct_step(eta, rho_path.at_step(n), n * cfg.dt, increments[n], G)
            _check(eta, n + 1)
        finals[start:start + B] = eta
        drift = max(drift, float(np.max(np.abs(grid.integrate(eta) - total0))))
    steps = np.array(rec_steps)
    return FluctuationRun(steps, steps * cfg.dt, pair, [tf.name for tf in tests], finals, drift)


def conditional_moments(pairings: np.ndarray, min_runs: int = 100):
    """Per-time mean and variance over runs with jackknife standard errors.

    ``pairings`` has shape (n_times, R).  Returns (mean, mean_se, var, var_se).
    """
    from .statlab.stats import jackknife_variance

    P = np.asarray(pairings, dtype=float)
    R = P.shape[1]
    if R < min_runs:
        raise ValueError(f"variance claims need at least {min_runs} runs (got {R})")
    mean = P.mean(axis=1)
    mean_se = P.std(axis=1, ddof=1) / math.sqrt(R)
    var, var_se = jackknife_variance(P, axis=1)
    return mean, mean_se, var, var_se


def analytic_variance(rho_values: np.ndarray, grid: PeriodicGrid, f: np.ndarray) -> float:
    """Var_rho(f) = <f^2, rho> - <f, rho>^2 on the grid."""
    w = rho_values * grid.cell_volume
    m1 = float(np.sum(w * f))
    return float(np.sum(w * f * f)) - m1 * m1


__all__ = [
    "FluctuationField", "FluctuationSolver", "FluctuationRun", "fluct_step", "white_noise",
    "projected_fluctuation", "gaussian_fluctuation", "run_fluctuation", "conditional_moments",
    "analytic_variance", "ETA0_MODES",
]
