"""Euler-Maruyama simulation of the N-particle system with common noise.

    dX^i = -(1/N) sum_j k(X^i - X^j) dt + sigma(t, X^i) dB^i + nu(t, X^i) dW

Positions live on the periodic box; kernel distances use the minimal image.
Martingale functionals are accumulated with exactly the increments used by
the step.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericalAbort
from .grid import PeriodicGrid
from .kernels import SpectralKernel, pairwise_drift
from .noise import BlockNoise, CommonNoisePath, ParticleNoise, idio_source
from .scenario.specs import CoefficientSpec, KernelSpec
from .scenario.testfunctions import TestFunction

__all__ = [
    "ParticleEnsemble", "CommonNoisePath", "MartingaleLedger", "Dynamics", "Trajectory",
    "pairwise_drift", "step_euler", "accumulate_martingales", "run_trajectory",
    "BlockNoise", "ParticleNoise",
]


@dataclass
class ParticleEnsemble:
    """Positions (N, d) at time t for one replica, tied to a common-noise path."""

    X: np.ndarray
    t: float = 0.0
    replica: int = 0
    path: CommonNoisePath | None = None
    step: int = 0

    @property
    def N(self) -> int:
        return self.X.shape[0]

    def mean_of(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        return np.mean(f(self.X), axis=0)


class Dynamics:
    """Coefficients and drift evaluator for one scenario."""

    def __init__(self, d: int, L: float, k: KernelSpec, sigma: CoefficientSpec,
                 nu: CoefficientSpec, drift: str = "direct"):
        self.d, self.L, self.k, self.sigma, self.nu = d, L, k, sigma, nu
        self.sigma_base = sigma.base(d)
        self.nu_base = nu.base(d)
        self.m, self.m_tilde = self.sigma_base.shape[1], self.nu_base.shape[1]
        self.spectral: SpectralKernel | None = None
        if drift == "spectral" and not k.is_zero:
            sk = SpectralKernel.build(k, d, L)
            if sk.converged:
                self.spectral = sk
            else:
                warnings.warn("kernel series not converged; using the direct drift", stacklevel=2)
        elif drift not in ("direct", "spectral"):
            raise ValueError(f"unknown drift method {drift!r}")

    @classmethod
    def from_config(cls, cfg, drift: str | None = None) -> Dynamics:
        return cls(cfg.d, cfg.L, cfg.kernel, cfg.sigma, cfg.nu, drift or cfg.drift)

    def drift(self, X: np.ndarray) -> np.ndarray:
        if self.k.is_zero:
            return np.zeros_like(X)
        if self.spectral is not None:
            return self.spectral.drift(X)
        return pairwise_drift(X, self.k, self.L)

    def sigma_at(self, t: float, X: np.ndarray) -> np.ndarray:
        if self.sigma.is_constant:
            return np.broadcast_to(self.sigma_base, X.shape[:-1] + self.sigma_base.shape)
        return self.sigma(t, X, self.L)

    def nu_at(self, t: float, X: np.ndarray) -> np.ndarray:
        if self.nu.is_constant:
            return np.broadcast_to(self.nu_base, X.shape[:-1] + self.nu_base.shape)
        return self.nu(t, X, self.L)

    def noise_terms(self, t: float, X: np.ndarray, dB: np.ndarray, dW: np.ndarray) -> np.ndarray:
        if self.sigma.is_constant:
            out = dB @ self.sigma_base.T
        else:
            out = np.einsum("nij,nj->ni", self.sigma(t, X, self.L), dB)
        if self.nu.is_constant:
            out += self.nu_base @ dW
        else:
            out += np.einsum("nij,j->ni", self.nu(t, X, self.L), dW)
        return out


def step_euler(ens: ParticleEnsemble, dt: float, dyn: Dynamics, dB: np.ndarray,
               dW: np.ndarray) -> ParticleEnsemble:
    """One Euler-Maruyama step, wrapped into the box."""
    X = ens.X
    if dB.shape != (X.shape[0], dyn.m) or np.shape(dW) != (dyn.m_tilde,):
        raise ValueError("increment shapes do not match the ensemble")
    new = X + dyn.drift(X) * dt + dyn.noise_terms(ens.t, X, dB, dW)
    if not np.all(np.isfinite(new)):
        bad = int(np.argmax(~np.all(np.isfinite(new), axis=1)))
        raise NumericalAbort(f"non-finite position for particle {bad} at t={ens.t + dt:.6g}")
    return ParticleEnsemble(_wrap(new, dyn.L), ens.t + dt, ens.replica, ens.path, ens.step + 1)


def _wrap(x: np.ndarray, L: float) -> np.ndarray:
    y = np.mod(x + L, 2.0 * L) - L
    return np.where(y >= L, -L, y)


@dataclass
class MartingaleLedger:
    """Running M^N(phi), Mhat^N(phi) and predicted quadratic covariations Q.

    Histories hold one row per step boundary (index 0 is t = 0).
    """

    tests: list[TestFunction]
    M: list[np.ndarray] = field(default_factory=list)
    Mhat: list[np.ndarray] = field(default_factory=list)
    Q: list[np.ndarray] = field(default_factory=list)
    times: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.M:
            n = len(self.tests)
            self.M.append(np.zeros(n))
            self.Mhat.append(np.zeros(n))
            self.Q.append(np.zeros((n, n)))
            self.times.append(0.0)

    @property
    def names(self) -> list[str]:
        return [tf.name for tf in self.tests]

    @property
    def M_series(self) -> np.ndarray:
        return np.array(self.M)

    @property
    def Mhat_series(self) -> np.ndarray:
        return np.array(self.Mhat)

    @property
    def Q_series(self) -> np.ndarray:
        return np.array(self.Q)


def _eta_pairing(f_particles: np.ndarray, f_grid: np.ndarray, rho: np.ndarray,
                 cell: float, N: int) -> np.ndarray:
    """<f, eta^N> = sqrt(N) (mean_i f(X_i) - h^d sum_g f rho), per trailing component."""
    lead = rho.ndim
    field_part = np.tensordot(rho, f_grid, axes=(tuple(range(lead)), tuple(range(lead)))) * cell
    return math.sqrt(N) * (f_particles.mean(axis=0) - field_part)


def accumulate_martingales(ledger: MartingaleLedger, ens: ParticleEnsemble, dyn: Dynamics,
                           dB: np.ndarray, dW: np.ndarray, dt: float,
                           rho: np.ndarray | None = None, grid: PeriodicGrid | None = None) -> None:
    """Add one step's contributions (left-point evaluation at ens.t)."""
    X, t, N = ens.X, ens.t, ens.N
    if dB.shape != (N, dyn.m) or np.shape(dW) != (dyn.m_tilde,):
        raise ValueError("increment shapes do not match the ensemble")
    n = len(ledger.tests)
    grads = np.stack([tf.grad(X) for tf in ledger.tests], axis=1)  # (N, n, d)
    sig = dyn.sigma_at(t, X)  # (N, d, m)
    sg = np.einsum("nij,nki->nkj", sig, grads)  # sigma^T grad phi: (N, n, m)
    dM = np.einsum("nkj,nj->k", sg, dB) / math.sqrt(N)
    dQ = np.einsum("nkj,nlj->kl", sg, sg) * (dt / N)
    dMhat = np.zeros(n)
    if np.any(dyn.nu_base) and np.any(dW):
        if rho is None or grid is None:
            raise ValueError("the common-noise martingale needs the mean-field density")
        nu_p = dyn.nu_at(t, X)
        f_p = np.einsum("nij,nki->nkj", nu_p, grads)  # (N, n, mt)
        xg = grid.coords
        ggrid = np.stack([tf.grad(xg) for tf in ledger.tests], axis=-2)  # (M^d, n, d)
        nu_g = dyn.nu_at(t, xg)
        f_g = np.einsum("...ij,...ki->...kj", nu_g, ggrid)
        pair = _eta_pairing(f_p, f_g, rho, grid.cell_volume, N)  # (n, mt)
        dMhat = pair @ dW
    ledger.M.append(ledger.M[-1] + dM)
    ledger.Mhat.append(ledger.Mhat[-1] + dMhat)
    ledger.Q.append(ledger.Q[-1] + dQ)
    ledger.times.append(t + dt)


@dataclass
class Trajectory:
    """Recorded snapshots and final state of one particle run."""

    snapshots: list[tuple[int, float, np.ndarray]]
    final: ParticleEnsemble
    ledger: MartingaleLedger | None
    X0: np.ndarray


def run_trajectory(cfg, replica: int, N: int, path: CommonNoisePath, *,
                   dyn: Dynamics | None = None, X0: np.ndarray | None = None,
                   noise=None, stride: int | None = None, tests: list[TestFunction] | None = None,
                   rho_path=None, observer: Callable[[int, float, np.ndarray], None] | None = None
                   ) -> Trajectory:
    """Simulate one replica over the path's increments.

    Streams are addressed by (seed, replica, N), so the result does not depend
    on which other replicas run or in which order.  ``rho_path`` (a
    DensityPath recorded at every step) is needed for the common-noise
    martingale when nu != 0.
    """
    plan = cfg.rng
    dyn = dyn or Dynamics.from_config(cfg)
    dt = path.dt
    if X0 is None:
        X0 = cfg.rho0.sample(N, cfg.d, cfg.L, cfg.M, plan.stream("initial", replica, N))
    noise = noise or idio_source(plan, replica, N, dyn.m)
    ens = ParticleEnsemble(np.array(X0, dtype=float), 0.0, replica, path, 0)
    ledger = MartingaleLedger(list(tests)) if tests else None
    snaps: list[tuple[int, float, np.ndarray]] = []
    if stride:
        snaps.append((0, 0.0, ens.X.copy()))
    if observer:
        observer(0, 0.0, ens.X)
    for n in range(path.n_steps):
        dB = noise.draw(dt)
        dW = path.increments[n]
        if ledger is not None:
            rho = rho_path.at_step(n) if rho_path is not None else None
            accumulate_martingales(ledger, ens, dyn, dB, dW, dt, rho,
                                   rho_path.grid if rho_path is not None else None)
        ens = step_euler(ens, dt, dyn, dB, dW)
        if stride and ((n + 1) % stride == 0 or n + 1 == path.n_steps):
            snaps.append((n + 1, ens.t, ens.X.copy()))
        if observer:
            observer(n + 1, ens.t, ens.X)
    return Trajectory(snaps, ens, ledger, np.asarray(X0))
