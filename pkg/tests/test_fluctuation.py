from __future__ import annotations

import math

import numpy as np
import pytest

from fluctlab.fluctuation import (FluctuationField, FluctuationSolver, analytic_variance,
                                  conditional_moments, fluct_step, gaussian_fluctuation,
                                  projected_fluctuation, run_fluctuation, white_noise)
from fluctlab.grid import PeriodicGrid
from fluctlab.meanfield import FokkerPlanckSolver, gaussian_on_grid
from fluctlab.noise import CommonNoisePath
from fluctlab.scenario import KernelSpec, RngPlan
from fluctlab.scenario.specs import CoefficientSpec
from fluctlab.statlab import jackknife_covariance, ks_normal

from conftest import small_config

TWO = (("b1", "bump(center=0.0, radius=2.0)"), ("b2", "bump(center=0.5, radius=2.0)"))


def _setup(**changes):
    cfg = small_config(M=64, n_steps=20, T=0.5, test_functions=TWO, **changes)
    solver = FokkerPlanckSolver.from_config(cfg)
    rho0 = cfg.rho0.on_grid(solver.grid.coords, cfg.L, cfg.M)
    path = CommonNoisePath.draw(cfg.rng, 0, cfg.n_steps, cfg.dt, cfg.m_tilde)
    return cfg, solver.grid, solver.solve(rho0, path, stride=1), path


def _covariance_quadrature(cfg, grid, rho_path, a, b):
    """Duality oracle for k=0, nu=0, sigma=s*I: sum_n dt <s^2 grad P_{T-t_n} phi_a . grad P_{T-t_n} phi_b, rho_n>."""
    tfs = cfg.tests()
    s2 = float(cfg.sigma.base(1)[0, 0]) ** 2
    fa, fb = np.fft.rfft(tfs[a](grid.coords)), np.fft.rfft(tfs[b](grid.coords))
    ks = 2 * np.pi * np.fft.rfftfreq(grid.M, d=grid.h)
    total = 0.0
    for n in range(cfg.n_steps):
        heat = np.exp(-0.5 * s2 * ks**2 * (cfg.T - n * cfg.dt))
        ga = np.fft.irfft(1j * ks * fa * heat, n=grid.M)
        gb = np.fft.irfft(1j * ks * fb * heat, n=grid.M)
        total += cfg.dt * s2 * float(np.sum(ga * gb * rho_path.at_step(n)) * grid.h)
    return total


def test_zero_forcing_zero_initial_stays_zero():
    cfg, grid, rp, path = _setup(sigma="constant(0.0)", nu="constant(0.5)",
                                 kernel="gaussian(amplitude=0.5, width=1.0)")
    run = run_fluctuation(cfg, rp, path.increments, 3)
    assert np.all(run.final == 0.0)
    assert np.all(run.pairings == 0.0)


def test_variance_uniform_density():
    # at short horizons the heat smoothing of phi is negligible and the variance is T <|grad phi|^2, rho>
    cfg = small_config(M=64, n_steps=10, T=0.02, test_functions=TWO, kernel="zero()",
                       sigma="constant(1.0)", nu="constant(0.0)", rho0="uniform(low=-8.0, high=8.0)")
    solver = FokkerPlanckSolver.from_config(cfg)
    grid = solver.grid
    rp = solver.solve(cfg.rho0.on_grid(grid.coords, cfg.L, cfg.M),
                      CommonNoisePath.draw(cfg.rng, 0, cfg.n_steps, cfg.dt, cfg.m_tilde), stride=1)
    run = run_fluctuation(cfg, rp, np.zeros((cfg.n_steps, 1)), 2000)
    tf = cfg.tests()[0]
    expected = cfg.T * float(np.sum(tf.grad(grid.coords)[..., 0] ** 2) / 16.0 * grid.h)
    v = run.pairings[-1, :, 0].var(ddof=1)
    assert abs(v / expected - 1.0) <= 0.10


def test_linearity_in_initial_field_and_forcing():
    grid = PeriodicGrid(1, 8.0, 64)
    solver = FluctuationSolver(grid, KernelSpec.parse("gaussian(amplitude=0.5, width=1.0)"),
                               CoefficientSpec.parse("constant(1.0)"), CoefficientSpec.parse("constant(0.5)"), 0.01)
    rng = np.random.default_rng(0)
    rho = gaussian_on_grid(grid, np.zeros(1), 0.5)
    eta0 = gaussian_fluctuation(rng, rho, grid)
    Gs = [white_noise(rng, grid, 1) for _ in range(10)]
    dWs = rng.standard_normal(10) * 0.1
    a, b = eta0.copy(), 2 * eta0
    for n in range(10):
        a = solver.fluct_step(a, rho, n * 0.01, dWs[n:n + 1], Gs[n])
        b = solver.fluct_step(b, rho, n * 0.01, dWs[n:n + 1], 2 * Gs[n])
    assert np.max(np.abs(b - 2 * a)) <= 1e-10


def test_fluct_step_wrapper():
    grid = PeriodicGrid(1, 8.0, 64)
    eta = FluctuationField(grid, np.zeros(64))
    out = fluct_step(eta, gaussian_on_grid(grid, np.zeros(1), 0.5), 0.01, KernelSpec(),
                     CoefficientSpec.parse("constant(1.0)"), CoefficientSpec.parse("constant(0.0)"),
                     np.zeros(1), white_noise(np.random.default_rng(1), grid, 1))
    assert out.t == pytest.approx(0.01)
    assert np.any(out.values != 0)
    assert abs(float(out.total())) <= 1e-12


def test_conditional_moments_zero_noise():
    cfg, grid, rp, path = _setup(sigma="constant(0.0)", nu="constant(0.5)")
    run = run_fluctuation(cfg, rp, path.increments, 100)
    mean, mean_se, var, var_se = conditional_moments(run.pairings[:, :, 0])
    assert np.all(var == 0.0)


def test_conditional_moments_require_runs():
    with pytest.raises(ValueError):
        conditional_moments(np.zeros((3, 50)))


def test_conditional_variance_matches_covariance_quadrature():
    cfg, grid, rp, path = _setup(kernel="zero()", sigma="constant(1.0)", nu="constant(0.0)")
    run = run_fluctuation(cfg, rp, path.increments, 2000)
    mean, mean_se, var, var_se = conditional_moments(run.pairings[:, :, 0])
    target = _covariance_quadrature(cfg, grid, rp, 0, 0)
    assert abs(var[-1] - target) <= 3 * var_se[-1]
    assert np.all(np.abs(mean[1:]) <= 4 * mean_se[1:])


def test_solver_output_conditionally_gaussian():
    cfg, grid, rp, path = _setup(kernel="gaussian(amplitude=0.5, width=1.0)", sigma="constant(0.5)",
                                 nu="constant(0.5)")
    run = run_fluctuation(cfg, rp, path.increments, 2000)
    _, p = ks_normal(run.pairings[-1, :, 0])
    assert p > 0.01


def test_covariance_bilinearity():
    cfg, grid, rp, path = _setup(kernel="zero()", sigma="constant(1.0)", nu="constant(0.0)")
    run = run_fluctuation(cfg, rp, path.increments, 2000)
    cov, se = jackknife_covariance(run.pairings[-1, :, 0], run.pairings[-1, :, 1])
    target = _covariance_quadrature(cfg, grid, rp, 0, 1)
    assert abs(cov - target) <= 4 * se


def test_pathwise_determinism():
    cfg, grid, rp, path = _setup(kernel="gaussian(amplitude=0.5, width=1.0)", sigma="constant(0.5)",
                                 nu="constant(0.5)")
    a = run_fluctuation(cfg, rp, path.increments, 5, eta0="gaussian")
    b = run_fluctuation(cfg, rp, path.increments, 5, eta0="gaussian")
    assert np.array_equal(a.final, b.final)
    assert np.array_equal(a.pairings, b.pairings)


def test_total_integral_conserved():
    cfg, grid, rp, path = _setup(kernel="gaussian(amplitude=0.5, width=1.0)", sigma="constant(0.5)",
                                 nu="constant(0.5)")
    run = run_fluctuation(cfg, rp, path.increments, 20, eta0="projected", N0=500)
    assert run.total_drift <= 1e-6


def test_white_noise_statistics():
    grid = PeriodicGrid(1, 8.0, 128)
    G = white_noise(np.random.default_rng(2), grid, 2, batch=200)
    assert G.shape == (200, 128, 2)
    flat = G.reshape(-1) * math.sqrt(grid.cell_volume)
    assert abs(flat.mean()) <= 5 / math.sqrt(flat.size)
    assert abs(flat.var() - 1) <= 5 * math.sqrt(2 / flat.size)
    C = np.corrcoef(G.reshape(200, -1).T[:20])
    assert np.max(np.abs(C - np.eye(20))) < 5 / math.sqrt(200)


def test_gaussian_initial_field_covariance():
    grid = PeriodicGrid(1, 8.0, 64)
    rho = gaussian_on_grid(grid, np.zeros(1), 0.5)
    eta = gaussian_fluctuation(np.random.default_rng(3), rho, grid, batch=4000)
    f = np.exp(-(grid.axis - 0.3) ** 2)
    pair = eta @ f * grid.h
    v, se = jackknife_covariance(pair, pair)
    assert abs(v - analytic_variance(rho, grid, f)) <= 4 * se
    assert np.max(np.abs(grid.integrate(eta))) <= 1e-12


def test_projected_fluctuation_pairs_like_particles():
    grid = PeriodicGrid(1, 8.0, 128)
    rho = gaussian_on_grid(grid, np.zeros(1), 0.5)
    X = np.random.default_rng(4).normal(scale=math.sqrt(0.5), size=(1000, 1))
    eta = projected_fluctuation(X, rho, grid)
    # a band-limited test function pairs exactly with the projection
    f = np.cos(3 * math.pi / 8 * grid.axis)
    direct = math.sqrt(1000) * (np.cos(3 * math.pi / 8 * X[:, 0]).mean() - float(np.sum(f * rho) * grid.h))
    assert float(np.sum(f * eta) * grid.h) == pytest.approx(direct, abs=1e-10)


def test_unknown_eta0_mode():
    cfg, grid, rp, path = _setup()
    with pytest.raises(ValueError):
        run_fluctuation(cfg, rp, path.increments, 2, eta0="bogus")
