from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from fluctlab.errors import StabilityError
from fluctlab.grid import PeriodicGrid
from fluctlab.meanfield import (DensityField, FokkerPlanckSolver, convolve, fp_step, gaussian_on_grid,
                                pair_with)
from fluctlab.noise import CommonNoisePath
from fluctlab.particles import run_trajectory
from fluctlab.scenario import KernelSpec, RngPlan, build_test_function
from fluctlab.scenario.specs import CoefficientSpec
from fluctlab.statlab import fit_power_law

from conftest import small_config

ZERO = KernelSpec()


def _coef(text):
    return CoefficientSpec.parse(text)


def test_conditional_gaussian_oracle():
    grid = PeriodicGrid(1, 8.0, 256)
    s, v, c2, T, n = 0.8, 0.5, 0.25, 0.5, 400
    solver = FokkerPlanckSolver(grid, ZERO, _coef(f"constant({s})"), _coef(f"constant({v})"), T / n)
    for pid in range(3):
        path = CommonNoisePath.draw(RngPlan(pid), pid, n, T / n, 1)
        rho = solver.solve(gaussian_on_grid(grid, np.zeros(1), c2), path).final
        exact = gaussian_on_grid(grid, np.array([v * path.W[-1, 0]]), c2 + s * s * T)
        assert np.linalg.norm(rho - exact) / np.linalg.norm(exact) <= 1e-3


def test_heat_multiplier_is_exact_integrating_factor():
    grid = PeriodicGrid(1, 8.0, 128)
    dt = 0.01
    solver = FokkerPlanckSolver(grid, ZERO, _coef("constant(1.0)"), _coef("constant(0.0)"), dt)
    k = grid.rwavenumbers[0]
    # generator 1/2 Laplacian for sigma = I
    expected = np.exp(-0.5 * k**2 * dt) * grid.nyquist_mask
    assert np.max(np.abs(solver.diffusion_multiplier - expected)) <= 1e-12


def test_mass_after_many_steps():
    cfg = small_config(kernel="gaussian(amplitude=0.5, width=1.0)", sigma="constant(0.5)",
                       nu="constant(0.5)", n_steps=1000, T=1.0, M=128)
    solver = FokkerPlanckSolver.from_config(cfg)
    rho0 = cfg.rho0.on_grid(solver.grid.coords, cfg.L, cfg.M)
    path = CommonNoisePath.draw(cfg.rng, 0, cfg.n_steps, cfg.dt, 1)
    out = solver.solve(rho0, path)
    assert abs(solver.grid.integrate(out.final) - 1.0) <= 1e-8
    assert not out.flags


@pytest.mark.parametrize("kernel, sigma, nu", [
    ("zero()", "constant(1.0)", "constant(0.0)"),
    ("gaussian(amplitude=0.5, width=1.0)", "constant(0.5)", "constant(0.5)"),
    ("gaussian_derivative(amplitude=1.0, width=0.7)", "smooth(value=0.6, eps=0.2, omega=1.0)", "constant(0.3)"),
    ("bump(amplitude=1.0, radius=1.5)", "constant(0.7)", "smooth(value=0.4, eps=0.3)"),
])
def test_mass_conservation_per_step(kernel, sigma, nu):
    grid = PeriodicGrid(1, 8.0, 128)
    solver = FokkerPlanckSolver(grid, KernelSpec.parse(kernel), _coef(sigma), _coef(nu), 0.005)
    rho = gaussian_on_grid(grid, np.zeros(1), 0.5)
    rng = np.random.default_rng(0)
    for n in range(50):
        dW = rng.standard_normal(solver.nu_base.shape[1]) * math.sqrt(0.005)
        new = solver.step(rho, n * 0.005, dW)
        assert abs(grid.integrate(new) - grid.integrate(rho)) <= 1e-10
        rho = new


def test_variable_coefficients_two_dimensions():
    grid = PeriodicGrid(2, 6.0, 32)
    solver = FokkerPlanckSolver(grid, KernelSpec.parse("gaussian(amplitude=0.5, width=1.0)"),
                                _coef("smooth(value=0.6, eps=0.2, wave=(1, 1), omega=1.0)"),
                                _coef("constant(0.3)"), 0.01)
    rho0 = gaussian_on_grid(grid, np.zeros(2), 0.5)
    path = CommonNoisePath.draw(RngPlan(1), 0, 20, 0.01, 2)
    out = solver.solve(rho0, path)
    assert abs(grid.integrate(out.final) - 1.0) <= 1e-8
    assert np.all(np.isfinite(out.final))


def test_convolve_zero_kernel():
    grid = PeriodicGrid(1, 8.0, 64)
    assert np.all(convolve(ZERO, DensityField(grid, gaussian_on_grid(grid, np.zeros(1), 1.0))) == 0)


def test_convolve_gaussian_closed_form():
    grid = PeriodicGrid(1, 8.0, 256)
    A, w, s2 = 0.7, 0.8, 0.5
    k = KernelSpec.parse(f"gaussian(amplitude={A}, width={w})")
    rho = gaussian_on_grid(grid, np.zeros(1), s2)
    got = convolve(k, DensityField(grid, rho))[..., 0]
    x = grid.axis
    exact = A * w / math.sqrt(w * w + s2) * np.exp(-x**2 / (2 * (w * w + s2)))
    assert np.max(np.abs(got - exact)) <= 1e-8


def test_convolve_spike_reproduces_kernel():
    grid = PeriodicGrid(1, 8.0, 256)
    k = KernelSpec.parse("gaussian(amplitude=1.0, width=1.0)")
    j0 = 100
    spike = np.zeros(grid.shape)
    spike[j0] = 1.0 / grid.h
    got = convolve(k, DensityField(grid, spike), dealias=False)[..., 0]
    x0 = grid.axis[j0]
    assert np.max(np.abs(got - k(grid.minimal_image(grid.axis - x0)[:, None])[:, 0])) <= 1e-12


def test_pair_with_examples():
    grid = PeriodicGrid(1, 8.0, 256)
    rho = DensityField(grid, gaussian_on_grid(grid, np.zeros(1), 1.0))
    assert math.isclose(pair_with(rho, lambda x: np.ones(x.shape[:-1])), 1.0, abs_tol=1e-12)
    bump = build_test_function("b", "bump(center=0.0, radius=6.0)", 1)
    odd = pair_with(rho, lambda x: x[..., 0] * bump(x))
    assert abs(odd) <= 1e-10
    wide = build_test_function("w", "window(inner=6.0, outer=7.9)", 1)
    second = pair_with(rho, lambda x: x[..., 0] ** 2 * wide(x))
    assert abs(second - 1.0) <= 1e-4


def test_stability_failure_aborts():
    grid = PeriodicGrid(1, 8.0, 64)
    solver = FokkerPlanckSolver(grid, KernelSpec.parse("gaussian(amplitude=400.0, width=0.3)"),
                                _coef("constant(0.1)"), _coef("constant(0.0)"), 0.5)
    rho = gaussian_on_grid(grid, np.zeros(1), 0.3)
    with pytest.raises(StabilityError, match="suggest dt"):
        for n in range(20):
            rho = solver.check(solver.step(rho, 0.0, np.zeros(1)), [], n)


def test_fp_step_single():
    grid = PeriodicGrid(1, 8.0, 128)
    f = DensityField(grid, gaussian_on_grid(grid, np.zeros(1), 0.5))
    g = fp_step(f, 0.01, ZERO, _coef("constant(1.0)"), _coef("constant(1.0)"), np.array([0.1]))
    assert math.isclose(g.t, 0.01)
    assert abs(g.mass() - 1.0) <= 1e-10
    mean = float(np.sum(grid.axis * g.values) * grid.h)
    assert math.isclose(mean, 0.1, abs_tol=1e-9)


def test_particle_histogram_converges_at_monte_carlo_rate():
    cfg = small_config(kernel="zero()", sigma="constant(0.5)", nu="constant(0.5)", n_steps=10, M=128)
    solver = FokkerPlanckSolver.from_config(cfg)
    grid = solver.grid
    path = CommonNoisePath.draw(cfg.rng, 0, cfg.n_steps, cfg.dt, 1)
    rho_T = solver.solve(cfg.rho0.on_grid(grid.coords, cfg.L, cfg.M), path).final
    edges = np.linspace(-cfg.L, cfg.L, 33)
    # bin edges sit on grid nodes: Simpson's rule over the 8 cells of each bin
    per = grid.M // 32
    vals_ext = np.append(rho_T, rho_T[0])
    cell_mass = np.array([integrate.simpson(vals_ext[b * per:(b + 1) * per + 1], dx=grid.h)
                          for b in range(32)])
    Ns = [1000, 4000, 16000, 64000]
    dist = []
    for N in Ns:
        vals = []
        for r in range(10):
            X = run_trajectory(cfg, r, N, path).final.X[:, 0]
            vals.append(np.abs(np.histogram(X, edges)[0] / N - cell_mass).sum())
        dist.append(np.mean(vals))
    fit = fit_power_law(Ns, dist)
    assert -0.65 <= fit.slope <= -0.35


def test_step_halving_ratio():
    cfg = small_config(kernel="gaussian(amplitude=1.0, width=1.0)", sigma="constant(0.5)",
                       nu="constant(0.5)", n_steps=8, T=0.5, M=128)
    plan = cfg.rng
    path = CommonNoisePath.draw(plan, 0, cfg.n_steps, cfg.dt, 1)
    grid = PeriodicGrid(1, cfg.L, cfg.M)
    rho0 = cfg.rho0.on_grid(grid.coords, cfg.L, cfg.M)
    finals = []
    for _ in range(4):
        solver = FokkerPlanckSolver(grid, cfg.kernel, cfg.sigma, cfg.nu, path.dt)
        finals.append(solver.solve(rho0, path).final)
        path = path.refine(plan)
    d = [np.linalg.norm(a - b) for a, b in zip(finals, finals[1:])]
    assert 1.7 <= d[1] / d[2] <= 2.3


def test_refine_preserves_path():
    path = CommonNoisePath.draw(RngPlan(0), 0, 16, 0.1, 1)
    fine = path.refine(RngPlan(0))
    assert fine.n_steps == 32
    assert np.allclose(fine.W[::2], path.W, atol=1e-14)
