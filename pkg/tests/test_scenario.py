from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from fluctlab.grid import PeriodicGrid
from fluctlab.scenario import (CoefficientSpec, ConfigError, DensitySpec, KernelSpec, RngPlan,
                               ScenarioConfig, build_test_function, config_manifest, load_config,
                               parse_config_text, sample_initial, save_config)

from conftest import small_config

MINIMAL_D1 = """
[scenario]
d = 1
[spectral]
alpha = 1.0
"""


def test_minimal_d1_config_accepted():
    cfg = parse_config_text(MINIMAL_D1)
    assert cfg.d == 1 and cfg.alpha == 1.0


def test_d2_alpha_one_rejected():
    with pytest.raises(ConfigError, match="alpha must exceed d/2"):
        parse_config_text("[scenario]\nd = 2\n[spectral]\nalpha = 1.0\n")


def test_manifest_identical_across_loads(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[scenario]\nN_list = 500, 1000, 2000\nseed = 42\n")
    a = config_manifest(load_config(p))
    b = config_manifest(load_config(p))
    assert a == b
    assert json.loads(a)["config"]["seed"] == 42


@pytest.mark.parametrize("text, msg", [
    ("[scenario]\nn_steps = 0\n", "n_steps"),
    ("[grid]\nM = 100\n", "power of two"),
    ("[spectral]\nfreq_size = 12\n", "power of two"),
    ("[scenario]\nN_list = 500, 400\n", "strictly increasing"),
    ("[scenario]\nT = -1\n", "T must be positive"),
    ("[grid]\nL = 0\n", "L must be positive"),
    ("[scenario]\nbogus = 1\n", "unknown key"),
    ("[nosuch]\nx = 1\n", "unknown config sections"),
    ("not an ini file", "malformed"),
    ("[model]\nkernel = spiral(a=1)\n", "unknown kernel"),
])
def test_validation_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config_text(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.toml")


def test_manifest_json_accepted_as_config(tmp_path):
    cfg = small_config()
    p = tmp_path / "manifest.json"
    p.write_text(json.dumps({"config": cfg.to_dict()}))
    assert load_config(p) == cfg


def test_shipped_default_config_loads():
    from importlib.resources import files
    cfg = load_config(files("fluctlab.configs") / "default.ini")
    assert cfg.N_list == (250, 500, 1000, 2000, 4000, 8000)
    assert cfg.replicas == 200


_kernels = st.sampled_from(["zero()", "gaussian(amplitude=0.5, width=1.0)",
                            "gaussian_derivative(amplitude=1.5, width=0.7)", "bump(amplitude=2.0, radius=1.5)"])
_coeffs = st.sampled_from(["constant(0.5)", "constant(1.0)", "smooth(value=0.8, eps=0.2, wave=1, omega=1.0)"])
_rho0 = st.sampled_from(["gaussian(mean=0.0, var=0.25)", "uniform(low=-1.0, high=1.0)",
                         "mixture(weights=(0.3, 0.7), means=(-1.0, 1.0), vars=(0.2, 0.5))",
                         "atom(at=0.0)"])


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 4), T=st.floats(0.01, 5.0), steps=st.integers(1, 500),
       seed=st.integers(0, 2**31), kernel=_kernels, sigma=_coeffs, nu=_coeffs, rho0=_rho0,
       alpha=st.floats(0.51, 3.0), M=st.sampled_from([32, 64, 256]))
def test_config_round_trip(tmp_path_factory, n, T, steps, seed, kernel, sigma, nu, rho0, alpha, M):
    N_list = tuple(100 * 2**i for i in range(n))
    cfg = ScenarioConfig(d=1, N_list=N_list, T=T, n_steps=steps, seed=seed, alpha=alpha, M=M,
                         stride=1).replace(kernel=kernel, sigma=sigma, nu=nu, rho0=rho0)
    p = tmp_path_factory.mktemp("cfg") / "c.ini"
    save_config(cfg, p)
    back = load_config(p)
    assert back == cfg
    for f in ("kernel", "sigma", "nu", "rho0"):
        assert str(getattr(back, f)) == str(getattr(cfg, f))


# -- sampling -----------------------------------------------------------------------------------


def test_uniform_sample_mean():
    X = sample_initial(DensitySpec.parse("uniform(low=-1.0, high=1.0)"), 100_000,
                       RngPlan(1).stream("aux", 0))
    assert X.shape == (100_000, 1)
    assert abs(X.mean()) <= 0.02


def test_truncated_gaussian_variance_oracle():
    L = 8.0
    mass = integrate.quad(stats.norm.pdf, -L, L)[0]
    var = integrate.quad(lambda x: x * x * stats.norm.pdf(x), -L, L)[0] / mass
    X = sample_initial(DensitySpec.parse("gaussian(mean=0.0, var=1.0)"), 100_000,
                       RngPlan(2).stream("aux", 0), L=L)
    assert abs(X.var() / var - 1.0) <= 0.02
    assert np.all((X >= -L) & (X < L))


def test_sample_zero_particles():
    X = sample_initial(DensitySpec(), 0, RngPlan(0).stream("aux", 0))
    assert X.shape == (0, 1)


def test_sample_mean_within_five_se():
    spec = DensitySpec.parse("mixture(weights=(0.3, 0.7), means=(-1.0, 1.0), vars=(0.2, 0.5))")
    X = sample_initial(spec, 20_000, RngPlan(3).stream("aux", 0))
    se = X.std() / math.sqrt(X.shape[0])
    assert abs(X.mean() - spec.mean(1)[0]) <= 5 * se


def test_unnormalisable_density_rejected():
    spec = DensitySpec.parse("gaussian(mean=100.0, var=0.01)")
    with pytest.raises(ConfigError):
        sample_initial(spec, 10, RngPlan(0).stream("aux", 0), L=8.0)


def test_atom_density_on_grid_has_unit_mass():
    grid = PeriodicGrid(1, 8.0, 64)
    rho = DensitySpec.parse("atom(at=0.3)").on_grid(grid.coords, 8.0, 64)
    assert math.isclose(rho.sum() * grid.h, 1.0)
    assert np.count_nonzero(rho) == 1


# -- coefficients and kernels ---------------------------------------------------------------


@pytest.mark.parametrize("text", ["gaussian(amplitude=0.5, width=1.0)", "bump(amplitude=2.0, radius=1.5)"])
def test_kernel_bounded_and_square_integrable(text):
    k = KernelSpec.parse(text)
    z = np.linspace(-8, 8, 20001)[:, None]
    assert np.max(np.abs(k(z))) <= k.sup_norm() + 1e-15
    estimates = []
    for M in (64, 256, 1024, 4096):
        zz = np.linspace(-8, 8, M, endpoint=False)[:, None]
        estimates.append(float(np.sum(k(zz) ** 2) * 16.0 / M))
    diffs = np.abs(np.diff(estimates))
    assert diffs[-1] < 1e-8
    assert diffs[-1] <= diffs[0]


def test_kernel_gaussian_fourier_closed_form():
    k = KernelSpec.parse("gaussian(amplitude=0.5, width=1.3)")
    xi = np.array([[0.0], [0.7], [2.0]])
    z = np.linspace(-20, 20, 40001)
    num = [np.trapezoid(np.exp(-1j * x[0] * z) * k(z[:, None])[:, 0], z) / math.sqrt(2 * math.pi) for x in xi]
    assert np.allclose(k.fourier(xi)[:, 0], num, atol=1e-10)


def test_gaussian_derivative_is_odd():
    k = KernelSpec.parse("gaussian_derivative(amplitude=1.0, width=0.8)")
    z = np.random.default_rng(0).normal(size=(50, 2))
    assert np.allclose(k(-z), -k(z))


def test_ellipticity_floor_holds_pointwise():
    spec = CoefficientSpec.parse("smooth(value=((1.0, 0.2), (0.0, 0.8)), eps=0.3, wave=(1, 2), omega=2.0)")
    delta = spec.ellipticity_floor(2)
    rng = np.random.default_rng(4)
    t = rng.uniform(0, 5, 1000)
    x = rng.uniform(-8, 8, (1000, 2))
    for ti, xi in zip(t, x):
        s = spec(ti, xi[None], 8.0)[0]
        assert np.linalg.eigvalsh(s @ s.T).min() >= delta - 1e-12


def test_coefficient_eps_out_of_range():
    with pytest.raises(ConfigError):
        CoefficientSpec.parse("smooth(value=1.0, eps=1.5)")


# -- test functions ---------------------------------------------------------------------------


@pytest.mark.parametrize("d, text", [
    (1, "bump(center=0.0, radius=2.0)"), (2, "bump(center=(0.5, -0.3), radius=1.5)"),
    (1, "window(inner=1.0, outer=3.0)"), (1, "poly(axis=0, power=2, inner=2.0, outer=4.0)"),
    (2, "poly(axis=1, power=1, inner=1.0, outer=2.5)"),
])
def test_test_function_gradient_matches_finite_differences(d, text):
    tf = build_test_function("f", text, d)
    rng = np.random.default_rng(5)
    r = tf.support_radius
    x = rng.uniform(-r, r, (100, d))
    g = tf.grad(x)
    H = tf.hess(x)
    eps = 1e-6
    for ax in range(d):
        e = np.zeros(d)
        e[ax] = eps
        fd = (tf(x + e) - tf(x - e)) / (2 * eps)
        scale = np.maximum(np.abs(g[:, ax]), 1e-3)
        assert np.all(np.abs(fd - g[:, ax]) / scale <= 1e-6)
        fdh = (tf.grad(x + e) - tf.grad(x - e)) / (2 * eps)
        assert np.allclose(fdh, H[:, :, ax], atol=1e-6)


def test_test_function_compact_support():
    tf = build_test_function("b", "bump(center=1.0, radius=2.0)", 1)
    x = np.array([[-1.0], [3.0], [3.5], [-4.0]])
    assert np.all(tf(x) == 0.0)


def test_test_function_outside_box_rejected():
    with pytest.raises(ConfigError, match="not supported inside the box"):
        small_config(test_functions=(("far", "bump(center=7.5, radius=2.0)"),))


# -- rng -----------------------------------------------------------------------------------------


def test_streams_addressed_by_name():
    plan = RngPlan(42)
    a = plan.stream("idio", 3, 100).standard_normal(5)
    b = plan.stream("idio", 3, 100).standard_normal(5)
    c = plan.stream("idio", 4, 100).standard_normal(5)
    d = plan.stream("common", 3, 100).standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_rng_unknown_kind():
    with pytest.raises(ValueError):
        RngPlan(1).stream("nope", 0)
