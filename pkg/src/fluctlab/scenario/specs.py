"""Coefficient, kernel and initial-density catalogues.

Every spec is written in config files as a call-like string, e.g.
``gaussian(amplitude=0.5, width=1.0)``.  Parsing goes through :mod:`ast`, so
argument values are Python literals (numbers, tuples, nested lists).
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import special


class ConfigError(ValueError):
    """Raised for malformed or invalid scenario descriptions."""


def _freeze(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    return value


def parse_call(text: str) -> tuple[str, dict[str, Any]]:
    """Split ``name(key=value, ...)`` into its name and literal arguments.

    A single positional argument is accepted and stored under ``value``.
    """
    try:
        node = ast.parse(text.strip(), mode="eval").body
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse spec {text!r}: {exc.msg}") from None
    if isinstance(node, ast.Name):
        return node.id, {}
    if not isinstance(node, ast.Call) or not isinstance(node.func, ast.Name):
        raise ConfigError(f"spec {text!r} is not of the form name(key=value, ...)")
    if len(node.args) > 1:
        raise ConfigError(f"spec {text!r}: at most one positional argument")
    params: dict[str, Any] = {}
    try:
        if node.args:
            params["value"] = _freeze(ast.literal_eval(node.args[0]))
        for kw in node.keywords:
            if kw.arg is None:
                raise ConfigError(f"spec {text!r}: ** arguments are not allowed")
            params[kw.arg] = _freeze(ast.literal_eval(kw.value))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"spec {text!r}: arguments must be literals ({exc})") from None
    return node.func.id, params


def format_call(name: str, params: dict[str, Any]) -> str:
    inner = ", ".join(f"{k}={v!r}" for k, v in params.items() if v is not None)
    return f"{name}({inner})"


def _take(params: dict[str, Any], allowed: dict[str, Any], where: str) -> dict[str, Any]:
    unknown = set(params) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown argument(s) {sorted(unknown)}")
    out = dict(allowed)
    out.update(params)
    return out


# --------------------------------------------------------------------------
# interaction kernels
# --------------------------------------------------------------------------

KERNEL_VARIANTS = ("zero", "gaussian", "gaussian_derivative", "bump")


@dataclass(frozen=True)
class KernelSpec:
    """Bounded, square-integrable interaction kernel k: R^d -> R^d.

    ``gaussian`` and ``bump`` are scalar profiles times a fixed unit
    ``direction`` (default (1,...,1)/sqrt(d)); ``gaussian_derivative`` is the
    odd kernel A (z/w) exp(-|z|^2 / 2w^2).  ``scale`` is the Gaussian width
    or the bump radius.
    """

    variant: str = "zero"
    amplitude: float = 0.0
    scale: float = 1.0
    direction: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.variant not in KERNEL_VARIANTS:
            raise ConfigError(f"unknown kernel variant {self.variant!r}")
        if self.scale <= 0:
            raise ConfigError("kernel width/radius must be positive")
        if not math.isfinite(self.amplitude):
            raise ConfigError("kernel amplitude must be finite")

    @classmethod
    def parse(cls, text: str) -> KernelSpec:
        name, params = parse_call(text)
        if name == "zero":
            _take(params, {}, "zero kernel")
            return cls("zero")
        if name in ("gaussian", "gaussian_derivative"):
            p = _take(params, {"amplitude": 1.0, "width": 1.0, "direction": None}, name)
            return cls(name, float(p["amplitude"]), float(p["width"]), p["direction"])
        if name == "bump":
            p = _take(params, {"amplitude": 1.0, "radius": 1.0, "direction": None}, name)
            return cls(name, float(p["amplitude"]), float(p["radius"]), p["direction"])
        raise ConfigError(f"unknown kernel variant {name!r}")

    def __str__(self) -> str:
        if self.variant == "zero":
            return "zero()"
        key = "radius" if self.variant == "bump" else "width"
        params = {"amplitude": self.amplitude, key: self.scale}
        if self.direction is not None and self.variant != "gaussian_derivative":
            params["direction"] = self.direction
        return format_call(self.variant, params)

    @property
    def is_zero(self) -> bool:
        return self.variant == "zero" or self.amplitude == 0.0

    def unit_direction(self, d: int) -> np.ndarray:
        if self.direction is None:
            return np.full(d, 1.0 / math.sqrt(d))
        u = np.asarray(self.direction, dtype=float).reshape(-1)
        if u.size != d:
            raise ConfigError(f"kernel direction has {u.size} entries, expected d={d}")
        return u / np.linalg.norm(u)

    def profile(self, r2: np.ndarray) -> np.ndarray:
        """Scalar profile as a function of |z|^2."""
        r2 = np.asarray(r2, dtype=float)
        if self.variant in ("gaussian", "gaussian_derivative"):
            return self.amplitude * np.exp(-r2 / (2.0 * self.scale**2))
        if self.variant == "bump":
            s = r2 / self.scale**2
            out = np.zeros_like(s)
            inside = s < 1.0
            out[inside] = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - s[inside]))
            return out
        return np.zeros_like(r2)

    def __call__(self, z: np.ndarray) -> np.ndarray:
        """Evaluate k at displacements ``z`` of shape (..., d); returns (..., d)."""
        z = np.asarray(z, dtype=float)
        d = z.shape[-1]
        if self.is_zero:
            return np.zeros_like(z)
        r2 = np.einsum("...i,...i->...", z, z)
        prof = self.profile(r2)
        if self.variant == "gaussian_derivative":
            return prof[..., None] * z / self.scale
        return prof[..., None] * self.unit_direction(d)

    def sup_norm(self) -> float:
        if self.is_zero:
            return 0.0
        if self.variant == "gaussian_derivative":
            return abs(self.amplitude) * math.exp(-0.5)
        return abs(self.amplitude)

    def support_radius(self, tol: float = 1e-16) -> float:
        """Radius beyond which |k| stays below ``tol * sup|k|``."""
        if self.is_zero:
            return 0.0
        if self.variant == "bump":
            return self.scale
        # gaussian tails; the derivative variant decays at the same rate up to a polynomial factor
        return self.scale * math.sqrt(2.0 * math.log(1.0 / tol)) * 1.05

    def fourier(self, xi: np.ndarray) -> np.ndarray | None:
        """Closed-form transform (2pi)^{-d/2} int e^{-i xi.z} k(z) dz, or None.

        ``xi`` has shape (..., d); the result has shape (..., d) (complex).
        """
        xi = np.asarray(xi, dtype=float)
        d = xi.shape[-1]
        if self.is_zero:
            return np.zeros(xi.shape, dtype=complex)
        w = self.scale
        xi2 = np.einsum("...i,...i->...", xi, xi)
        g = np.exp(-0.5 * w**2 * xi2)
        if self.variant == "gaussian":
            return (self.amplitude * w**d * g)[..., None] * self.unit_direction(d) + 0j
        if self.variant == "gaussian_derivative":
            return -1j * self.amplitude * w ** (d + 1) * g[..., None] * xi
        return None


# --------------------------------------------------------------------------
# diffusion coefficients sigma(t, x), nu(t, x)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CoefficientSpec:
    """Constant matrix or smooth periodic modulation of a base matrix.

    ``smooth`` means ``base * (1 + eps * sin(pi * wave.x / L + omega * t))``;
    ``wave`` holds integers so the coefficient is periodic on [-L, L)^d.
    ``value`` is a scalar (times identity) or a nested d x m tuple.
    """

    variant: str = "constant"
    value: Any = 0.0
    eps: float = 0.0
    wave: tuple[int, ...] | None = None
    omega: float = 0.0

    def __post_init__(self) -> None:
        if self.variant not in ("constant", "smooth"):
            raise ConfigError(f"unknown coefficient variant {self.variant!r}")
        if not 0.0 <= self.eps < 1.0:
            raise ConfigError("modulation eps must lie in [0, 1)")

    @classmethod
    def parse(cls, text: str) -> CoefficientSpec:
        name, params = parse_call(text)
        if name == "constant":
            p = _take(params, {"value": 0.0}, "constant coefficient")
            return cls("constant", p["value"])
        if name == "smooth":
            p = _take(params, {"value": 1.0, "eps": 0.1, "wave": None, "omega": 0.0},
                      "smooth coefficient")
            wave = None if p["wave"] is None else tuple(int(v) for v in np.atleast_1d(p["wave"]))
            return cls("smooth", p["value"], float(p["eps"]), wave, float(p["omega"]))
        raise ConfigError(f"unknown coefficient variant {name!r}")

    def __str__(self) -> str:
        if self.variant == "constant":
            return format_call("constant", {"value": self.value})
        return format_call("smooth", {"value": self.value, "eps": self.eps,
                                      "wave": self.wave, "omega": self.omega})

    def base(self, d: int) -> np.ndarray:
        """Base matrix of shape (d, m)."""
        v = np.asarray(self.value, dtype=float)
        if v.ndim == 0:
            return float(v) * np.eye(d)
        if v.ndim == 1:
            v = v.reshape(d, -1) if v.size % d == 0 else v
        if v.ndim != 2 or v.shape[0] != d:
            raise ConfigError(f"coefficient matrix must have {d} rows, got shape {v.shape}")
        return v

    def noise_dim(self, d: int) -> int:
        return self.base(d).shape[1]

    @property
    def is_constant(self) -> bool:
        return self.variant == "constant" or self.eps == 0.0

    def is_zero(self, d: int) -> bool:
        return not np.any(self.base(d))

    def _wave(self, d: int) -> np.ndarray:
        if self.wave is None:
            return np.ones(d)
        w = np.asarray(self.wave, dtype=float)
        if w.size != d:
            raise ConfigError(f"wave vector needs {d} entries")
        return w

    def modulation(self, t: float, x: np.ndarray, L: float) -> np.ndarray:
        """Scalar factor 1 + eps sin(...) at points x of shape (..., d)."""
        x = np.asarray(x, dtype=float)
        if self.is_constant:
            return np.ones(x.shape[:-1])
        phase = np.pi * (x @ self._wave(x.shape[-1])) / L + self.omega * t
        return 1.0 + self.eps * np.sin(phase)

    def __call__(self, t: float, x: np.ndarray, L: float) -> np.ndarray:
        """Matrix field at points x (..., d); returns (..., d, m)."""
        x = np.asarray(x, dtype=float)
        b = self.base(x.shape[-1])
        return self.modulation(t, x, L)[..., None, None] * b

    def bounds(self) -> tuple[float, float]:
        """Range of the scalar modulation factor."""
        return (1.0 - self.eps, 1.0 + self.eps) if not self.is_constant else (1.0, 1.0)

    def ellipticity_floor(self, d: int) -> float:
        """Lower bound delta with sigma sigma^T >= delta I pointwise."""
        b = self.base(d)
        lam = float(np.linalg.eigvalsh(b @ b.T).min())
        return max(lam, 0.0) * self.bounds()[0] ** 2


# --------------------------------------------------------------------------
# initial densities
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DensitySpec:
    """Initial density rho_0, truncated to the box and renormalised.

    Variants: ``gaussian(mean, var)``, ``mixture(weights, means, vars)``
    (isotropic components), ``uniform(low, high)`` on [low, high]^d and
    ``atom(at)``, a unit point mass sitting on the grid node nearest ``at``.
    """

    variant: str = "gaussian"
    weights: tuple[float, ...] = (1.0,)
    means: tuple[Any, ...] = (0.0,)
    variances: tuple[float, ...] = (1.0,)
    low: float = -1.0
    high: float = 1.0

    def __post_init__(self) -> None:
        if self.variant not in ("gaussian", "mixture", "uniform", "atom"):
            raise ConfigError(f"unknown density variant {self.variant!r}")
        if self.variant in ("gaussian", "mixture"):
            if not (len(self.weights) == len(self.means) == len(self.variances)):
                raise ConfigError("mixture weights/means/vars must have equal length")
            if any(v <= 0 for v in self.variances):
                raise ConfigError("mixture variances must be positive")
            if any(w < 0 for w in self.weights) or sum(self.weights) <= 0:
                raise ConfigError("mixture weights must be nonnegative with positive sum")
        if self.variant == "uniform" and not self.high > self.low:
            raise ConfigError("uniform density needs high > low")

    @classmethod
    def parse(cls, text: str) -> DensitySpec:
        name, params = parse_call(text)
        if name == "gaussian":
            p = _take(params, {"mean": 0.0, "var": 1.0}, "gaussian density")
            return cls("gaussian", (1.0,), (p["mean"],), (float(p["var"]),))
        if name == "mixture":
            p = _take(params, {"weights": None, "means": None, "vars": None}, "mixture density")
            if p["weights"] is None or p["means"] is None or p["vars"] is None:
                raise ConfigError("mixture needs weights, means and vars")
            return cls("mixture", tuple(float(w) for w in p["weights"]), tuple(p["means"]),
                       tuple(float(v) for v in p["vars"]))
        if name == "uniform":
            p = _take(params, {"low": -1.0, "high": 1.0}, "uniform density")
            return cls("uniform", low=float(p["low"]), high=float(p["high"]))
        if name == "atom":
            p = _take(params, {"at": 0.0}, "atom density")
            return cls("atom", means=(p["at"],))
        raise ConfigError(f"unknown density variant {name!r}")

    def __str__(self) -> str:
        if self.variant == "gaussian":
            return format_call("gaussian", {"mean": self.means[0], "var": self.variances[0]})
        if self.variant == "mixture":
            return format_call("mixture", {"weights": self.weights, "means": self.means,
                                           "vars": self.variances})
        if self.variant == "uniform":
            return format_call("uniform", {"low": self.low, "high": self.high})
        return format_call("atom", {"at": self.means[0]})

    def _mean_vectors(self, d: int) -> np.ndarray:
        out = []
        for m in self.means:
            v = np.asarray(m, dtype=float).reshape(-1)
            if v.size == 1:
                v = np.full(d, float(v[0]))
            if v.size != d:
                raise ConfigError(f"density mean {m!r} does not match d={d}")
            out.append(v)
        return np.array(out)

    def _weights(self) -> np.ndarray:
        w = np.asarray(self.weights, dtype=float)
        return w / w.sum()

    def atom_node(self, d: int, L: float, M: int) -> np.ndarray:
        h = 2.0 * L / M
        x = self._mean_vectors(d)[0]
        idx = np.mod(np.round((x + L) / h), M)
        return -L + h * idx

    def pdf(self, x: np.ndarray) -> np.ndarray:
        """Untruncated density at points (..., d)."""
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        if self.variant == "uniform":
            inside = np.all((x >= self.low) & (x <= self.high), axis=-1)
            return inside / (self.high - self.low) ** d
        if self.variant == "atom":
            raise ConfigError("atom density has no pointwise pdf")
        out = np.zeros(x.shape[:-1])
        for w, mu, var in zip(self._weights(), self._mean_vectors(d), self.variances):
            r2 = np.sum((x - mu) ** 2, axis=-1)
            out += w * np.exp(-r2 / (2 * var)) / (2 * np.pi * var) ** (d / 2)
        return out

    def box_mass(self, d: int, L: float) -> float:
        """Mass of the untruncated density inside [-L, L)^d."""
        if self.variant == "atom":
            return 1.0
        if self.variant == "uniform":
            lo, hi = max(self.low, -L), min(self.high, L)
            return max(hi - lo, 0.0) ** d / (self.high - self.low) ** d
        total = 0.0
        for w, mu, var in zip(self._weights(), self._mean_vectors(d), self.variances):
            s = math.sqrt(2 * var)
            per_axis = 0.5 * (special.erf((L - mu) / s) - special.erf((-L - mu) / s))
            total += w * float(np.prod(per_axis))
        return total

    def mean(self, d: int) -> np.ndarray:
        """Mean of the untruncated density."""
        if self.variant == "uniform":
            return np.full(d, 0.5 * (self.low + self.high))
        return self._weights() @ self._mean_vectors(d)

    def sample(self, n: int, d: int, L: float, M: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n i.i.d. points from rho_0 truncated to the box."""
        if self.box_mass(d, L) < 1e-12:
            raise ConfigError("initial density has (numerically) no mass inside the box")
        if n == 0:
            return np.zeros((0, d))
        if self.variant == "atom":
            return np.tile(self.atom_node(d, L, M), (n, 1))
        if self.variant == "uniform":
            lo, hi = max(self.low, -L), min(self.high, L)
            return rng.uniform(lo, hi, size=(n, d))
        w = self._weights()
        means = self._mean_vectors(d)
        sd = np.sqrt(np.asarray(self.variances))
        out = np.empty((0, d))
        while out.shape[0] < n:
            k = n - out.shape[0]
            comp = rng.choice(len(w), size=k, p=w) if len(w) > 1 else np.zeros(k, dtype=int)
            draw = means[comp] + sd[comp, None] * rng.standard_normal((k, d))
            keep = np.all((draw >= -L) & (draw < L), axis=1)
            out = np.concatenate([out, draw[keep]])
        return out[:n]

    def on_grid(self, coords: np.ndarray, L: float, M: int) -> np.ndarray:
        """Grid values normalised to unit mass (uniform-grid quadrature)."""
        d = coords.shape[-1]
        h = 2.0 * L / M
        if self.variant == "atom":
            node = self.atom_node(d, L, M)
            idx = tuple(int(i) for i in np.round((node + L) / h).astype(int) % M)
            rho = np.zeros(coords.shape[:-1])
            rho[idx] = 1.0 / h**d
            return rho
        rho = self.pdf(coords)
        mass = rho.sum() * h**d
        if mass < 1e-12:
            raise ConfigError("initial density has (numerically) no mass on the grid")
        return rho / mass


def parse_spec_field(kind: str, text: str):
    parsers = {"kernel": KernelSpec.parse, "sigma": CoefficientSpec.parse,
               "nu": CoefficientSpec.parse, "rho0": DensitySpec.parse}
    return parsers[kind](text)


__all__ = [
    "ConfigError", "KernelSpec", "CoefficientSpec", "DensitySpec",
    "parse_call", "format_call", "parse_spec_field", "KERNEL_VARIANTS",
]
