"""Smooth compactly supported test functions with analytic derivatives.

All shipped shapes are functions of s = |x - c|^2, which keeps gradients and
Hessians free of the 1/|x| singularity of radial profiles:

    grad phi = 2 q'(s) (x - c),   hess phi = 4 q''(s) (x-c)(x-c)^T + 2 q'(s) I.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .specs import ConfigError, _take, format_call, parse_call

Profile = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]


def _bump_profile(radius: float) -> Profile:
    """q(s) = exp(1 - 1/(1 - s/r^2)) on s < r^2, with its first two s-derivatives."""
    r2 = radius * radius

    def prof(s):
        u = s / r2
        inside = u < 1.0
        q = np.zeros_like(s)
        q1 = np.zeros_like(s)
        q2 = np.zeros_like(s)
        v = 1.0 - u[inside]
        e = np.exp(1.0 - 1.0 / v)
        g1 = -1.0 / v**2          # d/du of -1/(1-u)
        g2 = -2.0 / v**3
        q[inside] = e
        q1[inside] = e * g1 / r2
        q2[inside] = e * (g1 * g1 + g2) / r2**2
        return q, q1, q2

    return prof


def _smooth_step(t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """C-infinity step S(t): 0 for t <= 0, 1 for t >= 1, with S' and S''."""
    t = np.asarray(t, dtype=float)

    def f(x):
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.exp(-1.0 / x[pos])
        return out

    def f1(x):
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.exp(-1.0 / x[pos]) / x[pos] ** 2
        return out

    def f2(x):
        out = np.zeros_like(x)
        pos = x > 0
        xp = x[pos]
        out[pos] = np.exp(-1.0 / xp) * (1.0 / xp**4 - 2.0 / xp**3)
        return out

    u, v = f(t), f(1.0 - t)
    ut, vt = f1(t), -f1(1.0 - t)
    utt, vtt = f2(t), f2(1.0 - t)
    D = u + v
    S = u / D
    S1 = (ut * v - u * vt) / D**2
    S2 = (utt * v - u * vtt) / D**2 - 2.0 * S1 * (ut + vt) / D
    return S, S1, S2


def _window_profile(inner: float, outer: float) -> Profile:
    """Plateau: 1 for |x| <= inner, 0 for |x| >= outer, smooth in s in between."""
    if not 0 < inner < outer:
        raise ConfigError("window needs 0 < inner < outer")
    a2, b2 = inner * inner, outer * outer
    span = b2 - a2

    def prof(s):
        S, S1, S2 = _smooth_step((b2 - s) / span)
        return S, -S1 / span, S2 / span**2

    return prof


@dataclass(frozen=True)
class TestFunction:
    """Scalar test function phi: R^d -> R with gradient and Hessian closures."""

    __test__ = False  # not a pytest class

    name: str
    spec: str
    d: int
    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    support_radius: float
    center: tuple[float, ...]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.value(x)


def _from_profile(name, spec, d, center, profile, radius, amplitude=1.0) -> TestFunction:
    c = np.asarray(center, dtype=float)

    def value(x):
        x = np.asarray(x, dtype=float)
        z = x - c
        q, _, _ = profile(np.einsum("...i,...i->...", z, z))
        return amplitude * q

    def grad(x):
        x = np.asarray(x, dtype=float)
        z = x - c
        _, q1, _ = profile(np.einsum("...i,...i->...", z, z))
        return amplitude * 2.0 * q1[..., None] * z

    def hess(x):
        x = np.asarray(x, dtype=float)
        z = x - c
        _, q1, q2 = profile(np.einsum("...i,...i->...", z, z))
        eye = np.eye(x.shape[-1])
        return amplitude * (4.0 * q2[..., None, None] * z[..., :, None] * z[..., None, :]
                            + 2.0 * q1[..., None, None] * eye)

    return TestFunction(name, spec, d, value, grad, hess, radius + float(np.linalg.norm(c)),
                        tuple(c))


def _monomial(base: TestFunction, axis: int, power: int, spec: str, name: str) -> TestFunction:
    """x_axis^power times a window: product rule on value, gradient and Hessian."""
    d = base.d
    e = np.zeros(d)
    e[axis] = 1.0

    def parts(x):
        xa = x[..., axis]
        m = xa**power
        m1 = power * xa ** (power - 1) if power >= 1 else np.zeros_like(xa)
        m2 = power * (power - 1) * xa ** (power - 2) if power >= 2 else np.zeros_like(xa)
        return m, m1, m2

    def value(x):
        x = np.asarray(x, dtype=float)
        return parts(x)[0] * base.value(x)

    def grad(x):
        x = np.asarray(x, dtype=float)
        m, m1, _ = parts(x)
        return m1[..., None] * e * base.value(x)[..., None] + m[..., None] * base.grad(x)

    def hess(x):
        x = np.asarray(x, dtype=float)
        m, m1, m2 = parts(x)
        w, gw, hw = base.value(x), base.grad(x), base.hess(x)
        ee = np.outer(e, e)
        cross = m1[..., None, None] * (e[:, None] * gw[..., None, :] + gw[..., :, None] * e[None, :])
        return m2[..., None, None] * ee * w[..., None, None] + cross + m[..., None, None] * hw

    return TestFunction(name, spec, d, value, grad, hess, base.support_radius, base.center)


def build_test_function(name: str, text: str, d: int) -> TestFunction:
    """Construct a test function from its config string.

    ``bump(center, radius, amplitude)``, ``window(inner, outer, center)`` and
    ``poly(axis, power, inner, outer)`` (a coordinate monomial times a window).
    """
    variant, params = parse_call(text)

    def vec(c):
        v = np.asarray(c, dtype=float).reshape(-1)
        if v.size == 1:
            v = np.full(d, float(v[0]))
        if v.size != d:
            raise ConfigError(f"test function {name}: center must have {d} entries")
        return v

    if variant == "bump":
        p = _take(params, {"center": 0.0, "radius": 1.0, "amplitude": 1.0}, f"test function {name}")
        if p["radius"] <= 0:
            raise ConfigError(f"test function {name}: radius must be positive")
        spec = format_call("bump", p)
        return _from_profile(name, spec, d, vec(p["center"]), _bump_profile(float(p["radius"])),
                             float(p["radius"]), float(p["amplitude"]))
    if variant == "window":
        p = _take(params, {"inner": 1.0, "outer": 2.0, "center": 0.0}, f"test function {name}")
        spec = format_call("window", p)
        return _from_profile(name, spec, d, vec(p["center"]),
                             _window_profile(float(p["inner"]), float(p["outer"])), float(p["outer"]))
    if variant == "poly":
        p = _take(params, {"axis": 0, "power": 1, "inner": 1.0, "outer": 2.0}, f"test function {name}")
        axis, power = int(p["axis"]), int(p["power"])
        if not 0 <= axis < d or power < 0:
            raise ConfigError(f"test function {name}: bad axis/power")
        spec = format_call("poly", p)
        base = _from_profile(name, spec, d, np.zeros(d),
                             _window_profile(float(p["inner"]), float(p["outer"])), float(p["outer"]))
        return _monomial(base, axis, power, spec, name)
    raise ConfigError(f"unknown test function variant {variant!r}")
