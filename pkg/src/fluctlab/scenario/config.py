"""Scenario configuration: file grammar, validation and manifests.

Config files use an INI layout (parsed with :mod:`configparser`); keys are
case-sensitive::

    [scenario]
    d = 1
    T = 0.5
    n_steps = 100
    N_list = 250, 500, 1000
    replicas = 200
    seed = 42
    stride = 1

    [grid]
    L = 8.0
    M = 256

    [spectral]
    cutoff = 64.0
    freq_size = 512
    alpha = 1.0
    alpha_interaction = 2.6

    [model]
    kernel = gaussian(amplitude=0.5, width=1.0)
    sigma = constant(0.5)
    nu = constant(0.5)
    rho0 = gaussian(mean=0.0, var=0.25)
    drift = spectral

    [test_functions]
    bump1 = bump(center=0.0, radius=2.0)

Missing keys take the defaults of :class:`ScenarioConfig`.  A run manifest
(JSON) is accepted wherever a config file is, in which case the recorded
``config`` block is used.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .. import __version__
from .rng import RngPlan
from .specs import CoefficientSpec, ConfigError, DensitySpec, KernelSpec
from .testfunctions import TestFunction, build_test_function

DRIFT_METHODS = ("direct", "spectral")

_SECTIONS = {
    "scenario": ("d", "T", "n_steps", "N_list", "replicas", "seed", "stride"),
    "grid": ("L", "M"),
    "spectral": ("cutoff", "freq_size", "alpha", "alpha_interaction"),
    "model": ("kernel", "sigma", "nu", "rho0", "drift"),
}


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class ScenarioConfig:
    """Immutable description of one experiment."""

    d: int = 1
    N_list: tuple[int, ...] = (500, 1000, 2000)
    T: float = 0.5
    n_steps: int = 100
    L: float = 8.0
    M: int = 256
    cutoff: float = 64.0
    freq_size: int = 512
    alpha: float = 1.0
    alpha_interaction: float = 2.6
    replicas: int = 200
    seed: int = 42
    stride: int = 1
    kernel: KernelSpec = field(default_factory=KernelSpec)
    sigma: CoefficientSpec = field(default_factory=lambda: CoefficientSpec("constant", 1.0))
    nu: CoefficientSpec = field(default_factory=lambda: CoefficientSpec("constant", 0.0))
    rho0: DensitySpec = field(default_factory=lambda: DensitySpec("gaussian", (1.0,), (0.0,), (0.25,)))
    drift: str = "direct"
    test_functions: tuple[tuple[str, str], ...] = (("bump1", "bump(center=0.0, radius=2.0)"),)

    def __post_init__(self) -> None:
        self.validate()

    # -- validation -------------------------------------------------------
    def validate(self) -> None:
        if self.d not in (1, 2):
            raise ConfigError("d must be 1 or 2")
        if not self.alpha > self.d / 2:
            raise ConfigError(f"alpha must exceed d/2 (alpha={self.alpha}, d={self.d})")
        if not self.alpha_interaction > self.d / 2 + 2:
            raise ConfigError("alpha_interaction must exceed d/2 + 2")
        if self.n_steps < 1:
            raise ConfigError("n_steps must be >= 1")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ConfigError("T must be positive")
        if not self.L > 0:
            raise ConfigError("L must be positive")
        if not _is_pow2(self.M):
            raise ConfigError("M must be a power of two")
        if not _is_pow2(self.freq_size):
            raise ConfigError("freq_size must be a power of two")
        if not self.cutoff > 0:
            raise ConfigError("cutoff must be positive")
        if len(self.N_list) == 0 or any(n < 1 for n in self.N_list):
            raise ConfigError("N_list must hold positive particle counts")
        if any(b <= a for a, b in zip(self.N_list, self.N_list[1:])):
            raise ConfigError("N_list must be strictly increasing")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if self.stride < 1 or self.stride > self.n_steps:
            raise ConfigError("stride must lie in [1, n_steps]")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.drift not in DRIFT_METHODS:
            raise ConfigError(f"drift must be one of {DRIFT_METHODS}")
        self.sigma.base(self.d)
        self.nu.base(self.d)
        self.kernel.unit_direction(self.d)
        if self.rho0.box_mass(self.d, self.L) < 1e-12:
            raise ConfigError("initial density has no mass inside the box")
        names = [n for n, _ in self.test_functions]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate test function names")
        for name, text in self.test_functions:
            tf = build_test_function(name, text, self.d)
            if tf.support_radius > self.L:
                raise ConfigError(f"test function {name} is not supported inside the box")

    # -- derived quantities -----------------------------------------------
    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def m(self) -> int:
        return self.sigma.noise_dim(self.d)

    @property
    def m_tilde(self) -> int:
        return self.nu.noise_dim(self.d)

    @property
    def rng(self) -> RngPlan:
        return RngPlan(self.seed)

    def tests(self) -> list[TestFunction]:
        return [build_test_function(n, t, self.d) for n, t in self.test_functions]

    def test_function(self, name: str) -> TestFunction:
        for n, t in self.test_functions:
            if n == name:
                return build_test_function(n, t, self.d)
        raise KeyError(name)

    def replace(self, **changes) -> ScenarioConfig:
        for key in ("kernel", "sigma", "nu", "rho0"):
            if isinstance(changes.get(key), str):
                changes[key] = _SPEC_PARSERS[key](changes[key])
        if "N_list" in changes:
            changes["N_list"] = tuple(int(n) for n in changes["N_list"])
        if "test_functions" in changes and isinstance(changes["test_functions"], dict):
            changes["test_functions"] = tuple(changes["test_functions"].items())
        return dataclasses.replace(self, **changes)

    # -- serialisation ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "d": self.d, "T": self.T, "n_steps": self.n_steps, "N_list": list(self.N_list),
            "replicas": self.replicas, "seed": self.seed, "stride": self.stride,
            "L": self.L, "M": self.M, "cutoff": self.cutoff, "freq_size": self.freq_size,
            "alpha": self.alpha, "alpha_interaction": self.alpha_interaction,
            "kernel": str(self.kernel), "sigma": str(self.sigma), "nu": str(self.nu),
            "rho0": str(self.rho0), "drift": self.drift,
            "test_functions": {n: t for n, t in self.test_functions},
        }

    @classmethod
    def from_dict(cls, data: dict) -> ScenarioConfig:
        data = dict(data)
        kw = {}
        for key in ("d", "n_steps", "replicas", "seed", "stride", "M", "freq_size"):
            if key in data:
                kw[key] = _as_int(data.pop(key), key)
        for key in ("T", "L", "cutoff", "alpha", "alpha_interaction"):
            if key in data:
                kw[key] = _as_float(data.pop(key), key)
        if "N_list" in data:
            raw = data.pop("N_list")
            if isinstance(raw, str):
                raw = [p for p in raw.replace(",", " ").split() if p]
            kw["N_list"] = tuple(_as_int(v, "N_list") for v in raw)
        for key in ("kernel", "sigma", "nu", "rho0"):
            if key in data:
                kw[key] = _SPEC_PARSERS[key](str(data.pop(key)))
        if "drift" in data:
            kw["drift"] = str(data.pop("drift")).strip()
        if "test_functions" in data:
            tfs = data.pop("test_functions")
            kw["test_functions"] = tuple((str(k), str(v)) for k, v in tfs.items())
        if data:
            raise ConfigError(f"unknown config keys: {sorted(data)}")
        return cls(**kw)

    def to_ini(self) -> str:
        parser = _new_parser()
        flat = self.to_dict()
        for section, keys in _SECTIONS.items():
            parser.add_section(section)
            for key in keys:
                val = flat[key]
                if key == "N_list":
                    val = ", ".join(str(n) for n in val)
                parser.set(section, key, repr(val) if isinstance(val, float) else str(val))
        parser.add_section("test_functions")
        for name, text in self.test_functions:
            parser.set("test_functions", name, text)
        from io import StringIO

        buf = StringIO()
        parser.write(buf)
        return buf.getvalue()


_SPEC_PARSERS = {"kernel": KernelSpec.parse, "sigma": CoefficientSpec.parse,
                 "nu": CoefficientSpec.parse, "rho0": DensitySpec.parse}


def _as_int(v, key) -> int:
    try:
        f = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected an integer, got {v!r}") from None
    if f != int(f):
        raise ConfigError(f"{key}: expected an integer, got {v!r}")
    return int(f)


def _as_float(v, key) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {v!r}") from None


def _new_parser() -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # case-sensitive keys (T, L, M, N_list)
    return parser


def parse_config_text(text: str) -> ScenarioConfig:
    parser = _new_parser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from None
    data: dict = {}
    known = set(_SECTIONS) | {"test_functions"}
    unknown = set(parser.sections()) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    for section, keys in _SECTIONS.items():
        if parser.has_section(section):
            for key, val in parser.items(section):
                if key not in keys:
                    raise ConfigError(f"[{section}] unknown key {key!r}")
                data[key] = val
    if parser.has_section("test_functions"):
        data["test_functions"] = dict(parser.items("test_functions"))
    return ScenarioConfig.from_dict(data)


def load_config(path: str | Path) -> ScenarioConfig:
    """Read and validate a config file (INI grammar above, or a run manifest)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed manifest: {exc}") from None
        return ScenarioConfig.from_dict(doc.get("config", doc))
    return parse_config_text(text)


def save_config(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(cfg.to_ini())


def config_manifest(cfg: ScenarioConfig) -> str:
    """Deterministic JSON echo of the resolved config and seed plan."""
    doc = {
        "code_version": __version__,
        "config": cfg.to_dict(),
        "seed_plan": cfg.rng.describe(),
        "ellipticity_floor": cfg.sigma.ellipticity_floor(cfg.d),
    }
    return json.dumps(doc, sort_keys=True, indent=2)
