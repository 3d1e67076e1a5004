"""Simulation configuration: domain types, validation, and JSON loading."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

import numpy as np


class ConfigError(ValueError):
    """Raised when a configuration violates an invariant."""


@dataclass(frozen=True)
class UniformBall:
    """Uniform initial density on a ball strictly inside the box."""

    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 1.0


@dataclass(frozen=True)
class TwoSpheres:
    """Equal-radius spheres; each particle joins sphere 1 with probability mass_split."""

    centers: tuple[tuple[float, float, float], tuple[float, float, float]]
    radius: float
    mass_split: float = 0.5


InitialDensitySpec = Union[UniformBall, TwoSpheres]


@dataclass(frozen=True)
class ZeroField:
    """Identically zero initial concentration."""


@dataclass(frozen=True)
class ModesField:
    """Initial concentration from explicit Fourier modes.

    ``modes`` maps an integer index triple to a complex amplitude.  The
    placed set must be consistent with a real-valued field: whenever both
    j and -j are given they must be conjugate; missing mirrors are filled
    in automatically.
    """

    modes: tuple[tuple[tuple[int, int, int], complex], ...]


InitialFieldSpec = Union[ZeroField, ModesField]


@dataclass(frozen=True)
class SimulationConfig:
    mu: float
    chi: float
    eps: float
    lam: float
    domain_len: float
    modes_per_dim: int
    particles: int
    batch_size: int
    dt: float
    t_final: float
    total_mass: float
    seed: int
    init_rho: InitialDensitySpec = field(default_factory=UniformBall)
    init_c: InitialFieldSpec = field(default_factory=ZeroField)
    trials: int = 1

    @property
    def beta(self) -> float:
        """Screening parameter sqrt(lambda^2 + eps/dt) of the one-step kernel."""
        return math.sqrt(self.lam**2 + self.eps / self.dt)

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.t_final / self.dt + 1e-9))

    @property
    def weight(self) -> float:
        return self.total_mass / self.particles

    def with_overrides(self, **kw) -> "SimulationConfig":
        return replace(self, **kw)


def _check_ball_inside(center, radius, L, what):
    for i, c in enumerate(center):
        if abs(c) + radius >= L / 2:
            raise ConfigError(
                f"{what} crosses the domain boundary: |center[{i}]| + radius = "
                f"{abs(c) + radius:g} >= L/2 = {L / 2:g}"
            )


def validate_config(cfg: SimulationConfig) -> SimulationConfig:
    """Return cfg unchanged iff every invariant holds; raise ConfigError otherwise."""
    if not isinstance(cfg.modes_per_dim, int) or cfg.modes_per_dim < 2:
        raise ConfigError("modes_per_dim must be an integer >= 2")
    if cfg.modes_per_dim % 2 != 0:
        raise ConfigError("modes_per_dim must be even")
    if cfg.particles < 1:
        raise ConfigError("particles must be positive")
    if cfg.batch_size < 1:
        raise ConfigError("batch_size must be positive")
    if cfg.batch_size > cfg.particles:
        raise ConfigError("batch_size exceeds particles")
    if not (cfg.mu > 0):
        raise ConfigError("mu must be > 0")
    if not (cfg.chi > 0):
        raise ConfigError("chi must be > 0")
    if cfg.eps < 0:
        raise ConfigError("eps must be >= 0")
    if cfg.lam < 0:
        raise ConfigError("lambda must be >= 0")
    if not (cfg.dt > 0):
        raise ConfigError("dt must be > 0")
    if not (cfg.t_final > 0):
        raise ConfigError("t_final must be > 0")
    if cfg.dt > cfg.t_final * (1 + 1e-12):
        raise ConfigError("dt must not exceed t_final")
    if not (cfg.domain_len > 0):
        raise ConfigError("domain_len must be > 0")
    if not (cfg.total_mass > 0):
        raise ConfigError("total_mass must be > 0")
    if cfg.trials < 1:
        raise ConfigError("trials must be >= 1")
    if cfg.eps == 0 and cfg.lam == 0:
        raise ConfigError("eps and lambda cannot both be zero (beta undefined)")
    beta2 = cfg.lam**2 + cfg.eps / cfg.dt
    if not (math.isfinite(beta2) and beta2 > 0):
        raise ConfigError(f"beta^2 = lambda^2 + eps/dt = {beta2:g} must be finite and positive")

    rho = cfg.init_rho
    if isinstance(rho, UniformBall):
        if not (rho.radius > 0):
            raise ConfigError("initial ball radius must be > 0")
        _check_ball_inside(rho.center, rho.radius, cfg.domain_len, "initial ball")
    elif isinstance(rho, TwoSpheres):
        if not (rho.radius > 0):
            raise ConfigError("sphere radius must be > 0")
        if not (0 < rho.mass_split < 1):
            raise ConfigError("mass_split must lie in (0, 1)")
        for c in rho.centers:
            _check_ball_inside(c, rho.radius, cfg.domain_len, "initial sphere")
    else:
        raise ConfigError(f"unknown init_rho spec {type(rho).__name__}")

    c0 = cfg.init_c
    if isinstance(c0, ModesField):
        half = cfg.modes_per_dim // 2
        seen: dict[tuple[int, int, int], complex] = {}
        for j, amp in c0.modes:
            if any(abs(ji) > half for ji in j):
                raise ConfigError(f"mode index {j} outside |j_i| <= {half}")
            seen[tuple(j)] = complex(amp)
        for j, amp in seen.items():
            neg = tuple(-ji for ji in j)
            if neg in seen and not np.isclose(seen[neg], np.conj(amp), rtol=1e-12, atol=1e-14):
                raise ConfigError(
                    f"modes {j} and {neg} must be complex conjugates for a real field"
                )
    elif not isinstance(c0, ZeroField):
        raise ConfigError(f"unknown init_c spec {type(c0).__name__}")
    return cfg


# ---------------------------------------------------------------------------
# JSON interface.  Keys mirror the field names; the decay rate is spelled
# "lambda" in JSON (a reserved word in Python, stored as ``lam``).

_SCALAR_KEYS = {
    "mu": "mu",
    "chi": "chi",
    "eps": "eps",
    "lambda": "lam",
    "domain_len": "domain_len",
    "modes_per_dim": "modes_per_dim",
    "particles": "particles",
    "batch_size": "batch_size",
    "dt": "dt",
    "t_final": "t_final",
    "total_mass": "total_mass",
    "seed": "seed",
    "trials": "trials",
}

_INT_FIELDS = {"modes_per_dim", "particles", "batch_size", "seed", "trials"}


def _density_from_json(obj) -> InitialDensitySpec:
    if not isinstance(obj, dict) or "variant" not in obj:
        raise ConfigError("init_rho must be an object with a 'variant' key")
    variant = obj["variant"]
    if variant == "uniform_ball":
        extra = set(obj) - {"variant", "center", "radius"}
        if extra:
            raise ConfigError(f"unknown init_rho keys: {sorted(extra)}")
        return UniformBall(
            center=tuple(float(x) for x in obj.get("center", (0.0, 0.0, 0.0))),
            radius=float(obj.get("radius", 1.0)),
        )
    if variant == "two_spheres":
        extra = set(obj) - {"variant", "centers", "radius", "mass_split"}
        if extra:
            raise ConfigError(f"unknown init_rho keys: {sorted(extra)}")
        centers = obj["centers"]
        if len(centers) != 2:
            raise ConfigError("two_spheres requires exactly 2 centers")
        return TwoSpheres(
            centers=tuple(tuple(float(x) for x in c) for c in centers),
            radius=float(obj["radius"]),
            mass_split=float(obj.get("mass_split", 0.5)),
        )
    raise ConfigError(f"unknown init_rho variant {variant!r}")


def _field_from_json(obj) -> InitialFieldSpec:
    if not isinstance(obj, dict) or "variant" not in obj:
        raise ConfigError("init_c must be an object with a 'variant' key")
    variant = obj["variant"]
    if variant == "zero":
        return ZeroField()
    if variant == "modes":
        modes = []
        for entry in obj.get("modes", []):
            (j, amp) = entry
            if isinstance(amp, (list, tuple)):
                amp = complex(amp[0], amp[1])
            else:
                amp = complex(amp)
            modes.append((tuple(int(x) for x in j), amp))
        return ModesField(modes=tuple(modes))
    raise ConfigError(f"unknown init_c variant {variant!r}")


def config_from_dict(doc: dict) -> SimulationConfig:
    unknown = set(doc) - set(_SCALAR_KEYS) - {"init_rho", "init_c"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = [k for k in _SCALAR_KEYS if k not in doc and k != "trials"]
    if missing:
        raise ConfigError(f"missing config keys: {missing}")
    kw = {}
    for key, fieldname in _SCALAR_KEYS.items():
        if key not in doc:
            continue
        val = doc[key]
        if fieldname in _INT_FIELDS or key == "trials":
            if not float(val).is_integer():
                raise ConfigError(f"{key} must be an integer, got {val!r}")
            kw[fieldname] = int(val)
        else:
            kw[fieldname] = float(val)
    kw["init_rho"] = _density_from_json(doc.get("init_rho", {"variant": "uniform_ball"}))
    kw["init_c"] = _field_from_json(doc.get("init_c", {"variant": "zero"}))
    return validate_config(SimulationConfig(**kw))


def load_config(path) -> SimulationConfig:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON in {path}: {e}") from e
    return config_from_dict(doc)


def config_to_dict(cfg: SimulationConfig) -> dict:
    """Inverse of config_from_dict, for persisting resolved configs."""
    doc = {}
    for key, fieldname in _SCALAR_KEYS.items():
        doc[key] = getattr(cfg, fieldname)
    rho = cfg.init_rho
    if isinstance(rho, UniformBall):
        doc["init_rho"] = {"variant": "uniform_ball", "center": list(rho.center), "radius": rho.radius}
    else:
        doc["init_rho"] = {
            "variant": "two_spheres",
            "centers": [list(c) for c in rho.centers],
            "radius": rho.radius,
            "mass_split": rho.mass_split,
        }
    c0 = cfg.init_c
    if isinstance(c0, ZeroField):
        doc["init_c"] = {"variant": "zero"}
    else:
        doc["init_c"] = {
            "variant": "modes",
            "modes": [[list(j), [amp.real, amp.imag]] for j, amp in c0.modes],
        }
    return doc


def save_config(cfg: SimulationConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")
