"""Particle ensemble type and initial-condition sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SimulationConfig, TwoSpheres, UniformBall
from .rng import RngStream


@dataclass(frozen=True)
class ParticleEnsemble:
    """P equal-weight particles representing the organism density.

    The particle count and per-particle weight never change during a run,
    so the represented total mass is conserved exactly.
    """

    positions: np.ndarray  # (P, 3) float64, read-only
    weight: float          # mass per particle, M0 / P
    step_index: int = 0

    def __post_init__(self):
        pos = self.positions
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must be (P, 3), got {pos.shape}")
        pos.setflags(write=False)

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @property
    def total_mass(self) -> float:
        return self.weight * self.count


def _uniform_ball(gen: np.random.Generator, n: int, center, radius: float) -> np.ndarray:
    """n i.i.d. points uniform in a ball, by inverse-CDF radius so the draw
    count per particle is fixed (keeps the rng addressing contract)."""
    normals = gen.standard_normal((n, 3))
    u = gen.random(n)
    norms = np.linalg.norm(normals, axis=1)
    norms[norms == 0.0] = 1.0
    dirs = normals / norms[:, None]
    r = radius * np.cbrt(u)
    return np.asarray(center, dtype=float) + r[:, None] * dirs


def sample_initial_particles(cfg: SimulationConfig, rng: RngStream) -> ParticleEnsemble:
    """P i.i.d. samples from the configured initial density, at step 0."""
    gen = rng.generator("init")
    P = cfg.particles
    spec = cfg.init_rho
    if isinstance(spec, UniformBall):
        pos = _uniform_ball(gen, P, spec.center, spec.radius)
    elif isinstance(spec, TwoSpheres):
        pick = gen.random(P) < spec.mass_split
        pos = _uniform_ball(gen, P, (0.0, 0.0, 0.0), spec.radius)
        pos += np.where(pick[:, None], np.asarray(spec.centers[0]), np.asarray(spec.centers[1]))
    else:
        raise ValueError(f"unknown init_rho spec {type(spec).__name__}")
    return ParticleEnsemble(pos, weight=cfg.total_mass / P, step_index=0)
