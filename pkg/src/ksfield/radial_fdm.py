"""Radially symmetric finite-difference benchmark solver.

Solves the 1D radial reduction of the chemotaxis system on [0, L/2],

    rho_t   = mu (rho_rr + 2/r rho_r) - chi (rho_r c_r + rho (c_rr + 2/r c_r))
    eps c_t = c_rr + 2/r c_r - lambda^2 c + rho

in conservative finite-volume form on spherical shells: implicit (backward
Euler) central diffusion for both equations, explicit first-order upwinding
of the chemotactic flux, symmetry at r = 0 via zero-area inner face, outer
boundary rho = 0 and zero c-flux.  Used as ground truth for the 3D method's
cumulative-distribution validation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .config import ConfigError, SimulationConfig, UniformBall


class FdmStabilityError(RuntimeError):
    """Advection CFL violation; rerun with a smaller dt_fdm."""


@dataclass
class RadialGrid:
    n_r: int
    dr: float
    r_max: float
    rho: np.ndarray
    c: np.ndarray

    @property
    def r(self) -> np.ndarray:
        return np.arange(self.n_r) * self.dr

    def total_mass(self) -> float:
        return float(np.trapezoid(4.0 * np.pi * self.r**2 * self.rho, dx=self.dr))


def _shell_volumes(n_r: int, dr: float) -> np.ndarray:
    faces = (np.arange(n_r + 1) - 0.5) * dr
    faces[0] = 0.0
    return (4.0 * np.pi / 3.0) * (faces[1:] ** 3 - faces[:-1] ** 3)


def _face_areas(n_r: int, dr: float) -> np.ndarray:
    faces = (np.arange(n_r + 1) - 0.5) * dr
    faces[0] = 0.0
    areas = 4.0 * np.pi * faces**2
    areas[-1] = 0.0  # closed outer face; outer Dirichlet handled by clamping
    return areas


def _banded_operator(diag: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return ab


class _RadialOperators:
    """Prebuilt banded matrices for the two implicit solves."""

    def __init__(self, cfg: SimulationConfig, n_r: int, dt: float):
        self.n_r = n_r
        self.dr = dr = (cfg.domain_len / 2.0) / (n_r - 1)
        self.dt = dt
        self.vol = _shell_volumes(n_r, dr)
        self.area = _face_areas(n_r, dr)
        a_over_v_dr = self.area / dr

        # divergence of a face flux K (f_{i+1/2} - f_{i-1/2} scaled): build the
        # tridiagonal Laplacian L with (L x)_i = (A_{i+1/2}(x_{i+1}-x_i) -
        # A_{i-1/2}(x_i - x_{i-1})) / (V_i dr)
        up = a_over_v_dr[1:] / self.vol
        lo = a_over_v_dr[:-1] / self.vol
        diag = -(up + lo)
        self.lap_diag, self.lap_lower, self.lap_upper = diag, lo, up

        # (I - dt mu L) for the density diffusion solve
        self.rho_ab = _banded_operator(
            1.0 - dt * cfg.mu * diag, -dt * cfg.mu * lo, -dt * cfg.mu * up
        )
        # (eps/dt + lambda^2 - L) for the concentration solve
        self.c_ab = _banded_operator(
            cfg.eps / dt + cfg.lam**2 - diag, lo * -1.0 + 0.0, up * -1.0 + 0.0
        )


def _advection_divergence(rho: np.ndarray, c: np.ndarray, ops: _RadialOperators,
                          chi: float) -> tuple[np.ndarray, float]:
    """- div(chi rho grad c) with upwinded face density; returns (term, max CFL)."""
    dr = ops.dr
    v_face = chi * (c[1:] - c[:-1]) / dr          # velocity at faces 1/2 .. n-1/2
    rho_up = np.where(v_face > 0, rho[:-1], rho[1:])
    flux = ops.area[1:-1] * v_face * rho_up       # interior faces only
    div = np.zeros_like(rho)
    div[:-1] += flux / ops.vol[:-1]
    div[1:] -= flux / ops.vol[1:]
    cfl = float(np.abs(v_face).max(initial=0.0)) * ops.dt / dr
    return -div, cfl


def initial_radial_profile(cfg: SimulationConfig, n_r: int) -> np.ndarray:
    """Shell-averaged ball indicator, rescaled so the discrete mass is exactly M0."""
    spec = cfg.init_rho
    if not isinstance(spec, UniformBall):
        raise ConfigError("the radial benchmark supports UniformBall initial data only")
    if any(abs(x) > 0 for x in spec.center):
        raise ConfigError("the radial benchmark requires the ball centered at the origin")
    dr = (cfg.domain_len / 2.0) / (n_r - 1)
    a = spec.radius
    faces_lo = np.maximum((np.arange(n_r) - 0.5) * dr, 0.0)
    faces_hi = np.minimum((np.arange(n_r) + 0.5) * dr, (n_r - 1) * dr)
    inside_hi = np.minimum(faces_hi, a)
    frac = np.clip((inside_hi**3 - faces_lo**3) / (faces_hi**3 - faces_lo**3), 0.0, 1.0)
    rho0 = frac * cfg.total_mass / ((4.0 / 3.0) * np.pi * a**3)
    vol = _shell_volumes(n_r, dr)
    rho0 *= cfg.total_mass / float((rho0 * vol).sum())
    return rho0


def solve_radial(cfg: SimulationConfig, n_r: int = 2000, dt_fdm: float = 1e-5,
                 t_final: float | None = None) -> RadialGrid:
    """Advance the radial system to t_final (defaults to cfg.t_final)."""
    T = cfg.t_final if t_final is None else t_final
    n_steps = int(round(T / dt_fdm))
    if abs(n_steps * dt_fdm - T) > 1e-9 * T:
        raise ConfigError(f"dt_fdm = {dt_fdm} must divide the final time {T}")
    ops = _RadialOperators(cfg, n_r, dt_fdm)
    rho = initial_radial_profile(cfg, n_r)
    c = np.zeros(n_r)
    if cfg.eps <= 0:
        raise ConfigError("the radial benchmark requires eps > 0")
    for _ in range(n_steps):
        adv, cfl = _advection_divergence(rho, c, ops, cfg.chi)
        if cfl > 1.0:
            raise FdmStabilityError(
                f"advection CFL = {cfl:.3g} > 1; reduce dt_fdm below {dt_fdm / cfl:.3g}"
            )
        rhs = rho + dt_fdm * adv
        rho = solve_banded((1, 1), ops.rho_ab, rhs)
        rho[-1] = 0.0
        c = solve_banded((1, 1), ops.c_ab, (cfg.eps / dt_fdm) * c + rho)
    return RadialGrid(n_r=n_r, dr=ops.dr, r_max=(n_r - 1) * ops.dr, rho=rho, c=c)


def steady_concentration(rho: np.ndarray, cfg: SimulationConfig, n_r: int) -> np.ndarray:
    """Direct solve of (c_rr + 2/r c_r - lambda^2 c) = -rho for cross-checks."""
    ops = _RadialOperators(cfg, n_r, 1.0)
    ab = _banded_operator(cfg.lam**2 - ops.lap_diag, -ops.lap_lower, -ops.lap_upper)
    return solve_banded((1, 1), ab, rho)


def fdm_cdf(sol: RadialGrid) -> np.ndarray:
    """Normalized cumulative mass F(s_i) = int_0^{s_i} 4 pi r^2 rho dr / total,
    by the trapezoid rule on the solver's own mesh."""
    if (sol.rho < -1e-12 * max(float(sol.rho.max(initial=0.0)), 1.0)).any():
        raise ValueError("rho must be nonnegative")
    integrand = 4.0 * np.pi * sol.r**2 * sol.rho
    cum = np.concatenate([[0.0], np.cumsum((integrand[1:] + integrand[:-1]) * 0.5 * sol.dr)])
    total = cum[-1]
    if total <= 0.0:
        raise ValueError("all-zero density has no distribution function")
    return cum / total
