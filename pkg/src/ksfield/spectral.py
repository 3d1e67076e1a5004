"""Fourier-side machinery: screened Green's function, spectral field type,
and the implicit one-step field update driven by particle deposits.

Layout convention
-----------------
Each dimension carries H modes with signed indices j in {-H/2, ..., H/2-1},
stored in standard FFT slot order (slot = j mod H).  The collocation grid
x_j = j * L/H uses the same slots, so transforms are plain (i)fftn calls.
The +H/2 row is aliased with -H/2; real-valued fields keep those Nyquist
slots self-conjugate, which ``hermitianize`` enforces for particle deposits.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import _kernels
from .config import ModesField, SimulationConfig, ZeroField


# ---------------------------------------------------------------------------
# Green's function of (Laplacian - lambda^2 - eps/dt) in free space.


@dataclass(frozen=True)
class GreenParams:
    """Screened-kernel parameters; beta = sqrt(lambda^2 + eps/dt)."""

    beta: float
    lam: float = 0.0
    eps: float = 0.0
    dt: float = 0.0

    def __post_init__(self):
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be finite and >= 0, got {self.beta}")

    @classmethod
    def from_config(cls, cfg: SimulationConfig) -> "GreenParams":
        return cls(beta=cfg.beta, lam=cfg.lam, eps=cfg.eps, dt=cfg.dt)


def green_kernel(x, gp: GreenParams) -> float:
    """-exp(-beta |x|) / (4 pi |x|); singular at the origin."""
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise ValueError("green_kernel is singular at x = 0")
    return -math.exp(-gp.beta * r) / (4.0 * math.pi * r)


def green_gradient(x, gp: GreenParams) -> np.ndarray:
    """Gradient of the kernel: x (1 + beta|x|) exp(-beta|x|) / (4 pi |x|^3)."""
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise ValueError("green_gradient is singular at x = 0")
    return x * (math.exp(-gp.beta * r) * (1.0 + gp.beta * r) / (4.0 * math.pi * r**3))


def green_multiplier(j, gp: GreenParams, domain_len: float) -> float:
    """Fourier symbol 1 / (|omega_j|^2 + beta^2) of the inverse operator."""
    j = np.asarray(j, dtype=float)
    w2 = 4.0 * math.pi**2 * float(np.dot(j, j)) / domain_len**2
    return 1.0 / (w2 + gp.beta**2)


# ---------------------------------------------------------------------------
# Mode/grid index helpers (cached per (H, L)).


@lru_cache(maxsize=32)
def mode_indices(H: int) -> np.ndarray:
    """Signed mode index per FFT slot: 0..H/2-1, -H/2..-1."""
    j = np.arange(H)
    j[j >= H // 2] -= H
    j.setflags(write=False)
    return j


@lru_cache(maxsize=32)
def omega_axis(H: int, L: float) -> np.ndarray:
    w = 2.0 * np.pi * mode_indices(H) / L
    w.setflags(write=False)
    return w


@lru_cache(maxsize=32)
def omega_norm2(H: int, L: float) -> np.ndarray:
    """|omega_j|^2 on the (H,H,H) mode array."""
    w = omega_axis(H, L)
    w2 = (w**2)[:, None, None] + (w**2)[None, :, None] + (w**2)[None, None, :]
    w2.setflags(write=False)
    return w2


@lru_cache(maxsize=32)
def grid_coords(H: int, L: float) -> np.ndarray:
    """Collocation coordinates x = j L/H per slot (same ordering as modes)."""
    x = mode_indices(H) * (L / H)
    x.setflags(write=False)
    return x


def mirror_modes(A: np.ndarray) -> np.ndarray:
    """A evaluated at the negated (mod H) index on every axis."""
    return np.roll(A[::-1, ::-1, ::-1], 1, axis=(0, 1, 2))


def hermitianize(A: np.ndarray) -> np.ndarray:
    """Project onto the coefficient set of real fields: (A + conj(mirror A)) / 2.

    Non-Nyquist slots of a particle deposit already satisfy the symmetry
    exactly; this only adjusts the aliased +-H/2 planes.
    """
    return 0.5 * (A + np.conj(mirror_modes(A)))


# ---------------------------------------------------------------------------
# The field itself.


@dataclass(frozen=True)
class SpectralField:
    """Truncated Fourier representation of the chemical concentration."""

    coeffs: np.ndarray  # (H, H, H) complex128, FFT slot order, read-only
    domain_len: float
    step_index: int = 0

    def __post_init__(self):
        c = self.coeffs
        if c.ndim != 3 or len(set(c.shape)) != 1:
            raise ValueError(f"coeffs must be an (H,H,H) cube, got {c.shape}")
        if c.shape[0] % 2 != 0:
            raise ValueError("modes_per_dim must be even")
        c.setflags(write=False)

    @property
    def modes_per_dim(self) -> int:
        return self.coeffs.shape[0]

    def hermitian_defect(self) -> float:
        return float(np.abs(self.coeffs - hermitianize(self.coeffs)).max())


def zero_field(H: int, L: float, step_index: int = 0) -> SpectralField:
    return SpectralField(np.zeros((H, H, H), np.complex128), L, step_index)


def init_field(cfg: SimulationConfig) -> SpectralField:
    """Initial concentration coefficients from the config's init_c spec."""
    H = cfg.modes_per_dim
    spec = cfg.init_c
    if isinstance(spec, ZeroField):
        return zero_field(H, cfg.domain_len)
    if not isinstance(spec, ModesField):
        raise ValueError(f"unknown init_c spec {type(spec).__name__}")
    half = H // 2
    A = np.zeros((H, H, H), np.complex128)
    explicit: dict[tuple[int, int, int], complex] = {}
    for j, amp in spec.modes:
        if any(abs(ji) > half for ji in j):
            raise ValueError(f"mode index {j} outside |j_i| <= {half}")
        slot = tuple(ji % H for ji in j)
        amp = complex(amp)
        if slot in explicit and not np.isclose(explicit[slot], amp, rtol=1e-12, atol=1e-14):
            raise ValueError(f"conflicting amplitudes for mode slot {slot}")
        explicit[slot] = amp
        A[slot] = amp
    for slot, amp in explicit.items():
        neg = tuple((-s) % H for s in slot)
        if neg not in explicit:
            A[neg] = np.conj(amp)
    defect = np.abs(A - hermitianize(A)).max()
    scale = max(np.abs(A).max(), 1.0)
    if defect > 1e-12 * scale:
        raise ValueError(
            "modes are inconsistent with a real field (Nyquist-plane amplitudes must be real)"
        )
    return SpectralField(A, cfg.domain_len, 0)


# ---------------------------------------------------------------------------
# Particle deposit and one-step update.


def axis_phases(positions: np.ndarray, H: int, L: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-axis factors exp(-i omega_m x_p,i) as three (P, H) arrays."""
    w = omega_axis(H, L)
    return tuple(np.exp(-1j * np.outer(positions[:, i], w)) for i in range(3))


def deposit(positions: np.ndarray, weight: float, H: int, L: float,
            phases=None, counters=None) -> np.ndarray:
    """Fourier-series coefficients of the particle cloud, projected real.

    rho_hat[j] = (weight / L^3) * sum_p exp(-i omega_j . x_p): the series
    coefficient of the periodized empirical density, so that
    sum_j rho_hat[j] exp(i omega_j x) integrates to weight * P over the box
    (the DC coefficient is the mean density).  The aliased Nyquist planes
    are symmetrized so the represented density is real-valued.
    """
    E1, E2, E3 = phases if phases is not None else axis_phases(positions, H, L)
    out = np.zeros((H, H, H), np.complex128)
    _kernels.deposit_modes(E1, E2, E3, out)
    out *= weight / L**3
    if counters is not None:
        counters.deposit_macs += positions.shape[0] * H**3
    return hermitianize(out)


def update_field(prev: SpectralField, rho, cfg: SimulationConfig,
                 phases=None, counters=None) -> SpectralField:
    """Implicit Euler update of the concentration coefficients.

    alpha_n = (alpha_{n-1} + (dt/eps) rho_hat_n) / (1 + Z_j) with
    Z_j = (dt/eps)(|omega_j|^2 + lambda^2) and rho_hat the series
    coefficients of the step-n ensemble (see ``deposit``).  Algebraically
    identical to applying the decay multiplier eps/(dt(|omega|^2+beta^2))
    and then adding rho_hat/(|omega|^2+beta^2).
    """
    if cfg.eps == 0:
        raise ValueError("field update requires eps > 0")
    if rho.step_index != prev.step_index + 1:
        raise ValueError(
            f"staggering violated: field at step {prev.step_index}, particles at {rho.step_index}"
        )
    H = prev.modes_per_dim
    L = prev.domain_len
    rho_hat = deposit(rho.positions, rho.weight, H, L, phases=phases, counters=counters)
    Z = (cfg.dt / cfg.eps) * (omega_norm2(H, L) + cfg.lam**2)
    coeffs = (prev.coeffs + (cfg.dt / cfg.eps) * rho_hat) / (1.0 + Z)
    return SpectralField(coeffs, L, prev.step_index + 1)


def stability_bound(initial: SpectralField, total_mass: float, lam: float) -> np.ndarray:
    """Per-mode bound |alpha_0| + (M0/L^3) / (|omega|^2 + lambda^2).

    Follows from the update recursion by a geometric series: the deposit
    magnitude never exceeds the mean density M0/L^3.  Holds at every step
    of every run regardless of the particle configuration.
    """
    H, L = initial.modes_per_dim, initial.domain_len
    return np.abs(initial.coeffs) + (total_mass / L**3) / (omega_norm2(H, L) + lam**2)


# ---------------------------------------------------------------------------
# Grid evaluation.


def field_to_grid(f: SpectralField, check_real: bool = True) -> np.ndarray:
    """Concentration values on the H^3 collocation grid (slot ordering)."""
    g = np.fft.ifftn(f.coeffs) * f.modes_per_dim**3
    if check_real:
        scale = max(float(np.abs(g.real).max()), 1e-300)
        defect = float(np.abs(g.imag).max())
        if defect > 1e-10 * scale:
            raise ValueError(f"field is not real on the grid (relative defect {defect / scale:.2e})")
    return np.ascontiguousarray(g.real)


def shifted_grid_values(f: SpectralField, xbar) -> np.ndarray:
    """Grid values of the shifted field c(x_j - xbar).

    Implemented by modulating each coefficient with exp(-i omega . xbar)
    before the inverse transform.  The real part is returned: on the even
    grid the sine component of an aliased Nyquist mode vanishes at every
    node, so this equals the shifted real-valued field exactly.
    """
    H, L = f.modes_per_dim, f.domain_len
    w = omega_axis(H, L)
    xbar = np.asarray(xbar, dtype=float)
    mod = f.coeffs * (
        np.exp(-1j * w * xbar[0])[:, None, None]
        * np.exp(-1j * w * xbar[1])[None, :, None]
        * np.exp(-1j * w * xbar[2])[None, None, :]
    )
    return (np.fft.ifftn(mod) * H**3).real


def gradient_at_points(f: SpectralField, pts, counters=None) -> np.ndarray:
    """Spectral gradient sum_j i omega_j alpha_j exp(i omega_j . x) at each point.

    Returns the real part of the direct series sum, which for coefficient
    sets of real fields (Hermitian with real Nyquist planes) is exactly the
    gradient of the represented real-valued interpolant; the discarded
    imaginary residue carries only aliased Nyquist sine content.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    H, L = f.modes_per_dim, f.domain_len
    w = omega_axis(H, L)
    W1 = (1j * w)[:, None, None] * f.coeffs
    W2 = (1j * w)[None, :, None] * f.coeffs
    W3 = (1j * w)[None, None, :] * f.coeffs
    E1, E2, E3 = axis_phases(pts, H, L)
    out = np.empty((pts.shape[0], 3), dtype=float)
    idx = np.arange(pts.shape[0], dtype=np.int64)
    _kernels.mode_sum_real3(W1, W2, W3, E1, E2, E3, idx, out)
    if counters is not None:
        counters.field_mode_macs += 3 * pts.shape[0] * H**3
    return out


# ---------------------------------------------------------------------------
# Serialization: header (H int64, L float64, step int64) then H^3 complex
# pairs, ascending signed index order, j1 slowest, little-endian float64.

_FIELD_HEADER = struct.Struct("<qdq")


def save_field(f: SpectralField, path) -> None:
    H = f.modes_per_dim
    with open(path, "wb") as fh:
        fh.write(_FIELD_HEADER.pack(H, f.domain_len, f.step_index))
        shifted = np.fft.fftshift(f.coeffs)  # ascending signed index order
        fh.write(np.ascontiguousarray(shifted, dtype="<c16").tobytes())


def load_field(path) -> SpectralField:
    raw = Path(path).read_bytes()
    if len(raw) < _FIELD_HEADER.size:
        raise ValueError(f"truncated field file {path}")
    H, L, step = _FIELD_HEADER.unpack_from(raw)
    expected = _FIELD_HEADER.size + 16 * H**3
    if len(raw) != expected:
        raise ValueError(f"field file {path} has {len(raw)} bytes, expected {expected}")
    shifted = np.frombuffer(raw, dtype="<c16", offset=_FIELD_HEADER.size).reshape(H, H, H)
    coeffs = np.ascontiguousarray(np.fft.ifftshift(shifted)).astype(np.complex128)
    return SpectralField(coeffs, L, int(step))
