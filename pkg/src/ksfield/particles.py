"""One-step particle dynamics: Brownian motion, random-batch pair
interaction, and the cell-shifted quadrature drift from the field.

The field drift for particle p is the grid quadrature

    -eps * chi * (L^3/H^3) * sum_j grad_K(x_p + xbar_p - x_j) * c(x_j - xbar_p)

with xbar_p the shift to the center of p's grid cell, so every kernel
argument stays at least L/(2H) from the singularity.  Evaluating it
naively needs an H^3 inverse transform per particle; instead we use that
c(x_j - xbar_p) as a function of the offset u = k_p - j is L-periodic,
which folds the whole quadrature into

    Re sum_m [alpha_m * T_m(k_p)] exp(i omega_m . x_p),

where T(k) is a windowed Fourier transform of the kernel table that
depends only on the particle's cell k_p (and on H, L, beta).  T tables
are built with one small FFT per occupied cell and cached across steps,
leaving an O(P H^3) separable mode sum per step.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .config import SimulationConfig
from .model import ParticleEnsemble
from .rng import RngStream
from .spectral import GreenParams, SpectralField, axis_phases, mode_indices


# ---------------------------------------------------------------------------
# Geometry helpers.


def cell_shift(x, L: float, H: int) -> np.ndarray:
    """Shift taking x to the center of its grid cell of width L/H (per component)."""
    x = np.asarray(x, dtype=float)
    h = L / H
    return L / (2.0 * H) + np.floor(x / h) * h - x


def wrap_box(x, L: float) -> np.ndarray:
    """Map coordinates periodically into [-L/2, L/2)."""
    return np.mod(np.asarray(x, dtype=float) + L / 2.0, L) - L / 2.0


def cell_index(x_wrapped: np.ndarray, L: float, H: int) -> np.ndarray:
    """Integer cell index in [-H/2, H/2-1] per component (input already wrapped)."""
    k = np.floor(x_wrapped / (L / H)).astype(np.int64)
    return np.clip(k, -H // 2, H // 2 - 1)


def proximity_cutoff(cfg: SimulationConfig) -> float:
    """Pairs closer than L/(2H) are skipped; ties the pair-sum regularization
    to the same scale the cell shift guarantees on the field side."""
    return cfg.domain_len / (2 * cfg.modes_per_dim)


# ---------------------------------------------------------------------------
# Random batches (uniform subsets, no replacement; owner skipped in sums).


@dataclass(frozen=True)
class BatchDraw:
    owner: int
    members: np.ndarray  # (R,) int64, distinct indices in [0, P)

    def __post_init__(self):
        self.members.setflags(write=False)


def batch_matrix(rng: RngStream, P: int, R: int, step: int) -> np.ndarray:
    """All P batches for one step as a (P, R) index matrix."""
    if not (1 <= R <= P):
        raise ValueError(f"batch size {R} must satisfy 1 <= R <= P = {P}")
    u = rng.uniforms("batch", step, (P, R))
    return _kernels.sample_subsets(u, P)


def sample_batch(rng: RngStream, P: int, R: int, p: int, step: int) -> BatchDraw:
    """Batch of partners for particle p at the given step.

    Consistent with what step_particles uses: row p of the per-step matrix.
    """
    members = batch_matrix(rng, P, R, step)[p].copy()
    return BatchDraw(owner=p, members=members)


# ---------------------------------------------------------------------------
# Pairwise interaction drift.


def pair_drift_all(positions: np.ndarray, members: np.ndarray, gp: GreenParams,
                   cfg: SimulationConfig, counters=None) -> np.ndarray:
    """Random-batch pair drift for every particle, -(chi M0 dt / R) sum grad_K."""
    P, R = members.shape
    out = np.empty((P, 3), dtype=float)
    coef = -cfg.chi * cfg.total_mass * cfg.dt / R
    _kernels.pair_drift_members(positions, members, gp.beta, coef, proximity_cutoff(cfg), out)
    if counters is not None:
        counters.pair_kernel_evals += P * R
    return out


def pair_drift(ensemble: ParticleEnsemble, p: int, batch: BatchDraw, gp: GreenParams,
               cfg: SimulationConfig) -> np.ndarray:
    """Single-particle batch drift (testing/API convenience)."""
    if batch.owner != p:
        raise ValueError(f"batch owner {batch.owner} does not match particle {p}")
    out = np.empty((1, 3), dtype=float)
    coef = -cfg.chi * cfg.total_mass * cfg.dt / batch.members.shape[0]
    pos = ensemble.positions
    members = batch.members[None, :].copy()
    # reindex so the owner sits at row 0 of a 1-row problem
    sub = np.concatenate([pos[p : p + 1], pos])
    _kernels.pair_drift_members(
        sub, np.where(members == p, 0, members + 1), gp.beta, coef, proximity_cutoff(cfg), out
    )
    return out[0]


def full_pair_drift(positions: np.ndarray, gp: GreenParams, cfg: SimulationConfig,
                    counters=None) -> np.ndarray:
    """Full-interaction drift -(chi M0 dt / P) sum_{s != p} grad_K, all particles."""
    P = positions.shape[0]
    out = np.empty((P, 3), dtype=float)
    coef = -cfg.chi * cfg.total_mass * cfg.dt / P
    _kernels.pair_drift_full(positions, gp.beta, coef, proximity_cutoff(cfg), out)
    if counters is not None:
        counters.pair_kernel_evals += P * P
    return out


# ---------------------------------------------------------------------------
# Field drift via per-cell windowed kernel transforms.


@lru_cache(maxsize=4)
def _grad_kernel_table(H: int, L: float, beta: float) -> np.ndarray:
    """grad_K((u + 1/2) h) for integer offsets u in [-(3H/2-1), 3H/2]^3.

    Covers every offset the periodic relabeling can produce; arguments are
    half-integer multiples of h so the singularity is never hit.
    """
    h = L / H
    off = 3 * H // 2 - 1
    u = np.arange(3 * H) - off
    a = (u + 0.5) * h
    d1, d2, d3 = np.meshgrid(a, a, a, indexing="ij")
    r2 = d1**2 + d2**2 + d3**2
    r = np.sqrt(r2)
    f = np.exp(-beta * r) * (1.0 + beta * r) / (4.0 * np.pi * r2 * r)
    D = np.stack([f * d1, f * d2, f * d3], axis=-1)
    D.setflags(write=False)
    return D


class FieldDriftEvaluator:
    """Evaluates the shifted-quadrature field drift for particle ensembles.

    Holds the kernel offset table and an LRU cache of per-cell windowed
    transforms T(k); beta is fixed for a run, so tables persist across steps.
    """

    def __init__(self, H: int, L: float, beta: float, cache_size: int = 512):
        self.H, self.L, self.beta = H, float(L), float(beta)
        self.table = _grad_kernel_table(H, self.L, self.beta)
        self.cache_size = cache_size
        self._cache: OrderedDict[tuple[int, int, int], np.ndarray] = OrderedDict()
        self.tables_built = 0
        j = mode_indices(H)
        self._half_phase = np.exp(-1j * np.pi * j / H)  # e^{-i omega_m h/2} per axis

    def _window_slots(self, k: int) -> np.ndarray:
        """Table indices for relabeled offsets u(v) over slots w = v mod H."""
        H = self.H
        w = np.arange(H)
        v = np.where(w <= H // 2, w, w - H)
        s = np.where(v <= k - H // 2, 1, np.where(v > k + H // 2, -1, 0))
        return v + H * s + (3 * H // 2 - 1)

    def cell_transform(self, k: tuple[int, int, int]) -> np.ndarray:
        """T_m(k) = sum_{v in window} grad_K((u(v)+1/2) h) e^{-i omega_m (v+1/2) h}."""
        cached = self._cache.get(k)
        if cached is not None:
            self._cache.move_to_end(k)
            return cached
        i1, i2, i3 = (self._window_slots(ki) for ki in k)
        Dk = self.table[np.ix_(i1, i2, i3)]  # (H, H, H, 3)
        T = np.fft.fftn(Dk, axes=(0, 1, 2))
        ph = (
            self._half_phase[:, None, None]
            * self._half_phase[None, :, None]
            * self._half_phase[None, None, :]
        )
        T *= ph[..., None]
        T.setflags(write=False)
        self.tables_built += 1
        self._cache[k] = T
        if len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return T

    def drift(self, field: SpectralField, positions: np.ndarray, cfg: SimulationConfig,
              phases=None, counters=None) -> np.ndarray:
        """Field part of the one-step displacement for every particle."""
        H, L = self.H, self.L
        pos = wrap_box(positions, L)
        cells = cell_index(pos, L, H)
        E1, E2, E3 = phases if phases is not None else axis_phases(pos, H, L)
        out = np.empty((positions.shape[0], 3), dtype=float)
        prefac = -cfg.eps * cfg.chi * (L / H) ** 3
        order = np.lexsort((cells[:, 2], cells[:, 1], cells[:, 0]))
        sorted_cells = cells[order]
        boundaries = np.flatnonzero(
            np.any(np.diff(sorted_cells, axis=0) != 0, axis=1)
        )
        starts = np.concatenate([[0], boundaries + 1])
        ends = np.concatenate([boundaries + 1, [len(order)]])
        for a, b in zip(starts, ends):
            k = tuple(int(x) for x in sorted_cells[a])
            T = self.cell_transform(k)
            U1 = field.coeffs * T[..., 0]
            U2 = field.coeffs * T[..., 1]
            U3 = field.coeffs * T[..., 2]
            _kernels.mode_sum_real3(U1, U2, U3, E1, E2, E3, order[a:b], out)
        out *= prefac
        if counters is not None:
            counters.field_mode_macs += 3 * positions.shape[0] * H**3
            counters.cell_tables_built = self.tables_built
        return out


@lru_cache(maxsize=4)
def _shared_evaluator(H: int, L: float, beta: float) -> FieldDriftEvaluator:
    return FieldDriftEvaluator(H, L, beta)


def field_drift(field: SpectralField, x, gp: GreenParams, cfg: SimulationConfig) -> np.ndarray:
    """Field drift at a single position (API/testing convenience)."""
    ev = _shared_evaluator(field.modes_per_dim, field.domain_len, gp.beta)
    return ev.drift(field, np.atleast_2d(np.asarray(x, dtype=float)), cfg)[0]


# ---------------------------------------------------------------------------
# One-step updates.


@dataclass(frozen=True)
class DriftBreakdown:
    """Per-particle decomposition of one step; next = current + sum of parts."""

    field_part: np.ndarray
    pair_part: np.ndarray
    noise: np.ndarray


def step_particles(ensemble: ParticleEnsemble, field: SpectralField, cfg: SimulationConfig,
                   rng: RngStream, *, noise: np.ndarray | None = None,
                   batches: np.ndarray | None = None, pair_mode: str = "batch",
                   evaluator: FieldDriftEvaluator | None = None, counters=None,
                   return_breakdown: bool = False):
    """Advance every particle one step (the n > 1 update).

    The field argument lags the ensemble by one step; all particles read the
    frozen step-n positions (Jacobi sweep), so updates are order-independent.
    """
    n = ensemble.step_index
    if field.step_index != n - 1:
        raise ValueError(
            f"staggering violated: ensemble at step {n} needs the field at step {n - 1}, "
            f"got {field.step_index}"
        )
    P = ensemble.count
    pos = ensemble.positions
    if noise is None:
        noise = rng.normals("brownian", n, (P, 3))
    gp = GreenParams.from_config(cfg)

    if pair_mode == "batch":
        if batches is None:
            batches = batch_matrix(rng, P, cfg.batch_size, n)
        pair_part = pair_drift_all(pos, batches, gp, cfg, counters=counters)
    elif pair_mode == "full":
        pair_part = full_pair_drift(pos, gp, cfg, counters=counters)
    else:
        raise ValueError(f"unknown pair_mode {pair_mode!r}")

    ev = evaluator or _shared_evaluator(cfg.modes_per_dim, cfg.domain_len, gp.beta)
    wrapped = wrap_box(pos, cfg.domain_len)
    phases = axis_phases(wrapped, cfg.modes_per_dim, cfg.domain_len)
    field_part = ev.drift(field, pos, cfg, phases=phases, counters=counters)

    noise_part = np.sqrt(2.0 * cfg.mu * cfg.dt) * noise
    new_pos = pos + field_part + pair_part + noise_part
    out = ParticleEnsemble(new_pos, ensemble.weight, n + 1)
    if return_breakdown:
        return out, DriftBreakdown(field_part, pair_part, noise_part)
    return out


def first_step(ensemble: ParticleEnsemble, field0: SpectralField, cfg: SimulationConfig,
               rng: RngStream, *, noise: np.ndarray | None = None, counters=None) -> ParticleEnsemble:
    """The special-cased n = 0 update: drift along the initial field's exact
    spectral gradient, no pair interaction."""
    if ensemble.step_index != 0:
        raise ValueError("first_step expects the step-0 ensemble")
    from .spectral import gradient_at_points

    P = ensemble.count
    if noise is None:
        noise = rng.normals("brownian", 0, (P, 3))
    if np.abs(field0.coeffs).max() == 0.0:
        grad = np.zeros((P, 3))
    else:
        grad = gradient_at_points(field0, wrap_box(ensemble.positions, cfg.domain_len),
                                  counters=counters)
    new_pos = (
        ensemble.positions + cfg.chi * cfg.dt * grad + np.sqrt(2.0 * cfg.mu * cfg.dt) * noise
    )
    return ParticleEnsemble(new_pos, ensemble.weight, 1)


# ---------------------------------------------------------------------------
# Snapshot serialization: header (P int64, step int64, time float64),
# then P coordinate triples, little-endian float64.

import struct

_PART_HEADER = struct.Struct("<qqd")


def save_particles(e: ParticleEnsemble, time: float, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_PART_HEADER.pack(e.count, e.step_index, time))
        fh.write(np.ascontiguousarray(e.positions, dtype="<f8").tobytes())


def load_particles(path, weight: float) -> tuple[ParticleEnsemble, float]:
    from pathlib import Path

    raw = Path(path).read_bytes()
    if len(raw) < _PART_HEADER.size:
        raise ValueError(f"truncated particle file {path}")
    P, step, time = _PART_HEADER.unpack_from(raw)
    expected = _PART_HEADER.size + 24 * P
    if len(raw) != expected:
        raise ValueError(f"particle file {path} has {len(raw)} bytes, expected {expected}")
    pos = np.frombuffer(raw, dtype="<f8", offset=_PART_HEADER.size).reshape(P, 3).copy()
    return ParticleEnsemble(pos, weight, int(step)), float(time)


def particles_to_csv(e: ParticleEnsemble, path) -> None:
    np.savetxt(path, e.positions, delimiter=",", header="x,y,z", comments="")
