"""Run orchestration: the staggered particle/field time loop, stability
monitoring, snapshot persistence, and bit-exact resume.

Loop structure (ensemble X_n, field c_n):

    X_1 = first_step(X_0, c_0)          # gradient of c_0, no pair term
    c_1 = update_field(c_0, X_1)
    for n = 2 .. N:
        X_n = step_particles(X_{n-1}, c_{n-2})
        c_n = update_field(c_{n-1}, X_n)

so the particle update always consumes the field lagging one step behind
the most recently produced one.
"""

from __future__ import annotations

import json
import time as _time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .config import SimulationConfig, config_from_dict, save_config
from .model import ParticleEnsemble, sample_initial_particles
from .particles import (
    FieldDriftEvaluator,
    first_step,
    load_particles,
    save_particles,
    step_particles,
)
from .rng import RngStream
from .spectral import (
    SpectralField,
    field_to_grid,
    init_field,
    load_field,
    save_field,
    stability_bound,
    update_field,
)


class NonFiniteFieldError(RuntimeError):
    """Raised when a coefficient leaves the finite range (numerical blow-up)."""

    def __init__(self, step: int, time: float):
        super().__init__(f"non-finite field coefficient at step {step} (t = {time:g})")
        self.step = step
        self.time = time


@dataclass
class StepCounters:
    """Operation counts for the complexity contract O(P R + P H^3 log H)."""

    pair_kernel_evals: int = 0
    field_mode_macs: int = 0
    deposit_macs: int = 0
    cell_tables_built: int = 0
    steps: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class SnapshotPolicy:
    """Which artifacts to write, and when."""

    every_k_steps: int | None = None
    times: tuple[float, ...] | None = None
    particles: bool = True
    field: bool = True
    diagnostics: bool = True

    def step_set(self, cfg: SimulationConfig) -> set[int]:
        steps: set[int] = set()
        if self.every_k_steps:
            steps.update(range(self.every_k_steps, cfg.n_steps + 1, self.every_k_steps))
        if self.times:
            for t in self.times:
                n = int(round(t / cfg.dt))
                if abs(n * cfg.dt - t) > 1e-9 * max(t, cfg.dt):
                    raise ValueError(f"snapshot time {t} is not a multiple of dt = {cfg.dt}")
                steps.add(n)
        steps.add(cfg.n_steps)
        return steps


@dataclass
class RunState:
    cfg: SimulationConfig
    rng: RngStream
    ensemble: ParticleEnsemble
    field_curr: SpectralField   # c_n when the ensemble is at step n
    field_prev: SpectralField   # c_{n-1}, consumed by the next particle step
    bound: np.ndarray           # per-mode stability bound from |alpha_0|
    evaluator: FieldDriftEvaluator
    counters: StepCounters = dc_field(default_factory=StepCounters)
    stability_violations: int = 0
    # optional (step, P) -> (P, 3) standard-normal override, for coupled experiments
    noise_provider: object = None
    pair_mode: str = "batch"

    @property
    def step(self) -> int:
        return self.ensemble.step_index

    @property
    def time(self) -> float:
        return self.step * self.cfg.dt


def _check_field(state: RunState, f: SpectralField) -> None:
    a = np.abs(f.coeffs)
    if not np.isfinite(a).all():
        raise NonFiniteFieldError(f.step_index, f.step_index * state.cfg.dt)
    if (a > state.bound * (1.0 + 1e-12) + 1e-300).any():
        state.stability_violations += int((a > state.bound * (1.0 + 1e-12) + 1e-300).sum())


def start_run(cfg: SimulationConfig, rng: RngStream | None = None,
              noise_provider=None, pair_mode: str = "batch") -> RunState:
    """Sample the initial ensemble, take the special first step, and produce c_1."""
    rng = rng or RngStream(cfg.seed)
    ens0 = sample_initial_particles(cfg, rng)
    c0 = init_field(cfg)
    bound = stability_bound(c0, cfg.total_mass, cfg.lam)
    evaluator = FieldDriftEvaluator(cfg.modes_per_dim, cfg.domain_len, cfg.beta)
    state = RunState(cfg, rng, ens0, c0, c0, bound, evaluator,
                     noise_provider=noise_provider, pair_mode=pair_mode)
    noise = noise_provider(0, ens0.count) if noise_provider else None
    ens1 = first_step(ens0, c0, cfg, rng, noise=noise, counters=state.counters)
    c1 = update_field(c0, ens1, cfg, counters=state.counters)
    state.ensemble = ens1
    state.field_prev = c0
    state.field_curr = c1
    state.counters.steps += 1
    _check_field(state, c1)
    return state


def advance(state: RunState) -> None:
    """One loop iteration: X_{n+1} from (X_n, c_{n-1}), then c_{n+1}."""
    cfg = state.cfg
    n = state.ensemble.step_index
    noise = state.noise_provider(n, state.ensemble.count) if state.noise_provider else None
    ens = step_particles(
        state.ensemble,
        state.field_prev,
        cfg,
        state.rng,
        noise=noise,
        pair_mode=state.pair_mode,
        evaluator=state.evaluator,
        counters=state.counters,
    )
    c_next = update_field(state.field_curr, ens, cfg, counters=state.counters)
    state.ensemble = ens
    state.field_prev = state.field_curr
    state.field_curr = c_next
    state.counters.steps += 1
    _check_field(state, c_next)


def run_in_memory(cfg: SimulationConfig, rng: RngStream | None = None, on_step=None,
                  noise_provider=None, pair_mode: str = "batch") -> RunState:
    """Drive a run to t_final without touching the filesystem."""
    state = start_run(cfg, rng, noise_provider=noise_provider, pair_mode=pair_mode)
    if on_step:
        on_step(state)
    while state.step < cfg.n_steps:
        advance(state)
        if on_step:
            on_step(state)
    return state


# ---------------------------------------------------------------------------
# Persistent runs.

_STATE_FILE = "state.json"
_DIAG_FILE = "diagnostics.csv"
_DIAG_HEADER = "step,time,max_c,l2_coeff_norm,wall_ms\n"


def _snapshot(state: RunState, out: Path, policy: SnapshotPolicy) -> None:
    n = state.step
    if policy.particles:
        save_particles(state.ensemble, state.time, out / f"particles_{n}.bin")
    if policy.field:
        save_field(state.field_curr, out / f"field_{n}.bin")


def _diag_row(state: RunState, wall_ms: float) -> str:
    g = field_to_grid(state.field_curr, check_real=False)
    max_c = float(np.abs(g).max())
    l2 = float(np.sqrt((np.abs(state.field_curr.coeffs) ** 2).sum()))
    return f"{state.step},{state.time:.12g},{max_c:.12g},{l2:.12g},{wall_ms:.3f}\n"


def _write_state_meta(state: RunState, out: Path) -> None:
    meta = {
        "step": state.step,
        "time": state.time,
        "stability_violations": state.stability_violations,
        "counters": state.counters.as_dict(),
    }
    (out / _STATE_FILE).write_text(json.dumps(meta, indent=2) + "\n")


def run(cfg: SimulationConfig, policy: SnapshotPolicy | None = None, out_dir=None,
        rng: RngStream | None = None, on_step=None) -> RunState:
    """Execute a full run; if out_dir is given, persist snapshots, diagnostics,
    and a resumable final checkpoint there.

    On numerical blow-up the final state is dumped before the
    NonFiniteFieldError propagates, so aborted runs stay inspectable.
    """
    policy = policy or SnapshotPolicy()
    out = None
    diag = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_config(cfg, out / "config.json")
    state = start_run(cfg, rng)
    snap_steps = policy.step_set(cfg)
    try:
        if out is not None and policy.diagnostics:
            diag = open(out / _DIAG_FILE, "w")
            diag.write(_DIAG_HEADER)
        t0 = _time.perf_counter()

        def handle(state: RunState) -> None:
            wall_ms = (_time.perf_counter() - t0) * 1000.0
            if diag is not None:
                diag.write(_diag_row(state, wall_ms))
            if out is not None and state.step in snap_steps:
                _snapshot(state, out, policy)
            if on_step:
                on_step(state)

        handle(state)
        while state.step < cfg.n_steps:
            advance(state)
            handle(state)
    except NonFiniteFieldError:
        if out is not None:
            _snapshot(state, out, policy)
            _write_state_meta(state, out)
        raise
    finally:
        if diag is not None:
            diag.close()
    if out is not None:
        # checkpoint needs both live fields for a bit-exact resume
        save_particles(state.ensemble, state.time, out / f"particles_{state.step}.bin")
        save_field(state.field_curr, out / f"field_{state.step}.bin")
        save_field(state.field_prev, out / f"field_{state.step - 1}.bin")
        _write_state_meta(state, out)
    return state


def resume(run_dir, t_final: float | None = None, policy: SnapshotPolicy | None = None) -> RunState:
    """Rebuild the state from a checkpoint and continue to t_final.

    The rng cursor is implicit in the step index (all draws are addressed),
    so the continuation is bit-identical to an uninterrupted run.
    """
    out = Path(run_dir)
    cfg_path = out / "config.json"
    meta_path = out / _STATE_FILE
    if not cfg_path.exists() or not meta_path.exists():
        raise FileNotFoundError(f"{run_dir} does not contain a run checkpoint")
    cfg = config_from_dict(json.loads(cfg_path.read_text()))
    if t_final is not None:
        cfg = cfg.with_overrides(t_final=t_final)
    meta = json.loads(meta_path.read_text())
    n = int(meta["step"])
    ens_file = out / f"particles_{n}.bin"
    fc_file = out / f"field_{n}.bin"
    fp_file = out / f"field_{n - 1}.bin"
    for fpath in (ens_file, fc_file, fp_file):
        if not fpath.exists():
            raise FileNotFoundError(f"checkpoint file missing: {fpath}")
    ensemble, _ = load_particles(ens_file, weight=cfg.weight)
    field_curr = load_field(fc_file)
    field_prev = load_field(fp_file)
    if field_curr.modes_per_dim != cfg.modes_per_dim:
        raise ValueError(
            f"checkpoint field has H = {field_curr.modes_per_dim}, config says {cfg.modes_per_dim}"
        )
    if ensemble.count != cfg.particles:
        raise ValueError(f"checkpoint has P = {ensemble.count}, config says {cfg.particles}")

    rng = RngStream(cfg.seed)
    c0 = init_field(cfg)
    bound = stability_bound(c0, cfg.total_mass, cfg.lam)
    evaluator = FieldDriftEvaluator(cfg.modes_per_dim, cfg.domain_len, cfg.beta)
    state = RunState(cfg, rng, ensemble, field_curr, field_prev, bound, evaluator)
    state.stability_violations = int(meta.get("stability_violations", 0))

    policy = policy or SnapshotPolicy()
    snap_steps = policy.step_set(cfg)
    if state.step >= cfg.n_steps:
        return state
    diag_path = out / _DIAG_FILE
    diag = open(diag_path, "a") if policy.diagnostics and diag_path.exists() else None
    t0 = _time.perf_counter()
    try:
        while state.step < cfg.n_steps:
            advance(state)
            if diag is not None:
                diag.write(_diag_row(state, (_time.perf_counter() - t0) * 1000.0))
            if state.step in snap_steps:
                _snapshot(state, out, policy)
    except NonFiniteFieldError:
        _snapshot(state, out, policy)
        _write_state_meta(state, out)
        raise
    finally:
        if diag is not None:
            diag.close()
    save_particles(state.ensemble, state.time, out / f"particles_{state.step}.bin")
    save_field(state.field_curr, out / f"field_{state.step}.bin")
    save_field(state.field_prev, out / f"field_{state.step - 1}.bin")
    _write_state_meta(state, out)
    return state
