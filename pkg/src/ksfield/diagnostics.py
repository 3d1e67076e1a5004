"""Quantitative metrics and experiment drivers: CDF comparison against the
radial benchmark, coefficient errors, convergence-rate fits, blow-up
classification across spectral resolutions, and the gradient Lipschitz
estimator."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .config import SimulationConfig
from .model import ParticleEnsemble
from .radial_fdm import RadialGrid, fdm_cdf, solve_radial
from .rng import RngStream
from .simulation import NonFiniteFieldError, RunState, run_in_memory
from .spectral import SpectralField, field_to_grid, gradient_at_points


# ---------------------------------------------------------------------------
# Scalar metrics.


def empirical_cdf(ensemble: ParticleEnsemble, radii: np.ndarray) -> np.ndarray:
    """F(s) = fraction of particles with |X| <= s, on a sorted radius grid."""
    radii = np.asarray(radii, dtype=float)
    if (np.diff(radii) < 0).any():
        raise ValueError("radii must be sorted ascending")
    norms = np.sort(np.linalg.norm(ensemble.positions, axis=1))
    return np.searchsorted(norms, radii, side="right") / ensemble.count


def relative_cdf_error(f_sipf: np.ndarray, f_fdm: np.ndarray) -> float:
    """Mean over mesh points of |F_s - F_f| / F_f, zero where F_f vanishes."""
    f_sipf = np.asarray(f_sipf, dtype=float)
    f_fdm = np.asarray(f_fdm, dtype=float)
    if f_sipf.shape != f_fdm.shape:
        raise ValueError(f"length mismatch: {f_sipf.shape} vs {f_fdm.shape}")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(f_fdm > 0.0, np.abs(f_sipf - f_fdm) / f_fdm, 0.0)
    return float(terms.mean())


def coeff_l2_error(a: SpectralField, b: SpectralField) -> float:
    """Unweighted l2 norm of the coefficient difference."""
    if a.coeffs.shape != b.coeffs.shape or a.domain_len != b.domain_len:
        raise ValueError("fields live on different mode sets")
    return float(np.sqrt((np.abs(a.coeffs - b.coeffs) ** 2).sum()))


def max_concentration(f: SpectralField) -> float:
    """Max of |c| over the collocation grid."""
    return float(np.abs(field_to_grid(f, check_real=False)).max())


def fit_loglog_slope(axis, errors) -> tuple[float, float, float]:
    """Least-squares line through (log axis, log error); returns
    (slope, intercept, rms residual)."""
    axis = np.asarray(axis, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if axis.size < 3:
        raise ValueError("need at least 3 points to fit a slope")
    if (axis <= 0).any() or (errors <= 0).any():
        raise ValueError("log-log fit requires positive values")
    x = np.log(axis)
    y = np.log(errors)
    A = np.stack([x, np.ones_like(x)], axis=1)
    sol, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ sol - y) ** 2)))
    return float(sol[0]), float(sol[1]), resid


# ---------------------------------------------------------------------------
# Experiment record.


@dataclass
class ExperimentRecord:
    """One experiment's axis, per-value metrics, and fitted slope."""

    label: str
    axis_name: str
    axis: list
    errors: list
    trials: int
    slope: float | None = None
    intercept: float | None = None
    residual: float | None = None
    extra: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        ax = np.asarray(self.axis, dtype=float)
        if (ax <= 0).any() or (np.diff(ax) <= 0).any():
            raise ValueError("axis must be strictly positive and sorted ascending")
        if len(self.errors) != len(self.axis):
            raise ValueError("errors must match the axis length")

    def fit(self):
        if len(self.axis) >= 3:
            self.slope, self.intercept, self.residual = fit_loglog_slope(self.axis, self.errors)
        return self

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow([self.axis_name, "error", "trials", "slope"])
            for i, (x, e) in enumerate(zip(self.axis, self.errors)):
                w.writerow([x, e, self.trials, self.slope if i == 0 else ""])


# ---------------------------------------------------------------------------
# Validation against the radial benchmark.


def validation_cdf_error(cfg: SimulationConfig, benchmark: RadialGrid | None = None,
                         seeds: list[int] | None = None) -> dict:
    """Run the particle method for each seed and compare CDFs on the FDM mesh."""
    bench = benchmark if benchmark is not None else solve_radial(cfg)
    f_ref = fdm_cdf(bench)
    radii = bench.r
    seeds = seeds if seeds is not None else [cfg.seed]
    errors = []
    for sd in seeds:
        state = run_in_memory(cfg.with_overrides(seed=sd))
        f_emp = empirical_cdf(state.ensemble, radii)
        errors.append(relative_cdf_error(f_emp, f_ref))
    return {
        "errors": errors,
        "mean_error": float(np.mean(errors)),
        "seeds": list(seeds),
        "radii": radii,
        "fdm_cdf": f_ref,
    }


# ---------------------------------------------------------------------------
# Coupled convergence experiments.

# The reference is the full-interaction variant (batch = everyone, no
# sampling); within a trial every run shares the initial ensemble (same
# addressed draws) and the Brownian path, realized on the finest grid and
# aggregated to coarser steps.


def _aggregated_noise_provider(rng: RngStream, ratio: int):
    """Coarse-step standard normals as rescaled sums of fine-step draws."""

    def provider(step: int, P: int) -> np.ndarray:
        total = np.zeros((P, 3))
        for k in range(step * ratio, (step + 1) * ratio):
            total += rng.normals("brownian", k, (P, 3))
        return total / math.sqrt(ratio)

    return provider


def convergence_dt_experiment(cfg: SimulationConfig, dt_list, trials: int,
                              dt_ref: float | None = None) -> ExperimentRecord:
    """Coefficient error of the final field versus the time step.

    Every test dt must divide t_final and be an integer multiple of the
    reference dt so the common Brownian path can be aggregated exactly.
    """
    T = cfg.t_final
    dt_list = sorted(float(dt) for dt in dt_list)
    dt_ref = dt_ref if dt_ref is not None else T * 2.0**-13
    for dt in dt_list + [dt_ref]:
        n = T / dt
        if abs(n - round(n)) > 1e-9:
            raise ValueError(f"dt = {dt} does not divide t_final = {T}")
    ratios = []
    for dt in dt_list:
        q = dt / dt_ref
        if abs(q - round(q)) > 1e-9:
            raise ValueError(f"reference dt {dt_ref} does not divide test dt {dt}")
        ratios.append(int(round(q)))

    errs = np.zeros(len(dt_list))
    for trial in range(trials):
        rng = RngStream(cfg.seed, trial=trial)
        ref_state = run_in_memory(
            cfg.with_overrides(dt=dt_ref), rng=rng, pair_mode="full"
        )
        for i, (dt, ratio) in enumerate(zip(dt_list, ratios)):
            state = run_in_memory(
                cfg.with_overrides(dt=dt),
                rng=rng,
                noise_provider=_aggregated_noise_provider(rng, ratio),
            )
            errs[i] += coeff_l2_error(state.field_curr, ref_state.field_curr)
    errs /= trials
    rec = ExperimentRecord(
        label="dt-convergence", axis_name="dt", axis=dt_list, errors=list(errs), trials=trials,
        extra={"dt_ref": dt_ref},
    )
    return rec.fit()


def convergence_batch_experiment(cfg: SimulationConfig, R_list, trials: int) -> ExperimentRecord:
    """Coefficient error versus batch size against the full-interaction run.

    Reference and test runs share dt, initial ensemble, and Brownian path,
    so the measured error isolates the random-batch approximation.
    """
    R_list = sorted(int(R) for R in R_list)
    if R_list and R_list[-1] > cfg.particles:
        raise ValueError(f"batch size {R_list[-1]} exceeds particles {cfg.particles}")
    errs = np.zeros(len(R_list))
    for trial in range(trials):
        rng = RngStream(cfg.seed, trial=trial)
        ref_state = run_in_memory(cfg, rng=rng, pair_mode="full")
        for i, R in enumerate(R_list):
            state = run_in_memory(cfg.with_overrides(batch_size=R), rng=rng)
            errs[i] += coeff_l2_error(state.field_curr, ref_state.field_curr)
    errs /= trials
    rec = ExperimentRecord(
        label="batch-convergence", axis_name="R", axis=R_list, errors=list(errs), trials=trials,
    )
    return rec.fit()


# ---------------------------------------------------------------------------
# Blow-up detection.


def classify_curves(curves: dict[int, list[float]], stable_tol: float = 0.2,
                    blowup_factor: float = 2.0) -> str:
    """Compare concentration-peak curves across spectral resolutions at the
    final probe: blow-up candidate when the finest grid runs at least
    ``blowup_factor`` above the coarsest, stable when all curves agree
    within ``stable_tol``.

    Ratio-based, so rescaling every curve by a common factor cannot change
    the classification.  An aborted (non-finite) run counts as divergence.
    """
    finals = {}
    for H, vals in curves.items():
        if vals and not np.isfinite(vals[-1]):
            return "blowup-candidate"
        finals[H] = vals[-1] if vals else np.nan
    if any(not np.isfinite(v) for v in finals.values()):
        return "blowup-candidate"
    h_lo, h_hi = min(finals), max(finals)
    lo, hi = finals[h_lo], finals[h_hi]
    if lo > 0 and hi / lo >= blowup_factor:
        return "blowup-candidate"
    vals = np.array(list(finals.values()))
    if vals.min() > 0 and vals.max() / vals.min() <= 1.0 + stable_tol:
        return "stable"
    return "indeterminate"


def peak_excess(f: SpectralField) -> float:
    """Max over the grid of |c - mean(c)|, the resolution-sensitive part of
    the peak.  The spatial mean (DC mode) follows the identical recursion at
    every H by mass conservation, so it carries no divergence information
    and would otherwise put a common floor under the cross-H ratios."""
    mean = float(f.coeffs[0, 0, 0].real)
    g = field_to_grid(f, check_real=False)
    return float(np.abs(g - mean).max())


def blowup_scan(cfg_base: SimulationConfig, M0_list, H_list, t_final: float,
                probe_times) -> ExperimentRecord:
    """Track the concentration peak over time for each (M0, H) and classify
    by cross-resolution divergence of the mean-removed peak.

    Runs aborted by a non-finite field are recorded as blow-up candidates
    with their abort time.
    """
    M0_list = sorted(float(m) for m in M0_list)
    H_list = sorted(int(h) for h in H_list)
    if not M0_list or not H_list:
        raise ValueError("M0_list and H_list must be nonempty")
    probe_times = sorted(float(t) for t in probe_times)
    curves: dict[float, dict[int, list[float]]] = {}
    excess: dict[float, dict[int, list[float]]] = {}
    abort_times: dict[tuple[float, int], float] = {}
    for M0 in M0_list:
        curves[M0] = {}
        excess[M0] = {}
        for H in H_list:
            cfg = cfg_base.with_overrides(total_mass=M0, modes_per_dim=H, t_final=t_final)
            probe_steps = {int(round(t / cfg.dt)) for t in probe_times if t <= t_final + 1e-12}
            probe_steps.add(cfg.n_steps)
            series: list[float] = []
            series_ex: list[float] = []

            def on_step(state: RunState, _steps=probe_steps, _max=series, _ex=series_ex):
                if state.step in _steps:
                    _max.append(max_concentration(state.field_curr))
                    _ex.append(peak_excess(state.field_curr))

            try:
                run_in_memory(cfg, on_step=on_step)
            except NonFiniteFieldError as e:
                series.append(float("inf"))
                series_ex.append(float("inf"))
                abort_times[(M0, H)] = e.time
            curves[M0][H] = series
            excess[M0][H] = series_ex
    classification = {M0: classify_curves(excess[M0]) for M0 in M0_list}
    ratios = []
    for M0 in M0_list:
        finals = {H: v[-1] for H, v in excess[M0].items()}
        lo = finals[min(finals)]
        ratios.append(finals[max(finals)] / lo if lo > 0 else float("inf"))
    return ExperimentRecord(
        label="blowup-scan",
        axis_name="M0",
        axis=M0_list,
        errors=ratios,  # divergence ratio of largest-H vs smallest-H peak excess
        trials=1,
        extra={
            "curves": curves,
            "excess": excess,
            "classification": classification,
            "abort_times": abort_times,
            "H_list": H_list,
            "probe_times": probe_times,
        },
    )


def write_blowup_csv(rec: ExperimentRecord, path) -> None:
    curves = rec.extra["curves"]
    excess = rec.extra["excess"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["M0", "H", "probe_index", "max_c", "peak_excess", "classification"])
        for M0, per_h in curves.items():
            cls = rec.extra["classification"][M0]
            for H, series in per_h.items():
                for i, v in enumerate(series):
                    w.writerow([M0, H, i, v, excess[M0][H][i], cls])


# ---------------------------------------------------------------------------
# Gradient Lipschitz estimator.


def lipschitz_estimate(field: SpectralField, ensemble: ParticleEnsemble, n_pairs: int,
                       rng: RngStream) -> float:
    """Max over sampled particle pairs of |grad c(x) - grad c(y)| / |x - y|."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    P = ensemble.count
    if P < 2:
        raise ValueError("need at least two particles")
    gen = rng.generator("pairs")
    pos = ensemble.positions
    if np.unique(pos, axis=0).shape[0] < 2:
        raise ValueError("fewer than two distinct particle positions")
    idx_a = np.empty(n_pairs, dtype=np.int64)
    idx_b = np.empty(n_pairs, dtype=np.int64)
    filled = 0
    while filled < n_pairs:
        a = gen.integers(0, P, size=n_pairs - filled)
        b = gen.integers(0, P, size=n_pairs - filled)
        ok = np.linalg.norm(pos[a] - pos[b], axis=1) >= 1e-12
        take = int(ok.sum())
        idx_a[filled : filled + take] = a[ok]
        idx_b[filled : filled + take] = b[ok]
        filled += take
    ga = gradient_at_points(field, pos[idx_a])
    gb = gradient_at_points(field, pos[idx_b])
    num = np.linalg.norm(ga - gb, axis=1)
    den = np.linalg.norm(pos[idx_a] - pos[idx_b], axis=1)
    return float((num / den).max())


def lipschitz_experiment(cfg: SimulationConfig, H_list, n_pairs: int = 1000) -> ExperimentRecord:
    """Run to t_final at each spectral resolution and estimate L(H)."""
    H_list = sorted(int(h) for h in H_list)
    values = []
    for H in H_list:
        cfg_h = cfg.with_overrides(modes_per_dim=H)
        state = run_in_memory(cfg_h)
        values.append(
            lipschitz_estimate(state.field_curr, state.ensemble, n_pairs, RngStream(cfg_h.seed))
        )
    return ExperimentRecord(
        label="lipschitz", axis_name="H", axis=H_list, errors=values, trials=1,
    )
