#!/usr/bin/env python3
"""Measuring the method's convergence rates.

Two small coupled experiments:

  * first order in the time step: halving dt halves the final-field error
    against a fine-step full-interaction reference (expect slope ~ 1);
  * half order in the batch size: the random-batch noise shrinks like
    sqrt(1/R - 1/P) (expect slope ~ -0.5 while R << P).

Common random numbers (shared initial ensemble and Brownian path) keep the
comparisons tight at a handful of trials.  Takes two to three minutes.
"""

from ksfield import SimulationConfig, UniformBall, validate_config
from ksfield.diagnostics import convergence_batch_experiment, convergence_dt_experiment

T = 0.01
base = dict(
    mu=1.0, chi=1.0, eps=1e-4, lam=0.1, domain_len=8.0, total_mass=20.0,
    init_rho=UniformBall(radius=1.0),
)

print("time-step study (P = 128, 3 trials)")
cfg = validate_config(SimulationConfig(
    modes_per_dim=8, particles=128, batch_size=64, dt=T / 16, t_final=T, seed=11, **base))
rec = convergence_dt_experiment(cfg, [T * 2.0**-k for k in range(8, 3, -1)],
                                trials=3, dt_ref=T * 2.0**-13)
for dt, e in zip(rec.axis, rec.errors):
    print(f"  dt = {dt:9.3e}   error = {e:.3e}")
print(f"  fitted slope: {rec.slope:+.3f}   (first order would be +1)")

print("\nbatch-size study (P = 2000, 2 trials)")
cfg = validate_config(SimulationConfig(
    modes_per_dim=8, particles=2000, batch_size=100, dt=T / 16, t_final=T, seed=12, **base))
rec = convergence_batch_experiment(cfg, [20, 40, 80, 160, 320], trials=2)
for R, e in zip(rec.axis, rec.errors):
    print(f"  R = {R:4d}   error = {e:.3e}")
print(f"  fitted slope: {rec.slope:+.3f}   (square-root decay would be -0.5)")
