"""Seeded synthetic deployments standing in for a real utilization trace.

Each VM mixes a shared deployment signal with its own idiosyncratic signal:

    x_i = sqrt(rho) * shared(t - lag_i) + sqrt(1 - rho) * own_i + WHITE_GAIN * noise * white_i

``shared`` is a unit-variance daily profile (two harmonics) plus a
piecewise-linear drift plus ``AR_GAIN * noise`` times a unit-variance AR(1)
process. ``own_i`` is ``OWN_GAIN * noise`` times an independent AR(1)
process, so at the default noise both parts have comparable variance and
``rho`` is close to the cross-VM correlation; at zero noise every VM is
exactly periodic plus drift.

``lag_i = i * lag_step`` intervals, modelling load that reaches the tiers of
a deployment one after another, so each VM trails its predecessor.

The average channel is ``level_i + amplitude * x_i``; max and min sit above
and below it by a per-VM gap plus half-normal jitter, and all three are
clipped to [0, 1], which keeps ``min <= avg <= max``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import DAY_SECONDS, Deployment, VmSeries
from .errors import UsageError

DRIFT_SCALE = 0.15
AR_GAIN = 2.0
WHITE_GAIN = 0.5
OWN_GAIN = 5.0  # unit-variance own signal at the default noise of 0.2


@dataclass(frozen=True)
class SynthConfig:
    deployments: int = 1
    vms: int = 8
    days: float = 30
    interval_seconds: int = 300
    noise: float = 0.2
    rho: float = 0.9
    drift_segments: int = 3
    ar_coef: float = 0.5
    amplitude: float = 0.1
    lag_step: int = 1
    seed: int = 0
    start_timestamp: int = 0

    def validate(self):
        if self.deployments < 1 or self.vms < 1:
            raise UsageError("deployments and vms must be >= 1")
        if self.interval_seconds < 1 or DAY_SECONDS % self.interval_seconds:
            raise UsageError("interval_seconds must divide one day")
        if self.days <= 0 or self.length < 2:
            raise UsageError("days must cover at least two intervals")
        if self.noise < 0:
            raise UsageError("noise must be non-negative")
        if not 0 <= self.rho <= 1:
            raise UsageError("rho must lie in [0, 1]")
        if self.drift_segments < 1:
            raise UsageError("drift_segments must be >= 1")
        if not 0 <= self.ar_coef < 1:
            raise UsageError("ar_coef must lie in [0, 1)")
        if self.lag_step < 0:
            raise UsageError("lag_step must be non-negative")
        if self.start_timestamp % self.interval_seconds:
            raise UsageError("start_timestamp must be on the interval grid")

    @property
    def length(self) -> int:
        return int(round(self.days * DAY_SECONDS / self.interval_seconds))

    @property
    def steps_per_day(self) -> int:
        return DAY_SECONDS // self.interval_seconds


def _ar1(rng, n, coef):
    innov = rng.standard_normal(n) * math.sqrt(1.0 - coef * coef)
    out = np.empty(n)
    prev = rng.standard_normal()
    for i in range(n):
        prev = coef * prev + innov[i]
        out[i] = prev
    return out


def _latent(rng, cfg: SynthConfig, n):
    t = np.arange(n)
    w = 2 * math.pi * t / cfg.steps_per_day
    a1, a2 = rng.uniform(0.6, 1.0), rng.uniform(0.1, 0.4)
    daily = (a1 * np.sin(w + rng.uniform(0, 2 * math.pi))
             + a2 * np.sin(2 * w + rng.uniform(0, 2 * math.pi))) / math.sqrt((a1 * a1 + a2 * a2) / 2)
    knots_x = np.linspace(0, n - 1, cfg.drift_segments + 1)
    knots_y = rng.normal(0.0, DRIFT_SCALE, cfg.drift_segments + 1)
    drift = np.interp(t, knots_x, knots_y)
    ar = _ar1(rng, n, cfg.ar_coef)
    return daily + drift + AR_GAIN * cfg.noise * ar


def synth_deployment(cfg: SynthConfig, rng, deployment_id: str) -> Deployment:
    n = cfg.length
    max_lag = cfg.lag_step * (cfg.vms - 1)
    shared = _latent(rng, cfg, n + max_lag)
    a, b = math.sqrt(cfg.rho), math.sqrt(1.0 - cfg.rho)
    vms = []
    for i in range(cfg.vms):
        lag = i * cfg.lag_step
        own = OWN_GAIN * cfg.noise * _ar1(rng, n, cfg.ar_coef)
        x = (a * shared[max_lag - lag:max_lag - lag + n] + b * own
             + WHITE_GAIN * cfg.noise * rng.standard_normal(n))
        level = rng.uniform(0.35, 0.55)
        gap_hi, gap_lo = rng.uniform(0.04, 0.1), rng.uniform(0.02, 0.06)
        avg = level + cfg.amplitude * x
        jitter = 0.25 * cfg.amplitude * cfg.noise
        hi = avg + gap_hi + jitter * np.abs(rng.standard_normal(n))
        lo = avg - gap_lo - jitter * np.abs(rng.standard_normal(n))
        values = np.clip(np.column_stack([lo, avg, hi]), 0.0, 1.0)
        vms.append(VmSeries(f"vm{i:03d}", cfg.interval_seconds, cfg.start_timestamp, values))
    return Deployment(deployment_id, vms)


def synthesize(cfg: SynthConfig) -> list[Deployment]:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    return [synth_deployment(cfg, rng, f"dep{d:03d}") for d in range(cfg.deployments)]
