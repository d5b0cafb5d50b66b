"""
OR Pooling — Scenario Sampling
==============================
Seeded Monte Carlo draws of surgical durations and lengths of stay.

  duration  ~ Normal(μ, σ) truncated to μ ± kσ   (k = 3 keeps 99.73% of the mass)
  total LOS ~ Normal(μ^LOS, σ^LOS), cut at 0, rounded to whole days
  ICU days  = round(icu_share · LOS),  ward days = LOS − ICU days

Every stream comes from a numpy SeedSequence keyed by (base seed, purpose,
index), so bundles are reproducible and independent across SAA iterations.
"""

import logging

import numpy as np
from numpy.random import PCG64, SeedSequence
from scipy.stats import truncnorm

from .models import DOWNSTREAMS, Instance, Patient, SamplerConfig, Scenario

logger = logging.getLogger(__name__)

# Stream purposes, mixed into every derived seed
STREAM_LB = 1
STREAM_UB = 2
STREAM_ORDER = 3
STREAM_EVP = 4
STREAM_GRID = 5


# ═══════════════════════════════════════════════════════════════
# Seeds
# ═══════════════════════════════════════════════════════════════

def derive_seed(base: int, *keys: int) -> int:
    """Injective-in-practice 64-bit seed for (base, *keys)"""
    ss = SeedSequence([int(base), *(int(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(base: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(PCG64(SeedSequence([int(base), *(int(k) for k in keys)])))


# ═══════════════════════════════════════════════════════════════
# Single draws
# ═══════════════════════════════════════════════════════════════

def duration_bounds(patient: Patient, sigmas: float = 3.0) -> tuple:
    """(lower, upper) truncation window, upper capped at t^max"""
    mu, sd = patient.mean_duration, patient.sd_duration
    return max(mu - sigmas * sd, 0.0), min(mu + sigmas * sd, patient.max_duration)


def sample_duration(patient: Patient, rng: np.random.Generator, sigmas: float = 3.0) -> float:
    lo, hi = duration_bounds(patient, sigmas)
    mu, sd = patient.mean_duration, patient.sd_duration
    t = truncnorm.rvs((lo - mu) / sd, (hi - mu) / sd, loc=mu, scale=sd, random_state=rng)
    # hi is already min(μ + 3σ, t^max); the clip only absorbs loc/scale round-off
    return float(min(t, patient.max_duration))


def split_los(total_raw, icu_share: float = 0.4) -> np.ndarray:
    """
    Raw total LOS draw(s) → integer (ICU, ward) days.

    Rounds half up; shape (..., 2).
    """
    total = np.floor(np.maximum(np.asarray(total_raw, dtype=float), 0.0) + 0.5)
    icu = np.floor(icu_share * total + 0.5)
    return np.stack([icu, total - icu], axis=-1).astype(np.int64)


def sample_los(patient: Patient, rng: np.random.Generator, icu_share: float = 0.4) -> tuple:
    raw = rng.normal(patient.mean_los_total, patient.sd_los)
    icu, ward = split_los(raw, icu_share)
    return int(icu), int(ward)


# ═══════════════════════════════════════════════════════════════
# Scenarios
# ═══════════════════════════════════════════════════════════════

def carryover(instance: Instance, config: SamplerConfig) -> np.ndarray:
    """b_shd: zero, or a geometric decay from fraction · M_h/|S| on day 1"""
    n_s, n_h, n_d = instance.n_specialties, len(DOWNSTREAMS), instance.horizon_days
    if config.carryover_mode == "zero" or n_s == 0:
        return np.zeros((n_s, n_h, n_d), dtype=np.int64)
    per_spec = config.carryover_fraction * np.asarray(instance.bed_stock, float) / n_s
    decay = config.carryover_decay ** np.arange(n_d)
    day_one = np.floor(np.outer(per_spec, decay) + 0.5).astype(np.int64)   # (H, D)
    return np.broadcast_to(day_one, (n_s, n_h, n_d)).copy()


def sample_scenario(instance: Instance, rng: np.random.Generator,
                    config: SamplerConfig = None) -> Scenario:
    """Durations first, then total LOS, both in patient order"""
    config = config or SamplerConfig()
    n = instance.n_patients
    if n == 0:
        return Scenario(np.zeros(0), np.zeros((0, len(DOWNSTREAMS)), dtype=np.int64),
                        carryover(instance, config), np.zeros(0))

    mu = np.array([p.mean_duration for p in instance.patients])
    sd = np.array([p.sd_duration for p in instance.patients])
    t_max = np.array([p.max_duration for p in instance.patients])
    k = config.truncation_sigmas
    lo = np.maximum(mu - k * sd, 0.0)
    hi = np.minimum(mu + k * sd, t_max)
    durations = truncnorm.rvs((lo - mu) / sd, (hi - mu) / sd, loc=mu, scale=sd,
                              size=n, random_state=rng)
    durations = np.minimum(durations, t_max)

    los_mu = np.array([p.mean_los_total for p in instance.patients])
    los_sd = np.array([p.sd_los for p in instance.patients])
    raw = rng.normal(los_mu, los_sd)
    return Scenario(durations, split_los(raw, config.icu_share),
                    carryover(instance, config), raw)


def sample_scenarios(instance: Instance, count: int, seed: int = None,
                     config: SamplerConfig = None, keys: tuple = ()) -> list:
    """
    `count` scenarios, scenario k drawn from stream (seed, *keys, k).

    A bundle of size P is a prefix of the bundle of size P' > P with the same keys.
    """
    config = config or SamplerConfig()
    seed = config.seed if seed is None else seed
    logger.debug("sampling %d scenarios (seed=%s keys=%s)", count, seed, keys)
    return [sample_scenario(instance, make_rng(seed, *keys, k), config) for k in range(count)]
