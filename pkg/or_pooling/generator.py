"""
OR Pooling — Instance Generator
===============================
Random instances with seven surgical specialties, four identical rooms,
eight-hour days and up to three hours of overtime.

Per patient:
  specialty    uniform over the first n_specialties rows of SPECIALTY_TABLE
  earliest day uniform over the horizon, window length uniform 1..7
  priority     uniform 1..5  → waiting 1000·p $/day, postponement 15000·p $
  duration     μ of the specialty, σ = μ/6, t^max = 1.5μ
  total LOS    μ^LOS uniform in [0.75, 1.25] × (ward + ICU mean of the specialty)

Bed stock: `formula_0.8` sets M_h = round(0.8 · Σ_i μ_ih^LOS / |D|),
`preset` uses 35 ICU / 65 ward beds.
"""

import logging
from dataclasses import replace

import numpy as np

from .models import GeneratorConfig, Instance, Patient, SpecialtyProfile
from .sampling import STREAM_GRID, derive_seed, make_rng

logger = logging.getLogger(__name__)


# (name, mean surgical time min, sd min, ward LOS days, ICU LOS days, LOS sd days)
SPECIALTY_TABLE = (
    ("General",                     150.95, 25.16,  3.10, 4.650, 4.48),
    ("Neurology",                   135.06, 22.51,  2.89, 4.340, 5.19),
    ("Cardiovascular",              189.34, 31.56,  2.34, 3.500, 3.01),
    ("Orthopedic",                  151.95, 25.33,  3.08, 4.610, 4.51),
    ("Urology",                      94.00,  5.22,  6.27, 9.402, 3.68),
    ("Plastic and reconstructive",  157.72, 10.52, 15.77, 6.710, 4.54),
    ("Obstetrics and gynecology",    79.32,  5.29,  7.93, 5.220, 2.21),
)

GRID_WEEKS = (2, 3, 4)
GRID_SPECIALTIES = tuple(range(1, len(SPECIALTY_TABLE) + 1))


def specialty_profiles(n: int) -> tuple:
    """First n rows of the table, σ^duration reset to μ/6"""
    return tuple(
        SpecialtyProfile(id=s, name=name, mean_duration=mu, sd_duration=mu / 6.0,
                         mean_los_ward=ward, mean_los_icu=icu, sd_los=sd_los)
        for s, (name, mu, _sd, ward, icu, sd_los) in enumerate(SPECIALTY_TABLE[:n])
    )


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def bed_stock(config: GeneratorConfig, patients: list, horizon: int) -> tuple:
    if config.bed_rule == "preset":
        return (config.icu_beds, config.ward_beds)
    total = sum(p.mean_los_total for p in patients)
    icu = config.bed_factor * config.icu_share * total / horizon
    ward = config.bed_factor * (1.0 - config.icu_share) * total / horizon
    return (_round_half_up(icu), _round_half_up(ward))


def _check(config: GeneratorConfig):
    if not isinstance(config.weeks, (int, np.integer)) or config.weeks not in GRID_WEEKS:
        raise ValueError(f"weeks must be one of {GRID_WEEKS}, got {config.weeks!r}")
    if not 1 <= config.n_specialties <= len(SPECIALTY_TABLE):
        raise ValueError(f"n_specialties must be in 1..{len(SPECIALTY_TABLE)}, "
                         f"got {config.n_specialties}")
    if config.bed_rule not in ("formula_0.8", "preset"):
        raise ValueError(f"unknown bed_rule: {config.bed_rule}")
    if config.patients_per_week < 0 or config.window_max < 1 or config.rooms < 1:
        raise ValueError("patients_per_week >= 0, window_max >= 1 and rooms >= 1 required")
    if not 0.0 <= config.shared_fraction <= 1.0:
        raise ValueError("shared_fraction must be in [0, 1]")


def generate(config: GeneratorConfig = None) -> Instance:
    config = config or GeneratorConfig()
    _check(config)

    horizon = 7 * config.weeks
    n = config.weeks * config.patients_per_week
    profiles = specialty_profiles(config.n_specialties)
    rng = make_rng(config.seed)

    spec = rng.integers(0, config.n_specialties, size=n)
    earliest = rng.integers(1, horizon + 1, size=n)
    window = rng.integers(1, config.window_max + 1, size=n)
    priority = rng.integers(1, 6, size=n)
    los_factor = rng.uniform(1.0 - config.los_spread, 1.0 + config.los_spread, size=n)

    rooms = tuple(range(config.rooms))
    patients = []
    for i in range(n):
        prof = profiles[spec[i]]
        p = int(priority[i])
        patients.append(Patient(
            id=i,
            specialty=int(spec[i]),
            earliest_day=int(earliest[i]),
            latest_day=int(earliest[i] + window[i] - 1),
            priority=p,
            mean_duration=prof.mean_duration,
            sd_duration=prof.sd_duration,
            max_duration=config.max_duration_factor * prof.mean_duration,
            mean_los_total=float(los_factor[i] * prof.mean_los_total),
            sd_los=prof.sd_los,
            waiting_cost_rate=config.waiting_cost_per_priority * p,
            postpone_cost=config.postpone_cost_per_priority * p,
            eligible_rooms=rooms,
        ))

    instance = Instance(
        horizon_days=horizon,
        rooms=config.rooms,
        specialties=profiles,
        patients=tuple(patients),
        regular_time=config.regular_time,
        max_overtime=config.max_overtime,
        bed_stock=bed_stock(config, patients, horizon),
        shared_fraction=(config.shared_fraction, config.shared_fraction),
        or_open_cost=config.or_open_cost,
        overtime_cost_rate=config.overtime_cost_rate,
        surge_cost=(config.surge_cost_icu, config.surge_cost_ward),
        name=f"w{config.weeks}_s{config.n_specialties}_seed{config.seed}",
    )
    logger.debug("generated %s: %d patients, beds %s",
                 instance.name, n, instance.bed_stock)
    return instance


def generate_grid(base_seed: int, replications: int = 1,
                  template: GeneratorConfig = None) -> list:
    """
    weeks {2,3,4} × specialties 1..7 × replications.

    Seed of each cell derives from (base_seed, weeks, specialties, replication).
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    template = template or GeneratorConfig()
    out = []
    for weeks in GRID_WEEKS:
        for n_spec in GRID_SPECIALTIES:
            for rep in range(1, replications + 1):
                seed = derive_seed(base_seed, STREAM_GRID, weeks, n_spec, rep)
                cfg = replace(template, weeks=weeks, n_specialties=n_spec, seed=seed)
                out.append(replace(generate(cfg), name=f"w{weeks}_s{n_spec}_r{rep}"))
    logger.info("generated grid of %d instances", len(out))
    return out
