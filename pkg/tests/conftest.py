"""Shared fixtures. The 7-day default scenario and its pipeline run are
expensive, so they are built once per session and shared."""

import dataclasses
import time

import pytest

from airtraq.pipeline import run_pipeline
from airtraq.simulator import SensorParams, default_scenario, run_scenario
from airtraq.types import GasSpecies, GasVector


@pytest.fixture(scope="session")
def seven_day():
    """Default noisy 7-day scenario: (config, records, truth, sim_seconds)."""
    cfg = default_scenario(duration_days=7.0)
    t0 = time.perf_counter()
    records, truth = run_scenario(cfg)
    return cfg, records, truth, time.perf_counter() - t0


@pytest.fixture(scope="session")
def seven_day_result(seven_day):
    """Pipeline over the 7-day run: calibrate days 1-3, estimate days 4-7."""
    _, records, truth, _ = seven_day
    return run_pipeline(records, truth, split=3.0 / 7.0)


@pytest.fixture(scope="session")
def one_day():
    """Smaller noisy run for QC and preprocessing tests."""
    cfg = default_scenario(duration_days=1.0, rng_seed=7)
    records, truth = run_scenario(cfg)
    return cfg, records, truth


def model_matched_scenario(duration_days=1.0):
    """Noiseless scenario whose generation exactly matches the estimation
    model: ideal identical sensors and ambient proportional to the
    emission factors, so features stay rank-one and clamp-free."""
    base = default_scenario(duration_days=duration_days, noise_on=False)
    ideal = tuple(
        SensorParams(f"n{i + 1}", gain=1.0, offset=0.0, noise_sigma=0.0,
                     drift_per_day=0.0, tau_s=1.0)
        for i in range(4))
    ambient = GasVector(*(base.emission_factors[g] / 450.0 for g in (
        GasSpecies.CO, GasSpecies.SO2, GasSpecies.HC, GasSpecies.SOOT)))
    return dataclasses.replace(base, sensors=ideal, ambient=ambient)


@pytest.fixture(scope="session")
def model_matched_run():
    cfg = model_matched_scenario(duration_days=2.0)
    records, truth = run_scenario(cfg)
    return cfg, records, truth
