"""Synthetic street scenarios: diurnal traffic drives a well-mixed box
model of pollutant dispersion, observed by imperfect electrochemical
sensors on several nodes.

The box holds one street segment: concentration evolves with a per-vehicle
source term, wind ventilation, and deposition,

    dc/dt = E_g * n / V  -  (wind / L + k_dep) * (c - ambient_g)

integrated with explicit Euler at dt = 1 s. All nodes see the same true
concentration and differ only through their sensor parameters, which is
enough to exercise fusion and calibration. Everything is a pure function
of (config, seed): rerunning a scenario reproduces its output bit for bit.
"""

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigError
from .types import (
    SPECIES,
    EnvConditions,
    GasSpecies,
    GasVector,
    GroundTruthCount,
    SensorRecord,
    minute_of,
)
from .wire import quantize_sig

__all__ = [
    "Schedule",
    "DiurnalProfile",
    "SensorParams",
    "ScenarioConfig",
    "SensorLagState",
    "diurnal_profile",
    "emission_step",
    "sensor_observe",
    "run_scenario",
    "default_scenario",
    "default_diurnal_profile",
    "inject_stuck_fault",
    "inject_spike_fault",
    "write_truth_csv",
    "read_truth_csv",
]

DAY_S = 86400.0


@dataclass(frozen=True)
class Schedule:
    """Piecewise-linear time function, optionally periodic.

    ``points`` are (seconds, value) pairs with strictly increasing times;
    with ``period_s`` > 0 the function repeats (times must lie within one
    period), otherwise it holds the end values outside the breakpoints.
    """

    points: Tuple[Tuple[float, float], ...]
    period_s: float = 0.0

    def __post_init__(self):
        if not self.points:
            raise ValueError("schedule needs at least one point")
        times = [t for t, _ in self.points]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("schedule times must be strictly increasing")
        if self.period_s < 0:
            raise ValueError("period_s must be >= 0")
        if self.period_s and (times[0] < 0 or times[-1] >= self.period_s):
            raise ValueError("schedule times must lie within [0, period_s)")

    def value_at(self, t):
        """Interpolated value(s) at time ``t`` (scalar or array, seconds)."""
        times = np.array([p[0] for p in self.points])
        values = np.array([p[1] for p in self.points])
        if self.period_s:
            # wrap one point on each side so interpolation crosses midnight
            times = np.concatenate((
                [times[-1] - self.period_s], times, [times[0] + self.period_s]))
            values = np.concatenate(([values[-1]], values, [values[0]]))
            t = np.asarray(t) % self.period_s
        result = np.interp(t, times, values)
        return float(result) if np.ndim(result) == 0 else result


@dataclass(frozen=True)
class DiurnalProfile:
    """24 hourly traffic anchors (vehicles/min) joined by a smooth
    periodic spline and multiplied by ``scale``.

    Shape expectations mirror what street counts look like: the overnight
    trough between 02:00 and 05:00 is the global minimum, and early
    afternoon dips relative to the late-morning peak.
    """

    hourly: Tuple[float, ...]
    scale: float = 1.0

    def __post_init__(self):
        if len(self.hourly) != 24:
            raise ValueError(f"need 24 hourly anchors, got {len(self.hourly)}")
        if any(v < 0 or not math.isfinite(v) for v in self.hourly):
            raise ValueError("hourly anchors must be finite and >= 0")
        if self.scale <= 0:
            raise ValueError("scale must be > 0")

    def _spline(self) -> CubicSpline:
        cached = getattr(self, "_spline_memo", None)
        if cached is None:
            anchors = np.concatenate((self.hourly, [self.hourly[0]]))
            cached = CubicSpline(np.arange(25.0), anchors, bc_type="periodic")
            object.__setattr__(self, "_spline_memo", cached)
        return cached

    def rate_at(self, t_seconds):
        """Vehicles/min at ``t_seconds`` (scalar or array), clamped at 0."""
        hours = (np.asarray(t_seconds, dtype=float) % DAY_S) / 3600.0
        rate = np.maximum(self._spline()(hours) * self.scale, 0.0)
        return float(rate) if np.ndim(rate) == 0 else rate

    def validate(self) -> None:
        """Raise ConfigError unless the shape invariants hold."""
        minutes = np.arange(1440.0) * 60.0
        rates = self.rate_at(minutes)
        trough = int(np.argmin(rates))
        if not 120 <= trough <= 300:
            raise ConfigError(
                f"diurnal.hourly: global minimum at minute {trough}, "
                "expected within 02:00-05:00")
        midday_min = rates[720:960].min()
        late_morning_peak = rates[540:720].max()
        if not midday_min < late_morning_peak:
            raise ConfigError(
                "diurnal.hourly: no early-afternoon dip below the late-morning peak")


def diurnal_profile(t_seconds, profile: DiurnalProfile):
    """Traffic rate (vehicles/min) at a time of day; see DiurnalProfile."""
    return profile.rate_at(t_seconds)


@dataclass(frozen=True)
class SensorParams:
    """Imperfections of one node's electrochemical sensor suite.

    Applied per channel: first-order response lag ``tau_s``, then
    reading = gain * lagged + offset + drift_per_day * days + noise,
    floored at zero and quantized to wire resolution.
    """

    node_id: str
    gain: float = 1.0
    offset: float = 0.0
    noise_sigma: float = 0.02
    drift_per_day: float = 0.0
    tau_s: float = 30.0

    def __post_init__(self):
        if self.tau_s <= 0:
            raise ValueError("tau_s must be > 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of a synthetic street scenario.

    Emission factors are concentration-units * m3 / s per (vehicle/min) of
    traffic; ambient is the concentration the box relaxes to with no
    traffic. Schedules are functions of seconds since scenario start;
    ``start_ts`` must be midnight-aligned so time-of-day logic stays
    simple.
    """

    duration_days: float
    street_volume_m3: float
    exchange_length_m: float
    deposition_rate_per_s: float
    ambient: GasVector
    emission_factors: Mapping[GasSpecies, float]
    diurnal: DiurnalProfile
    wind_schedule: Schedule
    temp_schedule: Schedule
    rh_schedule: Schedule
    sensors: Tuple[SensorParams, ...]
    rng_seed: int = 42
    start_ts: int = 1714608000
    capacity_veh_per_min: float = 40.0

    def validate(self) -> None:
        """Raise ConfigError naming the offending key."""
        if self.duration_days <= 0:
            raise ConfigError("scenario.duration_days must be > 0")
        if self.street_volume_m3 <= 0:
            raise ConfigError("scenario.street_volume_m3 must be > 0")
        if self.exchange_length_m <= 0:
            raise ConfigError("scenario.exchange_length_m must be > 0")
        if self.deposition_rate_per_s < 0:
            raise ConfigError("scenario.deposition_rate_per_s must be >= 0")
        for gas in SPECIES:
            if gas not in self.emission_factors:
                raise ConfigError(f"scenario.emission_factors.{gas.value} missing")
            if self.emission_factors[gas] < 0:
                raise ConfigError(f"scenario.emission_factors.{gas.value} must be >= 0")
            if self.ambient[gas] < 0:
                raise ConfigError(f"scenario.ambient.{gas.value} must be >= 0")
        if not self.sensors:
            raise ConfigError("scenario.sensors must list at least one node")
        node_ids = [sp.node_id for sp in self.sensors]
        if len(set(node_ids)) != len(node_ids):
            raise ConfigError("scenario.sensors node_id values must be unique")
        if self.start_ts % 86400 != 0:
            raise ConfigError("scenario.start_ts must be midnight-aligned (multiple of 86400)")
        if self.capacity_veh_per_min <= 0:
            raise ConfigError("scenario.capacity_veh_per_min must be > 0")
        self.diurnal.validate()

    def emission_array(self) -> np.ndarray:
        return np.array([self.emission_factors[g] for g in SPECIES], dtype=float)


def emission_step(conc: GasVector, n_veh_per_min: float, env: EnvConditions,
                  cfg: ScenarioConfig, dt: float) -> GasVector:
    """One explicit-Euler step of the box model; result floored at 0.

    ``dt`` must be <= 10 s for stability of the explicit step.
    """
    if dt > 10.0:
        raise ValueError("emission_step requires dt <= 10 s")
    vent = env.wind_speed / cfg.exchange_length_m + cfg.deposition_rate_per_s
    out = []
    for gas in SPECIES:
        c = conc[gas]
        source = cfg.emission_factors[gas] * n_veh_per_min / cfg.street_volume_m3
        c = c + dt * (source - vent * (c - cfg.ambient[gas]))
        out.append(max(0.0, c))
    return GasVector(*out)


class SensorLagState:
    """Per-sensor first-order response memory (one value per gas)."""

    def __init__(self, initial: GasVector):
        self.lagged = initial.as_array()

    def advance(self, true_conc: GasVector, tau_s: float, dt: float) -> None:
        """Relax toward the true concentration with time constant tau.

        Uses the exact zero-order-hold discretization of the first-order
        lag, which stays stable for any tau > 0 and snaps to the input as
        tau -> 0.
        """
        alpha = 1.0 - math.exp(-dt / tau_s)
        self.lagged += alpha * (true_conc.as_array() - self.lagged)


def sensor_observe(true_conc: GasVector, state: SensorLagState, sp: SensorParams,
                   t_seconds: float, rng: np.random.Generator,
                   dt: float = 1.0) -> GasVector:
    """Advance the lag state by ``dt`` and produce one reading.

    reading = gain * lagged + offset + drift_per_day * (t / 86400)
              + Gaussian(0, noise_sigma), floored at 0 and quantized to
    the 6-significant-digit wire resolution.
    """
    state.advance(true_conc, sp.tau_s, dt)
    noise = rng.standard_normal(len(SPECIES)) * sp.noise_sigma
    raw = (sp.gain * state.lagged + sp.offset
           + sp.drift_per_day * (t_seconds / DAY_S) + noise)
    return GasVector(*(quantize_sig(max(0.0, v)) for v in raw))


def run_scenario(cfg: ScenarioConfig
                 ) -> Tuple[List[SensorRecord], List[GroundTruthCount]]:
    """Integrate the scenario: one record per node per minute plus the
    exact per-minute truth series.

    The box and the sensor lags advance at dt = 1 s; sensors are sampled
    (noise and all) at the last second of each minute. Output is a pure
    function of the config, including its seed.
    """
    cfg.validate()
    n_minutes = int(round(cfg.duration_days * 1440))
    if n_minutes < 1:
        raise ConfigError("scenario.duration_days too short for one minute")
    n_seconds = n_minutes * 60
    dt = 1.0

    t_rel = np.arange(n_seconds, dtype=float)
    rate = cfg.diurnal.rate_at(cfg.start_ts + t_rel)
    wind = cfg.wind_schedule.value_at(t_rel)
    temp_minute = cfg.temp_schedule.value_at(t_rel).reshape(n_minutes, 60).mean(axis=1)
    rh_minute = cfg.rh_schedule.value_at(t_rel).reshape(n_minutes, 60).mean(axis=1)
    wind_minute = wind.reshape(n_minutes, 60).mean(axis=1)

    ambient = cfg.ambient.as_array()
    emission = cfg.emission_array()
    volume = cfg.street_volume_m3
    vent = wind / cfg.exchange_length_m + cfg.deposition_rate_per_s
    source = np.outer(rate, emission) / volume  # (n_seconds, 4)

    sensors = cfg.sensors
    n_nodes = len(sensors)
    gains = np.array([sp.gain for sp in sensors])[:, None]
    offsets = np.array([sp.offset for sp in sensors])[:, None]
    drifts = np.array([sp.drift_per_day for sp in sensors])[:, None]
    sigmas = np.array([sp.noise_sigma for sp in sensors])[:, None]
    alphas = (1.0 - np.exp(-dt / np.array([sp.tau_s for sp in sensors])))[:, None]

    rng = np.random.default_rng(cfg.rng_seed)
    conc = ambient.copy()
    lag = np.tile(ambient, (n_nodes, 1))

    records: List[SensorRecord] = []
    truth: List[GroundTruthCount] = []
    for m in range(n_minutes):
        s0 = m * 60
        for s in range(s0, s0 + 60):
            conc += dt * (source[s] - vent[s] * (conc - ambient))
            np.maximum(conc, 0.0, out=conc)
            lag += alphas * (conc - lag)
        ts = cfg.start_ts + s0 + 59
        noise = rng.standard_normal((n_nodes, len(SPECIES)))
        readings = gains * lag + offsets + drifts * ((s0 + 59) / DAY_S) + sigmas * noise
        np.maximum(readings, 0.0, out=readings)
        env = EnvConditions(
            temperature=quantize_sig(temp_minute[m]),
            relative_humidity=quantize_sig(rh_minute[m]),
            wind_speed=quantize_sig(wind_minute[m]),
        )
        for i, sp in enumerate(sensors):
            records.append(SensorRecord(
                node_id=sp.node_id,
                seq=m + 1,
                ts=ts,
                gases=GasVector(*(quantize_sig(v) for v in readings[i])),
                env=env,
            ))
        truth.append(GroundTruthCount(
            minute=minute_of(ts),
            vehicles_per_min=float(rate[s0:s0 + 60].mean()),
        ))
    return records, truth


DEFAULT_HOURLY = (5.0, 3.0, 1.2, 0.8, 1.0, 2.5, 7.0, 14.0, 18.0, 20.0, 21.0, 22.0,
                  18.0, 16.0, 14.5, 15.5, 17.0, 19.0, 21.0, 20.0, 15.0, 11.0, 8.0, 6.0)


def default_diurnal_profile(scale: float = 1.0) -> DiurnalProfile:
    """Overnight trough near 03:00, late-morning peak, early-afternoon dip,
    evening rise."""
    return DiurnalProfile(hourly=DEFAULT_HOURLY, scale=scale)


def default_scenario(duration_days: float = 7.0, rng_seed: int = 42,
                     noise_on: bool = True) -> ScenarioConfig:
    """A 4-node street segment with warm-season weather.

    Deposition and exchange length are chosen so the default wind-dilution
    correction (kappa = 0.15) exactly compensates the box ventilation:
    kappa = 1 / (exchange_length * deposition_rate). Emission factors are
    ordered CO >> HC > SOOT > SO2.
    """
    hour = 3600.0
    sigma = (0.02, 0.025, 0.02, 0.03) if noise_on else (0.0,) * 4
    sensors = (
        SensorParams("n1", gain=1.00, offset=0.00, noise_sigma=sigma[0],
                     drift_per_day=0.0005 if noise_on else 0.0, tau_s=30.0),
        SensorParams("n2", gain=0.97, offset=0.01, noise_sigma=sigma[1],
                     drift_per_day=0.001 if noise_on else 0.0, tau_s=25.0),
        SensorParams("n3", gain=1.04, offset=0.00, noise_sigma=sigma[2],
                     drift_per_day=0.0 if noise_on else 0.0, tau_s=35.0),
        SensorParams("n4", gain=0.99, offset=0.02, noise_sigma=sigma[3],
                     drift_per_day=0.0008 if noise_on else 0.0, tau_s=30.0),
    )
    return ScenarioConfig(
        duration_days=duration_days,
        street_volume_m3=30000.0,
        exchange_length_m=200.0,
        deposition_rate_per_s=1.0 / 30.0,
        ambient=GasVector(co=0.4, so2=0.005, hc=0.05, soot=0.02),
        emission_factors={
            GasSpecies.CO: 180.0,
            GasSpecies.SO2: 3.6,
            GasSpecies.HC: 36.0,
            GasSpecies.SOOT: 9.0,
        },
        diurnal=default_diurnal_profile(),
        wind_schedule=Schedule(points=(
            (0.0, 0.6), (3 * hour, 0.5), (6 * hour, 0.8), (9 * hour, 1.5),
            (12 * hour, 2.2), (15 * hour, 2.8), (18 * hour, 2.0), (21 * hour, 1.0),
        ), period_s=DAY_S),
        temp_schedule=Schedule(points=(
            (0.0, 18.0), (4 * hour, 16.0), (8 * hour, 20.0), (13 * hour, 27.0),
            (16 * hour, 28.0), (20 * hour, 22.0),
        ), period_s=DAY_S),
        rh_schedule=Schedule(points=(
            (0.0, 55.0), (5 * hour, 65.0), (12 * hour, 35.0), (16 * hour, 30.0),
            (21 * hour, 50.0),
        ), period_s=DAY_S),
        sensors=sensors,
        rng_seed=rng_seed,
    )


# --- fault injection --------------------------------------------------------

def inject_stuck_fault(records: Sequence[SensorRecord], node_id: str,
                       gas: GasSpecies, start_minute: int, duration_min: int,
                       value: Optional[float] = None) -> List[SensorRecord]:
    """Pin one gas channel of one node to a constant for a span of minutes.

    ``value`` defaults to the channel's reading at the start of the span.
    Returns a new record list; the input is untouched.
    """
    pinned = None if value is None else quantize_sig(value)
    out = []
    for record in records:
        in_span = (record.node_id == node_id
                   and start_minute <= minute_of(record.ts) < start_minute + duration_min)
        if in_span:
            if pinned is None:
                pinned = record.gases[gas]
            gases = dataclasses.replace(record.gases, **{gas.value: pinned})
            record = dataclasses.replace(record, gases=gases)
        out.append(record)
    return out


def inject_spike_fault(records: Sequence[SensorRecord], node_id: str,
                       gas: GasSpecies, minute: int, factor: float = 3.0,
                       bump: float = 1.0) -> List[SensorRecord]:
    """Replace one minute's reading with factor * value + bump."""
    out = []
    for record in records:
        if record.node_id == node_id and minute_of(record.ts) == minute:
            spiked = quantize_sig(factor * record.gases[gas] + bump)
            gases = dataclasses.replace(record.gases, **{gas.value: spiked})
            record = dataclasses.replace(record, gases=gases)
        out.append(record)
    return out


# --- truth series io --------------------------------------------------------

def write_truth_csv(path, truth: Sequence[GroundTruthCount]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(["minute", "vehicles_per_min"])
        for row in truth:
            writer.writerow([row.minute, repr(row.vehicles_per_min)])


def read_truth_csv(path) -> List[GroundTruthCount]:
    with open(path, "r", encoding="utf-8", newline="") as fp:
        reader = csv.reader(fp)
        header = next(reader, None)
        if header != ["minute", "vehicles_per_min"]:
            raise ValueError(f"unexpected truth CSV header: {header}")
        return [GroundTruthCount(minute=int(m), vehicles_per_min=float(v))
                for m, v in reader]
