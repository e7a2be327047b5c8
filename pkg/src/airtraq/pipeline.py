"""End-to-end plumbing: records -> QC -> minute samples -> calibration ->
fused estimates -> evaluation, plus the YAML config file all stages share.

The train/holdout split is by time, never random: weights are
time-variant, so a random split would leak future information into
calibration.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import yaml

from .calibration import (
    CalibState,
    Checkpoint,
    FitReport,
    evaluate,
    features,
    rls_update,
)
from .errors import ConfigError, NoOverlapError
from .estimator import (
    EnvCorrectionParams,
    TrafficEstimate,
    WeightVector,
    array_fuse,
    congestion_index,
    gas_features,
)
from .preprocess import (
    BaselineVector,
    QcConfig,
    baseline_estimate,
    impute_gaps,
    minute_aggregate,
    qc_filter,
)
from .simulator import ScenarioConfig, default_scenario
from .types import SPECIES, GasSpecies, GroundTruthCount, NodeSample, SensorRecord

__all__ = [
    "AppConfig",
    "PipelineResult",
    "load_config",
    "prepare_node_series",
    "compute_baselines",
    "train_weights",
    "estimate_minutes",
    "run_pipeline",
    "hourly_summary",
]

BASELINE_WINDOW_MIN = 1440
BASELINE_QUANTILE = 0.05


@dataclass
class AppConfig:
    """Everything the CLI reads from one YAML file."""

    scenario: ScenarioConfig
    qc: QcConfig = field(default_factory=QcConfig)
    env_params: EnvCorrectionParams = field(default_factory=EnvCorrectionParams)


def _require(mapping: Mapping, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"{where}.{key} is required")
    return mapping[key]


def _gas_mapping(raw: Mapping, where: str) -> Dict[GasSpecies, float]:
    try:
        return {GasSpecies(str(k).lower()): float(v) for k, v in raw.items()}
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _schedule_from(raw: Mapping, where: str):
    from .simulator import Schedule
    points = _require(raw, "points", where)
    try:
        return Schedule(points=tuple((float(t), float(v)) for t, v in points),
                        period_s=float(raw.get("period_s", 0.0)))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def load_config(path) -> AppConfig:
    """Parse the scenario/pipeline YAML; diagnostics name the bad key."""
    from .simulator import DiurnalProfile, SensorParams
    from .types import GasVector

    with open(path, "r", encoding="utf-8") as fp:
        try:
            doc = yaml.safe_load(fp)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping at top level")

    defaults = default_scenario()
    raw = doc.get("scenario", {})
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a mapping")

    kwargs = {}
    for key, caster in (
        ("duration_days", float), ("street_volume_m3", float),
        ("exchange_length_m", float), ("deposition_rate_per_s", float),
        ("rng_seed", int), ("start_ts", int), ("capacity_veh_per_min", float),
    ):
        if key in raw:
            try:
                kwargs[key] = caster(raw[key])
            except (ValueError, TypeError):
                raise ConfigError(f"scenario.{key} must be a {caster.__name__}") from None
        else:
            kwargs[key] = getattr(defaults, key)

    if "ambient" in raw:
        try:
            kwargs["ambient"] = GasVector.from_mapping(raw["ambient"])
        except ValueError as exc:
            raise ConfigError(f"scenario.ambient: {exc}") from None
    else:
        kwargs["ambient"] = defaults.ambient
    kwargs["emission_factors"] = (
        _gas_mapping(raw["emission_factors"], "scenario.emission_factors")
        if "emission_factors" in raw else dict(defaults.emission_factors))

    if "diurnal" in raw:
        diurnal_raw = raw["diurnal"]
        hourly = _require(diurnal_raw, "hourly", "scenario.diurnal")
        try:
            kwargs["diurnal"] = DiurnalProfile(
                hourly=tuple(float(v) for v in hourly),
                scale=float(diurnal_raw.get("scale", 1.0)))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"scenario.diurnal: {exc}") from None
    else:
        kwargs["diurnal"] = defaults.diurnal

    for key in ("wind_schedule", "temp_schedule", "rh_schedule"):
        kwargs[key] = (_schedule_from(raw[key], f"scenario.{key}")
                       if key in raw else getattr(defaults, key))

    if "sensors" in raw:
        sensors = []
        for i, entry in enumerate(raw["sensors"]):
            where = f"scenario.sensors[{i}]"
            try:
                sensors.append(SensorParams(
                    node_id=str(_require(entry, "node_id", where)),
                    gain=float(entry.get("gain", 1.0)),
                    offset=float(entry.get("offset", 0.0)),
                    noise_sigma=float(entry.get("noise_sigma", 0.02)),
                    drift_per_day=float(entry.get("drift_per_day", 0.0)),
                    tau_s=float(entry.get("tau_s", 30.0)),
                ))
            except ValueError as exc:
                raise ConfigError(f"{where}: {exc}") from None
        kwargs["sensors"] = tuple(sensors)
    else:
        kwargs["sensors"] = defaults.sensors

    scenario = ScenarioConfig(**kwargs)
    scenario.validate()

    qc_raw = doc.get("qc", {})
    try:
        ranges = dict(QcConfig().gas_ranges)
        if "gas_ranges" in qc_raw:
            for k, bounds in qc_raw["gas_ranges"].items():
                ranges[GasSpecies(str(k).lower())] = (float(bounds[0]), float(bounds[1]))
        qc = QcConfig(
            gas_ranges=ranges,
            stuck_run_len=int(qc_raw.get("stuck_run_len", 10)),
            max_gap=int(qc_raw.get("max_gap", 3)),
            spike_factor=float(qc_raw.get("spike_factor", 8.0)),
            spike_window=int(qc_raw.get("spike_window", 11)),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"qc: {exc}") from None

    est_raw = doc.get("estimator", {})
    try:
        env_params = EnvCorrectionParams(
            co_theta_lo=float(est_raw.get("co_theta_lo", -5.0)),
            co_theta_hi=float(est_raw.get("co_theta_hi", 15.0)),
            co_floor=float(est_raw.get("co_floor", 0.3)),
            hc_rh_slope=float(est_raw.get("hc_rh_slope", 0.0)),
            wind_kappa=float(est_raw.get("wind_kappa", 0.15)),
        )
    except ValueError as exc:
        raise ConfigError(f"estimator: {exc}") from None

    return AppConfig(scenario=scenario, qc=qc, env_params=env_params)


@dataclass
class PipelineResult:
    estimates: List[TrafficEstimate]
    report: FitReport
    checkpoint: Checkpoint
    n_rejected: int
    train_minutes: int
    holdout_minutes: int
    elapsed_s: float = 0.0


def prepare_node_series(records: Sequence[SensorRecord], qc: QcConfig
                        ) -> Tuple[Dict[str, List[NodeSample]], int]:
    """QC, aggregate to minutes, and gap-fill; returns series per node
    plus the rejected-record count."""
    ordered = sorted(records, key=lambda r: (r.node_id, r.seq))
    clean, rejected = qc_filter(ordered, qc)
    samples = minute_aggregate(clean)
    by_node: Dict[str, List[NodeSample]] = {}
    for sample in samples:
        by_node.setdefault(sample.node_id, []).append(sample)
    return ({node: impute_gaps(series, qc.max_gap)
             for node, series in by_node.items()}, len(rejected))


def compute_baselines(by_node: Mapping[str, Sequence[NodeSample]],
                      before_minute: Optional[int] = None
                      ) -> Dict[str, BaselineVector]:
    """Per-node ambient floors, from samples before ``before_minute`` when
    given (keeps holdout data out of calibration)."""
    baselines = {}
    for node, series in by_node.items():
        scope = ([s for s in series if s.minute < before_minute]
                 if before_minute is not None else list(series))
        if not scope:
            scope = list(series)
        baselines[node] = baseline_estimate(
            scope, window=BASELINE_WINDOW_MIN, quantile=BASELINE_QUANTILE)
    return baselines


def train_weights(by_node: Mapping[str, Sequence[NodeSample]],
                  truth_by_minute: Mapping[int, float],
                  minutes: Sequence[int],
                  baselines: Mapping[str, BaselineVector],
                  env_params: EnvCorrectionParams,
                  lam: float = 0.99, delta: float = 100.0) -> CalibState:
    """Run the RLS loop over the given minutes, strictly in time order.

    Every reporting node contributes one update per minute against the
    street-level truth: the enumeration feedback is shared by the whole
    array, and training each node toward the full count keeps mean fusion
    unbiased.
    """
    sample_at = {(s.node_id, s.minute): s
                 for series in by_node.values() for s in series}
    state = CalibState.fresh(lam=lam, delta=delta)
    nodes = sorted(by_node)
    for minute in sorted(minutes):
        y = truth_by_minute.get(minute)
        if y is None:
            continue
        for node in nodes:
            sample = sample_at.get((node, minute))
            if sample is None:
                continue
            x = features(sample, baselines[node], env_params)
            state = rls_update(state, x, y)
    return state


def estimate_minutes(by_node: Mapping[str, Sequence[NodeSample]],
                     minutes: Sequence[int],
                     weights: WeightVector,
                     baselines: Mapping[str, BaselineVector],
                     env_params: EnvCorrectionParams,
                     capacity: float,
                     min_nodes: int = 1) -> List[TrafficEstimate]:
    """Frozen-weight estimation: per-node estimates, mean fusion, index."""
    sample_at = {(s.node_id, s.minute): s
                 for series in by_node.values() for s in series}
    nodes = sorted(by_node)
    w = weights.as_array()
    estimates = []
    for minute in sorted(minutes):
        per_node = {}
        contribution_sum = dict.fromkeys(SPECIES, 0.0)
        for node in nodes:
            sample = sample_at.get((node, minute))
            if sample is None:
                continue
            x = gas_features(sample, baselines[node], env_params)
            per_node[node] = max(0.0, float(w @ x))
            for g, term in zip(SPECIES, w * x):
                contribution_sum[g] += float(term)
        if not per_node:
            continue
        fused = array_fuse(per_node, min_nodes=min_nodes)
        estimates.append(TrafficEstimate(
            minute=minute,
            vehicles_per_min=fused,
            congestion_index=congestion_index(fused, capacity),
            node_estimates=per_node,
            n_nodes_used=len(per_node),
            contributions={g: contribution_sum[g] / len(per_node) for g in SPECIES},
        ))
    return estimates


def run_pipeline(records: Sequence[SensorRecord],
                 truth: Sequence[GroundTruthCount],
                 split: float,
                 qc: Optional[QcConfig] = None,
                 env_params: Optional[EnvCorrectionParams] = None,
                 capacity: float = 40.0,
                 lam: float = 0.99,
                 delta: float = 100.0,
                 min_nodes: int = 1) -> PipelineResult:
    """Calibrate on the first ``split`` fraction of truth minutes, freeze
    the weights, estimate the rest, and score against the held-out truth.
    """
    import time as _time
    t0 = _time.perf_counter()

    if not 0.0 < split < 1.0:
        raise ConfigError(f"split must be strictly between 0 and 1, got {split}")
    qc = qc or QcConfig()
    env_params = env_params or EnvCorrectionParams()

    truth_by_minute = {g.minute: g.vehicles_per_min for g in truth}
    minutes = sorted(truth_by_minute)
    if len(minutes) < 2:
        raise NoOverlapError("need at least two truth minutes to split")
    cut = minutes[int(len(minutes) * split)]
    train_minutes = [m for m in minutes if m < cut]
    holdout_minutes = [m for m in minutes if m >= cut]

    by_node, n_rejected = prepare_node_series(records, qc)
    if not by_node:
        raise NoOverlapError("no samples survived QC")
    baselines = compute_baselines(by_node, before_minute=cut)
    state = train_weights(by_node, truth_by_minute, train_minutes, baselines,
                          env_params, lam=lam, delta=delta)

    estimates = estimate_minutes(by_node, holdout_minutes, state.weight_vector(),
                                 baselines, env_params, capacity,
                                 min_nodes=min_nodes)
    pred = {e.minute: e.vehicles_per_min for e in estimates}
    holdout_truth = {m: truth_by_minute[m] for m in holdout_minutes}
    report = evaluate(pred, holdout_truth)

    checkpoint = Checkpoint(state=state, baselines=dict(baselines),
                            env_params=env_params, capacity_veh_per_min=capacity)
    return PipelineResult(
        estimates=estimates, report=report, checkpoint=checkpoint,
        n_rejected=n_rejected, train_minutes=len(train_minutes),
        holdout_minutes=len(holdout_minutes),
        elapsed_s=_time.perf_counter() - t0,
    )


def hourly_summary(estimates: Sequence[TrafficEstimate]) -> Dict:
    """Hour-of-day means plus extremes and the per-gas breakdown."""
    by_hour: Dict[int, List[float]] = {}
    contrib_totals = dict.fromkeys(SPECIES, 0.0)
    for est in estimates:
        hour = (est.minute % 1440) // 60
        by_hour.setdefault(hour, []).append(est.vehicles_per_min)
        for g in SPECIES:
            contrib_totals[g] += float(est.contributions.get(g, 0.0))

    hourly_means = {h: sum(v) / len(v) for h, v in sorted(by_hour.items())}
    min_hour = min(hourly_means, key=lambda h: (hourly_means[h], h))
    max_hour = max(hourly_means, key=lambda h: (hourly_means[h], -h))
    n = len(estimates)
    return {
        "hourly_means": hourly_means,
        "min_hour": min_hour,
        "max_hour": max_hour,
        "mean_vehicles_per_min": sum(e.vehicles_per_min for e in estimates) / n,
        "mean_contributions": {g: contrib_totals[g] / n for g in SPECIES},
        "n_minutes": n,
    }
