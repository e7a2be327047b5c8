"""Gas concentrations to traffic: weighted baseline-subtracted channels
with environment corrections, then mean fusion across the node array.

The per-node estimate is

    estimate = sum_g  w_g * a_g(env) * max(0, c'_g - b_g)

where c' is the wind-dilution-corrected concentration, b the ambient
baseline, and a_g an environment factor: a clamped-linear temperature
factor for CO (cold air means more non-traffic CO, so its constant is
scaled down), an optional linear humidity term for unburned hydrocarbons,
and 1 for SO2 and soot. Functional forms are this artifact's choice; all
parameters live in configuration.
"""

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .errors import EmptyInputError, InsufficientNodesError, NonPositiveCapacityError
from .types import SPECIES, GasSpecies, GasVector, NodeSample

__all__ = [
    "WeightVector",
    "EnvCorrectionParams",
    "TrafficEstimate",
    "co_temperature_factor",
    "hc_humidity_factor",
    "wind_dilution_correct",
    "gas_features",
    "node_estimate",
    "array_fuse",
    "congestion_index",
    "write_estimates_csv",
    "read_estimates_csv",
]


@dataclass(frozen=True)
class WeightVector:
    """Per-gas constants, vehicles/min per concentration unit.

    Weights are non-negative by construction: a gas cannot contribute
    negative traffic.
    """

    co: float
    so2: float
    hc: float
    soot: float

    def __post_init__(self):
        for gas in SPECIES:
            w = self[gas]
            if not math.isfinite(w) or w < 0:
                raise ValueError(f"weight for {gas.value} must be finite and >= 0, got {w}")

    def __getitem__(self, species: GasSpecies) -> float:
        return getattr(self, species.value)

    def as_array(self) -> np.ndarray:
        return np.array([self.co, self.so2, self.hc, self.soot], dtype=float)

    @classmethod
    def from_array(cls, values) -> "WeightVector":
        vals = [float(v) for v in values]
        if len(vals) != len(SPECIES):
            raise ValueError(f"expected {len(SPECIES)} weights, got {len(vals)}")
        return cls(*vals)

    @classmethod
    def zeros(cls) -> "WeightVector":
        return cls(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class EnvCorrectionParams:
    """Environment-correction knobs.

    The CO factor ramps linearly from ``co_floor`` at ``co_theta_lo`` degC
    to 1.0 at ``co_theta_hi``; the humidity slope applies to HC only and
    defaults to off; ``wind_kappa`` scales the multiplicative dilution
    compensation (1 + kappa * wind).
    """

    co_theta_lo: float = -5.0
    co_theta_hi: float = 15.0
    co_floor: float = 0.3
    hc_rh_slope: float = 0.0
    wind_kappa: float = 0.15

    def __post_init__(self):
        if not self.co_theta_lo < self.co_theta_hi:
            raise ValueError("co_theta_lo must be < co_theta_hi")
        if not 0.0 < self.co_floor <= 1.0:
            raise ValueError("co_floor must be in (0, 1]")
        if self.wind_kappa < 0:
            raise ValueError("wind_kappa must be >= 0")


@dataclass(frozen=True)
class TrafficEstimate:
    """Fused segment-level estimate for one minute."""

    minute: int
    vehicles_per_min: float
    congestion_index: float
    node_estimates: Mapping[str, float]
    n_nodes_used: int
    #: Mean over nodes of each gas's weighted term, for reporting.
    contributions: Mapping[GasSpecies, float] = field(default_factory=dict)


def co_temperature_factor(temp: float, params: EnvCorrectionParams) -> float:
    """Cold-weather attenuation for the CO channel, in [co_floor, 1].

    Monotone non-decreasing and continuous in temperature.
    """
    ramp = (temp - params.co_theta_lo) / (params.co_theta_hi - params.co_theta_lo)
    return min(1.0, max(params.co_floor, ramp))


def hc_humidity_factor(relative_humidity: float, params: EnvCorrectionParams) -> float:
    """Linear humidity term for the HC channel, centered at 50% RH, floored at 0."""
    return max(0.0, 1.0 + params.hc_rh_slope * (relative_humidity - 50.0))


def wind_dilution_correct(gases: GasVector, wind_speed: float,
                          params: EnvCorrectionParams) -> GasVector:
    """Compensate advection losses: every channel times (1 + kappa * wind)."""
    if wind_speed < 0:
        raise ValueError("wind_speed must be >= 0")
    return gases.scaled(1.0 + params.wind_kappa * wind_speed)


def gas_features(sample: NodeSample, baseline: GasVector,
                 params: EnvCorrectionParams) -> np.ndarray:
    """Per-gas regression features x_g = a_g(env) * max(0, c'_g - b_g).

    The node estimate is exactly w . x, so calibration and estimation
    share one definition.
    """
    corrected = wind_dilution_correct(sample.gases, sample.env.wind_speed, params)
    factors = (
        co_temperature_factor(sample.env.temperature, params),
        1.0,
        hc_humidity_factor(sample.env.relative_humidity, params),
        1.0,
    )
    return np.array([
        a * max(0.0, corrected[g] - baseline[g])
        for g, a in zip(SPECIES, factors)
    ])


def node_estimate(sample: NodeSample, weights: WeightVector, baseline: GasVector,
                  params: EnvCorrectionParams) -> float:
    """One node's traffic estimate, vehicles/min, clamped at 0."""
    return max(0.0, float(weights.as_array() @ gas_features(sample, baseline, params)))


def array_fuse(per_node: Mapping[str, float], min_nodes: int = 1) -> float:
    """Arithmetic mean of the available node estimates.

    Summation runs in node-id order so the result is permutation
    invariant. Raises InsufficientNodesError below ``min_nodes``.
    """
    if len(per_node) < max(min_nodes, 1):
        raise InsufficientNodesError(
            f"got {len(per_node)} node estimates, need >= {max(min_nodes, 1)}")
    ordered = [per_node[k] for k in sorted(per_node)]
    return sum(ordered) / len(ordered)


def congestion_index(vehicles_per_min: float, capacity_veh_per_min: float) -> float:
    """Estimate normalized by street capacity, clamped to [0, 1]."""
    if capacity_veh_per_min <= 0:
        raise NonPositiveCapacityError(
            f"capacity must be > 0, got {capacity_veh_per_min}")
    return min(1.0, max(0.0, vehicles_per_min / capacity_veh_per_min))


# --- CSV export -----------------------------------------------------------

def _node_columns(estimates: Sequence[TrafficEstimate]) -> List[str]:
    nodes = set()
    for est in estimates:
        nodes.update(est.node_estimates)
    return sorted(nodes)


def write_estimates_csv(estimates: Sequence[TrafficEstimate], fp) -> None:
    """Write estimates as CSV: minute, fused value, index, node count,
    one column per node, then per-gas contribution columns.

    Floats are written with repr so rewrites of identical data are
    byte-identical.
    """
    nodes = _node_columns(estimates)
    writer = csv.writer(fp, lineterminator="\n")
    header = (["minute", "vehicles_per_min", "congestion_index", "n_nodes_used"]
              + nodes + [f"contrib_{g.value}" for g in SPECIES])
    writer.writerow(header)
    for est in estimates:
        row = [est.minute, repr(est.vehicles_per_min), repr(est.congestion_index),
               est.n_nodes_used]
        row += [repr(est.node_estimates[n]) if n in est.node_estimates else ""
                for n in nodes]
        row += [repr(float(est.contributions.get(g, 0.0))) for g in SPECIES]
        writer.writerow(row)


def read_estimates_csv(fp) -> List[TrafficEstimate]:
    """Inverse of write_estimates_csv. Raises EmptyInputError on no rows."""
    reader = csv.reader(fp if not isinstance(fp, str) else io.StringIO(fp))
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyInputError("estimates CSV has no header") from None
    fixed = ["minute", "vehicles_per_min", "congestion_index", "n_nodes_used"]
    if header[:4] != fixed:
        raise EmptyInputError(f"unexpected estimates CSV header: {header[:4]}")
    contrib_cols = [c for c in header if c.startswith("contrib_")]
    nodes = header[4:len(header) - len(contrib_cols)]

    estimates = []
    for row in reader:
        values = dict(zip(header, row))
        node_estimates = {n: float(values[n]) for n in nodes if values[n] != ""}
        contributions = {
            GasSpecies(c.removeprefix("contrib_")): float(values[c])
            for c in contrib_cols
        }
        estimates.append(TrafficEstimate(
            minute=int(values["minute"]),
            vehicles_per_min=float(values["vehicles_per_min"]),
            congestion_index=float(values["congestion_index"]),
            node_estimates=node_estimates,
            n_nodes_used=int(values["n_nodes_used"]),
            contributions=contributions,
        ))
    if not estimates:
        raise EmptyInputError("estimates CSV has no rows")
    return estimates
