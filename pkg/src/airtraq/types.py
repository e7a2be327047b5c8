"""Shared domain vocabulary: gas species, readings, records, and validation.

All types here are immutable value objects, safe to share between
concurrent tasks. Construction enforces *structural* invariants (all four
species present, fields typed); *range* invariants (non-negative
concentrations, humidity in [0, 100], ...) are checked by
``validate_record``, which reports violations as data rather than raising,
so that faulty sensor readings can still be represented, logged, and
rejected with a reason downstream.
"""

import enum
import math
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

__all__ = [
    "GasSpecies",
    "SPECIES",
    "GasVector",
    "EnvConditions",
    "SensorRecord",
    "NodeSample",
    "GroundTruthCount",
    "validate_record",
    "minute_of",
    "NEGATIVE_CONCENTRATION",
    "HUMIDITY_RANGE",
    "TEMPERATURE_RANGE",
    "NEGATIVE_WIND",
    "NON_FINITE",
]


class GasSpecies(enum.Enum):
    """The four pollutant channels every node reports.

    CO2 is deliberately not a member: it is dominated by non-traffic
    sources and would dilute the estimate.
    """

    CO = "co"
    SO2 = "so2"
    HC = "hc"
    SOOT = "soot"


#: Canonical channel order used for feature vectors and weight arrays.
SPECIES = (GasSpecies.CO, GasSpecies.SO2, GasSpecies.HC, GasSpecies.SOOT)


@dataclass(frozen=True)
class GasVector:
    """Concentrations for all four species.

    Units: ppm for co/so2/hc, mg/m3 for soot. Mixed units are fine
    downstream because every channel carries its own weight. All four
    fields are required, so a vector with a missing species cannot be
    constructed.
    """

    co: float
    so2: float
    hc: float
    soot: float

    def __getitem__(self, species: GasSpecies) -> float:
        return getattr(self, species.value)

    def __iter__(self) -> Iterator[float]:
        return iter((self.co, self.so2, self.hc, self.soot))

    def as_array(self) -> np.ndarray:
        """Values in canonical ``SPECIES`` order."""
        return np.array([self.co, self.so2, self.hc, self.soot], dtype=float)

    def as_dict(self) -> dict:
        return {g: self[g] for g in SPECIES}

    def scaled(self, factor: float) -> "GasVector":
        """Every channel multiplied by ``factor``."""
        return GasVector(self.co * factor, self.so2 * factor,
                         self.hc * factor, self.soot * factor)

    @classmethod
    def from_array(cls, values) -> "GasVector":
        vals = [float(v) for v in values]
        if len(vals) != len(SPECIES):
            raise ValueError(f"expected {len(SPECIES)} channels, got {len(vals)}")
        return cls(*vals)

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> "GasVector":
        """Build from a mapping keyed by GasSpecies or by channel name.

        Raises ValueError if any species is missing.
        """
        vals = {}
        for key, value in mapping.items():
            species = key if isinstance(key, GasSpecies) else GasSpecies(str(key).lower())
            vals[species] = float(value)
        missing = [g.value for g in SPECIES if g not in vals]
        if missing:
            raise ValueError(f"missing species: {missing}")
        return cls(*(vals[g] for g in SPECIES))


@dataclass(frozen=True)
class EnvConditions:
    """Ambient conditions measured alongside the gases."""

    temperature: float        # degrees C
    relative_humidity: float  # percent, expected in [0, 100]
    wind_speed: float         # m/s, expected >= 0


@dataclass(frozen=True)
class SensorRecord:
    """One raw reading from one node.

    ``(node_id, seq)`` uniquely identifies a record; ``ts`` is integer
    Unix seconds and must be non-decreasing in ``seq`` for a node.
    """

    node_id: str
    seq: int
    ts: int
    gases: GasVector
    env: EnvConditions


@dataclass(frozen=True)
class NodeSample:
    """Per-minute aggregate of one node's QC'd records.

    ``minute`` is the Unix minute bucket floor(ts / 60). ``sample_count``
    is the number of records averaged; 0 marks a gap-imputed sample.
    """

    node_id: str
    minute: int
    gases: GasVector
    env: EnvConditions
    sample_count: int


@dataclass(frozen=True)
class GroundTruthCount:
    """Enumerated street traffic for one minute bucket, vehicles/min."""

    minute: int
    vehicles_per_min: float


def minute_of(ts: float) -> int:
    """Unix minute bucket for a timestamp in seconds."""
    return int(ts // 60)


# Violation codes returned by validate_record.
NEGATIVE_CONCENTRATION = "NEGATIVE_CONCENTRATION"
HUMIDITY_RANGE = "HUMIDITY_RANGE"
TEMPERATURE_RANGE = "TEMPERATURE_RANGE"
NEGATIVE_WIND = "NEGATIVE_WIND"
NON_FINITE = "NON_FINITE"

TEMPERATURE_BOUNDS = (-60.0, 60.0)


def validate_record(record: SensorRecord) -> list:
    """Check every field-level invariant; return the violated codes.

    An empty list means the record is valid. Violations are data, not
    faults: nothing is raised here.
    """
    violations = []
    numeric = list(record.gases) + [
        record.env.temperature,
        record.env.relative_humidity,
        record.env.wind_speed,
    ]
    if not all(math.isfinite(v) for v in numeric):
        violations.append(NON_FINITE)
    if any(v < 0 for v in record.gases if math.isfinite(v)):
        violations.append(NEGATIVE_CONCENTRATION)
    rh = record.env.relative_humidity
    if math.isfinite(rh) and not 0.0 <= rh <= 100.0:
        violations.append(HUMIDITY_RANGE)
    temp = record.env.temperature
    if math.isfinite(temp) and not TEMPERATURE_BOUNDS[0] <= temp <= TEMPERATURE_BOUNDS[1]:
        violations.append(TEMPERATURE_RANGE)
    wind = record.env.wind_speed
    if math.isfinite(wind) and wind < 0:
        violations.append(NEGATIVE_WIND)
    return violations
