"""Data-cleaning stage: drop implausible records, fill small gaps,
estimate ambient baselines, and aggregate to per-minute samples.

QC is rule based by design: a plausible-range check per gas, a rolling-MAD
spike test, and a stuck-value run test. The rules are stand-ins for the
goal of removing irrelevant and faulty data; they are configuration, not
ground truth.
"""

from dataclasses import dataclass, field
from typing import Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from .errors import EmptySeriesError
from .types import (
    SPECIES,
    EnvConditions,
    GasSpecies,
    GasVector,
    NodeSample,
    SensorRecord,
    minute_of,
    validate_record,
)

__all__ = [
    "QcConfig",
    "BaselineVector",
    "DEFAULT_GAS_RANGES",
    "qc_filter",
    "impute_gaps",
    "baseline_estimate",
    "minute_aggregate",
]

#: Plausible urban ranges per gas; configuration defaults, not ground truth.
DEFAULT_GAS_RANGES = {
    GasSpecies.CO: (0.0, 100.0),   # ppm
    GasSpecies.SO2: (0.0, 10.0),   # ppm
    GasSpecies.HC: (0.0, 50.0),    # ppm
    GasSpecies.SOOT: (0.0, 10.0),  # mg/m3
}


class BaselineVector(GasVector):
    """Per-gas ambient floor in native units, subtracted before weighting.

    The floor captures non-traffic sources (heating, stoves, regional
    background) so that zero traffic maps to a zero estimate.
    """


@dataclass(frozen=True)
class QcConfig:
    """Knobs for the QC rules.

    ``stuck_run_len``: a gas channel byte-identical for strictly more than
    this many minutes marks the run as a stuck sensor.
    ``spike_factor``: deviation beyond this multiple of the rolling MAD
    flags a spike. ``spike_window`` is the (odd) rolling window width in
    samples; the spec of the statistic needs one, so it lives here.
    """

    gas_ranges: Mapping[GasSpecies, Tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_GAS_RANGES))
    stuck_run_len: int = 10
    max_gap: int = 3
    spike_factor: float = 8.0
    spike_window: int = 11

    def __post_init__(self):
        for gas, (lo, hi) in self.gas_ranges.items():
            if not lo < hi:
                raise ValueError(f"gas range for {gas.value} not well-ordered: ({lo}, {hi})")
        if self.stuck_run_len < 2:
            raise ValueError("stuck_run_len must be >= 2")
        if self.max_gap < 0:
            raise ValueError("max_gap must be >= 0")
        if self.spike_factor <= 0:
            raise ValueError("spike_factor must be > 0")
        if self.spike_window < 3 or self.spike_window % 2 == 0:
            raise ValueError("spike_window must be odd and >= 3")


def _rolling_median_mad(values: np.ndarray, window: int) -> Tuple[np.ndarray, np.ndarray]:
    """Centered rolling median and MAD, window truncated at the edges."""
    n = len(values)
    half = window // 2
    med = np.empty(n)
    mad = np.empty(n)
    if n >= window:
        view = np.lib.stride_tricks.sliding_window_view(values, window)
        core_med = np.median(view, axis=1)
        core_mad = np.median(np.abs(view - core_med[:, None]), axis=1)
        med[half:n - half] = core_med
        mad[half:n - half] = core_mad
        edges = list(range(half)) + list(range(n - half, n))
    else:
        edges = range(n)
    for i in edges:
        win = values[max(0, i - half):min(n, i + half + 1)]
        med[i] = np.median(win)
        mad[i] = np.median(np.abs(win - med[i]))
    return med, mad


def _stuck_indices(records: Sequence[SensorRecord], gas: GasSpecies,
                   run_len_minutes: int) -> dict:
    """Indices belonging to byte-identical runs spanning > run_len_minutes."""
    flagged = {}
    start = 0
    n = len(records)
    while start < n:
        value = records[start].gases[gas]
        end = start
        while end + 1 < n and records[end + 1].gases[gas] == value:
            end += 1
        if end > start:
            span = minute_of(records[end].ts) - minute_of(records[start].ts) + 1
            if span > run_len_minutes:
                for i in range(start, end + 1):
                    flagged.setdefault(i, f"STUCK_SENSOR:{gas.value}")
        start = end + 1
    return flagged


def _spike_indices(records: Sequence[SensorRecord], gas: GasSpecies,
                   factor: float, window: int, mad_floor: float) -> dict:
    """Indices whose deviation from the rolling median exceeds factor x MAD.

    ``mad_floor`` keeps the threshold meaningful where the MAD collapses
    (e.g. a quantized series sitting on the sensor floor).
    """
    values = np.array([r.gases[gas] for r in records], dtype=float)
    if len(values) < 3:
        return {}
    med, mad = _rolling_median_mad(values, window)
    threshold = factor * np.maximum(mad, mad_floor)
    hits = np.abs(values - med) > threshold
    return {int(i): f"SPIKE:{gas.value}" for i in np.nonzero(hits)[0]}


def qc_filter(records: Sequence[SensorRecord], cfg: QcConfig
              ) -> Tuple[List[SensorRecord], List[Tuple[SensorRecord, str]]]:
    """Split records into clean and rejected-with-reason.

    Expects input sorted by (node_id, seq). First pass drops records that
    fail field validation or fall outside the plausible per-gas ranges.
    Stuck-run and spike detection then iterate per node until no further
    record is flagged, which makes the filter idempotent by construction:
    running it again on ``clean`` rejects nothing. clean + rejected is an
    exact partition of the input.
    """
    clean: List[SensorRecord] = []
    rejected: List[Tuple[SensorRecord, str]] = []

    by_node: dict = {}
    for record in records:
        violations = validate_record(record)
        if violations:
            rejected.append((record, violations[0]))
            continue
        out_of_range = None
        for gas in SPECIES:
            lo, hi = cfg.gas_ranges.get(gas, DEFAULT_GAS_RANGES[gas])
            if not lo <= record.gases[gas] <= hi:
                out_of_range = f"RANGE:{gas.value}"
                break
        if out_of_range:
            rejected.append((record, out_of_range))
            continue
        by_node.setdefault(record.node_id, []).append(record)

    mad_floors = {
        gas: 1e-3 * (hi - lo)
        for gas, (lo, hi) in ((g, cfg.gas_ranges.get(g, DEFAULT_GAS_RANGES[g]))
                              for g in SPECIES)
    }
    for node_id in sorted(by_node):
        survivors = by_node[node_id]
        while survivors:
            flagged: dict = {}
            for gas in SPECIES:
                for idx, reason in _stuck_indices(survivors, gas, cfg.stuck_run_len).items():
                    flagged.setdefault(idx, reason)
                for idx, reason in _spike_indices(
                        survivors, gas, cfg.spike_factor, cfg.spike_window,
                        mad_floors[gas]).items():
                    flagged.setdefault(idx, reason)
            if not flagged:
                break
            keep = []
            for i, record in enumerate(survivors):
                if i in flagged:
                    rejected.append((record, flagged[i]))
                else:
                    keep.append(record)
            survivors = keep
        clean.extend(survivors)

    return clean, rejected


def _interp_sample(node_id: str, minute: int, before: NodeSample,
                   after: NodeSample, frac: float) -> NodeSample:
    lerp = lambda a, b: a + (b - a) * frac
    gases = GasVector(*(lerp(a, b) for a, b in zip(before.gases, after.gases)))
    env = EnvConditions(
        temperature=lerp(before.env.temperature, after.env.temperature),
        relative_humidity=lerp(before.env.relative_humidity, after.env.relative_humidity),
        wind_speed=lerp(before.env.wind_speed, after.env.wind_speed),
    )
    return NodeSample(node_id=node_id, minute=minute, gases=gases, env=env,
                      sample_count=0)


def impute_gaps(samples: Sequence[NodeSample], max_gap: int) -> List[NodeSample]:
    """Fill gaps of at most ``max_gap`` minutes by linear interpolation.

    Operates on one node's time-sorted minute series. Imputed samples are
    marked with sample_count == 0; gaps longer than ``max_gap`` stay
    missing (the minutes are simply absent from the result).
    """
    if not samples:
        return []
    node_ids = {s.node_id for s in samples}
    if len(node_ids) != 1:
        raise ValueError(f"impute_gaps expects a single node, got {sorted(node_ids)}")
    out: List[NodeSample] = [samples[0]]
    for prev, cur in zip(samples, samples[1:]):
        gap = cur.minute - prev.minute - 1
        if 1 <= gap <= max_gap:
            for k in range(1, gap + 1):
                frac = k / (gap + 1)
                out.append(_interp_sample(cur.node_id, prev.minute + k, prev, cur, frac))
        out.append(cur)
    return out


def baseline_estimate(samples: Sequence[NodeSample], window: int = 1440,
                      quantile: float = 0.05) -> BaselineVector:
    """Ambient floor per gas: median of the rolling lower quantile.

    ``window`` is the rolling extent in minutes (>= 60, default 24 h);
    ``quantile`` the lower quantile (default 0.05). The result always lies
    within [series min, series max] per channel. Raises EmptySeriesError
    on empty input.
    """
    if window < 60:
        raise ValueError("baseline window must be >= 60 minutes")
    if not 0.0 < quantile < 0.5:
        raise ValueError("quantile must be in (0, 0.5)")
    if not samples:
        raise EmptySeriesError("no samples to estimate a baseline from")

    floors = []
    for gas in SPECIES:
        values = np.array([s.gases[gas] for s in samples], dtype=float)
        width = min(window, len(values))
        view = np.lib.stride_tricks.sliding_window_view(values, width)
        rolling = np.quantile(view, quantile, axis=1)
        floors.append(float(np.median(rolling)))
    return BaselineVector(*floors)


def minute_aggregate(records: Iterable[SensorRecord]) -> List[NodeSample]:
    """Arithmetic-mean aggregation into (node, minute) buckets.

    Records within a bucket are summed in seq order, so the output is
    bit-identical under any permutation of the input. Callers should QC
    the records first.
    """
    buckets: dict = {}
    for record in records:
        buckets.setdefault((record.node_id, minute_of(record.ts)), []).append(record)

    samples = []
    for (node_id, minute), group in sorted(buckets.items()):
        group.sort(key=lambda r: r.seq)
        n = len(group)
        gas_mean = GasVector(*(sum(r.gases[g] for r in group) / n for g in SPECIES))
        env_mean = EnvConditions(
            temperature=sum(r.env.temperature for r in group) / n,
            relative_humidity=sum(r.env.relative_humidity for r in group) / n,
            wind_speed=sum(r.env.wind_speed for r in group) / n,
        )
        samples.append(NodeSample(node_id=node_id, minute=minute, gases=gas_mean,
                                  env=env_mean, sample_count=n))
    return samples
