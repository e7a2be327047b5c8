import dataclasses

import numpy as np
import pytest

from airtraq.errors import EmptySeriesError
from airtraq.preprocess import (
    QcConfig,
    baseline_estimate,
    impute_gaps,
    minute_aggregate,
    qc_filter,
)
from airtraq.types import EnvConditions, GasSpecies, GasVector, NodeSample, SensorRecord

ENV = EnvConditions(20.0, 40.0, 1.0)
T0 = 1714608000


def record(node, seq, minute, co=1.0, so2=0.01, hc=0.3, soot=0.05):
    return SensorRecord(node_id=node, seq=seq, ts=T0 + minute * 60 + 30,
                        gases=GasVector(co, so2, hc, soot), env=ENV)


def ramp_records(node="n1", n=60, start_co=1.0, step=0.01):
    """Smooth in-range series; the slope keeps the stuck test quiet."""
    return [record(node, i + 1, i, co=start_co + step * i, so2=0.01 + 1e-4 * i,
                   hc=0.3 + 1e-3 * i, soot=0.05 + 1e-4 * i) for i in range(n)]


def sample(node, minute, co=1.0, so2=0.01, hc=0.3, soot=0.05, count=1):
    return NodeSample(node_id=node, minute=minute,
                      gases=GasVector(co, so2, hc, soot), env=ENV,
                      sample_count=count)


class TestQcFilter:
    def test_smooth_series_all_pass(self):
        records = ramp_records()
        clean, rejected = qc_filter(records, QcConfig())
        assert clean == records
        assert rejected == []

    def test_out_of_range_and_invalid_records_rejected(self):
        records = ramp_records(n=30)
        bad_range = dataclasses.replace(
            records[10], gases=dataclasses.replace(records[10].gases, so2=50.0))
        bad_neg = dataclasses.replace(
            records[11], gases=dataclasses.replace(records[11].gases, co=-0.2))
        records[10] = bad_range
        records[11] = bad_neg
        clean, rejected = qc_filter(records, QcConfig())
        reasons = {id(rec): reason for rec, reason in rejected}
        assert reasons[id(bad_range)] == "RANGE:so2"
        assert reasons[id(bad_neg)] == "NEGATIVE_CONCENTRATION"
        assert len(clean) == 28

    def test_stuck_run_flagged(self):
        # CO pinned at exactly 1.000 for 15 minutes amid a ramp
        records = ramp_records(n=60)
        for i in range(20, 35):
            records[i] = dataclasses.replace(
                records[i], gases=dataclasses.replace(records[i].gases, co=1.0))
        clean, rejected = qc_filter(records, QcConfig(stuck_run_len=10))
        stuck = [rec for rec, reason in rejected if reason == "STUCK_SENSOR:co"]
        assert {r.seq for r in stuck} == set(range(21, 36))
        assert len(clean) == 45

    def test_run_not_longer_than_limit_passes(self):
        records = ramp_records(n=40)
        for i in range(10, 20):  # exactly 10 minutes: not "longer than"
            records[i] = dataclasses.replace(
                records[i], gases=dataclasses.replace(records[i].gases, co=1.0))
        _, rejected = qc_filter(records, QcConfig(stuck_run_len=10))
        assert rejected == []

    def test_single_spike_at_50x_median_flagged(self):
        records = ramp_records(n=60)
        spiked = dataclasses.replace(
            records[30], gases=dataclasses.replace(records[30].gases, co=50.0))
        records[30] = spiked
        clean, rejected = qc_filter(records, QcConfig())
        assert [(rec.seq, reason) for rec, reason in rejected] == [(31, "SPIKE:co")]
        assert len(clean) == 59

    def test_partition_no_loss_no_duplication(self, one_day):
        _, records, _ = one_day
        ordered = sorted(records, key=lambda r: (r.node_id, r.seq))
        clean, rejected = qc_filter(ordered, QcConfig())
        assert len(clean) + len(rejected) == len(ordered)
        seen = {(r.node_id, r.seq) for r in clean}
        seen |= {(r.node_id, r.seq) for r, _ in rejected}
        assert len(seen) == len(ordered)

    def test_idempotent_on_clean_output(self, one_day):
        _, records, _ = one_day
        ordered = sorted(records, key=lambda r: (r.node_id, r.seq))
        clean, _ = qc_filter(ordered, QcConfig())
        clean_again, rejected_again = qc_filter(clean, QcConfig())
        assert rejected_again == []
        assert clean_again == clean

    def test_config_validation(self):
        with pytest.raises(ValueError):
            QcConfig(stuck_run_len=1)
        with pytest.raises(ValueError):
            QcConfig(max_gap=-1)
        with pytest.raises(ValueError):
            QcConfig(spike_window=4)
        with pytest.raises(ValueError):
            QcConfig(gas_ranges={GasSpecies.CO: (5.0, 1.0)})


class TestImputeGaps:
    def test_two_minute_gap_linearly_interpolated(self):
        series = [sample("n1", 100, co=1.0), sample("n1", 103, co=3.0)]
        out = impute_gaps(series, max_gap=3)
        assert [s.minute for s in out] == [100, 101, 102, 103]
        assert out[1].gases.co == pytest.approx(1.0 + 2.0 / 3.0, abs=1e-9)
        assert out[2].gases.co == pytest.approx(1.0 + 4.0 / 3.0, abs=1e-9)
        assert out[1].sample_count == 0 and out[2].sample_count == 0

    def test_long_gap_left_missing(self):
        series = [sample("n1", 100), sample("n1", 111)]
        out = impute_gaps(series, max_gap=3)
        assert [s.minute for s in out] == [100, 111]

    def test_no_gaps_identity(self):
        series = [sample("n1", 100 + i) for i in range(5)]
        assert impute_gaps(series, max_gap=3) == series

    def test_env_channels_interpolated_too(self):
        a = dataclasses.replace(sample("n1", 10), env=EnvConditions(10.0, 30.0, 0.0))
        b = dataclasses.replace(sample("n1", 12), env=EnvConditions(20.0, 50.0, 2.0))
        out = impute_gaps([a, b], max_gap=3)
        assert out[1].env == EnvConditions(15.0, 40.0, 1.0)

    def test_mixed_nodes_rejected(self):
        with pytest.raises(ValueError):
            impute_gaps([sample("n1", 1), sample("n2", 2)], max_gap=3)


class TestBaselineEstimate:
    def test_constant_series_returns_the_constant(self):
        series = [sample("n1", i, co=0.7, so2=0.02, hc=0.1, soot=0.03)
                  for i in range(200)]
        b = baseline_estimate(series, window=60, quantile=0.05)
        assert b.co == pytest.approx(0.7)
        assert b.soot == pytest.approx(0.03)

    def test_known_floor_recovered_under_daytime_bumps(self):
        # floor 0.1 plus a daytime bump; the rolling low quantile should
        # land on the floor to within 0.01
        minutes = np.arange(2880)
        bump = np.where((minutes % 1440 > 480) & (minutes % 1440 < 1200),
                        2.0 * np.sin((minutes % 1440 - 480) * np.pi / 720.0), 0.0)
        rng = np.random.default_rng(3)
        values = 0.1 + bump + rng.normal(0, 0.002, size=len(minutes))
        series = [sample("n1", int(m), co=max(0.0, v)) for m, v in zip(minutes, values)]
        b = baseline_estimate(series, window=1440, quantile=0.05)
        assert b.co == pytest.approx(0.1, abs=0.01)

    def test_empty_series_raises(self):
        with pytest.raises(EmptySeriesError):
            baseline_estimate([], window=1440, quantile=0.05)

    def test_precondition_validation(self):
        series = [sample("n1", i) for i in range(10)]
        with pytest.raises(ValueError):
            baseline_estimate(series, window=30)
        with pytest.raises(ValueError):
            baseline_estimate(series, quantile=0.7)

    def test_baseline_bounded_by_series_extremes(self):
        rng = np.random.default_rng(11)
        for trial in range(5):
            values = rng.uniform(0.1, 5.0, size=300)
            series = [sample("n1", i, co=v) for i, v in enumerate(values)]
            b = baseline_estimate(series, window=120, quantile=0.1)
            assert values.min() <= b.co <= values.max()


class TestMinuteAggregate:
    def test_mean_and_count(self):
        records = [record("n1", 1, 5, co=1.0), record("n1", 2, 5, co=2.0),
                   record("n1", 3, 5, co=3.0)]
        samples = minute_aggregate(records)
        assert len(samples) == 1
        assert samples[0].gases.co == pytest.approx(2.0)
        assert samples[0].sample_count == 3

    def test_records_spanning_two_minutes(self):
        records = [record("n1", 1, 5), record("n1", 2, 6)]
        samples = minute_aggregate(records)
        assert [s.minute for s in samples] == [record("n1", 1, 5).ts // 60,
                                               record("n1", 2, 6).ts // 60]

    def test_permutation_invariance_is_exact(self, one_day):
        _, records, _ = one_day
        subset = records[:400]
        forward = minute_aggregate(subset)
        backward = minute_aggregate(list(reversed(subset)))
        assert forward == backward
