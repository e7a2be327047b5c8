import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from airtraq.errors import (
    EmptyInputError,
    InsufficientNodesError,
    NonPositiveCapacityError,
)
from airtraq.estimator import (
    EnvCorrectionParams,
    TrafficEstimate,
    WeightVector,
    array_fuse,
    co_temperature_factor,
    congestion_index,
    gas_features,
    node_estimate,
    read_estimates_csv,
    wind_dilution_correct,
    write_estimates_csv,
)
from airtraq.preprocess import BaselineVector
from airtraq.types import EnvConditions, GasSpecies, GasVector, NodeSample

P = EnvCorrectionParams()
ZERO_B = BaselineVector(0.0, 0.0, 0.0, 0.0)


def make_sample(co=1.0, so2=0.0, hc=0.0, soot=0.0, temp=25.0, rh=50.0, wind=0.0):
    return NodeSample(node_id="n1", minute=100,
                      gases=GasVector(co, so2, hc, soot),
                      env=EnvConditions(temp, rh, wind), sample_count=1)


class TestCoTemperatureFactor:
    def test_warm_upper_clamp(self):
        assert co_temperature_factor(25.0, P) == 1.0

    def test_cold_lower_clamp(self):
        assert co_temperature_factor(-10.0, P) == pytest.approx(0.3)

    def test_linear_midpoint(self):
        assert co_temperature_factor(5.0, P) == pytest.approx(0.5)

    def test_monotone_bounded_continuous_on_sweep(self):
        temps = np.linspace(-40.0, 50.0, 1000)
        values = np.array([co_temperature_factor(t, P) for t in temps])
        assert np.all(np.diff(values) >= 0)
        assert np.all((values >= P.co_floor) & (values <= 1.0))
        assert np.max(np.abs(np.diff(values))) < 0.01  # no jumps on a fine grid

    def test_param_validation(self):
        with pytest.raises(ValueError):
            EnvCorrectionParams(co_theta_lo=20.0, co_theta_hi=10.0)
        with pytest.raises(ValueError):
            EnvCorrectionParams(co_floor=0.0)
        with pytest.raises(ValueError):
            EnvCorrectionParams(wind_kappa=-0.1)


class TestWindDilution:
    def test_zero_wind_identity(self):
        g = GasVector(1.0, 0.2, 0.3, 0.4)
        assert wind_dilution_correct(g, 0.0, P) == g

    def test_factor_applied_to_all_channels(self):
        g = GasVector(1.0, 2.0, 3.0, 4.0)
        out = wind_dilution_correct(g, 2.0, P)  # kappa 0.15 -> x1.3
        assert list(out) == pytest.approx([1.3, 2.6, 3.9, 5.2])

    def test_negative_wind_rejected(self):
        with pytest.raises(ValueError):
            wind_dilution_correct(GasVector(1, 1, 1, 1), -1.0, P)


class TestNodeEstimate:
    def test_zero_at_baseline(self):
        s = make_sample(co=0.4, so2=0.01, hc=0.05, soot=0.02)
        b = BaselineVector(0.4, 0.01, 0.05, 0.02)
        w = WeightVector(2.0, 3.0, 1.0, 5.0)
        assert node_estimate(s, w, b, P) == 0.0

    def test_single_active_gas_weighted_sum(self):
        # one gas with weight 2 and excess 3, all corrections 1
        s = make_sample(co=3.0, temp=25.0, wind=0.0)
        w = WeightVector(2.0, 0.0, 0.0, 0.0)
        assert node_estimate(s, w, ZERO_B, P) == pytest.approx(6.0)

    def test_linearity_with_zero_baseline(self):
        w = WeightVector(1.5, 2.0, 0.7, 3.0)
        env = dict(temp=25.0, rh=50.0, wind=1.2)
        c1 = make_sample(co=1.0, so2=0.1, hc=0.4, soot=0.2, **env)
        c2 = make_sample(co=0.3, so2=0.5, hc=0.1, soot=0.6, **env)
        alpha, beta = 2.0, 0.5
        combo = make_sample(
            co=alpha * 1.0 + beta * 0.3, so2=alpha * 0.1 + beta * 0.5,
            hc=alpha * 0.4 + beta * 0.1, soot=alpha * 0.2 + beta * 0.6, **env)
        lhs = node_estimate(combo, w, ZERO_B, P)
        rhs = (alpha * node_estimate(c1, w, ZERO_B, P)
               + beta * node_estimate(c2, w, ZERO_B, P))
        assert lhs == pytest.approx(rhs, rel=1e-12)

    @given(bump=st.floats(min_value=1e-6, max_value=10.0),
           gas=st.sampled_from(list(GasSpecies)))
    def test_monotone_in_each_gas_above_baseline(self, bump, gas):
        w = WeightVector(1.5, 2.0, 0.7, 3.0)
        base_kwargs = dict(co=1.0, so2=0.5, hc=0.4, soot=0.2)
        sral = make_sample(**base_kwargs)
        bigger = dict(base_kwargs)
        bigger[gas.value] += bump
        s_hi = make_sample(**bigger)
        assert node_estimate(s_hi, w, ZERO_B, P) >= node_estimate(s_ral, w, ZERO_B, P)

    def test_cold_co_contribution_strictly_smaller(self):
        gases = dict(co=2.0, so2=0.0, hc=0.0, soot=0.0)
        w = WeightVector(2.0, 1.0, 1.0, 1.0)
        warm = node_estimate(make_sample(temp=25.0, **gases), w, ZERO_B, P)
        cold = node_estimate(make_sample(temp=0.0, **gases), w, ZERO_B, P)
        assert cold < warm

    def test_weight_vector_rejects_negative_or_non_finite(self):
        with pytest.raises(ValueError):
            WeightVector(-0.1, 0.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            WeightVector(float("nan"), 0.0, 0.0, 0.0)


class TestArrayFuse:
    def test_mean_of_two(self):
        assert array_fuse({"a": 4.0, "b": 6.0}) == pytest.approx(5.0)

    def test_four_identical_estimates_fuse_to_that_value(self):
        assert array_fuse({f"n{i}": 7.25 for i in range(4)}) == pytest.approx(7.25)

    def test_empty_map_raises(self):
        with pytest.raises(InsufficientNodesError):
            array_fuse({}, min_nodes=1)

    def test_min_nodes_enforced(self):
        with pytest.raises(InsufficientNodesError):
            array_fuse({"a": 1.0}, min_nodes=2)

    def test_permutation_invariant(self):
        values = {"a": 1.1, "b": 2.7, "c": 0.3, "d": 9.9}
        reordered = dict(reversed(list(values.items())))
        assert array_fuse(values) == array_fuse(reordered)

    def test_fusion_variance_reduction(self):
        # mean of 4 iid noise terms should show ~sigma^2/4 variance
        rng = np.random.default_rng(42)
        sigma = 1.7
        noise = rng.normal(0.0, sigma, size=(10_000, 4))
        fused = np.array([array_fuse({f"n{j}": 5.0 + row[j] for j in range(4)})
                          for row in noise])
        assert np.var(fused) <= 0.35 * sigma ** 2


class TestCongestionIndex:
    def test_zero(self):
        assert congestion_index(0.0, 40.0) == 0.0

    def test_at_capacity(self):
        assert congestion_index(40.0, 40.0) == 1.0

    def test_clamped_above_capacity(self):
        assert congestion_index(80.0, 40.0) == 1.0

    def test_nonpositive_capacity_rejected(self):
        with pytest.raises(NonPositiveCapacityError):
            congestion_index(1.0, 0.0)
        with pytest.raises(NonPositiveCapacityError):
            congestion_index(1.0, -3.0)


class TestEstimatesCsv:
    def test_roundtrip(self):
        estimates = [
            TrafficEstimate(minute=100 + i, vehicles_per_min=1.5 * i,
                            congestion_index=min(1.0, 0.1 * i),
                            node_estimates={"n1": 1.4 * i, "n2": 1.6 * i},
                            n_nodes_used=2,
                            contributions={g: 0.25 * i for g in GasSpecies})
            for i in range(5)
        ]
        buf = io.StringIO()
        write_estimates_csv(estimates, buf)
        back = read_estimates_csv(io.StringIO(buf.getvalue()))
        assert back == estimates

    def test_missing_node_columns_left_empty(self):
        estimates = [
            TrafficEstimate(minute=1, vehicles_per_min=2.0, congestion_index=0.05,
                            node_estimates={"n1": 2.0}, n_nodes_used=1),
            TrafficEstimate(minute=2, vehicles_per_min=3.0, congestion_index=0.075,
                            node_estimates={"n1": 2.5, "n2": 3.5}, n_nodes_used=2),
        ]
        buf = io.StringIO()
        write_estimates_csv(estimates, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0].startswith("minute,vehicles_per_min,congestion_index,n_nodes_used,n1,n2")
        back = read_estimates_csv(io.StringIO(buf.getvalue()))
        assert back[0].node_estimates == {"n1": 2.0}

    def test_empty_input_raises(self):
        with pytest.raises(EmptyInputError):
            read_estimates_csv(io.StringIO(""))
        with pytest.raises(EmptyInputError):
            read_estimates_csv(io.StringIO(
                "minute,vehicles_per_min,congestion_index,n_nodes_used\n"))
