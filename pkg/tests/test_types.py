import math

import pytest
from hypothesis import given, strategies as st

from airtraq.types import (
    HUMIDITY_RANGE,
    NEGATIVE_CONCENTRATION,
    NEGATIVE_WIND,
    NON_FINITE,
    SPECIES,
    TEMPERATURE_RANGE,
    EnvConditions,
    GasSpecies,
    GasVector,
    SensorRecord,
    minute_of,
    validate_record,
)


def make_record(co=1.2, so2=0.01, hc=0.3, soot=0.05, temp=20.0, rh=40.0,
                wind=1.0, node="n1", seq=1, ts=1714608059):
    return SensorRecord(node_id=node, seq=seq, ts=ts,
                        gases=GasVector(co=co, so2=so2, hc=hc, soot=soot),
                        env=EnvConditions(temp, rh, wind))


def test_valid_record_has_no_violations():
    assert validate_record(make_record(co=1.2, rh=40.0)) == []


def test_negative_concentration_flagged():
    assert validate_record(make_record(so2=-0.1)) == [NEGATIVE_CONCENTRATION]


def test_humidity_out_of_range_flagged():
    assert validate_record(make_record(rh=130.0)) == [HUMIDITY_RANGE]


def test_temperature_and_wind_violations():
    assert TEMPERATURE_RANGE in validate_record(make_record(temp=95.0))
    assert NEGATIVE_WIND in validate_record(make_record(wind=-0.5))


def test_non_finite_flagged():
    assert NON_FINITE in validate_record(make_record(hc=float("nan")))
    assert NON_FINITE in validate_record(make_record(temp=float("inf")))


def test_multiple_violations_all_reported():
    codes = validate_record(make_record(so2=-1.0, rh=200.0, wind=-1.0))
    assert set(codes) == {NEGATIVE_CONCENTRATION, HUMIDITY_RANGE, NEGATIVE_WIND}


def test_gas_vector_requires_all_species():
    with pytest.raises(TypeError):
        GasVector(co=1.0, so2=0.1, hc=0.2)  # soot missing
    with pytest.raises(ValueError):
        GasVector.from_mapping({"co": 1.0, "so2": 0.1, "hc": 0.2})


def test_gas_vector_mapping_and_array_roundtrip():
    g = GasVector.from_mapping({"co": 1.0, "so2": 0.1, "hc": 0.2, "soot": 0.3})
    assert g[GasSpecies.CO] == 1.0
    assert list(g.as_array()) == [1.0, 0.1, 0.2, 0.3]
    assert GasVector.from_array(g.as_array()) == g


def test_species_is_a_closed_four_member_set():
    assert len(GasSpecies) == 4
    assert {g.value for g in SPECIES} == {"co", "so2", "hc", "soot"}
    with pytest.raises(ValueError):
        GasSpecies("co2")


def test_minute_bucketing():
    assert minute_of(1714608059) == 1714608059 // 60
    assert minute_of(119) == 1
    assert minute_of(120) == 2


finite_conc = st.floats(min_value=0.0, max_value=100.0, allow_nan=False)


@given(co=finite_conc, so2=finite_conc, hc=finite_conc, soot=finite_conc,
       temp=st.floats(min_value=-60, max_value=60, allow_nan=False),
       rh=st.floats(min_value=0, max_value=100, allow_nan=False),
       wind=st.floats(min_value=0, max_value=60, allow_nan=False))
def test_accepted_records_satisfy_every_field_invariant(co, so2, hc, soot, temp, rh, wind):
    record = make_record(co=co, so2=so2, hc=hc, soot=soot, temp=temp, rh=rh, wind=wind)
    assert validate_record(record) == []
    assert all(v >= 0 and math.isfinite(v) for v in record.gases)
    assert 0 <= record.env.relative_humidity <= 100
    assert record.env.wind_speed >= 0
