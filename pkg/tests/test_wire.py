import pytest
from hypothesis import given, settings, strategies as st

from airtraq.errors import WireError
from airtraq.types import EnvConditions, GasVector, SensorRecord
from airtraq.wire import decode_record, encode_record, quantize_sig

CANONICAL = (b'{"v":1,"node":"n3","seq":17,"ts":1714636800,'
             b'"gas":{"co":1.82,"so2":0.012,"hc":0.35,"soot":0.06},'
             b'"temp":21.5,"rh":40.0,"wind":1.2}\n')


def canonical_record():
    return SensorRecord(node_id="n3", seq=17, ts=1714636800,
                        gases=GasVector(co=1.82, so2=0.012, hc=0.35, soot=0.06),
                        env=EnvConditions(21.5, 40.0, 1.2))


def test_encode_matches_format_defining_example():
    assert encode_record(canonical_record()) == CANONICAL


def test_decode_of_canonical_line():
    assert decode_record(CANONICAL) == canonical_record()


def test_roundtrip():
    r = canonical_record()
    assert decode_record(encode_record(r)) == r


def test_encode_deterministic():
    r = canonical_record()
    assert encode_record(r) == encode_record(r)


def test_quantize_sig_is_idempotent_and_6_digits():
    assert quantize_sig(1.0 / 3.0) == 0.333333
    assert quantize_sig(quantize_sig(1.0 / 3.0)) == quantize_sig(1.0 / 3.0)
    assert quantize_sig(123456.789) == 123457.0
    assert quantize_sig(0.0) == 0.0


def test_truncated_line_malformed():
    with pytest.raises(WireError) as err:
        decode_record(CANONICAL[:40])
    assert err.value.code == "MALFORMED"


def test_unsupported_version():
    line = CANONICAL.replace(b'"v":1', b'"v":2')
    with pytest.raises(WireError) as err:
        decode_record(line)
    assert err.value.code == "UNSUPPORTED_VERSION"


def test_negative_concentration_invalid_field():
    line = CANONICAL.replace(b'"so2":0.012', b'"so2":-0.012')
    with pytest.raises(WireError) as err:
        decode_record(line)
    assert err.value.code == "INVALID_FIELD"
    assert "NEGATIVE_CONCENTRATION" in err.value.violations


def test_missing_gas_key_malformed():
    line = CANONICAL.replace(b'"soot":0.06', b'"smoke":0.06')
    with pytest.raises(WireError) as err:
        decode_record(line)
    assert err.value.code == "MALFORMED"


def test_unknown_top_level_key_malformed():
    line = CANONICAL[:-2] + b',"extra":1}\n'
    with pytest.raises(WireError) as err:
        decode_record(line)
    assert err.value.code == "MALFORMED"


def test_non_integer_seq_malformed():
    for repl in (b'"seq":17.5', b'"seq":"17"', b'"seq":true'):
        line = CANONICAL.replace(b'"seq":17', repl)
        with pytest.raises(WireError) as err:
            decode_record(line)
        assert err.value.code == "MALFORMED"


wire_float = st.floats(min_value=0.0, max_value=9999.0, allow_nan=False).map(quantize_sig)


@settings(max_examples=300, deadline=None)
@given(node=st.text(alphabet=st.characters(min_codepoint=33, max_codepoint=126),
                    min_size=1, max_size=12),
       seq=st.integers(min_value=0, max_value=2**40),
       ts=st.integers(min_value=0, max_value=2**40),
       co=wire_float, so2=wire_float, hc=wire_float, soot=wire_float,
       temp=st.floats(min_value=-60, max_value=60, allow_nan=False).map(quantize_sig),
       rh=st.floats(min_value=0, max_value=100, allow_nan=False).map(quantize_sig),
       wind=st.floats(min_value=0, max_value=60, allow_nan=False).map(quantize_sig))
def test_roundtrip_property(node, seq, ts, co, so2, hc, soot, temp, rh, wind):
    record = SensorRecord(node_id=node, seq=seq, ts=ts,
                          gases=GasVector(co, so2, hc, soot),
                          env=EnvConditions(temp, rh, wind))
    assert decode_record(encode_record(record)) == record
