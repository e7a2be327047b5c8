"""Newline-framed, version-tagged wire format for sensor records.

One record per line, UTF-8 JSON with fixed key order:

    {"v":1,"node":"n3","seq":17,"ts":1714636800,"gas":{"co":1.82,"so2":0.012,
     "hc":0.35,"soot":0.06},"temp":21.5,"rh":40.0,"wind":1.2}

Encoding is canonical (same record, same bytes) and floats carry at most
6 significant digits, which is also the resolution sensors quantize to,
so decode(encode(r)) == r for every record the system produces. The
append-only gateway log uses exactly this format, so simulator output
doubles as a replay corpus.
"""

import json
from typing import Iterable, Iterator, List

from .errors import WireError
from .types import EnvConditions, GasVector, SensorRecord, validate_record

__all__ = [
    "PROTOCOL_VERSION",
    "quantize_sig",
    "encode_record",
    "decode_record",
    "read_log",
    "iter_log_lines",
    "write_log",
]

PROTOCOL_VERSION = 1

#: Significant digits carried on the wire for every float field.
WIRE_SIG_DIGITS = 6

_GAS_KEYS = ("co", "so2", "hc", "soot")
_TOP_KEYS = ("v", "node", "seq", "ts", "gas", "temp", "rh", "wind")


def quantize_sig(value: float, digits: int = WIRE_SIG_DIGITS) -> float:
    """Round to ``digits`` significant decimal digits (wire resolution)."""
    return float(f"{value:.{digits}g}")


def encode_record(record: SensorRecord) -> bytes:
    """One newline-terminated canonical line for ``record``.

    Concentrations and env fields are emitted with at most 6 significant
    digits; records whose floats already sit on that grid round-trip
    bit-exactly.
    """
    payload = {
        "v": PROTOCOL_VERSION,
        "node": record.node_id,
        "seq": record.seq,
        "ts": record.ts,
        "gas": {k: quantize_sig(getattr(record.gases, k)) for k in _GAS_KEYS},
        "temp": quantize_sig(record.env.temperature),
        "rh": quantize_sig(record.env.relative_humidity),
        "wind": quantize_sig(record.env.wind_speed),
    }
    return json.dumps(payload, separators=(",", ":")).encode("utf-8") + b"\n"


def _require_number(obj: dict, key: str, where: str) -> float:
    value = obj.get(key)
    if type(value) not in (int, float):
        raise WireError("MALFORMED", f"{where}.{key} missing or not a number")
    return float(value)


def decode_record(line: bytes) -> SensorRecord:
    """Parse and validate one wire line.

    Raises WireError with code MALFORMED for syntax/schema problems,
    UNSUPPORTED_VERSION for a version other than 1, INVALID_FIELD when
    the decoded record fails validation (violation codes attached).
    """
    try:
        obj = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WireError("MALFORMED", f"bad JSON line: {exc}") from None
    if not isinstance(obj, dict):
        raise WireError("MALFORMED", "line is not an object")
    unknown = set(obj) - set(_TOP_KEYS)
    if unknown:
        raise WireError("MALFORMED", f"unknown keys: {sorted(unknown)}")

    version = obj.get("v")
    if type(version) is not int:
        raise WireError("MALFORMED", "v missing or not an integer")
    if version != PROTOCOL_VERSION:
        raise WireError("UNSUPPORTED_VERSION", f"protocol version {version}")

    node = obj.get("node")
    if not isinstance(node, str) or not node:
        raise WireError("MALFORMED", "node missing or not a string")
    seq = obj.get("seq")
    ts = obj.get("ts")
    if type(seq) is not int or seq < 0:
        raise WireError("MALFORMED", "seq missing or not a non-negative integer")
    if type(ts) is not int:
        raise WireError("MALFORMED", "ts missing or not an integer")

    gas = obj.get("gas")
    if not isinstance(gas, dict) or set(gas) != set(_GAS_KEYS):
        raise WireError("MALFORMED", "gas must carry exactly co, so2, hc, soot")

    record = SensorRecord(
        node_id=node,
        seq=seq,
        ts=ts,
        gases=GasVector(*(_require_number(gas, k, "gas") for k in _GAS_KEYS)),
        env=EnvConditions(
            temperature=_require_number(obj, "temp", "record"),
            relative_humidity=_require_number(obj, "rh", "record"),
            wind_speed=_require_number(obj, "wind", "record"),
        ),
    )
    violations = validate_record(record)
    if violations:
        raise WireError("INVALID_FIELD", f"violations: {violations}",
                        violations=violations)
    return record


def iter_log_lines(path) -> Iterator[bytes]:
    """Complete lines of a wire log; a trailing partial line (torn write)
    is ignored."""
    with open(path, "rb") as fp:
        for raw in fp:
            if raw.endswith(b"\n"):
                yield raw


def read_log(path) -> List[SensorRecord]:
    """Decode every complete line of a log file."""
    return [decode_record(line) for line in iter_log_lines(path)]


def write_log(path, records: Iterable[SensorRecord]) -> int:
    """Encode records to ``path``; returns the number written."""
    count = 0
    with open(path, "wb") as fp:
        for record in records:
            fp.write(encode_record(record))
            count += 1
    return count
