"""Collection layer: concurrent node connections feed an append-only,
replayable record log with exactly-once persistence.

Dedup contract: per-node sequence numbers must strictly increase. A
repeat of the last accepted seq is acknowledged as a duplicate without
re-appending; anything older is rejected as stale. Replaying a full
stream therefore leaves the log byte-identical, and the registry can
always be rebuilt from the log alone (crash recovery tolerates a torn
final line).

Transport is a plain byte stream with newline framing; the server answers
one short ack line per record: ``A <seq>``, ``D <seq>``, or
``R <code>``.
"""

import asyncio
import os
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import StorageError, WireError
from .types import SensorRecord
from .wire import decode_record, encode_record

__all__ = [
    "Disposition",
    "NodeEntry",
    "GatewayStore",
    "serve_gateway",
    "replay_log",
]

ACCEPTED = "ACCEPTED"
DUPLICATE = "DUPLICATE"
REJECTED = "REJECTED"


@dataclass(frozen=True)
class Disposition:
    """Outcome of ingesting one line."""

    status: str
    reason: Optional[str] = None
    node_id: Optional[str] = None
    seq: Optional[int] = None

    def ack_line(self) -> bytes:
        if self.status == ACCEPTED:
            return f"A {self.seq}\n".encode()
        if self.status == DUPLICATE:
            return f"D {self.seq}\n".encode()
        return f"R {self.reason}\n".encode()


@dataclass
class NodeEntry:
    """Registry row: newest accepted state for one node."""

    last_seq: int
    last_ts: int
    record_count: int


class GatewayStore:
    """Append-only record log plus the in-memory registry and index.

    A single store instance owns the log file; all ingestion must be
    funneled through it (the asyncio server does this with one event
    loop). Appended lines are canonical re-encodings, so the log is
    always exactly the wire format regardless of sender formatting.
    """

    def __init__(self, log_path):
        self.log_path = str(log_path)
        self.registry: Dict[str, NodeEntry] = {}
        self._records: List[SensorRecord] = []
        self._recover()
        self._fp = open(self.log_path, "ab")

    def _recover(self) -> None:
        """Rebuild registry and index from the log; drop a torn last line."""
        if not os.path.exists(self.log_path):
            return
        keep = 0
        with open(self.log_path, "rb") as fp:
            for raw in fp:
                if not raw.endswith(b"\n"):
                    break  # torn write from a crash; ignore the tail
                record = decode_record(raw)
                self._track(record)
                keep += len(raw)
        if keep < os.path.getsize(self.log_path):
            with open(self.log_path, "ab") as fp:
                fp.truncate(keep)

    def _track(self, record: SensorRecord) -> None:
        entry = self.registry.get(record.node_id)
        if entry is None:
            self.registry[record.node_id] = NodeEntry(record.seq, record.ts, 1)
        else:
            entry.last_seq = record.seq
            entry.last_ts = record.ts
            entry.record_count += 1
        self._records.append(record)

    def ingest_record(self, record: SensorRecord) -> Disposition:
        entry = self.registry.get(record.node_id)
        if entry is not None:
            if record.seq == entry.last_seq:
                return Disposition(DUPLICATE, node_id=record.node_id, seq=record.seq)
            if record.seq < entry.last_seq:
                return Disposition(REJECTED, reason="STALE_SEQ",
                                   node_id=record.node_id, seq=record.seq)
        try:
            self._fp.write(encode_record(record))
        except OSError as exc:
            raise StorageError(f"append failed: {exc}") from exc
        self._track(record)
        return Disposition(ACCEPTED, node_id=record.node_id, seq=record.seq)

    def ingest_line(self, line: bytes) -> Disposition:
        try:
            record = decode_record(line)
        except WireError as exc:
            return Disposition(REJECTED, reason=exc.code)
        return self.ingest_record(record)

    def ingest(self, lines: Iterable[bytes]) -> List[Disposition]:
        """Ingest a stream of lines; one disposition per line, in order."""
        return [self.ingest_line(line) for line in lines]

    def query_window(self, t_start: int, t_end: int,
                     nodes: Optional[Sequence[str]] = None) -> List[SensorRecord]:
        """Accepted records with ts in [t_start, t_end), time-sorted.

        Sorting tie-breaks on (node_id, seq) so repeated calls return
        identical sequences. Queries see a snapshot of the log length at
        call time.
        """
        if t_start > t_end:
            raise ValueError("t_start must be <= t_end")
        wanted = None if nodes is None else set(nodes)
        snapshot = self._records[:len(self._records)]
        hits = [r for r in snapshot
                if t_start <= r.ts < t_end and (wanted is None or r.node_id in wanted)]
        hits.sort(key=lambda r: (r.ts, r.node_id, r.seq))
        return hits

    def all_records(self) -> List[SensorRecord]:
        return list(self._records)

    def flush(self) -> None:
        self._fp.flush()

    def close(self) -> None:
        if not self._fp.closed:
            self._fp.flush()
            self._fp.close()

    def __enter__(self) -> "GatewayStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


async def _handle_connection(store: GatewayStore, reader: asyncio.StreamReader,
                             writer: asyncio.StreamWriter) -> None:
    """One ingestion task per connection; acks are batched per read."""
    try:
        pending = 0
        while True:
            chunk = await reader.readline()
            if not chunk:
                break
            disposition = store.ingest_line(chunk)
            writer.write(disposition.ack_line())
            pending += 1
            if pending >= 256:
                await writer.drain()
                pending = 0
        await writer.drain()
    except (ConnectionResetError, StorageError):
        pass
    finally:
        try:
            writer.close()
            await writer.wait_closed()
        except (ConnectionResetError, BrokenPipeError):
            pass


async def serve_gateway(store: GatewayStore, host: str = "127.0.0.1",
                        port: int = 9099) -> asyncio.AbstractServer:
    """Start the TCP gateway; returns the running server object."""
    return await asyncio.start_server(
        lambda r, w: _handle_connection(store, r, w), host=host, port=port)


async def _replay_async(lines: List[bytes], host: str, port: int) -> Dict[str, int]:
    reader, writer = await asyncio.open_connection(host, port)
    counts = {ACCEPTED: 0, DUPLICATE: 0, REJECTED: 0}

    async def pump_acks():
        for _ in range(len(lines)):
            ack = await reader.readline()
            if not ack:
                break
            code = ack[:1]
            if code == b"A":
                counts[ACCEPTED] += 1
            elif code == b"D":
                counts[DUPLICATE] += 1
            else:
                counts[REJECTED] += 1

    ack_task = asyncio.ensure_future(pump_acks())
    for i, line in enumerate(lines):
        writer.write(line)
        if i % 1000 == 999:
            await writer.drain()
    await writer.drain()
    writer.write_eof()
    await ack_task
    writer.close()
    await writer.wait_closed()
    return counts


def replay_log(log_path, host: str, port: int) -> Dict[str, int]:
    """Stream a wire log to a running gateway; returns ack counts."""
    with open(log_path, "rb") as fp:
        lines = [ln for ln in fp if ln.endswith(b"\n")]
    return asyncio.run(_replay_async(lines, host, port))
