"""Append-only event log with CRC-checked records and checksummed snapshots.

Log format: one record per line, ``<length> <crc32> <json>`` where length is
the byte count of the JSON payload and the CRC covers those bytes.  Records
carry strictly increasing sequence numbers; replaying them through an Engine
reconstructs state deterministically.  Snapshots store the engine state plus
the high-water sequence number, so restore = snapshot + tail replay.
"""

from __future__ import annotations

import hashlib
import json
import os
import zlib
from dataclasses import dataclass
from pathlib import Path

from .engine import Engine, EngineConfig

SNAPSHOT_FORMAT = "tourrec-snapshot"
SNAPSHOT_VERSION = 1


class EventLogError(ValueError):
    pass


@dataclass
class EventLogRecord:
    seq: int
    timestamp: float
    kind: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps(
            {"seq": self.seq, "ts": self.timestamp, "kind": self.kind,
             "payload": self.payload},
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "EventLogRecord":
        obj = json.loads(text)
        return cls(seq=obj["seq"], timestamp=obj["ts"], kind=obj["kind"],
                   payload=obj["payload"])


class EventLog:
    """Single-writer append-only log; every append is flushed (and fsynced
    unless disabled) before the call returns."""

    def __init__(self, path, fsync: bool = True):
        self.path = Path(path)
        self.fsync = fsync
        self.next_seq = 1
        if self.path.exists():
            records = list(self.read())
            if records:
                self.next_seq = records[-1].seq + 1
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.touch()

    def append(self, kind: str, payload: dict, timestamp: float = 0.0) -> EventLogRecord:
        record = EventLogRecord(self.next_seq, timestamp, kind, payload)
        data = record.to_json().encode("utf-8")
        line = f"{len(data)} {zlib.crc32(data):08x} ".encode() + data + b"\n"
        with open(self.path, "ab") as fh:
            fh.write(line)
            fh.flush()
            if self.fsync:
                os.fsync(fh.fileno())
        self.next_seq += 1
        return record

    def read(self, verify: bool = True):
        """Yield records in order, checking lengths, CRCs and sequence."""
        last_seq = 0
        with open(self.path, "rb") as fh:
            for lineno, raw in enumerate(fh, start=1):
                raw = raw.rstrip(b"\n")
                if not raw:
                    continue
                try:
                    length_s, crc_s, data = raw.split(b" ", 2)
                    length, crc = int(length_s), int(crc_s, 16)
                except ValueError as exc:
                    raise EventLogError(f"line {lineno}: malformed frame") from exc
                if verify:
                    if len(data) != length:
                        raise EventLogError(
                            f"line {lineno}: length {len(data)} != declared {length}"
                        )
                    if zlib.crc32(data) != crc:
                        raise EventLogError(f"line {lineno}: CRC mismatch")
                record = EventLogRecord.from_json(data.decode("utf-8"))
                if record.seq <= last_seq:
                    raise EventLogError(
                        f"line {lineno}: sequence {record.seq} not increasing"
                    )
                last_seq = record.seq
                yield record


def replay(
    log: EventLog,
    engine: Engine | None = None,
    config: EngineConfig | None = None,
    from_seq: int = 1,
    strict: bool = True,
) -> Engine:
    """Apply records with seq >= from_seq to the engine, refusing gaps."""
    engine = engine or Engine(config=config)
    expected = from_seq
    for record in log.read():
        if record.seq < from_seq:
            continue
        if strict and record.seq != expected:
            raise EventLogError(
                f"gap in event log: expected sequence {expected}, "
                f"found {record.seq}"
            )
        engine.apply_event(record.kind, record.payload, record.timestamp)
        expected = record.seq + 1
    return engine


def _canonical(state: dict) -> str:
    return json.dumps(state, sort_keys=True, separators=(",", ":"))


def write_snapshot(engine: Engine, high_water: int, path) -> None:
    state = engine.state_dict()
    body = _canonical(state)
    checksum = hashlib.sha256(body.encode("utf-8")).hexdigest()
    payload = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "high_water": high_water,
        "checksum": checksum,
        "state": state,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)


def read_snapshot(path) -> tuple[dict, int]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != SNAPSHOT_FORMAT:
        raise EventLogError("not a snapshot file")
    if payload.get("version") != SNAPSHOT_VERSION:
        raise EventLogError(f"unsupported snapshot version {payload.get('version')}")
    body = _canonical(payload["state"])
    if hashlib.sha256(body.encode("utf-8")).hexdigest() != payload["checksum"]:
        raise EventLogError("snapshot checksum mismatch")
    return payload["state"], payload["high_water"]


def restore(
    log: EventLog,
    snapshot_path=None,
    config: EngineConfig | None = None,
) -> Engine:
    """Rebuild an engine from an optional snapshot plus the log tail."""
    if snapshot_path is None:
        return replay(log, config=config)
    state, high_water = read_snapshot(snapshot_path)
    engine = Engine.from_state_dict(state, config=config)
    return replay(log, engine=engine, from_seq=high_water + 1)
