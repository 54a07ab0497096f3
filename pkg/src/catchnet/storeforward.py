"""Durable ack'd store-and-forward queues at the relay and gateway.

Every state transition is appended to a per-component JSONL log, so a
component killed at any instant rebuilds its exact queue state by replay.
The relay holds packets until the gateway confirms them; the gateway holds
records until the cloud confirms them; duplicates are tolerated everywhere
and deduplicated by (node_id, seq), which is what turns at-least-once links
into an exactly-once store.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Callable, IO

from .fieldnode import Packet, Reading

Key = tuple[str, int]

PENDING = "pending"
AWAITING = "sent-awaiting-ack"
ACKED = "acked"


def packet_to_dict(p: Packet) -> dict:
    return {
        "node_id": p.node_id,
        "seq": p.seq,
        "t": p.t,
        "kind": p.kind,
        "battery_mv": p.battery_mv,
        "readings": [[r.channel, r.value, r.unit] for r in p.readings],
    }


def packet_from_dict(d: dict) -> Packet:
    return Packet(
        node_id=d["node_id"],
        seq=int(d["seq"]),
        t=int(d["t"]),
        kind=d["kind"],
        readings=tuple(Reading(c, v, u) for c, v, u in d["readings"]),
        battery_mv=int(d["battery_mv"]),
    )


@dataclass
class DurableEntry:
    key: Key
    packet: Packet
    state: str = PENDING
    last_sent: float = -1.0
    attempts: int = 0
    ingest_index: int = 0


@dataclass(frozen=True)
class Ack:
    keys: tuple[Key, ...]

    def __post_init__(self) -> None:
        if not self.keys:
            raise ValueError("empty ack")


@dataclass
class CommandEntry:
    node_id: str
    command: str  # set_period | power_cycle
    period_s: float | None
    issued_t: float
    delivered: bool = False

    def payload(self) -> dict:
        d = {"command": self.command}
        if self.period_s is not None:
            d["period_s"] = self.period_s
        return d


@dataclass
class QueueConfig:
    retry_timeout_s: float = 60.0
    batch_limit: int = 64
    capacity: int | None = 10_000


class _Journal:
    """Append-only JSONL log; None path keeps the component memory-only."""

    def __init__(self, path: str | None):
        self.path = path
        self._fh: IO[str] | None = None
        if path is not None:
            self._fh = open(path, "a", encoding="utf-8")

    def append(self, record: dict) -> None:
        if self._fh is not None:
            self._fh.write(json.dumps(record, separators=(",", ":")) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    @staticmethod
    def replay(path: str) -> list[dict]:
        if not os.path.exists(path):
            return []
        out = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    out.append(json.loads(line))
        return out


class RelayStore:
    """In-field queue: holds every heard packet until the gateway acks it."""

    def __init__(
        self,
        config: QueueConfig,
        journal_path: str | None = None,
        on_command_delivered: Callable[[str], None] | None = None,
    ):
        self.config = config
        self.entries: dict[Key, DurableEntry] = {}
        # entries still pending/awaiting; acked ones stay in `entries` for
        # dedup until capacity eviction but must not be rescanned every flush
        self.unresolved: dict[Key, DurableEntry] = {}
        self.commands: dict[str, CommandEntry] = {}
        self.evicted_unacked: list[Key] = []
        self.loss_count = 0
        self._ingest_counter = 0
        self._journal = _Journal(journal_path)
        self.on_command_delivered = on_command_delivered

    # -- uplink path --------------------------------------------------------

    def ingest(self, p: Packet, t: float) -> bool:
        """Store durably; duplicates are ignored (returns False)."""
        key = (p.node_id, p.seq)
        if key in self.entries:
            return False
        self._make_room()
        entry = DurableEntry(key, p, PENDING, ingest_index=self._ingest_counter)
        self._ingest_counter += 1
        self.entries[key] = entry
        self.unresolved[key] = entry
        self._journal.append({"op": "ingest", "t": t, "packet": packet_to_dict(p)})
        return True

    def _make_room(self) -> None:
        cap = self.config.capacity
        if cap is None or len(self.entries) < cap:
            return
        acked = [e for e in self.entries.values() if e.state == ACKED]
        if acked:
            victim = min(acked, key=lambda e: e.ingest_index)
        else:
            victim = min(self.entries.values(), key=lambda e: e.ingest_index)
            self.evicted_unacked.append(victim.key)
            self.loss_count += 1
        del self.entries[victim.key]
        self.unresolved.pop(victim.key, None)
        self._journal.append(
            {"op": "evict", "key": list(victim.key), "acked": victim.state == ACKED}
        )

    def flush(self, t: float) -> list[DurableEntry]:
        """Entries due for (re)transmission, in key order, up to the batch
        limit; each is marked sent-awaiting-ack with attempts + 1."""
        due = [
            e
            for e in self.unresolved.values()
            if e.state == PENDING
            or (e.state == AWAITING and e.last_sent + self.config.retry_timeout_s <= t)
        ]
        due.sort(key=lambda e: e.key)
        batch = due[: self.config.batch_limit]
        for e in batch:
            e.state = AWAITING
            e.last_sent = t
            e.attempts += 1
            self._journal.append(
                {"op": "sent", "key": list(e.key), "t": t, "attempts": e.attempts}
            )
        return batch

    def handle_ack(self, ack: Ack) -> None:
        """Mark listed keys acked; unknown keys are ignored, repeats are no-ops."""
        for key in ack.keys:
            entry = self.entries.get(tuple(key))
            if entry is not None and entry.state != ACKED:
                entry.state = ACKED
                self.unresolved.pop(entry.key, None)
                self._journal.append({"op": "ack", "key": list(entry.key)})

    # -- command staging ------------------------------------------------------

    def stage_command(self, cmd: CommandEntry) -> None:
        """Newest command wins; replaces any pending one for the node."""
        self.commands[cmd.node_id] = cmd
        self._journal.append(
            {
                "op": "cmd_stage",
                "node_id": cmd.node_id,
                "command": cmd.command,
                "period_s": cmd.period_s,
                "issued_t": cmd.issued_t,
            }
        )

    def pending_command(self, node_id: str) -> CommandEntry | None:
        cmd = self.commands.get(node_id)
        return cmd if cmd is not None and not cmd.delivered else None

    def mark_command_delivered(self, node_id: str) -> None:
        cmd = self.commands.get(node_id)
        if cmd is not None and not cmd.delivered:
            cmd.delivered = True
            self._journal.append({"op": "cmd_delivered", "node_id": node_id})
            if self.on_command_delivered is not None:
                self.on_command_delivered(node_id)

    # -- durability -----------------------------------------------------------

    def close(self) -> None:
        self._journal.close()

    @classmethod
    def from_log(
        cls,
        config: QueueConfig,
        journal_path: str,
        on_command_delivered: Callable[[str], None] | None = None,
        reopen: bool = True,
    ) -> "RelayStore":
        """Rebuild the exact queue state by replaying the journal, then keep
        appending to the same file (reopen=False replays read-only, which is
        what report building uses)."""
        records = _Journal.replay(journal_path)
        store = cls.__new__(cls)
        store.config = config
        store.entries = {}
        store.unresolved = {}
        store.commands = {}
        store.evicted_unacked = []
        store.loss_count = 0
        store._ingest_counter = 0
        store._journal = _Journal(None)  # silent while replaying
        store.on_command_delivered = None
        for rec in records:
            op = rec["op"]
            if op == "ingest":
                p = packet_from_dict(rec["packet"])
                key = (p.node_id, p.seq)
                if key not in store.entries:
                    entry = DurableEntry(key, p, PENDING, ingest_index=store._ingest_counter)
                    store.entries[key] = entry
                    store.unresolved[key] = entry
                    store._ingest_counter += 1
            elif op == "sent":
                e = store.entries.get(tuple(rec["key"]))
                if e is not None:
                    e.state = AWAITING
                    e.last_sent = rec["t"]
                    e.attempts = rec["attempts"]
            elif op == "ack":
                e = store.entries.get(tuple(rec["key"]))
                if e is not None:
                    e.state = ACKED
                    store.unresolved.pop(e.key, None)
            elif op == "evict":
                key = tuple(rec["key"])
                store.entries.pop(key, None)
                store.unresolved.pop(key, None)
                if not rec["acked"]:
                    store.evicted_unacked.append(key)
                    store.loss_count += 1
            elif op == "cmd_stage":
                store.commands[rec["node_id"]] = CommandEntry(
                    rec["node_id"], rec["command"], rec["period_s"], rec["issued_t"]
                )
            elif op == "cmd_delivered":
                cmd = store.commands.get(rec["node_id"])
                if cmd is not None:
                    cmd.delivered = True
        store._journal = _Journal(journal_path if reopen else None)
        store.on_command_delivered = on_command_delivered
        return store


@dataclass
class _GatewayRecord:
    packet: Packet
    stored_t: float
    state: str = PENDING  # pending | sent-awaiting-ack (cloud) | acked (cloud)
    ingest_index: int = 0


class GatewayStore:
    """Internet-side queue: durable local store, batched uploads to the cloud,
    resending everything the cloud has not yet acknowledged."""

    def __init__(self, config: QueueConfig, journal_path: str | None = None):
        self.config = config
        self.records: dict[Key, _GatewayRecord] = {}
        self.unresolved: dict[Key, _GatewayRecord] = {}  # not yet cloud-acked
        self.evicted_unacked: list[Key] = []
        self.loss_count = 0
        self._ingest_counter = 0
        self._journal = _Journal(journal_path)

    def ingest(self, p: Packet, t: float) -> Ack:
        """Store with dedup; always ack, even duplicates, so the relay prunes."""
        key = (p.node_id, p.seq)
        if key not in self.records:
            self._make_room()
            rec = _GatewayRecord(p, t, PENDING, self._ingest_counter)
            self.records[key] = rec
            self.unresolved[key] = rec
            self._ingest_counter += 1
            self._journal.append({"op": "ingest", "t": t, "packet": packet_to_dict(p)})
        return Ack((key,))

    def _make_room(self) -> None:
        cap = self.config.capacity
        if cap is None or len(self.records) < cap:
            return
        acked = [r for r in self.records.values() if r.state == ACKED]
        if acked:
            victim = min(acked, key=lambda r: r.ingest_index)
        else:
            victim = min(self.records.values(), key=lambda r: r.ingest_index)
            key = (victim.packet.node_id, victim.packet.seq)
            self.evicted_unacked.append(key)
            self.loss_count += 1
        key = (victim.packet.node_id, victim.packet.seq)
        del self.records[key]
        self.unresolved.pop(key, None)
        self._journal.append({"op": "evict", "key": list(key), "acked": victim.state == ACKED})

    def upload_batch(self, t: float, uplink_available: bool) -> list[Packet]:
        """Everything not yet cloud-acked, in key order, up to the batch
        limit; empty when the uplink is down."""
        if not uplink_available:
            return []
        due = sorted(self.unresolved.values(), key=lambda r: (r.packet.node_id, r.packet.seq))
        batch = due[: self.config.batch_limit]
        if batch:
            keys = [[r.packet.node_id, r.packet.seq] for r in batch]
            for r in batch:
                r.state = AWAITING
            self._journal.append({"op": "uploaded", "t": t, "keys": keys})
        return [r.packet for r in batch]

    def handle_cloud_ack(self, keys: list[Key]) -> None:
        for key in keys:
            rec = self.records.get(tuple(key))
            if rec is not None and rec.state != ACKED:
                rec.state = ACKED
                self.unresolved.pop(tuple(key), None)
                self._journal.append({"op": "cloud_ack", "key": list(key)})

    def unacked_count(self) -> int:
        return len(self.unresolved)

    def close(self) -> None:
        self._journal.close()

    @classmethod
    def from_log(cls, config: QueueConfig, journal_path: str, reopen: bool = True) -> "GatewayStore":
        records = _Journal.replay(journal_path)
        store = cls.__new__(cls)
        store.config = config
        store.records = {}
        store.unresolved = {}
        store.evicted_unacked = []
        store.loss_count = 0
        store._ingest_counter = 0
        store._journal = _Journal(None)
        for rec in records:
            op = rec["op"]
            if op == "ingest":
                p = packet_from_dict(rec["packet"])
                key = (p.node_id, p.seq)
                if key not in store.records:
                    row = _GatewayRecord(p, rec["t"], PENDING, store._ingest_counter)
                    store.records[key] = row
                    store.unresolved[key] = row
                    store._ingest_counter += 1
            elif op == "uploaded":
                for k in rec["keys"]:
                    r = store.records.get(tuple(k))
                    if r is not None and r.state != ACKED:
                        r.state = AWAITING
            elif op == "cloud_ack":
                r = store.records.get(tuple(rec["key"]))
                if r is not None:
                    r.state = ACKED
                    store.unresolved.pop(tuple(rec["key"]), None)
            elif op == "evict":
                key = tuple(rec["key"])
                victim = store.records.pop(key, None)
                store.unresolved.pop(key, None)
                if victim is not None and not rec["acked"]:
                    store.evicted_unacked.append(key)
                    store.loss_count += 1
        store._journal = _Journal(journal_path if reopen else None)
        return store
