"""Cloud side: deduplicated ingestion, node registry and groups, sampling
commands, health tracking, time-series query and flat semantic export.

The store is a key/value layer with secondary indexes per (node, channel)
and a file-backed JSONL journal; replaying the journal reproduces the
exact store, which is both the durability story and what lets reports be
recomputed offline.  All public methods are safe under concurrent API
requests (one lock; reads see a consistent snapshot at desk scale).
"""

from __future__ import annotations

import bisect
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .environment import GeoFence
from .fieldnode import Packet
from .storeforward import Key, _Journal, packet_from_dict, packet_to_dict


class RegistryError(ValueError):
    """Duplicate registration or update of an unknown node."""


class UnknownNodeError(KeyError):
    pass


class UnknownChannelError(KeyError):
    pass


class GroupError(ValueError):
    """Unknown or empty group, or a period below the safe minimum."""


class QueryError(ValueError):
    pass


@dataclass(frozen=True)
class ObservationRecord:
    node_id: str
    seq: int
    t: int
    channel: str
    value: float | str
    unit: str
    kind: str


@dataclass
class NodeDescriptor:
    node_id: str
    kind: str
    position: tuple[float, float]
    sensing_attributes: list[dict] = field(default_factory=list)
    groups: set[str] = field(default_factory=set)
    registered_t: float = 0.0
    notes: str = ""
    period_s: float = 305.0


@dataclass(frozen=True)
class NodeHealth:
    node_id: str
    last_heard: float | None
    battery_mv: int | None
    silent: bool


@dataclass(frozen=True)
class GroupCommand:
    group: str
    period_s: float
    issued_t: float
    fanout: tuple[str, ...]  # node ids commanded at issue time


@dataclass
class CloudConfig:
    silence_threshold: float = 3.0  # missed periods before a node is silent
    min_period_s: float = 10.0  # default awake 5 s + 5 s margin
    site_boundary: GeoFence | None = None


class CloudCore:
    def __init__(
        self,
        config: CloudConfig | None = None,
        journal_path: str | None = None,
        clock: Callable[[], float] = lambda: 0.0,
    ):
        self.config = config or CloudConfig()
        self.clock = clock
        self._lock = threading.RLock()
        self._journal = _Journal(journal_path)

        self.registry: dict[str, NodeDescriptor] = {}
        self.edit_history: dict[str, list[dict]] = {}
        self.observations: dict[tuple[str, int, str], ObservationRecord] = {}
        self.packet_meta: dict[Key, dict] = {}  # key -> {t, stored_t, battery_mv}
        self.series: dict[tuple[str, str], list[tuple[int, int, float | str]]] = {}
        self.health: dict[str, dict] = {}  # node -> {last_heard, battery_mv, battery_t}
        self.period_s: dict[str, float] = {}
        self.quarantine: dict[Key, Packet] = {}
        self.group_commands: list[GroupCommand] = []
        self.command_status: dict[str, dict] = {}  # node -> {period_s, issued_t, status}
        self.command_outbox: Callable[[str, float, float], None] | None = None

    # -- registry -------------------------------------------------------------

    def register_node(self, d: NodeDescriptor) -> None:
        with self._lock:
            if d.node_id in self.registry:
                raise RegistryError(f"node {d.node_id!r} already registered")
            self._check_boundary(d.position)
            self.registry[d.node_id] = d
            self.edit_history[d.node_id] = [
                {"t": d.registered_t, "patch": {"registered": True}}
            ]
            self.health[d.node_id] = {"last_heard": None, "battery_mv": None, "battery_t": -1.0}
            self.period_s[d.node_id] = d.period_s
            self._journal.append({"op": "register", "node": _descriptor_to_dict(d)})

    def update_node(self, node_id: str, patch: dict, t: float | None = None) -> None:
        """Apply an edit; the edit history keeps every change with its time."""
        with self._lock:
            d = self.registry.get(node_id)
            if d is None:
                raise RegistryError(f"cannot update unknown node {node_id!r}")
            t = self.clock() if t is None else t
            for fieldname, value in patch.items():
                if fieldname == "position":
                    pos = (float(value[0]), float(value[1]))
                    self._check_boundary(pos)
                    d.position = pos
                elif fieldname == "groups":
                    d.groups = set(value)
                elif fieldname == "notes":
                    d.notes = str(value)
                elif fieldname == "period_s":
                    d.period_s = float(value)
                    self.period_s[node_id] = float(value)
                else:
                    raise RegistryError(f"unknown descriptor field {fieldname!r}")
            self.edit_history[node_id].append({"t": t, "patch": dict(patch)})
            self._journal.append({"op": "update", "node_id": node_id, "t": t, "patch": _jsonable(patch)})

    def _check_boundary(self, pos: tuple[float, float]) -> None:
        if self.config.site_boundary is not None and not self.config.site_boundary.contains(pos):
            raise RegistryError(f"position {pos} outside the site boundary")

    def list_nodes(self) -> list[NodeDescriptor]:
        with self._lock:
            return [self.registry[k] for k in sorted(self.registry)]

    def get_node(self, node_id: str) -> NodeDescriptor:
        with self._lock:
            d = self.registry.get(node_id)
            if d is None:
                raise UnknownNodeError(node_id)
            return d

    def members_of(self, group: str) -> list[str]:
        with self._lock:
            return sorted(n for n, d in self.registry.items() if group in d.groups)

    # -- ingestion -------------------------------------------------------------

    def ingest_batch(self, packets: Iterable[Packet]) -> list[Key]:
        """Explode packets into per-channel records, dedup by (node, seq);
        every key is acked, duplicates and quarantined ones included."""
        acked: list[Key] = []
        with self._lock:
            now = self.clock()
            for p in packets:
                key = (p.node_id, p.seq)
                acked.append(key)
                if p.node_id not in self.registry:
                    if key not in self.quarantine:
                        self.quarantine[key] = p
                        self._journal.append(
                            {"op": "quarantine", "stored_t": now, "packet": packet_to_dict(p)}
                        )
                    continue
                if key in self.packet_meta:
                    continue
                self._store_packet(p, now)
        return acked

    def _store_packet(self, p: Packet, stored_t: float) -> None:
        key = (p.node_id, p.seq)
        self.packet_meta[key] = {"t": p.t, "stored_t": stored_t, "battery_mv": p.battery_mv}
        for r in p.readings:
            okey = (p.node_id, p.seq, r.channel)
            rec = ObservationRecord(p.node_id, p.seq, p.t, r.channel, r.value, r.unit, p.kind)
            self.observations[okey] = rec
            lane = self.series.setdefault((p.node_id, r.channel), [])
            bisect.insort(lane, (p.t, p.seq, r.value))
        h = self.health[p.node_id]
        if h["last_heard"] is None or p.t > h["last_heard"]:
            h["last_heard"] = p.t
        if p.t >= h["battery_t"]:
            h["battery_mv"] = p.battery_mv
            h["battery_t"] = p.t
        self._journal.append({"op": "packet", "stored_t": stored_t, "packet": packet_to_dict(p)})

    # -- commands ----------------------------------------------------------------

    def set_group_rate(self, group: str, period_s: float, issued_t: float | None = None) -> GroupCommand:
        """Fan one set_period command out to the group's current members."""
        with self._lock:
            if period_s < self.config.min_period_s:
                raise GroupError(
                    f"period {period_s} below safe minimum {self.config.min_period_s}"
                )
            members = self.members_of(group)
            if not members:
                raise GroupError(f"group {group!r} is unknown or empty")
            issued = self.clock() if issued_t is None else issued_t
            cmd = GroupCommand(group, float(period_s), issued, tuple(members))
            self.group_commands.append(cmd)
            for node_id in members:
                self.period_s[node_id] = float(period_s)
                self.registry[node_id].period_s = float(period_s)
                self.command_status[node_id] = {
                    "period_s": float(period_s),
                    "issued_t": issued,
                    "status": "staged",
                }
                if self.command_outbox is not None:
                    self.command_outbox(node_id, float(period_s), issued)
            self._journal.append(
                {
                    "op": "command",
                    "group": group,
                    "period_s": float(period_s),
                    "issued_t": issued,
                    "fanout": members,
                }
            )
            return cmd

    def stage_power_cycle(self, node_id: str, issued_t: float | None = None) -> None:
        with self._lock:
            if node_id not in self.registry:
                raise RegistryError(f"unknown node {node_id!r}")
            issued = self.clock() if issued_t is None else issued_t
            self.command_status[node_id] = {
                "period_s": None,
                "issued_t": issued,
                "status": "staged",
            }
            if self.command_outbox is not None:
                self.command_outbox(node_id, None, issued)
            self._journal.append(
                {"op": "command", "group": None, "period_s": None,
                 "issued_t": issued, "fanout": [node_id], "power_cycle": True}
            )

    def mark_command_delivered(self, node_id: str) -> None:
        with self._lock:
            st = self.command_status.get(node_id)
            if st is not None and st["status"] != "delivered":
                st["status"] = "delivered"
                self._journal.append({"op": "cmd_delivered", "node_id": node_id})

    def group_command_status(self, group: str) -> list[tuple[str, dict]]:
        with self._lock:
            members = self.members_of(group)
            if not members:
                raise GroupError(f"group {group!r} is unknown or empty")
            return [(n, dict(self.command_status[n])) for n in members if n in self.command_status]

    # -- health ---------------------------------------------------------------

    def node_health(self, node_id: str, now: float | None = None) -> NodeHealth:
        with self._lock:
            if node_id not in self.registry:
                raise UnknownNodeError(node_id)
            now = self.clock() if now is None else now
            h = self.health[node_id]
            period = self.period_s[node_id]
            if h["last_heard"] is None:
                silent = True
            else:
                silent = (now - h["last_heard"]) > self.config.silence_threshold * period
            return NodeHealth(node_id, h["last_heard"], h["battery_mv"], silent)

    def silent_nodes(self, now: float | None = None) -> list[NodeHealth]:
        with self._lock:
            now = self.clock() if now is None else now
            out = [self.node_health(n, now) for n in sorted(self.registry)]
            return [x for x in out if x.silent]

    # -- queries -----------------------------------------------------------------

    def known_channels(self, node_id: str) -> set[str]:
        d = self.get_node(node_id)
        chans: set[str] = set()
        for spec in d.sensing_attributes:
            if spec["kind"] == "gps":
                chans.update(("gps_lat", "gps_lon"))
            else:
                chans.add(spec["channel_id"])
        return chans

    def query_series(
        self, node_id: str, channel: str, t_from: float, t_to: float
    ) -> list[tuple[int, float | str]]:
        """Ascending-(t) series; unknown node/channel raise, an empty window
        returns []."""
        with self._lock:
            if t_from > t_to:
                raise QueryError(f"t_from {t_from} > t_to {t_to}")
            if channel not in self.known_channels(node_id):
                raise UnknownChannelError(channel)
            lane = self.series.get((node_id, channel), [])
            return [(t, v) for (t, _seq, v) in lane if t_from <= t <= t_to]

    # -- semantic export -----------------------------------------------------------

    def export_semantic(self, node_id: str, seq: int) -> list[str]:
        """Flat triples for every observation of one packet, one per line:
        subject predicate object, literals quoted."""
        with self._lock:
            key = (node_id, seq)
            if key not in self.packet_meta:
                raise UnknownNodeError(f"no stored packet {key}")
            d = self.get_node(node_id)
            grade_by_channel = self._grades(d)
            lines: list[str] = []
            for (n, s, channel), rec in sorted(self.observations.items()):
                if (n, s) != key:
                    continue
                obs = f"obs:{n}:{s}:{channel}"
                sensor = f"sensor:{n}:{channel}"
                grade = grade_by_channel.get(channel, "cheap")
                lines.append(f"{obs} madeBySensor {sensor}")
                lines.append(f'{sensor} hasGrade "{grade}"')
                lines.append(f'{obs} hasResult "{_fmt(rec.value)} {rec.unit}"')
                lines.append(f'{obs} resultTime "{rec.t}"')
                lines.append(f'{obs} location "{_fmt(d.position[0])} {_fmt(d.position[1])}"')
            return lines

    @staticmethod
    def _grades(d: NodeDescriptor) -> dict[str, str]:
        out = {}
        for spec in d.sensing_attributes:
            if spec["kind"] == "gps":
                out["gps_lat"] = spec.get("grade", "cheap")
                out["gps_lon"] = spec.get("grade", "cheap")
            else:
                out[spec["channel_id"]] = spec.get("grade", "cheap")
        return out

    # -- durability & comparison -----------------------------------------------------

    def canonical_dump(self) -> str:
        """Content-equality form: sorted, order-independent rendering of the
        registry, observations, quarantine and health."""
        with self._lock:
            lines = []
            for node_id in sorted(self.registry):
                d = self.registry[node_id]
                lines.append(
                    f"node {node_id} {d.kind} {_fmt(d.position[0])} {_fmt(d.position[1])} "
                    f"{_fmt(d.period_s)} {','.join(sorted(d.groups)) or '-'}"
                )
            for okey in sorted(self.observations):
                rec = self.observations[okey]
                lines.append(
                    f"obs {rec.node_id} {rec.seq} {rec.t} {rec.channel} {_fmt(rec.value)} {rec.unit}"
                )
            for key in sorted(self.quarantine):
                lines.append(f"quarantine {key[0]} {key[1]}")
            for node_id in sorted(self.health):
                h = self.health[node_id]
                lines.append(
                    f"health {node_id} {_fmt(h['last_heard']) if h['last_heard'] is not None else 'never'} "
                    f"{h['battery_mv'] if h['battery_mv'] is not None else 'none'}"
                )
            return "\n".join(lines) + "\n"

    def close(self) -> None:
        self._journal.close()

    @classmethod
    def from_log(
        cls,
        journal_path: str,
        config: CloudConfig | None = None,
        clock: Callable[[], float] = lambda: 0.0,
        reopen: bool = True,
    ) -> "CloudCore":
        records = _Journal.replay(journal_path)
        core = cls(config=config, journal_path=None, clock=clock)
        core._journal = _Journal(None)
        for rec in records:
            op = rec["op"]
            if op == "register":
                core.register_node(_descriptor_from_dict(rec["node"]))
            elif op == "update":
                core.update_node(rec["node_id"], rec["patch"], t=rec["t"])
            elif op == "packet":
                p = packet_from_dict(rec["packet"])
                if (p.node_id, p.seq) not in core.packet_meta:
                    core._store_packet(p, rec["stored_t"])
            elif op == "quarantine":
                p = packet_from_dict(rec["packet"])
                core.quarantine.setdefault((p.node_id, p.seq), p)
            elif op == "command":
                # replay with the logged fanout, not current membership
                if rec.get("power_cycle"):
                    node_id = rec["fanout"][0]
                    core.command_status[node_id] = {
                        "period_s": None, "issued_t": rec["issued_t"], "status": "staged",
                    }
                else:
                    cmd = GroupCommand(
                        rec["group"], rec["period_s"], rec["issued_t"], tuple(rec["fanout"])
                    )
                    core.group_commands.append(cmd)
                    for node_id in rec["fanout"]:
                        core.period_s[node_id] = rec["period_s"]
                        if node_id in core.registry:
                            core.registry[node_id].period_s = rec["period_s"]
                        core.command_status[node_id] = {
                            "period_s": rec["period_s"],
                            "issued_t": rec["issued_t"],
                            "status": "staged",
                        }
            elif op == "cmd_delivered":
                core.mark_command_delivered(rec["node_id"])
        core._journal = _Journal(journal_path if reopen else None)
        return core


def _fmt(v: float | str | int | None) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _jsonable(patch: dict) -> dict:
    out = {}
    for k, v in patch.items():
        if isinstance(v, set):
            out[k] = sorted(v)
        elif isinstance(v, tuple):
            out[k] = list(v)
        else:
            out[k] = v
    return out


def _descriptor_to_dict(d: NodeDescriptor) -> dict:
    return {
        "node_id": d.node_id,
        "kind": d.kind,
        "position": list(d.position),
        "sensing_attributes": d.sensing_attributes,
        "groups": sorted(d.groups),
        "registered_t": d.registered_t,
        "notes": d.notes,
        "period_s": d.period_s,
    }


def _descriptor_from_dict(d: dict) -> NodeDescriptor:
    return NodeDescriptor(
        node_id=d["node_id"],
        kind=d["kind"],
        position=(float(d["position"][0]), float(d["position"][1])),
        sensing_attributes=d.get("sensing_attributes", []),
        groups=set(d.get("groups", [])),
        registered_t=float(d.get("registered_t", 0.0)),
        notes=d.get("notes", ""),
        period_s=float(d.get("period_s", 305.0)),
    )
