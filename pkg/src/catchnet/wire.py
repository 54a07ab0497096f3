"""Line-delimited text records for the cloud API.

One record per line, single-space-separated fields in a fixed, documented
order; the first token names the record type.  Identifiers are restricted
to [A-Za-z0-9_.:-]; a record's one free-text field (notes, error message)
is always last and runs to the end of the line.  Absent optional values
are written as `-`.  All timestamps are integer seconds since the
scenario epoch.

Record types
  packet <node_id> <seq> <t> <kind> <battery_mv> <n_readings>
  reading <channel> <unit> <value>          (n_readings lines follow packet)
  key <node_id> <seq>
  acked <n>
  node <node_id> <kind> <lat> <lon> <period_s> <groups|-> <registered_t>
  channel <channel_id> <kind> <grade> <noise_sigma> <mount_cm>
  notes <free text>
  set <field> <value...>                    (PATCH body)
  period_s <n>                              (group rate body)
  staged <n>
  command <node_id> <period_s|-> <issued_t> <staged|delivered>
  health <node_id> <last_heard|never> <battery_mv|none> <silent 0|1>
  point <t> <value>
  status nodes <n> soil <n> livestock <n> observations <n> quarantine <n> silent <n> now <t>
  error <message...>
"""

from __future__ import annotations

import re

from .cloudcore import NodeDescriptor, NodeHealth
from .fieldnode import Packet, Reading

_IDENT = re.compile(r"^[A-Za-z0-9_.:-]+$")


class WireError(ValueError):
    """Malformed record or field."""


def check_ident(value: str, what: str) -> str:
    if not _IDENT.match(value):
        raise WireError(f"bad {what}: {value!r}")
    return value


def fmt_value(v: float | str | int) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_value(s: str) -> float | str:
    try:
        return float(s)
    except ValueError:
        return s


# -- packets ------------------------------------------------------------------


def encode_packets(packets: list[Packet]) -> str:
    lines = []
    for p in packets:
        lines.append(
            f"packet {p.node_id} {p.seq} {p.t} {p.kind} {p.battery_mv} {len(p.readings)}"
        )
        for r in p.readings:
            lines.append(f"reading {r.channel} {r.unit} {fmt_value(r.value)}")
    return "\n".join(lines) + ("\n" if lines else "")


def decode_packets(body: str) -> list[Packet]:
    packets: list[Packet] = []
    lines = [l for l in body.splitlines() if l.strip()]
    i = 0
    while i < len(lines):
        parts = lines[i].split(" ")
        if parts[0] != "packet" or len(parts) != 7:
            raise WireError(f"expected packet record, got {lines[i]!r}")
        _, node_id, seq, t, kind, mv, n = parts
        check_ident(node_id, "node id")
        n = int(n)
        readings = []
        for j in range(i + 1, i + 1 + n):
            if j >= len(lines):
                raise WireError("truncated packet: missing reading lines")
            rparts = lines[j].split(" ")
            if rparts[0] != "reading" or len(rparts) != 4:
                raise WireError(f"expected reading record, got {lines[j]!r}")
            readings.append(Reading(check_ident(rparts[1], "channel"), parse_value(rparts[3]), rparts[2]))
        packets.append(Packet(node_id, int(seq), int(t), kind, tuple(readings), int(mv)))
        i += 1 + n
    return packets


def encode_acked(keys: list[tuple[str, int]]) -> str:
    lines = [f"acked {len(keys)}"]
    lines += [f"key {node} {seq}" for node, seq in keys]
    return "\n".join(lines) + "\n"


def decode_acked(body: str) -> list[tuple[str, int]]:
    keys = []
    for line in body.splitlines():
        parts = line.split(" ")
        if parts[0] == "key" and len(parts) == 3:
            keys.append((parts[1], int(parts[2])))
    return keys


# -- registry -------------------------------------------------------------------


def encode_node_line(d: NodeDescriptor) -> str:
    groups = ",".join(sorted(d.groups)) or "-"
    return (
        f"node {d.node_id} {d.kind} {fmt_value(d.position[0])} {fmt_value(d.position[1])} "
        f"{fmt_value(d.period_s)} {groups} {int(d.registered_t)}"
    )


def encode_node_detail(d: NodeDescriptor, edits: int) -> str:
    lines = [encode_node_line(d)]
    for spec in d.sensing_attributes:
        lines.append(
            "channel {channel_id} {kind} {grade} {sigma} {mount}".format(
                channel_id=spec["channel_id"],
                kind=spec["kind"],
                grade=spec.get("grade", "cheap"),
                sigma=fmt_value(float(spec.get("noise_sigma", 0.0))),
                mount=fmt_value(float(spec.get("mount_cm", 0.0))),
            )
        )
    if d.notes:
        lines.append(f"notes {d.notes}")
    lines.append(f"edits {edits}")
    return "\n".join(lines) + "\n"


def decode_node(body: str) -> NodeDescriptor:
    node: NodeDescriptor | None = None
    attrs: list[dict] = []
    notes = ""
    for line in body.splitlines():
        if not line.strip():
            continue
        parts = line.split(" ")
        if parts[0] == "node":
            if len(parts) != 8:
                raise WireError(f"bad node record: {line!r}")
            groups = set() if parts[6] == "-" else set(parts[6].split(","))
            node = NodeDescriptor(
                node_id=check_ident(parts[1], "node id"),
                kind=parts[2],
                position=(float(parts[3]), float(parts[4])),
                groups=groups,
                registered_t=float(parts[7]),
                period_s=float(parts[5]),
            )
        elif parts[0] == "channel":
            if len(parts) != 6:
                raise WireError(f"bad channel record: {line!r}")
            attrs.append(
                {
                    "channel_id": check_ident(parts[1], "channel id"),
                    "kind": parts[2],
                    "grade": parts[3],
                    "noise_sigma": float(parts[4]),
                    "mount_cm": float(parts[5]),
                }
            )
        elif parts[0] == "notes":
            notes = line[len("notes "):]
        else:
            raise WireError(f"unexpected record in node body: {line!r}")
    if node is None:
        raise WireError("missing node record")
    node.sensing_attributes = attrs
    node.notes = notes
    return node


def decode_patch(body: str) -> dict:
    patch: dict = {}
    for line in body.splitlines():
        if not line.strip():
            continue
        parts = line.split(" ")
        if parts[0] != "set" or len(parts) < 3:
            raise WireError(f"bad patch record: {line!r}")
        what = parts[1]
        if what == "position":
            if len(parts) != 4:
                raise WireError("set position needs lat lon")
            patch["position"] = (float(parts[2]), float(parts[3]))
        elif what == "groups":
            patch["groups"] = set() if parts[2] == "-" else set(parts[2].split(","))
        elif what == "period_s":
            patch["period_s"] = float(parts[2])
        elif what == "notes":
            patch["notes"] = line[len("set notes "):]
        else:
            raise WireError(f"unknown patch field {what!r}")
    if not patch:
        raise WireError("empty patch")
    return patch


# -- health / commands / series -----------------------------------------------------


def encode_health(h: NodeHealth) -> str:
    last = str(int(h.last_heard)) if h.last_heard is not None else "never"
    mv = str(h.battery_mv) if h.battery_mv is not None else "none"
    return f"health {h.node_id} {last} {mv} {1 if h.silent else 0}"


def decode_health(line: str) -> NodeHealth:
    parts = line.split(" ")
    if parts[0] != "health" or len(parts) != 5:
        raise WireError(f"bad health record: {line!r}")
    last = None if parts[2] == "never" else float(parts[2])
    mv = None if parts[3] == "none" else int(parts[3])
    return NodeHealth(parts[1], last, mv, parts[4] == "1")


def encode_command_status(node_id: str, st: dict) -> str:
    period = fmt_value(st["period_s"]) if st["period_s"] is not None else "-"
    return f"command {node_id} {period} {int(st['issued_t'])} {st['status']}"


def encode_points(series: list[tuple[int, float | str]]) -> str:
    return "".join(f"point {t} {fmt_value(v)}\n" for t, v in series)


def decode_points(body: str) -> list[tuple[float, float | str]]:
    out = []
    for line in body.splitlines():
        if not line.strip():
            continue
        parts = line.split(" ")
        if parts[0] != "point" or len(parts) != 3:
            raise WireError(f"bad point record: {line!r}")
        out.append((float(parts[1]), parse_value(parts[2])))
    return out


def encode_error(message: str) -> str:
    return f"error {message}\n"
