"""Run accounting, rebuilt purely from the persisted store directory.

Every packet a node emitted is classified by its furthest progress
through the pipeline (cloud store, gateway store, relay queue, evicted,
lost on the short hop), so the per-node accounting closes exactly:
emitted = delivered + link_lost + evicted + in_relay + in_gateway.
The same builder serves the in-run report and the post-hoc `report`
subcommand, which is what makes the two match.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

from .cloudcore import CloudCore
from .storeforward import GatewayStore, QueueConfig, RelayStore, _Journal


class ReportError(ValueError):
    """Missing or unreadable store artifacts."""


@dataclass
class NodeAccount:
    emitted: int = 0
    delivered: int = 0
    link_lost: int = 0
    evicted: int = 0
    in_relay: int = 0
    in_gateway: int = 0
    suppressed: int = 0
    depleted_at: float | None = None
    silent_episodes: int = 0
    battery: list[tuple[float, float]] = field(default_factory=list)

    def closure_holds(self) -> bool:
        return self.emitted == (
            self.delivered + self.link_lost + self.evicted + self.in_relay + self.in_gateway
        )


@dataclass
class RunReport:
    scenario_sha256: str
    seed: int
    duration_s: float
    nodes: dict[str, NodeAccount]
    latencies: list[float]
    link_stats: dict[str, dict]
    uplink_stats: dict[str, int]
    quarantine: int
    eviction_losses: int
    ordering_ok_by_node: dict[str, bool]

    @property
    def emitted(self) -> int:
        return sum(a.emitted for a in self.nodes.values())

    @property
    def delivered(self) -> int:
        return sum(a.delivered for a in self.nodes.values())

    @property
    def yield_fraction(self) -> float:
        return self.delivered / self.emitted if self.emitted else 0.0

    def latency_percentile(self, q: float) -> float | None:
        if not self.latencies:
            return None
        xs = sorted(self.latencies)
        rank = max(1, math.ceil(q * len(xs)))  # nearest-rank
        return xs[rank - 1]

    def violations(self) -> list[str]:
        out = []
        for node_id, a in sorted(self.nodes.items()):
            if not a.closure_holds():
                out.append(
                    f"node {node_id}: accounting open: {a.emitted} != "
                    f"{a.delivered}+{a.link_lost}+{a.evicted}+{a.in_relay}+{a.in_gateway}"
                )
        if not 0.0 <= self.yield_fraction <= 1.0:
            out.append(f"yield {self.yield_fraction} outside [0, 1]")
        return out


def build_report(store_dir: str) -> RunReport:
    meta_path = os.path.join(store_dir, "run.json")
    if not os.path.exists(meta_path):
        raise ReportError(f"no run.json under {store_dir!r}")
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)

    trace = _Journal.replay(os.path.join(store_dir, "trace.log"))
    relay = _replay_relay(store_dir)
    gateway = _replay_gateway(store_dir)
    cloud = _replay_cloud(store_dir)

    duration = float(meta["duration_s"])
    threshold = float(meta["silence_threshold"])

    emits: dict[str, list[dict]] = {}
    shortloss: dict[str, set[int]] = {}
    accounts: dict[str, NodeAccount] = {}
    uplink_stats = {"ok": 0, "down": 0, "lost_up": 0, "lost_ack": 0}
    link_stats: dict[str, dict] = {}

    def acct(node_id: str) -> NodeAccount:
        return accounts.setdefault(node_id, NodeAccount())

    for rec in trace:
        ev = rec["ev"]
        if ev == "emit":
            emits.setdefault(rec["node"], []).append(rec)
            acct(rec["node"]).battery.append((rec["t"], rec["mah"]))
        elif ev == "shortloss":
            shortloss.setdefault(rec["node"], set()).add(rec["seq"])
        elif ev == "suppressed":
            acct(rec["node"]).suppressed += 1
            acct(rec["node"]).battery.append((rec["t"], rec["mah"]))
        elif ev == "dormant":
            if rec.get("depleted_at") is not None:
                acct(rec["node"]).depleted_at = rec["depleted_at"]
        elif ev == "txsummary":
            link_stats = rec["links"]
            uplink_stats = rec.get("uplink", uplink_stats)

    cloud_keys = set(cloud.packet_meta) | set(cloud.quarantine)
    gateway_keys = set(gateway.records)
    relay_keys = set(relay.entries)
    evicted_keys = set(relay.evicted_unacked) | set(gateway.evicted_unacked)

    latencies: list[float] = []
    ordering_ok: dict[str, bool] = {}

    for node_id, recs in sorted(emits.items()):
        a = acct(node_id)
        a.emitted = len(recs)
        lost_seqs = shortloss.get(node_id, set())
        observed_shortloss = 0
        for rec in recs:
            key = (node_id, rec["seq"])
            if key in cloud.packet_meta:
                a.delivered += 1
                latencies.append(cloud.packet_meta[key]["stored_t"] - rec["t"])
            elif key in cloud.quarantine:
                a.delivered += 1
            elif key in gateway_keys:
                a.in_gateway += 1
            elif key in relay_keys:
                a.in_relay += 1
            elif key in evicted_keys:
                a.evicted += 1
            else:
                a.link_lost += 1
                observed_shortloss += 1
        # independent cross-check: set classification vs per-frame loss events
        if observed_shortloss != len(lost_seqs & {r["seq"] for r in recs}):
            raise ReportError(
                f"node {node_id}: short-hop loss accounting disagrees "
                f"({observed_shortloss} classified, {len(lost_seqs)} traced)"
            )
        stored = sorted(
            (cloud.packet_meta[(node_id, r['seq'])]["stored_t"], r["seq"])
            for r in recs
            if (node_id, r["seq"]) in cloud.packet_meta
        )
        ordering_ok[node_id] = all(
            earlier[1] < later[1] for earlier, later in zip(stored, stored[1:])
        )
        a.battery = _hourly(a.battery)
        a.silent_episodes = _silent_episodes(node_id, cloud, duration, threshold)

    for node_id in cloud.registry:
        if node_id not in accounts:
            a = acct(node_id)
            a.silent_episodes = _silent_episodes(node_id, cloud, duration, threshold)

    return RunReport(
        scenario_sha256=meta["scenario_sha256"],
        seed=int(meta["seed"]),
        duration_s=duration,
        nodes=dict(sorted(accounts.items())),
        latencies=latencies,
        link_stats=link_stats,
        uplink_stats=uplink_stats,
        quarantine=len(cloud.quarantine),
        eviction_losses=relay.loss_count + gateway.loss_count,
        ordering_ok_by_node=ordering_ok,
    )


# reopen=False keeps report building strictly read-only on the store


def _replay_relay(store_dir: str) -> RelayStore:
    return RelayStore.from_log(QueueConfig(), os.path.join(store_dir, "relay.log"), reopen=False)


def _replay_gateway(store_dir: str) -> GatewayStore:
    return GatewayStore.from_log(QueueConfig(), os.path.join(store_dir, "gateway.log"), reopen=False)


def _replay_cloud(store_dir: str) -> CloudCore:
    return CloudCore.from_log(os.path.join(store_dir, "cloud.log"), reopen=False)


def _hourly(samples: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Last battery sample per hour bucket (keeps the timeline small)."""
    by_hour: dict[int, tuple[float, float]] = {}
    for t, mah in samples:
        by_hour[int(t // 3600)] = (t, mah)
    return [by_hour[h] for h in sorted(by_hour)]


def _silent_episodes(node_id: str, cloud: CloudCore, duration: float, threshold: float) -> int:
    """Count the gaps a fleet operator would have flagged: periods with no
    delivered packet for more than threshold * the active commanded period."""
    d = cloud.registry.get(node_id)
    if d is None:
        return 0
    changes = [(0.0, d.period_s)]
    for cmd in cloud.group_commands:
        if node_id in cmd.fanout:
            changes.append((cmd.issued_t, cmd.period_s))
    changes.sort()

    def period_at(t: float) -> float:
        active = changes[0][1]
        for at, period in changes:
            if at <= t:
                active = period
        return active

    times = sorted(meta["t"] for key, meta in cloud.packet_meta.items() if key[0] == node_id)
    edges = [0.0] + [float(t) for t in times] + [duration]
    episodes = 0
    for prev, nxt in zip(edges, edges[1:]):
        if (nxt - prev) > threshold * period_at(prev):
            episodes += 1
    return episodes


# -- rendering ---------------------------------------------------------------------


def render_report(r: RunReport) -> str:
    lines = [
        "catchnet run report",
        f"scenario_sha256 {r.scenario_sha256}",
        f"seed {r.seed}",
        f"duration_s {_n(r.duration_s)}",
        f"emitted {r.emitted}",
        f"delivered {r.delivered}",
        f"link_lost {sum(a.link_lost for a in r.nodes.values())}",
        f"evicted {sum(a.evicted for a in r.nodes.values())}",
        f"in_relay {sum(a.in_relay for a in r.nodes.values())}",
        f"in_gateway {sum(a.in_gateway for a in r.nodes.values())}",
        f"yield {r.yield_fraction:.6f}",
    ]
    if r.latencies:
        lines.append(
            "latency_s p50 {:.3f} p90 {:.3f} p99 {:.3f} max {:.3f}".format(
                r.latency_percentile(0.50),
                r.latency_percentile(0.90),
                r.latency_percentile(0.99),
                max(r.latencies),
            )
        )
    else:
        lines.append("latency_s p50 - p90 - p99 - max -")
    up = r.uplink_stats
    lines.append(
        f"uplink ok {up.get('ok', 0)} down {up.get('down', 0)} "
        f"lost_up {up.get('lost_up', 0)} lost_ack {up.get('lost_ack', 0)}"
    )
    lines.append(f"quarantine {r.quarantine}")
    lines.append(f"eviction_losses {r.eviction_losses}")
    for link_id in sorted(r.link_stats):
        st = r.link_stats[link_id]
        lines.append(f"link {link_id} sent {st['sent']} lost {st['lost']}")
    for node_id, a in r.nodes.items():
        depleted = f"{a.depleted_at / 3600:.2f}" if a.depleted_at is not None else "-"
        lines.append(
            f"node {node_id} emitted {a.emitted} delivered {a.delivered} "
            f"link_lost {a.link_lost} evicted {a.evicted} in_relay {a.in_relay} "
            f"in_gateway {a.in_gateway} suppressed {a.suppressed} "
            f"depleted_h {depleted} silent_episodes {a.silent_episodes} "
            f"ordered {'yes' if r.ordering_ok_by_node.get(node_id, True) else 'no'}"
        )
    for node_id, a in r.nodes.items():
        if a.battery:
            samples = " ".join(f"{_n(t)}:{mah:.1f}" for t, mah in a.battery)
            lines.append(f"battery {node_id} {samples}")
    return "\n".join(lines) + "\n"


def _n(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))
