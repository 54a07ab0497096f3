"""Scenario execution: builds the deployment, drives it on the sim clock,
and persists every durable artifact (queue journals, cloud journal, trace
log) under one store directory.

The same Deployment also runs against wall clock (optionally compressed)
to feed a live-served cloud for console demos.
"""

from __future__ import annotations

import json
import os
import threading
import time as _time

from .cloudcore import CloudConfig, CloudCore, NodeDescriptor
from .environment import (
    SheepState,
    SoilState,
    WalkParams,
    air_conditions,
    irradiance_at,
    rainfall_at,
    step_sheep,
    step_soil,
    surface_flow,
)
from .fieldnode import (
    BatteryBank,
    ChannelSpec,
    DutyCycle,
    EnvSnapshot,
    GpsConfig,
    NodeState,
    Pack,
    PowerProfile,
    SIGMA_CHEAP,
    default_livestock_complement,
    default_soil_complement,
)
from .radiolink import Frame, LinkSpec, RadioNetwork
from .scenario import Scenario
from .simkernel import SimClock, fork_rng
from .storeforward import (
    Ack,
    CommandEntry,
    GatewayStore,
    QueueConfig,
    RelayStore,
    _Journal,
)
from .fieldnode import Packet

RELAY = "relay"
GATEWAY = "gateway"

WALK_SPEED_WALKING = 0.08  # m/s: motion-model boundary between idle and walking


def complement_for(spec) -> list[ChannelSpec]:
    if spec.kind == "livestock":
        chans = default_livestock_complement()
    else:
        chans = default_soil_complement(with_reference=spec.reference_moisture)
    if spec.noise_sigma is not None:
        chans = [
            ChannelSpec(c.channel_id, c.kind, spec.noise_sigma if c.kind != "surface_flow" else 0.0,
                        c.grade, c.mount_cm)
            for c in chans
        ]
    return chans


def descriptor_for(spec) -> NodeDescriptor:
    return NodeDescriptor(
        node_id=spec.node_id,
        kind=spec.kind,
        position=spec.position,
        sensing_attributes=[
            {
                "channel_id": c.channel_id,
                "kind": c.kind,
                "grade": c.grade,
                "noise_sigma": c.noise_sigma,
                "mount_cm": c.mount_cm,
            }
            for c in complement_for(spec)
        ],
        groups=set(spec.groups),
        registered_t=0.0,
        period_s=spec.period_s,
    )


class Deployment:
    def __init__(self, scenario: Scenario, store_dir: str, seed: int | None = None):
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.store_dir = store_dir
        os.makedirs(store_dir, exist_ok=True)
        if os.path.exists(os.path.join(store_dir, "cloud.log")):
            # appending a second run would corrupt the journals' accounting
            raise ValueError(
                f"store directory {store_dir!r} already holds a run; use a fresh one"
            )

        self.clock = SimClock()
        self.trace = _Journal(os.path.join(store_dir, "trace.log"))
        self._write_run_meta()

        # environment ground truth
        self.weather = scenario.weather
        self.soil = SoilState(scenario.soil_theta0, scenario.soil_temp0, scenario.soil_params)
        self._last_env_t = 0.0
        self.fence = scenario.fence
        self.sheep: dict[str, SheepState] = {}
        self.behavior: dict[str, str] = {}
        self._sheep_rng = {}
        self._last_sheep_t: dict[str, float] = {}

        # components
        self.cloud = CloudCore(
            CloudConfig(scenario.silence_threshold, scenario.min_period_s),
            journal_path=os.path.join(store_dir, "cloud.log"),
            clock=lambda: self.clock.now,
        )
        relay_cfg = QueueConfig(scenario.retry_timeout_s, scenario.batch_limit, scenario.relay_capacity)
        gateway_cfg = QueueConfig(scenario.retry_timeout_s, scenario.batch_limit, scenario.gateway_capacity)
        self._relay_cfg, self._gateway_cfg = relay_cfg, gateway_cfg
        self._relay_path = os.path.join(store_dir, "relay.log")
        self._gateway_path = os.path.join(store_dir, "gateway.log")
        self.relay = RelayStore(relay_cfg, self._relay_path,
                                on_command_delivered=self.cloud.mark_command_delivered)
        self.gateway = GatewayStore(gateway_cfg, self._gateway_path)
        self.cloud.command_outbox = self._stage_to_relay

        self.net = RadioNetwork(self.clock, self.seed)
        self.links_by_class: dict[str, list[LinkSpec]] = {"short": [], "long": []}
        self.uplink = LinkSpec("uplink", "long",
                               scenario.links["uplink"].loss_prob, 0.0,
                               list(scenario.links["uplink"].outages))
        self._uplink_rng = fork_rng(self.seed, "link:uplink")
        self._uplink_stats = {"ok": 0, "down": 0, "lost_up": 0, "lost_ack": 0}

        self.nodes: dict[str, NodeState] = {}
        self._build_nodes()
        self.net.validate_star(sorted(self.nodes), RELAY, GATEWAY)

        self._register_handlers()
        self._schedule_initial_events()

    # -- construction -----------------------------------------------------------

    def _write_run_meta(self) -> None:
        meta = {
            "scenario_sha256": self.scenario.sha256,
            "seed": self.seed,
            "duration_s": self.scenario.duration_s,
            "silence_threshold": self.scenario.silence_threshold,
            "flush_interval_s": self.scenario.flush_interval_s,
            "upload_interval_s": self.scenario.upload_interval_s,
        }
        with open(os.path.join(self.store_dir, "run.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)
            fh.write("\n")

    def _build_nodes(self) -> None:
        short = self.scenario.links["short"]
        long_ = self.scenario.links["long"]
        for spec in self.scenario.nodes:
            bank = BatteryBank(
                [Pack(spec.pack_mah, spec.pack_mah, spec.protection_threshold_mah)
                 for _ in range(spec.packs)],
                trickle_ma=spec.trickle_ma,
            )
            node = NodeState(
                spec.node_id,
                spec.kind,
                spec.position,
                complement_for(spec),
                PowerProfile(spec.active_ma, spec.sleep_ma),
                DutyCycle(sleep_s=spec.sleep_s, awake_s=spec.awake_s),
                bank,
                fork_rng(self.seed, f"node:{spec.node_id}"),
                gps=GpsConfig(spec.gps_sigma_m, spec.gps_fix_fail_prob,
                              spec.gps_fix_delay_min_s, spec.gps_fix_delay_max_s),
            )
            self.nodes[spec.node_id] = node
            link = LinkSpec(f"short:{spec.node_id}", "short", short.loss_prob,
                            short.latency_s, list(short.outages))
            self.net.add_link(spec.node_id, RELAY, link)
            self.links_by_class["short"].append(link)
            if spec.kind == "livestock":
                self.sheep[spec.node_id] = SheepState(spec.position, 0.0, 0.0)
                self.behavior[spec.node_id] = "standing"
                self._sheep_rng[spec.node_id] = fork_rng(self.seed, f"sheep:{spec.node_id}")
                self._last_sheep_t[spec.node_id] = 0.0
            if spec.register:
                self.cloud.register_node(descriptor_for(spec))
        long_link = LinkSpec("long", "long", long_.loss_prob, long_.latency_s, list(long_.outages))
        self.net.add_link(RELAY, GATEWAY, long_link)
        self.links_by_class["long"].append(long_link)

    def _register_handlers(self) -> None:
        for node_id in self.nodes:
            self.clock.register(f"wake:{node_id}", self._make_wake_handler(node_id))
            self.clock.register(f"wakeend:{node_id}", self._make_wakeend_handler(node_id))
            self.clock.register(node_id, self._make_node_frame_handler(node_id))
        self.clock.register(RELAY, self._on_relay_frame)
        self.clock.register(GATEWAY, self._on_gateway_frame)
        self.clock.register("relay.flush", self._on_flush)
        self.clock.register("gateway.upload", self._on_upload)
        self.clock.register("env", self._on_env_step)
        self.clock.register("fault", self._on_fault)
        self.clock.register("command", self._on_command)

    def _schedule_initial_events(self) -> None:
        for i, node_id in enumerate(sorted(self.nodes)):
            self.clock.schedule(float(i), f"wake:{node_id}", None)
        self.clock.schedule(self.scenario.flush_interval_s, "relay.flush", None)
        self.clock.schedule(self.scenario.upload_interval_s, "gateway.upload", None)
        self.clock.schedule(self.scenario.env_step_s, "env", None)
        for f in self.scenario.faults:
            self.clock.schedule(f.at, "fault", f)
        for c in self.scenario.commands:
            self.clock.schedule(c.at, "command", c)

    def _stage_to_relay(self, node_id: str, period_s: float | None, issued_t: float) -> None:
        command = "set_period" if period_s is not None else "power_cycle"
        self.relay.stage_command(CommandEntry(node_id, command, period_s, issued_t))

    # -- environment ----------------------------------------------------------------

    def _snapshot(self, t: float, node: NodeState) -> EnvSnapshot:
        air_temp, air_hum = air_conditions(self.weather, t)
        rain = rainfall_at(self.weather, t)
        sheep_pos = None
        behavior = None
        if node.kind == "livestock":
            sheep_pos, behavior = self._advance_sheep(node.node_id, t)
        return EnvSnapshot(
            air_temp=air_temp,
            air_humidity=air_hum,
            soil_theta_pct=self.soil.theta * 100.0,
            soil_temp=self.soil.temp,
            flow=surface_flow(self.soil, rain),
            irradiance=irradiance_at(self.weather, t),
            sheep_pos=sheep_pos,
            behavior=behavior,
        )

    def _advance_sheep(self, node_id: str, t: float) -> tuple[tuple[float, float], str]:
        dt = t - self._last_sheep_t[node_id]
        rng = self._sheep_rng[node_id]
        state = self.sheep[node_id]
        if dt > 0:
            state = step_sheep(state, self.fence, dt, rng, WalkParams())
            self.sheep[node_id] = state
            self._last_sheep_t[node_id] = t
            if state.speed >= WALK_SPEED_WALKING:
                self.behavior[node_id] = "walking"
            elif self.behavior[node_id] == "walking" or rng.random() < 0.3:
                self.behavior[node_id] = rng.choice(("standing", "lying"))
        return state.pos, self.behavior[node_id]

    def _on_env_step(self, t: float, _payload) -> None:
        dt = t - self._last_env_t
        if dt > 0:
            air_temp, _ = air_conditions(self.weather, t)
            self.soil = step_soil(self.soil, rainfall_at(self.weather, t), air_temp, dt)
            self._last_env_t = t
        nxt = t + self.scenario.env_step_s
        if nxt <= self._horizon():
            self.clock.schedule(nxt, "env", None)

    # -- node events -----------------------------------------------------------------

    def _make_wake_handler(self, node_id: str):
        def on_wake(t: float, _payload) -> None:
            if t >= self.scenario.duration_s:
                return  # emission horizon passed (drain phase)
            node = self.nodes[node_id]
            if node.dormant:
                return
            snap = self._snapshot(t, node)
            packet = node.begin_wake(t, snap)
            mah = node.bank.total_charge_mah()
            if node.dormant:
                self.trace.append({"ev": "dormant", "node": node_id, "t": t,
                                   "depleted_at": node.depleted_at})
                return
            if packet is not None:
                self.trace.append({"ev": "emit", "node": node_id, "seq": packet.seq,
                                   "t": packet.t, "mah": round(mah, 6)})
                ok = self.net.transmit(Frame(node_id, RELAY, packet, t), t)
                if not ok:
                    self.trace.append({"ev": "shortloss", "node": node_id,
                                       "seq": packet.seq, "t": packet.t})
            else:
                self.trace.append({"ev": "suppressed", "node": node_id, "t": t,
                                   "mah": round(mah, 6)})
            # the relay broadcasts any staged command into the listen window,
            # which is how a transmit-hung node can still be power-cycled
            cmd = self.relay.pending_command(node_id)
            if cmd is not None:
                ok = self.net.transmit(Frame(RELAY, node_id, cmd.payload(), t), t)
                if ok:
                    self.relay.mark_command_delivered(node_id)
            self.clock.schedule(t + node.duty.awake_s, f"wakeend:{node_id}", t)

        return on_wake

    def _make_wakeend_handler(self, node_id: str):
        def on_wakeend(t: float, started: float) -> None:
            node = self.nodes[node_id]
            next_wake = node.finish_wake(started)
            if next_wake is None:
                if node.dormant:
                    self.trace.append({"ev": "dormant", "node": node_id, "t": t,
                                       "depleted_at": node.depleted_at})
                return
            self.clock.schedule(next_wake, f"wake:{node_id}", None)

        return on_wakeend

    def _make_node_frame_handler(self, node_id: str):
        def on_frame(t: float, frame: Frame) -> None:
            if isinstance(frame.body, dict) and "command" in frame.body:
                self.nodes[node_id].inbox = frame.body

        return on_frame

    # -- relay / gateway / uplink ----------------------------------------------------------

    def _on_relay_frame(self, t: float, frame: Frame) -> None:
        if isinstance(frame.body, Packet):
            self.relay.ingest(frame.body, t)
        elif isinstance(frame.body, Ack):
            self.relay.handle_ack(frame.body)

    def _on_flush(self, t: float, _payload) -> None:
        for entry in self.relay.flush(t):
            self.net.transmit(Frame(RELAY, GATEWAY, entry.packet, t), t)
        nxt = t + self.scenario.flush_interval_s
        if nxt <= self._horizon():
            self.clock.schedule(nxt, "relay.flush", None)

    def _on_gateway_frame(self, t: float, frame: Frame) -> None:
        if isinstance(frame.body, Packet):
            ack = self.gateway.ingest(frame.body, t)
            self.net.transmit(Frame(GATEWAY, RELAY, ack, t), t)

    def _on_upload(self, t: float, _payload) -> None:
        available = not self.uplink.in_outage(t)
        batch = self.gateway.upload_batch(t, available)
        if not available:
            self._uplink_stats["down"] += 1
        elif batch:
            if self.uplink.loss_prob > 0 and self._uplink_rng.random() < self.uplink.loss_prob:
                self._uplink_stats["lost_up"] += 1  # batch never reached the cloud
            else:
                acked = self.cloud.ingest_batch(batch)
                if self.uplink.loss_prob > 0 and self._uplink_rng.random() < self.uplink.loss_prob:
                    self._uplink_stats["lost_ack"] += 1  # response lost; resend later
                else:
                    self.gateway.handle_cloud_ack(acked)
                    self._uplink_stats["ok"] += 1
        nxt = t + self.scenario.upload_interval_s
        if nxt <= self._horizon():
            self.clock.schedule(nxt, "gateway.upload", None)

    # -- faults & commands -------------------------------------------------------------------

    def _on_fault(self, t: float, f) -> None:
        if f.fault == "outage":
            until = float(f.params["until"])
            if f.link == "uplink":
                self.uplink.add_outage(t, until)
            else:
                for spec in self.links_by_class[f.link]:
                    spec.add_outage(t, until)
        elif f.fault == "restart":
            self._restart(f.component)
        else:
            self.nodes[f.node].inject_fault(f.fault, t, **f.params)

    def _restart(self, component: str) -> None:
        """Kill the component and rebuild it purely from its journal."""
        if component == RELAY:
            self.relay.close()
            self.relay = RelayStore.from_log(
                self._relay_cfg, self._relay_path,
                on_command_delivered=self.cloud.mark_command_delivered,
            )
        elif component == GATEWAY:
            self.gateway.close()
            self.gateway = GatewayStore.from_log(self._gateway_cfg, self._gateway_path)

    def _on_command(self, t: float, c) -> None:
        if c.power_cycle:
            self.cloud.stage_power_cycle(c.node, issued_t=t)
        else:
            self.cloud.set_group_rate(c.group, c.period_s, issued_t=t)

    # -- main loop -------------------------------------------------------------------------

    def _horizon(self) -> float:
        extra = self.scenario.drain_timeout_s if self.scenario.drain else 0.0
        return self.scenario.duration_s + extra

    def _drained(self) -> bool:
        return not self.relay.unresolved and self.gateway.unacked_count() == 0

    def run(self) -> None:
        self.clock.run_until(self.scenario.duration_s)
        if self.scenario.drain:
            horizon = self._horizon()
            step = max(self.scenario.upload_interval_s, self.scenario.flush_interval_s)
            while self.clock.now < horizon and not self._drained():
                self.clock.run_until(min(self.clock.now + step, horizon))
        self.trace.append({
            "ev": "txsummary",
            "t": self.clock.now,
            "links": {
                lid: {"sent": self.net.sent_counts[lid], "lost": self.net.loss_counts[lid]}
                for lid in sorted(self.net.sent_counts)
            },
            "uplink": dict(self._uplink_stats),
        })
        self.close()

    def close(self) -> None:
        self.trace.close()
        self.relay.close()
        self.gateway.close()
        self.cloud.close()

    # -- live (wall-clock) mode ------------------------------------------------------------

    def run_realtime(self, compression: float, stop: threading.Event,
                     inject_queue=None) -> None:
        """Advance sim time against the wall clock, compressed by the given
        factor; used by `serve` to feed a live cloud for the console."""
        sim_step = 1.0 * max(compression, 1.0)
        while not stop.is_set() and self.clock.now < self.scenario.duration_s:
            if inject_queue is not None:
                while not inject_queue.empty():
                    item = inject_queue.get_nowait()
                    self.clock.schedule(max(item.at, self.clock.now), "fault", item)
            self.clock.run_until(min(self.clock.now + sim_step, self.scenario.duration_s))
            _time.sleep(1.0)
        self.trace.append({
            "ev": "txsummary",
            "t": self.clock.now,
            "links": {
                lid: {"sent": self.net.sent_counts[lid], "lost": self.net.loss_counts[lid]}
                for lid in sorted(self.net.sent_counts)
            },
            "uplink": dict(self._uplink_stats),
        })
