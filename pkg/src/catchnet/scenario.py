"""Scenario files: the whole deployment as data.

A scenario is a YAML document with named sections and a `format: 1`
header: environment (weather, soil, fence), nodes, links, store-and-forward
knobs, cloud knobs, a fault schedule and an operator command schedule.
Validation reports every problem it finds with a section[path] prefix.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import yaml

from .environment import GeoFence, SoilParams, Storm, WeatherScenario

FORMAT_VERSION = 1

NODE_KINDS = ("soil", "livestock")
FAULT_KINDS = (
    "radio_hang",
    "power_cycle",
    "water_ingress_dead",
    "protection_trip",
    "condensation",
    "corrosion",
    "outage",
    "restart",
)


class ScenarioError(ValueError):
    """Parse or validation failure; message lists every diagnostic."""

    def __init__(self, diagnostics: list[str]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(diagnostics))


@dataclass
class NodeSpec:
    node_id: str
    kind: str
    position: tuple[float, float]
    groups: list[str] = field(default_factory=list)
    packs: int = 3
    pack_mah: float = 7800.0
    protection_threshold_mah: float = 0.0
    trickle_ma: float = 0.0
    sleep_s: float = 300.0
    awake_s: float = 5.0
    active_ma: float = 130.0
    sleep_ma: float = 45.0
    noise_sigma: float | None = None  # None keeps per-kind defaults
    reference_moisture: bool = False
    register: bool = True
    gps_sigma_m: float = 5.0
    gps_fix_fail_prob: float = 0.0
    gps_fix_delay_min_s: float = 5.0
    gps_fix_delay_max_s: float = 30.0

    @property
    def period_s(self) -> float:
        return self.sleep_s + self.awake_s


@dataclass
class LinkSection:
    loss_prob: float = 0.0
    latency_s: float = 0.1
    outages: list[tuple[float, float]] = field(default_factory=list)


@dataclass
class FaultEntry:
    at: float
    fault: str
    node: str | None = None
    link: str | None = None
    component: str | None = None
    params: dict = field(default_factory=dict)


@dataclass
class CommandEntrySpec:
    at: float
    group: str | None = None
    node: str | None = None
    period_s: float | None = None
    power_cycle: bool = False


@dataclass
class Scenario:
    seed: int
    duration_s: float
    weather: WeatherScenario
    soil_params: SoilParams
    soil_theta0: float
    soil_temp0: float
    fence: GeoFence
    nodes: list[NodeSpec]
    links: dict[str, LinkSection]
    faults: list[FaultEntry]
    commands: list[CommandEntrySpec]
    retry_timeout_s: float = 60.0
    batch_limit: int = 64
    relay_capacity: int | None = 100_000
    gateway_capacity: int | None = None
    flush_interval_s: float = 30.0
    upload_interval_s: float = 300.0
    env_step_s: float = 60.0
    silence_threshold: float = 3.0
    min_period_s: float = 10.0
    drain: bool = True
    drain_timeout_s: float = 86_400.0
    time_compression: float = 60.0
    sha256: str = ""

    def node_ids(self) -> list[str]:
        return [n.node_id for n in self.nodes]


def load_scenario(path: str) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_scenario(text)


def parse_scenario(text: str) -> Scenario:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError([f"YAML parse error: {exc}"]) from exc
    if not isinstance(doc, dict):
        raise ScenarioError(["scenario must be a mapping of sections"])
    errors: list[str] = []

    if doc.get("format") != FORMAT_VERSION:
        errors.append(f"format: expected {FORMAT_VERSION}, got {doc.get('format')!r}")

    seed = _num(doc, "seed", errors, default=0)
    duration = _num(doc, "duration_s", errors, default=0)
    if duration is not None and duration <= 0:
        errors.append("duration_s: must be > 0")

    weather, soil_params, theta0, temp0, fence = _parse_environment(
        doc.get("environment", {}), errors
    )
    nodes = _parse_nodes(doc.get("nodes", []), fence, errors)
    links = _parse_links(doc.get("links", {}), errors)
    sf = doc.get("store_forward", {}) or {}
    cloud = doc.get("cloud", {}) or {}
    faults = _parse_faults(doc.get("faults", []) or [], nodes, links, duration or 0, errors)
    commands = _parse_commands(doc.get("commands", []) or [], nodes, duration or 0, errors)

    if errors:
        raise ScenarioError(errors)

    return Scenario(
        seed=int(seed),
        duration_s=float(duration),
        weather=weather,
        soil_params=soil_params,
        soil_theta0=theta0,
        soil_temp0=temp0,
        fence=fence,
        nodes=nodes,
        links=links,
        faults=faults,
        commands=commands,
        retry_timeout_s=float(sf.get("retry_timeout_s", 60.0)),
        batch_limit=int(sf.get("batch_limit", 64)),
        relay_capacity=_opt_int(sf.get("relay_capacity", 100_000)),
        gateway_capacity=_opt_int(sf.get("gateway_capacity")),
        flush_interval_s=float(sf.get("flush_interval_s", 30.0)),
        upload_interval_s=float(sf.get("upload_interval_s", 300.0)),
        env_step_s=float(doc.get("environment", {}).get("step_s", 60.0)),
        silence_threshold=float(cloud.get("silence_threshold", 3.0)),
        min_period_s=float(cloud.get("min_period_s", 10.0)),
        drain=bool(doc.get("drain", True)),
        drain_timeout_s=float(doc.get("drain_timeout_s", 86_400.0)),
        time_compression=float(doc.get("time_compression", 60.0)),
        sha256=hashlib.sha256(text.encode()).hexdigest(),
    )


def _num(doc: dict, key: str, errors: list[str], default=None):
    v = doc.get(key, default)
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        errors.append(f"{key}: expected a number, got {v!r}")
        return default
    return v


def _opt_int(v):
    return None if v is None else int(v)


def _parse_environment(env: dict, errors: list[str]):
    storms = []
    for i, s in enumerate(env.get("storms", []) or []):
        try:
            storms.append(Storm(float(s["start"]), float(s["end"]), float(s["intensity"])))
        except (KeyError, TypeError, ValueError) as exc:
            errors.append(f"environment.storms[{i}]: {exc}")
    temp = env.get("temp", {}) or {}
    hum = env.get("humidity", {}) or {}
    try:
        weather = WeatherScenario(
            storms=tuple(storms),
            temp_mean=float(temp.get("mean", 10.0)),
            temp_amplitude=float(temp.get("amplitude", 5.0)),
            temp_phase=float(temp.get("phase", 0.0)),
            humidity_mean=float(hum.get("mean", 80.0)),
            humidity_amplitude=float(hum.get("amplitude", 15.0)),
            irradiance_factor=float(env.get("irradiance_factor", 1.0)),
        )
    except ValueError as exc:
        errors.append(f"environment: {exc}")
        weather = WeatherScenario()

    soil = env.get("soil", {}) or {}
    try:
        soil_params = SoilParams(
            theta_r=float(soil.get("theta_r", 0.05)),
            theta_sat=float(soil.get("theta_sat", 0.45)),
            k_in=float(soil.get("k_in", 2.0e-6)),
            k_out=float(soil.get("k_out", 1.0e-5)),
            temp_lag_s=float(soil.get("temp_lag_s", 14_400.0)),
        )
    except ValueError as exc:
        errors.append(f"environment.soil: {exc}")
        soil_params = SoilParams()
    theta0 = float(soil.get("theta0", 0.25))
    temp0 = float(soil.get("temp0", 10.0))
    if not soil_params.theta_r <= theta0 <= soil_params.theta_sat:
        errors.append(f"environment.soil.theta0: {theta0} outside [theta_r, theta_sat]")
        theta0 = soil_params.theta_r

    fence_pts = env.get("fence") or [[53.0, -3.0], [53.01, -3.0], [53.01, -2.98], [53.0, -2.98]]
    try:
        fence = GeoFence([(float(a), float(b)) for a, b in fence_pts])
    except (TypeError, ValueError) as exc:
        errors.append(f"environment.fence: {exc}")
        fence = GeoFence([(53.0, -3.0), (53.01, -3.0), (53.01, -2.98), (53.0, -2.98)])
    return weather, soil_params, theta0, temp0, fence


def _parse_nodes(raw: list, fence: GeoFence, errors: list[str]) -> list[NodeSpec]:
    nodes: list[NodeSpec] = []
    seen: set[str] = set()
    for i, n in enumerate(raw or []):
        where = f"nodes[{i}]"
        if not isinstance(n, dict) or "id" not in n:
            errors.append(f"{where}: needs an 'id'")
            continue
        node_id = str(n["id"])
        if node_id in seen:
            errors.append(f"{where}: duplicate id {node_id!r}")
            continue
        seen.add(node_id)
        kind = n.get("kind", "soil")
        if kind not in NODE_KINDS:
            errors.append(f"{where}: unknown kind {kind!r}")
            continue
        pos = n.get("position")
        if not (isinstance(pos, (list, tuple)) and len(pos) == 2):
            errors.append(f"{where}: position must be [lat, lon]")
            continue
        position = (float(pos[0]), float(pos[1]))
        if kind == "livestock" and not fence.contains(position):
            errors.append(f"{where}: livestock position {position} outside the fence")
            continue
        gps = n.get("gps", {}) or {}
        defaults = {"packs": 3, "pack_mah": 7800.0} if kind == "soil" else {"packs": 1, "pack_mah": 10_000.0}
        nodes.append(
            NodeSpec(
                node_id=node_id,
                kind=kind,
                position=position,
                groups=[str(g) for g in n.get("groups", [])],
                packs=int(n.get("packs", defaults["packs"])),
                pack_mah=float(n.get("pack_mah", defaults["pack_mah"])),
                protection_threshold_mah=float(n.get("protection_threshold_mah", 0.0)),
                trickle_ma=float(n.get("trickle_ma", 0.0)),
                sleep_s=float(n.get("sleep_s", 300.0)),
                awake_s=float(n.get("awake_s", 5.0)),
                active_ma=float(n.get("active_ma", 130.0)),
                sleep_ma=float(n.get("sleep_ma", 45.0)),
                noise_sigma=None if n.get("noise_sigma") is None else float(n["noise_sigma"]),
                reference_moisture=bool(n.get("reference_moisture", False)),
                register=bool(n.get("register", True)),
                gps_sigma_m=float(gps.get("sigma_m", 5.0)),
                gps_fix_fail_prob=float(gps.get("fix_fail_prob", 0.0)),
                gps_fix_delay_min_s=float(gps.get("fix_delay_min_s", 5.0)),
                gps_fix_delay_max_s=float(gps.get("fix_delay_max_s", 30.0)),
            )
        )
    if not nodes and not errors:
        errors.append("nodes: at least one node required")
    return nodes


def _parse_links(raw: dict, errors: list[str]) -> dict[str, LinkSection]:
    out = {}
    for name in ("short", "long", "uplink"):
        sec = (raw or {}).get(name, {}) or {}
        outages = []
        for j, win in enumerate(sec.get("outages", []) or []):
            try:
                start, end = float(win["start"]), float(win["end"])
                if start >= end:
                    raise ValueError("start >= end")
                outages.append((start, end))
            except (KeyError, TypeError, ValueError) as exc:
                errors.append(f"links.{name}.outages[{j}]: {exc}")
        loss = float(sec.get("loss_prob", 0.0))
        if not 0.0 <= loss <= 1.0:
            errors.append(f"links.{name}.loss_prob: {loss} outside [0, 1]")
            loss = 0.0
        default_latency = {"short": 0.1, "long": 0.5, "uplink": 0.0}[name]
        out[name] = LinkSection(loss, float(sec.get("latency_s", default_latency)), outages)
    return out


def _parse_faults(
    raw: list, nodes: list[NodeSpec], links: dict, duration: float, errors: list[str]
) -> list[FaultEntry]:
    node_ids = {n.node_id for n in nodes}
    out = []
    for i, f in enumerate(raw):
        where = f"faults[{i}]"
        if not isinstance(f, dict) or "at" not in f or "fault" not in f:
            errors.append(f"{where}: needs 'at' and 'fault'")
            continue
        at = float(f["at"])
        kind = str(f["fault"])
        if kind not in FAULT_KINDS:
            errors.append(f"{where}: unknown fault {kind!r}")
            continue
        if not 0 <= at <= duration:
            errors.append(f"{where}: at={at} outside [0, duration]")
            continue
        node = f.get("node")
        link = f.get("link")
        component = f.get("component")
        if kind == "outage":
            if link not in links:
                errors.append(f"{where}: outage needs a known link, got {link!r}")
                continue
            until = f.get("until")
            if until is None or float(until) <= at:
                errors.append(f"{where}: outage needs until > at")
                continue
        elif kind == "restart":
            if component not in ("relay", "gateway"):
                errors.append(f"{where}: restart needs component relay|gateway")
                continue
        else:
            if node not in node_ids:
                errors.append(f"{where}: unknown node {node!r}")
                continue
        params = {k: v for k, v in f.items() if k not in ("at", "fault", "node", "link", "component")}
        out.append(FaultEntry(at, kind, node, link, component, params))
    return out


def _parse_commands(
    raw: list, nodes: list[NodeSpec], duration: float, errors: list[str]
) -> list[CommandEntrySpec]:
    node_ids = {n.node_id for n in nodes}
    groups = {g for n in nodes for g in n.groups}
    out = []
    for i, c in enumerate(raw):
        where = f"commands[{i}]"
        if not isinstance(c, dict) or "at" not in c:
            errors.append(f"{where}: needs 'at'")
            continue
        at = float(c["at"])
        if not 0 <= at <= duration:
            errors.append(f"{where}: at={at} outside [0, duration]")
            continue
        if c.get("power_cycle"):
            if c.get("node") not in node_ids:
                errors.append(f"{where}: power_cycle needs a known node")
                continue
            out.append(CommandEntrySpec(at, node=str(c["node"]), power_cycle=True))
        else:
            group = c.get("group")
            if group not in groups:
                errors.append(f"{where}: unknown group {group!r}")
                continue
            if "period_s" not in c:
                errors.append(f"{where}: group command needs period_s")
                continue
            out.append(CommandEntrySpec(at, group=str(group), period_s=float(c["period_s"])))
    return out
