"""Firmware state machine for soil and livestock nodes.

Covers duty cycling, replicated sensing with noise and fault effects,
energy accounting against a multi-pack battery bank, solar trickle
charging, GPS fixes with startup cost, and on-node behavior
summarization (only the label ever leaves the node).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .environment import M_PER_DEG_LAT

SOIL = "soil"
LIVESTOCK = "livestock"

# raw telemetry map: charge fraction -> millivolts
MV_EMPTY = 3000.0
MV_FULL = 4200.0

CHANNEL_KINDS = (
    "air_temp",
    "air_humidity",
    "soil_temp",
    "soil_moisture_cheap",
    "soil_moisture_ref",
    "surface_flow",
    "gps",
    "accel_status",
)

UNIT_BY_KIND = {
    "air_temp": "degC",
    "air_humidity": "pct",
    "soil_temp": "degC",
    "soil_moisture_cheap": "pct_vol",
    "soil_moisture_ref": "pct_vol",
    "surface_flow": "bool",
    "gps": "deg",
    "accel_status": "label",
}


class FaultError(ValueError):
    """Unknown fault kind or fault applied to an invalid target."""


@dataclass
class PowerProfile:
    active_ma: float = 130.0
    sleep_ma: float = 45.0
    board_active_ma: float = 90.0  # informational split of the totals
    board_sleep_ma: float = 30.0

    def __post_init__(self) -> None:
        if not self.active_ma > self.sleep_ma > 0:
            raise ValueError("need active_mA > sleep_mA > 0")


@dataclass
class DutyCycle:
    sleep_s: float = 300.0
    awake_s: float = 5.0

    def __post_init__(self) -> None:
        if self.sleep_s <= 0 or self.awake_s <= 0:
            raise ValueError("duty cycle durations must be > 0")

    @property
    def period_s(self) -> float:
        return self.sleep_s + self.awake_s

    def set_period(self, period_s: float) -> None:
        if period_s <= self.awake_s:
            raise ValueError(f"period {period_s} <= awake {self.awake_s}")
        self.sleep_s = period_s - self.awake_s


@dataclass
class Pack:
    capacity_mah: float
    charge_mah: float
    protection_threshold_mah: float = 0.0
    tripped: bool = False


class BatteryBank:
    """Series bank of packs: equal drain, and one tripped pack cuts the lot."""

    def __init__(self, packs: list[Pack], trickle_ma: float = 0.0):
        if not packs:
            raise ValueError("bank needs at least one pack")
        for p in packs:
            if not 0 <= p.charge_mah <= p.capacity_mah:
                raise ValueError("pack charge outside [0, capacity]")
        self.packs = packs
        self.trickle_ma = trickle_ma

    def available_mah(self) -> float:
        if any(p.tripped for p in self.packs):
            return 0.0
        return sum(p.charge_mah for p in self.packs)

    def total_charge_mah(self) -> float:
        """Physical charge regardless of protection state (for energy books)."""
        return sum(p.charge_mah for p in self.packs)

    def capacity_mah(self) -> float:
        return sum(p.capacity_mah for p in self.packs)

    def charge_fraction(self) -> float:
        cap = self.capacity_mah()
        return self.available_mah() / cap if cap > 0 else 0.0

    def battery_mv(self) -> int:
        return round(MV_EMPTY + self.charge_fraction() * (MV_FULL - MV_EMPTY))

    def drain(self, mah: float) -> float:
        """Draw mah split equally across packs, clamped at empty.

        A pack whose charge reaches a configured (non-zero) protection
        threshold trips, which interrupts the whole series bank.  Returns
        the charge actually removed, so energy bookkeeping stays exact even
        at the bottom of the bank.
        """
        if mah <= 0:
            return 0.0
        share = mah / len(self.packs)
        drawn = 0.0
        for p in self.packs:
            took = min(share, p.charge_mah)
            p.charge_mah -= took
            drawn += took
            if p.protection_threshold_mah > 0 and p.charge_mah <= p.protection_threshold_mah:
                p.tripped = True
        return drawn

    def store(self, mah: float) -> float:
        """Add charge split equally, capped at capacity; dead to tripped banks.

        Returns the charge actually stored.
        """
        if mah <= 0 or any(p.tripped for p in self.packs):
            return 0.0
        share = mah / len(self.packs)
        stored = 0.0
        for p in self.packs:
            put = min(share, p.capacity_mah - p.charge_mah)
            p.charge_mah += put
            stored += put
        return stored

    def trip(self) -> None:
        self.packs[0].tripped = True


def consume_energy(
    bank: BatteryBank, profile: PowerProfile, awake_s: float, sleep_s: float
) -> float:
    """Drain one duty interval's worth of charge; returns mAh actually drawn."""
    if awake_s < 0 or sleep_s < 0:
        raise ValueError("durations must be >= 0")
    mah = (awake_s * profile.active_ma + sleep_s * profile.sleep_ma) / 3600.0
    return bank.drain(mah)


def solar_harvest(bank: BatteryBank, irradiance_factor: float, dt: float) -> float:
    """Trickle-charge for dt seconds at the bank's panel rate; returns mAh stored."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    return bank.store(bank.trickle_ma * irradiance_factor * dt / 3600.0)


# ---------------------------------------------------------------------------
# sensing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelSpec:
    channel_id: str
    kind: str
    noise_sigma: float = 0.0
    grade: str = "cheap"  # cheap | reference
    mount_cm: float = 0.0  # height above (+) or depth below (-) the surface

    def __post_init__(self) -> None:
        if self.kind not in CHANNEL_KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if self.grade not in ("cheap", "reference"):
            raise ValueError(f"unknown grade {self.grade!r}")


# default per-kind noise, cheap grade
SIGMA_CHEAP = {
    "air_temp": 0.5,
    "air_humidity": 2.0,
    "soil_temp": 0.3,
    "soil_moisture_cheap": 1.5,
    "surface_flow": 0.0,
}
SIGMA_REF_MOISTURE = 0.2


def default_soil_complement(with_reference: bool = False) -> list[ChannelSpec]:
    """Replicated cheap sensors plus an optional reference moisture probe.

    3 air temp + 3 air humidity + 3 cheap soil moisture + 3 soil temp +
    1 surface flow = 13 channels; the reference probe makes 14.
    """
    chans: list[ChannelSpec] = []
    for i in range(1, 4):
        chans.append(ChannelSpec(f"air_temp_{i}", "air_temp", SIGMA_CHEAP["air_temp"], "cheap", 35.0))
        chans.append(ChannelSpec(f"air_hum_{i}", "air_humidity", SIGMA_CHEAP["air_humidity"], "cheap", 35.0))
    for i in range(1, 4):
        chans.append(ChannelSpec(f"soil_moist_{i}", "soil_moisture_cheap", SIGMA_CHEAP["soil_moisture_cheap"], "cheap", 0.0))
        chans.append(ChannelSpec(f"soil_temp_{i}", "soil_temp", SIGMA_CHEAP["soil_temp"], "cheap", -5.0))
    chans.append(ChannelSpec("surface_flow_1", "surface_flow", 0.0, "cheap", 0.0))
    if with_reference:
        chans.append(ChannelSpec("soil_moist_ref", "soil_moisture_ref", SIGMA_REF_MOISTURE, "reference", -10.0))
    return chans


def default_livestock_complement() -> list[ChannelSpec]:
    return [
        ChannelSpec("gps", "gps", 5.0, "cheap"),
        ChannelSpec("behavior", "accel_status", 0.0, "cheap"),
    ]


def validate_complement(chans: list[ChannelSpec]) -> None:
    ids = [c.channel_id for c in chans]
    if len(ids) != len(set(ids)):
        raise ValueError("replicate channels must carry distinct ids")


@dataclass
class FaultState:
    radio_hang: bool = False
    protection_trip: bool = False
    water_ingress_dead: bool = False
    condensation_fp_rate: float = 0.0
    # channel id -> (drift units/day, onset seconds)
    corrosion: dict[str, tuple[float, float]] = field(default_factory=dict)


@dataclass(frozen=True)
class Reading:
    channel: str
    value: float | str
    unit: str


@dataclass(frozen=True)
class Packet:
    node_id: str
    seq: int
    t: int
    kind: str
    readings: tuple[Reading, ...]
    battery_mv: int


@dataclass(frozen=True)
class EnvSnapshot:
    """Ground truth handed to a node at one wake instant."""

    air_temp: float = 0.0
    air_humidity: float = 0.0
    soil_theta_pct: float = 0.0
    soil_temp: float = 0.0
    flow: bool = False
    irradiance: float = 1.0
    sheep_pos: tuple[float, float] | None = None
    behavior: str | None = None  # motion-model ground truth label


# ---------------------------------------------------------------------------
# behavior classifier
# ---------------------------------------------------------------------------

BEHAVIOR_LABELS = ("lying", "standing", "walking")
_WALK_VARIANCE = 0.02  # threshold on |a| variance, g^2
_UPRIGHT_COS = math.cos(math.radians(45.0))


def classify_behavior(window: list[tuple[float, float, float]]) -> str:
    """Threshold classifier on magnitude variance and mean orientation."""
    if not window:
        raise ValueError("empty accelerometer window")
    mags = [math.sqrt(x * x + y * y + z * z) for x, y, z in window]
    mean_mag = sum(mags) / len(mags)
    var = sum((m - mean_mag) ** 2 for m in mags) / len(mags)
    if var > _WALK_VARIANCE:
        return "walking"
    mx = sum(s[0] for s in window) / len(window)
    my = sum(s[1] for s in window) / len(window)
    mz = sum(s[2] for s in window) / len(window)
    norm = math.sqrt(mx * mx + my * my + mz * mz)
    if norm == 0:
        return "lying"
    return "standing" if abs(mz) / norm >= _UPRIGHT_COS else "lying"


def make_accel_window(
    label: str, rng: random.Random, n: int = 32, jitter: float = 0.35
) -> list[tuple[float, float, float]]:
    """Synthesize a 3-axis window consistent with the motion model's label."""
    if label not in BEHAVIOR_LABELS:
        raise ValueError(f"unknown behavior label {label!r}")
    if label == "lying":
        base = (1.0, 0.0, 0.0)  # gravity across the collar
        spread = 0.0
    elif label == "standing":
        base = (0.0, 0.0, 1.0)
        spread = 0.0
    else:
        base = (0.0, 0.0, 1.0)
        spread = jitter
    out = []
    for _ in range(n):
        out.append(tuple(b + rng.gauss(0.0, spread) for b in base))
    return out


# ---------------------------------------------------------------------------
# node state machine
# ---------------------------------------------------------------------------


@dataclass
class GpsConfig:
    sigma_m: float = 5.0
    fix_fail_prob: float = 0.0
    fix_delay_min_s: float = 5.0  # warm start
    fix_delay_max_s: float = 30.0  # cold start


class NodeState:
    def __init__(
        self,
        node_id: str,
        kind: str,
        position: tuple[float, float],
        complement: list[ChannelSpec],
        power: PowerProfile,
        duty: DutyCycle,
        bank: BatteryBank,
        rng: random.Random,
        gps: GpsConfig | None = None,
    ):
        if kind not in (SOIL, LIVESTOCK):
            raise ValueError(f"unknown node kind {kind!r}")
        validate_complement(complement)
        self.node_id = node_id
        self.kind = kind
        self.position = position
        self.complement = complement
        self.power = power
        self.duty = duty
        self.bank = bank
        self.rng = rng
        self.gps = gps or GpsConfig()
        self.faults = FaultState()
        self.seq = 0
        self.dormant = False
        self.depleted_at: float | None = None
        self._depletion_estimate: float | None = None
        self.consumed_mah = 0.0
        self.harvested_mah = 0.0
        self.inbox: dict | None = None  # command caught during the listen window

    # -- sensing ------------------------------------------------------------

    def sample_sensors(self, snap: EnvSnapshot, t: float) -> list[Reading]:
        """One reading per configured channel replicate.

        value = truth + Gaussian(sigma) + corrosion drift since onset;
        the flow channel additionally fires condensation false positives.
        """
        readings: list[Reading] = []
        for ch in self.complement:
            if ch.kind == "gps":
                continue  # handled by gps_fix
            if ch.kind == "accel_status":
                label = snap.behavior or "standing"
                window = make_accel_window(label, self.rng)
                readings.append(Reading(ch.channel_id, classify_behavior(window), "label"))
                continue
            truth = self._truth(ch.kind, snap)
            if ch.kind == "surface_flow":
                value = 1.0 if truth else 0.0
                if value == 0.0 and self.faults.condensation_fp_rate > 0:
                    if self.rng.random() < self.faults.condensation_fp_rate:
                        value = 1.0
                readings.append(Reading(ch.channel_id, value, "bool"))
                continue
            value = truth
            if ch.noise_sigma > 0:
                value += self.rng.gauss(0.0, ch.noise_sigma)
            drift = self.faults.corrosion.get(ch.channel_id)
            if drift is not None:
                rate_per_day, onset = drift
                if t >= onset:
                    value += rate_per_day * (t - onset) / 86_400.0
            readings.append(Reading(ch.channel_id, value, UNIT_BY_KIND[ch.kind]))
        return readings

    @staticmethod
    def _truth(kind: str, snap: EnvSnapshot) -> float | bool:
        if kind == "air_temp":
            return snap.air_temp
        if kind == "air_humidity":
            return snap.air_humidity
        if kind == "soil_temp":
            return snap.soil_temp
        if kind in ("soil_moisture_cheap", "soil_moisture_ref"):
            return snap.soil_theta_pct
        if kind == "surface_flow":
            return snap.flow
        raise ValueError(kind)

    def gps_fix(self, truth: tuple[float, float]) -> tuple[tuple[float, float] | None, float]:
        """(point or None on fix failure, startup delay added to awake time)."""
        delay = self.rng.uniform(self.gps.fix_delay_min_s, self.gps.fix_delay_max_s)
        if self.gps.fix_fail_prob > 0 and self.rng.random() < self.gps.fix_fail_prob:
            return None, delay
        lat, lon = truth
        dlat = self.rng.gauss(0.0, self.gps.sigma_m) / M_PER_DEG_LAT
        dlon = self.rng.gauss(0.0, self.gps.sigma_m) / (
            M_PER_DEG_LAT * math.cos(math.radians(lat))
        )
        return (lat + dlat, lon + dlon), delay

    # -- wake cycle ----------------------------------------------------------

    def begin_wake(self, t: float, snap: EnvSnapshot) -> Packet | None:
        """Sense, form and (unless the radio is hung) emit one packet, then
        charge the battery books for the whole coming cycle.

        Returns the packet to transmit, or None when emission is suppressed
        or the node just went dormant.
        """
        if self.dormant:
            return None
        if self.faults.water_ingress_dead or self.bank.available_mah() <= 0:
            self.dormant = True
            if self.bank.available_mah() <= 0 and self.depleted_at is None:
                self.depleted_at = self._depletion_estimate if self._depletion_estimate is not None else t
            return None

        awake = self.duty.awake_s
        readings: list[Reading] = []
        if self.kind == LIVESTOCK and snap.sheep_pos is not None:
            point, delay = self.gps_fix(snap.sheep_pos)
            awake += delay
            if point is not None:
                self.position = point
                readings.append(Reading("gps_lat", point[0], "deg"))
                readings.append(Reading("gps_lon", point[1], "deg"))
            readings.extend(self.sample_sensors(snap, t))
        else:
            readings.extend(self.sample_sensors(snap, t))

        packet: Packet | None = None
        if not self.faults.radio_hang:
            self.seq += 1
            packet = Packet(
                node_id=self.node_id,
                seq=self.seq,
                t=int(t),
                kind=self.kind,
                readings=tuple(readings),
                battery_mv=self.bank.battery_mv(),
            )

        requested = (awake * self.power.active_ma + self.duty.sleep_s * self.power.sleep_ma) / 3600.0
        drawn = self.bank.drain(requested)
        self.consumed_mah += drawn
        if drawn < requested:
            # charge ran out partway through this cycle
            frac = drawn / requested if requested > 0 else 0.0
            self._depletion_estimate = t + frac * self.duty.period_s
        self.harvested_mah += solar_harvest(self.bank, snap.irradiance, self.duty.period_s)
        if self.bank.available_mah() > 0:
            self._depletion_estimate = None  # trickle charge saved the cycle
        return packet

    def finish_wake(self, t_started: float) -> float | None:
        """Apply any command caught during the listen window and return the
        next wake time, or None when the node has gone dormant."""
        if self.dormant or self.faults.water_ingress_dead:
            self.dormant = True
            return None
        cmd = self.inbox
        self.inbox = None
        if cmd is not None:
            if cmd["command"] == "set_period":
                self.duty.set_period(float(cmd["period_s"]))
            elif cmd["command"] == "power_cycle":
                self.faults.radio_hang = False
        next_wake = t_started + self.duty.awake_s + self.duty.sleep_s
        if self.bank.available_mah() <= 0:
            self.dormant = True
            if self.depleted_at is None:
                self.depleted_at = (
                    self._depletion_estimate if self._depletion_estimate is not None else t_started
                )
            return None
        return next_wake

    def wake_cycle(
        self, t: float, snap: EnvSnapshot, command: dict | None = None
    ) -> tuple[list[Packet], float | None]:
        """One full wake: emit, listen (command is whatever the relay sent
        into the window), sleep.  Returns (packets, next wake time)."""
        packet = self.begin_wake(t, snap)
        if command is not None:
            self.inbox = command
        next_wake = self.finish_wake(t)
        return ([packet] if packet is not None else [], next_wake)

    # -- faults ---------------------------------------------------------------

    def inject_fault(self, kind: str, t: float, **params) -> None:
        if kind == "radio_hang":
            self.faults.radio_hang = True
        elif kind == "power_cycle":
            # the field crew cycling the supply; also delivered as a command
            self.faults.radio_hang = False
        elif kind == "water_ingress_dead":
            self.faults.water_ingress_dead = True
        elif kind == "protection_trip":
            self.faults.protection_trip = True
            self.bank.trip()
        elif kind == "condensation":
            self.faults.condensation_fp_rate = float(params.get("rate", 0.05))
        elif kind == "corrosion":
            if self.kind != SOIL:
                raise FaultError("corrosion only applies to soil channels")
            channel = params.get("channel")
            known = {c.channel_id for c in self.complement}
            if channel not in known:
                raise FaultError(f"corrosion on unknown channel {channel!r}")
            rate = float(params.get("rate_per_day", 0.5))
            self.faults.corrosion[channel] = (rate, float(params.get("onset", t)))
        else:
            raise FaultError(f"unknown fault kind {kind!r}")
