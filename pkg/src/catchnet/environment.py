"""Synthetic ground truth for the field of study.

Rainfall, air conditions, a single-bucket soil column, surface flow and
fence-bounded sheep movement.  All functions are pure given (scenario, t,
rng state), which is what makes replays and the calibration experiment
reproducible.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace

M_PER_DEG_LAT = 111_320.0
DAY_S = 86_400.0


@dataclass(frozen=True)
class Storm:
    start: float
    end: float
    intensity: float  # mm/h

    def __post_init__(self) -> None:
        if self.start >= self.end:
            raise ValueError(f"storm interval ill-formed: [{self.start}, {self.end})")
        if self.intensity < 0:
            raise ValueError("storm intensity must be >= 0")


@dataclass(frozen=True)
class WeatherScenario:
    storms: tuple[Storm, ...] = ()
    temp_mean: float = 10.0
    temp_amplitude: float = 5.0
    temp_phase: float = 0.0
    humidity_mean: float = 80.0
    humidity_amplitude: float = 15.0
    irradiance_factor: float = 1.0  # solar multiplier while a storm is active

    def __post_init__(self) -> None:
        if not 0.0 <= self.irradiance_factor <= 1.0:
            raise ValueError("irradiance_factor must be in [0, 1]")


@dataclass(frozen=True)
class SoilParams:
    theta_r: float = 0.05  # residual moisture fraction
    theta_sat: float = 0.45  # saturation fraction
    k_in: float = 2.0e-6  # fraction per (mm/h * s)
    k_out: float = 1.0e-5  # drain rate, per second
    temp_lag_s: float = 14_400.0  # first-order lag of soil temp behind air

    def __post_init__(self) -> None:
        if not 0.0 <= self.theta_r <= self.theta_sat <= 1.0:
            raise ValueError("need 0 <= theta_r <= theta_sat <= 1")


@dataclass(frozen=True)
class SoilState:
    theta: float
    temp: float
    params: SoilParams = field(default_factory=SoilParams)

    def __post_init__(self) -> None:
        if not self.params.theta_r <= self.theta <= self.params.theta_sat:
            raise ValueError("theta outside [theta_r, theta_sat]")


def rainfall_at(w: WeatherScenario, t: float) -> float:
    """Total rain intensity at t: overlapping storms sum."""
    return sum(s.intensity for s in w.storms if s.start <= t < s.end)


def irradiance_at(w: WeatherScenario, t: float) -> float:
    """Solar multiplier: the storm factor while any storm is active, else 1."""
    if any(s.start <= t < s.end for s in w.storms):
        return w.irradiance_factor
    return 1.0


def air_conditions(w: WeatherScenario, t: float) -> tuple[float, float]:
    """(temperature degC, humidity %) on the shared diurnal sinusoid.

    humidity is clamped to [0, 100].
    """
    angle = 2.0 * math.pi * (t - w.temp_phase) / DAY_S
    temp = w.temp_mean + w.temp_amplitude * math.sin(angle)
    hum = w.humidity_mean + w.humidity_amplitude * math.sin(angle)
    return temp, min(100.0, max(0.0, hum))


def step_soil(s: SoilState, rain: float, air_temp: float, dt: float) -> SoilState:
    """Advance the bucket by dt seconds.

    theta' = clamp(theta + k_in*rain*dt - k_out*(theta - theta_r)*dt),
    soil temperature relaxes toward air temperature with a first-order lag.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    p = s.params
    theta = s.theta + p.k_in * rain * dt - p.k_out * (s.theta - p.theta_r) * dt
    theta = min(p.theta_sat, max(p.theta_r, theta))
    alpha = 1.0 - math.exp(-dt / p.temp_lag_s)
    temp = s.temp + (air_temp - s.temp) * alpha
    return replace(s, theta=theta, temp=temp)


def surface_flow(s: SoilState, rain: float) -> bool:
    """Overland flow occurs only on saturated ground while it is raining."""
    return s.theta >= s.params.theta_sat and rain > 0


# ---------------------------------------------------------------------------
# fence + sheep movement
# ---------------------------------------------------------------------------


class GeoFence:
    """Simple (non-self-intersecting) polygon of (lat, lon) vertices."""

    def __init__(self, vertices: list[tuple[float, float]]):
        if len(vertices) < 3:
            raise ValueError("fence needs at least 3 vertices")
        self.vertices = [(float(a), float(b)) for a, b in vertices]
        if _self_intersects(self.vertices):
            raise ValueError("fence polygon self-intersects")

    def contains(self, pos: tuple[float, float]) -> bool:
        # Ray casting on (lat, lon); boundary points count as inside.
        lat, lon = pos
        n = len(self.vertices)
        inside = False
        for i in range(n):
            a_lat, a_lon = self.vertices[i]
            b_lat, b_lon = self.vertices[(i + 1) % n]
            if _on_segment((lat, lon), (a_lat, a_lon), (b_lat, b_lon)):
                return True
            if (a_lon > lon) != (b_lon > lon):
                x = a_lat + (lon - a_lon) * (b_lat - a_lat) / (b_lon - a_lon)
                if lat < x:
                    inside = not inside
        return inside

    def centroid(self) -> tuple[float, float]:
        n = len(self.vertices)
        return (
            sum(v[0] for v in self.vertices) / n,
            sum(v[1] for v in self.vertices) / n,
        )


def _on_segment(p, a, b, eps: float = 1e-12) -> bool:
    cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
    if abs(cross) > eps:
        return False
    dot = (p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])
    sq = (b[0] - a[0]) ** 2 + (b[1] - a[1]) ** 2
    return -eps <= dot <= sq + eps


def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(v) < 1e-15 else (1 if v > 0 else -1)

    o1, o2 = orient(p1, p2, p3), orient(p1, p2, p4)
    o3, o4 = orient(p3, p4, p1), orient(p3, p4, p2)
    return o1 != o2 and o3 != o4


def _self_intersects(verts: list[tuple[float, float]]) -> bool:
    n = len(verts)
    edges = [(verts[i], verts[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue  # adjacent edges share a vertex
            if _segments_cross(*edges[i], *edges[j]):
                return True
    return False


@dataclass(frozen=True)
class SheepState:
    pos: tuple[float, float]  # (lat, lon)
    heading: float  # radians
    speed: float  # m/s


@dataclass(frozen=True)
class WalkParams:
    turn_sigma: float = 0.6  # heading noise per step, radians
    speed_mean: float = 0.05  # m/s
    speed_sigma: float = 0.05
    speed_scale: float = 1.0


def step_sheep(
    s: SheepState, fence: GeoFence, dt: float, rng: random.Random,
    params: WalkParams = WalkParams(),
) -> SheepState:
    """One step of a fence-reflected correlated random walk.

    The heading is perturbed by seeded noise and the speed resampled every
    step; a step that would exit the fence reverses heading, and if even the
    reversed step exits (a corner) the sheep stays put.  The result is always
    inside the fence.
    """
    if not fence.contains(s.pos):
        raise ValueError("sheep outside fence")
    heading = (s.heading + rng.gauss(0.0, params.turn_sigma)) % (2.0 * math.pi)
    speed = abs(rng.gauss(params.speed_mean, params.speed_sigma)) * params.speed_scale
    dist = speed * dt
    cand = _offset(s.pos, heading, dist)
    if fence.contains(cand):
        return SheepState(cand, heading, speed)
    heading = (heading + math.pi) % (2.0 * math.pi)
    cand = _offset(s.pos, heading, dist)
    if fence.contains(cand):
        return SheepState(cand, heading, speed)
    return SheepState(s.pos, heading, speed)


def _offset(pos: tuple[float, float], heading: float, dist_m: float) -> tuple[float, float]:
    lat, lon = pos
    dlat = dist_m * math.cos(heading) / M_PER_DEG_LAT
    dlon = dist_m * math.sin(heading) / (M_PER_DEG_LAT * math.cos(math.radians(lat)))
    return lat + dlat, lon + dlon
