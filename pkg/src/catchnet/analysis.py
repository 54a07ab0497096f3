"""Planning and science toolkit: duty-cycle current and lifetime
arithmetic, and the cheap-vs-reference soil moisture calibration fit."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .fieldnode import DutyCycle, PowerProfile

DEFAULT_DERATING = 0.7  # usable-capacity planning factor


class FitError(ValueError):
    """Too few joined points or a degenerate regressor."""


@dataclass(frozen=True)
class LifetimePlan:
    capacity_mah: float
    avg_ma: float
    derating: float
    hours: float


@dataclass(frozen=True)
class CalibrationFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int


def average_current(profile: PowerProfile, duty: DutyCycle) -> float:
    """Exact duty-weighted average draw in mA.

    (awake*active + sleep*sleep) / (awake + sleep); the planning texts'
    1%-awake shortcut lands within a milliamp of this.
    """
    total = duty.awake_s + duty.sleep_s
    return (duty.awake_s * profile.active_ma + duty.sleep_s * profile.sleep_ma) / total


def battery_life(capacity_mah: float, avg_ma: float, derating: float = DEFAULT_DERATING) -> float:
    """Planning lifetime in hours: capacity / draw, derated."""
    if capacity_mah <= 0 or avg_ma <= 0:
        raise ValueError("capacity and current must be > 0")
    if not 0 < derating <= 1:
        raise ValueError("derating must be in (0, 1]")
    return capacity_mah / avg_ma * derating


def plan(capacity_mah: float, profile: PowerProfile, duty: DutyCycle,
         derating: float = DEFAULT_DERATING) -> LifetimePlan:
    avg = average_current(profile, duty)
    return LifetimePlan(capacity_mah, avg, derating, battery_life(capacity_mah, avg, derating))


def join_series(
    cheap: list[tuple[float, float]],
    reference: list[tuple[float, float]],
    tolerance_s: float,
) -> list[tuple[float, float]]:
    """Nearest-neighbor time join: for each reference point, the closest
    cheap point within the tolerance window.  Both inputs must be t-sorted."""
    joined = []
    xs = [t for t, _ in cheap]
    for t_ref, y in reference:
        idx = _nearest(xs, t_ref)
        if idx is None:
            continue
        if abs(xs[idx] - t_ref) <= tolerance_s:
            joined.append((cheap[idx][1], y))
    return joined


def _nearest(xs: list[float], t: float) -> int | None:
    if not xs:
        return None
    import bisect

    i = bisect.bisect_left(xs, t)
    if i == 0:
        return 0
    if i == len(xs):
        return len(xs) - 1
    return i if xs[i] - t < t - xs[i - 1] else i - 1


def fit_calibration(
    cheap: list[tuple[float, float]],
    reference: list[tuple[float, float]],
    tolerance_s: float | None = None,
) -> CalibrationFit:
    """Ordinary least squares of reference against cheap after a
    nearest-neighbor time join (default tolerance: half the cheap series'
    median sampling period)."""
    if tolerance_s is None:
        tolerance_s = _half_median_period(cheap)
    pairs = join_series(cheap, reference, tolerance_s)
    n = len(pairs)
    if n < 2:
        raise FitError(f"only {n} joined points; need at least 2")
    xs = [x for x, _ in pairs]
    ys = [y for _, y in pairs]
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    if sxx == 0:
        raise FitError("cheap series has zero variance")
    sxy = sum((x - mx) * (y - my) for x, y in pairs)
    slope = sxy / sxx
    intercept = my - slope * mx
    syy = sum((y - my) ** 2 for y in ys)
    if syy == 0:
        r2 = 1.0  # a constant target fit exactly by a flat line
    else:
        ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in pairs)
        r2 = 1.0 - ss_res / syy
    return CalibrationFit(slope, intercept, max(0.0, min(1.0, r2)), n)


def _half_median_period(series: list[tuple[float, float]]) -> float:
    gaps = sorted(b[0] - a[0] for a, b in zip(series, series[1:]))
    if not gaps:
        return math.inf
    return gaps[len(gaps) // 2] / 2.0
