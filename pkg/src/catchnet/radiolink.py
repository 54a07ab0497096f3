"""Two-tier simulated radio: a short-range star plus one long-range hop.

Frames are lost independently per transmission (seeded Bernoulli) or
deterministically while an outage window is open; delivered frames arrive
at the destination through the sim kernel after the link's fixed latency.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any

from .simkernel import SimClock

SHORT = "short"
LONG = "long"


class TopologyError(ValueError):
    """Transmission attempted over a link that does not exist."""


@dataclass
class LinkSpec:
    link_id: str
    link_class: str  # short | long
    loss_prob: float = 0.0
    latency_s: float = 0.1
    outages: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.link_class not in (SHORT, LONG):
            raise ValueError(f"unknown link class {self.link_class!r}")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must be in [0, 1]")
        for start, end in self.outages:
            if start >= end:
                raise ValueError(f"outage window ill-formed: [{start}, {end})")

    def in_outage(self, t: float) -> bool:
        return any(start <= t < end for start, end in self.outages)

    def add_outage(self, start: float, end: float) -> None:
        if start >= end:
            raise ValueError(f"outage window ill-formed: [{start}, {end})")
        self.outages.append((float(start), float(end)))


@dataclass(frozen=True)
class Frame:
    src: str
    dst: str
    body: Any  # Packet | Ack | Command dict
    t_sent: float

    def __post_init__(self) -> None:
        if self.src == self.dst:
            raise ValueError("frame src == dst")


class RadioNetwork:
    """Strict star: every field node has one short link to the relay, the
    relay one long link to the gateway.  No node-to-node links exist."""

    def __init__(self, clock: SimClock, master_seed: int):
        self._clock = clock
        self._links: dict[tuple[str, str], LinkSpec] = {}
        self._rngs: dict[str, random.Random] = {}
        self._seed = master_seed
        self.loss_counts: dict[str, int] = {}
        self.sent_counts: dict[str, int] = {}

    def add_link(self, a: str, b: str, spec: LinkSpec) -> None:
        """Register a bidirectional link between endpoints a and b."""
        from .simkernel import fork_rng

        self._links[(a, b)] = spec
        self._links[(b, a)] = spec
        self._rngs[spec.link_id] = fork_rng(self._seed, f"link:{spec.link_id}")
        self.loss_counts.setdefault(spec.link_id, 0)
        self.sent_counts.setdefault(spec.link_id, 0)

    def link_between(self, src: str, dst: str) -> LinkSpec:
        spec = self._links.get((src, dst))
        if spec is None:
            raise TopologyError(f"no link {src} -> {dst}")
        return spec

    def transmit(self, frame: Frame, t: float) -> bool:
        """Send one frame; returns whether it will be delivered.

        Loss is decided now (outage window, then seeded Bernoulli); delivery
        is an event at t + latency targeted at the destination component.
        """
        spec = self.link_between(frame.src, frame.dst)
        self.sent_counts[spec.link_id] += 1
        if spec.in_outage(t):
            self.loss_counts[spec.link_id] += 1
            return False
        if spec.loss_prob > 0 and self._rngs[spec.link_id].random() < spec.loss_prob:
            self.loss_counts[spec.link_id] += 1
            return False
        self._clock.schedule(t + spec.latency_s, frame.dst, frame)
        return True

    def validate_star(self, node_ids: list[str], relay_id: str, gateway_id: str) -> None:
        """Every node exactly one short link to the relay; relay exactly one
        long link to the gateway; nothing else."""
        expected = set()
        for n in node_ids:
            spec = self._links.get((n, relay_id))
            if spec is None or spec.link_class != SHORT:
                raise TopologyError(f"node {n} lacks a short link to the relay")
            expected.add((n, relay_id))
            expected.add((relay_id, n))
        spec = self._links.get((relay_id, gateway_id))
        if spec is None or spec.link_class != LONG:
            raise TopologyError("relay lacks a long link to the gateway")
        expected.add((relay_id, gateway_id))
        expected.add((gateway_id, relay_id))
        extra = set(self._links) - expected
        if extra:
            raise TopologyError(f"non-star links present: {sorted(extra)}")
