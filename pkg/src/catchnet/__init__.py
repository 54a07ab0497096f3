"""Deterministic simulator and services for a duty-cycled environmental
sensor deployment: field nodes, a star radio network with one long-range
hop, durable store-and-forward relay and gateway, and a cloud core for
ingestion, fleet management and time-series query."""

__version__ = "0.1.0"
