"""Deterministic simulator for UAV search missions with a probabilistic world model
and a three-level planner (AOI selection, obstacle-aware navigation, coverage)."""

__version__ = "0.1.0"
