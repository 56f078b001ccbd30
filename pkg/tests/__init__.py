"""Tests suite for `railtree`."""

from __future__ import annotations

from pathlib import Path

TESTS_DIR = Path(__file__).parent
TESTS_DATA_DIR = TESTS_DIR / "data"
INSTANCES_DIR = TESTS_DATA_DIR / "instances"

CORRIDOR_NETWORK = INSTANCES_DIR / "corridor.csv"
CORRIDOR_DEMANDS = INSTANCES_DIR / "corridor_demands.csv"
BOTTLENECK_NETWORK = INSTANCES_DIR / "bottleneck.csv"
BOTTLENECK_DEMANDS = INSTANCES_DIR / "bottleneck_demands.csv"
