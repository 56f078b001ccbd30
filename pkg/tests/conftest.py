"""Configuration for the pytest test suite."""

from __future__ import annotations

import os
from pathlib import Path
from typing import TYPE_CHECKING

import pytest

from railtree import enable_logger
from railtree.network import Arc, Demand, Network, Node, build_network
from railtree.utils import CONFIG_ENV_VAR

if TYPE_CHECKING:
    from collections.abc import Iterable


@pytest.fixture(autouse=True)
def tests_logs(request: pytest.FixtureRequest) -> None:
    # put logs in tests/logs
    log_path = Path("tests") / "logs"

    # tidy logs in subdirectories based on test module and class names
    module = request.module
    class_ = request.cls
    name = request.node.name + ".log"

    if module:
        log_path /= module.__name__.replace("tests.", "")
    if class_:
        log_path /= class_.__name__

    log_path.mkdir(parents=True, exist_ok=True)

    # append last part of the name and enable logger
    log_path /= name
    if log_path.exists():
        log_path.unlink()
    enable_logger(sink=str(log_path), level=os.environ.get("PYTEST_LOG_LEVEL", "TRACE"))


@pytest.fixture(autouse=True)
def isolated_config(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    """Point the configuration to an empty file, away from the user's one.

    Parameters:
        tmp_path: Pytest fixture providing a temporary directory.
        monkeypatch: Pytest fixture to patch the environment.

    Returns:
        The configuration file path.
    """
    config_file = tmp_path / "config.toml"
    config_file.write_text("")
    monkeypatch.setenv(CONFIG_ENV_VAR, str(config_file))
    return config_file


def make_network(
    arcs: Iterable[tuple],
    demands: Iterable[tuple] = (),
    nodes: int | None = None,
) -> Network:
    """Build a network from plain tuples.

    Parameters:
        arcs: `(source, target, cost[, capacity])` tuples.
        demands: `(origin, destination, volume[, shadow_price])` tuples.
        nodes: Number of stations, deduced from the arcs and demands by default.

    Returns:
        The network.
    """
    arcs = [Arc(*arc) for arc in arcs]
    demands = [Demand(*demand) for demand in demands]
    if nodes is None:
        ends = [end for arc in arcs for end in arc.key] + [end for demand in demands for end in demand.pair]
        nodes = max(ends) + 1
    return build_network([Node(node, chr(ord("A") + node)) for node in range(nodes)], arcs, demands)


@pytest.fixture
def line_network() -> Network:
    """Provide the line `1 -> 2 -> 3` with shipments from 1 and 2 to 3.

    Returns:
        A network.
    """
    return make_network([(1, 2, 2), (2, 3, 3)], [(1, 3, 5), (2, 3, 7)])


@pytest.fixture
def detour_network() -> Network:
    """Provide a network where going from 0 to 3 through 4 is a 5/3 relative detour.

    Returns:
        A network.
    """
    return make_network(
        [(0, 1, 3), (1, 2, 3), (2, 3, 4), (0, 4, 4), (4, 2, 6)],
        [(0, 3, 2)],
    )


@pytest.fixture
def diamond_network() -> Network:
    """Provide two equal-cost parallel routes from 0 to 3, the upper one with capacity 2.

    Returns:
        A network.
    """
    return make_network([(0, 1, 1, 2), (1, 3, 1), (0, 2, 1), (2, 3, 1)], [(0, 3, 4)])


@pytest.fixture
def bottleneck_network() -> Network:
    """Provide a single route whose first arc has no capacity.

    Returns:
        A network.
    """
    return make_network([(0, 1, 1, 0), (1, 2, 1)], [(0, 2, 5)])
