"""Tests for the `instance` module."""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import networkx as nx
import pytest

from railtree.instance import InstanceError, dump_instance, format_number, load_instance, random_instance
from railtree.network import Arc, Demand, Node, build_network
from tests import CORRIDOR_DEMANDS, CORRIDOR_NETWORK, INSTANCES_DIR

if TYPE_CHECKING:
    from pathlib import Path


def test_load_corridor() -> None:
    """Load stations by label, with blank capacities meaning unlimited links."""
    network, demands = load_instance(CORRIDOR_NETWORK, CORRIDOR_DEMANDS)
    assert network.node_count == 5
    assert len(network.arcs) == 8
    assert len(demands) == 4
    assert network.node_id("Jinan") == 2
    assert network.arc(0, 1).capacity == 20
    assert math.isinf(network.arc(network.node_id("Xuzhou"), 0).capacity)
    assert network.demand(0, 2).volume == 5
    assert network.demand(0, 2).shadow_price is None


def test_unknown_station_in_demands() -> None:
    """Name the unknown station, the file, the line and the field."""
    with pytest.raises(InstanceError) as error:
        load_instance(CORRIDOR_NETWORK, INSTANCES_DIR / "unknown_station_demands.csv")
    assert error.value.line == 3
    assert error.value.field == "destination"
    assert "unknown node 'Shanghai'" in str(error.value)
    assert "unknown_station_demands.csv:3: destination:" in str(error.value)


def test_malformed_volume() -> None:
    """Reject volumes that are not numbers."""
    with pytest.raises(InstanceError, match="not a number") as error:
        load_instance(CORRIDOR_NETWORK, INSTANCES_DIR / "bad_volume_demands.csv")
    assert error.value.line == 1
    assert error.value.field == "volume"


def test_invalid_network_is_reported_as_instance_error() -> None:
    """Wrap network validation errors."""
    with pytest.raises(InstanceError, match="duplicate arc 0->1"):
        load_instance(INSTANCES_DIR / "duplicate_arc.csv", INSTANCES_DIR / "no_demands.csv")


def test_missing_file(tmp_path: Path) -> None:
    """Report files that cannot be read.

    Parameters:
        tmp_path: Pytest fixture providing a temporary directory.
    """
    with pytest.raises(InstanceError, match="cannot read file"):
        load_instance(tmp_path / "missing.csv", CORRIDOR_DEMANDS)


@pytest.mark.parametrize(
    ("content", "message"),
    [
        ("id,label\n0,A\n", "expected a NODES section marker"),
        ("NODES\nid,name\n0,A\n", "expected header"),
        ("ARCS\nfrom,to,cost,capacity\n", "must follow the NODES section"),
        ("NODES\nid,label\n0,A\n1,A\n", "duplicate node 'A'"),
        ("NODES\nid,label\n0,A\n1,B\nARCS\nfrom,to,cost,capacity\nA,B\n", "expected 3 or 4 fields"),
        ("NODES\nid,label\n0,A\n1,B\nARCS\nfrom,to,cost,capacity\nA,C,1,\n", "unknown node 'C'"),
        ("NODES\nid,label\n0,A\n1,B\nARCS\nfrom,to,cost,capacity\nA,B,,\n", "cost: missing value"),
        ("NODES\nid,label\n0,A\n1,B\nARCS\nfrom,to,cost,capacity\nA,B,inf,\n", "cost: not a finite number: 'inf'"),
        ("NODES\nid,label\n0,A\n1,B\nARCS\nfrom,to,cost,capacity\nA,B,-Infinity,4\n", "cost: not a finite number"),
        ("NODES\nid,label\n0,A\n1,B\nARCS\n", "missing header row"),
        ("# nothing\n", "no NODES section"),
    ],
)
def test_malformed_network_files(tmp_path: Path, content: str, message: str) -> None:
    """Reject malformed network files.

    Parameters:
        tmp_path: Pytest fixture providing a temporary directory.
        content: The network file contents.
        message: Part of the expected error message.
    """
    network_file = tmp_path / "network.csv"
    network_file.write_text(content)
    demands_file = tmp_path / "demands.csv"
    demands_file.write_text("")
    with pytest.raises(InstanceError, match=message):
        load_instance(network_file, demands_file)


def test_comments_blank_lines_and_unlabeled_stations(tmp_path: Path) -> None:
    """Skip comments and blank lines, and reference unlabeled stations by id.

    Parameters:
        tmp_path: Pytest fixture providing a temporary directory.
    """
    network_file = tmp_path / "network.csv"
    network_file.write_text("# stations\nNODES\nid,label\n0,\n\n1,\nARCS\nfrom,to,cost,capacity\n0,1,2.5,inf\n")
    demands_file = tmp_path / "demands.csv"
    demands_file.write_text("0,1,3,12.5\n")
    network, demands = load_instance(network_file, demands_file)
    assert network.label(1) == "1"
    assert network.nodes[1].label == ""
    assert network.arc(0, 1).cost == 2.5
    assert math.isinf(network.arc(0, 1).capacity)
    assert demands == (Demand(0, 1, 3, 12.5),)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_dump_then_load_is_the_identity(tmp_path: Path, seed: int) -> None:
    """Reload the very same instance.

    Parameters:
        tmp_path: Pytest fixture providing a temporary directory.
        seed: The instance seed.
    """
    network = random_instance(10, 25, 15, seed=seed, capacity=12)
    dump_instance(network, tmp_path / "network.csv", tmp_path / "demands.csv")
    reloaded, _ = load_instance(tmp_path / "network.csv", tmp_path / "demands.csv")
    assert reloaded == network


def test_dump_then_load_keeps_unlabeled_stations(tmp_path: Path) -> None:
    """Reload stations without a label as stations without a label.

    Parameters:
        tmp_path: Pytest fixture providing a temporary directory.
    """
    network = build_network([Node(0), Node(1), Node(2, "C")], [Arc(0, 1, 2), Arc(1, 2, 3, 9)], [Demand(0, 2, 4)])
    dump_instance(network, tmp_path / "network.csv", tmp_path / "demands.csv")
    assert "0,1,2,\n" in (tmp_path / "network.csv").read_text()
    reloaded, _ = load_instance(tmp_path / "network.csv", tmp_path / "demands.csv")
    assert reloaded == network
    assert [node.label for node in reloaded.nodes] == ["", "", "C"]


def test_dump_then_load_keeps_fractions_and_prices(tmp_path: Path) -> None:
    """Keep non-integral numbers, unlimited capacities, labels with commas and shadow prices.

    Parameters:
        tmp_path: Pytest fixture providing a temporary directory.
    """
    network = build_network(
        [Node(0, "Beijing, South"), Node(1, "Tianjin")],
        [Arc(0, 1, 0.1 + 0.2), Arc(1, 0, 3, 7.5)],
        [Demand(0, 1, 2.25, 40), Demand(1, 0, 1)],
    )
    dump_instance(network, tmp_path / "network.csv", tmp_path / "demands.csv")
    reloaded, _ = load_instance(tmp_path / "network.csv", tmp_path / "demands.csv")
    assert reloaded == network


@pytest.mark.parametrize(
    ("value", "expected"),
    [
        (None, ""),
        (math.inf, ""),
        (3.0, "3"),
        (0, "0"),
        (2.5, "2.5"),
        (0.1 + 0.2, "0.30000000000000004"),
    ],
)
def test_format_number(value: float | None, expected: str) -> None:
    """Render numbers compactly and losslessly.

    Parameters:
        value: The number.
        expected: The expected text.
    """
    assert format_number(value) == expected


def test_random_instance_shape() -> None:
    """Generate a strongly connected network with the requested counts."""
    network = random_instance(20, 50, 30, seed=8, capacity=5)
    assert network.node_count == 20
    assert len(network.arcs) == 50
    assert len(network.demands) == 30
    assert nx.is_strongly_connected(network.graph)
    assert all(arc.capacity == 5 for arc in network.arcs)
    assert network.label(3) == "N3"
    assert random_instance(20, 50, 30, seed=8, capacity=5) == network


@pytest.mark.parametrize(
    ("nodes", "arcs", "demands"),
    [
        (1, 1, 0),
        (4, 3, 1),
        (4, 13, 1),
        (4, 6, 13),
    ],
)
def test_random_instance_rejects_impossible_counts(nodes: int, arcs: int, demands: int) -> None:
    """Reject counts no network can satisfy.

    Parameters:
        nodes: Number of stations.
        arcs: Number of arcs.
        demands: Number of shipments.
    """
    with pytest.raises(ValueError, match="must be between|at least 2"):
        random_instance(nodes, arcs, demands)



def test_unlabeled_stations_with_sparse_ids(tmp_path: Path) -> None:
    """Name unlabeled stations after their file id when it differs from their index.

    Parameters:
        tmp_path: Pytest fixture providing a temporary directory.
    """
    network_file = tmp_path / "network.csv"
    network_file.write_text("NODES\nid,label\n7,\n1,\nARCS\nfrom,to,cost,capacity\n7,1,2,\n1,7,2,\n")
    demands_file = tmp_path / "demands.csv"
    demands_file.write_text("7,1,3\n")
    network, demands = load_instance(network_file, demands_file)
    assert [node.label for node in network.nodes] == ["7", ""]
    assert demands == (Demand(0, 1, 3),)


def test_infinite_volume_is_rejected(tmp_path: Path) -> None:
    """Only capacities may be unlimited.

    Parameters:
        tmp_path: Pytest fixture providing a temporary directory.
    """
    demands_file = tmp_path / "demands.csv"
    demands_file.write_text("Beijing,Jinan,inf\n")
    with pytest.raises(InstanceError, match="not a finite number") as error:
        load_instance(CORRIDOR_NETWORK, demands_file)
    assert error.value.field == "volume"


@pytest.mark.parametrize(
    ("content", "volumes"),
    [
        ("origin,destination,volume\nBeijing,Jinan,5\n", [5]),
        ("Origin,Destination,Volume,Shadow_Price\nBeijing,Jinan,5,\n", [5]),
        ("origin,Jinan,5\nBeijing,Jinan,2\n", [5, 2]),
    ],
)
def test_demands_header_row(tmp_path: Path, content: str, volumes: list[int]) -> None:
    """Skip the header row, but not a first shipment from a station named `origin`.

    Parameters:
        tmp_path: Pytest fixture providing a temporary directory.
        content: The demands file contents.
        volumes: The expected shipment volumes.
    """
    network_file = tmp_path / "network.csv"
    network_file.write_text(
        "NODES\nid,label\n0,origin\n1,Beijing\n2,Jinan\n"
        "ARCS\nfrom,to,cost,capacity\norigin,Beijing,1,\nBeijing,Jinan,2,\nJinan,origin,3,\n",
    )
    demands_file = tmp_path / "demands.csv"
    demands_file.write_text(content)
    _, demands = load_instance(network_file, demands_file)
    assert [demand.volume for demand in demands] == volumes
