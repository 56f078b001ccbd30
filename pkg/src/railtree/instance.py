"""Instance files module.

A network file holds two comma-separated sections, each introduced by a marker line
and a header row:

```
NODES
id,label
0,Beijing
1,Tianjin
ARCS
from,to,cost,capacity
Beijing,Tianjin,137,40
```

Stations are referenced by label (or by id when the label is blank). Only capacities may be
infinite (`inf`), and a blank capacity means an unlimited link. A demands file lists
`origin,destination,volume[,shadow_price]` rows, after an optional header row naming every column.
Lines starting with `#` and blank lines are ignored.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from loguru import logger

from railtree.network import INFINITY, Arc, Demand, Network, NetworkError, Node, build_network
from railtree.utils import read_lines

if TYPE_CHECKING:
    from collections.abc import Iterator

NODES_HEADER = ("id", "label")
ARCS_HEADER = ("from", "to", "cost", "capacity")
DEMANDS_HEADER = ("origin", "destination", "volume", "shadow_price")


class InstanceError(Exception):
    """Raised when an instance file cannot be read."""

    code = 1

    def __init__(self, path: str | Path, line: int | None, field: str | None, message: str) -> None:
        """Initialize the exception.

        Parameters:
            path: The file.
            line: The line number, starting at 1.
            field: The offending field.
            message: What is wrong.
        """
        self.path = str(path)
        self.line = line
        self.field = field
        self.message = message
        location = self.path if line is None else f"{self.path}:{line}"
        super().__init__(f"{location}: {field}: {message}" if field else f"{location}: {message}")


def _rows(path: Path) -> Iterator[tuple[int, list[str]]]:
    try:
        lines = read_lines(path)
    except OSError as error:
        raise InstanceError(path, None, None, f"cannot read file ({error.strerror})") from error
    for number, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        yield number, [value.strip() for value in next(csv.reader([stripped]))]


def _number(path: Path, line: int, field: str, value: str, *, unbounded: bool = False) -> float:
    if not value:
        raise InstanceError(path, line, field, "missing value")
    try:
        number = float(value)
    except ValueError:
        raise InstanceError(path, line, field, f"not a number: {value!r}") from None
    if math.isnan(number):
        raise InstanceError(path, line, field, "not a number: 'nan'")
    if math.isinf(number) and not unbounded:
        raise InstanceError(path, line, field, f"not a finite number: {value!r}")
    return number


def _optional_number(path: Path, line: int, field: str, value: str, *, unbounded: bool = False) -> float | None:
    return _number(path, line, field, value, unbounded=unbounded) if value else None


def _lookup(path: Path, line: int, field: str, label: str, index: dict[str, int]) -> int:
    try:
        return index[label]
    except KeyError:
        raise InstanceError(path, line, field, f"unknown node {label!r}") from None


def _check_header(path: Path, line: int, row: list[str], expected: tuple[str, ...]) -> None:
    if tuple(value.lower() for value in row) != expected:
        raise InstanceError(path, line, None, f"expected header {','.join(expected)!r}, got {','.join(row)!r}")


def _read_network(path: Path) -> tuple[list[Node], list[Arc], dict[str, int]]:
    nodes: list[Node] = []
    arcs: list[Arc] = []
    index: dict[str, int] = {}
    section = None
    expect_header = False
    for line, row in _rows(path):
        marker = row[0].upper() if len(row) == 1 else None
        if marker in {"NODES", "ARCS"}:
            if marker == "ARCS" and section != "NODES":
                raise InstanceError(path, line, None, "the ARCS section must follow the NODES section")
            section = marker
            expect_header = True
            continue
        if section is None:
            raise InstanceError(path, line, None, "expected a NODES section marker")
        if expect_header:
            _check_header(path, line, row, NODES_HEADER if section == "NODES" else ARCS_HEADER)
            expect_header = False
            continue

        if section == "NODES":
            if len(row) != len(NODES_HEADER):
                raise InstanceError(path, line, None, f"expected 2 fields, got {len(row)}")
            identifier, label = row
            if not identifier:
                raise InstanceError(path, line, "id", "missing value")
            if not label and identifier != str(len(nodes)):
                # a blank label stays blank only when the file id is the station index
                label = identifier
            key = label or identifier
            if key in index:
                raise InstanceError(path, line, "label", f"duplicate node {key!r}")
            index[key] = len(nodes)
            nodes.append(Node(len(nodes), label))
        else:
            if len(row) not in {3, 4}:
                raise InstanceError(path, line, None, f"expected 3 or 4 fields, got {len(row)}")
            source = _lookup(path, line, "from", row[0], index)
            target = _lookup(path, line, "to", row[1], index)
            cost = _number(path, line, "cost", row[2])
            capacity = None
            if len(row) == 4:  # noqa: PLR2004
                capacity = _optional_number(path, line, "capacity", row[3], unbounded=True)
            arcs.append(Arc(source, target, cost, INFINITY if capacity is None else capacity))

    if section is None:
        raise InstanceError(path, None, None, "no NODES section")
    if expect_header:
        raise InstanceError(path, None, None, f"missing header row after the {section} marker")
    return nodes, arcs, index


def _read_demands(path: Path, index: dict[str, int]) -> list[Demand]:
    demands = []
    first = True
    for line, row in _rows(path):
        # header rows name every column
        if first and tuple(value.lower() for value in row) in {DEMANDS_HEADER[:3], DEMANDS_HEADER}:
            first = False
            continue
        first = False
        if len(row) not in {3, 4}:
            raise InstanceError(path, line, None, f"expected 3 or 4 fields, got {len(row)}")
        origin = _lookup(path, line, "origin", row[0], index)
        destination = _lookup(path, line, "destination", row[1], index)
        volume = _number(path, line, "volume", row[2])
        shadow_price = _optional_number(path, line, "shadow_price", row[3]) if len(row) == 4 else None  # noqa: PLR2004
        demands.append(Demand(origin, destination, volume, shadow_price))
    return demands


def load_instance(network_file: str | Path, demands_file: str | Path) -> tuple[Network, tuple[Demand, ...]]:
    """Read a network file and a demands file.

    Parameters:
        network_file: The network file.
        demands_file: The demands file.

    Raises:
        InstanceError: When a file is missing, malformed or describes an invalid network.

    Returns:
        The network and its shipments.
    """
    network_file = Path(network_file)
    demands_file = Path(demands_file)
    nodes, arcs, index = _read_network(network_file)
    demands = _read_demands(demands_file, index)
    try:
        network = build_network(nodes, arcs, demands)
    except NetworkError as error:
        raise InstanceError(f"{network_file}, {demands_file}", None, None, str(error)) from error
    logger.info(
        f"Loaded {network.node_count} nodes, {len(network.arcs)} arcs and {len(network.demands)} demands "
        f"from {network_file} and {demands_file}",
    )
    return network, network.demands


def format_number(value: float | None) -> str:
    """Render a number the way instance and report files store it.

    Parameters:
        value: A number, None, or infinity.

    Returns:
        An empty string for None and infinity, an integer for integral values, the shortest repr otherwise.
    """
    if value is None or math.isinf(value):
        return ""
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def dump_instance(network: Network, network_file: str | Path, demands_file: str | Path) -> None:
    """Write a network and its shipments in the instance file formats.

    Parameters:
        network: The network.
        network_file: Where to write the network.
        demands_file: Where to write the shipments.
    """
    with Path(network_file).open("w", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(["NODES"])
        writer.writerow(NODES_HEADER)
        writer.writerows((node.id, node.label) for node in network.nodes)
        writer.writerow(["ARCS"])
        writer.writerow(ARCS_HEADER)
        writer.writerows(
            (
                network.label(arc.source),
                network.label(arc.target),
                format_number(arc.cost),
                format_number(arc.capacity),
            )
            for arc in network.arcs
        )
    with Path(demands_file).open("w", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(DEMANDS_HEADER)
        writer.writerows(
            (
                network.label(demand.origin),
                network.label(demand.destination),
                format_number(demand.volume),
                format_number(demand.shadow_price),
            )
            for demand in network.demands
        )
    logger.debug(f"Wrote instance to {network_file} and {demands_file}")


def random_instance(
    nodes: int,
    arcs: int,
    demands: int,
    seed: int | None = None,
    capacity: float | None = None,
    max_cost: int = 9,
    max_volume: int = 9,
) -> Network:
    """Generate a strongly connected network with random costs and shipments.

    Stations are laid on a random directed ring, completed with random extra arcs.

    Parameters:
        nodes: Number of stations, at least 2.
        arcs: Number of arcs, between `nodes` and `nodes * (nodes - 1)`.
        demands: Number of shipments, at most `nodes * (nodes - 1)`.
        seed: Random seed.
        capacity: Capacity of every arc, unlimited by default.
        max_cost: Arc costs are integers drawn in `[1, max_cost]`.
        max_volume: Volumes are integers drawn in `[1, max_volume]`.

    Raises:
        ValueError: When the counts are out of range.

    Returns:
        The network.
    """
    pairs_count = nodes * (nodes - 1)
    if nodes < 2:  # noqa: PLR2004
        raise ValueError(f"need at least 2 nodes, got {nodes}")
    if not nodes <= arcs <= pairs_count:
        raise ValueError(f"arcs must be between {nodes} and {pairs_count}, got {arcs}")
    if not 0 <= demands <= pairs_count:
        raise ValueError(f"demands must be between 0 and {pairs_count}, got {demands}")

    rng = np.random.default_rng(seed)
    order = [int(node) for node in rng.permutation(nodes)]
    ring = {(order[position], order[(position + 1) % nodes]) for position in range(nodes)}
    others = [(u, v) for u in range(nodes) for v in range(nodes) if u != v and (u, v) not in ring]
    extra = [others[position] for position in rng.choice(len(others), size=arcs - len(ring), replace=False)]
    keys = sorted(ring | set(extra))
    costs = rng.integers(1, max_cost + 1, size=len(keys))
    limit = INFINITY if capacity is None else capacity
    arc_list = [Arc(u, v, float(cost), limit) for (u, v), cost in zip(keys, costs)]

    od_pairs = [(u, v) for u in range(nodes) for v in range(nodes) if u != v]
    chosen = sorted(od_pairs[position] for position in rng.choice(len(od_pairs), size=demands, replace=False))
    volumes = rng.integers(1, max_volume + 1, size=len(chosen))
    demand_list = [Demand(u, v, float(volume)) for (u, v), volume in zip(chosen, volumes)]

    node_list = [Node(node, f"N{node}") for node in range(nodes)]
    return build_network(node_list, arc_list, demand_list)
