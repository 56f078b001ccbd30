"""Rail network module.

This module defines the immutable substrate every other module reads:
stations ([`Node`][railtree.network.Node]), links ([`Arc`][railtree.network.Arc]),
O-D shipments ([`Demand`][railtree.network.Demand]), the [`Network`][railtree.network.Network]
container built by [`build_network`][railtree.network.build_network],
and least-cost distances towards destinations ([`DistanceTable`][railtree.network.DistanceTable]).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING

import networkx as nx
from loguru import logger

if TYPE_CHECKING:
    from collections.abc import Iterable

    from railtree.pruning import CandidateTable

INFINITY = math.inf
TOLERANCE = 1e-9

Pair = tuple[int, int]


def tolerance(scale: float) -> float:
    """Return the absolute tolerance used to compare quantities of the given magnitude.

    Parameters:
        scale: The magnitude of the compared quantities.

    Returns:
        `1e-9` times the magnitude, never less than `1e-9`.
    """
    return TOLERANCE * max(1.0, abs(scale))


class NetworkError(ValueError):
    """Raised when nodes, arcs or demands do not describe a valid rail network."""


@dataclass(frozen=True)
class Node:
    """A station of the rail network."""

    id: int
    """Dense index, from 0 to the number of nodes minus one."""
    label: str = ""
    """Station name, used in files and reports."""

    @property
    def name(self) -> str:
        """Label of the station, or its index when it has no label."""
        return self.label or str(self.id)


@dataclass(frozen=True)
class Arc:
    """A directed link between two stations."""

    source: int
    """Tail station."""
    target: int
    """Head station."""
    cost: float
    """Generalized kilometres per unit of flow."""
    capacity: float = INFINITY
    """Flow volume the link can carry during the planning period."""
    is_virtual: bool = False
    """Whether the arc was added to absorb infeasible flows."""

    @property
    def key(self) -> Pair:
        """The `(source, target)` pair identifying the arc."""
        return (self.source, self.target)


@dataclass(frozen=True)
class Demand:
    """A shipment: flow volume from an origin station to a destination station."""

    origin: int
    destination: int
    volume: float
    shadow_price: float | None = None
    """Income lost per unit of abandoned volume, `None` to use the network default."""

    @property
    def pair(self) -> Pair:
        """The `(origin, destination)` pair of the shipment."""
        return (self.origin, self.destination)


@dataclass(frozen=True)
class Network:
    """An immutable directed rail network with its shipments.

    Use [`build_network`][railtree.network.build_network] to create validated instances.
    """

    nodes: tuple[Node, ...]
    arcs: tuple[Arc, ...]
    demands: tuple[Demand, ...] = ()
    out_adjacency: tuple[tuple[tuple[int, Arc], ...], ...] = field(init=False, repr=False, compare=False)
    in_adjacency: tuple[tuple[tuple[int, Arc], ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        outgoing: list[list[tuple[int, Arc]]] = [[] for _ in self.nodes]
        incoming: list[list[tuple[int, Arc]]] = [[] for _ in self.nodes]
        for arc in self.arcs:
            outgoing[arc.source].append((arc.target, arc))
            incoming[arc.target].append((arc.source, arc))
        object.__setattr__(self, "out_adjacency", tuple(tuple(sorted(adj, key=lambda x: x[0])) for adj in outgoing))
        object.__setattr__(self, "in_adjacency", tuple(tuple(sorted(adj, key=lambda x: x[0])) for adj in incoming))

    def __repr__(self) -> str:
        return f"Network(nodes={self.node_count}, arcs={len(self.arcs)}, demands={len(self.demands)})"

    @property
    def node_count(self) -> int:
        """Number of stations."""
        return len(self.nodes)

    @property
    def all_arcs(self) -> tuple[Arc, ...]:
        """Every arc of the network (a plain network has no virtual arcs)."""
        return self.arcs

    @cached_property
    def _arcs_by_key(self) -> dict[Pair, Arc]:
        return {arc.key: arc for arc in self.arcs}

    @cached_property
    def _demands_by_pair(self) -> dict[Pair, Demand]:
        return {demand.pair: demand for demand in self.demands}

    @cached_property
    def _labels(self) -> dict[str, int]:
        return {node.name: node.id for node in self.nodes}

    @cached_property
    def graph(self) -> nx.DiGraph:
        """A `networkx` view of the real arcs, with `cost` and `capacity` edge attributes."""
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.node_count))
        for arc in self.arcs:
            graph.add_edge(arc.source, arc.target, cost=arc.cost, capacity=arc.capacity)
        return graph

    @cached_property
    def destinations(self) -> tuple[int, ...]:
        """Sorted destinations of the shipments."""
        return tuple(sorted({demand.destination for demand in self.demands}))

    @cached_property
    def total_cost(self) -> float:
        """Sum of all arc costs, the default shadow price."""
        return math.fsum(arc.cost for arc in self.arcs)

    @cached_property
    def unreachable(self) -> tuple[Pair, ...]:
        """Shipments whose destination cannot be reached through real arcs."""
        pairs = []
        for destination in self.destinations:
            ancestors = nx.ancestors(self.graph, destination)
            pairs.extend(
                demand.pair
                for demand in self.demands
                if demand.destination == destination and demand.origin not in ancestors
            )
        return tuple(sorted(pairs))

    def arc(self, source: int, target: int) -> Arc:
        """Return the arc joining two stations.

        Parameters:
            source: Tail station.
            target: Head station.

        Raises:
            KeyError: When there is no such arc.

        Returns:
            The arc.
        """
        return self._arcs_by_key[(source, target)]

    def has_arc(self, source: int, target: int) -> bool:
        """Tell whether an arc joins two stations.

        Parameters:
            source: Tail station.
            target: Head station.

        Returns:
            True when the arc exists.
        """
        return (source, target) in self._arcs_by_key

    def successors(self, node: int) -> tuple[tuple[int, Arc], ...]:
        """Return the adjacent stations of a node with the arcs leading to them, sorted by station.

        Parameters:
            node: A station.

        Returns:
            `(neighbor, arc)` pairs.
        """
        return self.out_adjacency[node]

    def is_virtual_node(self, node: int) -> bool:  # noqa: ARG002
        """Tell whether a node is virtual (never, in a plain network).

        Parameters:
            node: A station.

        Returns:
            False.
        """
        return False

    def demand(self, origin: int, destination: int) -> Demand | None:
        """Return the shipment between two stations, if any.

        Parameters:
            origin: Origin station.
            destination: Destination station.

        Returns:
            The shipment or None.
        """
        return self._demands_by_pair.get((origin, destination))

    def label(self, node: int) -> str:
        """Return the name of a station.

        Parameters:
            node: A station.

        Returns:
            Its label.
        """
        return self.nodes[node].name

    def node_id(self, label: str) -> int:
        """Return the index of a station given its label.

        Parameters:
            label: A station label.

        Raises:
            KeyError: When no station has this label.

        Returns:
            The station index.
        """
        return self._labels[label]

    @property
    def mean_out_degree(self) -> float:
        """Average number of adjacent stations."""
        return len(self.arcs) / self.node_count if self.nodes else 0.0


def build_network(nodes: Iterable[Node], arcs: Iterable[Arc], demands: Iterable[Demand] = ()) -> Network:
    """Validate stations, links and shipments, and build a network.

    Zero-volume shipments are dropped. Shipments that cannot reach their
    destination are kept: they are later routed to virtual arcs.

    Parameters:
        nodes: The stations, with dense indices.
        arcs: The links.
        demands: The shipments.

    Raises:
        NetworkError: When the input does not describe a valid network.

    Returns:
        The network.
    """
    nodes = tuple(nodes)
    for position, node in enumerate(nodes):
        if node.id != position:
            raise NetworkError(f"node ids must be dense and ordered: expected {position}, got {node.id}")
    node_count = len(nodes)

    seen: set[Pair] = set()
    checked_arcs = []
    for arc in arcs:
        if not (0 <= arc.source < node_count and 0 <= arc.target < node_count):
            raise NetworkError(f"arc {arc.source}->{arc.target} references a missing node")
        if arc.source == arc.target:
            raise NetworkError(f"arc {arc.source}->{arc.target} is a self-loop")
        if arc.key in seen:
            raise NetworkError(f"duplicate arc {arc.source}->{arc.target}")
        if not (math.isfinite(arc.cost) and arc.cost >= 0):
            raise NetworkError(f"arc {arc.source}->{arc.target} must have a finite non-negative cost, got {arc.cost}")
        if not arc.capacity >= 0:
            raise NetworkError(f"arc {arc.source}->{arc.target} has a negative capacity ({arc.capacity})")
        seen.add(arc.key)
        checked_arcs.append(arc)

    pairs: set[Pair] = set()
    checked_demands = []
    for demand in demands:
        if not (0 <= demand.origin < node_count and 0 <= demand.destination < node_count):
            raise NetworkError(f"demand {demand.origin}->{demand.destination} references a missing node")
        if demand.origin == demand.destination:
            raise NetworkError(f"demand {demand.origin}->{demand.destination} has the same origin and destination")
        if demand.pair in pairs:
            raise NetworkError(f"duplicate demand {demand.origin}->{demand.destination}")
        if not (math.isfinite(demand.volume) and demand.volume >= 0):
            raise NetworkError(
                f"demand {demand.origin}->{demand.destination} must have a finite non-negative volume, "
                f"got {demand.volume}",
            )
        if demand.shadow_price is not None and not (math.isfinite(demand.shadow_price) and demand.shadow_price >= 0):
            raise NetworkError(
                f"demand {demand.origin}->{demand.destination} must have a finite non-negative shadow price, "
                f"got {demand.shadow_price}",
            )
        pairs.add(demand.pair)
        if demand.volume == 0:
            logger.debug(f"Dropping zero-volume demand {demand.origin}->{demand.destination}")
            continue
        checked_demands.append(demand)

    network = Network(nodes, tuple(checked_arcs), tuple(checked_demands))
    for origin, destination in network.unreachable:
        logger.warning(
            f"Demand {network.label(origin)}->{network.label(destination)} has no real path, "
            "it can only be served by a virtual arc",
        )
    return network


@dataclass(frozen=True)
class DistanceTable:
    """Least-cost distances (and canonical next hops) towards a set of destinations.

    Distances are computed over real arcs only.
    """

    dist: dict[int, dict[int, float]]
    """Destination -> node -> distance, for nodes able to reach the destination."""
    next_hop: dict[int, dict[int, int]]
    """Destination -> node -> canonical successor on a shortest path."""

    @property
    def destinations(self) -> tuple[int, ...]:
        """The destinations covered by the table."""
        return tuple(self.dist)

    def distance(self, node: int, destination: int) -> float:
        """Return the least-cost distance from a node to a destination.

        Parameters:
            node: Start station.
            destination: Destination station.

        Raises:
            KeyError: When distances towards this destination were not computed.

        Returns:
            The distance, infinite when the destination is unreachable.
        """
        return self.dist[destination].get(node, INFINITY)

    def __getitem__(self, pair: Pair) -> float:
        return self.distance(*pair)

    def successor(self, node: int, destination: int) -> int | None:
        """Return the canonical shortest-path successor of a node.

        Parameters:
            node: Start station.
            destination: Destination station.

        Returns:
            The successor, or None for the destination itself and unreachable nodes.
        """
        return self.next_hop[destination].get(node)

    def chain(self, node: int, destination: int) -> list[int]:
        """Return the canonical shortest path from a node to a destination.

        Parameters:
            node: Start station.
            destination: Destination station.

        Returns:
            The stations of the path, both ends included, or an empty list when unreachable.
        """
        if node != destination and node not in self.next_hop[destination]:
            return []
        hops = self.next_hop[destination]
        path = [node]
        while node != destination:
            node = hops[node]
            path.append(node)
        return path


def all_pairs_shortest(network: Network, destinations: Iterable[int] | None = None) -> DistanceTable:
    """Compute least-cost distances towards each destination.

    Each destination runs one Dijkstra search on the reversed real graph.
    The canonical next hop of a node is its lowest-index successor on a shortest path
    among the successors settled before it, which keeps every next-hop chain acyclic
    even with zero-cost arcs.

    Parameters:
        network: The network.
        destinations: Destinations to cover, the shipment destinations by default.

    Returns:
        The distance table.
    """
    if destinations is None:
        destinations = network.destinations
    reverse = network.graph.reverse(copy=False)
    dist: dict[int, dict[int, float]] = {}
    next_hop: dict[int, dict[int, int]] = {}
    for destination in sorted(set(destinations)):
        lengths = nx.single_source_dijkstra_path_length(reverse, destination, weight="cost")
        settled = {node: rank for rank, node in enumerate(lengths)}
        hops = {}
        for node, length in lengths.items():
            if node == destination:
                continue
            for neighbor, arc in network.successors(node):
                rank = settled.get(neighbor)
                if rank is None or rank >= settled[node]:
                    continue
                if arc.cost + lengths[neighbor] <= length + tolerance(length):
                    hops[node] = neighbor
                    break
        dist[destination] = dict(lengths)
        next_hop[destination] = hops
    logger.debug(f"Computed shortest distances towards {len(dist)} destinations")
    return DistanceTable(dist, next_hop)


@dataclass(frozen=True)
class SizeReport:
    """Size of the binary formulation, before and after detour pruning."""

    nodes: int
    arcs: int
    mean_out_degree: float
    raw_variables: int
    """`n * (n - 1) * m` path-choice variables, `m` being the mean out-degree."""
    conservation_rows: int
    """`n * (n - 1)` flow conservation constraints."""
    tree_rows: int
    """`n * (n - 1)` tree-shaped path constraints."""
    capacity_rows: int
    """`n * m` capacity constraints."""
    pruned_variables: int
    """Real first-front-station candidates left by the detour filter."""
    candidate_pairs: int
    movable_pairs: int
    neighborhood_size: int


def problem_size(network: Network, candidates: CandidateTable) -> SizeReport:
    """Count variables and constraints of the formulation on a network.

    Parameters:
        network: The network.
        candidates: The pruned candidate table.

    Returns:
        The size report.
    """
    nodes = network.node_count
    arcs = len(network.arcs)
    pairs = nodes * (nodes - 1)
    return SizeReport(
        nodes=nodes,
        arcs=arcs,
        mean_out_degree=network.mean_out_degree,
        raw_variables=(nodes - 1) * arcs,
        conservation_rows=pairs,
        tree_rows=pairs,
        capacity_rows=arcs,
        pruned_variables=candidates.real_count,
        candidate_pairs=len(candidates),
        movable_pairs=len(candidates.movable_pairs),
        neighborhood_size=candidates.neighborhood_size,
    )
