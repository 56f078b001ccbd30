"""Virtual extension module.

Infeasible flows are absorbed by uncapacitated virtual elements priced at the
shipment's shadow price. For a shipment `i -> j`, a virtual arc `i -> j` is added,
or, when a real arc `i -> j` already exists, a virtual node `v` with two arcs
`i -> v` and `v -> j` each costing half the shadow price.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Union

from loguru import logger

from railtree.network import INFINITY, Arc, Node, Pair, tolerance

if TYPE_CHECKING:
    from collections.abc import Iterable

    from railtree.flows import FlowField
    from railtree.network import Demand, Network

VirtualElement = Union[int, Pair]


@dataclass(frozen=True)
class ExtendedNetwork:
    """A network extended with virtual nodes and arcs."""

    base: Network
    virtual_nodes: tuple[Node, ...] = ()
    virtual_arcs: tuple[Arc, ...] = ()
    origin_of: dict[VirtualElement, Pair] = field(default_factory=dict, repr=False)
    """Virtual node id or virtual arc key -> the shipment it serves."""
    serving: dict[Pair, int] = field(default_factory=dict, repr=False)
    """Shipment -> virtual successor of its origin."""
    shadow_prices: dict[Pair, float] = field(default_factory=dict, repr=False)

    def __repr__(self) -> str:
        return (
            f"ExtendedNetwork({self.base!r}, virtual_nodes={len(self.virtual_nodes)}, "
            f"virtual_arcs={len(self.virtual_arcs)})"
        )

    @cached_property
    def _arcs_by_key(self) -> dict[Pair, Arc]:
        return {arc.key: arc for arc in self.all_arcs}

    @cached_property
    def _virtual_nodes_by_destination(self) -> dict[int, tuple[int, ...]]:
        towards: dict[int, list[int]] = {}
        for node in self.virtual_nodes:
            towards.setdefault(self.origin_of[node.id][1], []).append(node.id)
        return {destination: tuple(nodes) for destination, nodes in towards.items()}

    @property
    def demands(self) -> tuple[Demand, ...]:
        """The shipments of the base network."""
        return self.base.demands

    @property
    def destinations(self) -> tuple[int, ...]:
        """The shipment destinations."""
        return self.base.destinations

    @property
    def node_count(self) -> int:
        """Number of real and virtual nodes."""
        return self.base.node_count + len(self.virtual_nodes)

    @cached_property
    def all_arcs(self) -> tuple[Arc, ...]:
        """Real arcs followed by virtual arcs."""
        return self.base.arcs + self.virtual_arcs

    def arc(self, source: int, target: int) -> Arc:
        """Return the real or virtual arc joining two nodes.

        Parameters:
            source: Tail node.
            target: Head node.

        Raises:
            KeyError: When there is no such arc.

        Returns:
            The arc.
        """
        return self._arcs_by_key[(source, target)]

    def is_virtual_node(self, node: int) -> bool:
        """Tell whether a node is virtual.

        Parameters:
            node: A node index.

        Returns:
            True for virtual nodes.
        """
        return node >= self.base.node_count

    def virtual_successor(self, node: int, destination: int) -> int | None:
        """Return the first node of the virtual corridor serving a shipment.

        Parameters:
            node: Origin of the shipment.
            destination: Destination of the shipment.

        Returns:
            The destination itself (virtual arc), a virtual node, or None when the pair is not served.
        """
        return self.serving.get((node, destination))

    def virtual_nodes_towards(self, destination: int) -> tuple[int, ...]:
        """Return the virtual nodes of the corridors ending at a destination.

        Parameters:
            destination: A destination.

        Returns:
            Virtual node indices.
        """
        return self._virtual_nodes_by_destination.get(destination, ())

    def label(self, node: int) -> str:
        """Return the name of a real or virtual node.

        Parameters:
            node: A node index.

        Returns:
            The label.
        """
        if self.is_virtual_node(node):
            return self.virtual_nodes[node - self.base.node_count].name
        return self.base.label(node)


def extend(network: Network, demands: Iterable[Demand] | None = None, *, enabled: bool = True) -> ExtendedNetwork:
    """Add one virtual corridor per shipment.

    Parameters:
        network: The real network.
        demands: Shipments to serve, the network's shipments by default.
        enabled: When false, return the network wrapped without any virtual element.

    Returns:
        The extended network.
    """
    if not enabled:
        return ExtendedNetwork(network)
    if demands is None:
        demands = network.demands

    default_price = network.total_cost
    if default_price == 0:
        logger.warning("All arc costs are zero: shipments without shadow price can be abandoned for free")

    nodes: list[Node] = []
    arcs: list[Arc] = []
    origin_of: dict[VirtualElement, Pair] = {}
    serving: dict[Pair, int] = {}
    prices: dict[Pair, float] = {}
    next_id = network.node_count

    for demand in sorted(demands, key=lambda demand: demand.pair):
        origin, destination = demand.pair
        price = default_price if demand.shadow_price is None else demand.shadow_price
        prices[demand.pair] = price
        if network.has_arc(origin, destination):
            virtual = Node(next_id, f"~{network.label(origin)}>{network.label(destination)}")
            next_id += 1
            first = Arc(origin, virtual.id, price / 2, INFINITY, is_virtual=True)
            second = Arc(virtual.id, destination, price / 2, INFINITY, is_virtual=True)
            nodes.append(virtual)
            arcs.extend((first, second))
            origin_of[virtual.id] = origin_of[first.key] = origin_of[second.key] = demand.pair
            serving[demand.pair] = virtual.id
        else:
            direct = Arc(origin, destination, price, INFINITY, is_virtual=True)
            arcs.append(direct)
            origin_of[direct.key] = demand.pair
            serving[demand.pair] = destination

    logger.debug(f"Extended network with {len(nodes)} virtual nodes and {len(arcs)} virtual arcs")
    return ExtendedNetwork(network, tuple(nodes), tuple(arcs), origin_of, serving, prices)


@dataclass(frozen=True)
class Abandonment:
    """Abandoned volumes read back from a flow field."""

    by_element: dict[Pair, float]
    """Flow entering the virtual element serving each shipment (U_ij, may include transfers)."""
    by_demand: dict[Pair, float]
    """Volume of each shipment whose route ends in a virtual element."""
    upstream: tuple[Pair, ...]
    """Elements draining more than their own shipment volume."""

    def cost(self, extended: ExtendedNetwork) -> float:
        """Total shadow-price loss of the abandoned volumes.

        Parameters:
            extended: The extended network holding the shadow prices.

        Returns:
            Sum of shadow price times abandoned volume over virtual elements.
        """
        return sum(extended.shadow_prices[pair] * volume for pair, volume in sorted(self.by_element.items()))


def read_abandonment(
    extended: ExtendedNetwork,
    flowfield: FlowField,
    demands: Iterable[Demand] | None = None,
) -> Abandonment:
    """Read abandoned volumes from a flow field propagated on the extended network.

    Under tree-shaped routing a virtual element drains the whole node flow,
    which may include transfers from upstream shipments. Each shipment whose route
    reaches an abandoning element is attributed its full volume, which is the
    proportional share of the drained flow.

    Parameters:
        extended: The extended network.
        flowfield: A flow field propagated on it.
        demands: Shipments to attribute, the network's shipments by default.

    Returns:
        The abandonment report.
    """
    if demands is None:
        demands = extended.demands
    demands = tuple(demands)

    by_element = {pair: volume for pair, volume in sorted(flowfield.abandoned.items()) if volume > 0}
    upstream = []
    for pair, volume in by_element.items():
        own = extended.base.demand(*pair)
        own_volume = own.volume if own else 0.0
        if volume > own_volume + tolerance(own_volume):
            upstream.append(pair)
            logger.debug(f"Virtual element of {pair} drains {volume}, more than its own volume {own_volume}")

    by_demand = {}
    for demand in demands:
        origin, destination = demand.pair
        branches = flowfield.successor_flow.get(destination, {})
        node = origin
        visited = set()
        while node != destination and node not in visited:
            visited.add(node)
            nxt = next((k for k, flow in branches.get(node, {}).items() if flow > 0), None)
            if nxt is None:
                break
            if extended.arc(node, nxt).is_virtual and not extended.is_virtual_node(node):
                by_demand[demand.pair] = demand.volume
                break
            node = nxt
    return Abandonment(by_element, by_demand, tuple(upstream))
