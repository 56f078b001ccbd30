"""Flow engine module.

A solution is a [`SuccessorAssignment`][railtree.flows.SuccessorAssignment]:
for every (node, destination) pair, the first front station chosen by the flows
bound to that destination. Flows are propagated along the successor graphs into a
[`FlowField`][railtree.flows.FlowField], which is checked against conservation
and tree-shape constraints and priced by the penalized energy function.
"""

from __future__ import annotations

import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, NamedTuple, Protocol

import networkx as nx
from loguru import logger

from railtree.network import Pair, tolerance

if TYPE_CHECKING:
    from collections.abc import Iterable, Iterator, Mapping

    from railtree.network import Arc, Demand

DEFAULT_LAMBDA = 600.0


class Routable(Protocol):
    """What the flow engine needs from a network, real or extended."""

    @property
    def node_count(self) -> int: ...  # noqa: D102

    @property
    def all_arcs(self) -> tuple[Arc, ...]: ...  # noqa: D102

    @property
    def demands(self) -> tuple[Demand, ...]: ...  # noqa: D102

    def arc(self, source: int, target: int) -> Arc: ...  # noqa: D102

    def is_virtual_node(self, node: int) -> bool: ...  # noqa: D102

    def label(self, node: int) -> str: ...  # noqa: D102


class CycleError(Exception):
    """Raised when flows bound to a destination would loop forever."""

    def __init__(self, destination: int, cycle: Iterable[int]) -> None:
        """Initialize the exception.

        Parameters:
            destination: The destination whose successor graph holds the cycle.
            cycle: Nodes of the cycle, in successor order.
        """
        self.destination = destination
        self.cycle = tuple(cycle)
        super().__init__(f"successor cycle {list(self.cycle)} towards destination {destination}")


class Move(NamedTuple):
    """A neighbour move: change the first front station of one pair."""

    node: int
    destination: int
    successor: int


class SuccessorAssignment:
    """The chosen first front station of every (node, destination) pair."""

    def __init__(self, successors: Mapping[Pair, int] | None = None) -> None:
        """Initialize the assignment.

        Parameters:
            successors: Initial `(node, destination) -> successor` mapping.
        """
        self._by_destination: dict[int, dict[int, int]] = {}
        if successors:
            for pair, successor in successors.items():
                self[pair] = successor

    def __getitem__(self, pair: Pair) -> int:
        node, destination = pair
        return self._by_destination[destination][node]

    def __setitem__(self, pair: Pair, successor: int) -> None:
        node, destination = pair
        self._by_destination.setdefault(destination, {})[node] = successor

    def __contains__(self, pair: object) -> bool:
        if not isinstance(pair, tuple) or len(pair) != 2:  # noqa: PLR2004
            return False
        node, destination = pair
        return node in self._by_destination.get(destination, {})

    def __len__(self) -> int:
        return sum(len(successors) for successors in self._by_destination.values())

    def __iter__(self) -> Iterator[Pair]:
        return iter(pair for pair, _ in self.items())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SuccessorAssignment):
            return NotImplemented
        return self.as_dict() == other.as_dict()

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"SuccessorAssignment({self.as_dict()!r})"

    def get(self, pair: Pair, default: int | None = None) -> int | None:
        """Return the successor of a pair, or a default value.

        Parameters:
            pair: A `(node, destination)` pair.
            default: Value returned for unknown pairs.

        Returns:
            The successor or the default.
        """
        node, destination = pair
        return self._by_destination.get(destination, {}).get(node, default)

    def items(self) -> list[tuple[Pair, int]]:
        """Return the assignment entries in lexicographic pair order.

        Returns:
            `((node, destination), successor)` tuples.
        """
        return sorted(
            ((node, destination), successor)
            for destination, successors in self._by_destination.items()
            for node, successor in successors.items()
        )

    @property
    def destinations(self) -> tuple[int, ...]:
        """Sorted destinations present in the assignment."""
        return tuple(sorted(self._by_destination))

    def toward(self, destination: int) -> dict[int, int]:
        """Return the successor graph of one destination.

        Parameters:
            destination: A destination.

        Returns:
            The live `node -> successor` mapping.
        """
        return self._by_destination.get(destination, {})

    def copy(self) -> SuccessorAssignment:
        """Return an independent copy of the assignment.

        Returns:
            The copy.
        """
        clone = SuccessorAssignment()
        clone._by_destination = {destination: dict(nodes) for destination, nodes in self._by_destination.items()}
        return clone

    def as_dict(self) -> dict[Pair, int]:
        """Return the assignment as a flat mapping.

        Returns:
            The `(node, destination) -> successor` mapping, in lexicographic pair order.
        """
        return dict(self.items())


@dataclass
class FlowField:
    """Flows obtained by propagating shipments along a successor assignment."""

    node_flow: dict[int, dict[int, float]] = field(default_factory=dict)
    """Destination -> node -> flow bound to the destination passing through the node (f_ij)."""
    successor_flow: dict[int, dict[int, dict[int, float]]] = field(default_factory=dict)
    """Destination -> node -> successor -> flow sent to it (f_ij^k)."""
    arc_load: dict[Pair, float] = field(default_factory=dict)
    """Arc -> total flow over all destinations, positive loads only."""
    abandoned: dict[Pair, float] = field(default_factory=dict)
    """(node, destination) -> flow entering the virtual element leaving the node (U_ij), positive values only."""

    def flow(self, node: int, destination: int) -> float:
        """Return the flow bound to a destination passing through a node.

        Parameters:
            node: A node.
            destination: A destination.

        Returns:
            The flow, zero when unknown.
        """
        return self.node_flow.get(destination, {}).get(node, 0.0)

    def load(self, source: int, target: int) -> float:
        """Return the load of an arc.

        Parameters:
            source: Tail node.
            target: Head node.

        Returns:
            The load, zero for unused arcs.
        """
        return self.arc_load.get((source, target), 0.0)

    def copy(self) -> FlowField:
        """Return an independent copy of the flow field.

        Returns:
            The copy.
        """
        return FlowField(
            node_flow={destination: dict(flows) for destination, flows in self.node_flow.items()},
            successor_flow={
                destination: {node: dict(branches) for node, branches in nodes.items()}
                for destination, nodes in self.successor_flow.items()
            },
            arc_load=dict(self.arc_load),
            abandoned=dict(self.abandoned),
        )

    def isclose(self, other: FlowField, rel_tol: float = 1e-9) -> bool:
        """Compare two flow fields value by value, missing entries counting as zero.

        Parameters:
            other: The other flow field.
            rel_tol: Relative tolerance (absolute tolerance scales like [`tolerance`][railtree.network.tolerance]).

        Returns:
            Whether all values match.
        """

        def same(first: Mapping, second: Mapping) -> bool:
            for key in first.keys() | second.keys():
                a, b = first.get(key, 0.0), second.get(key, 0.0)
                if not math.isclose(a, b, rel_tol=rel_tol, abs_tol=tolerance(max(abs(a), abs(b)))):
                    return False
            return True

        destinations = self.node_flow.keys() | other.node_flow.keys()
        for destination in destinations:
            if not same(self.node_flow.get(destination, {}), other.node_flow.get(destination, {})):
                return False
            mine = self.successor_flow.get(destination, {})
            theirs = other.successor_flow.get(destination, {})
            for node in mine.keys() | theirs.keys():
                if not same(mine.get(node, {}), theirs.get(node, {})):
                    return False
        return same(self.arc_load, other.arc_load) and same(self.abandoned, other.abandoned)


def _abandons(network: Routable, node: int, successor: int) -> bool:
    # A virtual arc leaving a real node is where a shipment leaves the real network.
    return network.arc(node, successor).is_virtual and not network.is_virtual_node(node)


def _find_cycle(successors: Mapping[int, int], start: int) -> list[int]:
    seen: dict[int, int] = {}
    path: list[int] = []
    node = start
    while node not in seen:
        seen[node] = len(path)
        path.append(node)
        node = successors[node]
    return path[seen[node] :]


def propagate(
    network: Routable,
    assignment: SuccessorAssignment,
    demands: Iterable[Demand] | None = None,
) -> FlowField:
    """Propagate shipments along the successor graphs.

    For each destination, the flow through a node is its own shipment volume plus
    the flows of every node choosing it as first front station. Nodes are processed
    in topological order of the successor graph.

    Parameters:
        network: The (possibly extended) network.
        assignment: The successor assignment, defined on every candidate pair.
        demands: Shipments to propagate, the network's shipments by default.

    Raises:
        ValueError: When a shipment origin or a successor has no assigned successor.
        CycleError: When flow reaches a successor cycle that does not contain the destination.

    Returns:
        The flow field.
    """
    if demands is None:
        demands = network.demands
    volumes: dict[int, dict[int, float]] = defaultdict(dict)
    for demand in demands:
        volumes[demand.destination][demand.origin] = demand.volume

    flowfield = FlowField()
    arc_load: dict[Pair, float] = defaultdict(float)
    for destination in sorted(set(assignment.destinations) | volumes.keys()):
        successors = assignment.toward(destination)
        own = volumes.get(destination, {})
        for origin in own:
            if origin not in successors:
                raise ValueError(f"demand {origin}->{destination} has no assigned successor")

        flow = {node: own.get(node, 0.0) for node in successors}
        indegree = dict.fromkeys(successors, 0)
        for node, successor in successors.items():
            if successor == destination:
                continue
            if successor not in successors:
                raise ValueError(f"successor {successor} of pair ({node}, {destination}) has no assigned successor")
            indegree[successor] += 1

        branches: dict[int, dict[int, float]] = {}
        queue = deque(sorted(node for node, degree in indegree.items() if degree == 0))
        while queue:
            node = queue.popleft()
            successor = successors[node]
            amount = flow[node]
            branches[node] = {successor: amount}
            if amount > 0:
                arc_load[(node, successor)] += amount
                if _abandons(network, node, successor):
                    flowfield.abandoned[(node, destination)] = amount
            if successor != destination:
                flow[successor] += amount
                indegree[successor] -= 1
                if indegree[successor] == 0:
                    queue.append(successor)

        if len(branches) < len(successors):
            for node in sorted(successors.keys() - branches.keys()):
                if node in branches:
                    continue
                cycle = _find_cycle(successors, node)
                if any(flow[member] > 0 for member in cycle):
                    raise CycleError(destination, cycle)
                for member in cycle:
                    branches[member] = {successors[member]: 0.0}

        flowfield.node_flow[destination] = flow
        flowfield.successor_flow[destination] = branches

    flowfield.arc_load = {arc: load for arc, load in sorted(arc_load.items()) if load > 0}
    return flowfield


@dataclass(frozen=True)
class ConservationViolation:
    """A (node, destination) row where flow conservation does not hold."""

    node: int
    destination: int
    residual: float
    """Outflow minus inflow minus own shipment volume."""


def check_conservation(
    network: Routable,
    assignment: SuccessorAssignment,  # noqa: ARG001
    flowfield: FlowField,
    demands: Iterable[Demand] | None = None,
) -> list[ConservationViolation]:
    """Check flow conservation at every (node, destination) row.

    Outflow over real arcs plus abandoned flow, minus inflow, must equal the node's
    own shipment volume, and the recorded node flow must equal own volume plus inflow.

    Parameters:
        network: The (possibly extended) network.
        assignment: The successor assignment the flow field was propagated from.
        flowfield: The flow field to check.
        demands: Shipments, the network's shipments by default.

    Returns:
        The violated rows, empty when conservation holds.
    """
    if demands is None:
        demands = network.demands
    volumes: dict[Pair, float] = {demand.pair: demand.volume for demand in demands}
    destinations = sorted(flowfield.node_flow.keys() | {destination for _, destination in volumes})

    violations = []
    for destination in destinations:
        branches = flowfield.successor_flow.get(destination, {})
        inflow: dict[int, float] = defaultdict(float)
        for node, sent in branches.items():
            for successor, amount in sent.items():
                inflow[successor] += amount
        flows = flowfield.node_flow.get(destination, {})
        rows = sorted(
            (flows.keys() | branches.keys() | {origin for origin, target in volumes if target == destination})
            - {destination},
        )
        for node in rows:
            own = volumes.get((node, destination), 0.0)
            outflow = sum(
                amount for successor, amount in branches.get(node, {}).items() if not _abandons(network, node, successor)
            )
            outflow += flowfield.abandoned.get((node, destination), 0.0)
            balance = outflow - inflow[node] - own
            recorded = flows.get(node, 0.0) - inflow[node] - own
            scale = max(own, flows.get(node, 0.0), inflow[node])
            if abs(balance) > tolerance(scale):
                violations.append(ConservationViolation(node, destination, balance))
            elif abs(recorded) > tolerance(scale):
                violations.append(ConservationViolation(node, destination, recorded))
    if violations:
        logger.debug(f"Found {len(violations)} conservation violations")
    return violations


@dataclass(frozen=True)
class TreeViolation:
    """A (node, destination) pair where flows do not follow a tree-shaped path."""

    node: int
    destination: int
    reason: str


def check_tree_shape(assignment: SuccessorAssignment, flowfield: FlowField) -> list[TreeViolation]:
    """Check that flows bound to each destination form an in-tree rooted at it.

    Parameters:
        assignment: The successor assignment.
        flowfield: The flow field to check.

    Returns:
        The violations, empty when every destination has a tree-shaped path.
    """
    violations = []
    for destination in sorted(flowfield.successor_flow):
        found = []
        tree = nx.DiGraph()
        tree.add_node(destination)
        for node, sent in sorted(flowfield.successor_flow[destination].items()):
            positive = sorted(successor for successor, amount in sent.items() if amount > tolerance(amount))
            if len(positive) > 1:
                found.append(TreeViolation(node, destination, f"flow split between {positive}"))
            elif positive and positive[0] != assignment.get((node, destination)):
                found.append(TreeViolation(node, destination, f"flow sent to unassigned successor {positive[0]}"))
            elif not positive and flowfield.flow(node, destination) > 0:
                found.append(TreeViolation(node, destination, "positive node flow without outgoing flow"))
            tree.add_edges_from((node, successor) for successor in positive)
        if not found and tree.number_of_edges():
            sinks = [node for node, degree in tree.out_degree() if degree == 0]
            if sinks != [destination] or not nx.is_arborescence(tree.reverse(copy=False)):
                found.append(TreeViolation(destination, destination, "positive-flow arcs are not an in-tree"))
        violations.extend(found)
    if violations:
        logger.debug(f"Found {len(violations)} tree-shape violations")
    return violations


@dataclass(frozen=True)
class EnergyBreakdown:
    """Decomposition of the penalized energy of a solution."""

    transport_cost: float
    """Cost times load summed over real arcs."""
    abandonment_cost: float
    """Shadow price times abandoned volume, carried by virtual arcs."""
    penalty: float
    """Capacity overload summed over real arcs."""
    lam: float
    """Penalty weight."""
    total: float

    @property
    def feasible(self) -> bool:
        """Whether no real arc exceeds its capacity."""
        return self.penalty <= tolerance(self.penalty)

    @property
    def cost(self) -> float:
        """Unpenalized cost: transport plus abandonment."""
        return self.transport_cost + self.abandonment_cost


def _overload(load: float, capacity: float) -> float:
    return load - capacity if load > capacity else 0.0


def energy(network: Routable, flowfield: FlowField, lam: float = DEFAULT_LAMBDA) -> EnergyBreakdown:
    """Evaluate the penalized energy of a flow field.

    Parameters:
        network: The (possibly extended) network.
        flowfield: A propagated flow field.
        lam: Penalty weight of capacity overloads.

    Returns:
        The energy breakdown.
    """
    transport = []
    abandonment = []
    penalty = []
    for arc in sorted(network.all_arcs, key=lambda arc: arc.key):
        load = flowfield.arc_load.get(arc.key, 0.0)
        if not load:
            continue
        if arc.is_virtual:
            abandonment.append(arc.cost * load)
        else:
            transport.append(arc.cost * load)
            penalty.append(_overload(load, arc.capacity))
    transport_cost = math.fsum(transport)
    abandonment_cost = math.fsum(abandonment)
    overload = math.fsum(penalty)
    return EnergyBreakdown(
        transport_cost=transport_cost,
        abandonment_cost=abandonment_cost,
        penalty=overload,
        lam=lam,
        total=transport_cost + abandonment_cost + lam * overload,
    )


def _chain(successors: Mapping[int, int], start: int, destination: int) -> list[int]:
    path = [start]
    node = start
    while node != destination:
        node = successors[node]
        path.append(node)
    return path


def check_move(assignment: SuccessorAssignment, move: Move) -> list[int]:
    """Check that a move keeps the destination reachable from the moved node.

    Parameters:
        assignment: The current assignment.
        move: The move to check.

    Raises:
        CycleError: When the new successor chain comes back to the moved node or loops.

    Returns:
        The new successor chain, from the new successor to the destination.
    """
    node, destination, successor = move
    successors = assignment.toward(destination)
    path = [successor]
    seen = {node, successor}
    current = successor
    while current != destination:
        current = successors[current]
        if current in seen:
            cycle = path[path.index(current) :] if current != node else [node, *path]
            raise CycleError(destination, cycle)
        seen.add(current)
        path.append(current)
    return path


@dataclass
class UpdatePlan:
    """Edits committing a move without a full propagation."""

    move: Move
    """The move to commit."""
    previous: int
    """Successor replaced by the move."""
    quantity: float
    """Flow rerouted by the move."""
    node_flow: dict[int, float] = field(default_factory=dict)
    """Node -> change of its flow towards the move's destination."""
    arc_load: dict[Pair, float] = field(default_factory=dict)
    """Arc -> change of its load."""
    abandoned: dict[Pair, float] = field(default_factory=dict)
    """(node, destination) -> change of the flow entering the virtual element leaving the node."""

    def apply(self, assignment: SuccessorAssignment, flowfield: FlowField) -> None:
        """Commit the move in place.

        Parameters:
            assignment: The assignment the plan was computed on.
            flowfield: Its flow field.
        """
        node, destination, successor = self.move
        assignment[(node, destination)] = successor
        flows = flowfield.node_flow.setdefault(destination, {})
        branches = flowfield.successor_flow.setdefault(destination, {})
        branches[node] = {successor: flows.get(node, 0.0)}
        scale = self.quantity
        for member, change in self.node_flow.items():
            value = _settle(flows.get(member, 0.0) + change, scale)
            flows[member] = value
            branches[member] = {assignment[(member, destination)]: value}
        for key, change in self.arc_load.items():
            value = _settle(flowfield.arc_load.get(key, 0.0) + change, scale)
            if value > 0:
                flowfield.arc_load[key] = value
            else:
                flowfield.arc_load.pop(key, None)
        for key, change in self.abandoned.items():
            value = _settle(flowfield.abandoned.get(key, 0.0) + change, scale)
            if value > 0:
                flowfield.abandoned[key] = value
            else:
                flowfield.abandoned.pop(key, None)


def _settle(value: float, scale: float) -> float:
    return 0.0 if abs(value) <= tolerance(scale) else value


def delta_energy(
    network: Routable,
    flowfield: FlowField,
    assignment: SuccessorAssignment,
    move: Move,
    lam: float = DEFAULT_LAMBDA,
) -> tuple[float, UpdatePlan]:
    """Compute the energy change of a move from the changed portion of the flows only.

    The flow through the moved node leaves the old successor chain up to where
    it meets the new chain, and is added along the new chain up to the same node.

    Parameters:
        network: The (possibly extended) network.
        flowfield: The current flow field.
        assignment: The current assignment.
        move: The move, its successor differing from the current one.
        lam: Penalty weight of capacity overloads.

    Raises:
        CycleError: When the move would create a successor cycle.

    Returns:
        The energy change and the plan committing the move.
    """
    node, destination, successor = move
    previous = assignment[(node, destination)]
    new_chain = check_move(assignment, move)
    quantity = flowfield.flow(node, destination)
    plan = UpdatePlan(move, previous, quantity)
    if quantity <= 0:
        return 0.0, plan

    successors = assignment.toward(destination)
    old_chain = _chain(successors, previous, destination)
    on_old = set(old_chain)
    merge = next(member for member in new_chain if member in on_old)
    old_part = old_chain[: old_chain.index(merge)]
    new_part = new_chain[: new_chain.index(merge)]

    for member in old_part:
        plan.node_flow[member] = -quantity
    for member in new_part:
        plan.node_flow[member] = quantity
    for tail, head in zip([node, *old_part], [*old_part, merge]):
        plan.arc_load[(tail, head)] = -quantity
    for tail, head in zip([node, *new_part], [*new_part, merge]):
        plan.arc_load[(tail, head)] = quantity

    transport = abandonment = penalty = 0.0
    for (tail, head), change in plan.arc_load.items():
        arc = network.arc(tail, head)
        if arc.is_virtual:
            abandonment += arc.cost * change
            if not network.is_virtual_node(tail):
                plan.abandoned[(tail, destination)] = change
        else:
            transport += arc.cost * change
            load = flowfield.arc_load.get(arc.key, 0.0)
            penalty += _overload(load + change, arc.capacity) - _overload(load, arc.capacity)
    return transport + abandonment + lam * penalty, plan


@dataclass(frozen=True)
class PathTrace:
    """The path followed by one shipment."""

    origin: int
    destination: int
    nodes: tuple[int, ...]
    """Stations from the origin; ends at the destination unless abandoned."""
    length: float
    """Cost of the real arcs followed."""
    abandoned: bool = False
    """Whether the shipment leaves the real network through a virtual element (the last node is where it does)."""

    @property
    def routed(self) -> bool:
        """Whether the shipment reaches its destination over real arcs."""
        return not self.abandoned


def extract_paths(
    network: Routable,
    assignment: SuccessorAssignment,
    demands: Iterable[Demand] | None = None,
) -> list[PathTrace]:
    """Trace the path of every shipment by following first front stations.

    Parameters:
        network: The (possibly extended) network.
        assignment: The successor assignment.
        demands: Shipments to trace, the network's shipments by default.

    Raises:
        CycleError: When a successor chain loops.

    Returns:
        One trace per shipment, in lexicographic pair order.
    """
    if demands is None:
        demands = network.demands
    traces = []
    for demand in sorted(demands, key=lambda demand: demand.pair):
        origin, destination = demand.pair
        nodes = [origin]
        costs = []
        abandoned = False
        node = origin
        while node != destination:
            successor = assignment[(node, destination)]
            if _abandons(network, node, successor):
                abandoned = True
                break
            costs.append(network.arc(node, successor).cost)
            if successor in nodes:
                raise CycleError(destination, nodes[nodes.index(successor) :])
            nodes.append(successor)
            node = successor
        traces.append(PathTrace(origin, destination, tuple(nodes), math.fsum(costs), abandoned))
    return traces
