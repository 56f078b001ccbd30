"""Candidate pruning module.

This module builds, for every (node, destination) pair, the list of admissible
first front stations, filtering adjacent stations with the relative detour ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING

from loguru import logger

from railtree.network import TOLERANCE, NetworkError, Pair, all_pairs_shortest, tolerance
from railtree.virtual import extend

if TYPE_CHECKING:
    from collections.abc import Iterable, Iterator

    from railtree.network import DistanceTable, Network
    from railtree.virtual import ExtendedNetwork

DEFAULT_EPSILON = 1.4


@dataclass(frozen=True)
class CandidateTable:
    """Admissible first front stations per (node, destination) pair.

    For a pair that can reach its destination through real arcs, the canonical
    shortest-path successor always comes first, followed by the other admitted
    stations by increasing detour ratio. A virtual successor, when present, comes last.
    """

    candidates: dict[Pair, tuple[int, ...]]
    epsilon: float | None = DEFAULT_EPSILON
    """Detour threshold, `None` when pruning is disabled."""
    ratios: dict[Pair, tuple[float | None, ...]] = field(default_factory=dict, repr=False)
    """Detour ratio of each candidate, `None` for virtual successors and unpruned undefined ratios."""
    virtual: dict[Pair, int] = field(default_factory=dict, repr=False)
    """Virtual successor of each pair served by a virtual element."""

    def __getitem__(self, pair: Pair) -> tuple[int, ...]:
        return self.candidates[pair]

    def __contains__(self, pair: object) -> bool:
        return pair in self.candidates

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self) -> Iterator[Pair]:
        return iter(self.pairs)

    @cached_property
    def pairs(self) -> tuple[Pair, ...]:
        """All pairs, in lexicographic order."""
        return tuple(sorted(self.candidates))

    @cached_property
    def movable_pairs(self) -> tuple[Pair, ...]:
        """Pairs offering at least two candidates, in lexicographic order."""
        return tuple(pair for pair in self.pairs if len(self.candidates[pair]) > 1)

    @cached_property
    def neighborhood_size(self) -> int:
        """Number of neighbours of any solution: sum over pairs of candidates minus one."""
        return sum(len(options) - 1 for options in self.candidates.values())

    @cached_property
    def product(self) -> int:
        """Number of distinct successor assignments."""
        return math.prod(len(options) for options in self.candidates.values())

    @cached_property
    def real_count(self) -> int:
        """Number of real-arc candidates, excluding virtual successors and virtual nodes."""
        count = 0
        for pair, options in self.candidates.items():
            if pair[0] in self.virtual_nodes:
                continue
            count += len(options) - (pair in self.virtual)
        return count

    @cached_property
    def virtual_nodes(self) -> frozenset[int]:
        """Virtual stations present in the table."""
        return frozenset(
            successor for pair, successor in self.virtual.items() if successor != pair[1]
        )

    def shortest(self, node: int, destination: int) -> int:
        """Return the preferred candidate of a pair: its canonical shortest-path successor when it has one.

        Parameters:
            node: A station.
            destination: A destination.

        Returns:
            The first candidate.
        """
        return self.candidates[(node, destination)][0]


def _common_tail_start(first: list[int], second: list[int]) -> int:
    # Both chains end at the destination: walk back while they share arcs.
    a, b = len(first) - 1, len(second) - 1
    while a > 0 and b > 0 and first[a - 1] == second[b - 1]:
        a -= 1
        b -= 1
    return first[a]


def detour_ratio(network: Network, dist: DistanceTable, node: int, destination: int, via: int) -> float | None:
    """Compute the relative detour ratio of reaching a destination through an adjacent station.

    The ratio compares the shortest path through `via` with the shortest path,
    after removing the tail both canonical paths share towards the destination.

    Parameters:
        network: The network.
        dist: Distances towards the destination.
        node: The current station.
        destination: The destination.
        via: The adjacent station considered as first front station.

    Raises:
        NetworkError: When `via` is not adjacent to `node`.

    Returns:
        The ratio, or None when it is undefined (unreachable, or the shared tail is the whole shortest path).
    """
    if not network.has_arc(node, via):
        raise NetworkError(f"station {via} is not adjacent to station {node}")
    shortest = dist.distance(node, destination)
    through = dist.distance(via, destination)
    if math.isinf(shortest) or math.isinf(through):
        return None
    if via == dist.successor(node, destination):
        return 1.0
    tail_start = _common_tail_start(dist.chain(node, destination), [node, *dist.chain(via, destination)])
    shared = dist.distance(tail_start, destination)
    if shortest - shared <= tolerance(shortest):
        return None
    detour = network.arc(node, via).cost + through
    if detour <= shortest + tolerance(shortest):
        return 1.0
    return (detour - shared) / (shortest - shared)


def build_candidates(
    network: Network,
    dist: DistanceTable,
    destinations: Iterable[int] | None = None,
    epsilon: float | None = DEFAULT_EPSILON,
    extended: ExtendedNetwork | None = None,
) -> CandidateTable:
    """Build the admissible first front stations of every (node, destination) pair.

    Parameters:
        network: The real network.
        dist: Distances towards the destinations.
        destinations: Destinations to cover, the shipment destinations by default.
        epsilon: Detour threshold (at least 1), or None to admit every station able to reach the destination.
        extended: The extended network, to append virtual successors.

    Raises:
        ValueError: When epsilon is below 1.
        NetworkError: When a shipment has no candidate at its origin.

    Returns:
        The candidate table.
    """
    if epsilon is not None and epsilon < 1:
        raise ValueError(f"epsilon must be at least 1, got {epsilon}")
    destinations = sorted(set(network.destinations if destinations is None else destinations))

    candidates: dict[Pair, tuple[int, ...]] = {}
    ratios: dict[Pair, tuple[float | None, ...]] = {}
    virtual: dict[Pair, int] = {}

    for destination in destinations:
        for node in range(network.node_count):
            if node == destination:
                continue
            options: list[int] = []
            scores: list[float | None] = []
            canonical = dist.successor(node, destination)
            if canonical is not None:
                scored = []
                for via, _ in network.successors(node):
                    if via == canonical:
                        continue
                    ratio = detour_ratio(network, dist, node, destination, via)
                    if ratio is not None:
                        scored.append((ratio, via))
                    elif epsilon is None and not math.isinf(dist.distance(via, destination)):
                        scored.append((math.inf, via))
                options.append(canonical)
                scores.append(1.0)
                for ratio, via in sorted(scored):
                    if epsilon is None or ratio <= epsilon + TOLERANCE:
                        options.append(via)
                        scores.append(None if math.isinf(ratio) else ratio)
            if extended is not None and (successor := extended.virtual_successor(node, destination)) is not None:
                options.append(successor)
                scores.append(None)
                virtual[(node, destination)] = successor
            if options:
                candidates[(node, destination)] = tuple(options)
                ratios[(node, destination)] = tuple(scores)

        if extended is not None:
            for virtual_node in extended.virtual_nodes_towards(destination):
                candidates[(virtual_node, destination)] = (destination,)
                ratios[(virtual_node, destination)] = (None,)

    for demand in network.demands:
        if demand.destination in destinations and demand.pair not in candidates:
            raise NetworkError(
                f"demand {network.label(demand.origin)}->{network.label(demand.destination)} "
                "has no admissible first front station (unreachable, and virtual arcs are disabled)",
            )

    table = CandidateTable(candidates, epsilon, ratios, virtual)
    logger.debug(
        f"Built candidates for {len(table)} pairs: {table.real_count} real candidates, "
        f"neighbourhood size {table.neighborhood_size}",
    )
    return table


def prepare_candidates(
    network: Network,
    epsilon: float | None = DEFAULT_EPSILON,
    *,
    virtual: bool = True,
) -> tuple[ExtendedNetwork, CandidateTable]:
    """Extend a network with virtual elements and build its candidate table.

    Parameters:
        network: The real network.
        epsilon: Detour threshold, or None to disable pruning.
        virtual: Whether shipments may be abandoned through virtual elements.

    Raises:
        NetworkError: When virtual elements are disabled and a shipment has no real path.

    Returns:
        The extended network and the candidate table.
    """
    dist = all_pairs_shortest(network)
    extended = extend(network, enabled=virtual)
    return extended, build_candidates(network, dist, epsilon=epsilon, extended=extended)
