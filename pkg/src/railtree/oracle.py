"""Exact oracle module.

Small instances are solved exactly by enumerating every successor assignment
of the candidate table, to certify what the annealing search finds.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from loguru import logger

from railtree.flows import DEFAULT_LAMBDA, CycleError, EnergyBreakdown, SuccessorAssignment, energy, propagate
from railtree.network import tolerance

if TYPE_CHECKING:
    from collections.abc import Iterable

    from railtree.flows import Routable
    from railtree.network import Demand
    from railtree.pruning import CandidateTable

DEFAULT_CAP = 10**7
DEFAULT_KEEP = 1000


class OracleCapError(Exception):
    """Raised when there are too many assignments to enumerate."""

    def __init__(self, product: int, cap: int) -> None:
        """Initialize the exception.

        Parameters:
            product: Number of assignments of the candidate table.
            cap: The configured maximum.
        """
        self.product = product
        self.cap = cap
        super().__init__(f"refusing to enumerate {product} assignments (cap is {cap})")


@dataclass
class OracleResult:
    """Outcome of the exhaustive enumeration."""

    optimum: float
    """Lowest energy over acyclic assignments, infinite when every assignment has a flow-bearing cycle."""
    energy: EnergyBreakdown | None
    """Breakdown of the first optimal assignment."""
    assignments: list[SuccessorAssignment] = field(default_factory=list)
    """Optimal assignments, in enumeration order (at most `keep` of them)."""
    optimal_count: int = 0
    """Number of optimal assignments, including those not kept."""
    enumerated: int = 0
    infeasible: int = 0
    """Assignments rejected because of flow-bearing cycles."""

    @property
    def best(self) -> SuccessorAssignment | None:
        """The first optimal assignment."""
        return self.assignments[0] if self.assignments else None


def check_cap(candidates: CandidateTable, cap: int = DEFAULT_CAP) -> None:
    """Refuse candidate tables with too many assignments to enumerate.

    Parameters:
        candidates: The candidate table.
        cap: Maximum number of assignments.

    Raises:
        OracleCapError: When the candidate table has more than `cap` assignments.
    """
    if candidates.product > cap:
        raise OracleCapError(candidates.product, cap)

def enumerate_assignments(
    network: Routable,
    candidates: CandidateTable,
    demands: Iterable[Demand] | None = None,
    lam: float = DEFAULT_LAMBDA,
    *,
    cap: int = DEFAULT_CAP,
    keep: int = DEFAULT_KEEP,
) -> OracleResult:
    """Evaluate every successor assignment and return the optimal ones.

    Assignments are visited in lexicographic order of the pairs and of their candidates.

    Parameters:
        network: The (possibly extended) network.
        candidates: The candidate table.
        demands: Shipments, the network's shipments by default.
        lam: Penalty weight of capacity overloads.
        cap: Maximum number of assignments.
        keep: Maximum number of optimal assignments kept.

    Raises:
        OracleCapError: When the candidate table has more than `cap` assignments.
        ValueError: When `keep` is below 1.

    Returns:
        The enumeration result.
    """
    if keep < 1:
        raise ValueError(f"keep must be at least 1, got {keep}")
    check_cap(candidates, cap)
    demands = tuple(network.demands if demands is None else demands)
    pairs = candidates.pairs
    logger.info(f"Enumerating {candidates.product} assignments over {len(pairs)} pairs")

    result = OracleResult(optimum=float("inf"), energy=None)
    for choice in itertools.product(*(candidates[pair] for pair in pairs)):
        result.enumerated += 1
        assignment = SuccessorAssignment(dict(zip(pairs, choice)))
        try:
            flowfield = propagate(network, assignment, demands)
        except CycleError:
            result.infeasible += 1
            continue
        breakdown = energy(network, flowfield, lam)
        if not result.assignments or breakdown.total < result.optimum - tolerance(result.optimum):
            result.optimum = breakdown.total
            result.energy = breakdown
            result.assignments = [assignment]
            result.optimal_count = 1
        elif breakdown.total <= result.optimum + tolerance(result.optimum):
            result.optimal_count += 1
            if len(result.assignments) < keep:
                result.assignments.append(assignment)

    logger.info(
        f"Enumerated {result.enumerated} assignments ({result.infeasible} cyclic): "
        f"optimum {result.optimum:.6f} reached by {result.optimal_count}",
    )
    return result
