"""Command to show the size of the formulation."""

from __future__ import annotations

from typing import TYPE_CHECKING, Any

from railtree.network import problem_size
from railtree.pruning import prepare_candidates

if TYPE_CHECKING:
    from railtree.network import Network


def size(network: Network, settings: dict[str, Any]) -> int:
    """Size subcommand.

    Parameters:
        network: The network, with its shipments.
        settings: The solver settings.

    Returns:
        int: Always 0.
    """
    epsilon = settings["epsilon"] if settings["prune"] else None
    _, candidates = prepare_candidates(network, epsilon, virtual=settings["virtual"])
    report = problem_size(network, candidates)

    def print_line(*args: Any) -> None:
        print("{:<28} {:>12}".format(*args))

    print_line("Nodes", report.nodes)
    print_line("Arcs", report.arcs)
    print_line("Mean out-degree", f"{report.mean_out_degree:.3f}")
    print_line("Path-choice variables", report.raw_variables)
    print_line("Conservation constraints", report.conservation_rows)
    print_line("Tree-shape constraints", report.tree_rows)
    print_line("Capacity constraints", report.capacity_rows)
    print_line("Variables after pruning", report.pruned_variables)
    print_line("Candidate pairs", report.candidate_pairs)
    print_line("Movable pairs", report.movable_pairs)
    print_line("Neighbourhood size", report.neighborhood_size)
    return 0
