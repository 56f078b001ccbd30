"""Command to solve an instance exactly."""

from __future__ import annotations

import sys
from typing import TYPE_CHECKING, Any

from railtree.cli.commands.solve import RESIDUAL_PENALTY_EXIT_CODE, print_report
from railtree.oracle import enumerate_assignments
from railtree.pruning import prepare_candidates
from railtree.report import build_report, write_report

if TYPE_CHECKING:
    from railtree.network import Network


def oracle(network: Network, settings: dict[str, Any], out: str | None = None) -> int:
    """Oracle subcommand.

    Parameters:
        network: The network to solve, with its shipments.
        settings: The solver settings.
        out: Directory to write the report of the first optimal assignment to.

    Returns:
        int: 0 on success, 1 when every assignment is cyclic, 2 when the optimum overloads some arcs.
    """
    epsilon = settings["epsilon"] if settings["prune"] else None
    extended, candidates = prepare_candidates(network, epsilon, virtual=settings["virtual"])
    result = enumerate_assignments(extended, candidates, lam=settings["lambda"], cap=int(settings["oracle_cap"]))
    if result.best is None:
        print("railtree: every assignment sends flow around a successor cycle", file=sys.stderr)
        return 1

    report = build_report(extended, result.best, lam=settings["lambda"])
    print_report(report)
    print(f"{'Assignments':<22} {result.enumerated} ({result.infeasible} cyclic)")
    print(f"{'Optimal assignments':<22} {result.optimal_count}")

    if out:
        write_report(report, out)

    if not report.feasible:
        return RESIDUAL_PENALTY_EXIT_CODE
    return 0
