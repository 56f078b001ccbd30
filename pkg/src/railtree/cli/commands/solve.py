"""Command to solve an instance with simulated annealing."""

from __future__ import annotations

import sys
from datetime import timedelta
from typing import TYPE_CHECKING, Any

from loguru import logger

from railtree.annealing import SAParams, anneal_restarts
from railtree.oracle import check_cap, enumerate_assignments
from railtree.pruning import prepare_candidates
from railtree.report import SolverSummary, build_report, emit_trees, write_report, write_trace
from railtree.utils import SignalHandler, human_readable_timedelta

if TYPE_CHECKING:
    from railtree.network import Network
    from railtree.report import SolveReport

RESIDUAL_PENALTY_EXIT_CODE = 2


def print_report(report: SolveReport) -> None:
    """Print the objective decomposition and totals of a report.

    Parameters:
        report: The report to print.
    """

    def print_line(name: str, value: Any) -> None:
        print(f"{name:<22} {value}")

    print_line("Total energy", f"{report.energy.total:.6f}")
    print_line("Transport cost", f"{report.energy.transport_cost:.6f}")
    print_line("Abandonment cost", f"{report.energy.abandonment_cost:.6f}")
    print_line("Capacity overload", f"{report.energy.penalty:.6f}")
    print_line("Mean shipment distance", f"{report.mean_distance:.6f}")
    print_line("Routed volume", f"{report.routed_volume:g}")
    print_line("Abandoned volume", f"{report.abandoned_volume:g}")


def solve(
    network: Network,
    settings: dict[str, Any],
    out: str | None = None,
    trees: list[str] | None = None,
    trace: bool = False,  # noqa: FBT001,FBT002
    oracle: bool = False,  # noqa: FBT001,FBT002
) -> int:
    """Solve subcommand.

    Parameters:
        network: The network to solve, with its shipments.
        settings: The solver settings.
        out: Directory to write report files to.
        trees: Destinations whose tree-shaped paths are written, an empty list for all of them.
        trace: Whether to write the annealing trace.
        oracle: Whether to compare with the exact optimum.

    Raises:
        OracleCapError: With `oracle`, before solving, when the enumeration would exceed the cap.

    Returns:
        int: 0 on success, 2 when the best solution still overloads some arcs.
    """
    params = SAParams.from_mapping(settings)
    epsilon = params.epsilon if settings["prune"] else None
    extended, candidates = prepare_candidates(network, epsilon, virtual=settings["virtual"])
    if oracle:
        check_cap(candidates, int(settings["oracle_cap"]))

    result = anneal_restarts(
        extended,
        candidates,
        params=params,
        restarts=settings["restarts"],
        stop=SignalHandler(["SIGINT", "SIGTERM"]),
    )
    summary = SolverSummary.from_traces(result.traces, result.trace)
    report = build_report(extended, result.assignment, lam=params.lam, summary=summary)

    print_report(report)
    print(f"{'Chains':<22} {summary.chains} ({summary.stop_reason}, {summary.restarts} run(s), seed {summary.seed})")
    print(f"{'Wall time':<22} {human_readable_timedelta(timedelta(seconds=summary.wall_time))}")
    logger.info(f"Solved in {summary.wall_time:.3f}s")

    if out:
        write_report(report, out)
        if trees is not None:
            emit_trees(report, trees or None, out)
        if trace:
            write_trace(result.traces, out)

    if oracle:
        exact = enumerate_assignments(extended, candidates, lam=params.lam, cap=int(settings["oracle_cap"]))
        gap = report.energy.total - exact.optimum
        print(f"{'Exact optimum':<22} {exact.optimum:.6f} (gap {gap:.6f}, {exact.optimal_count} optimal assignment(s))")

    if not report.feasible:
        print("railtree: the best solution still exceeds some capacities", file=sys.stderr)
        return RESIDUAL_PENALTY_EXIT_CODE
    return 0
