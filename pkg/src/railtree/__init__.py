"""railtree package.

Command-line tool and library to assign rail freight flows along tree-shaped paths
with simulated annealing, and to certify small instances by exact enumeration.
"""

from __future__ import annotations

import sys
from typing import TextIO

from loguru import logger

from railtree.annealing import AnnealResult, SAParams, SATrace, anneal, anneal_restarts, initial_solution, neighbor
from railtree.flows import (
    CycleError,
    EnergyBreakdown,
    FlowField,
    Move,
    PathTrace,
    SuccessorAssignment,
    check_conservation,
    check_tree_shape,
    delta_energy,
    energy,
    extract_paths,
    propagate,
)
from railtree.instance import InstanceError, dump_instance, load_instance, random_instance
from railtree.network import (
    Arc,
    Demand,
    DistanceTable,
    Network,
    NetworkError,
    Node,
    all_pairs_shortest,
    build_network,
    problem_size,
)
from railtree.oracle import OracleCapError, OracleResult, enumerate_assignments
from railtree.pruning import CandidateTable, build_candidates, detour_ratio
from railtree.report import ReportError, SolveReport, build_report, emit_trees, write_report
from railtree.virtual import ExtendedNetwork, extend, read_abandonment

logger.disable("railtree")


def enable_logger(sink: str | TextIO = sys.stderr, level: str = "WARNING") -> None:
    """Enable the logging of messages.

    Configure the `logger` variable imported from `loguru`.

    Parameters:
        sink (file): An opened file pointer, or stream handler. Default to standard error.
        level (str): The log level to use. Possible values are TRACE, DEBUG, INFO, WARNING, ERROR, CRITICAL.
            Default to WARNING.
    """
    logger.remove()
    logger.configure(handlers=[{"sink": sink, "level": level}])  # type: ignore[misc,list-item]
    logger.enable("railtree")


__all__ = [
    "AnnealResult",
    "Arc",
    "CandidateTable",
    "CycleError",
    "Demand",
    "DistanceTable",
    "EnergyBreakdown",
    "ExtendedNetwork",
    "FlowField",
    "InstanceError",
    "Move",
    "Network",
    "NetworkError",
    "Node",
    "OracleCapError",
    "OracleResult",
    "PathTrace",
    "ReportError",
    "SAParams",
    "SATrace",
    "SolveReport",
    "SuccessorAssignment",
    "all_pairs_shortest",
    "anneal",
    "anneal_restarts",
    "build_candidates",
    "build_network",
    "build_report",
    "check_conservation",
    "check_tree_shape",
    "delta_energy",
    "detour_ratio",
    "dump_instance",
    "emit_trees",
    "enable_logger",
    "energy",
    "enumerate_assignments",
    "extend",
    "extract_paths",
    "initial_solution",
    "load_instance",
    "neighbor",
    "problem_size",
    "propagate",
    "random_instance",
    "read_abandonment",
    "write_report",
]
