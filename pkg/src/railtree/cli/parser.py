# Why does this file exist, and why not put this in `__main__`?
#
# You might be tempted to import things from `__main__` later,
# but that will cause problems: the code will get executed twice:
#
# - When you run `python -m railtree` python will execute
#   `__main__.py` as a script. That means there won't be any
#   `railtree.__main__` in `sys.modules`.
# - When you import `__main__` it will get executed again (as a module) because
#   there's no `railtree.__main__` in `sys.modules`.

"""Module that contains the command line application."""

from __future__ import annotations

import argparse
import math
import sys
from typing import Any

from railtree import debug


def check_args(parser: argparse.ArgumentParser, opts: argparse.Namespace) -> None:
    """Additional checks for command line arguments.

    Parameters:
        parser: An argument parser.
        opts: Parsed options.
    """
    if not opts.subcommand:
        parser.error("the following arguments are required: COMMAND")

    subparsers = next(action for action in parser._actions if isinstance(action, argparse._SubParsersAction)).choices

    if opts.subcommand == "solve" and not opts.out:
        if opts.trees is not None:
            subparsers["solve"].error("argument --trees: requires --out")
        if opts.trace:
            subparsers["solve"].error("argument --trace: requires --out")


def parse_labels(value: str) -> list[str]:
    """Parse a comma-separated list of station labels.

    Parameters:
        value: The labels, separated by commas.

    Returns:
        The labels, blanks removed.
    """
    return [label.strip() for label in value.split(",") if label.strip()]


def positive_int(value: str) -> int:
    """Parse a strictly positive integer.

    Parameters:
        value: The string to parse.

    Raises:
        ArgumentTypeError: When the value is not a positive integer.

    Returns:
        The integer.
    """
    try:
        number = int(float(value))
    except (ValueError, OverflowError):
        raise argparse.ArgumentTypeError(f"invalid positive integer: {value!r}") from None
    if number < 1 or number != float(value):
        raise argparse.ArgumentTypeError(f"invalid positive integer: {value!r}")
    return number


def positive_float(value: str) -> float:
    """Parse a strictly positive finite number.

    Parameters:
        value: The string to parse.

    Raises:
        ArgumentTypeError: When the value is not a positive finite number.

    Returns:
        The number.
    """
    try:
        number = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid positive number: {value!r}") from None
    if not (math.isfinite(number) and number > 0):
        raise argparse.ArgumentTypeError(f"invalid positive number: {value!r}")
    return number


class _DebugInfo(argparse.Action):
    def __init__(self, nargs: int | str | None = 0, **kwargs: Any) -> None:
        super().__init__(nargs=nargs, **kwargs)

    def __call__(self, *args: Any, **kwargs: Any) -> None:  # noqa: ARG002
        debug.print_debug_info()
        sys.exit(0)


def get_parser() -> argparse.ArgumentParser:
    """Return a parser for the command-line options and arguments.

    Returns:
        An argument parser.
    """
    usage = "%(prog)s [GLOBAL_OPTS...] COMMAND [COMMAND_OPTS...] NETWORK DEMANDS"
    description = "Assign rail freight flows along tree-shaped paths with simulated annealing."
    parser = argparse.ArgumentParser(add_help=False, usage=usage, description=description, prog="railtree")

    main_help = "Show this help message and exit. Commands also accept the -h/--help option."
    subcommand_help = "Show this help message and exit."

    global_options = parser.add_argument_group(title="Global options")
    global_options.add_argument("-h", "--help", action="help", help=main_help)
    global_options.add_argument("-V", "--version", action="version", version=f"%(prog)s {debug.get_version()}")
    global_options.add_argument("--debug-info", action=_DebugInfo, help="Print debug information.")
    global_options.add_argument(
        "-L",
        "--log-level",
        dest="log_level",
        default=None,
        help="Log level to use",
        choices=("TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL"),
        type=str.upper,
    )
    global_options.add_argument(
        "-P",
        "--log-path",
        dest="log_path",
        default=None,
        help="Log path to use. Can be a directory or a file.",
    )
    global_options.add_argument(
        "-c",
        "--config",
        dest="config",
        default=None,
        help="Configuration file to use instead of $RAILTREE_CONFIG or the user configuration file.",
    )

    # ========= SUBPARSERS ========= #
    subparsers = parser.add_subparsers(dest="subcommand", title="Commands", metavar="", prog="railtree")

    def subparser(command: str, text: str, **kwargs: Any) -> argparse.ArgumentParser:
        sub = subparsers.add_parser(command, add_help=False, help=text, description=text, **kwargs)
        sub.add_argument("-h", "--help", action="help", help=subcommand_help)
        sub.add_argument("network", metavar="NETWORK", help="The network file (NODES and ARCS sections).")
        sub.add_argument("demands", metavar="DEMANDS", help="The demands file (origin,destination,volume[,shadow_price]).")
        return sub

    solve_parser = subparser("solve", "Search a low-energy flow assignment with simulated annealing.")
    oracle_parser = subparser("oracle", "Solve a small instance exactly by enumeration.")
    size_parser = subparser("size", "Show the size of the formulation, before and after pruning.")
    candidates_parser = subparser("candidates", "Show the admissible first front stations of every pair.")

    # ========= REUSABLE OPTIONS ========= #
    def add_epsilon_argument(_parser: argparse.ArgumentParser) -> None:
        _parser.add_argument(
            "-e",
            "--epsilon",
            dest="epsilon",
            type=float,
            help="Allowed relative detour ratio of first front stations. Default: 1.4.",
        )
        _parser.add_argument(
            "--no-prune",
            dest="prune",
            action="store_const",
            const=False,
            help="Admit every adjacent station able to reach the destination.",
        )

    def add_virtual_argument(_parser: argparse.ArgumentParser) -> None:
        _parser.add_argument(
            "--no-virtual",
            dest="virtual",
            action="store_const",
            const=False,
            help="Do not add virtual arcs: overloads are only penalized, and unreachable demands are errors.",
        )

    def add_lambda_argument(_parser: argparse.ArgumentParser) -> None:
        _parser.add_argument(
            "-l",
            "--lambda",
            dest="lambda",
            type=float,
            help="Penalty weight of capacity overloads. Default: 600.",
        )

    def add_oracle_cap_argument(_parser: argparse.ArgumentParser) -> None:
        _parser.add_argument(
            "--oracle-cap",
            dest="oracle_cap",
            type=positive_int,
            help="Refuse to enumerate more assignments than this. Default: 1e7.",
        )

    def add_out_argument(_parser: argparse.ArgumentParser) -> None:
        _parser.add_argument("-o", "--out", dest="out", default=None, help="Directory to write report files to.")

    # ========= SOLVE PARSER ========= #
    add_epsilon_argument(solve_parser)
    add_virtual_argument(solve_parser)
    add_lambda_argument(solve_parser)
    add_oracle_cap_argument(solve_parser)
    add_out_argument(solve_parser)
    solve_parser.add_argument("-K", "--K", dest="k", type=float, help="Chain length multiplier, in [3, 6]. Default: 4.")
    solve_parser.add_argument(
        "--delta",
        dest="delta",
        type=float,
        help="Distance parameter of the statistical cooling. Default: 0.1.",
    )
    solve_parser.add_argument("--alpha", dest="alpha", type=float, help="Geometric cooling factor. Default: 0.95.")
    solve_parser.add_argument(
        "--switch-iter",
        dest="switch_iter",
        type=int,
        help="Chains cooled statistically before switching to geometric cooling. Default: 30.",
    )
    solve_parser.add_argument(
        "--t0-accept",
        dest="t0_accept",
        type=float,
        help="Target acceptance ratio of worsening moves at the initial temperature. Default: 0.9.",
    )
    solve_parser.add_argument("--t0", dest="t0", type=float, help="Initial temperature, skipping calibration.")
    solve_parser.add_argument(
        "--t-min",
        dest="t_min",
        type=float,
        help="Stop temperature. Default: initial temperature times 1e-4.",
    )
    solve_parser.add_argument(
        "--stall-chains",
        dest="stall_chains",
        type=positive_int,
        help="Stop after this many chains without accepted moves. Default: 3.",
    )
    solve_parser.add_argument("-s", "--seed", dest="seed", type=int, help="Random seed.")
    solve_parser.add_argument(
        "-r",
        "--restarts",
        dest="restarts",
        type=positive_int,
        help="Independent runs, the best one is kept. Default: 1.",
    )
    solve_parser.add_argument(
        "--max-chains",
        dest="max_chains",
        type=positive_int,
        help="Stop after this many chains.",
    )
    solve_parser.add_argument(
        "--max-chain-moves",
        dest="max_chain_moves",
        type=positive_int,
        help="Generate at most this many moves per chain. Default: 20000.",
    )
    solve_parser.add_argument(
        "--patience",
        dest="patience",
        type=positive_int,
        help="Stop after this many geometric-cooling chains without a new best energy. Default: 40.",
    )
    solve_parser.add_argument(
        "--time-limit",
        dest="time_limit",
        type=positive_float,
        help="Stop each run after the chain ending past this many seconds.",
    )
    solve_parser.add_argument(
        "--oracle",
        dest="oracle",
        action="store_true",
        help="Also enumerate every assignment and compare with the exact optimum.",
    )
    solve_parser.add_argument(
        "-t",
        "--trees",
        dest="trees",
        nargs="?",
        const=[],
        type=parse_labels,
        help="Write the tree-shaped paths of these destinations (comma-separated labels, all when omitted).",
    )
    solve_parser.add_argument(
        "--trace",
        dest="trace",
        action="store_true",
        help="Write the annealing trace to trace.log.",
    )

    # ========= ORACLE PARSER ========= #
    add_epsilon_argument(oracle_parser)
    add_virtual_argument(oracle_parser)
    add_lambda_argument(oracle_parser)
    add_oracle_cap_argument(oracle_parser)
    add_out_argument(oracle_parser)

    # ========= SIZE PARSER ========= #
    add_epsilon_argument(size_parser)

    # ========= CANDIDATES PARSER ========= #
    add_epsilon_argument(candidates_parser)
    add_virtual_argument(candidates_parser)

    return parser
