"""The main CLI function."""

from __future__ import annotations

import sys
from pathlib import Path

from loguru import logger

from railtree import enable_logger
from railtree.cli.commands.candidates import candidates
from railtree.cli.commands.oracle import oracle
from railtree.cli.commands.size import size
from railtree.cli.commands.solve import solve
from railtree.cli.parser import check_args, get_parser
from railtree.instance import InstanceError, load_instance
from railtree.oracle import OracleCapError
from railtree.utils import OPTIONAL_KEYS, load_configuration

commands = {
    "solve": solve,
    "oracle": oracle,
    "size": size,
    "candidates": candidates,
}

ORACLE_CAP_EXIT_CODE = 3


def main(args: list[str] | None = None) -> int:
    """Run the main program.

    This function is executed when you type `railtree` or `python -m railtree`.

    Parameters:
        args: Parameters passed from the command line.

    Returns:
        An exit code.
    """
    parser = get_parser()
    opts = parser.parse_args(args=args)
    kwargs = opts.__dict__

    log_level = kwargs.pop("log_level")
    log_path = kwargs.pop("log_path")

    if log_path:
        log_path = Path(log_path)
        if log_path.is_dir():
            log_path = log_path / "railtree-{time}.log"
        enable_logger(sink=log_path, level=log_level or "WARNING")
    elif log_level:
        enable_logger(sink=sys.stderr, level=log_level)

    logger.debug("Checking arguments")
    check_args(parser, opts)

    settings = load_configuration(kwargs.pop("config"))
    for key in list(kwargs):
        if key in settings or key in OPTIONAL_KEYS:
            value = kwargs.pop(key)
            if value is not None:
                settings[key] = value
    logger.debug(f"Solver settings: {settings}")

    subcommand = kwargs.pop("subcommand")
    kwargs.pop("debug_info", None)
    network_file = kwargs.pop("network")
    demands_file = kwargs.pop("demands")

    logger.debug("Running subcommand " + subcommand)
    try:
        network, _ = load_instance(network_file, demands_file)
        return commands[subcommand](network, settings, **kwargs)
    except InstanceError as error:
        print(f"railtree: {error}", file=sys.stderr)
        return error.code
    except OracleCapError as error:
        print(f"railtree: {error}, raise it with --oracle-cap", file=sys.stderr)
        return ORACLE_CAP_EXIT_CODE
    except ValueError as error:
        print(f"railtree: {error}", file=sys.stderr)
        return 1
