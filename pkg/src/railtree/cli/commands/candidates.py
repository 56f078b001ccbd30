"""Command to show the admissible first front stations."""

from __future__ import annotations

from typing import TYPE_CHECKING, Any

from railtree.pruning import prepare_candidates

if TYPE_CHECKING:
    from railtree.network import Network


def candidates(network: Network, settings: dict[str, Any]) -> int:
    """Candidates subcommand.

    Parameters:
        network: The network, with its shipments.
        settings: The solver settings.

    Returns:
        int: Always 0.
    """
    epsilon = settings["epsilon"] if settings["prune"] else None
    extended, table = prepare_candidates(network, epsilon, virtual=settings["virtual"])

    for pair in table.pairs:
        node, destination = pair
        options = []
        for position, (successor, ratio) in enumerate(zip(table[pair], table.ratios[pair])):
            if table.virtual.get(pair) == successor or extended.is_virtual_node(node):
                note = "virtual"
            elif position == 0 and ratio is not None:
                note = "shortest"
            elif ratio is None:
                note = "undefined ratio"
            else:
                note = f"{ratio:.3f}"
            options.append(f"{extended.label(successor)} ({note})")
        print(f"{extended.label(node)} -> {extended.label(destination)}: {', '.join(options)}")
    return 0
