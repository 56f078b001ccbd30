"""Report module.

Everything in a [`SolveReport`][railtree.report.SolveReport] is recomputed from the
instance and the reported successor assignment, so a stored assignment always
regenerates the same report.
"""

from __future__ import annotations

import csv
import json
import math
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

from loguru import logger

from railtree.flows import DEFAULT_LAMBDA, EnergyBreakdown, PathTrace, energy, extract_paths, propagate
from railtree.instance import format_number
from railtree.virtual import read_abandonment

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from railtree.annealing import SATrace
    from railtree.flows import SuccessorAssignment
    from railtree.network import Demand
    from railtree.virtual import ExtendedNetwork


class ReportError(ValueError):
    """Raised when a report cannot be emitted as requested."""


@dataclass(frozen=True)
class ArcUsage:
    """Load of a real arc."""

    source: str
    target: str
    cost: float
    load: float
    capacity: float
    utilization: float | None
    """Load over capacity, None for unlimited or zero-capacity arcs."""
    overload: float


@dataclass(frozen=True)
class TreeEdge:
    """A positive-flow arc of the tree-shaped path towards one destination."""

    destination: str
    source: str
    target: str
    flow: float


@dataclass(frozen=True)
class AbandonmentRow:
    """Abandoned volume of one shipment's virtual element."""

    origin: str
    destination: str
    drained: float
    """Flow entering the virtual element (may include upstream transfers)."""
    attributed: float
    """Own shipment volume abandoned."""
    upstream: bool
    """Whether the element drains more than its own shipment."""


@dataclass(frozen=True)
class SolverSummary:
    """How the reported solution was found."""

    chains: int = 0
    initial_temperature: float = 0.0
    final_temperature: float = 0.0
    seed: int | None = None
    restarts: int = 1
    stop_reason: str = ""
    wall_time: float = 0.0

    @classmethod
    def from_traces(cls, traces: list[SATrace], best: SATrace) -> SolverSummary:
        """Summarize annealing runs.

        Parameters:
            traces: Traces of every run.
            best: Trace of the run that found the reported solution.

        Returns:
            The summary.
        """
        return cls(
            chains=sum(len(trace.chains) for trace in traces),
            initial_temperature=best.initial_temperature,
            final_temperature=best.final_temperature,
            seed=best.seed,
            restarts=len(traces),
            stop_reason=best.stop_reason,
            wall_time=sum(trace.wall_time for trace in traces),
        )


@dataclass
class SolveReport:
    """Everything reported about a solution."""

    energy: EnergyBreakdown
    stations: tuple[str, ...]
    destinations: tuple[str, ...]
    paths: list[PathTrace]
    arcs: list[ArcUsage]
    trees: dict[str, list[TreeEdge]]
    abandonment: list[AbandonmentRow]
    assignment: list[tuple[str, str, str]]
    """`(node, destination, successor)` labels, in pair order."""
    mean_distance: float
    """Volume-weighted mean path length of the shipments routed over real arcs."""
    routed_volume: float
    abandoned_volume: float
    labels: tuple[str, ...] = field(repr=False, default=())
    """Labels of real and virtual nodes, by index."""
    summary: SolverSummary | None = None

    @property
    def feasible(self) -> bool:
        """Whether no real arc is overloaded."""
        return self.energy.feasible

    def as_dict(self, *, timing: bool = False) -> dict[str, Any]:
        """Convert the report to plain data.

        Parameters:
            timing: Whether to include the wall time, which breaks byte-identical regeneration.

        Returns:
            The report as a dictionary.
        """
        summary = None
        if self.summary is not None:
            summary = asdict(self.summary)
            if not timing:
                summary.pop("wall_time")
        return {
            "objective": {
                "transport_cost": self.energy.transport_cost,
                "abandonment_cost": self.energy.abandonment_cost,
                "penalty": self.energy.penalty,
                "lambda": self.energy.lam,
                "total": self.energy.total,
            },
            "totals": {
                "transport_cost": self.energy.transport_cost,
                "mean_shipment_distance": self.mean_distance,
                "routed_volume": self.routed_volume,
                "abandoned_volume": self.abandoned_volume,
            },
            "paths": [
                {
                    "origin": self.labels[trace.origin],
                    "destination": self.labels[trace.destination],
                    "nodes": [self.labels[node] for node in trace.nodes],
                    "length": trace.length,
                    "abandoned": trace.abandoned,
                }
                for trace in self.paths
            ],
            "arcs": [
                {**asdict(usage), "capacity": None if math.isinf(usage.capacity) else usage.capacity}
                for usage in self.arcs
            ],
            "trees": {
                destination: [{"from": edge.source, "to": edge.target, "flow": edge.flow} for edge in edges]
                for destination, edges in self.trees.items()
            },
            "abandonment": [asdict(row) for row in self.abandonment],
            "assignment": [list(entry) for entry in self.assignment],
            "solver": summary,
        }

    def to_json(self, *, timing: bool = False) -> str:
        """Serialize the report.

        Parameters:
            timing: Whether to include the wall time.

        Returns:
            The JSON document.
        """
        return json.dumps(self.as_dict(timing=timing), indent=2, allow_nan=False) + "\n"


def build_report(
    extended: ExtendedNetwork,
    assignment: SuccessorAssignment,
    demands: Iterable[Demand] | None = None,
    lam: float = DEFAULT_LAMBDA,
    summary: SolverSummary | None = None,
) -> SolveReport:
    """Build the report of a successor assignment.

    Parameters:
        extended: The extended network the assignment was searched on.
        assignment: The successor assignment.
        demands: Shipments, the network's shipments by default.
        lam: Penalty weight of capacity overloads.
        summary: How the solution was found.

    Returns:
        The report.
    """
    demands = tuple(extended.demands if demands is None else demands)
    flowfield = propagate(extended, assignment, demands)
    breakdown = energy(extended, flowfield, lam)
    paths = extract_paths(extended, assignment, demands)
    abandonment = read_abandonment(extended, flowfield, demands)
    labels = tuple(extended.label(node) for node in range(extended.node_count))

    arcs = []
    for arc in sorted(extended.base.arcs, key=lambda arc: arc.key):
        load = flowfield.load(*arc.key)
        utilization = load / arc.capacity if 0 < arc.capacity < math.inf else None
        overload = load - arc.capacity if load > arc.capacity else 0.0
        arcs.append(ArcUsage(labels[arc.source], labels[arc.target], arc.cost, load, arc.capacity, utilization, overload))

    trees: dict[str, list[TreeEdge]] = {}
    for destination in extended.destinations:
        edges = []
        for node, sent in sorted(flowfield.successor_flow.get(destination, {}).items()):
            for successor, amount in sorted(sent.items()):
                if amount > 0:
                    edges.append(TreeEdge(labels[destination], labels[node], labels[successor], amount))
        trees[labels[destination]] = edges

    rows = []
    for pair in sorted(abandonment.by_element.keys() | abandonment.by_demand.keys()):
        rows.append(
            AbandonmentRow(
                origin=labels[pair[0]],
                destination=labels[pair[1]],
                drained=abandonment.by_element.get(pair, 0.0),
                attributed=abandonment.by_demand.get(pair, 0.0),
                upstream=pair in abandonment.upstream,
            ),
        )

    volumes = {demand.pair: demand.volume for demand in demands}
    routed = [trace for trace in paths if trace.routed]
    routed_volume = math.fsum(volumes[trace.origin, trace.destination] for trace in routed)
    distance = math.fsum(volumes[trace.origin, trace.destination] * trace.length for trace in routed)

    return SolveReport(
        energy=breakdown,
        stations=labels[: extended.base.node_count],
        destinations=tuple(labels[destination] for destination in extended.destinations),
        paths=paths,
        arcs=arcs,
        trees=trees,
        abandonment=rows,
        assignment=[(labels[node], labels[target], labels[successor]) for (node, target), successor in assignment.items()],
        mean_distance=distance / routed_volume if routed_volume else 0.0,
        routed_volume=routed_volume,
        abandoned_volume=math.fsum(volumes[trace.origin, trace.destination] for trace in paths if trace.abandoned),
        labels=labels,
        summary=summary,
    )


def write_report(report: SolveReport, out_dir: str | Path) -> list[Path]:
    """Write `report.json` and the arc utilization table `arcs.csv`.

    Parameters:
        report: The report.
        out_dir: The output directory, created when missing.

    Returns:
        The written files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_file = out_dir / "report.json"
    report_file.write_text(report.to_json())
    arcs_file = out_dir / "arcs.csv"
    with arcs_file.open("w", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(("from", "to", "cost", "load", "capacity", "utilization", "overload"))
        writer.writerows(
            (
                usage.source,
                usage.target,
                format_number(usage.cost),
                format_number(usage.load),
                format_number(usage.capacity),
                "" if usage.utilization is None else f"{usage.utilization:.6f}",
                format_number(usage.overload),
            )
            for usage in report.arcs
        )
    logger.debug(f"Wrote {report_file} and {arcs_file}")
    return [report_file, arcs_file]


def _quote(label: str) -> str:
    return '"' + label.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _file_stem(label: str) -> str:
    return re.sub(r"[^\w.-]", "_", label)


def _file_stems(stations: Sequence[str]) -> dict[str, str]:
    # stems clashing when case is ignored get the station id appended
    stems = [_file_stem(label) for label in stations]
    clashes = Counter(stem.casefold() for stem in stems)
    return {
        label: stem if clashes[stem.casefold()] == 1 else f"{stem}_{node}"
        for node, (label, stem) in enumerate(zip(stations, stems))
    }


def emit_trees(report: SolveReport, destinations: Iterable[str] | None, out_dir: str | Path) -> list[Path]:
    """Write the tree-shaped paths of destinations as DOT graphs, plus `trees.csv`.

    Each graph holds the positive-flow arcs towards one destination, labelled with
    their flow volume, the destination being drawn as a double circle.

    Parameters:
        report: The report.
        destinations: Station labels, every shipment destination by default.
        out_dir: The output directory, created when missing.

    Raises:
        ReportError: When a requested destination is not a station.

    Returns:
        The written files.
    """
    requested = list(dict.fromkeys(report.destinations if destinations is None else destinations))
    for label in requested:
        if label not in report.stations:
            raise ReportError(f"unknown destination {label!r}")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stems = _file_stems(report.stations)
    written = []
    rows = []
    for label in requested:
        edges = report.trees.get(label, [])
        lines = [
            f"// Tree-shaped paths towards {label}",
            f"digraph {_quote(label)} {{",
            "    rankdir=LR",
            f"    {_quote(label)} [shape=doublecircle style=filled fillcolor=lightcoral]",
        ]
        for edge in edges:
            lines.append(f"    {_quote(edge.source)} -> {_quote(edge.target)} [label={_quote(format_number(edge.flow))}]")
            rows.append((label, edge.source, edge.target, format_number(edge.flow)))
        lines.append("}")
        dot_file = out_dir / f"tree_{stems[label]}.dot"
        dot_file.write_text("\n".join(lines) + "\n")
        written.append(dot_file)

    csv_file = out_dir / "trees.csv"
    with csv_file.open("w", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(("destination", "from", "to", "flow"))
        writer.writerows(rows)
    written.append(csv_file)
    logger.debug(f"Wrote {len(written) - 1} tree graphs to {out_dir}")
    return written


def write_trace(traces: Iterable[SATrace], out_dir: str | Path) -> Path:
    """Write the line-oriented annealing trace `trace.log`.

    Parameters:
        traces: Traces of every run.
        out_dir: The output directory, created when missing.

    Returns:
        The written file.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_file = out_dir / "trace.log"
    trace_file.write_text("".join(line + "\n" for trace in traces for line in trace.lines()))
    return trace_file
