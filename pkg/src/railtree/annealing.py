"""Simulated annealing module.

The search walks successor assignments: a neighbour changes the first front
station of one (node, destination) pair. Markov chains at a fixed temperature are
accepted through the Metropolis rule; the temperature follows a statistical
cooling decrement for the first chains, then a geometric one.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
from loguru import logger

from railtree.flows import (
    DEFAULT_LAMBDA,
    CycleError,
    EnergyBreakdown,
    FlowField,
    Move,
    SuccessorAssignment,
    check_conservation,
    check_move,
    check_tree_shape,
    delta_energy,
    energy,
    propagate,
)
from railtree.network import tolerance
from railtree.pruning import DEFAULT_EPSILON

if TYPE_CHECKING:
    from collections.abc import Iterable, Mapping

    from railtree.flows import Routable
    from railtree.network import Demand
    from railtree.pruning import CandidateTable
    from railtree.utils import SignalHandler

SETTING_ALIASES = {"lambda": "lam", "k": "chain_multiplier"}
DEFAULT_MAX_CHAIN_MOVES = 20_000
DEFAULT_PATIENCE = 40

__all__ = [
    "AnnealResult",
    "ChainRecord",
    "Move",
    "SAParams",
    "SATrace",
    "anneal",
    "anneal_restarts",
    "initial_solution",
    "neighbor",
]


@dataclass(frozen=True)
class SAParams:
    """Parameters of the annealing search."""

    lam: float = DEFAULT_LAMBDA
    """Penalty weight of capacity overloads."""
    epsilon: float = DEFAULT_EPSILON
    """Detour threshold used to build the candidates."""
    chain_multiplier: float = 4
    """Chain length multiplier K, between 3 and 6."""
    delta: float = 0.1
    """Distance parameter of the statistical cooling decrement."""
    alpha: float = 0.95
    """Geometric cooling factor."""
    switch_iter: int = 30
    """Number of chains cooled with the statistical decrement before switching to the geometric one."""
    t0_accept: float = 0.9
    """Target acceptance ratio of worsening moves at the initial temperature."""
    t0: float | None = None
    """Fixed initial temperature, skipping calibration."""
    t_min: float | None = None
    """Stop temperature, `1e-4` times the initial temperature by default."""
    stall_chains: int = 3
    """Stop after this many consecutive chains without any accepted move."""
    seed: int | None = None
    calibration_moves: int = 200
    """Random-walk moves sampled to calibrate the initial temperature."""
    max_chains: int | None = None
    max_chain_moves: int | None = DEFAULT_MAX_CHAIN_MOVES
    """Upper bound on the moves generated per chain, on top of the neighbourhood-sized caps, None for no bound."""
    patience: int | None = DEFAULT_PATIENCE
    """Stop after this many geometric-cooling chains without a new best energy, None to never stop this way."""
    time_limit: float | None = None
    """Wall-clock seconds after which the run stops at the end of the current chain."""
    incremental: bool = True
    """Evaluate moves on the changed portion of the flows instead of a full propagation."""

    def __post_init__(self) -> None:
        if not 3 <= self.chain_multiplier <= 6:  # noqa: PLR2004
            raise ValueError(f"chain multiplier K must be between 3 and 6, got {self.chain_multiplier}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not self.epsilon >= 1:
            raise ValueError(f"epsilon must be at least 1, got {self.epsilon}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not 0 < self.t0_accept < 1:
            raise ValueError(f"t0_accept must be in (0, 1), got {self.t0_accept}")
        if self.t0 is not None and not self.t0 > 0:
            raise ValueError(f"t0 must be positive, got {self.t0}")
        if self.t_min is not None and not self.t_min > 0:
            raise ValueError(f"t_min must be positive, got {self.t_min}")
        if self.switch_iter < 0:
            raise ValueError(f"switch_iter must be non-negative, got {self.switch_iter}")
        if self.stall_chains < 1:
            raise ValueError(f"stall_chains must be at least 1, got {self.stall_chains}")
        if self.calibration_moves < 0:
            raise ValueError(f"calibration_moves must be non-negative, got {self.calibration_moves}")
        for name in ("max_chains", "max_chain_moves", "patience"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ValueError(f"{name} must be at least 1, got {value}")
        if self.time_limit is not None and not self.time_limit > 0:
            raise ValueError(f"time_limit must be positive, got {self.time_limit}")

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> SAParams:
        """Build parameters from a mapping, ignoring keys that are not parameters.

        Parameters:
            values: Parameter values, `None` values keeping the defaults.

        Raises:
            ValueError: When a value is invalid.

        Returns:
            The parameters.
        """
        names = cls.__dataclass_fields__.keys()
        arguments = {}
        for key, value in values.items():
            name = SETTING_ALIASES.get(key, key)
            if name in names and value is not None:
                arguments[name] = value
        try:
            return cls(**arguments)
        except TypeError as error:
            raise ValueError(f"invalid solver settings: {error}") from error


@dataclass(frozen=True)
class ChainRecord:
    """Statistics of one Markov chain."""

    index: int
    temperature: float
    generated: int
    accepted: int
    rejected_cycles: int
    current_energy: float
    best_energy: float
    sigma: float | None
    """Sample standard deviation of the accepted energies, None with fewer than two samples."""

    def line(self) -> str:
        """Render the record as one trace line.

        Returns:
            The line.
        """
        sigma = "-" if self.sigma is None else f"{self.sigma:.6g}"
        return (
            f"chain={self.index} T={self.temperature:.6g} generated={self.generated} "
            f"accepted={self.accepted} cycles={self.rejected_cycles} "
            f"current={self.current_energy:.6f} best={self.best_energy:.6f} sigma={sigma}"
        )


@dataclass
class SATrace:
    """The history of one annealing run."""

    seed: int
    initial_energy: float
    initial_temperature: float = 0.0
    final_temperature: float = 0.0
    chains: list[ChainRecord] = field(default_factory=list)
    stop_reason: str = ""
    wall_time: float = 0.0
    restart: int = 0

    def lines(self) -> list[str]:
        """Render the trace as lines.

        Returns:
            The header, one line per chain, and the stop line.
        """
        return [
            f"restart={self.restart} seed={self.seed} T0={self.initial_temperature:.6g} "
            f"initial={self.initial_energy:.6f}",
            *(record.line() for record in self.chains),
            f"stop={self.stop_reason} T={self.final_temperature:.6g} wall_time={self.wall_time:.3f}s",
        ]


@dataclass
class AnnealResult:
    """Best solution found by the search."""

    assignment: SuccessorAssignment
    flowfield: FlowField
    energy: EnergyBreakdown
    trace: SATrace
    traces: list[SATrace] = field(default_factory=list)
    """Traces of every restart, in order."""

    @property
    def restarts(self) -> int:
        """Number of runs merged into this result."""
        return max(1, len(self.traces))


def _cycles(successors: Mapping[int, int], destination: int) -> list[list[int]]:
    owner: dict[int, int] = {}
    found = []
    for start in sorted(successors):
        path = []
        node = start
        while node != destination and node not in owner:
            owner[node] = start
            path.append(node)
            node = successors[node]
        if node != destination and owner[node] == start:
            found.append(path[path.index(node) :])
    return found


def initial_solution(
    candidates: CandidateTable,
    rng: np.random.Generator,
    max_retries: int = 10,
) -> SuccessorAssignment:
    """Draw a random successor assignment without successor cycles.

    Each pair picks a uniform candidate. Nodes on cycles are drawn again,
    up to `max_retries` times per destination, after which the destination falls
    back to its preferred candidates.

    Parameters:
        candidates: The candidate table.
        rng: The random generator.
        max_retries: Redraw rounds per destination.

    Returns:
        The assignment.
    """
    assignment = SuccessorAssignment()
    for pair in candidates.pairs:
        options = candidates[pair]
        assignment[pair] = options[int(rng.integers(len(options)))] if len(options) > 1 else options[0]

    for destination in assignment.destinations:
        successors = assignment.toward(destination)
        for _ in range(max_retries):
            cycles = _cycles(successors, destination)
            if not cycles:
                break
            for cycle in cycles:
                for node in cycle:
                    options = candidates[(node, destination)]
                    if len(options) > 1:
                        successors[node] = options[int(rng.integers(len(options)))]
        else:
            if _cycles(successors, destination):
                logger.debug(f"Falling back to preferred candidates towards destination {destination}")
                for node in successors:
                    successors[node] = candidates.shortest(node, destination)
    return assignment


def neighbor(current: SuccessorAssignment, candidates: CandidateTable, rng: np.random.Generator) -> Move:
    """Draw a neighbour move.

    A pair is drawn uniformly among pairs with at least two candidates, then a new
    first front station uniformly among its other candidates.

    Parameters:
        current: The current assignment.
        candidates: The candidate table.
        rng: The random generator.

    Raises:
        ValueError: When no pair has two candidates.

    Returns:
        The move.
    """
    pairs = candidates.movable_pairs
    if not pairs:
        raise ValueError("no pair has more than one candidate")
    node, destination = pairs[int(rng.integers(len(pairs)))]
    successor = current[(node, destination)]
    options = [option for option in candidates[(node, destination)] if option != successor]
    return Move(node, destination, options[int(rng.integers(len(options)))])


class _Search:
    # Holds the current solution, evaluated either incrementally or by full propagation.

    def __init__(
        self,
        network: Routable,
        demands: tuple[Demand, ...],
        assignment: SuccessorAssignment,
        lam: float,
        *,
        incremental: bool,
    ) -> None:
        self.network = network
        self.demands = demands
        self.lam = lam
        self.incremental = incremental
        self.assignment = assignment
        self.flowfield = propagate(network, assignment, demands)
        self.total = energy(network, self.flowfield, lam).total

    def evaluate(self, move: Move) -> tuple[float, Any]:
        if self.incremental:
            return delta_energy(self.network, self.flowfield, self.assignment, move, self.lam)
        check_move(self.assignment, move)
        trial = self.assignment.copy()
        trial[(move.node, move.destination)] = move.successor
        flowfield = propagate(self.network, trial, self.demands)
        total = energy(self.network, flowfield, self.lam).total
        return total - self.total, (trial, flowfield, total)

    def commit(self, delta: float, pending: Any) -> None:
        if self.incremental:
            pending.apply(self.assignment, self.flowfield)
            self.total += delta
        else:
            self.assignment, self.flowfield, self.total = pending

    def resync(self) -> None:
        self.total = energy(self.network, self.flowfield, self.lam).total

    def save(self) -> tuple[SuccessorAssignment, FlowField, float]:
        return self.assignment.copy(), self.flowfield.copy(), self.total

    def restore(self, state: tuple[SuccessorAssignment, FlowField, float]) -> None:
        self.assignment, self.flowfield, self.total = state


def _calibrate(search: _Search, candidates: CandidateTable, rng: np.random.Generator, params: SAParams) -> float:
    rises = []
    state = search.save()
    for _ in range(params.calibration_moves):
        move = neighbor(search.assignment, candidates, rng)
        try:
            delta, pending = search.evaluate(move)
        except CycleError:
            continue
        if delta > tolerance(search.total):
            rises.append(delta)
        search.commit(delta, pending)
    search.restore(state)
    if not rises:
        logger.warning("No worsening move sampled while calibrating the initial temperature, using 1.0")
        return 1.0
    return float(np.mean(rises)) / math.log(1 / params.t0_accept)


def _cool(temperature: float, index: int, samples: list[float], params: SAParams) -> tuple[float, float | None]:
    sigma = float(np.std(samples, ddof=1)) if len(samples) > 1 else None
    if index <= params.switch_iter and sigma:
        return temperature / (1 + temperature * math.log(1 + params.delta) / (3 * sigma)), sigma
    return params.alpha * temperature, sigma


def anneal(
    network: Routable,
    candidates: CandidateTable,
    demands: Iterable[Demand] | None = None,
    params: SAParams | None = None,
    *,
    rng: np.random.Generator | None = None,
    stop: SignalHandler | None = None,
) -> AnnealResult:
    """Search a low-energy successor assignment by simulated annealing.

    A run stops below the stop temperature, after `stall_chains` chains without accepted moves,
    after `patience` geometric-cooling chains without a new best energy, past the time limit,
    after `max_chains` chains, or when `stop` becomes truthy.

    Parameters:
        network: The (possibly extended) network.
        candidates: The candidate table built on it.
        demands: Shipments to route, the network's shipments by default.
        params: Search parameters.
        rng: Random generator, built from `params.seed` by default.
        stop: When it becomes truthy, the run stops after the current chain.

    Returns:
        The best assignment found, its re-propagated flow field, energy and the run trace.
    """
    params = params or SAParams()
    demands = tuple(network.demands if demands is None else demands)
    seed = params.seed
    if rng is None:
        if seed is None:
            seed = int(np.random.SeedSequence().entropy)  # type: ignore[arg-type]
        rng = np.random.default_rng(seed)
    start = time.perf_counter()

    search = _Search(network, demands, initial_solution(candidates, rng), params.lam, incremental=params.incremental)
    trace = SATrace(seed=-1 if seed is None else seed, initial_energy=search.total)
    best_total = search.total
    best_assignment = search.assignment
    at_best = True
    omega = candidates.neighborhood_size

    if not candidates.movable_pairs:
        trace.stop_reason = "no-moves"
        logger.info("Every pair has a single candidate: the initial solution is the only one")
    else:
        temperature = params.t0 if params.t0 is not None else _calibrate(search, candidates, rng, params)
        t_min = params.t_min if params.t_min is not None else temperature * 1e-4
        trace.initial_temperature = temperature
        accepted_cap = math.ceil(params.chain_multiplier * omega)
        generated_cap = 2 * accepted_cap
        if params.max_chain_moves is not None:
            generated_cap = min(generated_cap, params.max_chain_moves)
        logger.info(
            f"Annealing {len(candidates.movable_pairs)} movable pairs (neighbourhood size {omega}) "
            f"from T0={temperature:.6g}, initial energy {search.total:.6f}",
        )

        stalled = 0
        stagnant = 0
        index = 0
        while True:
            index += 1
            generated = accepted = cycles = 0
            chain_start_best = best_total
            samples: list[float] = []
            while generated < generated_cap and accepted < accepted_cap:
                move = neighbor(search.assignment, candidates, rng)
                generated += 1
                try:
                    delta, pending = search.evaluate(move)
                except CycleError:
                    cycles += 1
                    continue
                draw = rng.random()
                if delta > 0 and draw >= math.exp(-delta / temperature):
                    continue
                if at_best and delta > 0:
                    best_assignment = search.assignment.copy()
                    at_best = False
                search.commit(delta, pending)
                accepted += 1
                samples.append(search.total)
                if search.total < best_total - tolerance(best_total):
                    best_total = search.total
                    best_assignment = search.assignment
                    at_best = True

            search.resync()
            if at_best and search.total < best_total:
                best_total = search.total
            temperature_next, sigma = _cool(temperature, index, samples, params)
            record = ChainRecord(index, temperature, generated, accepted, cycles, search.total, best_total, sigma)
            trace.chains.append(record)
            logger.debug(record.line())
            temperature = temperature_next

            stalled = stalled + 1 if accepted == 0 else 0
            if index > params.switch_iter:
                stagnant = 0 if best_total < chain_start_best - tolerance(chain_start_best) else stagnant + 1
            if temperature <= t_min:
                trace.stop_reason = "temperature"
            elif stalled >= params.stall_chains:
                trace.stop_reason = "stalled"
            elif params.patience is not None and stagnant >= params.patience:
                trace.stop_reason = "stagnated"
            elif params.time_limit is not None and time.perf_counter() - start >= params.time_limit:
                trace.stop_reason = "time-limit"
            elif params.max_chains is not None and index >= params.max_chains:
                trace.stop_reason = "max-chains"
            elif stop:
                trace.stop_reason = "interrupted"
            if trace.stop_reason:
                break
        trace.final_temperature = temperature

    best = search.assignment.copy() if at_best else best_assignment
    flowfield = propagate(network, best, demands)
    breakdown = energy(network, flowfield, params.lam)
    _validate(network, best, flowfield, demands)
    trace.wall_time = time.perf_counter() - start
    logger.info(
        f"Annealing stopped ({trace.stop_reason}) after {len(trace.chains)} chains: "
        f"best energy {breakdown.total:.6f}, penalty {breakdown.penalty:.6g}",
    )
    return AnnealResult(best, flowfield, breakdown, trace, [trace])


def _validate(
    network: Routable,
    assignment: SuccessorAssignment,
    flowfield: FlowField,
    demands: tuple[Demand, ...],
) -> None:
    conservation = check_conservation(network, assignment, flowfield, demands)
    tree = check_tree_shape(assignment, flowfield)
    if conservation:
        logger.warning(f"Best solution violates flow conservation at {len(conservation)} rows")
    if tree:
        logger.warning(f"Best solution violates the tree-shaped path constraint at {len(tree)} pairs")


def anneal_restarts(
    network: Routable,
    candidates: CandidateTable,
    demands: Iterable[Demand] | None = None,
    params: SAParams | None = None,
    restarts: int = 1,
    *,
    stop: SignalHandler | None = None,
) -> AnnealResult:
    """Run independent annealing searches and keep the best one.

    Restart seeds are spawned from the parameters' seed, so a fixed seed
    reproduces every restart. Ties go to the earliest restart.

    Parameters:
        network: The (possibly extended) network.
        candidates: The candidate table built on it.
        demands: Shipments to route, the network's shipments by default.
        params: Search parameters.
        restarts: Number of runs.
        stop: When it becomes truthy, the current run stops after its chain and no other run starts.

    Raises:
        ValueError: When restarts is below 1.

    Returns:
        The best result, carrying the traces of every run.
    """
    if restarts < 1:
        raise ValueError(f"restarts must be at least 1, got {restarts}")
    params = params or SAParams()
    if restarts == 1:
        return anneal(network, candidates, demands, params, stop=stop)

    seed = params.seed if params.seed is not None else int(np.random.SeedSequence().entropy)  # type: ignore[arg-type]
    children = np.random.SeedSequence(seed).spawn(restarts)
    best: AnnealResult | None = None
    traces = []
    for number, child in enumerate(children, start=1):
        logger.info(f"Restart {number}/{restarts}")
        result = anneal(network, candidates, demands, params, rng=np.random.default_rng(child), stop=stop)
        result.trace.seed = seed
        result.trace.restart = number
        traces.append(result.trace)
        if best is None or result.energy.total < best.energy.total - tolerance(best.energy.total):
            best = result
        if stop:
            logger.info("Stopping restarts early")
            break
    assert best is not None  # noqa: S101
    best.traces = traces
    return best
