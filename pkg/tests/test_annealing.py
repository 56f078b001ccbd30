"""Tests for the `annealing` module."""

from __future__ import annotations

import time
from collections import Counter
from dataclasses import replace
from typing import TYPE_CHECKING

import numpy as np
import pytest

from railtree.annealing import (
    SAParams,
    _cool,
    _cycles,
    anneal,
    anneal_restarts,
    initial_solution,
    neighbor,
)
from railtree.flows import Move, SuccessorAssignment, check_conservation, check_tree_shape, energy, propagate
from railtree.instance import random_instance
from railtree.network import build_network
from railtree.oracle import enumerate_assignments
from railtree.pruning import CandidateTable, prepare_candidates
from railtree.report import build_report

if TYPE_CHECKING:
    from railtree.network import Network

CHI2_2DOF = 13.816  # upper 0.001 quantile of the chi-square law with 2 degrees of freedom


def test_default_parameters() -> None:
    """Use the documented defaults."""
    params = SAParams()
    assert params.lam == 600
    assert params.epsilon == 1.4
    assert params.chain_multiplier == 4
    assert params.delta == 0.1
    assert params.alpha == 0.95
    assert params.switch_iter == 30
    assert params.t0_accept == 0.9
    assert params.stall_chains == 3
    assert params.max_chain_moves == 20_000
    assert params.patience == 40
    assert params.time_limit is None


@pytest.mark.parametrize(
    "values",
    [
        {"chain_multiplier": 7},
        {"chain_multiplier": 2},
        {"alpha": 1},
        {"lam": 0},
        {"epsilon": 0.5},
        {"delta": 0},
        {"t0_accept": 1},
        {"t0": -1},
        {"t_min": 0},
        {"switch_iter": -1},
        {"stall_chains": 0},
        {"max_chains": 0},
        {"max_chain_moves": 0},
        {"patience": 0},
        {"time_limit": 0},
    ],
)
def test_invalid_parameters(values: dict) -> None:
    """Reject out-of-range parameters.

    Parameters:
        values: The invalid parameter.
    """
    with pytest.raises(ValueError, match="must"):
        SAParams(**values)


def test_parameters_from_settings() -> None:
    """Map setting names to parameters and ignore other settings."""
    params = SAParams.from_mapping({"lambda": 100, "k": 5, "restarts": 3, "seed": None, "prune": True})
    assert params.lam == 100
    assert params.chain_multiplier == 5
    assert params.seed is None


def test_parameters_from_settings_with_wrong_types() -> None:
    """Turn type errors into value errors."""
    with pytest.raises(ValueError, match="invalid solver settings"):
        SAParams.from_mapping({"lambda": "high"})


@pytest.mark.parametrize("seed", range(5))
def test_initial_solution_has_no_cycles(seed: int) -> None:
    """Draw candidates and break every successor cycle.

    Parameters:
        seed: The random seed.
    """
    network = random_instance(15, 45, 30, seed=seed)
    _, table = prepare_candidates(network, epsilon=None)
    assignment = initial_solution(table, np.random.default_rng(seed))
    assert set(assignment) == set(table.pairs)
    for pair, successor in assignment.items():
        assert successor in table[pair]
    for destination in assignment.destinations:
        assert _cycles(assignment.toward(destination), destination) == []


def test_neighbor_changes_one_successor() -> None:
    """Move a movable pair to another candidate."""
    table = CandidateTable({(0, 3): (1, 2, 4), (1, 3): (3,), (2, 3): (3,), (4, 3): (3,)})
    rng = np.random.default_rng(1)
    current = initial_solution(table, rng)
    for _ in range(20):
        move = neighbor(current, table, rng)
        assert (move.node, move.destination) == (0, 3)
        assert move.successor != current[0, 3]
        assert move.successor in table[0, 3]


def test_initial_solution_draws_candidates_uniformly() -> None:
    """Pick each of three candidates about a third of the time."""
    table = CandidateTable({(0, 3): (1, 2, 4), (1, 3): (3,), (2, 3): (3,), (4, 3): (3,)})
    rng = np.random.default_rng(7)
    draws = 1000
    counts = Counter(initial_solution(table, rng)[0, 3] for _ in range(draws))
    observed = np.array([counts[1], counts[2], counts[4]])
    expected = draws / 3
    assert observed.sum() == draws
    assert np.all(np.abs(observed - expected) <= 3 * np.sqrt(draws * (1 / 3) * (2 / 3)))
    assert ((observed - expected) ** 2 / expected).sum() < CHI2_2DOF


def test_neighbor_draws_moves_uniformly() -> None:
    """Draw a movable pair uniformly, then one of its other candidates uniformly."""
    table = CandidateTable({(0, 3): (1, 2, 4), (5, 3): (1, 2), (1, 3): (3,), (2, 3): (3,), (4, 3): (3,)})
    current = SuccessorAssignment({(0, 3): 1, (5, 3): 2, (1, 3): 3, (2, 3): 3, (4, 3): 3})
    rng = np.random.default_rng(11)
    draws = 100_000
    counts = Counter(neighbor(current, table, rng) for _ in range(draws))
    expected = {Move(0, 3, 2): 0.25, Move(0, 3, 4): 0.25, Move(5, 3, 1): 0.5}
    assert counts.keys() == expected.keys()
    statistic = sum((counts[move] - draws * share) ** 2 / (draws * share) for move, share in expected.items())
    assert statistic < CHI2_2DOF


def test_neighbor_without_movable_pairs() -> None:
    """Refuse to move when every pair has a single candidate."""
    table = CandidateTable({(1, 3): (3,)})
    with pytest.raises(ValueError, match="no pair"):
        neighbor(initial_solution(table, np.random.default_rng()), table, np.random.default_rng())


def test_statistical_cooling() -> None:
    """Cool by the statistical decrement during the first chains."""
    params = SAParams(switch_iter=2)
    samples = [10.0, 12.0, 14.0]
    temperature, sigma = _cool(100.0, 1, samples, params)
    assert sigma == pytest.approx(2.0)
    assert temperature == pytest.approx(100 / (1 + 100 * np.log(1.1) / 6))


def test_geometric_cooling_after_switch() -> None:
    """Cool geometrically after the switch chain."""
    params = SAParams(switch_iter=2, alpha=0.9)
    temperature, _ = _cool(100.0, 3, [10.0, 12.0], params)
    assert temperature == pytest.approx(90)


@pytest.mark.parametrize("samples", [[5.0, 5.0, 5.0], [5.0], []])
def test_geometric_cooling_without_spread(samples: list[float]) -> None:
    """Fall back to geometric cooling without energy spread.

    Parameters:
        samples: Accepted energies of the chain.
    """
    params = SAParams(alpha=0.9)
    temperature, _ = _cool(100.0, 1, samples, params)
    assert temperature == pytest.approx(90)


def test_anneal_without_moves(line_network: Network) -> None:
    """Return the only solution when no pair can move.

    Parameters:
        line_network: The line `1 -> 2 -> 3`.
    """
    extended, table = prepare_candidates(line_network, virtual=False)
    result = anneal(extended, table, params=SAParams(seed=1))
    assert result.trace.stop_reason == "no-moves"
    assert result.trace.chains == []
    assert result.energy.total == 46
    assert result.restarts == 1


def test_anneal_abandons_blocked_shipments(bottleneck_network: Network) -> None:
    """Prefer abandonment to a penalized route.

    Parameters:
        bottleneck_network: A network whose only route has no capacity.
    """
    extended, table = prepare_candidates(bottleneck_network)
    result = anneal(extended, table, params=SAParams(seed=3))
    assert result.assignment[0, 2] == 2
    assert result.energy.penalty == 0
    assert result.energy.abandonment_cost == 10
    assert result.trace.stop_reason in {"temperature", "stalled", "stagnated"}


def test_anneal_stops_after_max_chains() -> None:
    """Stop after the configured number of chains."""
    network = random_instance(8, 20, 10, seed=4, capacity=6)
    extended, table = prepare_candidates(network)
    result = anneal(extended, table, params=SAParams(seed=4, max_chains=2))
    assert 1 <= len(result.trace.chains) <= 2


def test_anneal_stops_when_interrupted() -> None:
    """Stop after the current chain when asked to."""
    network = random_instance(8, 20, 10, seed=4, capacity=6)
    extended, table = prepare_candidates(network)
    result = anneal(extended, table, params=SAParams(seed=4, switch_iter=0), stop=True)
    assert result.trace.stop_reason == "interrupted"
    assert len(result.trace.chains) == 1


def test_anneal_stops_when_the_best_energy_stagnates() -> None:
    """Stop once geometric-cooling chains no longer improve the best energy."""
    network = random_instance(8, 20, 10, seed=4, capacity=6)
    extended, table = prepare_candidates(network)
    result = anneal(extended, table, params=SAParams(seed=4, switch_iter=0, patience=2))
    assert result.trace.stop_reason == "stagnated"
    bests = [record.best_energy for record in result.trace.chains]
    assert len(bests) >= 2
    assert bests[-1] == bests[-2]


def test_anneal_stops_after_the_time_limit() -> None:
    """Stop after the chain ending past the time limit."""
    network = random_instance(8, 20, 10, seed=4, capacity=6)
    extended, table = prepare_candidates(network)
    result = anneal(extended, table, params=SAParams(seed=4, time_limit=1e-9))
    assert result.trace.stop_reason == "time-limit"
    assert len(result.trace.chains) == 1


def test_chain_moves_are_capped() -> None:
    """Generate at most the configured number of moves per chain."""
    network = random_instance(15, 45, 30, seed=2, capacity=8)
    extended, table = prepare_candidates(network)
    assert 4 * table.neighborhood_size > 50
    result = anneal(extended, table, params=SAParams(seed=2, max_chain_moves=50, max_chains=5))
    assert [record.generated for record in result.trace.chains] == [50] * len(result.trace.chains)


@pytest.mark.parametrize("seed", range(5))
def test_anneal_returns_valid_solutions(seed: int) -> None:
    """Return tree-shaped, conservative, never-worse-than-initial solutions.

    Parameters:
        seed: The random seed.
    """
    network = random_instance(12, 30, 25, seed=seed, capacity=15)
    extended, table = prepare_candidates(network)
    result = anneal(extended, table, params=SAParams(seed=seed, max_chains=40))
    assert check_conservation(extended, result.assignment, result.flowfield) == []
    assert check_tree_shape(result.assignment, result.flowfield) == []
    assert result.energy.total <= result.trace.initial_energy + 1e-9
    assert result.energy == energy(extended, propagate(extended, result.assignment))
    bests = [record.best_energy for record in result.trace.chains]
    assert bests == sorted(bests, reverse=True)
    assert result.trace.lines()[1].startswith("chain=1 ")


@pytest.mark.parametrize("seed", range(5))
def test_incremental_and_full_evaluation_agree(seed: int) -> None:
    """Make the same decisions with incremental and full evaluation.

    Parameters:
        seed: The random seed.
    """
    network = random_instance(7, 16, 8, seed=seed, capacity=8)
    extended, table = prepare_candidates(network)
    fast = anneal(extended, table, params=SAParams(seed=seed, max_chains=15))
    slow = anneal(extended, table, params=SAParams(seed=seed, max_chains=15, incremental=False))
    assert [(r.generated, r.accepted, r.rejected_cycles) for r in fast.trace.chains] == [
        (r.generated, r.accepted, r.rejected_cycles) for r in slow.trace.chains
    ]
    assert fast.assignment == slow.assignment
    assert fast.energy.total == pytest.approx(slow.energy.total, rel=1e-9)


def test_fixed_seed_is_reproducible() -> None:
    """Find the same solution twice with the same seed."""
    network = random_instance(8, 20, 10, seed=6, capacity=6)
    extended, table = prepare_candidates(network)
    first = anneal_restarts(extended, table, params=SAParams(seed=12, max_chains=10), restarts=2)
    second = anneal_restarts(extended, table, params=SAParams(seed=12, max_chains=10), restarts=2)
    assert first.assignment == second.assignment
    assert first.energy.total == second.energy.total


def test_restarts_keep_every_trace() -> None:
    """Keep the best run and the traces of all runs."""
    network = random_instance(8, 20, 10, seed=6, capacity=6)
    extended, table = prepare_candidates(network)
    result = anneal_restarts(extended, table, params=SAParams(seed=5, max_chains=5), restarts=3)
    assert result.restarts == 3
    assert [trace.restart for trace in result.traces] == [1, 2, 3]
    assert all(trace.seed == 5 for trace in result.traces)
    assert result.energy.total <= min(trace.chains[-1].best_energy for trace in result.traces) + 1e-6
    assert result.trace in result.traces


def test_restarts_must_be_positive(line_network: Network) -> None:
    """Reject zero restarts.

    Parameters:
        line_network: The line `1 -> 2 -> 3`.
    """
    extended, table = prepare_candidates(line_network, virtual=False)
    with pytest.raises(ValueError, match="restarts"):
        anneal_restarts(extended, table, restarts=0)


def test_annealing_reaches_the_exact_optimum() -> None:
    """Match the exhaustive optimum on small instances."""
    matches = 0
    for seed in range(5):
        network = random_instance(5, 8, 3, seed=seed, capacity=6)
        extended, table = prepare_candidates(network, virtual=False)
        exact = enumerate_assignments(extended, table)
        result = anneal_restarts(extended, table, params=SAParams(seed=seed), restarts=3)
        assert exact.optimum <= result.energy.total + 1e-9
        assert result.energy.total <= exact.optimum * 1.02 + 1e-9
        if result.energy.total == pytest.approx(exact.optimum, rel=1e-9):
            matches += 1
    assert matches >= 4


def _bottleneck_instance(seed: int) -> Network:
    # every real arc into the destination of the first shipment is closed
    network = random_instance(5, 8, 3, seed=seed)
    closed = network.demands[0].destination
    arcs = [replace(arc, capacity=0) if arc.target == closed else arc for arc in network.arcs]
    return build_network(network.nodes, arcs, network.demands)


@pytest.mark.slow
def test_virtual_arcs_absorb_closed_corridors() -> None:
    """Abandon exactly what the exhaustive optimum abandons, without any overload."""
    for seed in range(20):
        network = _bottleneck_instance(seed)
        extended, table = prepare_candidates(network)
        exact = enumerate_assignments(extended, table)
        result = anneal_restarts(extended, table, params=SAParams(seed=seed), restarts=3)
        assert exact.energy is not None
        assert exact.energy.penalty == 0
        assert result.energy.penalty == 0
        assert result.energy.abandonment_cost > 0
        assert result.energy.total == pytest.approx(exact.optimum, rel=1e-9)
        assert result.energy.abandonment_cost == pytest.approx(exact.energy.abandonment_cost, rel=1e-9)


@pytest.mark.slow
def test_annealing_reaches_the_exact_optimum_on_fifty_instances() -> None:
    """Match the exhaustive optimum on at least 45 of 50 small instances, within 2% on all."""
    instances = matches = 0
    for seed in range(1000):
        nodes = 5 + seed % 4
        network = random_instance(nodes, 2 * nodes, 3 + seed % 8, seed=seed, capacity=6)
        extended, table = prepare_candidates(network)
        if table.product > 10**5:
            continue
        exact = enumerate_assignments(extended, table)
        result = anneal_restarts(extended, table, params=SAParams(seed=seed), restarts=3)
        assert exact.optimum <= result.energy.total + 1e-9
        assert result.energy.total <= exact.optimum * 1.02 + 1e-9
        matches += result.energy.total == pytest.approx(exact.optimum, rel=1e-9)
        instances += 1
        if instances == 50:
            break
    assert instances == 50
    assert matches >= 45


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(200))
def test_annealed_solutions_are_tree_shaped_and_conservative(seed: int) -> None:
    """Find no violation on fuzzed instances of up to 40 stations.

    Parameters:
        seed: The random seed.
    """
    rng = np.random.default_rng(seed)
    nodes = int(rng.integers(3, 41))
    arcs = int(rng.integers(nodes, min(3 * nodes, nodes * (nodes - 1)) + 1))
    demands = int(rng.integers(1, min(2 * nodes, nodes * (nodes - 1)) + 1))
    network = random_instance(nodes, arcs, demands, seed=seed, capacity=int(rng.integers(1, 20)))
    extended, table = prepare_candidates(network, virtual=bool(seed % 2))
    result = anneal(extended, table, params=SAParams(seed=seed, max_chains=20))
    assert check_conservation(extended, result.assignment, result.flowfield) == []
    assert check_tree_shape(result.assignment, result.flowfield) == []


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(100))
def test_incremental_and_full_evaluation_agree_on_many_seeds(seed: int) -> None:
    """Make the same decisions with incremental and full evaluation.

    Parameters:
        seed: The random seed.
    """
    network = random_instance(6 + seed % 5, 16, 8, seed=seed // 5, capacity=8)
    extended, table = prepare_candidates(network)
    fast = anneal(extended, table, params=SAParams(seed=seed, max_chains=15))
    slow = anneal(extended, table, params=SAParams(seed=seed, max_chains=15, incremental=False))
    assert [(r.generated, r.accepted, r.rejected_cycles) for r in fast.trace.chains] == [
        (r.generated, r.accepted, r.rejected_cycles) for r in slow.trace.chains
    ]
    assert fast.assignment == slow.assignment
    assert fast.energy.total == pytest.approx(slow.energy.total, rel=1e-9)


@pytest.mark.slow
def test_full_size_instance_is_solved_within_five_minutes() -> None:
    """Solve 300 stations, 800 arcs and 2000 shipments without overload in less than five minutes."""
    network = random_instance(300, 800, 2000, seed=1)
    _, table = prepare_candidates(network, virtual=False)
    preferred = propagate(network, SuccessorAssignment({pair: table.shortest(*pair) for pair in table}))
    capacity = 3 * max(preferred.arc_load.values())
    network = build_network(network.nodes, [replace(arc, capacity=capacity) for arc in network.arcs], network.demands)

    start = time.perf_counter()
    extended, table = prepare_candidates(network)
    result = anneal(extended, table, params=SAParams(seed=1))
    report = build_report(extended, result.assignment)
    elapsed = time.perf_counter() - start

    assert elapsed < 300
    assert report.feasible
    assert report.energy.penalty == 0
    assert report.mean_distance > 0
    bests = [record.best_energy for record in result.trace.chains]
    assert bests == sorted(bests, reverse=True)
