import numpy as np
import pytest

from tsp_fcn import exceptions
from tsp_fcn.evaluation import BenchConfig, benchmark_solvers, monotone_times
from tsp_fcn.instance import TspInstance, generate_instance, tour_length, validate_tour
from tsp_fcn.solvers import (
    ALGORITHMS,
    AcoConfig,
    GaConfig,
    SolveStats,
    nearest_neighbor_tour,
    solve,
    solve_ant_colony,
    solve_branch_bound,
    solve_dp,
    solve_exhaustive,
    solve_genetic,
)


@pytest.fixture(scope="function")
def square():
    return TspInstance("square", [[0, 0], [1, 0], [1, 1], [0, 1]])


@pytest.fixture(scope="function")
def small_ga():
    return GaConfig(population=40, generations=60, seed=1)


@pytest.fixture(scope="function")
def small_aco():
    return AcoConfig(iterations=40, seed=1)


def _same(a, b):
    return abs(a - b) <= 1e-9 * max(a, b)


def test_config_validation():
    with pytest.raises(exceptions.ConfigError):
        GaConfig(population=1)
    with pytest.raises(exceptions.ConfigError):
        GaConfig(crossover_rate=1.5)
    with pytest.raises(exceptions.ConfigError):
        AcoConfig(ant_num=0)
    with pytest.raises(exceptions.ConfigError):
        AcoConfig(rho=1.0)


@pytest.mark.parametrize("algo", ALGORITHMS)
def test_square(square, algo, small_ga, small_aco):
    tour = solve(square, algo, small_ga, small_aco)
    assert tour.length == pytest.approx(4.0, rel=1e-12)
    assert validate_tour(square, tour.order)
    assert tour.order[0] == 0


def test_triangle_exact_agree():
    x = generate_instance(3, seed=5)
    assert _same(solve_exhaustive(x).length, solve_dp(x).length)
    assert _same(solve_branch_bound(x).length, solve_dp(x).length)


def test_collinear_out_and_back():
    x = TspInstance("line", [[0, 0], [3, 0], [1, 0], [7, 0], [4, 0]])
    assert solve_dp(x).length == pytest.approx(14.0, rel=1e-12)


@pytest.mark.parametrize("n", [4, 5, 6, 7, 8])
def test_exact_solvers_agree(n):
    for k in range(20):
        x = generate_instance(n, seed=[n, k])
        dp = solve_dp(x)
        assert _same(solve_exhaustive(x).length, dp.length)
        assert _same(solve_branch_bound(x).length, dp.length)
        assert _same(tour_length(x, dp.order), dp.length)


@pytest.mark.parametrize("n", [9, 10])
def test_branch_bound_matches_dp(n):
    for k in range(10):
        x = generate_instance(n, seed=[n, k])
        assert _same(solve_branch_bound(x).length, solve_dp(x).length)


def test_branch_bound_expands_fewer_nodes():
    x = generate_instance(8, seed=21)
    exhaustive, bb = SolveStats(), SolveStats()
    solve_exhaustive(x, exhaustive)
    solve_branch_bound(x, bb)
    assert exhaustive.permutations == 5040
    assert 0 < bb.nodes <= exhaustive.permutations


def test_size_guards():
    with pytest.raises(exceptions.SizeLimitError):
        solve_exhaustive(generate_instance(13, seed=0))
    with pytest.raises(exceptions.SizeLimitError):
        solve_dp(generate_instance(21, seed=0))
    with pytest.raises(exceptions.SizeLimitError):
        solve(generate_instance(21, seed=0), "bb")


def test_unknown_algorithm(square):
    with pytest.raises(exceptions.ConfigError):
        solve(square, "sa")


def test_heuristics_deterministic(small_ga, small_aco):
    x = generate_instance(10, seed=3)
    assert solve_genetic(x, small_ga) == solve_genetic(x, small_ga)
    assert solve_ant_colony(x, small_aco) == solve_ant_colony(x, small_aco)


def test_heuristics_never_beat_optimum(small_ga, small_aco):
    for k in range(5):
        x = generate_instance(10, seed=[10, k])
        optimum = solve_dp(x).length
        for tour in (solve_genetic(x, small_ga), solve_ant_colony(x, small_aco), nearest_neighbor_tour(x)):
            assert validate_tour(x, tour.order)
            assert tour.length >= optimum - 1e-9


def test_stats_recorded(small_ga):
    stats = SolveStats()
    solve(generate_instance(8, seed=1), "ga", ga=small_ga, stats=stats)
    assert stats.generations == small_ga.generations
    assert stats.seconds > 0


@pytest.mark.slow
def test_exact_solvers_agree_full():
    for n in range(4, 10):
        for k in range(200):
            x = generate_instance(n, seed=[n, k, 1])
            dp = solve_dp(x).length
            assert _same(solve_exhaustive(x).length, dp)
            assert _same(solve_branch_bound(x).length, dp)


@pytest.mark.slow
def test_heuristic_accuracy_targets():
    ga_hits, aco_hits, count = 0, 0, 480
    for k in range(count):
        x = generate_instance(10, seed=[10, k, 2])
        optimum = solve_dp(x).length
        ga_hits += solve_genetic(x).length <= optimum * (1 + 1e-9)
        aco_hits += solve_ant_colony(x).length <= optimum * (1 + 1e-9)
    assert ga_hits / count >= 0.95
    assert aco_hits / count >= 0.80


@pytest.mark.slow
def test_exhaustive_time_grows_past_branch_bound():
    cfg = BenchConfig(n_values=(8, 9, 10, 11), instances_per_n=3, repeats=3, warmup=1, algorithms=("exh", "bb"))
    rows = benchmark_solvers(cfg)
    assert monotone_times(rows)["exh"]
    last = rows[-1]
    assert last.n == 11
    assert last.times_ms["exh"] > last.times_ms["bb"]
