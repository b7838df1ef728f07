"""
exact and heuristic solvers for the Euclidean TSP

exact: exhaustive search, Held-Karp dynamic programming, branch and bound
heuristic: genetic algorithm (order crossover), ant system
every solver returns a Tour starting at city 0
"""
import logging
import time
from dataclasses import asdict, dataclass
from itertools import chain, islice, permutations
from typing import Optional

import numpy as np

from .exceptions import ConfigError, SizeLimitError
from .instance import TspInstance, Tour, distance_matrix, rotate_tour

logger = logging.getLogger(__name__)

EXHAUSTIVE_LIMIT = 12
DP_LIMIT = 20
BRANCH_BOUND_LIMIT = 20

_PERMUTATION_CHUNK = 200_000


@dataclass(frozen=True)
class GaConfig:
    population: int = 300
    crossover_rate: float = 0.85
    mutation_rate: float = 0.02
    generations: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.population < 2:
            raise ConfigError(f"GA population must be >= 2, got {self.population}")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"GA {name} must be in [0, 1]")
        if self.generations < 0:
            raise ConfigError("GA generations must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AcoConfig:
    ant_num: int = 8
    rho: float = 0.5
    alpha: float = 1.0
    beta: float = 2.0
    iterations: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.ant_num < 1:
            raise ConfigError(f"ACO ant_num must be >= 1, got {self.ant_num}")
        if not 0.0 < self.rho < 1.0:
            raise ConfigError(f"ACO rho must be in (0, 1), got {self.rho}")
        if self.iterations < 1:
            raise ConfigError("ACO iterations must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolveStats:
    """counters filled in by a solver run"""

    permutations: int = 0
    nodes: int = 0
    generations: int = 0
    iterations: int = 0
    seconds: float = 0.0


def _check_size(instance: TspInstance, limit: int, name: str):
    if instance.n > limit:
        raise SizeLimitError(f"{name} is limited to {limit} cities, got {instance.n}")


def _cycle_lengths(dist: np.ndarray, orders: np.ndarray) -> np.ndarray:
    return dist[orders, np.roll(orders, -1, axis=1)].sum(axis=1)


def _finish(order, dist: np.ndarray) -> Tour:
    order = rotate_tour([int(c) for c in order], 0)
    idx = np.asarray(order)
    return Tour(order, float(dist[idx, np.roll(idx, -1)].sum()))


def nearest_neighbor_tour(instance: TspInstance, start: int = 0) -> Tour:
    dist = distance_matrix(instance)
    n = instance.n
    order = [start]
    unvisited = set(range(n)) - {start}
    while unvisited:
        current = order[-1]
        nxt = min(unvisited, key=lambda c: (dist[current, c], c))
        order.append(nxt)
        unvisited.remove(nxt)
    return _finish(order, dist)


##########################################################################################
# EXACT SOLVERS
##########################################################################################
def solve_exhaustive(instance: TspInstance, stats: Optional[SolveStats] = None) -> Tour:
    """
    enumerate every order of cities 1..n-1 behind city 0

    Errors:
        SizeLimitError
    """
    _check_size(instance, EXHAUSTIVE_LIMIT, "Exhaustive search")
    start = time.perf_counter()
    dist = distance_matrix(instance)
    n = instance.n
    perms = permutations(range(1, n))
    best_len, best_order, count = np.inf, None, 0
    while True:
        flat = np.fromiter(
            chain.from_iterable(islice(perms, _PERMUTATION_CHUNK)), dtype=np.int64
        )
        if flat.size == 0:
            break
        block = flat.reshape(-1, n - 1)
        count += block.shape[0]
        cost = (
            dist[0, block[:, 0]]
            + dist[block[:, :-1], block[:, 1:]].sum(axis=1)
            + dist[block[:, -1], 0]
        )
        k = int(np.argmin(cost))
        if cost[k] < best_len:
            best_len, best_order = cost[k], [0] + block[k].tolist()
    if stats is not None:
        stats.permutations = count
        stats.seconds = time.perf_counter() - start
    return _finish(best_order, dist)


def solve_dp(instance: TspInstance, stats: Optional[SolveStats] = None) -> Tour:
    """
    Held-Karp over subsets of cities 1..n-1, one popcount layer at a time

    dp[mask, j] is the shortest path from city 0 through mask ending at city j+1

    Errors:
        SizeLimitError
    """
    _check_size(instance, DP_LIMIT, "Dynamic programming")
    start = time.perf_counter()
    dist = distance_matrix(instance)
    m = instance.n - 1
    full = 1 << m
    masks = np.arange(full, dtype=np.int64)
    popcount = np.zeros(full, dtype=np.int64)
    for bit in range(m):
        popcount += (masks >> bit) & 1

    dp = np.full((full, m), np.inf)
    parent = np.full((full, m), -1, dtype=np.int8)
    for j in range(m):
        dp[1 << j, j] = dist[0, j + 1]

    inner = dist[1:, 1:]
    for size in range(2, m + 1):
        layer = masks[popcount == size]
        for j in range(m):
            sel = layer[((layer >> j) & 1) == 1]
            cand = dp[sel ^ (1 << j)] + inner[:, j][None, :]
            best = np.argmin(cand, axis=1)
            dp[sel, j] = cand[np.arange(sel.size), best]
            parent[sel, j] = best

    total = dp[full - 1] + dist[1:, 0]
    j = int(np.argmin(total))
    mask, path = full - 1, []
    while mask:
        path.append(j + 1)
        prev = int(parent[mask, j])
        mask ^= 1 << j
        j = prev
    if stats is not None:
        stats.nodes = int(full * m)
        stats.seconds = time.perf_counter() - start
    return _finish([0] + path[::-1], dist)


def solve_branch_bound(instance: TspInstance, stats: Optional[SolveStats] = None) -> Tour:
    """
    depth-first branch and bound in tour order from city 0

    bound = cost so far + cheapest outgoing edge of the current city and of every
    unvisited city; the nearest-neighbor tour seeds the incumbent

    Errors:
        SizeLimitError
    """
    _check_size(instance, BRANCH_BOUND_LIMIT, "Branch and bound")
    start = time.perf_counter()
    dist = distance_matrix(instance)
    n = instance.n
    masked = dist + np.diag(np.full(n, np.inf))
    min_out = masked.min(axis=1)
    neighbors = [sorted(range(n), key=lambda v: (dist[u, v], v)) for u in range(n)]

    incumbent = nearest_neighbor_tour(instance)
    best = {"length": incumbent.length, "order": list(incumbent.order)}
    counter = {"nodes": 0}
    path = [0]
    visited = [False] * n
    visited[0] = True

    def branch(current: int, cost: float, remaining_bound: float):
        if len(path) == n:
            total = cost + dist[current, 0]
            if total < best["length"]:
                best["length"], best["order"] = total, list(path)
            return
        for city in neighbors[current]:
            if visited[city]:
                continue
            new_cost = cost + dist[current, city]
            rest = remaining_bound - min_out[city]
            if new_cost + min_out[city] + rest >= best["length"]:
                continue
            counter["nodes"] += 1
            visited[city] = True
            path.append(city)
            branch(city, new_cost, rest)
            path.pop()
            visited[city] = False

    branch(0, 0.0, float(min_out[1:].sum()))
    if stats is not None:
        stats.nodes = counter["nodes"]
        stats.seconds = time.perf_counter() - start
    return _finish(best["order"], dist)


##########################################################################################
# HEURISTIC SOLVERS
##########################################################################################
def _order_crossover(p1: np.ndarray, p2: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    OX on every row at once: keep p1[a:b], fill the rest with p2's remaining genes
    in p2 order starting after b
    """
    rows, n = p1.shape
    cuts = np.sort(rng.integers(0, n + 1, size=(rows, 2)), axis=1)
    a, b = cuts[:, :1], cuts[:, 1:]
    pos = np.arange(n)[None, :]
    in_seg = (pos >= a) & (pos < b)

    gene_in_seg = np.zeros((rows, n), dtype=bool)
    gene_in_seg[np.arange(rows)[:, None], p1] = in_seg

    rot = (b + pos) % n
    p2_rot = np.take_along_axis(p2, rot, axis=1)
    keep = ~np.take_along_axis(gene_in_seg, p2_rot, axis=1)
    free = ~np.take_along_axis(in_seg, rot, axis=1)
    genes = np.take_along_axis(p2_rot, np.argsort(~keep, axis=1, kind="stable"), axis=1)
    slots = np.take_along_axis(rot, np.argsort(~free, axis=1, kind="stable"), axis=1)
    valid = pos < free.sum(axis=1, keepdims=True)

    child = p1.copy()
    row_idx = np.broadcast_to(np.arange(rows)[:, None], (rows, n))
    child[row_idx[valid], slots[valid]] = genes[valid]
    return child


def _swap_mutation(pop: np.ndarray, rate: float, rng: np.random.Generator) -> None:
    rows, n = pop.shape
    all_rows = np.arange(rows)
    for k in range(n):
        hit = all_rows[rng.random(rows) < rate]
        if hit.size == 0:
            continue
        partner = rng.integers(0, n, size=hit.size)
        pop[hit, k], pop[hit, partner] = pop[hit, partner], pop[hit, k].copy()


def solve_genetic(
    instance: TspInstance, cfg: GaConfig = GaConfig(), stats: Optional[SolveStats] = None
) -> Tour:
    """
    generational GA: size-2 tournaments, order crossover, swap mutation, elitism of one
    """
    start = time.perf_counter()
    dist = distance_matrix(instance)
    n, size = instance.n, cfg.population
    rng = np.random.default_rng(cfg.seed)
    pop = rng.permuted(np.tile(np.arange(n), (size, 1)), axis=1)
    lengths = _cycle_lengths(dist, pop)

    for _ in range(cfg.generations):
        elite = pop[int(np.argmin(lengths))].copy()
        duel = rng.integers(0, size, size=(size, 2))
        winners = np.where(
            lengths[duel[:, 0]] <= lengths[duel[:, 1]], duel[:, 0], duel[:, 1]
        )
        parents = pop[winners]
        mates = np.roll(parents, 1, axis=0)
        children = _order_crossover(parents, mates, rng)
        crossed = rng.random(size) < cfg.crossover_rate
        pop = np.where(crossed[:, None], children, parents)
        _swap_mutation(pop, cfg.mutation_rate, rng)
        pop[0] = elite
        lengths = _cycle_lengths(dist, pop)

    if stats is not None:
        stats.generations = cfg.generations
        stats.seconds = time.perf_counter() - start
    return _finish(pop[int(np.argmin(lengths))], dist)


def solve_ant_colony(
    instance: TspInstance, cfg: AcoConfig = AcoConfig(), stats: Optional[SolveStats] = None
) -> Tour:
    """
    ant system: tau <- (1 - rho) tau, then every ant deposits 1/L on its edges;
    all ants build their tours in lockstep
    """
    start = time.perf_counter()
    dist = distance_matrix(instance)
    n, ants = instance.n, cfg.ant_num
    rng = np.random.default_rng(cfg.seed)

    nn_length = nearest_neighbor_tour(instance).length
    tau = np.full((n, n), 1.0 / (n * max(nn_length, 1e-300)))
    eta = 1.0 / np.maximum(dist, 1e-12)
    np.fill_diagonal(eta, 0.0)
    heuristic = eta ** cfg.beta

    best_len, best_order = np.inf, None
    ant_idx = np.arange(ants)
    for _ in range(cfg.iterations):
        weights = (tau ** cfg.alpha) * heuristic
        tours = np.empty((ants, n), dtype=np.int64)
        tours[:, 0] = rng.integers(0, n, size=ants)
        visited = np.zeros((ants, n), dtype=bool)
        visited[ant_idx, tours[:, 0]] = True
        for step in range(1, n):
            w = weights[tours[:, step - 1]] * ~visited
            cum = np.cumsum(w, axis=1)
            total = cum[:, -1:]
            draw = (1.0 - rng.random((ants, 1))) * total
            nxt = np.minimum((cum < draw).sum(axis=1), n - 1)
            stuck = total[:, 0] <= 0.0
            if np.any(stuck):
                nxt[stuck] = np.argmax(~visited[stuck], axis=1)
            tours[:, step] = nxt
            visited[ant_idx, nxt] = True

        lengths = _cycle_lengths(dist, tours)
        k = int(np.argmin(lengths))
        if lengths[k] < best_len:
            best_len, best_order = lengths[k], tours[k].copy()

        tau *= 1.0 - cfg.rho
        heads, tails = tours, np.roll(tours, -1, axis=1)
        deposit = np.repeat(1.0 / lengths, n)
        np.add.at(tau, (heads.ravel(), tails.ravel()), deposit)
        np.add.at(tau, (tails.ravel(), heads.ravel()), deposit)

    if stats is not None:
        stats.iterations = cfg.iterations
        stats.seconds = time.perf_counter() - start
    return _finish(best_order, dist)


##########################################################################################
# DISPATCH
##########################################################################################
EXACT = ("exh", "dp", "bb")
HEURISTIC = ("ga", "aco")
ALGORITHMS = EXACT + HEURISTIC

SIZE_LIMITS = {"exh": EXHAUSTIVE_LIMIT, "dp": DP_LIMIT, "bb": BRANCH_BOUND_LIMIT}


def solve(
    instance: TspInstance,
    algo: str,
    ga: GaConfig = GaConfig(),
    aco: AcoConfig = AcoConfig(),
    stats: Optional[SolveStats] = None,
) -> Tour:
    """
    Errors:
        ConfigError
        SizeLimitError
    """
    if algo == "exh":
        return solve_exhaustive(instance, stats)
    if algo == "dp":
        return solve_dp(instance, stats)
    if algo == "bb":
        return solve_branch_bound(instance, stats)
    if algo == "ga":
        return solve_genetic(instance, ga, stats)
    if algo == "aco":
        return solve_ant_colony(instance, aco, stats)
    raise ConfigError(f"Unknown algorithm {algo!r}; pick one of {ALGORITHMS}")
