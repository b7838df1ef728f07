"""
tour extraction from a black/white prediction image

greedy construction by path pixel density from several departure cities,
keeping the shortest closed tour
"""
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import ConfigError, DimensionMismatchError
from .instance import (
    PixelCoords,
    TspInstance,
    distance_matrix,
    make_tour,
    normalize,
    pixel_positions,
    rotate_tour,
    tour_length,
)
from .raster import RasterImage, line_pixels, mask_from_image

logger = logging.getLogger(__name__)

SHORTER_EDGE = "shorter-edge"
LOWER_INDEX = "lower-index"
TIE_BREAKS = (SHORTER_EDGE, LOWER_INDEX)
DENSITY_TIE_TOL = 1e-12


@dataclass(frozen=True)
class DecodeConfig:
    """
    m: departure cities tried (None means one per city)
    departure: city the returned tour must start at, if the problem fixes one
    """

    m: Optional[int] = None
    departure: Optional[int] = None
    seed: int = 0
    tie_break: str = SHORTER_EDGE

    def __post_init__(self):
        if self.m is not None and self.m < 1:
            raise ConfigError(f"Departure count m must be >= 1, got {self.m}")
        if self.tie_break not in TIE_BREAKS:
            raise ConfigError(f"Unknown tie break {self.tie_break!r}; pick one of {TIE_BREAKS}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DecodeConfig":
        return cls(**d)


@dataclass
class Solution:
    order: Tuple[int, ...]
    length: float
    m: int
    departures: List[int] = field(default_factory=list)
    departure_lengths: List[float] = field(default_factory=list)
    density_evaluations: int = 0
    density_ties: int = 0
    degenerate_paths: int = 0

    @property
    def diagnostics(self) -> dict:
        return {
            "departures": list(self.departures),
            "departure_lengths": list(self.departure_lengths),
            "density_evaluations": self.density_evaluations,
            "density_ties": self.density_ties,
            "degenerate_paths": self.degenerate_paths,
        }

    def to_dict(self) -> dict:
        return {"order": list(self.order), "length": self.length, "m": self.m, "diagnostics": self.diagnostics}


##########################################################################################
# DENSITY
##########################################################################################
def sample_pixels(pixel_coords: PixelCoords, i: int, j: int) -> List[Tuple[int, int]]:
    """
    the p_ij = max(|dx|, |dy|) pixels sampled on the segment between cities i and j,
    stepping from the (x, y)-smaller endpoint; the start pixel itself is not sampled

    an empty list means both cities share a pixel
    """
    if i == j:
        raise ConfigError("Density needs two distinct cities")
    pos = pixel_positions(pixel_coords)
    a, b = sorted([(int(pos[i, 0]), int(pos[i, 1])), (int(pos[j, 0]), int(pos[j, 1]))])
    return line_pixels(a, b)[1:]


def _as_mask(mask) -> np.ndarray:
    if isinstance(mask, RasterImage):
        return mask_from_image(mask)
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise DimensionMismatchError(f"Mask must be h x w, got {mask.shape}")
    return mask.astype(bool)


class DensityOracle:
    """
    path densities of one mask for one instance, counting every evaluation
    """

    def __init__(self, mask, pixel_coords: PixelCoords):
        self.mask = _as_mask(mask)
        if self.mask.shape != (pixel_coords.h, pixel_coords.w):
            raise DimensionMismatchError(
                f"Mask is {self.mask.shape[1]}x{self.mask.shape[0]}, cities were projected on {pixel_coords.w}x{pixel_coords.h}"
            )
        self.pos = pixel_positions(pixel_coords)
        self.evaluations = 0
        self.degenerate = 0

    def __call__(self, i: int, j: int) -> float:
        self.evaluations += 1
        a, b = sorted([tuple(self.pos[i]), tuple(self.pos[j])])
        if a == b:
            self.degenerate += 1
            return 1.0
        pts = np.array(line_pixels(a, b)[1:])
        return float(self.mask[pts[:, 1], pts[:, 0]].mean())


def path_density(mask, pixel_coords: PixelCoords, i: int, j: int) -> float:
    """
    rho_ij = black sampled pixels / sampled pixels; 1 when the cities share a pixel
    """
    if i == j:
        raise ConfigError("Density needs two distinct cities")
    return DensityOracle(mask, pixel_coords)(i, j)


##########################################################################################
# GREEDY CONSTRUCTION
##########################################################################################
def _greedy(oracle: DensityOracle, dist: np.ndarray, departure: int, tie_break: str):
    n = dist.shape[0]
    order = [departure]
    unvisited = set(range(n)) - {departure}
    ties = 0
    while unvisited:
        current = order[-1]
        candidates = sorted(unvisited)
        rho = np.array([oracle(current, c) for c in candidates])
        best = np.flatnonzero(rho >= rho.max() - DENSITY_TIE_TOL)
        if len(best) > 1:
            ties += 1
        if tie_break == SHORTER_EDGE:
            # stable sort keeps the lower index first among equal distances
            pick = best[np.argsort(dist[current, [candidates[b] for b in best]], kind="stable")[0]]
        else:
            pick = best[0]
        order.append(candidates[pick])
        unvisited.remove(candidates[pick])
    return tuple(order), ties


def _oracle_for(mask, instance: TspInstance) -> DensityOracle:
    mask = _as_mask(mask)
    h, w = mask.shape
    return DensityOracle(mask, normalize(instance, w, h))


def greedy_tour(mask, instance: TspInstance, departure: int, tie_break: str = SHORTER_EDGE):
    """
    from departure, keep moving to the unvisited city with the densest path, then
    close the loop; always a valid tour

    Errors:
        DimensionMismatchError
    """
    if not 0 <= departure < instance.n:
        raise ConfigError(f"Departure {departure} out of range for {instance.n} cities")
    oracle = _oracle_for(mask, instance)
    order, _ = _greedy(oracle, distance_matrix(instance), departure, tie_break)
    return make_tour(instance, order)


def departures_for(n: int, cfg: DecodeConfig) -> List[int]:
    """
    m >= n: every city once in index order; m < n: the first m of n seeded draws
    with repetition, so smaller m always tries a subset of the larger m
    """
    m = n if cfg.m is None else cfg.m
    if m == 1 and cfg.departure is not None:
        return [cfg.departure]
    if m >= n:
        return list(range(n))
    pool = np.random.default_rng(cfg.seed).integers(0, n, size=n)
    return [int(c) for c in pool[:m]]


def post_process(mask, instance: TspInstance, cfg: DecodeConfig = DecodeConfig()) -> Solution:
    """
    greedy tours from m departures; the shortest wins (earliest departure on ties)
    and is rotated to start at cfg.departure when one is given

    Errors:
        DimensionMismatchError
        ConfigError
    """
    n = instance.n
    if cfg.departure is not None and not 0 <= cfg.departure < n:
        raise ConfigError(f"Departure {cfg.departure} out of range for {n} cities")
    oracle = _oracle_for(mask, instance)
    dist = distance_matrix(instance)
    departures = departures_for(n, cfg)

    best_order, best_length = None, np.inf
    lengths, ties = [], 0
    for departure in departures:
        order, t = _greedy(oracle, dist, departure, cfg.tie_break)
        ties += t
        length = tour_length(instance, order)
        lengths.append(length)
        if length < best_length:
            best_order, best_length = order, length

    if cfg.departure is not None:
        best_order = rotate_tour(best_order, cfg.departure)
    if oracle.degenerate:
        logger.debug("Instance %s: %d degenerate path evaluations", instance.id, oracle.degenerate)
    return Solution(
        best_order,
        float(best_length),
        len(departures),
        departures,
        lengths,
        oracle.evaluations,
        ties,
        oracle.degenerate,
    )


##########################################################################################
# TIMING
##########################################################################################
@dataclass(frozen=True)
class TimingRow:
    m: int
    mean_ms: float
    evaluations: float


def decode_timing(
    masks: Sequence, instances: Sequence[TspInstance], m_values: Sequence[int], seed: int = 0
) -> List[TimingRow]:
    """
    mean wall time per decode for each m over a fixed batch, and the mean number
    of density evaluations per decode (m n (n - 1) / 2)
    """
    rows = []
    for m in m_values:
        cfg = DecodeConfig(m=m, seed=seed)
        elapsed, evaluations = 0.0, 0
        for mask, instance in zip(masks, instances):
            start = time.perf_counter()
            solution = post_process(mask, instance, cfg)
            elapsed += time.perf_counter() - start
            evaluations += solution.density_evaluations
        count = max(len(instances), 1)
        rows.append(TimingRow(m, 1000.0 * elapsed / count, evaluations / count))
        logger.debug("m=%d: %.3f ms per decode", m, rows[-1].mean_ms)
    return rows


def solution_from_dict(d: Dict) -> Solution:
    diag = d.get("diagnostics", {})
    return Solution(
        tuple(d["order"]),
        float(d["length"]),
        int(d["m"]),
        list(diag.get("departures", [])),
        list(diag.get("departure_lengths", [])),
        int(diag.get("density_evaluations", 0)),
        int(diag.get("density_ties", 0)),
        int(diag.get("degenerate_paths", 0)),
    )
