"""
TSP instances: generation, tour arithmetic, validation and projection onto the image grid
"""
import json
import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pyarrow as pa
from pyarrow import json as pa_json

from .exceptions import InvalidInstanceError, InvalidTourError, MalformedFileError

logger = logging.getLogger(__name__)

DEFAULT_BOUNDS = (0.0, 0.0, 1.0, 1.0)
REL_TOL = 1e-9

_JSONL_SCHEMA = pa.schema(
    [
        ("id", pa.string()),
        ("coords", pa.list_(pa.list_(pa.float64()))),
        ("tour", pa.list_(pa.int64())),
        ("length", pa.float64()),
    ]
)


@dataclass(frozen=True)
class TspInstance:
    """
    n cities in the plane, optionally with a known optimal tour and its length
    """

    id: str
    coords: np.ndarray
    tour: Optional[Tuple[int, ...]] = None
    length: Optional[float] = None

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise InvalidInstanceError(
                f"Instance {self.id} coords must be n pairs, got shape {coords.shape}"
            )
        if coords.shape[0] < 3:
            raise InvalidInstanceError(
                f"Instance {self.id} needs at least 3 cities, got {coords.shape[0]}"
            )
        if not np.all(np.isfinite(coords)):
            raise InvalidInstanceError(f"Instance {self.id} has non-finite coordinates")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        if self.tour is not None:
            object.__setattr__(self, "tour", tuple(int(c) for c in self.tour))

    @property
    def n(self) -> int:
        return int(self.coords.shape[0])

    def with_solution(self, tour: "Tour") -> "TspInstance":
        """return a copy carrying tour as its known optimum"""
        return TspInstance(self.id, self.coords, tour=tour.order, length=tour.length)

    def solution(self) -> Optional["Tour"]:
        if self.tour is None:
            return None
        length = self.length if self.length is not None else tour_length(self, self.tour)
        return Tour(self.tour, length)


@dataclass(frozen=True)
class Tour:
    """city passing order and total cycle distance"""

    order: Tuple[int, ...]
    length: float

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(int(c) for c in self.order))
        object.__setattr__(self, "length", float(self.length))

    @property
    def n(self) -> int:
        return len(self.order)


@dataclass(frozen=True)
class TourVerdict:
    valid: bool
    reason: Optional[str] = None

    def __bool__(self):
        return self.valid


@dataclass(frozen=True)
class PixelCoords:
    """
    city positions in pixel units, 0 <= x* <= w and 0 <= y* <= h

    degenerate_x / degenerate_y flag axes on which all cities share a coordinate;
    those cities sit on the image centerline
    """

    points: np.ndarray
    w: int
    h: int
    degenerate_x: bool = False
    degenerate_y: bool = False

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64)
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @property
    def degenerate(self) -> bool:
        return self.degenerate_x or self.degenerate_y

    @property
    def n(self) -> int:
        return int(self.points.shape[0])


def generate_instance(
    n: int,
    seed: int,
    bounds: Sequence[float] = DEFAULT_BOUNDS,
    instance_id: Optional[str] = None,
) -> TspInstance:
    """
    n i.i.d. uniform cities inside bounds = (x_min, y_min, x_max, y_max)

    Errors:
        InvalidInstanceError
    """
    if n < 3:
        raise InvalidInstanceError(f"Need at least 3 cities, got {n}")
    x_min, y_min, x_max, y_max = (float(b) for b in bounds)
    if not (x_max > x_min and y_max > y_min):
        raise InvalidInstanceError(f"Bounds {tuple(bounds)} are degenerate")
    rng = np.random.default_rng(seed)
    xs = rng.uniform(x_min, x_max, size=n)
    ys = rng.uniform(y_min, y_max, size=n)
    if instance_id is None:
        instance_id = f"n{n}-s{seed}"
    return TspInstance(instance_id, np.column_stack([xs, ys]))


def distance_matrix(instance: TspInstance) -> np.ndarray:
    diff = instance.coords[:, None, :] - instance.coords[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1))


def validate_tour(instance: TspInstance, order: Sequence) -> TourVerdict:
    """
    accept iff order visits every city exactly once
    """
    n = instance.n
    seen = set()
    for city in order:
        if isinstance(city, (bool, np.bool_)) or not isinstance(city, (int, np.integer)):
            return TourVerdict(False, f"non-integer city {city!r}")
        if not 0 <= city < n:
            return TourVerdict(False, f"city {city} out of range")
        if city in seen:
            return TourVerdict(False, f"duplicate city {city}")
        seen.add(int(city))
    if len(seen) < n:
        missing = sorted(set(range(n)) - seen)
        return TourVerdict(False, f"missing city {missing[0]}")
    if len(order) != n:
        return TourVerdict(False, f"wrong length {len(order)} != {n}")
    return TourVerdict(True)


def tour_length(instance: TspInstance, order: Sequence[int]) -> float:
    """
    total Euclidean length of the closed tour

    Errors:
        InvalidTourError
    """
    verdict = validate_tour(instance, order)
    if not verdict:
        raise InvalidTourError(f"Invalid tour for {instance.id}: {verdict.reason}")
    idx = np.asarray(order, dtype=np.int64)
    pts = instance.coords[idx]
    steps = pts - np.roll(pts, -1, axis=0)
    return float(np.sqrt((steps ** 2).sum(axis=1)).sum())


def make_tour(instance: TspInstance, order: Sequence[int]) -> Tour:
    return Tour(tuple(order), tour_length(instance, order))


def rotate_tour(order: Sequence[int], departure: int) -> Tuple[int, ...]:
    """rotate a cyclic order so it starts at departure"""
    order = list(order)
    k = order.index(departure)
    return tuple(order[k:] + order[:k])


def normalize(instance: TspInstance, w: int, h: int) -> PixelCoords:
    """
    project cities onto a w x h image so they fill it:
        lambda_x = (x_max - x_min) / w,  x* = (x - x_min) / lambda_x  (likewise y)

    an axis with zero extent is placed on the centerline and flagged
    """
    if w < 2 or h < 2:
        raise InvalidInstanceError(f"Image must be at least 2x2, got {w}x{h}")
    points = np.empty_like(instance.coords)
    flags = []
    for axis, size in ((0, w), (1, h)):
        values = instance.coords[:, axis]
        low, high = values.min(), values.max()
        if high == low:
            points[:, axis] = size / 2.0
            flags.append(True)
        else:
            points[:, axis] = np.clip((values - low) / (high - low) * size, 0.0, size)
            flags.append(False)
    if any(flags):
        logger.warning("Instance %s has a degenerate axis (x=%s, y=%s)", instance.id, *flags)
    return PixelCoords(points, w, h, degenerate_x=flags[0], degenerate_y=flags[1])


def pixel_positions(pixel_coords: PixelCoords) -> np.ndarray:
    """
    integer pixel of each city: integer part of x*, y*, with x* = w mapped to the last column
    """
    pos = np.floor(pixel_coords.points).astype(np.int64)
    pos[:, 0] = np.clip(pos[:, 0], 0, pixel_coords.w - 1)
    pos[:, 1] = np.clip(pos[:, 1], 0, pixel_coords.h - 1)
    return pos


def pixel_collisions(pixel_coords: PixelCoords) -> List[Tuple[int, int]]:
    """pairs of distinct cities that share an integer pixel"""
    pos = pixel_positions(pixel_coords)
    return [
        (i, j)
        for i, j in combinations(range(pixel_coords.n), 2)
        if pos[i, 0] == pos[j, 0] and pos[i, 1] == pos[j, 1]
    ]


##########################################################################################
# JSONL CODEC
##########################################################################################
def instance_to_dict(instance: TspInstance) -> dict:
    record = {"id": instance.id, "coords": instance.coords.tolist()}
    if instance.tour is not None:
        record["tour"] = list(instance.tour)
    if instance.length is not None:
        record["length"] = instance.length
    return record


def instance_from_dict(record: dict) -> TspInstance:
    try:
        return TspInstance(
            str(record["id"]),
            np.asarray(record["coords"], dtype=np.float64),
            tour=record.get("tour"),
            length=record.get("length"),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedFileError(f"Bad instance record: {e}") from e


def save_instances(instances: Iterable[TspInstance], path) -> None:
    """write one JSON object per line; floats keep full precision"""
    with open(path, "w", encoding="utf-8") as f:
        for instance in instances:
            f.write(json.dumps(instance_to_dict(instance)) + "\n")


def load_instances(path) -> List[TspInstance]:
    """
    read an instances.jsonl file

    Errors:
        MalformedFileError
    """
    try:
        with open(path, "rb") as f:
            if not f.read(1):
                return []
        table = pa_json.read_json(
            str(path), parse_options=pa_json.ParseOptions(explicit_schema=_JSONL_SCHEMA)
        )
    except (pa.ArrowInvalid, pa.ArrowTypeError) as e:
        raise MalformedFileError(f"Unable to parse {path}: {e}") from e
    return [
        instance_from_dict({k: v for k, v in row.items() if v is not None})
        for row in table.to_pylist()
    ]
