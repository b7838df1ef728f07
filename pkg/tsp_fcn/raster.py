"""
rasterize instances and tours into input images and one-hot label masks,
and turn network probabilities back into black/white images
"""
import logging
from dataclasses import asdict, dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

from .exceptions import (
    ConfigError,
    DimensionMismatchError,
    InvalidTourError,
    MalformedFileError,
    NumericGuardError,
    RasterError,
)
from .instance import (
    PixelCoords,
    TspInstance,
    Tour,
    normalize,
    pixel_collisions,
    pixel_positions,
    validate_tour,
)

logger = logging.getLogger(__name__)

FULL_GRAPH = "full-graph"
SCATTER = "scatter"
TOUR_LABEL = "tour-label"
MODES = (FULL_GRAPH, SCATTER, TOUR_LABEL)

RED = (255, 0, 0)
BLUE = (0, 0, 255)
WHITE = (255, 255, 255)
BLACK = (0, 0, 0)


@dataclass(frozen=True)
class RenderConfig:
    w: int = 224
    h: int = 224
    city_halfwidth: int = 6
    city_color: Tuple[int, int, int] = RED
    path_color: Tuple[int, int, int] = BLUE
    background_color: Tuple[int, int, int] = WHITE
    mode: str = FULL_GRAPH
    label_halfwidth: int = 0

    def __post_init__(self):
        for name in ("city_color", "path_color", "background_color"):
            object.__setattr__(self, name, tuple(int(c) for c in getattr(self, name)))
        colors = {self.city_color, self.path_color, self.background_color}
        if len(colors) != 3:
            raise ConfigError("City, path and background colors must all differ")
        if self.mode not in MODES:
            raise ConfigError(f"Unknown render mode {self.mode!r}; pick one of {MODES}")
        if self.city_halfwidth < 0 or self.label_halfwidth < 0:
            raise ConfigError("Half-widths must be non-negative")
        if 2 * self.city_halfwidth + 1 >= min(self.w, self.h):
            raise ConfigError(
                f"City square {2 * self.city_halfwidth + 1}px does not fit a {self.w}x{self.h} image"
            )

    @classmethod
    def desk(cls, **kwargs) -> "RenderConfig":
        """64x64 rendering for CPU-scale experiments, city squares scaled down to 5px"""
        return cls(**{"w": 64, "h": 64, "city_halfwidth": 2, **kwargs})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RenderConfig":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class RasterImage:
    """h x w x 3 RGB bytes, row-major from the top-left"""

    pixels: np.ndarray
    degenerate: bool = False
    collisions: Tuple[Tuple[int, int], ...] = ()

    @property
    def w(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def h(self) -> int:
        return int(self.pixels.shape[0])


@dataclass(frozen=True, eq=False)
class LabelMask:
    """
    h x w x 2 one-hot classes; channel 0 is background, channel 1 is optimal path or city
    """

    classes: np.ndarray
    degenerate: bool = False
    collisions: Tuple[Tuple[int, int], ...] = ()

    @property
    def w(self) -> int:
        return int(self.classes.shape[1])

    @property
    def h(self) -> int:
        return int(self.classes.shape[0])

    @classmethod
    def from_path_mask(cls, path: np.ndarray, **kwargs) -> "LabelMask":
        path = path.astype(np.uint8)
        return cls(np.stack([1 - path, path], axis=-1), **kwargs)


@dataclass(frozen=True, eq=False)
class Sample:
    """one dataset entry: instance with its optimal tour, input image and label (None if unlabeled)"""

    instance: TspInstance
    image: RasterImage
    label: Optional[LabelMask] = None


##########################################################################################
# LINES AND SQUARES
##########################################################################################
def _line_array(a: Sequence[int], b: Sequence[int]) -> np.ndarray:
    """
    integer DDA from a to b with floor rounding, anchored at the (x, y)-smaller endpoint
    so the pixel set does not depend on direction
    """
    ax, ay = int(a[0]), int(a[1])
    bx, by = int(b[0]), int(b[1])
    flipped = (bx, by) < (ax, ay)
    if flipped:
        ax, ay, bx, by = bx, by, ax, ay
    dx, dy = bx - ax, by - ay
    p = max(abs(dx), abs(dy))
    if p == 0:
        return np.array([[ax, ay]], dtype=np.int64)
    t = np.arange(p + 1, dtype=np.int64)
    pts = np.column_stack([ax + (t * dx) // p, ay + (t * dy) // p])
    return pts[::-1] if flipped else pts


def line_pixels(
    a: Sequence[int], b: Sequence[int], size: Optional[Tuple[int, int]] = None
) -> List[Tuple[int, int]]:
    """
    connected pixel segment from a to b (inclusive), as (x, y) pairs

    size = (w, h) bounds-checks both endpoints

    Errors:
        RasterError
    """
    if size is not None:
        w, h = size
        for x, y in (a, b):
            if not (0 <= x < w and 0 <= y < h):
                raise RasterError(f"Point ({x}, {y}) lies outside a {w}x{h} image")
    return [(int(x), int(y)) for x, y in _line_array(a, b)]


def _paint(canvas: np.ndarray, pts: np.ndarray, value, halfwidth: int = 0) -> None:
    if halfwidth == 0:
        canvas[pts[:, 1], pts[:, 0]] = value
        return
    for x, y in pts:
        _paint_square(canvas, x, y, halfwidth, value)


def _paint_square(canvas: np.ndarray, x: int, y: int, halfwidth: int, value) -> None:
    h, w = canvas.shape[:2]
    canvas[max(0, y - halfwidth) : min(h, y + halfwidth + 1), max(0, x - halfwidth) : min(w, x + halfwidth + 1)] = value


def city_square_mask(pixel_coords: PixelCoords, halfwidth: int) -> np.ndarray:
    """boolean h x w mask of every city square, clipped at the borders"""
    mask = np.zeros((pixel_coords.h, pixel_coords.w), dtype=bool)
    for x, y in pixel_positions(pixel_coords):
        _paint_square(mask, x, y, halfwidth, True)
    return mask


def _edges_mask(pos: np.ndarray, edges, shape, halfwidth: int = 0) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    for i, j in edges:
        _paint(mask, _line_array(pos[i], pos[j]), True, halfwidth)
    return mask


def _project(instance: TspInstance, cfg: RenderConfig):
    pixel_coords = normalize(instance, cfg.w, cfg.h)
    collisions = tuple(pixel_collisions(pixel_coords))
    if collisions:
        logger.warning("Instance %s has city-pixel collisions %s", instance.id, collisions)
    return pixel_coords, collisions


def _compose(pixel_coords, cfg: RenderConfig, path_mask: Optional[np.ndarray]) -> np.ndarray:
    canvas = np.empty((cfg.h, cfg.w, 3), dtype=np.uint8)
    canvas[...] = cfg.background_color
    if path_mask is not None:
        canvas[path_mask] = cfg.path_color
    # squares go last so paths never cover city information
    canvas[city_square_mask(pixel_coords, cfg.city_halfwidth)] = cfg.city_color
    return canvas


##########################################################################################
# RENDERING
##########################################################################################
def render_input(instance: TspInstance, cfg: RenderConfig) -> RasterImage:
    """
    fully connected graph: every city pair joined in path_color, city squares on top

    Errors:
        ConfigError
    """
    if cfg.mode != FULL_GRAPH:
        raise ConfigError(f"render_input needs mode {FULL_GRAPH!r}, got {cfg.mode!r}")
    pixel_coords, collisions = _project(instance, cfg)
    pos = pixel_positions(pixel_coords)
    n = instance.n
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    paths = _edges_mask(pos, edges, (cfg.h, cfg.w))
    return RasterImage(
        _compose(pixel_coords, cfg, paths), pixel_coords.degenerate, collisions
    )


def render_scatter(instance: TspInstance, cfg: RenderConfig) -> RasterImage:
    """
    cities only: the full-graph image with every path pixel returned to background

    Errors:
        ConfigError
    """
    if cfg.mode != SCATTER:
        raise ConfigError(f"render_scatter needs mode {SCATTER!r}, got {cfg.mode!r}")
    pixel_coords, collisions = _project(instance, cfg)
    return RasterImage(_compose(pixel_coords, cfg, None), pixel_coords.degenerate, collisions)


def render_label(instance: TspInstance, tour: Tour, cfg: RenderConfig) -> LabelMask:
    """
    one-hot mask with the n tour segments and all city squares in channel 1

    Errors:
        InvalidTourError
    """
    order = tour.order if isinstance(tour, Tour) else tuple(tour)
    verdict = validate_tour(instance, order)
    if not verdict:
        raise InvalidTourError(f"Cannot render label for {instance.id}: {verdict.reason}")
    pixel_coords, collisions = _project(instance, cfg)
    pos = pixel_positions(pixel_coords)
    edges = list(zip(order, order[1:] + order[:1]))
    path = _edges_mask(pos, edges, (cfg.h, cfg.w), cfg.label_halfwidth)
    path |= city_square_mask(pixel_coords, cfg.city_halfwidth)
    return LabelMask.from_path_mask(
        path, degenerate=pixel_coords.degenerate, collisions=collisions
    )


def render_sample(instance: TspInstance, tour: Tour, cfg: RenderConfig):
    """input image (full-graph unless cfg.mode is scatter) and label mask for one sample"""
    if cfg.mode == SCATTER:
        image = render_scatter(instance, cfg)
    else:
        image = render_input(instance, replace(cfg, mode=FULL_GRAPH))
    return image, render_label(instance, tour, cfg)


def probs_to_image(probabilities: np.ndarray) -> RasterImage:
    """
    black where P(path) >= P(background), white elsewhere; ties go to the path class

    Errors:
        NumericGuardError
        DimensionMismatchError
    """
    probabilities = np.asarray(probabilities)
    if probabilities.ndim != 3 or probabilities.shape[-1] != 2:
        raise DimensionMismatchError(
            f"Probability map must be h x w x 2, got {probabilities.shape}"
        )
    if not np.all(np.isfinite(probabilities)):
        raise NumericGuardError("Probability map contains NaN or Inf")
    return mask_to_image(probabilities[..., 1] >= probabilities[..., 0])


def mask_to_image(mask: np.ndarray) -> RasterImage:
    """black where mask is set, white elsewhere"""
    mask = np.asarray(mask, dtype=bool)
    pixels = np.full(mask.shape + (3,), 255, dtype=np.uint8)
    pixels[mask] = BLACK
    return RasterImage(pixels)


def image_to_array(image: RasterImage, dtype=np.float32) -> np.ndarray:
    """network input: RGB bytes scaled to [0, 1]"""
    return image.pixels.astype(dtype) / 255.0


def mask_from_image(image: RasterImage) -> np.ndarray:
    """boolean path mask of a black/white image (black = path)"""
    return np.all(image.pixels == 0, axis=-1)


def label_to_path_mask(label: LabelMask) -> np.ndarray:
    return label.classes[..., 1] == 1


##########################################################################################
# PNG CODEC
##########################################################################################
def _open_png(path, mode: str, expected_size) -> np.ndarray:
    try:
        with Image.open(path) as img:
            img.load()
            if img.format != "PNG":
                raise MalformedFileError(f"{path} is {img.format}, not PNG")
            if img.mode != mode:
                raise MalformedFileError(f"{path} has mode {img.mode}, expected {mode}")
            array = np.array(img)
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as e:
        raise MalformedFileError(f"Unable to read {path}: {e}") from e
    if expected_size is not None and (array.shape[1], array.shape[0]) != tuple(expected_size):
        raise DimensionMismatchError(
            f"{path} is {array.shape[1]}x{array.shape[0]}, expected {expected_size[0]}x{expected_size[1]}"
        )
    return array


def save_png(image: RasterImage, path) -> None:
    Image.fromarray(image.pixels).save(path, format="PNG")


def load_png(path, expected_size: Optional[Tuple[int, int]] = None) -> RasterImage:
    """
    Errors:
        MalformedFileError
        DimensionMismatchError
    """
    return RasterImage(_open_png(path, "RGB", expected_size))


def save_label_png(label: LabelMask, path) -> None:
    """channel 1 as 8-bit grayscale, 0 or 255"""
    gray = (label.classes[..., 1] * 255).astype(np.uint8)
    Image.fromarray(gray).save(path, format="PNG")


def load_label_png(path, expected_size: Optional[Tuple[int, int]] = None) -> LabelMask:
    """
    Errors:
        MalformedFileError
        DimensionMismatchError
    """
    gray = _open_png(path, "L", expected_size)
    if not np.all((gray == 0) | (gray == 255)):
        raise MalformedFileError(f"{path} is not a binary label (values other than 0/255)")
    return LabelMask.from_path_mask(gray == 255)
