import hashlib

import numpy as np
import pytest

from tsp_fcn import exceptions
from tsp_fcn.instance import TspInstance, generate_instance, make_tour, normalize, pixel_positions
from tsp_fcn.raster import (
    BLUE,
    RED,
    SCATTER,
    WHITE,
    LabelMask,
    RasterImage,
    RenderConfig,
    city_square_mask,
    line_pixels,
    load_label_png,
    load_png,
    mask_to_image,
    probs_to_image,
    render_input,
    render_label,
    render_sample,
    render_scatter,
    save_label_png,
    save_png,
)
from tsp_fcn.solvers import solve_dp


@pytest.fixture(scope="function")
def cfg():
    return RenderConfig.desk()


@pytest.fixture(scope="function")
def triangle():
    return TspInstance("triangle", [[0, 0], [1, 0], [0.5, 1]])


def _color_mask(image, color):
    return np.all(image.pixels == np.array(color, dtype=np.uint8), axis=-1)


def _is_connected(pixels):
    return all(max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1 for a, b in zip(pixels, pixels[1:]))


def test_config_validation():
    with pytest.raises(exceptions.ConfigError):
        RenderConfig(city_color=BLUE)
    with pytest.raises(exceptions.ConfigError):
        RenderConfig(w=12, h=12, city_halfwidth=6)
    with pytest.raises(exceptions.ConfigError):
        RenderConfig(mode="sketch")
    assert RenderConfig.from_dict(RenderConfig.desk().to_dict()) == RenderConfig.desk()


def test_line_axis_aligned():
    assert line_pixels((0, 0), (3, 0)) == [(0, 0), (1, 0), (2, 0), (3, 0)]


def test_line_single_point():
    assert line_pixels((0, 0), (0, 0)) == [(0, 0)]


def test_line_symmetric():
    forward = line_pixels((0, 0), (5, 3))
    backward = line_pixels((5, 3), (0, 0))
    assert set(forward) == set(backward)
    assert forward == backward[::-1]
    assert _is_connected(forward)


def test_line_random_connected():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b = rng.integers(0, 64, size=(2, 2))
        pixels = line_pixels(tuple(a), tuple(b))
        assert pixels[0] == tuple(a) and pixels[-1] == tuple(b)
        assert _is_connected(pixels)
        assert len(pixels) == max(abs(a - b)) + 1


def test_line_out_of_bounds():
    with pytest.raises(exceptions.RasterError):
        line_pixels((0, 0), (64, 3), size=(64, 64))


def test_render_input_counts(triangle, cfg):
    image = render_input(triangle, cfg)
    assert (image.w, image.h) == (64, 64)
    pos = pixel_positions(normalize(triangle, 64, 64))
    squares = city_square_mask(normalize(triangle, 64, 64), cfg.city_halfwidth)
    assert np.array_equal(_color_mask(image, RED), squares)
    for i, j in ((0, 1), (1, 2), (0, 2)):
        line = [p for p in line_pixels(pos[i], pos[j]) if not squares[p[1], p[0]]]
        assert line and all(np.all(image.pixels[y, x] == BLUE) for x, y in line)


def test_render_only_three_colors(cfg):
    image = render_input(generate_instance(10, seed=3), cfg)
    colored = _color_mask(image, RED) | _color_mask(image, BLUE) | _color_mask(image, WHITE)
    assert colored.all()


def test_render_deterministic(cfg):
    x = generate_instance(10, seed=3)
    assert render_input(x, cfg).pixels.tobytes() == render_input(x, cfg).pixels.tobytes()


def test_render_squares_on_top():
    cfg = RenderConfig()
    x = generate_instance(10, seed=12)
    image = render_input(x, cfg)
    squares = city_square_mask(normalize(x, cfg.w, cfg.h), cfg.city_halfwidth)
    assert np.all(image.pixels[squares] == RED)


def test_scatter_is_full_without_paths(cfg):
    x = generate_instance(10, seed=9)
    full = render_input(x, cfg)
    scatter = render_scatter(x, RenderConfig.desk(mode=SCATTER))
    expected = full.pixels.copy()
    expected[_color_mask(full, BLUE)] = WHITE
    assert np.array_equal(scatter.pixels, expected)
    assert not _color_mask(scatter, BLUE).any()


def test_render_wrong_mode(triangle, cfg):
    with pytest.raises(exceptions.ConfigError):
        render_scatter(triangle, cfg)


def test_render_label_one_hot(cfg):
    x = generate_instance(8, seed=1)
    label = render_label(x, solve_dp(x), cfg)
    assert label.classes.shape == (64, 64, 2)
    assert np.all(label.classes.sum(axis=-1) == 1)
    assert label.classes[..., 0].sum() + label.classes[..., 1].sum() == 64 * 64


def test_render_label_square_segments(cfg):
    x = TspInstance("square", [[0, 0], [1, 0], [1, 1], [0, 1]])
    label = render_label(x, make_tour(x, [0, 1, 2, 3]), cfg)
    path = label.classes[..., 1] == 1
    # outline of the image, nothing inside
    assert path[0, :].all() and path[63, :].all() and path[:, 0].all() and path[:, 63].all()
    assert not path[10:54, 10:54].any()


def test_render_label_invalid_tour(triangle, cfg):
    with pytest.raises(exceptions.InvalidTourError):
        render_label(triangle, (0, 1, 1), cfg)


def test_render_sample_scatter(cfg):
    x = generate_instance(6, seed=2)
    image, label = render_sample(x, solve_dp(x), RenderConfig.desk(mode=SCATTER))
    assert not _color_mask(image, BLUE).any()
    assert label.classes[..., 1].sum() > 0


def test_probs_to_image():
    probs = np.zeros((8, 8, 2))
    probs[..., 1] = 0.9
    probs[..., 0] = 0.1
    assert np.all(probs_to_image(probs).pixels == 0)
    tie = np.full((8, 8, 2), 0.5)
    assert np.all(probs_to_image(tie).pixels == 0)


def test_probs_to_image_argmax():
    probs = np.random.default_rng(1).random((16, 16, 2))
    image = probs_to_image(probs)
    black = np.all(image.pixels == 0, axis=-1)
    assert black.sum() == np.sum(probs[..., 1] >= probs[..., 0])


def test_probs_to_image_guards():
    probs = np.full((4, 4, 2), 0.5)
    probs[1, 1, 0] = np.nan
    with pytest.raises(exceptions.NumericGuardError):
        probs_to_image(probs)
    with pytest.raises(exceptions.DimensionMismatchError):
        probs_to_image(np.zeros((4, 4, 3)))


def test_mask_to_image():
    mask = np.eye(5, dtype=bool)
    pixels = mask_to_image(mask).pixels
    assert np.all(pixels[mask] == 0)
    assert np.all(pixels[~mask] == 255)


def test_png_round_trip(tmp_path, cfg):
    x = generate_instance(10, seed=4)
    image, label = render_sample(x, solve_dp(x), cfg)
    save_png(image, tmp_path / "image.png")
    save_label_png(label, tmp_path / "label.png")
    assert np.array_equal(load_png(tmp_path / "image.png").pixels, image.pixels)
    assert np.array_equal(load_label_png(tmp_path / "label.png").classes, label.classes)


def test_png_truncated(tmp_path, cfg):
    save_png(render_input(generate_instance(5, seed=1), cfg), tmp_path / "image.png")
    data = (tmp_path / "image.png").read_bytes()
    (tmp_path / "broken.png").write_bytes(data[: len(data) // 2])
    with pytest.raises(exceptions.MalformedFileError):
        load_png(tmp_path / "broken.png")


def test_png_dimension_mismatch(tmp_path, cfg):
    save_png(render_input(generate_instance(5, seed=1), cfg), tmp_path / "image.png")
    with pytest.raises(exceptions.DimensionMismatchError):
        load_png(tmp_path / "image.png", expected_size=(224, 224))


def test_label_png_rejects_rgb(tmp_path):
    save_png(RasterImage(np.zeros((8, 8, 3), dtype=np.uint8)), tmp_path / "rgb.png")
    with pytest.raises(exceptions.MalformedFileError):
        load_label_png(tmp_path / "rgb.png")


# sha256 of image bytes then label bytes for the three-city 8 x 8 render below:
#   RB......
#   B.BB....
#   B...BB..
#   B.....B.
#   .B....BR
#   .B..BB..
#   .B.B....
#   ..R.....
GOLDEN_SAMPLE_SHA256 = "574fc2207324184978192d35d72a2c1c9d9264c937d71c9b31b6b82742ad6a4b"


def test_golden_sample_digest():
    x = TspInstance("golden", [[0, 0], [8, 4], [2, 8]])
    image, label = render_sample(x, (0, 1, 2), RenderConfig(w=8, h=8, city_halfwidth=0))
    assert image.pixels[4].tolist()[6:] == [list(BLUE), list(RED)]
    digest = hashlib.sha256(image.pixels.tobytes() + label.classes.tobytes()).hexdigest()
    assert digest == GOLDEN_SAMPLE_SHA256


def test_label_from_path_mask():
    label = LabelMask.from_path_mask(np.array([[True, False]]))
    assert label.classes.tolist() == [[[0, 1], [1, 0]]]
