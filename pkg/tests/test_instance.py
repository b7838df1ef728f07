import numpy as np
import pytest

from tsp_fcn import exceptions
from tsp_fcn.instance import (
    TspInstance,
    generate_instance,
    load_instances,
    make_tour,
    normalize,
    pixel_collisions,
    pixel_positions,
    rotate_tour,
    save_instances,
    tour_length,
    validate_tour,
)


@pytest.fixture(scope="function")
def square():
    """unit square, corners in perimeter order"""
    return TspInstance("square", [[0, 0], [1, 0], [1, 1], [0, 1]])


def test_generate_deterministic():
    a = generate_instance(10, seed=1)
    b = generate_instance(10, seed=1)
    assert np.array_equal(a.coords, b.coords)
    assert a.id == b.id


def test_generate_inside_bounds():
    x = generate_instance(3, seed=7, bounds=(-2, 5, 3, 6))
    assert x.n == 3
    assert np.all((x.coords[:, 0] >= -2) & (x.coords[:, 0] <= 3))
    assert np.all((x.coords[:, 1] >= 5) & (x.coords[:, 1] <= 6))


def test_generate_uniform_mean():
    coords = np.concatenate([generate_instance(10, seed=k).coords for k in range(1, 101)])
    assert np.all(np.abs(coords.mean(axis=0) - 0.5) < 0.05)


def test_generate_too_few():
    with pytest.raises(exceptions.InvalidInstanceError):
        generate_instance(2, seed=0)
    with pytest.raises(exceptions.InvalidInstanceError):
        generate_instance(5, seed=0, bounds=(0, 0, 0, 1))


def test_instance_is_immutable(square):
    with pytest.raises(ValueError):
        square.coords[0, 0] = 5.0


def test_tour_length_square(square):
    assert tour_length(square, [0, 1, 2, 3]) == pytest.approx(4.0, rel=1e-12)


def test_tour_length_triangle_orientation():
    x = generate_instance(3, seed=2)
    assert tour_length(x, [0, 1, 2]) == pytest.approx(tour_length(x, [0, 2, 1]), rel=1e-12)


def test_tour_length_pairwise_sum():
    x = generate_instance(6, seed=11)
    order = [3, 0, 5, 1, 4, 2]
    expected = 0.0
    for k in range(6):
        a, b = x.coords[order[k]], x.coords[order[(k + 1) % 6]]
        expected += ((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2) ** 0.5
    assert tour_length(x, order) == pytest.approx(expected, rel=1e-9)


def test_tour_length_rotation_reversal():
    x = generate_instance(8, seed=4)
    order = [2, 7, 1, 0, 5, 3, 6, 4]
    length = tour_length(x, order)
    assert tour_length(x, rotate_tour(order, 5)) == pytest.approx(length, rel=1e-9)
    assert tour_length(x, order[::-1]) == pytest.approx(length, rel=1e-9)


def test_tour_length_invalid(square):
    with pytest.raises(exceptions.InvalidTourError):
        tour_length(square, [0, 1, 1, 3])


def test_validate_tour(square):
    assert validate_tour(square, [0, 1, 2, 3])
    verdict = validate_tour(square, [0, 1, 1, 3])
    assert not verdict and "duplicate" in verdict.reason
    verdict = validate_tour(square, [0, 1, 2])
    assert not verdict and "missing" in verdict.reason
    assert not validate_tour(square, [0, 1, 2, 4])
    assert not validate_tour(square, [0, 1, 2, 3, 0])


def test_rotate_tour():
    assert rotate_tour([3, 1, 0, 2], 0) == (0, 2, 3, 1)


def test_make_tour(square):
    tour = make_tour(square, [0, 3, 2, 1])
    assert tour.order == (0, 3, 2, 1)
    assert tour.length == pytest.approx(4.0)


def test_normalize_extremes():
    x = TspInstance("two", [[10, 10], [20, 30], [15, 20]])
    pc = normalize(x, 224, 224)
    assert pc.points[0].tolist() == [0.0, 0.0]
    assert pc.points[1].tolist() == [224.0, 224.0]
    assert not pc.degenerate


def test_normalize_degenerate_axis():
    x = TspInstance("line", [[3, 0], [3, 1], [3, 5]])
    pc = normalize(x, 64, 32)
    assert pc.degenerate_x and not pc.degenerate_y
    assert np.all(pc.points[:, 0] == 32.0)


def test_normalize_random_fills_image():
    pc = normalize(generate_instance(10, seed=5), 224, 224)
    assert pc.points[:, 0].min() == pytest.approx(0.0, abs=1e-9)
    assert pc.points[:, 0].max() == pytest.approx(224.0, abs=1e-9)
    assert pc.points[:, 1].min() == pytest.approx(0.0, abs=1e-9)
    assert pc.points[:, 1].max() == pytest.approx(224.0, abs=1e-9)


def test_normalize_affine_invariant():
    x = generate_instance(9, seed=6)
    moved = TspInstance("moved", 3.5 * x.coords + np.array([-7.0, 12.0]))
    assert np.allclose(normalize(x, 224, 224).points, normalize(moved, 224, 224).points, atol=1e-9)


def test_pixel_positions_clip_far_edge():
    x = TspInstance("corners", [[0, 0], [1, 1], [0.5, 0.25]])
    pos = pixel_positions(normalize(x, 64, 64))
    assert pos.tolist() == [[0, 0], [63, 63], [32, 16]]


def test_pixel_collisions_reported():
    x = TspInstance("close", [[0, 0], [1, 1], [0.5, 0.5], [0.5001, 0.5001]])
    assert pixel_collisions(normalize(x, 224, 224)) == [(2, 3)]
    assert pixel_collisions(normalize(x, 100000, 100000)) == []


def test_cities_rarely_share_a_pixel_at_224():
    count = 0
    clean = 0
    for n in range(4, 13):
        for k in range(200):
            x = generate_instance(n, seed=[n, k, 7])
            count += 1
            clean += not pixel_collisions(normalize(x, 224, 224))
    assert clean / count >= 0.99


def test_jsonl_round_trip(tmp_path):
    x = generate_instance(7, seed=8)
    tour = make_tour(x, [0, 2, 4, 6, 1, 3, 5])
    path = tmp_path / "instances.jsonl"
    save_instances([x, x.with_solution(tour)], path)
    plain, solved = load_instances(path)
    assert np.array_equal(plain.coords, x.coords)
    assert plain.tour is None and plain.length is None
    assert solved.tour == tour.order
    assert solved.length == tour.length


def test_jsonl_empty_and_malformed(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert load_instances(empty) == []
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "x", "coords": [[0, 0], [1, 1]]\n')
    with pytest.raises(exceptions.MalformedFileError):
        load_instances(bad)
