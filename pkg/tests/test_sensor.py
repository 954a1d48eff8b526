import math
from dataclasses import replace

import numpy as np
import pytest

from uavsearch.occupancy import OccupancyGrid
from uavsearch.scenario import COLORS, VEHICLE_TYPES, GroundTruthEntity, MapExtent, Pose, Scenario
from uavsearch.sensor import (
    PRESETS,
    SensorModel,
    confusion_matrix,
    line_of_sight,
    sense,
    sensor_preset,
    traverse_voxels,
    visible_entities,
)


def _scene(boxes=(), entities=None):
    grid = OccupancyGrid.from_boxes((0.0, 0.0), 1.0, (40, 40, 30), list(boxes))
    ents = entities or (GroundTruthEntity("E1", (20.5, 20.5, 0.0), "sedan", "red", True),)
    return Scenario(MapExtent(0, 0, 40, 40), (), (), (), tuple(ents), grid)


def test_entity_directly_below_is_visible():
    s = _scene()
    m = SensorModel(max_range=50.0)
    assert visible_entities(Pose((20.5, 20.5, 20.0)), s, m) == ["E1"]


def test_occluding_voxel_on_ray_midpoint():
    s = _scene(boxes=[(20.0, 20.0, 10.0, 21.0, 21.0, 11.0)])
    m = SensorModel(max_range=50.0)
    assert visible_entities(Pose((20.5, 20.5, 20.0)), s, m) == []


def sampled_line_of_sight(grid, p0, p1, step):
    n = max(1, int(math.ceil(math.dist(p0, p1) / step)))
    for k in range(n + 1):
        t = k / n
        p = tuple(a + t * (b - a) for a, b in zip(p0, p1))
        if grid.is_occupied(p):
            return False
    return True


def test_visibility_matches_fine_sampling_oracle(tutorial):
    rng = np.random.default_rng(7)
    step = tutorial.occupancy.cell_size / 10.0
    checked = 0
    for _ in range(10):
        pose = Pose((float(rng.uniform(0, 300)), float(rng.uniform(0, 300)), 40.0))
        for ent in tutorial.entities:
            fast = line_of_sight(tutorial.occupancy, pose.position, ent.position)
            slow = sampled_line_of_sight(tutorial.occupancy, pose.position, ent.position, step)
            assert fast == slow
            checked += 1
    assert checked == 70


def test_dda_visits_every_sampled_voxel():
    rng = np.random.default_rng(3)
    g = OccupancyGrid.empty((0.0, 0.0), 1.0, (12, 12, 12))
    for _ in range(200):
        p0 = tuple(rng.uniform(0.1, 11.9, 3))
        p1 = tuple(rng.uniform(0.1, 11.9, 3))
        dda = list(traverse_voxels(g, p0, p1))
        assert len(dda) == len(set(dda))
        n = 2000
        sampled = {g.index_of(tuple(a + k / n * (b - a) for a, b in zip(p0, p1))) for k in range(n + 1)}
        assert sampled <= set(dda)
        # Consecutive voxels are face neighbours.
        for u, v in zip(dda, dda[1:]):
            assert sum(abs(a - b) for a, b in zip(u, v)) == 1


def test_noiseless_sensor_reproduces_truth():
    s = _scene()
    m = sensor_preset("perfect")
    dets = sense(Pose((20.5, 20.5, 30.0)), s, m, np.random.default_rng(0), 4)
    assert len(dets) == 1
    d = dets[0]
    assert d.measured_position == (20.5, 20.5, 0.0)
    assert d.color_likelihood == tuple(1.0 if c == "red" else 0.0 for c in COLORS)
    assert d.type_likelihood == tuple(1.0 if t == "sedan" else 0.0 for t in VEHICLE_TYPES)
    assert d.frame_id == 4 and d.source_entity == "E1"


def test_zero_detection_probability():
    s = _scene()
    m = replace(sensor_preset("clear"), p_detect=0.0, false_positive_rate=0.0)
    rng = np.random.default_rng(0)
    assert all(sense(Pose((20.5, 20.5, 30.0)), s, m, rng) == [] for _ in range(50))


def test_position_noise_matches_sigma():
    s = _scene()
    m = SensorModel(p_detect=1.0, position_noise_sigma=2.0, false_positive_rate=0.0, max_range=100.0)
    rng = np.random.default_rng(11)
    pts = np.array([sense(Pose((20.5, 20.5, 30.0)), s, m, rng)[0].measured_position for _ in range(10_000)])
    std = pts.std(axis=0)
    assert np.all(np.abs(std - 2.0) <= 0.05 * 2.0)


def test_consecutive_frames_uncorrelated():
    s = _scene()
    m = SensorModel(p_detect=1.0, position_noise_sigma=1.0, false_positive_rate=0.0, max_range=100.0)
    rng = np.random.default_rng(5)
    xs = np.array([sense(Pose((20.5, 20.5, 30.0)), s, m, rng)[0].measured_position[0] for _ in range(5000)])
    xs = xs - xs.mean()
    r1 = float(np.dot(xs[:-1], xs[1:]) / np.dot(xs, xs))
    assert abs(r1) < 4 / math.sqrt(len(xs))


def test_sense_is_reproducible(tutorial):
    m = sensor_preset("night")
    poses = [Pose((float(x), 200.0, 40.0)) for x in range(40, 140, 5)]
    runs = []
    for _ in range(2):
        rng = np.random.default_rng(99)
        runs.append([sense(p, tutorial, m, rng, k) for k, p in enumerate(poses)])
    assert runs[0] == runs[1]


def test_likelihoods_normalised_and_sigma_positive(tutorial):
    rng = np.random.default_rng(1)
    for name in PRESETS:
        m = sensor_preset(name, false_positive_rate=2.0)
        for x in range(40, 140, 10):
            for d in sense(Pose((float(x), 200.0, 40.0)), tutorial, m, rng):
                assert abs(sum(d.color_likelihood) - 1) < 1e-12
                assert abs(sum(d.type_likelihood) - 1) < 1e-12
                assert d.position_sigma > 0


def test_false_positives_on_free_ground(tutorial):
    m = sensor_preset("clear", p_detect=0.0, false_positive_rate=3.0)
    rng = np.random.default_rng(4)
    for k in range(100):
        for d in sense(Pose((66.0, 66.0, 40.0)), tutorial, m, rng, k):
            x, y, z = d.measured_position
            assert z == tutorial.occupancy.ground_height(x, y)
            assert not tutorial.occupancy.is_occupied((x, y, z))


def test_invalid_models_rejected():
    with pytest.raises(ValueError):
        SensorModel(p_detect=1.5)
    with pytest.raises(ValueError):
        SensorModel(color_confusion=np.ones((8, 8)))
    with pytest.raises(ValueError):
        sensor_preset("sunny")
    assert np.allclose(confusion_matrix(8, 0.7).sum(axis=1), 1.0)
