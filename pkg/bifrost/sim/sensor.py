#!/usr/bin/env python
# encoding: utf-8

"""
.. currentmodule:: bifrost.sim.sensor

Overview
--------

Synthetic depth sensing of a :class:`bifrost.sim.field.StoneField`.

A sensor casts a regular grid of rays from its mount and intersects them
with the stone tops (flat convex polygons at their heights) and the pit
plane below. Stone side faces are not modeled. The hit points get Gaussian
height noise with the variance of :func:`bifrost.perception.observation_variances`,
a random subset is dropped, and the rest is returned as a stance-frame
:class:`bifrost.perception.PointCloud` that still knows the sensor origin.

Heights are not shifted into the stance frame: the stance frame is
yaw-aligned with the world and shares its vertical axis, so the heightmap
keeps absolute heights (the stones sit close to ``z = 0``).

Reference
---------
"""

# Stdlib:
import math

from collections import namedtuple

# External:
import numpy as np

# Internal:
from bifrost.perception import PointCloud, SensorModel, STANCE, observation_variances
from bifrost.sim import PIT_HEIGHT


class SyntheticDepthSensor(namedtuple('SyntheticDepthSensor', [
    'mount', 'yaw', 'pitch', 'fov', 'rays',
    'sigma0', 'dropout', 'max_range', 'epsilon'
])):
    """A ray-grid depth sensor mounted relative to the stance foot.

    :param mount: (x, y, z) of the sensor in the stance frame.
    :param yaw: Heading of the optical axis (0 looks forward, pi backward).
    :param pitch: Elevation of the optical axis (negative looks down).
    :param fov: (horizontal, vertical) field of view in radians.
    :param rays: (horizontal, vertical) ray count, each >= 1.
    :param sigma0: Height noise at unit distance; 0 gives a noiseless sensor.
    :param dropout: Probability that a hit is lost.
    :param max_range: Hits farther away are discarded.
    :param epsilon: Floor on the incidence cosine of the noise model.
    """
    __slots__ = ()

    def __new__(cls, mount=(0.1, 0.0, 1.0), yaw=0.0, pitch=-0.9, fov=(1.2, 0.9), rays=(48, 32),
                sigma0=0.01, dropout=0.02, max_range=3.0, epsilon=0.05):
        rays = (int(rays[0]), int(rays[1]))
        if min(rays) < 1:
            raise ValueError('a sensor needs at least one ray per axis (got {})'.format(rays))
        if not 0.0 <= dropout <= 1.0:
            raise ValueError('dropout must be a probability (got {})'.format(dropout))
        if sigma0 < 0:
            raise ValueError('sigma0 must not be negative (got {})'.format(sigma0))

        return super().__new__(
            cls, tuple(float(v) for v in mount), float(yaw), float(pitch),
            (float(fov[0]), float(fov[1])), rays,
            float(sigma0), float(dropout), float(max_range), float(epsilon)
        )

    @property
    def noise_model(self):
        'The :class:`SensorModel` matching this sensor, None if noiseless.'
        if self.sigma0 <= 0:
            return None
        return SensorModel(self.sigma0, self.epsilon, self.max_range)

    def directions(self):
        """Unit ray directions in the stance frame, shape (n, 3)."""
        half_h, half_v = self.fov[0] / 2.0, self.fov[1] / 2.0
        azimuth = self.yaw + (np.linspace(-half_h, half_h, self.rays[0]) if self.rays[0] > 1 else np.zeros(1))
        elevation = self.pitch + (np.linspace(-half_v, half_v, self.rays[1]) if self.rays[1] > 1 else np.zeros(1))
        az, el = np.meshgrid(azimuth, elevation, indexing='ij')
        az, el = az.ravel(), el.ravel()
        return np.column_stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])

    @staticmethod
    def from_config(config):
        """The forward sensor, plus its mirror image looking backward if
        ``sensor_backward`` is set.

        :returns: List of sensors.
        """
        ahead, height = config['sensor_mount_ahead'], config['sensor_mount_height']
        common = dict(
            pitch=config['sensor_pitch'], fov=config['sensor_fov'], rays=config['sensor_rays'],
            sigma0=config['sensor_sigma0'], dropout=config['sensor_dropout'],
            max_range=config['sensor_max_range'], epsilon=config['sensor_epsilon']
        )
        sensors = [SyntheticDepthSensor(mount=(ahead, 0.0, height), yaw=0.0, **common)]
        if config['sensor_backward']:
            sensors.append(SyntheticDepthSensor(mount=(-ahead, 0.0, height), yaw=math.pi, **common))
        return sensors


def height_noise(vectors, sensor, rng):
    """Draw one height error per sensor-relative vector.

    :param vectors: (n, 3) hit points relative to the sensor.
    :returns: (n,) noise samples (zeros for a noiseless sensor).
    """
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    model = sensor.noise_model
    if model is None or not len(vectors):
        return np.zeros(len(vectors))
    return rng.normal(0.0, np.sqrt(observation_variances(vectors, model)))


def raycast(field, origin, directions):
    """Distance along every ray to the first stone top or the pit.

    :param origin: World position of the sensor (3,).
    :param directions: (n, 3) unit directions.
    :returns: (n,) distances, inf for rays that never go down.
    """
    dz = directions[:, 2]
    down = dz < -1e-12
    best = np.full(len(directions), np.inf)
    best[down] = (PIT_HEIGHT - origin[2]) / dz[down]

    for stone in field.stones:
        if stone.mean_height >= origin[2]:
            continue
        dist = np.full(len(directions), np.inf)
        dist[down] = (stone.mean_height - origin[2]) / dz[down]
        hits = origin[:2] + directions[:, :2] * np.where(np.isfinite(dist), dist, 0.0)[:, None]
        inside = np.all(hits.dot(stone.A.T) <= stone.b + 1e-12, axis=1) & np.isfinite(dist)
        best = np.where(inside & (dist < best), dist, best)
    return best


def sense(field, pose, sensor, rng, frame_id=0):
    """Render one depth frame of ``field`` seen from the stance ``pose``.

    :param pose: :class:`bifrost.perception.StancePose` of the stance foot.
    :param rng: numpy Generator for noise and dropout.
    :returns: A stance-frame :class:`PointCloud` (possibly empty).
    """
    mount = np.asarray(sensor.mount)
    origin_xy = pose.to_world(mount[:2])[0]
    origin = np.array([origin_xy[0], origin_xy[1], mount[2] + pose.position[2]])

    local = sensor.directions()
    cos_yaw, sin_yaw = math.cos(pose.yaw), math.sin(pose.yaw)
    directions = np.column_stack([
        cos_yaw * local[:, 0] - sin_yaw * local[:, 1],
        sin_yaw * local[:, 0] + cos_yaw * local[:, 1],
        local[:, 2]
    ])

    dist = raycast(field, origin, directions)
    keep = np.isfinite(dist) & (dist <= sensor.max_range)
    keep &= rng.random(len(dist)) >= sensor.dropout

    points = origin + directions[keep] * dist[keep][:, None]
    points[:, 2] += height_noise(points - origin, sensor, rng)

    stance = np.empty_like(points)
    stance[:, :2] = pose.from_world(points[:, :2]) if len(points) else np.zeros((0, 2))
    stance[:, 2] = points[:, 2]
    return PointCloud(stance, STANCE, origin=np.append(mount[:2], origin[2]), frame_id=frame_id)


###########################################################################
#                                  Tests                                  #
###########################################################################

if __name__ == '__main__':
    import unittest

    from bifrost.perception import StancePose
    from bifrost.sim.field import flat_field, corridor_field

    class SenseTests(unittest.TestCase):
        def setUp(self):
            self.rng = np.random.default_rng(0)

        def test_noiseless_flat(self):
            sensor = SyntheticDepthSensor(sigma0=0.0, dropout=0.0)
            cloud = sense(flat_field(), StancePose(), sensor, self.rng)
            self.assertEqual(len(cloud), 48 * 32)
            self.assertLess(np.max(np.abs(cloud.points[:, 2])), 1e-9)
            self.assertEqual(cloud.frame, STANCE)

        def test_full_dropout(self):
            sensor = SyntheticDepthSensor(dropout=1.0)
            self.assertEqual(len(sense(flat_field(), StancePose(), sensor, self.rng)), 0)

        def test_stance_frame(self):
            sensor = SyntheticDepthSensor(sigma0=0.0, dropout=0.0, rays=(1, 1), pitch=-math.pi / 4)
            pose = StancePose((2.0, 1.0, 0.0), 0.0)
            cloud = sense(flat_field(), pose, sensor, self.rng)
            # 45 degrees down from 1 m above: one meter ahead of the mount.
            self.assertTrue(np.allclose(cloud.points, [[1.1, 0.0, 0.0]], atol=1e-12))
            self.assertTrue(np.allclose(cloud.origin, [0.1, 0.0, 1.0]))

        def test_backward_sensor(self):
            config = {
                'sensor_mount_ahead': 0.1, 'sensor_mount_height': 1.0, 'sensor_pitch': -0.9,
                'sensor_fov': (1.2, 0.9), 'sensor_rays': (8, 4), 'sensor_sigma0': 0.0,
                'sensor_dropout': 0.0, 'sensor_max_range': 3.0, 'sensor_epsilon': 0.05,
                'sensor_backward': True
            }
            front, back = SyntheticDepthSensor.from_config(config)
            cloud = sense(flat_field(), StancePose(), back, self.rng)
            self.assertTrue(np.all(cloud.points[:, 0] < 0))
            self.assertTrue(np.all(sense(flat_field(), StancePose(), front, self.rng).points[:, 0] > 0))

        def test_pit_and_stones(self):
            sensor = SyntheticDepthSensor(sigma0=0.0, dropout=0.0)
            cloud = sense(corridor_field(2), StancePose(), sensor, self.rng)
            heights = cloud.points[:, 2]
            on_stone = np.abs(heights) <= 0.011
            in_pit = np.abs(heights - PIT_HEIGHT) < 1e-9
            self.assertTrue(np.all(on_stone | in_pit))
            self.assertTrue(on_stone.any() and in_pit.any())

        def test_noise_scales_with_distance(self):
            sensor = SyntheticDepthSensor(sigma0=0.01)
            near = height_noise(np.tile([0.0, 0.0, -1.0], (10000, 1)), sensor, self.rng)
            far = height_noise(np.tile([0.0, 0.0, -2.0], (10000, 1)), sensor, self.rng)
            self.assertAlmostEqual(np.var(far) / np.var(near), 4.0, delta=0.4)

        def test_invalid(self):
            with self.assertRaises(ValueError):
                SyntheticDepthSensor(rays=(0, 3))
            with self.assertRaises(ValueError):
                SyntheticDepthSensor(dropout=1.5)

    unittest.main()
