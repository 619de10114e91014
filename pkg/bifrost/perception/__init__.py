#!/usr/bin/env python
# encoding: utf-8

"""
Overview
========

Data types shared by the perception pipeline.

A :class:`PointCloud` is a stack of 3D points plus the frame it is expressed
in. Clouds in the stance frame may carry the sensor origin, so the noise
model can still be evaluated on the sensor-relative vector after the
transformation. :class:`StancePose` is the yaw-only world pose of the stance
foot that anchors the heightmap.

The per-point noise model is::

    sigma_obs^2 = sigma0^2 * d^2 / max(cos(theta), epsilon)

with ``d`` the distance from the sensor and ``cos(theta) = |p_z| / d``
under a locally horizontal surface assumption.

Reference
=========
"""

# Stdlib:
from collections import namedtuple

# External:
import numpy as np

# Internal:
from bifrost.helper import rotation


CAMERA, STANCE = 'camera', 'stance'


class SensorModel(namedtuple('SensorModel', ['sigma0', 'epsilon', 'max_range'])):
    """Noise model of a depth sensor.

    :param sigma0: Baseline noise at unit distance (m).
    :param epsilon: Floor on the incidence cosine (0 < epsilon <= 1).
    :param max_range: Maximum usable range (m).
    """
    __slots__ = ()

    def __new__(cls, sigma0=0.01, epsilon=0.05, max_range=3.0):
        if sigma0 <= 0:
            raise ValueError('sigma0 must be positive (got {})'.format(sigma0))
        if not 0 < epsilon <= 1:
            raise ValueError('epsilon must be in (0, 1] (got {})'.format(epsilon))
        return super().__new__(cls, float(sigma0), float(epsilon), float(max_range))

    @staticmethod
    def from_config(config):
        return SensorModel(
            config['sensor_sigma0'], config['sensor_epsilon'], config['sensor_max_range']
        )


class StancePose(namedtuple('StancePose', ['position', 'yaw'])):
    """World pose of the stance foot: 3D position and yaw about the vertical."""
    __slots__ = ()

    def __new__(cls, position=(0.0, 0.0, 0.0), yaw=0.0):
        position = np.array(position, dtype=float).reshape(-1)
        if position.size == 2:
            position = np.append(position, 0.0)
        return super().__new__(cls, position, float(yaw))

    def to_world(self, points_xy):
        'Map stance-frame planar points into the world frame.'
        pts = np.atleast_2d(np.asarray(points_xy, dtype=float))
        return pts.dot(rotation(self.yaw).T) + self.position[:2]

    def from_world(self, points_xy):
        'Map world planar points into this stance frame.'
        pts = np.atleast_2d(np.asarray(points_xy, dtype=float))
        return (pts - self.position[:2]).dot(rotation(self.yaw))

    def __eq__(self, other):
        return np.array_equal(self.position, other.position) and self.yaw == other.yaw

    def __hash__(self):
        return hash((tuple(self.position), self.yaw))


###########################################################################
#                             Noise Model                                 #
###########################################################################


def observation_variances(vectors, model):
    """Vectorized :func:`observation_variance` over an ``(n, 3)`` stack.

    :raises ValueError: if any vector has zero length.
    """
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    dist = np.linalg.norm(vectors, axis=1)
    if np.any(dist <= 0):
        raise ValueError('observation variance is undefined for zero-length points')

    cos_theta = np.abs(vectors[:, 2]) / dist
    return model.sigma0 ** 2 * dist ** 2 / np.maximum(cos_theta, model.epsilon)


def observation_variance(point, model):
    """Height variance of a single point given in the camera frame.

    :param point: 3D point relative to the sensor.
    :param model: A :class:`SensorModel`.
    :returns: Variance in m^2.
    """
    return float(observation_variances([point], model)[0])


###########################################################################
#                              PointCloud                                 #
###########################################################################


class PointCloud:
    """A stack of 3D points in either the camera or the stance frame.

    :param points: array-like of shape (n, 3).
    :param frame: :data:`CAMERA` or :data:`STANCE`.
    :param origin: Sensor position in the cloud's frame (defaults to zero).
    :param variances: Optional per-point height variances.
    :param frame_id: Index of the perception frame this cloud belongs to.
    """
    def __init__(self, points, frame=STANCE, origin=None, variances=None, frame_id=0):
        self.points = np.asarray(points, dtype=float).reshape(-1, 3)
        if frame not in (CAMERA, STANCE):
            raise ValueError('Unknown frame: {!r}'.format(frame))

        self.frame = frame
        self.origin = np.zeros(3) if origin is None else np.asarray(origin, dtype=float)
        self.variances = None if variances is None else np.asarray(variances, dtype=float)
        self.frame_id = frame_id

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        return '<PointCloud {} points in {} frame #{}>'.format(
            len(self), self.frame, self.frame_id
        )

    def finite(self):
        'Return a copy without rows containing NaN or inf.'
        mask = np.all(np.isfinite(self.points), axis=1)
        variances = None if self.variances is None else self.variances[mask]
        return PointCloud(self.points[mask], self.frame, self.origin, variances, self.frame_id)

    def with_variances(self, model):
        """Attach per-point variances computed from the sensor-relative vectors.

        Points coinciding with the sensor origin are dropped.
        """
        cloud = self.finite()
        rel = cloud.points - cloud.origin
        keep = np.linalg.norm(rel, axis=1) > 0
        rel = rel[keep]
        return PointCloud(
            cloud.points[keep], cloud.frame, cloud.origin,
            observation_variances(rel, model) if len(rel) else np.zeros(0),
            cloud.frame_id
        )

    def transformed(self, yaw, translation, height_offset=0.0):
        """Apply a planar rigid motion plus a height offset to all points.

        The sensor origin is moved along so variances stay consistent.
        """
        rot = rotation(yaw)
        translation = np.asarray(translation, dtype=float)

        def apply(pts):
            out = np.array(pts, dtype=float, copy=True)
            out[..., :2] = out[..., :2].dot(rot.T) + translation
            out[..., 2] += height_offset
            return out

        return PointCloud(
            apply(self.points), self.frame, apply(self.origin),
            self.variances, self.frame_id
        )

    def to_stance(self, camera_pose):
        """Convert a camera-frame cloud into the stance frame.

        :param camera_pose: (rotation 3x3, translation 3) of the camera in the stance frame.
        """
        if self.frame == STANCE:
            return self
        rot, trans = camera_pose
        rot, trans = np.asarray(rot, dtype=float), np.asarray(trans, dtype=float)
        return PointCloud(
            self.points.dot(rot.T) + trans, STANCE, trans,
            self.variances, self.frame_id
        )

    @staticmethod
    def concatenate(clouds):
        """Merge stance-frame clouds that already carry variances."""
        clouds = [cloud for cloud in clouds if len(cloud)]
        if not clouds:
            return PointCloud(np.zeros((0, 3)), STANCE, variances=np.zeros(0))

        if any(cloud.variances is None for cloud in clouds):
            raise ValueError('concatenate needs clouds with per-point variances')

        return PointCloud(
            np.vstack([cloud.points for cloud in clouds]), STANCE, clouds[0].origin,
            np.concatenate([cloud.variances for cloud in clouds]),
            clouds[0].frame_id
        )


###########################################################################
#                                  Tests                                  #
###########################################################################

if __name__ == '__main__':
    import unittest

    class NoiseModelTests(unittest.TestCase):
        def setUp(self):
            self.model = SensorModel(sigma0=0.01, epsilon=0.05)

        def test_perpendicular(self):
            self.assertAlmostEqual(observation_variance([0, 0, -1], self.model), 1e-4)
            self.assertAlmostEqual(observation_variance([0, 0, -2], self.model), 4e-4)

        def test_grazing(self):
            self.assertAlmostEqual(observation_variance([1, 0, 0], self.model), 2e-3)

        def test_zero_length(self):
            with self.assertRaises(ValueError):
                observation_variance([0, 0, 0], self.model)

        def test_invalid_model(self):
            with self.assertRaises(ValueError):
                SensorModel(sigma0=0.0)
            with self.assertRaises(ValueError):
                SensorModel(epsilon=1.5)

    class PointCloudTests(unittest.TestCase):
        def test_finite_filter(self):
            cloud = PointCloud([[0, 0, 0], [1, np.nan, 0], [0, 1, np.inf]])
            self.assertEqual(len(cloud.finite()), 1)

        def test_variances_use_origin(self):
            model = SensorModel(sigma0=0.01)
            cloud = PointCloud([[0.5, 0.0, 0.0]], origin=[0.5, 0.0, 1.0]).with_variances(model)
            self.assertAlmostEqual(cloud.variances[0], 1e-4)

        def test_transform_round_trip(self):
            cloud = PointCloud(np.random.default_rng(3).uniform(-1, 1, (20, 3)))
            there = cloud.transformed(0.3, [0.1, -0.2], 0.05)
            rot = rotation(-0.3)
            back_xy = (there.points[:, :2] - [0.1, -0.2]).dot(rot.T)
            self.assertTrue(np.allclose(back_xy, cloud.points[:, :2]))
            self.assertTrue(np.allclose(there.points[:, 2] - 0.05, cloud.points[:, 2]))

        def test_pose_round_trip(self):
            pose = StancePose([1.0, 2.0, 0.0], 0.7)
            pts = np.array([[0.3, -0.1], [1.0, 1.0]])
            self.assertTrue(np.allclose(pose.from_world(pose.to_world(pts)), pts))

    unittest.main()
