#!/usr/bin/env python
# encoding: utf-8

"""
Overview
--------

Small helpers shared by the rest of the library.

*Helpers*:

    * :class:`RunningMean` - streaming mean/sd/min/max, used for solve-time stats.
    * :func:`polygon_area` - signed shoelace area of a vertex ring.
    * :func:`rotation` - planar rotation matrix for a yaw angle.

Reference
---------
"""

import math

import numpy as np


###########################################################################
#                              Numeric Utils                              #
###########################################################################


def wrap_angle(angle):
    """Wrap an angle in radians into [-pi, pi).

    :param angle: Any finite angle.
    :returns: The equivalent angle in [-pi, pi).
    """
    return (angle + math.pi) % (2 * math.pi) - math.pi


def rotation(yaw):
    """Return the 2x2 rotation matrix about the vertical axis.

    :param yaw: Rotation angle in radians.
    :returns: A numpy array of shape (2, 2).
    """
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s], [s, c]])


def polygon_area(vertices):
    """Signed area of a closed vertex ring (positive if counter-clockwise).

    :param vertices: An (n, 2) array-like of vertices, not repeating the first one.
    :returns: The signed area as float.
    """
    pts = np.asarray(vertices, dtype=float)
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def polygon_centroid(vertices):
    """Area centroid of a simple polygon.

    Falls back to the vertex mean for degenerate (zero-area) input.
    """
    pts = np.asarray(vertices, dtype=float)
    area = polygon_area(pts)
    if abs(area) < 1e-15:
        return pts.mean(axis=0)

    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    cx = np.sum((x + xn) * cross) / (6.0 * area)
    cy = np.sum((y + yn) * cross) / (6.0 * area)
    return np.array([cx, cy])


###########################################################################
#                              RunningMean                                #
###########################################################################


class RunningMean:
    """Welford-style streaming statistics.

    Tracks mean, sample standard deviation, minimum and maximum without
    storing the samples.
    """
    def __init__(self):
        self.mean = self.rsdv = 0.0
        self.samples = 0
        self.minimum = self.maximum = None

    def add(self, value):
        self.samples += 1
        last_diff = value - self.mean
        self.mean += last_diff / self.samples
        self.rsdv += last_diff * (value - self.mean)

        if self.minimum is None or value < self.minimum:
            self.minimum = value
        if self.maximum is None or value > self.maximum:
            self.maximum = value

    @property
    def sd(self):
        if self.samples < 2:
            return 0.0
        return math.sqrt(self.rsdv / (self.samples - 1))

    def as_dict(self):
        'Return the statistics as plain dictionary (mean, sd, min, max, count)'
        return {
            'mean': self.mean,
            'sd': self.sd,
            'min': self.minimum if self.minimum is not None else 0.0,
            'max': self.maximum if self.maximum is not None else 0.0,
            'count': self.samples
        }


###########################################################################
#                              Stupid Tests                               #
###########################################################################


if __name__ == '__main__':
    import unittest

    class TestUtils(unittest.TestCase):
        def test_running_mean(self):
            run = RunningMean()
            self.assertAlmostEqual(run.mean, 0.0)
            self.assertAlmostEqual(run.sd, 0.0)
            run.add(1)
            run.add(2)
            run.add(3)
            self.assertAlmostEqual(run.mean, 2.0)
            self.assertAlmostEqual(run.sd, 1.0)
            self.assertEqual(run.minimum, 1)
            self.assertEqual(run.maximum, 3)
            self.assertEqual(run.as_dict()['count'], 3)

        def test_polygon_area(self):
            square = [(0, 0), (1, 0), (1, 1), (0, 1)]
            self.assertAlmostEqual(polygon_area(square), 1.0)
            self.assertAlmostEqual(polygon_area(square[::-1]), -1.0)
            self.assertTrue(np.allclose(polygon_centroid(square), [0.5, 0.5]))

        def test_rotation(self):
            rot = rotation(math.pi / 2)
            self.assertTrue(np.allclose(rot.dot([1, 0]), [0, 1]))

        def test_wrap_angle(self):
            self.assertAlmostEqual(wrap_angle(3 * math.pi), -math.pi)
            self.assertAlmostEqual(wrap_angle(0.5), 0.5)

    unittest.main()
