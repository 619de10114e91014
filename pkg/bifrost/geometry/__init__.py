#!/usr/bin/env python
# encoding: utf-8

"""
Overview
--------

Planar polygon helpers shared by the region pipeline.

A *Polygon* throughout :mod:`bifrost.geometry` is a numpy array of shape
``(n, 2)`` holding the vertices in counter-clockwise order, without
repeating the first vertex. The sub-modules implement the individual steps
of turning a heightmap into convex footholds:

    * :mod:`bifrost.geometry.contours` - mask to boundary rings.
    * :mod:`bifrost.geometry.simplify` - Ramer-Douglas-Peucker reduction.
    * :mod:`bifrost.geometry.hull` - convex hull and half-space regions.
    * :mod:`bifrost.geometry.clip` - Sutherland-Hodgman clipping.
    * :mod:`bifrost.geometry.regions` - the full pipeline and beam selection.

Reference
---------
"""

# External:
import numpy as np

# Internal:
from bifrost.helper import polygon_area


def as_polygon(vertices):
    'Convert anything array-like to a float (n, 2) array.'
    return np.asarray(vertices, dtype=float).reshape(-1, 2)


def cross(o, a, b):
    'z-component of (a - o) x (b - o); positive for a left turn.'
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def ensure_ccw(vertices):
    'Return the polygon in counter-clockwise order.'
    pts = as_polygon(vertices)
    return pts[::-1].copy() if polygon_area(pts) < 0 else pts


def drop_duplicates(vertices, tol=1e-12):
    """Remove consecutive (cyclic) vertices closer than ``tol``."""
    pts = as_polygon(vertices)
    if len(pts) < 2:
        return pts

    keep = [0]
    for idx in range(1, len(pts)):
        if np.linalg.norm(pts[idx] - pts[keep[-1]]) > tol:
            keep.append(idx)

    if len(keep) > 1 and np.linalg.norm(pts[keep[-1]] - pts[keep[0]]) <= tol:
        keep.pop()
    return pts[keep]


def point_in_polygon(point, vertices):
    """Even-odd ray casting test; points on the boundary may go either way.

    Used as independent oracle against the half-space form and for
    ground-truth stone lookups in the simulator.
    """
    x, y = point
    pts = as_polygon(vertices)
    inside = False
    for (x1, y1), (x2, y2) in zip(pts, np.roll(pts, -1, axis=0)):
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_cross:
                inside = not inside
    return inside


def bounding_box(vertices):
    'Return (xmin, xmax, ymin, ymax).'
    pts = as_polygon(vertices)
    return pts[:, 0].min(), pts[:, 0].max(), pts[:, 1].min(), pts[:, 1].max()


def rectangle(xmin, xmax, ymin, ymax):
    'Axis aligned CCW rectangle.'
    return np.array([[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]], dtype=float)


def hausdorff(poly_a, poly_b, samples=64):
    """Symmetric Hausdorff distance between two polygon boundaries.

    Both boundaries are densified with ``samples`` points per edge.
    """
    def densify(poly):
        pts = as_polygon(poly)
        nxt = np.roll(pts, -1, axis=0)
        ts = np.linspace(0.0, 1.0, samples, endpoint=False)[:, None, None]
        return (pts + ts * (nxt - pts)).reshape(-1, 2)

    da, db = densify(poly_a), densify(poly_b)
    dist = np.linalg.norm(da[:, None, :] - db[None, :, :], axis=2)
    return max(dist.min(axis=1).max(), dist.min(axis=0).max())


if __name__ == '__main__':
    import unittest

    class PolygonHelperTests(unittest.TestCase):
        def test_ccw(self):
            square = rectangle(0, 1, 0, 1)
            self.assertTrue(np.array_equal(ensure_ccw(square[::-1]), square[::-1][::-1]))
            self.assertGreater(polygon_area(ensure_ccw(square[::-1])), 0)

        def test_point_in_polygon(self):
            square = rectangle(0, 1, 0, 1)
            self.assertTrue(point_in_polygon((0.5, 0.5), square))
            self.assertFalse(point_in_polygon((1.5, 0.5), square))

        def test_drop_duplicates(self):
            pts = [(0, 0), (0, 0), (1, 0), (1, 1), (0, 0)]
            self.assertEqual(len(drop_duplicates(pts)), 3)

        def test_hausdorff(self):
            a = rectangle(0, 1, 0, 1)
            b = rectangle(0, 1.1, 0, 1)
            self.assertAlmostEqual(hausdorff(a, a), 0.0)
            self.assertAlmostEqual(hausdorff(a, b), 0.1, places=6)

    unittest.main()
