#!/usr/bin/env python
# encoding: utf-8

"""
.. currentmodule:: bifrost.geometry.simplify

Overview
--------

Ramer-Douglas-Peucker reduction of closed boundary rings.

Traced contours follow the cell grid and therefore carry a staircase of
vertices. :func:`rdp_simplify` keeps only vertices that deviate more than a
tolerance from the simplified outline. The ring is split at two anchors
(the lowest-leftmost vertex and the vertex farthest from it) and both
halves are simplified as open polylines.

If the result still has more than ``max_edges`` edges, the tolerance is
doubled until it fits; the planner pays one big-M row per edge.

Reference
---------
"""

# Stdlib:
import logging
LOGGER = logging.getLogger(__name__)

# External:
import numpy as np

# Internal:
from bifrost.geometry import as_polygon


def segment_distances(points, start, end):
    """Distance of every point to the segment ``start`` - ``end``."""
    points = np.atleast_2d(points)
    seg = end - start
    length_sq = float(seg.dot(seg))
    if length_sq == 0.0:
        return np.linalg.norm(points - start, axis=1)

    t = np.clip((points - start).dot(seg) / length_sq, 0.0, 1.0)
    foot = start + t[:, None] * seg
    return np.linalg.norm(points - foot, axis=1)


def rdp_polyline(points, tolerance):
    """Indices of the vertices an open polyline keeps under ``tolerance``.

    Iterative version (no recursion limit on long rings). First and last
    index are always kept.
    """
    points = as_polygon(points)
    keep = np.zeros(len(points), dtype=bool)
    keep[0] = keep[-1] = True

    stack = [(0, len(points) - 1)]
    while stack:
        first, last = stack.pop()
        if last - first < 2:
            continue

        dists = segment_distances(points[first + 1:last], points[first], points[last])
        worst = int(np.argmax(dists))
        if dists[worst] > tolerance:
            split = first + 1 + worst
            keep[split] = True
            stack.append((first, split))
            stack.append((split, last))

    return np.nonzero(keep)[0]


def _rdp_ring(ring, tolerance):
    count = len(ring)
    anchor = int(np.lexsort((ring[:, 0], ring[:, 1]))[0])
    far = int(np.argmax(np.linalg.norm(ring - ring[anchor], axis=1)))
    if far == anchor:
        return np.array([anchor])

    # Walk anchor -> far and far -> anchor (wrapping) as two open polylines.
    order = np.roll(np.arange(count), -anchor)
    split = int(np.nonzero(order == far)[0][0])
    first_half = order[:split + 1]
    second_half = np.append(order[split:], order[0])

    kept = set(first_half[rdp_polyline(ring[first_half], tolerance)])
    kept |= set(second_half[rdp_polyline(ring[second_half], tolerance)])
    return np.array(sorted(kept))


def rdp_simplify(poly, tolerance, max_edges=8):
    """Simplify a closed ring.

    :param poly: (n, 2) vertex ring.
    :param tolerance: Maximum perpendicular deviation (> 0).
    :param max_edges: Upper bound on the number of edges of the result.
    :returns: The simplified ring (a subset of the input, same order) or
              None if fewer than three vertices survive.
    """
    if tolerance <= 0:
        raise ValueError('rdp tolerance must be positive (got {})'.format(tolerance))

    ring = as_polygon(poly)
    if len(ring) < 3:
        return None

    while True:
        kept = _rdp_ring(ring, tolerance)
        if len(kept) <= max_edges:
            break
        tolerance *= 2.0

    if len(kept) < 3:
        LOGGER.debug('rdp: ring collapsed to {} vertices'.format(len(kept)))
        return None
    return ring[kept]


if __name__ == '__main__':
    import unittest

    from bifrost.geometry import rectangle

    class RdpTests(unittest.TestCase):
        def test_collinear_midpoints(self):
            ring = [(0, 0), (0.5, 0), (1, 0), (1, 0.5), (1, 1), (0.5, 1), (0, 1), (0, 0.5)]
            simple = rdp_simplify(ring, 0.01)
            self.assertEqual(len(simple), 4)
            self.assertTrue(np.array_equal(simple, rectangle(0, 1, 0, 1)))

        def test_triangle_fixed_point(self):
            tri = np.array([(0, 0), (1, 0), (0, 1)], dtype=float)
            self.assertTrue(np.array_equal(rdp_simplify(tri, 0.05), tri))

        def test_staircase(self):
            tol = 0.02
            step = 0.5 * tol
            stairs = [(0.0, 0.0), (1.0, 0.0)]
            x, y = 1.0, 0.0
            while x > 0:
                y += step
                stairs.append((x, y))
                x -= step
                stairs.append((max(x, 0.0), y))
            simple = rdp_simplify(stairs, tol)
            self.assertEqual(len(simple), 3)
            self.assertTrue(np.allclose(simple[0], (0, 0)))
            self.assertTrue(np.allclose(simple[1], (1, 0)))

        def test_deviation_bound(self):
            rng = np.random.default_rng(0)
            angles = np.sort(rng.uniform(0, 2 * np.pi, 200))
            radii = 1.0 + 0.05 * rng.standard_normal(200)
            ring = np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])
            simple = rdp_simplify(ring, 0.05, max_edges=1000)
            nxt = np.roll(simple, -1, axis=0)
            dists = np.min([segment_distances(ring, a, b) for a, b in zip(simple, nxt)], axis=0)
            self.assertLessEqual(dists.max(), 0.05 + 1e-12)

        def test_max_edges(self):
            angles = np.linspace(0, 2 * np.pi, 100, endpoint=False)
            circle = np.column_stack([np.cos(angles), np.sin(angles)])
            self.assertLessEqual(len(rdp_simplify(circle, 0.001, max_edges=8)), 8)

        def test_degenerate(self):
            self.assertIsNone(rdp_simplify([(0, 0), (1, 0), (2, 0)], 0.1))
            with self.assertRaises(ValueError):
                rdp_simplify([(0, 0), (1, 0), (0, 1)], 0.0)

    unittest.main()
