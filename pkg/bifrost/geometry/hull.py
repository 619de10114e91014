#!/usr/bin/env python
# encoding: utf-8

"""
.. currentmodule:: bifrost.geometry.hull

Overview
--------

Convexification and the half-space form used by the planner.

Two hulls live here:

    * :func:`polygon_hull` walks a simple polygon (the simplified contour
      ring) once in vertex order and keeps the hull on a deque (Melkman's
      variant of the linear-time polygon scan). Rings that turn out not to
      be simple are handed to :func:`convex_hull`.
    * :func:`convex_hull` runs a three-coins scan over arbitrary point sets,
      sorted around the lowest-leftmost pivot.

Both keep strict left turns only, so collinear vertices vanish, and both
start the hull at the lowest-leftmost vertex. :func:`to_halfspaces` turns a
hull into a :class:`ConvexRegion` ``{p | A p <= b}`` with unit outward
normals.

**Usage Example:**

.. code-block:: python

    >>> region = to_halfspaces(polygon_hull(ring), region_id=3)
    >>> region.contains((0.1, 0.0))
    True

Reference
---------
"""

# Stdlib:
import math

from collections import deque

# External:
import numpy as np

from scipy.optimize import linprog
from scipy.spatial import HalfspaceIntersection

# Internal:
from bifrost.geometry import as_polygon, cross, drop_duplicates
from bifrost.helper import polygon_area, polygon_centroid


def convex_hull(poly):
    """Convex hull of a vertex set, counter-clockwise from the pivot.

    :param poly: (n, 2) vertices (a simple polygon or any point set).
    :returns: The hull as (m, 2) array, or None for collinear input.
    """
    pts = np.unique(as_polygon(poly), axis=0)
    if len(pts) < 3:
        return None

    pivot_idx = int(np.lexsort((pts[:, 0], pts[:, 1]))[0])
    pivot = pts[pivot_idx]
    rest = np.delete(pts, pivot_idx, axis=0)

    rel = rest - pivot
    angles = np.arctan2(rel[:, 1], rel[:, 0])
    dists = np.hypot(rel[:, 0], rel[:, 1])
    rest = rest[np.lexsort((dists, angles))]

    hull = [pivot]
    for point in rest:
        while len(hull) > 1 and cross(hull[-2], hull[-1], point) <= 0:
            hull.pop()
        hull.append(point)

    # The last sorted points may be collinear with the pivot.
    while len(hull) > 2 and cross(hull[-2], hull[-1], pivot) <= 0:
        hull.pop()

    if len(hull) < 3:
        return None
    return np.array(hull)


def _from_pivot(hull):
    'Rotate a CCW hull so it starts at its lowest-leftmost vertex.'
    start = int(np.lexsort((hull[:, 0], hull[:, 1]))[0])
    return np.roll(hull, -start, axis=0)


def _straighten(pts):
    'Drop vertices lying on the segment between their ring neighbours.'
    pts = list(pts)
    changed = True
    while changed and len(pts) >= 3:
        changed = False
        for idx in range(len(pts)):
            prev, cur, nxt = pts[idx - 1], pts[idx], pts[(idx + 1) % len(pts)]
            if cross(prev, cur, nxt) == 0 and np.dot(cur - prev, nxt - cur) > 0:
                del pts[idx]
                changed = True
                break
    return pts


def polygon_hull(ring):
    """Convex hull of a simple polygon in one pass over its vertices.

    :param ring: (n, 2) vertices of a simple polygon, either orientation.
    :returns: The hull as (m, 2) CCW array from the lowest-leftmost vertex,
              or None for degenerate rings.
    """
    pts = _straighten(drop_duplicates(ring))
    if len(pts) < 3:
        return None

    v0, v1, v2 = pts[0], pts[1], pts[2]
    if cross(v0, v1, v2) > 0:
        hull = deque([v2, v0, v1, v2])
    else:
        hull = deque([v2, v1, v0, v2])

    # The deque is a closed CCW chain, bottom (left end) to top (right end).
    for point in pts[3:]:
        if cross(hull[-2], hull[-1], point) > 0 and cross(hull[0], hull[1], point) > 0:
            continue
        while len(hull) > 2 and cross(hull[-2], hull[-1], point) <= 0:
            hull.pop()
        hull.append(point)
        while len(hull) > 2 and cross(point, hull[0], hull[1]) <= 0:
            hull.popleft()
        hull.appendleft(point)

    result = np.array(list(hull)[1:])
    if len(result) < 3 or polygon_area(result) <= 0:
        return convex_hull(ring)

    # A ring that is not simple can leave a dent or vertices outside the chain.
    edges = list(zip(result, np.roll(result, -1, axis=0)))
    dented = any(cross(a, b, c) <= 0 for (a, b), c in zip(edges, np.roll(result, -2, axis=0)))
    if dented or any(cross(a, b, point) < -1e-12 for a, b in edges for point in pts):
        return convex_hull(ring)
    return _from_pivot(result)


class ConvexRegion:
    """A convex foothold ``{p | A p <= b}`` together with its vertices.

    :param A: (n, 2) unit outward normals, one per edge.
    :param b: (n,) offsets.
    :param vertices: (n, 2) CCW hull vertices.
    :param region_id: Integer id, stable within one extraction.
    :param mean_height: Mean cell height of the source component (metadata).
    """
    def __init__(self, A, b, vertices, region_id=0, mean_height=0.0):
        self.A = np.asarray(A, dtype=float).reshape(-1, 2)
        self.b = np.asarray(b, dtype=float).reshape(-1)
        self.vertices = as_polygon(vertices)
        self.id = int(region_id)
        self.mean_height = float(mean_height)

    def __repr__(self):
        return '<ConvexRegion #{} {} edges, area {:.4f} m^2>'.format(
            self.id, len(self.b), self.area
        )

    def __eq__(self, other):
        return isinstance(other, ConvexRegion) and self.id == other.id and \
            np.array_equal(self.A, other.A) and np.array_equal(self.b, other.b) and \
            np.array_equal(self.vertices, other.vertices)

    def __hash__(self):
        return hash((self.id, self.b.tobytes()))

    @property
    def area(self):
        return polygon_area(self.vertices)

    @property
    def centroid(self):
        return polygon_centroid(self.vertices)

    @property
    def edges(self):
        return len(self.b)

    def slack(self, point):
        'Per-row slack b - A p; all non-negative inside.'
        return self.b - self.A.dot(np.asarray(point, dtype=float))

    def contains(self, point, tol=1e-9):
        return bool(np.all(self.slack(point) >= -tol))

    def closest_point(self, point):
        """Point of the region closest to ``point`` (exact for convex polygons)."""
        point = np.asarray(point, dtype=float)
        if self.contains(point):
            return point

        best, best_dist = None, math.inf
        for a, b in zip(self.vertices, np.roll(self.vertices, -1, axis=0)):
            seg = b - a
            t = np.clip((point - a).dot(seg) / max(seg.dot(seg), 1e-18), 0.0, 1.0)
            candidate = a + t * seg
            dist = np.linalg.norm(candidate - point)
            if dist < best_dist:
                best, best_dist = candidate, dist
        return best

    def to_record(self):
        return {
            'id': self.id,
            'vertices': self.vertices.tolist(),
            'A': self.A.tolist(),
            'b': self.b.tolist(),
            'mean_height': self.mean_height
        }

    @staticmethod
    def from_record(record):
        return ConvexRegion(
            record['A'], record['b'], record['vertices'],
            record['id'], record.get('mean_height', 0.0)
        )


def to_halfspaces(hull, region_id=0, mean_height=0.0):
    """Convert a convex CCW polygon into a :class:`ConvexRegion`.

    Zero-length edges are merged before the conversion.

    :raises ValueError: if fewer than three distinct vertices remain.
    """
    pts = drop_duplicates(hull)
    if len(pts) < 3:
        raise ValueError('need at least 3 distinct vertices, got {}'.format(len(pts)))

    if polygon_area(pts) < 0:
        pts = pts[::-1].copy()

    edges = np.roll(pts, -1, axis=0) - pts
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    normals = np.column_stack([edges[:, 1], -edges[:, 0]]) / lengths[:, None]
    offsets = np.einsum('ij,ij->i', normals, pts)
    return ConvexRegion(normals, offsets, pts, region_id, mean_height)


def shrink_region(region, margin):
    """Erode a region by ``margin`` along every edge normal.

    Edges that become redundant disappear, so the result may have fewer
    vertices than the input.

    :returns: A new :class:`ConvexRegion` with the same id and height,
              or None if nothing of the region survives.
    """
    if margin <= 0:
        return region

    offsets = region.b - margin

    # Chebyshev center: the normals have unit length.
    center = linprog(
        [0.0, 0.0, -1.0],
        A_ub=np.column_stack([region.A, np.ones(len(offsets))]), b_ub=offsets,
        bounds=[(None, None), (None, None), (0.0, None)], method='highs'
    )
    if center.status != 0 or center.x[2] <= 1e-6:
        return None

    corners = HalfspaceIntersection(
        np.column_stack([region.A, -offsets]), center.x[:2]
    ).intersections
    hull = convex_hull(corners)
    if hull is None:
        return None
    return to_halfspaces(hull, region.id, region.mean_height)


if __name__ == '__main__':
    import unittest

    from scipy.spatial import ConvexHull

    from bifrost.geometry import point_in_polygon, rectangle

    def reference_hull(points):
        return {tuple(p) for p in points[ConvexHull(points).vertices]}

    class HullTests(unittest.TestCase):
        def test_convex_pentagon(self):
            angles = np.linspace(0, 2 * np.pi, 5, endpoint=False) + 0.1
            penta = np.column_stack([np.cos(angles), np.sin(angles)])
            hull = convex_hull(penta)
            self.assertEqual({tuple(p) for p in hull}, {tuple(p) for p in penta})
            self.assertGreater(polygon_area(hull), 0)

        def test_l_shape(self):
            ell = np.array([(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)], dtype=float)
            hull = convex_hull(ell)
            self.assertEqual(len(hull), 5)
            self.assertEqual({tuple(p) for p in hull}, reference_hull(ell))

        def test_notched_triangle(self):
            notched = np.array([(0, 0), (4, 0), (2, 1), (2, 4)], dtype=float)
            hull = convex_hull(notched)
            self.assertEqual({tuple(p) for p in hull}, {(0, 0), (4, 0), (2, 4)})

        def test_collinear(self):
            self.assertIsNone(convex_hull([(0, 0), (1, 1), (2, 2), (3, 3)]))

        def test_random_against_reference(self):
            rng = np.random.default_rng(42)
            for _ in range(2000):
                pts = rng.uniform(-1, 1, (rng.integers(3, 30), 2))
                hull = convex_hull(pts)
                self.assertEqual({tuple(p) for p in hull}, reference_hull(pts))

        def test_polygon_hull_shapes(self):
            ell = np.array([(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)], dtype=float)
            notched = np.array([(2, 4), (0, 0), (2, 1), (4, 0)], dtype=float)
            for ring in (ell, ell[::-1], notched, notched[::-1]):
                hull = polygon_hull(ring)
                self.assertEqual({tuple(p) for p in hull}, reference_hull(ring))
                self.assertTrue(np.array_equal(hull, convex_hull(ring)))

        def test_polygon_hull_collinear(self):
            square = np.array([(0, 0), (1, 0), (2, 0), (2, 2), (1, 2), (0, 2), (0, 1)], dtype=float)
            self.assertEqual(len(polygon_hull(square)), 4)
            self.assertIsNone(polygon_hull([(0, 0), (1, 0), (2, 0)]))

        def test_polygon_hull_star_rings(self):
            rng = np.random.default_rng(17)
            for _ in range(300):
                n = int(rng.integers(3, 40))
                angles = np.sort(rng.uniform(0, 2 * np.pi, n))
                radii = rng.uniform(0.2, 1.0, n)
                ring = np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])
                ring = np.roll(ring, int(rng.integers(0, n)), axis=0)
                if len(np.unique(ring, axis=0)) < 3:
                    continue
                hull = polygon_hull(ring)
                self.assertTrue(np.allclose(hull, convex_hull(ring)))
                self.assertTrue(np.allclose(polygon_hull(ring[::-1]), hull))

        def test_unit_square(self):
            region = to_halfspaces(rectangle(0, 1, 0, 1))
            normals = {tuple(np.round(row, 12)) for row in region.A}
            self.assertEqual(normals, {(0.0, -1.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)})
            self.assertTrue(np.allclose(sorted(region.b), [0, 0, 1, 1]))

        def test_centroid_strict(self):
            rng = np.random.default_rng(7)
            for _ in range(100):
                region = to_halfspaces(convex_hull(rng.uniform(-1, 1, (12, 2))))
                self.assertTrue(np.all(region.slack(region.centroid) > 0))
                self.assertTrue(np.allclose(np.linalg.norm(region.A, axis=1), 1.0))
                for vertex in region.vertices:
                    self.assertTrue(region.contains(vertex))

        def test_membership_oracle(self):
            rng = np.random.default_rng(3)
            region = to_halfspaces(convex_hull(rng.uniform(-1, 1, (15, 2))))
            for point in rng.uniform(-1.2, 1.2, (1000, 2)):
                if np.min(np.abs(region.slack(point))) < 1e-9:
                    continue
                self.assertEqual(region.contains(point), point_in_polygon(point, region.vertices))

        def test_zero_length_edges(self):
            square = np.array([(0, 0), (1, 0), (1, 0), (1, 1), (0, 1)], dtype=float)
            self.assertEqual(to_halfspaces(square).edges, 4)

        def test_record_round_trip(self):
            region = to_halfspaces(rectangle(0, 1, 0, 2), region_id=4, mean_height=0.01)
            self.assertEqual(ConvexRegion.from_record(region.to_record()), region)

        def test_shrink_rectangle(self):
            region = to_halfspaces(rectangle(0, 1, 0, 2), region_id=9, mean_height=0.02)
            shrunk = shrink_region(region, 0.1)
            self.assertEqual((shrunk.id, shrunk.mean_height), (9, 0.02))
            self.assertAlmostEqual(shrunk.area, 0.8 * 1.8, places=9)
            self.assertTrue(shrunk.contains((0.1, 0.1), tol=1e-9))
            self.assertFalse(shrunk.contains((0.05, 1.0)))
            self.assertIs(shrink_region(region, 0.0), region)

        def test_shrink_vanishes(self):
            self.assertIsNone(shrink_region(to_halfspaces(rectangle(0, 1, 0, 2)), 0.6))

        def test_shrink_inside_original(self):
            rng = np.random.default_rng(5)
            for _ in range(50):
                region = to_halfspaces(convex_hull(rng.uniform(-1, 1, (10, 2))))
                shrunk = shrink_region(region, 0.05)
                if shrunk is None:
                    continue
                for vertex in shrunk.vertices:
                    self.assertTrue(np.all(region.slack(vertex) >= 0.05 - 1e-7))

        def test_closest_point(self):
            region = to_halfspaces(rectangle(0, 1, 0, 1))
            self.assertTrue(np.allclose(region.closest_point((2, 0.5)), (1, 0.5)))
            self.assertTrue(np.allclose(region.closest_point((0.5, 0.5)), (0.5, 0.5)))

    unittest.main()
