#!/usr/bin/env python
# encoding: utf-8

"""
.. currentmodule:: bifrost.geometry.contours

Overview
--------

Steppable contour extraction.

Cells that are observed and whose mean height lies within a band around
the stance plane form a binary mask. The mask is split into 8-connected
components with :func:`scipy.ndimage.label`; each component's outer
boundary is then traced along the cell corners, which yields a polygon
covering exactly the component's footprint.

Two cells that only touch at a corner belong to the same component. At
such pinch vertices the tracer always takes the rightmost turn, so one
ring walks around both cells.

Reference
---------
"""

# Stdlib:
import logging
LOGGER = logging.getLogger(__name__)

# External:
import numpy as np

from scipy import ndimage

# Internal:
from bifrost.helper import polygon_area


EIGHT_CONNECTED = np.ones((3, 3), dtype=int)

# (neighbour offset, first corner, second corner) per cell side, in corner
# index space where cell (r, s) spans corners (r, s) .. (r + 1, s + 1).
_SIDES = (
    ((0, -1), (0, 0), (1, 0)),
    ((1, 0), (1, 0), (1, 1)),
    ((0, 1), (1, 1), (0, 1)),
    ((-1, 0), (0, 1), (0, 0)),
)


def steppable_mask(hmap, height_band):
    'Observed cells with a mean height inside ``height_band``.'
    low, high = height_band
    with np.errstate(invalid='ignore'):
        return hmap.observed & (hmap.mean >= low) & (hmap.mean <= high)


def _boundary_edges(component):
    """Directed boundary edges (CCW around the interior) of a boolean mask."""
    padded = np.pad(component, 1, constant_values=False)
    edges = {}
    rows, cols = np.nonzero(component)
    for (dr, ds), first, second in _SIDES:
        outside = ~padded[rows + 1 + dr, cols + 1 + ds]
        for r, s in zip(rows[outside], cols[outside]):
            start = (int(r) + first[0], int(s) + first[1])
            end = (int(r) + second[0], int(s) + second[1])
            edges.setdefault(start, []).append(end)
    return edges


def _turn_rank(heading, step):
    'Smaller is more clockwise: right turn, straight, left turn.'
    turn = heading[0] * step[1] - heading[1] * step[0]
    if turn < 0:
        return 0
    return 1 if turn == 0 else 2


def _trace_rings(edges):
    """Chain directed edges into closed rings of corner indices.

    The lexicographically smallest corner can never be a pinch vertex, so
    every ring starts on a plain corner.
    """
    rings = []
    while edges:
        start = current = min(edges)
        heading, ring = None, []
        while True:
            options = edges.get(current)
            if not options:
                break

            ring.append(current)
            if heading is not None:
                options.sort(key=lambda end: _turn_rank(
                    heading, (end[0] - current[0], end[1] - current[1])
                ))

            nxt = options.pop(0)
            if not options:
                del edges[current]

            heading = (nxt[0] - current[0], nxt[1] - current[1])
            current = nxt
            if current == start and start not in edges:
                break

        rings.append(np.array(ring, dtype=float))
    return rings


def _drop_collinear(ring):
    'Keep only the corners where the boundary changes direction.'
    prev, nxt = np.roll(ring, 1, axis=0), np.roll(ring, -1, axis=0)
    turn = (ring[:, 0] - prev[:, 0]) * (nxt[:, 1] - ring[:, 1]) - \
           (ring[:, 1] - prev[:, 1]) * (nxt[:, 0] - ring[:, 0])
    return ring[turn != 0]


def trace_outer_boundary(component):
    """Trace the outer boundary ring of one connected boolean mask.

    :returns: (n, 2) array of corner indices in counter-clockwise order.
    """
    rings = _trace_rings(_boundary_edges(component))
    # Holes come out clockwise (negative area); the outer ring is the largest.
    outer = max(rings, key=polygon_area)
    return _drop_collinear(outer)


def extract_contours(hmap, height_band, min_area, with_heights=False):
    """Extract the steppable outer contours of ``hmap``.

    :param height_band: (low, high) admissible mean heights in meters.
    :param min_area: Components with a smaller footprint are dropped.
    :param with_heights: Also return each component's mean cell height.
    :returns: Polygons ordered by area descending, or (polygon, height)
              pairs if ``with_heights`` is set.
    """
    mask = steppable_mask(hmap, height_band)
    labels, count = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if count == 0:
        return []

    cell_area = hmap.resolution ** 2
    sizes = np.bincount(labels.ravel(), minlength=count + 1)

    found = []
    for label in range(1, count + 1):
        if sizes[label] * cell_area < min_area:
            continue

        component = labels == label
        corners = trace_outer_boundary(component)
        polygon = hmap.origin + hmap.resolution * (corners - 0.5)
        height = float(np.mean(hmap.mean[component]))
        found.append((polygon_area(polygon), label, polygon, height))

    LOGGER.debug('{} components, {} above {} m^2'.format(count, len(found), min_area))

    # Stable: equal areas keep label order.
    found.sort(key=lambda item: (-item[0], item[1]))
    if with_heights:
        return [(polygon, height) for _, _, polygon, height in found]
    return [polygon for _, _, polygon, _ in found]


if __name__ == '__main__':
    import unittest

    from bifrost.perception.heightmap import HeightMap

    def block_map(blocks, height=0.0):
        hmap = HeightMap(40, 40, 0.02)
        for r0, r1, s0, s1 in blocks:
            hmap.mean[r0:r1, s0:s1] = height
            hmap.obs_count[r0:r1, s0:s1] = 1.0
        return hmap

    class ContourTests(unittest.TestCase):
        def test_empty(self):
            self.assertEqual(extract_contours(HeightMap(10, 10, 0.02), (-0.03, 0.03), 0.0), [])

        def test_block_footprint(self):
            hmap = block_map([(5, 15, 8, 18)])
            polys = extract_contours(hmap, (-0.03, 0.03), 0.012)
            self.assertEqual(len(polys), 1)
            poly = polys[0]
            self.assertEqual(len(poly), 4)
            self.assertAlmostEqual(polygon_area(poly), 100 * 0.02 ** 2)
            lo = hmap.cell_center(5, 8) - 0.01
            hi = hmap.cell_center(14, 17) + 0.01
            self.assertTrue(np.allclose(poly.min(axis=0), lo))
            self.assertTrue(np.allclose(poly.max(axis=0), hi))

        def test_two_blocks_sorted(self):
            hmap = block_map([(2, 6, 2, 6), (20, 30, 20, 30)])
            polys = extract_contours(hmap, (-0.03, 0.03), 0.0)
            self.assertEqual(len(polys), 2)
            self.assertGreater(polygon_area(polys[0]), polygon_area(polys[1]))
            self.assertAlmostEqual(polygon_area(polys[1]), 16 * 0.02 ** 2)

        def test_min_area_filter(self):
            hmap = block_map([(2, 4, 2, 4), (20, 30, 20, 30)])
            self.assertEqual(len(extract_contours(hmap, (-0.03, 0.03), 0.012)), 1)

        def test_height_band(self):
            hmap = block_map([(5, 15, 5, 15)], height=0.2)
            self.assertEqual(extract_contours(hmap, (-0.03, 0.03), 0.0), [])

        def test_diagonal_pinch(self):
            component = np.zeros((4, 4), dtype=bool)
            component[1, 1] = component[2, 2] = True
            ring = trace_outer_boundary(component)
            self.assertAlmostEqual(polygon_area(ring), 2.0)
            self.assertEqual(len(ring), 8)

        def test_hole_ignored(self):
            component = np.ones((5, 5), dtype=bool)
            component[2, 2] = False
            ring = trace_outer_boundary(component)
            self.assertAlmostEqual(polygon_area(ring), 25.0)

        def test_mean_height(self):
            hmap = block_map([(5, 15, 5, 15)], height=0.01)
            (poly, height), = extract_contours(hmap, (-0.03, 0.03), 0.0, with_heights=True)
            self.assertAlmostEqual(height, 0.01)

    unittest.main()
