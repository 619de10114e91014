#!/usr/bin/env python
# encoding: utf-8

"""
.. currentmodule:: bifrost.geometry.clip

Overview
--------

Sutherland-Hodgman clipping of a polygon against a convex window. Used by
the beam selection to measure how much of a candidate region lies inside
the beam.

Reference
---------
"""

# External:
import numpy as np

# Internal:
from bifrost.geometry import as_polygon, cross, drop_duplicates, ensure_ccw


EMPTY = np.zeros((0, 2))


def _intersect(p, q, a, b):
    'Intersection of segment p-q with the infinite line through a-b.'
    denom = (p[0] - q[0]) * (a[1] - b[1]) - (p[1] - q[1]) * (a[0] - b[0])
    if denom == 0:
        return p
    t = ((p[0] - a[0]) * (a[1] - b[1]) - (p[1] - a[1]) * (a[0] - b[0])) / denom
    return p + t * (q - p)


def clip_polygon(subject, clip):
    """Clip ``subject`` against the convex polygon ``clip``.

    :returns: The clipped polygon, or an empty (0, 2) array when the
              intersection has no area.
    """
    window = ensure_ccw(clip)
    output = list(as_polygon(subject))

    for a, b in zip(window, np.roll(window, -1, axis=0)):
        if not output:
            break

        candidates, output = output, []
        prev = candidates[-1]
        prev_inside = cross(a, b, prev) >= 0
        for point in candidates:
            inside = cross(a, b, point) >= 0
            if inside:
                if not prev_inside:
                    output.append(_intersect(prev, point, a, b))
                output.append(point)
            elif prev_inside:
                output.append(_intersect(prev, point, a, b))
            prev, prev_inside = point, inside

    if len(output) < 3:
        return EMPTY

    result = drop_duplicates(np.array(output))
    return result if len(result) >= 3 else EMPTY


if __name__ == '__main__':
    import unittest

    from bifrost.geometry import rectangle
    from bifrost.helper import polygon_area

    class ClipTests(unittest.TestCase):
        def test_inside(self):
            inner = rectangle(0.2, 0.4, 0.2, 0.4)
            clipped = clip_polygon(inner, rectangle(0, 1, 0, 1))
            self.assertAlmostEqual(polygon_area(clipped), polygon_area(inner))

        def test_disjoint(self):
            self.assertEqual(len(clip_polygon(rectangle(2, 3, 0, 1), rectangle(0, 1, 0, 1))), 0)

        def test_half_overlap(self):
            clipped = clip_polygon(rectangle(0.5, 1.5, 0, 1), rectangle(0, 1, 0, 1))
            self.assertAlmostEqual(polygon_area(clipped), 0.5)

        def test_area_bound(self):
            rng = np.random.default_rng(8)
            from bifrost.geometry.hull import convex_hull
            for _ in range(200):
                subject = convex_hull(rng.uniform(-1, 1, (8, 2)))
                window = convex_hull(rng.uniform(-1, 1, (8, 2)))
                clipped = clip_polygon(subject, window)
                area = polygon_area(clipped) if len(clipped) else 0.0
                bound = min(polygon_area(subject), polygon_area(window))
                self.assertLessEqual(area, bound + 1e-12)

        def test_clockwise_window(self):
            clipped = clip_polygon(rectangle(0.5, 1.5, 0, 1), rectangle(0, 1, 0, 1)[::-1])
            self.assertAlmostEqual(polygon_area(clipped), 0.5)

    unittest.main()
