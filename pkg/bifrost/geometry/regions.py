#!/usr/bin/env python
# encoding: utf-8

"""
.. currentmodule:: bifrost.geometry.regions

Overview
--------

From heightmap to a small set of convex footholds.

:func:`extract_regions` runs the pipeline

    threshold -> contours -> RDP -> convex hull -> half-spaces

and :func:`select_regions` reduces the result to at most ``M_max``
regions with a rectangular beam laid out along the walking direction:

    * The beam is pushed forward proportionally to the goal distance
      (capped), and extended backward when the robot is slow.
    * The stance region is always part of the result.
    * Other regions survive if their overlap with the beam is large enough.
    * Survivors are ordered by centroid distance to the stance foot (ties by
      region id) and truncated.

Reference
---------
"""

# Stdlib:
import math

from collections import namedtuple

import logging
LOGGER = logging.getLogger(__name__)

# External:
import numpy as np

# Internal:
from bifrost.geometry import rectangle
from bifrost.geometry.clip import clip_polygon
from bifrost.geometry.contours import extract_contours
from bifrost.geometry.hull import ConvexRegion, polygon_hull, to_halfspaces
from bifrost.geometry.simplify import rdp_simplify
from bifrost.helper import polygon_area, rotation


RegionConfig = namedtuple('RegionConfig', [
    'height_band', 'min_area', 'rdp_tolerance', 'max_edges', 'max_count',
    'beam_length', 'beam_width', 'beam_shift_gain', 'beam_shift_cap',
    'beam_back_extension', 'low_speed_thresh', 'min_overlap'
])

RegionConfig.__new__.__defaults__ = (
    (-0.03, 0.03), 0.012, 0.03, 8, 8,
    1.8, 1.0, 0.4, 0.5,
    0.4, 0.2, 0.004
)


def _region_config_from_dict(config):
    return RegionConfig(
        height_band=tuple(config['region_height_band']),
        min_area=config['region_min_area'],
        rdp_tolerance=config['region_rdp_tolerance'],
        max_edges=config['region_max_edges'],
        max_count=config['region_max_count'],
        beam_length=config['beam_length'],
        beam_width=config['beam_width'],
        beam_shift_gain=config['beam_shift_gain'],
        beam_shift_cap=config['beam_shift_cap'],
        beam_back_extension=config['beam_back_extension'],
        low_speed_thresh=config['beam_low_speed'],
        min_overlap=config['beam_min_overlap']
    )


RegionConfig.from_config = staticmethod(_region_config_from_dict)


###########################################################################
#                               Extraction                                #
###########################################################################


def extract_regions(hmap, cfg=RegionConfig()):
    """Turn the steppable part of ``hmap`` into convex regions.

    Degenerate contours (collapsing under RDP or with a collinear hull) are
    skipped. Ids are assigned in contour order, i.e. by area descending.

    :returns: List of :class:`ConvexRegion` in the map's stance frame.
    """
    contours = extract_contours(hmap, cfg.height_band, cfg.min_area, with_heights=True)

    regions = []
    for polygon, height in contours:
        simple = rdp_simplify(polygon, cfg.rdp_tolerance, cfg.max_edges)
        hull = None if simple is None else polygon_hull(simple)
        if hull is None:
            LOGGER.warning('discarding degenerate contour with area {:.4f} m^2'.format(
                polygon_area(polygon)
            ))
            continue
        regions.append(to_halfspaces(hull, len(regions), height))

    LOGGER.debug('extracted {} regions from {} contours'.format(len(regions), len(contours)))
    return regions


def find_stance_region(regions, point, tol=1e-6):
    """First region (in list order) containing ``point``, or None."""
    for region in regions:
        if region.contains(point, tol):
            return region
    return None


def stance_patch(point, half_size, region_id):
    """Foot-sized square region centered on ``point``."""
    x, y = point
    square = rectangle(x - half_size, x + half_size, y - half_size, y + half_size)
    return to_halfspaces(square, region_id)


###########################################################################
#                              Beam Selection                             #
###########################################################################


class BeamMask(namedtuple('BeamMask', ['center_offset', 'length', 'width', 'heading'])):
    """Rectangle along ``heading``; its center sits ``center_offset`` ahead
    of the stance foot."""
    __slots__ = ()

    def __new__(cls, center_offset, length, width, heading=0.0):
        if length <= 0 or width <= 0:
            raise ValueError('beam needs positive size (got {} x {})'.format(length, width))
        return super().__new__(cls, float(center_offset), float(length), float(width), float(heading))

    @staticmethod
    def for_goal(goal, forward_speed, cfg=RegionConfig()):
        """Beam for walking toward ``goal`` (stance frame) at ``forward_speed``."""
        goal = np.asarray(goal, dtype=float)
        distance = float(np.linalg.norm(goal))
        heading = math.atan2(goal[1], goal[0]) if distance > 1e-9 else 0.0

        shift = min(cfg.beam_shift_gain * distance, cfg.beam_shift_cap)
        front = shift + cfg.beam_length / 2.0
        back = shift - cfg.beam_length / 2.0
        if forward_speed < cfg.low_speed_thresh:
            back -= cfg.beam_back_extension

        return BeamMask((front + back) / 2.0, front - back, cfg.beam_width, heading)

    def polygon(self):
        'Corners of the beam in the stance frame (CCW).'
        half_l, half_w = self.length / 2.0, self.width / 2.0
        local = rectangle(
            self.center_offset - half_l, self.center_offset + half_l, -half_w, half_w
        )
        return local.dot(rotation(self.heading).T)

    def overlap(self, region):
        'Area of ``region`` inside the beam.'
        clipped = clip_polygon(region.vertices, self.polygon())
        return polygon_area(clipped) if len(clipped) else 0.0


def _by_proximity(regions):
    return sorted(regions, key=lambda region: (float(np.linalg.norm(region.centroid)), region.id))


def select_regions(regions, stance_region_id, goal, forward_speed, M_max, cfg=RegionConfig()):
    """Reduce ``regions`` to at most ``M_max`` candidates.

    :param regions: Candidate :class:`ConvexRegion` list (stance frame).
    :param stance_region_id: Id of the region under the stance foot.
    :param goal: Goal position in the stance frame.
    :param forward_speed: Current forward speed in m/s.
    :returns: Selected regions ordered by proximity to the stance foot.
    """
    if M_max < 1:
        raise ValueError('M_max must be at least 1 (got {})'.format(M_max))

    if len(regions) <= M_max:
        return _by_proximity(regions)

    beam = BeamMask.for_goal(goal, forward_speed, cfg)
    stance = [region for region in regions if region.id == stance_region_id]
    others = [
        region for region in regions
        if region.id != stance_region_id and beam.overlap(region) >= cfg.min_overlap
    ]

    chosen = stance + _by_proximity(others)[:M_max - len(stance)]
    LOGGER.debug('beam kept {} of {} regions'.format(len(chosen), len(regions)))
    return _by_proximity(chosen)


###########################################################################
#                              Serialization                              #
###########################################################################


def regions_to_records(regions):
    'Plain (json-friendly) records for a list of regions.'
    return [region.to_record() for region in regions]


def regions_from_records(records):
    return [ConvexRegion.from_record(record) for record in records]


if __name__ == '__main__':
    import json
    import unittest

    from bifrost.geometry import hausdorff, point_in_polygon
    from bifrost.testing import stone_heightmap as stone_map

    def line_of_stones(count, spacing):
        return [
            to_halfspaces(rectangle(i * spacing - 0.05, i * spacing + 0.05, -0.15, 0.15), i)
            for i in range(count)
        ]

    class ExtractionTests(unittest.TestCase):
        def test_rectangles_fidelity(self):
            rng = np.random.default_rng(12)
            margin = 1.5 * 0.02
            for _ in range(100):
                x0, y0 = rng.uniform(-0.8, 0.5, 2)
                width, depth = rng.uniform(0.15, 0.3, 2)
                truth = (x0, x0 + width, y0, y0 + depth)
                regions = extract_regions(stone_map([truth]))
                self.assertEqual(len(regions), 1)
                region = regions[0]
                dist = hausdorff(region.vertices, rectangle(*truth), samples=16)
                self.assertLessEqual(dist, margin)

                # Points of the region lie on the stone, up to the margin.
                low, high = np.array([x0, y0]) - 2 * margin, np.array([x0 + width, y0 + depth]) + 2 * margin
                for point in rng.uniform(low, high, (1000, 2)):
                    if np.min(np.abs(region.slack(point))) < 1e-9:
                        continue
                    inside = region.contains(point)
                    self.assertEqual(inside, point_in_polygon(point, region.vertices))
                    if inside:
                        self.assertTrue(
                            x0 - margin <= point[0] <= x0 + width + margin and
                            y0 - margin <= point[1] <= y0 + depth + margin
                        )

        def test_membership_agrees(self):
            regions = extract_regions(stone_map([(-0.2, 0.1, -0.3, 0.05)]))
            rng = np.random.default_rng(4)
            region = regions[0]
            for point in rng.uniform(-0.4, 0.4, (1000, 2)):
                if np.min(np.abs(region.slack(point))) < 1e-9:
                    continue
                self.assertEqual(region.contains(point), point_in_polygon(point, region.vertices))

        def test_deterministic(self):
            hmap = stone_map([(-0.5, -0.2, -0.2, 0.2), (0.1, 0.4, -0.3, 0.3)])
            first, second = extract_regions(hmap), extract_regions(hmap)
            self.assertEqual(first, second)
            self.assertEqual([region.id for region in first], [0, 1])

        def test_sliver_bound(self):
            regions = extract_regions(stone_map([(-0.3, 0.3, -0.2, 0.2)]))
            self.assertLessEqual(regions[0].area, 1.1 * 0.6 * 0.4 + 1e-9)

    class SelectionTests(unittest.TestCase):
        def test_few_regions_untouched(self):
            regions = line_of_stones(5, 0.3)
            chosen = select_regions(regions, 0, (1.5, 0), 1.0, 8)
            self.assertEqual([region.id for region in chosen], [0, 1, 2, 3, 4])

        def test_line_of_twelve(self):
            regions = line_of_stones(12, 0.15)
            chosen = select_regions(regions, 0, (1.5, 0), 1.0, 8)
            self.assertEqual([region.id for region in chosen], list(range(8)))

        def test_stance_always_kept(self):
            regions = line_of_stones(12, 0.3)
            regions[0] = to_halfspaces(rectangle(-2.05, -1.95, -0.15, 0.15), 0)
            chosen = select_regions(regions, 0, (1.5, 0), 1.0, 3)
            self.assertIn(0, [region.id for region in chosen])
            self.assertEqual(len(chosen), 3)

        def test_back_extension(self):
            slow = BeamMask.for_goal((1.5, 0), 0.0)
            fast = BeamMask.for_goal((1.5, 0), 1.0)
            self.assertAlmostEqual(slow.length - fast.length, 0.4)
            self.assertAlmostEqual(fast.center_offset, 0.5)

        def test_stance_patch(self):
            patch = stance_patch((0.2, -0.1), 0.05, 9)
            self.assertTrue(patch.contains((0.2, -0.1)))
            self.assertAlmostEqual(patch.area, 0.01)
            self.assertIs(find_stance_region([patch], (0.2, -0.1)), patch)
            self.assertIsNone(find_stance_region([patch], (1.0, 1.0)))

        def test_records_json(self):
            regions = line_of_stones(3, 0.3)
            back = regions_from_records(json.loads(json.dumps(regions_to_records(regions))))
            self.assertEqual(back, regions)

    unittest.main()
