#!/usr/bin/env python
# encoding: utf-8

"""
.. currentmodule:: bifrost.sim.field

Overview
--------

Ground-truth stepping-stone fields.

A :class:`StoneField` is a list of flat convex stones (reusing
:class:`bifrost.geometry.hull.ConvexRegion` with the stone height as
``mean_height``) plus the field bounds and the sagittal goal bar. Anything
that is not a stone is a pit at :data:`bifrost.sim.PIT_HEIGHT`.

Three families are provided:

    * :func:`flat_field` - one continuous floor.
    * :func:`generate_field` - Poisson-disk stones of random shape.
    * :func:`corridor_field` - a sparse two-lane corridor.

Every field contains a start stone centered on the origin that holds both
feet of the initial stance.

**Usage Example:**

.. code-block:: python

    >>> field = generate_field(seed=3, density=2.0, size_range=(0.25, 0.4), gap_range=(0.05, 0.2))
    >>> field.stone_at((0.0, 0.15)).id
    0

Reference
---------
"""

# Stdlib:
import hashlib
import json
import math

import logging
LOGGER = logging.getLogger(__name__)

# External:
import numpy as np

# Internal:
from bifrost.geometry import rectangle
from bifrost.geometry.hull import ConvexRegion, convex_hull, to_halfspaces
from bifrost.sim import ScenarioError


DEFAULT_BOUNDS = (-0.5, 6.5, -1.0, 1.0)

# Half extents of the start stone; both initial feet rest on it.
START_HALF_SIZE = (0.25, 0.35)

# Candidate draws per requested stone before generate_field gives up.
ATTEMPTS_PER_STONE = 200


class StoneField:
    """Ground-truth stones, the field bounds and the goal bar.

    :param stones: List of :class:`ConvexRegion` in world coordinates.
    :param bounds: (xmin, xmax, ymin, ymax) in meters.
    :param rng_seed: Seed the field was generated with (metadata).
    :param goal_x: World x of the sagittal goal bar.
    """
    def __init__(self, stones, bounds, rng_seed=None, goal_x=None):
        self.stones = list(stones)
        self.bounds = tuple(float(v) for v in bounds)
        self.rng_seed = rng_seed
        self.goal_x = self.bounds[1] - 0.5 if goal_x is None else float(goal_x)

    def __len__(self):
        return len(self.stones)

    def __iter__(self):
        return iter(self.stones)

    def __repr__(self):
        return '<StoneField {} stones, goal at x={:.2f}, seed {}>'.format(
            len(self), self.goal_x, self.rng_seed
        )

    def stone_at(self, point, tol=1e-6):
        """The stone under ``point`` (world xy), or None over the pit."""
        for stone in self.stones:
            if stone.contains(point, tol):
                return stone
        return None

    def regions_in_frame(self, pose):
        """All stones as regions of the stance frame given by ``pose``.

        Heights become relative to the stance foot.
        """
        regions = []
        for stone in self.stones:
            local = pose.from_world(stone.vertices)
            regions.append(to_halfspaces(
                local, stone.id, stone.mean_height - pose.position[2]
            ))
        return regions

    ###################
    #  Serialization  #
    ###################

    def to_record(self):
        return {
            'bounds': list(self.bounds),
            'rng_seed': self.rng_seed,
            'goal_x': self.goal_x,
            'stones': [stone.to_record() for stone in self.stones]
        }

    @staticmethod
    def from_record(record):
        return StoneField(
            [ConvexRegion.from_record(stone) for stone in record['stones']],
            record['bounds'], record.get('rng_seed'), record.get('goal_x')
        )

    def digest(self):
        'SHA-1 over the canonical json of the field.'
        blob = json.dumps(self.to_record(), sort_keys=True).encode('utf-8')
        return hashlib.sha1(blob).hexdigest()


###########################################################################
#                               Generators                                #
###########################################################################


def start_stone(region_id=0):
    half_x, half_y = START_HALF_SIZE
    return to_halfspaces(rectangle(-half_x, half_x, -half_y, half_y), region_id, 0.0)


def random_stone(rng, center, diameter, region_id, height=0.0):
    """A convex polygon with 4 to 8 vertices inscribed in a circle.

    Vertex angles are jittered around an even spread, so consecutive
    vertices are never closer than 0.4 of the even spacing and the
    center always lies inside.
    """
    count = int(rng.integers(4, 9))
    spacing = 2.0 * math.pi / count
    angles = rng.uniform(0.0, 2.0 * math.pi) + spacing * np.arange(count) \
        + rng.uniform(-0.3, 0.3, count) * spacing
    vertices = np.asarray(center, dtype=float) + diameter / 2.0 * np.column_stack([
        np.cos(angles), np.sin(angles)
    ])
    return to_halfspaces(convex_hull(vertices), region_id, height)


def _check_range(name, bounds, allow_zero=False):
    low, high = bounds
    if not (low <= high) or low < 0 or (low == 0 and not allow_zero):
        raise ScenarioError('{} must be a positive (low, high) pair, got {}'.format(name, bounds))


def generate_field(seed, density, size_range, gap_range, bounds=DEFAULT_BOUNDS, height_jitter=0.01):
    """Poisson-disk stones of random convex shape.

    Candidate centers are drawn uniformly inside ``bounds``. A candidate is
    accepted if its circumcircle keeps a randomly drawn gap to every
    accepted circle (the start stone included), so stones never overlap.

    :param seed: Seed of the field's random generator.
    :param density: Requested number of stones per square meter.
    :param size_range: (min, max) circumcircle diameter of a stone.
    :param gap_range: (min, max) clearance between neighbouring circles.
    :param height_jitter: Stone heights are uniform in +- this value.
    :raises ScenarioError: on bad ranges or if the density cannot be met.
    """
    _check_range('size_range', size_range)
    _check_range('gap_range', gap_range, allow_zero=True)
    if density <= 0:
        raise ScenarioError('density must be positive, got {}'.format(density))

    xmin, xmax, ymin, ymax = bounds
    target = max(1, int(round(density * (xmax - xmin) * (ymax - ymin))))
    rng = np.random.default_rng(seed)

    stones = [start_stone()]
    centers = [np.zeros(2)]
    radii = [math.hypot(*START_HALF_SIZE)]

    for _ in range(ATTEMPTS_PER_STONE * target):
        if len(stones) > target:
            break

        diameter = rng.uniform(*size_range)
        gap = rng.uniform(*gap_range)
        radius = diameter / 2.0
        center = np.array([
            rng.uniform(xmin + radius, xmax - radius),
            rng.uniform(ymin + radius, ymax - radius)
        ])

        distances = np.linalg.norm(np.array(centers) - center, axis=1)
        if np.any(distances < np.array(radii) + radius + gap):
            continue

        height = rng.uniform(-height_jitter, height_jitter)
        stones.append(random_stone(rng, center, diameter, len(stones), height))
        centers.append(center)
        radii.append(radius)

    if len(stones) <= target:
        raise ScenarioError('density {} infeasible: placed {} of {} stones within {}'.format(
            density, len(stones) - 1, target, bounds
        ))

    LOGGER.debug('generated {} stones (seed {})'.format(len(stones), seed))
    return StoneField(stones, bounds, seed)


def flat_field(bounds=(-3.0, 10.0, -3.0, 3.0), goal_x=None):
    """One continuous floor stone covering ``bounds``."""
    xmin, xmax, ymin, ymax = bounds
    floor = to_halfspaces(rectangle(xmin, xmax, ymin, ymax), 0, 0.0)
    return StoneField([floor], bounds, None, goal_x)


def corridor_field(seed, length=6.0, size_range=(0.3, 0.42), gap_range=(0.1, 0.3),
                     lane_offset=0.22, lateral_jitter=0.05, sparsity=0.1, height_jitter=0.01):
    """A sparse stepping-stone corridor.

    Two lanes of random stones run along x on both sides of the midline.
    Gaps between consecutive stones of a lane are drawn from ``gap_range``;
    with probability ``sparsity`` a stone is left out, and stones that would
    touch a stone of the other lane are left out as well. A goal platform
    follows the corridor, the goal bar sits 0.3 m onto it.

    :raises ScenarioError: on bad ranges.
    """
    _check_range('size_range', size_range)
    _check_range('gap_range', gap_range, allow_zero=True)

    rng = np.random.default_rng(seed)
    stones = [start_stone()]

    # Lane stones start behind the start stone's front edge, so only the
    # other lane can collide with them.
    circles = []

    for lane_y in (lane_offset, -lane_offset):
        cursor = START_HALF_SIZE[0]
        while True:
            gap = rng.uniform(*gap_range)
            diameter = rng.uniform(*size_range)
            center = np.array([
                cursor + gap + diameter / 2.0,
                lane_y + rng.uniform(-lateral_jitter, lateral_jitter)
            ])
            height = rng.uniform(-height_jitter, height_jitter)
            skip = rng.random() < sparsity
            if center[0] + diameter / 2.0 > length:
                break

            cursor = center[0] + diameter / 2.0
            touching = any(
                np.linalg.norm(center - other) < radius + diameter / 2.0
                for other, radius in circles
            )
            if skip or touching:
                continue

            stones.append(random_stone(rng, center, diameter, len(stones), height))
            circles.append((center, diameter / 2.0))

    platform = to_halfspaces(rectangle(length + 0.05, length + 1.5, -0.6, 0.6), len(stones), 0.0)
    stones.append(platform)

    bounds = (-0.5, length + 1.5, -1.0, 1.0)
    return StoneField(stones, bounds, seed, goal_x=length + 0.35)


###########################################################################
#                                  Tests                                  #
###########################################################################

if __name__ == '__main__':
    import unittest

    from itertools import combinations

    from bifrost.geometry.clip import clip_polygon
    from bifrost.helper import polygon_area
    from bifrost.perception import StancePose

    def overlap_area(a, b):
        clipped = clip_polygon(a.vertices, b.vertices)
        return polygon_area(clipped) if len(clipped) else 0.0

    class GenerateTests(unittest.TestCase):
        def setUp(self):
            self.params = dict(density=1.5, size_range=(0.25, 0.4), gap_range=(0.05, 0.2))

        def test_deterministic(self):
            first = generate_field(5, **self.params)
            second = generate_field(5, **self.params)
            self.assertEqual(first.digest(), second.digest())
            self.assertNotEqual(first.digest(), generate_field(6, **self.params).digest())

        def test_start_stone(self):
            field = generate_field(1, **self.params)
            for foot in [(0.0, 0.15), (0.0, -0.15)]:
                self.assertEqual(field.stone_at(foot).id, 0)

        def test_stones_disjoint(self):
            field = generate_field(2, **self.params)
            self.assertEqual(len(field), int(round(1.5 * 7.0 * 2.0)) + 1)
            for a, b in combinations(field.stones, 2):
                self.assertLess(overlap_area(a, b), 1e-12)

        def test_vertex_counts(self):
            field = generate_field(3, **self.params)
            for stone in field.stones[1:]:
                self.assertTrue(4 <= stone.edges <= 8)
                self.assertLessEqual(abs(stone.mean_height), 0.01)

        def test_density_infeasible(self):
            with self.assertRaises(ScenarioError):
                generate_field(0, density=40.0, size_range=(0.3, 0.4), gap_range=(0.1, 0.2))

        def test_bad_ranges(self):
            with self.assertRaises(ScenarioError):
                generate_field(0, density=1.0, size_range=(0.4, 0.3), gap_range=(0.1, 0.2))
            with self.assertRaises(ScenarioError):
                generate_field(0, density=1.0, size_range=(0.0, 0.3), gap_range=(0.1, 0.2))
            with self.assertRaises(ScenarioError):
                generate_field(0, density=0.0, size_range=(0.2, 0.3), gap_range=(0.1, 0.2))

    class FamilyTests(unittest.TestCase):
        def test_flat(self):
            field = flat_field()
            self.assertEqual(len(field), 1)
            self.assertIsNotNone(field.stone_at((5.0, 2.0)))
            self.assertIsNone(field.stone_at((11.0, 0.0)))

        def test_corridor(self):
            field = corridor_field(4)
            self.assertEqual(field.digest(), corridor_field(4).digest())
            self.assertEqual(field.stone_at((0.0, 0.15)).id, 0)
            self.assertIsNotNone(field.stone_at((field.goal_x, 0.0)))
            for a, b in combinations(field.stones, 2):
                self.assertLess(overlap_area(a, b), 1e-12)

        def test_regions_in_frame(self):
            field = flat_field()
            pose = StancePose((1.0, 0.5, 0.0), 0.0)
            regions = field.regions_in_frame(pose)
            self.assertTrue(regions[0].contains(pose.from_world((4.0, 2.0))[0]))
            self.assertFalse(regions[0].contains(pose.from_world((10.5, 0.0))[0]))

        def test_record(self):
            field = corridor_field(9)
            back = StoneField.from_record(json.loads(json.dumps(field.to_record())))
            self.assertEqual(back.digest(), field.digest())
            self.assertEqual(back.goal_x, field.goal_x)

    unittest.main()
