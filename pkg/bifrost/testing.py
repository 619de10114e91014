#!/usr/bin/env python
# encoding: utf-8

"""This module contains common helpers used during unittests.

    * :func:`stone_heightmap` - a heightmap with flat rectangular stones.
    * :func:`nominal_dcm` - the initial DCM of the periodic nominal gait.
    * :func:`random_problem` - small random planner instances.
    * :func:`enumerate_assignments` - exhaustive oracle for the planner.
"""

# Stdlib:
from itertools import product

import math

# External:
import numpy as np

# Internal:
from bifrost.dcm import periodic_dcm
from bifrost.geometry import rectangle
from bifrost.geometry.hull import convex_hull, to_halfspaces
from bifrost.perception.heightmap import HeightMap
from bifrost.planner import OPTIMAL, PlannerConfig, PlannerProblem
from bifrost.planner.model import build
from bifrost.planner.qp import solve_qp


def stone_heightmap(stones, rows=100, cols=100, resolution=0.02, height=0.0):
    """Mark all cells whose center lies inside one of the rectangles.

    :param stones: Iterable of (xmin, xmax, ymin, ymax).
    :returns: A :class:`HeightMap` observed only on the stones.
    """
    hmap = HeightMap(rows, cols, resolution)
    centers = hmap.cell_centers()
    for xmin, xmax, ymin, ymax in stones:
        inside = (centers[..., 0] >= xmin) & (centers[..., 0] <= xmax) & \
                 (centers[..., 1] >= ymin) & (centers[..., 1] <= ymax)
        hmap.mean[inside] = height
        hmap.variance[inside] = 1e-4
        hmap.obs_count[inside] = 1.0
    return hmap


def nominal_dcm(config, ell):
    """Initial DCM of the periodic gait at nominal stride and duration.

    The stance foot sits at the origin; the DCM is on the inner side.
    """
    return periodic_dcm(config.p_x_nom, config.p_y_nom, config.sigma_nom, ell)


def random_problem(rng, N=3, M=3, config=None):
    """A random planner instance around the origin.

    Region 0 holds the stance foot, the others are random convex polygons
    ahead of it (they may overlap). The initial DCM satisfies the initial
    state rows, but the instance may still be infeasible.
    """
    config = config or PlannerConfig(N=N)
    ell = int(rng.integers(0, 2))
    inner = -1.0 if ell == 0 else 1.0
    z1 = (rng.uniform(0.0, 0.2), inner * rng.uniform(0.045, 0.12))

    regions = [to_halfspaces(rectangle(-0.2, 0.3, -0.3, 0.3), 0)]
    reach = max(0.6 * (config.N - 1), 0.6)
    while len(regions) < M:
        center = np.array([rng.uniform(0.2, reach + 0.2), rng.uniform(-0.6, 0.6)])
        size = rng.uniform(0.1, 0.35)
        hull = convex_hull(center + rng.uniform(-size, size, (6, 2)))
        if hull is not None:
            regions.append(to_halfspaces(hull, len(regions)))

    return PlannerProblem(config, z1, (0.0, 0.0), ell, regions)


def enumerate_assignments(problem, tie_tol=1e-7):
    """Solve every region assignment as a QP and keep the best.

    Assignments are visited in lexicographic order of their region columns;
    a later one only wins if it is better by more than ``tie_tol``.

    :returns: (objective, assignment incl. the stance region) or (inf, None).
    """
    ids = [region.id for region in problem.regions]
    stance = ids[problem.stance_index()]

    best_obj, best = math.inf, None
    for columns in product(range(len(ids)), repeat=problem.config.N - 1):
        fixed = tuple(ids[j] for j in columns)
        result = solve_qp(build(problem._replace(fixed_assignment=fixed)))
        if result.status == OPTIMAL and result.objective < best_obj - tie_tol:
            best_obj, best = result.objective, fixed

    if best is None:
        return math.inf, None
    return best_obj, (stance, ) + best


if __name__ == '__main__':
    import unittest

    class FixtureTests(unittest.TestCase):
        def test_stone_heightmap(self):
            hmap = stone_heightmap([(-0.1, 0.1, -0.1, 0.1)])
            self.assertEqual(int(hmap.observed.sum()), 100)

        def test_random_problem_valid(self):
            rng = np.random.default_rng(0)
            for _ in range(20):
                problem = random_problem(rng, N=3, M=4).validate()
                self.assertEqual(problem.M, 4)
                self.assertEqual(problem.stance_index(), 0)

        def test_oracle_single_region(self):
            cfg = PlannerConfig(N=2, w_z=0.0)
            floor = to_halfspaces(rectangle(-0.5, 2.0, -1.0, 1.0), 3)
            problem = PlannerProblem(cfg, nominal_dcm(cfg, 1), (0, 0), 1, [floor])
            objective, assignment = enumerate_assignments(problem)
            self.assertEqual(assignment, (3, 3))
            self.assertAlmostEqual(objective, 0.0, places=9)

    unittest.main()
