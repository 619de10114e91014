#!/usr/bin/env python
# encoding: utf-8

"""
.. currentmodule:: bifrost.perception.registration

Overview
========

Drift correction of incoming clouds against the current heightmap.

Odometry drift shows up as a small planar offset between a fresh cloud and
the map. :func:`icp_refine` estimates that offset with an iterative
closest point scheme that is aware of the 2.5D nature of the map:

    * Targets are the centers of observed cells, searched with a
      :class:`scipy.spatial.cKDTree` within ``corr_radius``.
    * A point only pairs with a cell whose mean height is within
      ``height_gate`` of the point; this keeps ground points from sticking
      to stone tops and vice versa.
    * The residual of a pair is the vector from the point to the closest
      spot of its cell. Points that already lie inside a compatible cell
      have no residual. Only pairs with a residual drive the fit.
    * The fit is a 2D Kabsch (yaw + translation) if the active pairs are
      spread out, and a pure translation if they line up along an edge.
    * A height offset is estimated from all pairs.

The accumulated correction is only applied if it stays below the safety
caps; otherwise the cloud is returned unchanged.

Reference
=========
"""

# Stdlib:
import math

from collections import namedtuple

import logging
LOGGER = logging.getLogger(__name__)

# External:
import numpy as np

from scipy.spatial import cKDTree

# Internal:
from bifrost.helper import rotation


RigidTransform = namedtuple('RigidTransform', ['yaw', 'translation', 'height'])
RigidTransform.__doc__ = 'Planar rigid motion plus a height offset.'

IDENTITY = RigidTransform(0.0, np.zeros(2), 0.0)


IcpResult = namedtuple('IcpResult', [
    'transform', 'accepted', 'degenerate', 'iterations', 'pairs'
])
IcpResult.__doc__ = '''Outcome of :func:`icp_refine`.

``accepted`` is False whenever the identity was returned in place of a fit
(too little prior, too few pairs, or a correction beyond the safety caps).
'''


# Upper bound on the candidates considered per point.
MAX_CANDIDATES = 32

# Fewer pairs with a residual than this count as converged; a handful of
# noisy heights must not tilt the cloud.
MIN_ACTIVE_PAIRS = 20


def _kabsch_2d(sources, targets):
    """Least-squares planar rotation and translation mapping sources on targets."""
    src_mean, dst_mean = sources.mean(axis=0), targets.mean(axis=0)
    cov = (sources - src_mean).T.dot(targets - dst_mean)
    u, _, vt = np.linalg.svd(cov)

    rot = vt.T.dot(u.T)
    if np.linalg.det(rot) < 0:
        vt[1, :] *= -1
        rot = vt.T.dot(u.T)

    yaw = math.atan2(rot[1, 0], rot[0, 0])
    return yaw, dst_mean - rot.dot(src_mean)


def _minor_spread(points):
    'Standard deviation along the minor principal axis.'
    if len(points) < 2:
        return 0.0
    eigvals = np.linalg.eigvalsh(np.cov(points.T))
    return math.sqrt(max(eigvals[0], 0.0))


class _CellTargets:
    """KD-tree over the observed cells of a map."""
    def __init__(self, hmap):
        rows, cols = np.nonzero(hmap.observed)
        self.centers = hmap.cell_centers()[rows, cols]
        # Sentinel entry for "no neighbour" indices returned by cKDTree:
        self.means = np.append(hmap.mean[rows, cols], np.nan)
        self.half = hmap.resolution / 2.0
        self.tree = cKDTree(self.centers)

    def __len__(self):
        return len(self.centers)

    def correspond(self, points, corr_radius, height_gate):
        """Pair points with the nearest height-compatible cell.

        :returns: (paired mask, cell index per paired point, residual per paired point)
        """
        k = min(MAX_CANDIDATES, len(self))
        _, idx = self.tree.query(points[:, :2], k=k, distance_upper_bound=corr_radius)
        idx = idx.reshape(len(points), -1)

        compatible = np.abs(self.means[idx] - points[:, 2:3]) < height_gate
        paired = compatible.any(axis=1)
        first = np.argmax(compatible, axis=1)
        cells = idx[np.arange(len(points)), first][paired]

        xy = points[paired, :2]
        centers = self.centers[cells]
        closest = np.clip(xy, centers - self.half, centers + self.half)
        return paired, cells, closest - xy


def icp_refine(cloud, hmap, cfg):
    """Align a stance-frame cloud to the observed part of ``hmap``.

    :param cloud: :class:`bifrost.perception.PointCloud` in the stance frame.
    :param hmap: The :class:`bifrost.perception.heightmap.HeightMap` prior.
    :param cfg: :class:`bifrost.perception.heightmap.HeightMapConfig`.
    :returns: (corrected cloud, :class:`IcpResult`)
    """
    observed = int(hmap.observed.sum())
    if observed < cfg.min_prior_cells or not len(cloud):
        LOGGER.debug('icp skipped: {} prior cells, {} points'.format(observed, len(cloud)))
        return cloud, IcpResult(IDENTITY, False, False, 0, 0)

    targets = _CellTargets(hmap)
    points = np.array(cloud.points, dtype=float)

    yaw_acc, trans_acc, height_acc = 0.0, np.zeros(2), 0.0
    iterations, pairs = 0, 0

    for iterations in range(1, cfg.max_iters + 1):
        paired, cells, residuals = targets.correspond(points, cfg.corr_radius, cfg.height_gate)
        pairs = int(paired.sum())

        if pairs < 3:
            if iterations == 1:
                LOGGER.warning('icp: degenerate correspondence set ({} pairs)'.format(pairs))
                return cloud, IcpResult(IDENTITY, False, True, iterations, pairs)
            break

        height = float(np.mean(targets.means[cells] - points[paired, 2]))
        active = np.linalg.norm(residuals, axis=1) > 1e-12
        sources = points[paired, :2][active]

        if active.sum() < MIN_ACTIVE_PAIRS:
            yaw, trans = 0.0, np.zeros(2)
        elif _minor_spread(sources) < 2 * hmap.resolution:
            # Edge-like support: yaw is not observable.
            yaw, trans = 0.0, residuals[active].mean(axis=0)
        else:
            yaw, trans = _kabsch_2d(sources, sources + residuals[active])

        rot = rotation(yaw)
        points[:, :2] = points[:, :2].dot(rot.T) + trans
        points[:, 2] += height

        yaw_acc += yaw
        trans_acc = rot.dot(trans_acc) + trans
        height_acc += height

        LOGGER.debug('icp #{}: {} pairs, {} active, step |t|={:.5f} yaw={:.5f}'.format(
            iterations, pairs, int(active.sum()), np.linalg.norm(trans), yaw
        ))

        if np.linalg.norm(trans_acc) > cfg.safety_cap_trans or abs(yaw_acc) > cfg.safety_cap_yaw:
            break

        if max(np.linalg.norm(trans), abs(yaw)) < cfg.conv_tol:
            break

    transform = RigidTransform(yaw_acc, trans_acc, height_acc)
    if np.linalg.norm(trans_acc) > cfg.safety_cap_trans or abs(yaw_acc) > cfg.safety_cap_yaw:
        LOGGER.warning('icp: rejected correction |t|={:.3f} m yaw={:.2f} deg'.format(
            np.linalg.norm(trans_acc), math.degrees(yaw_acc)
        ))
        return cloud, IcpResult(IDENTITY, False, False, iterations, pairs)

    return cloud.transformed(yaw_acc, trans_acc, height_acc), IcpResult(
        transform, True, False, iterations, pairs
    )


###########################################################################
#                                  Tests                                  #
###########################################################################

if __name__ == '__main__':
    import unittest

    from bifrost.perception import PointCloud
    from bifrost.perception.heightmap import HeightMap, HeightMapConfig

    STEP_EDGE = 0.09

    def step_map():
        hmap = HeightMap(51, 51, 0.02)
        centers = hmap.cell_centers()
        hmap.mean[:] = np.where(centers[..., 0] >= STEP_EDGE, 0.1, 0.0)
        hmap.variance[:] = 1e-4
        hmap.obs_count[:] = 1.0
        return hmap

    def step_cloud(shift):
        ticks_x = -0.2 + 0.0025 * (np.arange(240) + 0.5)
        ticks_y = -0.2 + 0.0025 * (np.arange(160) + 0.5)
        xx, yy = np.meshgrid(ticks_x, ticks_y, indexing='ij')
        xx, yy = xx.ravel(), yy.ravel()
        zz = np.where(xx >= STEP_EDGE, 0.1, 0.0)
        return PointCloud(np.column_stack([xx + shift[0], yy + shift[1], zz]))

    class IcpTests(unittest.TestCase):
        def test_on_surface(self):
            hmap = step_map()
            centers = hmap.cell_centers().reshape(-1, 2)
            cloud = PointCloud(np.column_stack([centers, hmap.mean.ravel()]))
            corrected, result = icp_refine(cloud, hmap, HeightMapConfig())
            self.assertTrue(result.accepted)
            self.assertEqual(result.iterations, 1)
            self.assertAlmostEqual(np.linalg.norm(result.transform.translation), 0.0)
            self.assertTrue(np.allclose(corrected.points, cloud.points))

        def test_shift_recovery(self):
            hmap = step_map()
            _, result = icp_refine(step_cloud((0.03, 0.0)), hmap, HeightMapConfig())
            self.assertTrue(result.accepted)
            self.assertFalse(result.degenerate)
            recovered = result.transform.translation
            self.assertLess(abs(recovered[0] + 0.03), 0.005)
            self.assertLess(abs(recovered[1]), 0.005)
            self.assertLess(abs(result.transform.yaw), 1e-9)

        def test_cap_rejection(self):
            hmap = step_map()
            cfg = HeightMapConfig(safety_cap_trans=0.01)
            cloud = step_cloud((0.03, 0.0))
            corrected, result = icp_refine(cloud, hmap, cfg)
            self.assertFalse(result.accepted)
            self.assertFalse(result.degenerate)
            self.assertTrue(np.array_equal(corrected.points, cloud.points))

        def test_far_shift_rejected(self):
            hmap = HeightMap(51, 51, 0.02)
            hmap.mean[:20, :20], hmap.obs_count[:20, :20] = 0.0, 1.0
            block = hmap.cell_centers()[:20, :20].reshape(-1, 2)
            cloud = PointCloud(np.column_stack([block + [0.5, 0.0], np.zeros(len(block))]))
            corrected, result = icp_refine(cloud, hmap, HeightMapConfig())
            self.assertFalse(result.accepted)
            self.assertTrue(result.degenerate)
            self.assertIs(result.transform, IDENTITY)
            self.assertIs(corrected, cloud)

        def test_insufficient_prior(self):
            hmap = HeightMap(51, 51, 0.02)
            hmap.mean[:5, :5], hmap.obs_count[:5, :5] = 0.0, 1.0
            _, result = icp_refine(step_cloud((0.0, 0.0)), hmap, HeightMapConfig())
            self.assertFalse(result.accepted)
            self.assertEqual(result.iterations, 0)

        def test_kabsch(self):
            rng = np.random.default_rng(1)
            src = rng.uniform(-1, 1, (50, 2))
            dst = src.dot(rotation(0.1).T) + [0.2, -0.1]
            yaw, trans = _kabsch_2d(src, dst)
            self.assertAlmostEqual(yaw, 0.1)
            self.assertTrue(np.allclose(trans, [0.2, -0.1]))

    unittest.main()
