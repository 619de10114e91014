#!/usr/bin/env python
# encoding: utf-8

"""
.. currentmodule:: bifrost.perception.heightmap

Overview
========

Probabilistic 2.5D elevation grid in the stance-foot frame.

Every cell stores a Gaussian belief ``N(mean, variance)`` of the terrain
height, a decayable observation count, the number of times the cell was
carried over by a frame change and the perception frame it was last seen
in. One perception cycle (:func:`update`) runs:

    1. frame motion compensation (re-bin cells into the new stance frame),
    2. ICP refinement of the new clouds against the map,
    3. clearing of stale cells,
    4. Bayesian fusion of the clouds,
    5. temporal variance decay of all cells not observed this frame.

Rows index the forward (x) axis, columns the lateral (y) axis. Cell
``(r, s)`` has its center at ``origin + resolution * (r, s)``.

**Usage Example:**

.. code-block:: python

    >>> hmap = HeightMap.from_config(DEFAULT_CONFIG)
    >>> update(hmap, [cloud], StancePose(), SensorModel(), HeightMapConfig())
    >>> hmap.observed.sum()
    4211

Reference
=========
"""

# Stdlib:
import copy
import math

from collections import namedtuple

import logging
LOGGER = logging.getLogger(__name__)

# External:
import numpy as np

# Internal:
from bifrost.helper import rotation, wrap_angle
from bifrost.perception import PointCloud, StancePose, STANCE


HeightCell = namedtuple('HeightCell', [
    'mean', 'variance', 'obs_count', 'transform_count', 'last_obs_frame'
])


HeightMapConfig = namedtuple('HeightMapConfig', [
    'variance_floor', 'variance_cap',
    'alpha_sigma', 'alpha_n', 'transform_limit', 'age_limit',
    'motion_thresh_trans', 'motion_thresh_rot',
    'gamma0', 'd_ref',
    'icp_enabled', 'max_iters', 'corr_radius', 'height_gate', 'conv_tol',
    'safety_cap_trans', 'safety_cap_yaw', 'min_prior_cells'
])

HeightMapConfig.__new__.__defaults__ = (
    1e-6, 1.0,
    1.1, 0.9, 20, 40,
    0.005, math.radians(1.0),
    1.02, 0.1,
    True, 15, 0.06, 0.05, 1e-4,
    0.1, math.radians(5.0), 200
)


def _config_from_dict(config):
    return HeightMapConfig(
        variance_floor=config['fusion_variance_floor'],
        variance_cap=config['fusion_variance_cap'],
        alpha_sigma=config['fusion_alpha_sigma'],
        alpha_n=config['fusion_alpha_n'],
        transform_limit=config['fusion_transform_limit'],
        age_limit=config['fusion_age_limit'],
        motion_thresh_trans=config['fusion_motion_trans'],
        motion_thresh_rot=config['fusion_motion_rot'],
        gamma0=config['fusion_gamma0'],
        d_ref=config['fusion_d_ref'],
        icp_enabled=config['icp_enabled'],
        max_iters=config['icp_max_iters'],
        corr_radius=config['icp_corr_radius'],
        height_gate=config['icp_height_gate'],
        conv_tol=config['icp_conv_tol'],
        safety_cap_trans=config['icp_cap_trans'],
        safety_cap_yaw=config['icp_cap_yaw'],
        min_prior_cells=config['icp_min_prior_cells']
    )


HeightMapConfig.from_config = staticmethod(_config_from_dict)


###########################################################################
#                               HeightMap                                 #
###########################################################################


class HeightMap:
    """Fixed-size grid of Gaussian height beliefs.

    The arrays are public and may be read freely; writers should go through
    the module functions below. Use :meth:`snapshot` to hand the map to
    readers that must not see later updates.
    """
    def __init__(self, rows=100, cols=100, resolution=0.02, origin=None, variance_cap=1.0):
        """
        :param rows: Number of cells along x.
        :param cols: Number of cells along y.
        :param resolution: Cell edge length in meters.
        :param origin: Planar coordinate of the center of cell (0, 0).
                       Defaults to a grid centered on the stance foot.
        """
        if rows < 1 or cols < 1 or resolution <= 0:
            raise ValueError('invalid grid geometry {}x{} @ {}'.format(rows, cols, resolution))

        self.rows, self.cols, self.resolution = rows, cols, float(resolution)
        if origin is None:
            origin = (-resolution * (rows - 1) / 2.0, -resolution * (cols - 1) / 2.0)

        self.origin = np.asarray(origin, dtype=float)
        self.variance_cap = variance_cap
        self.frame_pose = None
        self.frame_index = 0
        self.last_registration = None
        self.clear()

    @staticmethod
    def from_config(config):
        rows, cols = config['map_rows'], config['map_cols']
        resolution = config['map_resolution']
        cx, cy = config['map_center']
        origin = (
            cx - resolution * (rows - 1) / 2.0,
            cy - resolution * (cols - 1) / 2.0
        )
        return HeightMap(rows, cols, resolution, origin, config['fusion_variance_cap'])

    def clear(self, mask=None):
        """Reset all cells (or only those in ``mask``) to "unobserved"."""
        shape = (self.rows, self.cols)
        if mask is None:
            self.mean = np.full(shape, np.nan)
            self.variance = np.full(shape, float(self.variance_cap))
            self.obs_count = np.zeros(shape)
            self.transform_count = np.zeros(shape, dtype=int)
            self.last_obs_frame = np.full(shape, -1, dtype=int)
            self.observed_in_frame = np.zeros(shape, dtype=bool)
        else:
            self.mean[mask] = np.nan
            self.variance[mask] = self.variance_cap
            self.obs_count[mask] = 0.0
            self.transform_count[mask] = 0
            self.last_obs_frame[mask] = -1

    ##########################
    #  Geometry and Queries  #
    ##########################

    @property
    def observed(self):
        'Boolean mask of cells with a belief.'
        return self.obs_count > 0

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def extent(self):
        'Planar bounds (xmin, xmax, ymin, ymax) of the covered area.'
        half = self.resolution / 2.0
        return (
            self.origin[0] - half, self.origin[0] + self.resolution * self.rows - half,
            self.origin[1] - half, self.origin[1] + self.resolution * self.cols - half
        )

    def cell_center(self, r, s):
        'Planar coordinates of the center of cell ``(r, s)``.'
        return self.origin + self.resolution * np.array([r, s], dtype=float)

    def cell_centers(self):
        'All cell centers as an array of shape (rows, cols, 2).'
        rr, ss = np.meshgrid(np.arange(self.rows), np.arange(self.cols), indexing='ij')
        return self.origin + self.resolution * np.stack([rr, ss], axis=-1)

    def indices_of(self, points_xy):
        """Map planar points to cell indices.

        :returns: (rows, cols, inside) arrays; indices outside the grid are
                  clipped and flagged False in ``inside``.
        """
        pts = np.atleast_2d(np.asarray(points_xy, dtype=float))
        idx = np.floor((pts - self.origin) / self.resolution + 0.5).astype(int)
        inside = (idx[:, 0] >= 0) & (idx[:, 0] < self.rows) & \
                 (idx[:, 1] >= 0) & (idx[:, 1] < self.cols)
        return (
            np.clip(idx[:, 0], 0, self.rows - 1),
            np.clip(idx[:, 1], 0, self.cols - 1),
            inside
        )

    def index_of(self, point_xy):
        """Cell index containing ``point_xy`` or None when outside."""
        r, s, inside = self.indices_of([point_xy])
        return (int(r[0]), int(s[0])) if inside[0] else None

    def cell(self, r, s):
        'Read-only view of a single cell.'
        return HeightCell(
            float(self.mean[r, s]), float(self.variance[r, s]), float(self.obs_count[r, s]),
            int(self.transform_count[r, s]), int(self.last_obs_frame[r, s])
        )

    def snapshot(self):
        'Deep copy for readers (copy-on-publish).'
        return copy.deepcopy(self)

    def __repr__(self):
        return '<HeightMap {}x{} @ {} m, {} observed>'.format(
            self.rows, self.cols, self.resolution, int(self.observed.sum())
        )


###########################################################################
#                         Frame Motion Compensation                       #
###########################################################################


def transform_cell(p_old, old_pose, new_pose):
    """Express a planar point of the old stance frame in the new one.

    Heights carry over unchanged; only the yaw of the stance frames matters.

    :param p_old: 2D point (or (n, 2) stack) in the old stance frame.
    :param old_pose: :class:`StancePose` of the old stance foot.
    :param new_pose: :class:`StancePose` of the new stance foot.
    """
    p_old = np.asarray(p_old, dtype=float)
    world = p_old.dot(rotation(old_pose.yaw).T) + old_pose.position[:2] - new_pose.position[:2]
    return world.dot(rotation(new_pose.yaw))


def clear_stale(hmap, cfg):
    """Clear cells propagated or unseen for too long.

    :returns: Number of cleared cells.
    """
    age = hmap.frame_index - hmap.last_obs_frame
    stale = hmap.observed & (
        (hmap.transform_count > cfg.transform_limit) | (age > cfg.age_limit)
    )
    count = int(stale.sum())
    if count:
        hmap.clear(stale)
        LOGGER.debug('cleared {} stale cells'.format(count))
    return count


def frame_motion_compensation(hmap, new_pose, cfg):
    """Move all beliefs from the map's current stance frame into ``new_pose``.

    Below the motion thresholds only the pose is updated. Otherwise every
    observed cell is re-binned; on collisions the highest mean survives.
    Moved cells get their variance inflated and their count decayed, and
    stale cells are cleared afterwards.

    :returns: The (modified) map.
    """
    old_pose = hmap.frame_pose
    if old_pose is None:
        hmap.frame_pose = new_pose
        return hmap

    translation = np.linalg.norm(new_pose.position[:2] - old_pose.position[:2])
    yaw_change = abs(wrap_angle(new_pose.yaw - old_pose.yaw))
    if translation < cfg.motion_thresh_trans and yaw_change < cfg.motion_thresh_rot:
        hmap.frame_pose = new_pose
        return hmap

    rows, cols = np.nonzero(hmap.observed)
    sources = hmap.cell_centers()[rows, cols]
    targets = transform_cell(sources, old_pose, new_pose)
    new_r, new_s, inside = hmap.indices_of(targets) if len(targets) else (rows, cols, rows >= 0)

    rows, cols, new_r, new_s = rows[inside], cols[inside], new_r[inside], new_s[inside]
    means = hmap.mean[rows, cols]

    # For each target cell keep the source with the greatest mean height:
    flat = new_r * hmap.cols + new_s
    order = np.lexsort((means, flat))
    last_of_group = np.append(flat[order][1:] != flat[order][:-1], True)
    keep = order[last_of_group]

    src = (rows[keep], cols[keep])
    dst = (new_r[keep], new_s[keep])

    moved_mean = hmap.mean[src]
    moved_var = np.minimum(hmap.variance[src] * cfg.alpha_sigma, cfg.variance_cap)
    moved_count = hmap.obs_count[src] * cfg.alpha_n
    moved_transforms = hmap.transform_count[src] + 1
    moved_last = hmap.last_obs_frame[src]

    LOGGER.debug('re-binned {} of {} observed cells ({:.3f} m, {:.2f} deg)'.format(
        len(keep), len(means), translation, math.degrees(yaw_change)
    ))

    hmap.clear()
    hmap.mean[dst] = moved_mean
    hmap.variance[dst] = moved_var
    hmap.obs_count[dst] = moved_count
    hmap.transform_count[dst] = moved_transforms
    hmap.last_obs_frame[dst] = moved_last
    hmap.frame_pose = new_pose

    clear_stale(hmap, cfg)
    return hmap


###########################################################################
#                            Bayesian Fusion                              #
###########################################################################


def aggregate_points(hmap, cloud):
    """Precision-weighted pre-aggregation of all points falling into a cell.

    :param cloud: Stance-frame :class:`PointCloud` with variances.
    :returns: (flat cell indices, aggregated means, aggregated variances)
    """
    cloud = cloud.finite()
    if not len(cloud):
        return np.zeros(0, dtype=int), np.zeros(0), np.zeros(0)

    r, s, inside = hmap.indices_of(cloud.points[:, :2])
    flat = (r * hmap.cols + s)[inside]
    heights = cloud.points[inside, 2]
    weights = 1.0 / cloud.variances[inside]

    cells, inverse = np.unique(flat, return_inverse=True)
    weight_sum = np.bincount(inverse, weights=weights)
    weighted_heights = np.bincount(inverse, weights=weights * heights)

    agg_var = 1.0 / weight_sum
    return cells, weighted_heights * agg_var, agg_var


def fuse_points(hmap, cloud, model, cfg=HeightMapConfig()):
    """Fuse one stance-frame cloud into the map with a per-cell Kalman update.

    :param cloud: :class:`PointCloud` in the stance frame. Variances are
                  computed from ``model`` unless the cloud already has them.
    :param model: :class:`bifrost.perception.SensorModel`.
    :returns: The (modified) map.
    """
    if cloud.frame != STANCE:
        raise ValueError('fuse_points expects a stance-frame cloud')

    if cloud.variances is None:
        cloud = cloud.with_variances(model)

    cells, agg_mean, agg_var = aggregate_points(hmap, cloud)
    if not len(cells):
        return hmap

    r, s = np.divmod(cells, hmap.cols)
    prior_mean = hmap.mean[r, s]
    prior_var = hmap.variance[r, s]
    fresh = hmap.obs_count[r, s] <= 0

    gain = prior_var / (prior_var + agg_var)
    post_mean = np.where(fresh, agg_mean, prior_mean + gain * (agg_mean - prior_mean))
    post_var = np.where(fresh, agg_var, (1.0 - gain) * prior_var)

    hmap.mean[r, s] = post_mean
    hmap.variance[r, s] = np.maximum(post_var, cfg.variance_floor)
    hmap.obs_count[r, s] += 1.0
    hmap.transform_count[r, s] = 0
    hmap.last_obs_frame[r, s] = hmap.frame_index
    hmap.observed_in_frame[r, s] = True
    return hmap


def decay_rate(planar_displacement, cfg):
    'Motion-adaptive variance growth factor.'
    return 1.0 + (cfg.gamma0 - 1.0) * (1.0 + planar_displacement / cfg.d_ref)


def temporal_decay(hmap, planar_displacement, cfg):
    """Inflate the variance of every cell not observed in the current frame.

    :param planar_displacement: Stance displacement since the last frame (m).
    """
    rate = decay_rate(planar_displacement, cfg)
    unseen = ~hmap.observed_in_frame
    hmap.variance[unseen] = np.minimum(hmap.variance[unseen] * rate, cfg.variance_cap)
    return hmap


###########################################################################
#                               Pipeline                                  #
###########################################################################


def update(hmap, clouds, new_pose, model, cfg=HeightMapConfig()):
    """Run one full perception cycle.

    :param clouds: List of stance-frame :class:`PointCloud` (may be empty).
    :param new_pose: :class:`StancePose` of the current stance foot.
    :returns: The (modified) map; never raises on bad clouds.
    """
    # Imported here: registration imports this module.
    from bifrost.perception.registration import icp_refine

    hmap.frame_index += 1
    hmap.observed_in_frame[:] = False

    old_pose = hmap.frame_pose
    displacement = 0.0
    if old_pose is not None:
        displacement = float(np.linalg.norm(new_pose.position[:2] - old_pose.position[:2]))

    frame_motion_compensation(hmap, new_pose, cfg)

    prepared = []
    for cloud in clouds:
        cloud = cloud if cloud.variances is not None else cloud.with_variances(model)
        if len(cloud):
            prepared.append(cloud.finite())

    merged = PointCloud.concatenate(prepared)
    if cfg.icp_enabled and len(merged):
        merged, hmap.last_registration = icp_refine(merged, hmap, cfg)

    clear_stale(hmap, cfg)
    fuse_points(hmap, merged, model, cfg)
    temporal_decay(hmap, displacement, cfg)
    return hmap


###########################################################################
#                              Dump / Load                                #
###########################################################################


def dump_heightmap(hmap, path):
    """Write the map as plain-text grid.

    Header ``rows cols resolution origin_x origin_y``, then one line per row
    with ``mean:variance:obs_count`` triples (``nan`` for unobserved cells).
    """
    with open(path, 'w') as handle:
        handle.write('{} {} {!r} {!r} {!r}\n'.format(
            hmap.rows, hmap.cols, hmap.resolution, float(hmap.origin[0]), float(hmap.origin[1])
        ))
        for r in range(hmap.rows):
            cells = []
            for s in range(hmap.cols):
                if hmap.obs_count[r, s] > 0:
                    cells.append('{!r}:{!r}:{!r}'.format(
                        float(hmap.mean[r, s]),
                        float(hmap.variance[r, s]),
                        float(hmap.obs_count[r, s])
                    ))
                else:
                    cells.append('nan')
            handle.write(' '.join(cells) + '\n')


def load_heightmap(path):
    """Inverse of :func:`dump_heightmap`.

    :raises ValueError: on malformed files.
    """
    with open(path, 'r') as handle:
        header = handle.readline().split()
        if len(header) != 5:
            raise ValueError('bad heightmap header in {}'.format(path))

        rows, cols = int(header[0]), int(header[1])
        hmap = HeightMap(rows, cols, float(header[2]), (float(header[3]), float(header[4])))

        for r in range(rows):
            cells = handle.readline().split()
            if len(cells) != cols:
                raise ValueError('row {} has {} cells, expected {}'.format(r, len(cells), cols))

            for s, cell in enumerate(cells):
                if cell == 'nan':
                    continue
                mean, variance, count = (float(v) for v in cell.split(':'))
                hmap.mean[r, s] = mean
                hmap.variance[r, s] = variance
                hmap.obs_count[r, s] = count
                hmap.last_obs_frame[r, s] = 0
    return hmap


def read_replay(path):
    """Read a point-cloud replay file.

    Lines are ``x y z frame_id``. Lines ``# pose frame_id x y z yaw`` set
    the stance pose from that frame on; other ``#`` lines are comments.

    :returns: A list of (frame_id, StancePose, PointCloud) ordered by frame.
    """
    points, poses = {}, {}
    with open(path, 'r') as handle:
        for lineno, line in enumerate(handle, 1):
            line = line.strip()
            if not line:
                continue

            if line.startswith('#'):
                fields = line[1:].split()
                if fields and fields[0] == 'pose':
                    if len(fields) != 6:
                        raise ValueError('{}:{}: malformed pose line'.format(path, lineno))
                    frame_id = int(fields[1])
                    x, y, z, yaw = (float(v) for v in fields[2:])
                    poses[frame_id] = StancePose((x, y, z), yaw)
                continue

            fields = line.split()
            if len(fields) != 4:
                raise ValueError('{}:{}: expected "x y z frame_id"'.format(path, lineno))
            frame_id = int(fields[3])
            points.setdefault(frame_id, []).append([float(v) for v in fields[:3]])

    frames, pose = [], StancePose()
    for frame_id in sorted(set(points) | set(poses)):
        pose = poses.get(frame_id, pose)
        cloud = PointCloud(points.get(frame_id, np.zeros((0, 3))), STANCE, frame_id=frame_id)
        frames.append((frame_id, pose, cloud))
    return frames


###########################################################################
#                                  Tests                                  #
###########################################################################

if __name__ == '__main__':
    import os
    import tempfile
    import unittest

    from bifrost.perception import SensorModel

    def single_cell_map(mean=0.1, variance=0.01):
        hmap = HeightMap(11, 11, 0.02)
        hmap.frame_pose = StancePose()
        r, s = hmap.index_of((0.0, 0.0))
        hmap.mean[r, s], hmap.variance[r, s], hmap.obs_count[r, s] = mean, variance, 1.0
        hmap.last_obs_frame[r, s] = 0
        return hmap, (r, s)

    class TransformTests(unittest.TestCase):
        def test_identity(self):
            pose = StancePose((0.5, 0.2, 0.0), 0.4)
            self.assertTrue(np.allclose(transform_cell((0.3, 0.1), pose, pose), (0.3, 0.1)))

        def test_rotation(self):
            new = StancePose((0, 0, 0), math.pi / 2)
            self.assertTrue(np.allclose(transform_cell((1, 0), StancePose(), new), (0, -1)))

        def test_translation(self):
            new = StancePose((0.4, 0, 0), 0.0)
            self.assertTrue(np.allclose(transform_cell((0, 0), StancePose(), new), (-0.4, 0)))

        def test_round_trip(self):
            rng = np.random.default_rng(11)
            for _ in range(100):
                a = StancePose(rng.uniform(-2, 2, 3), rng.uniform(-math.pi, math.pi))
                b = StancePose(rng.uniform(-2, 2, 3), rng.uniform(-math.pi, math.pi))
                p = rng.uniform(-1, 1, 2)
                back = transform_cell(transform_cell(p, a, b), b, a)
                self.assertLess(np.max(np.abs(back - p)), 1e-12)

    class CompensationTests(unittest.TestCase):
        def test_below_threshold(self):
            hmap, (r, s) = single_cell_map()
            before = hmap.snapshot()
            pose = StancePose((0.001, 0, 0), 0.0)
            frame_motion_compensation(hmap, pose, HeightMapConfig())
            self.assertTrue(np.array_equal(before.obs_count, hmap.obs_count))
            self.assertAlmostEqual(hmap.variance[r, s], 0.01)
            self.assertIs(hmap.frame_pose, pose)

        def test_one_cell_shift(self):
            hmap, (r, s) = single_cell_map()
            frame_motion_compensation(hmap, StancePose((0.02, 0, 0), 0.0), HeightMapConfig())
            self.assertEqual(hmap.obs_count[r, s], 0)
            self.assertAlmostEqual(hmap.mean[r - 1, s], 0.1)
            self.assertAlmostEqual(hmap.variance[r - 1, s], 0.011)
            self.assertAlmostEqual(hmap.obs_count[r - 1, s], 0.9)
            self.assertEqual(hmap.transform_count[r - 1, s], 1)

        def test_collision_keeps_highest(self):
            hmap = HeightMap(11, 11, 0.02)
            hmap.frame_pose = StancePose()
            for r, mean in ((5, 0.1), (6, 0.3)):
                hmap.mean[r, 5], hmap.variance[r, 5], hmap.obs_count[r, 5] = mean, 0.01, 1.0
                hmap.last_obs_frame[r, 5] = 0
            # 45 degree turn: both centers end up within cell (5, 5).
            new_pose = StancePose((0.0099, 0.0, 0.0), math.pi / 4)
            frame_motion_compensation(hmap, new_pose, HeightMapConfig())
            self.assertEqual(int(hmap.observed.sum()), 1)
            self.assertAlmostEqual(hmap.mean[5, 5], 0.3)

        def test_forced_identity_only_penalizes(self):
            hmap, (r, s) = single_cell_map()
            cfg = HeightMapConfig(motion_thresh_trans=0.0, motion_thresh_rot=0.0)
            frame_motion_compensation(hmap, StancePose(), cfg)
            self.assertAlmostEqual(hmap.mean[r, s], 0.1)
            self.assertAlmostEqual(hmap.variance[r, s], 0.011)

        def test_staleness_clearing(self):
            hmap, (r, s) = single_cell_map()
            hmap.transform_count[r, s] = 20
            cfg = HeightMapConfig(motion_thresh_trans=0.0, motion_thresh_rot=0.0)
            frame_motion_compensation(hmap, StancePose(), cfg)
            self.assertFalse(hmap.observed.any())

    class FusionTests(unittest.TestCase):
        def setUp(self):
            self.model = SensorModel(sigma0=0.01)

        def test_equal_variance_step(self):
            hmap, (r, s) = single_cell_map(mean=0.0, variance=0.01)
            x, y = hmap.cell_center(r, s)
            cloud = PointCloud([[x, y, 0.1]], variances=[0.01])
            fuse_points(hmap, cloud, self.model)
            self.assertAlmostEqual(hmap.mean[r, s], 0.05)
            self.assertAlmostEqual(hmap.variance[r, s], 0.005)
            self.assertEqual(hmap.transform_count[r, s], 0)
            self.assertAlmostEqual(hmap.obs_count[r, s], 2.0)

        def test_pre_aggregation(self):
            hmap = HeightMap(11, 11, 0.02)
            cloud = PointCloud([[0, 0, 0.2], [0.001, 0, 0.4]], variances=[0.02, 0.02])
            cells, agg_mean, agg_var = aggregate_points(hmap, cloud)
            self.assertEqual(len(cells), 1)
            self.assertAlmostEqual(agg_mean[0], 0.3)
            self.assertAlmostEqual(agg_var[0], 0.01)

        def test_empty_cloud(self):
            hmap, _ = single_cell_map()
            before = hmap.snapshot()
            fuse_points(hmap, PointCloud(np.zeros((0, 3))), self.model)
            self.assertTrue(np.array_equal(before.variance, hmap.variance))

        def test_non_finite_skipped(self):
            hmap = HeightMap(11, 11, 0.02)
            cloud = PointCloud([[0, 0, np.nan], [0, 0, 0.1]], origin=[0, 0, 1])
            fuse_points(hmap, cloud, self.model)
            self.assertEqual(int(hmap.observed.sum()), 1)

        def test_permutation_invariance(self):
            rng = np.random.default_rng(5)
            pts = np.column_stack([rng.uniform(-0.1, 0.1, (500, 2)), rng.normal(0, 0.01, 500)])
            variances = rng.uniform(1e-4, 1e-3, 500)
            hmap = HeightMap(11, 11, 0.02)
            _, mean_a, var_a = aggregate_points(hmap, PointCloud(pts, variances=variances))
            perm = rng.permutation(500)
            _, mean_b, var_b = aggregate_points(hmap, PointCloud(pts[perm], variances=variances[perm]))
            self.assertLess(np.max(np.abs(mean_a - mean_b)), 1e-12)
            self.assertLess(np.max(np.abs(var_a - var_b)), 1e-12)

        def test_contraction(self):
            rng = np.random.default_rng(9)
            hmap = HeightMap(11, 11, 0.02)
            hmap.mean[:] = 0.0
            hmap.variance[:] = rng.uniform(1e-5, 1e-2, hmap.shape)
            hmap.obs_count[:] = 1.0
            prior = hmap.variance.copy()
            pts = np.column_stack([rng.uniform(-0.1, 0.1, (300, 2)), rng.normal(0, 0.01, 300)])
            cloud = PointCloud(pts, variances=rng.uniform(1e-4, 1e-3, 300))
            cells, _, agg_var = aggregate_points(hmap, cloud)
            fuse_points(hmap, cloud, self.model)
            r, s = np.divmod(cells, hmap.cols)
            bound = np.maximum(np.minimum(prior[r, s], agg_var), 1e-6)
            self.assertTrue(np.all(hmap.variance[r, s] <= bound + 1e-15))

    class DecayTests(unittest.TestCase):
        def test_rates(self):
            cfg = HeightMapConfig()
            self.assertAlmostEqual(decay_rate(0.0, cfg), 1.02)
            self.assertAlmostEqual(decay_rate(cfg.d_ref, cfg), 1.04)

        def test_observed_cell_untouched(self):
            hmap, (r, s) = single_cell_map()
            hmap.observed_in_frame[r, s] = True
            temporal_decay(hmap, 0.0, HeightMapConfig())
            self.assertAlmostEqual(hmap.variance[r, s], 0.01)

        def test_geometric_decay(self):
            hmap, (r, s) = single_cell_map(variance=0.5)
            cfg = HeightMapConfig(icp_enabled=False)
            for k in range(1, 60):
                update(hmap, [], StancePose(), SensorModel(), cfg)
                expected = min(cfg.variance_cap, 0.5 * cfg.gamma0 ** k)
                if hmap.observed[r, s]:
                    self.assertAlmostEqual(hmap.variance[r, s], expected, delta=1e-12)

    class PipelineTests(unittest.TestCase):
        def test_first_frame_skips_compensation(self):
            hmap = HeightMap(21, 21, 0.02)
            cloud = PointCloud([[0, 0, 0.0]], origin=[0, 0, 1])
            update(hmap, [cloud], StancePose((3, 3, 0), 0.2), SensorModel(), HeightMapConfig())
            self.assertEqual(int(hmap.observed.sum()), 1)
            self.assertEqual(hmap.frame_pose.yaw, 0.2)

        def test_no_clouds_moving(self):
            hmap, (r, s) = single_cell_map()
            update(hmap, [], StancePose((0.02, 0, 0), 0.0), SensorModel(), HeightMapConfig())
            self.assertTrue(hmap.observed[r - 1, s])
            # penalty then decay with 0.02 m displacement
            self.assertAlmostEqual(hmap.variance[r - 1, s], 0.011 * (1 + 0.02 * 1.2))

        def test_static_convergence(self):
            rng = np.random.default_rng(2024)
            model = SensorModel(sigma0=0.01)
            hmap = HeightMap(51, 51, 0.02)
            centers = hmap.cell_centers().reshape(-1, 2)
            disk = centers[np.linalg.norm(centers, axis=1) <= 0.45]
            origin = np.array([0.0, 0.0, 1.0])

            history = []
            for _ in range(30):
                rel = np.column_stack([disk, -np.ones(len(disk))])
                sigma = np.sqrt(model.sigma0 ** 2 * np.sum(rel ** 2, axis=1)
                                / np.maximum(1.0 / np.linalg.norm(rel, axis=1), model.epsilon))
                pts = np.column_stack([disk, rng.normal(0.0, sigma)])
                update(hmap, [PointCloud(pts, origin=origin)], StancePose(), model, HeightMapConfig())
                history.append(hmap.variance[hmap.observed].copy())

            self.assertLess(np.max(np.abs(hmap.mean[hmap.observed])), 0.01)
            for before, after in zip(history, history[1:]):
                self.assertTrue(np.all(after <= before + 1e-18))
            self.assertTrue(np.all(history[-1] >= 1e-6))

        def test_variance_fuzz(self):
            rng = np.random.default_rng(77)
            model = SensorModel()
            hmap = HeightMap(31, 31, 0.02)
            for _ in range(40):
                pose = StancePose(rng.uniform(-0.05, 0.05, 3), rng.uniform(-0.05, 0.05))
                count = rng.integers(0, 300)
                pts = np.column_stack([rng.uniform(-0.3, 0.3, (count, 2)), rng.normal(0, 0.05, count)])
                update(hmap, [PointCloud(pts, origin=[0, 0, 1.0])], pose, model, HeightMapConfig())
                self.assertTrue(np.all(np.isfinite(hmap.variance)))
                self.assertTrue(np.all(hmap.variance >= 1e-6))

    class DumpTests(unittest.TestCase):
        def test_round_trip(self):
            hmap, (r, s) = single_cell_map(mean=0.125, variance=0.003)
            path = os.path.join(tempfile.mkdtemp(), 'map.txt')
            dump_heightmap(hmap, path)
            loaded = load_heightmap(path)
            self.assertEqual(loaded.shape, hmap.shape)
            self.assertEqual(loaded.mean[r, s], 0.125)
            self.assertEqual(loaded.variance[r, s], 0.003)
            self.assertEqual(int(loaded.observed.sum()), 1)
            self.assertTrue(np.allclose(loaded.origin, hmap.origin))

        def test_replay(self):
            path = os.path.join(tempfile.mkdtemp(), 'replay.txt')
            with open(path, 'w') as handle:
                handle.write('# a comment\n# pose 1 0.5 0 0 0.1\n')
                handle.write('0 0 0 0\n0.1 0 0 0\n0.2 0 0.01 1\n')
            frames = read_replay(path)
            self.assertEqual([f[0] for f in frames], [0, 1])
            self.assertEqual(len(frames[0][2]), 2)
            self.assertAlmostEqual(frames[1][1].yaw, 0.1)

    unittest.main()
