#!/usr/bin/env python
# encoding: utf-8

"""
.. currentmodule:: bifrost.session

Overview
--------

:class:`Session` is the main entrance to using libbifrost from code.

It bundles a config, a heightmap and the last plan, so a perception state
can be saved to disk and picked up later. The session data is saved packed
on disk as a .gz archive, by default below ``$XDG_CACHE_HOME/libbifrost``.

The module also holds :data:`DEFAULT_CONFIG`, the one flat dictionary every
part of libbifrost reads its knobs from. Keys carry a topical prefix:

    ============ ===============================================
    Prefix       Used by
    ============ ===============================================
    ``map_``     grid geometry of :class:`HeightMap`
    ``fusion_``  heightmap fusion, compensation and decay
    ``icp_``     drift correction
    ``region_``  region extraction
    ``beam_``    region selection
    ``planner_`` :class:`bifrost.planner.PlannerConfig`
    ``sensor_``  synthetic depth sensors
    ``sim_``     the closed loop
    ============ ===============================================

Reference
---------
"""

# Stdlib:
from shutil import rmtree

import math
import os
import pickle
import shutil
import tarfile

import logging
LOGGER = logging.getLogger(__name__)

# External:
import yaml

# Internal:
from bifrost.geometry.regions import RegionConfig, extract_regions
from bifrost.perception import SensorModel
from bifrost.perception.heightmap import HeightMap, HeightMapConfig, update
from bifrost.planner import PlannerConfig
from bifrost.planner.branch import solve


def check_or_mkdir(path):
    'Check if path does exist, if not mkdir it.'
    if not os.path.exists(path):
        os.makedirs(path)


def get_cache_path(extra_name=None):
    """Find the XDG caching path of your system.

    We try the XDG_CACHE_HOME environment variable or default to ~/.cache/.
    If the path does not exist yet it will be created for you.

    :param extra_name: Extra path component to append to the path (or None).
    :returns: The full path, e.g.: /home/user/.cache/libbifrost/<extra_name>
    """
    base_dir = os.environ.get('XDG_CACHE_HOME')
    if base_dir is None:
        base_dir = os.path.join(os.path.expanduser('~'), '.cache')

    base_dir = os.path.join(base_dir, 'libbifrost')
    check_or_mkdir(base_dir)
    return base_dir if not extra_name else os.path.join(base_dir, extra_name)


DEFAULT_CONFIG = {
    # 2.4 m x 1.6 m, reaching 1.7 m ahead of the stance foot.
    'map_rows': 120,
    'map_cols': 80,
    'map_resolution': 0.02,
    'map_center': (0.5, 0.0),
    'fusion_variance_floor': 1e-6,
    'fusion_variance_cap': 1.0,
    'fusion_alpha_sigma': 1.1,
    'fusion_alpha_n': 0.9,
    'fusion_transform_limit': 20,
    'fusion_age_limit': 40,
    'fusion_motion_trans': 0.005,  # 0.25 cells
    'fusion_motion_rot': math.radians(1.0),
    'fusion_gamma0': 1.02,
    'fusion_d_ref': 0.1,
    'icp_enabled': True,
    'icp_max_iters': 15,
    'icp_corr_radius': 0.06,
    'icp_height_gate': 0.05,
    'icp_conv_tol': 1e-4,
    'icp_cap_trans': 0.1,
    'icp_cap_yaw': math.radians(5.0),
    'icp_min_prior_cells': 200,
    'region_height_band': (-0.03, 0.03),
    'region_min_area': 0.012,
    'region_rdp_tolerance': 0.03,
    'region_max_edges': 8,
    'region_max_count': 8,
    'beam_length': 1.8,
    'beam_width': 1.0,
    'beam_shift_gain': 0.4,
    'beam_shift_cap': 0.5,
    'beam_back_extension': 0.4,
    'beam_low_speed': 0.2,
    'beam_min_overlap': 0.004,
    'planner_horizon': 4,
    'planner_t_nom': 0.5,
    'planner_t_min': 0.3,
    'planner_t_max': 0.7,
    'planner_stride_length': (-0.6, 0.6),
    'planner_stride_width': (0.05, 0.5),
    'planner_nominal_stride': (0.5, 0.3),
    'planner_margin_x': 0.04,
    'planner_margin_y': 0.04,
    'planner_w_z': 10.0,
    'planner_w_sigma': 5.0,
    'planner_w_x': 1.0,
    'planner_w_y': 1.0,
    'planner_big_m': 10.0,
    'planner_goal_ahead': 1.5,
    'planner_max_regions': 8,
    'planner_node_budget': 2000,
    'planner_gravity': 9.81,
    'planner_com_height': 0.9,
    'planner_fixed_duration': False,
    'planner_viability': True,
    'planner_replan_margin': 0.05,
    'sensor_mount_ahead': 0.1,
    'sensor_mount_height': 1.0,
    'sensor_pitch': -0.9,
    'sensor_fov': (1.2, 0.9),
    'sensor_rays': (48, 32),
    'sensor_sigma0': 0.01,
    'sensor_dropout': 0.02,
    'sensor_max_range': 3.0,
    'sensor_epsilon': 0.05,
    'sensor_backward': False,
    'sim_dt': 0.001,
    'sim_horizon': 60.0,
    'sim_replan_period': 0.03,
    'sim_perception_period': 0.18,
    'sim_terrain_source': 'heightmap',
    'sim_inplace_replan': True,
    'sim_fall_dcm_offset': 1.5,
    'sim_goal_tolerance': 0.3,
    'sim_swing_apex': 0.1,
    'sim_region_erosion': 0.01,
    'sim_stance_patch': 0.05,
    'sim_check_solutions': True,
    'sim_log_timing': False
}


DefaultConfig = type('DefaultConfig', (), dict(DEFAULT_CONFIG, __doc__="""
Example: ::

    >>> from bifrost.session import DefaultConfig as default
    >>> default.planner_t_nom
    0.5

Alternatively without :class:`DefaultConfig`: ::

    >>> from bifrost.session import DEFAULT_CONFIG
    >>> DEFAULT_CONFIG['planner_t_nom']
    0.5

The sole purpose of this class is to save a bit of typing.
"""
))


def merge_config(overrides, base=DEFAULT_CONFIG):
    """Return a copy of ``base`` with ``overrides`` applied.

    Lists become tuples, so YAML input compares equal to the defaults.

    :raises KeyError: on keys ``base`` does not know.
    """
    merged = dict(base)
    for key, value in (overrides or {}).items():
        if key not in base:
            raise KeyError('unknown config key {!r}'.format(key))
        merged[key] = tuple(value) if isinstance(value, list) else value
    return merged


def load_config(path, base=DEFAULT_CONFIG):
    """Read a YAML mapping of overrides and merge it over ``base``.

    :raises KeyError: on unknown keys.
    :raises ValueError: if the file does not hold a mapping.
    """
    with open(path, 'r') as handle:
        overrides = yaml.safe_load(handle) or {}

    if not isinstance(overrides, dict):
        raise ValueError('config file {} must hold a mapping'.format(path))
    return merge_config(overrides, base)


class Session:
    """A perception state plus the config it was built with."""
    def __init__(self, name, config=DEFAULT_CONFIG):
        """Create a new session:

        :param name: The name of the session. Used to load it again from disk.
        :param config: A dictionary with config values. See :class:`DefaultConfig` for available keys.
        """
        self._name = name
        self._config = dict(config)
        self._heightmap = HeightMap.from_config(self._config)

        # Publicly readable attributes.
        self.last_problem = None
        self.last_solution = None

    def __repr__(self):
        return '<Session {!r}: {}>'.format(self._name, self._heightmap)

    @property
    def name(self):
        'Return the name you passed to the session'
        return self._name

    @property
    def config(self):
        'Return the config dictionary passed to ``__init__``'
        return self._config

    @property
    def heightmap(self):
        'The :class:`bifrost.perception.heightmap.HeightMap` owned by this session.'
        return self._heightmap

    @property
    def planner_config(self):
        return PlannerConfig.from_config(self._config)

    ###############################
    #  Perception and Planning    #
    ###############################

    def perceive(self, clouds, pose):
        """Fuse one frame of clouds taken at the stance ``pose``.

        :returns: A snapshot of the updated map.
        """
        update(
            self._heightmap, clouds, pose,
            SensorModel.from_config(self._config),
            HeightMapConfig.from_config(self._config)
        )
        return self._heightmap.snapshot()

    def regions(self):
        'Convex regions of the current map.'
        return extract_regions(self._heightmap, RegionConfig.from_config(self._config))

    def plan(self, problem):
        """Solve ``problem`` and remember it as the last plan."""
        self.last_problem, self.last_solution = problem, solve(problem)
        return self.last_solution

    ############################
    #  Caching Implementation  #
    ############################

    @staticmethod
    def from_archive_path(full_path):
        """Load a cached session from a file on the disk.

        Example usage: ::

            >>> Session.from_archive_path('/tmp/test.gz')
            <Session 'test': ...>

        :param full_path: a path to a packed session.
        :returns: A cached session or None if it could not be read.
        """
        base_path, _ = os.path.splitext(full_path)
        try:
            with tarfile.open(full_path, 'r:*') as tar:
                tar.extractall(base_path)

            with open(os.path.join(base_path, 'session.pickle'), 'rb') as handle:
                return pickle.load(handle)
        except (OSError, tarfile.TarError) as err:
            LOGGER.debug('Could not load session: ' + str(err))
            return None
        finally:
            rmtree(base_path, ignore_errors=True)

    @staticmethod
    def from_name(session_name):
        """Like :func:`from_archive_path`, but load it from
        *${XDG_CACHE_HOME}/libbifrost/<session_name>.gz*
        """
        return Session.from_archive_path(get_cache_path(session_name) + '.gz')

    def save(self, path=None):
        """Save the session to disk.

        :param path: Directory to save the session in. If none XDG_CACHE_HOME is used.
        :returns: Path of the written archive.
        """
        path = os.path.join(path, self.name) if path else get_cache_path(self.name)
        if os.path.isfile(path):
            os.remove(path)
        if os.path.isdir(path):
            rmtree(path, ignore_errors=True)
        os.mkdir(path)

        with open(os.path.join(path, 'session.pickle'), 'wb') as handle:
            pickle.dump(self, handle)

        with tarfile.open(path + '.gz', 'w:gz') as tar:
            tar.add(path, arcname='')

        shutil.rmtree(path)
        return path + '.gz'


if __name__ == '__main__':
    import tempfile
    import unittest

    import numpy as np

    from bifrost.perception import PointCloud, StancePose

    class ConfigTests(unittest.TestCase):
        def test_attribute_access(self):
            self.assertEqual(DefaultConfig.planner_t_nom, DEFAULT_CONFIG['planner_t_nom'])

        def test_typed_views(self):
            self.assertEqual(PlannerConfig.from_config(DEFAULT_CONFIG), PlannerConfig())
            self.assertEqual(HeightMapConfig.from_config(DEFAULT_CONFIG), HeightMapConfig())
            self.assertEqual(RegionConfig.from_config(DEFAULT_CONFIG), RegionConfig())

        def test_merge(self):
            merged = merge_config({'planner_horizon': 2, 'sensor_fov': [1.0, 0.5]})
            self.assertEqual(merged['planner_horizon'], 2)
            self.assertEqual(merged['sensor_fov'], (1.0, 0.5))
            self.assertEqual(DEFAULT_CONFIG['planner_horizon'], 4)
            with self.assertRaises(KeyError):
                merge_config({'planner_horizn': 2})

        def test_load(self):
            with tempfile.TemporaryDirectory() as tmp:
                path = os.path.join(tmp, 'over.yml')
                with open(path, 'w') as handle:
                    handle.write('sim_terrain_source: ground_truth\nplanner_w_z: 3.0\n')
                config = load_config(path)
            self.assertEqual(config['sim_terrain_source'], 'ground_truth')
            self.assertEqual(config['planner_w_z'], 3.0)

    class SessionTests(unittest.TestCase):
        def setUp(self):
            self.session = Session('session_test')

        def test_perceive(self):
            xs, ys = np.meshgrid(np.linspace(0.2, 0.6, 21), np.linspace(-0.2, 0.2, 21))
            points = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(xs.size)])
            cloud = PointCloud(points, origin=np.array([0.0, 0.0, 1.0]))
            snapshot = self.session.perceive([cloud], StancePose())
            self.assertGreater(int(snapshot.observed.sum()), 0)
            self.assertEqual(len(self.session.regions()), 1)

        def test_writeout(self):
            self.session.heightmap.mean[3, 4] = 0.25
            with tempfile.TemporaryDirectory() as tmp:
                path = self.session.save(tmp)
                self.assertTrue(os.path.isfile(path))
                loaded = Session.from_archive_path(path)

            self.assertEqual(loaded.name, 'session_test')
            self.assertEqual(loaded.config, self.session.config)
            self.assertEqual(loaded.heightmap.mean[3, 4], 0.25)

        def test_missing_archive(self):
            with tempfile.TemporaryDirectory() as tmp:
                self.assertIsNone(Session.from_archive_path(os.path.join(tmp, 'nope.gz')))

    unittest.main()
