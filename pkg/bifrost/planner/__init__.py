#!/usr/bin/env python
# encoding: utf-8

"""
Overview
========

Variable-timing footstep planning over disconnected convex footholds.

The planner decides, for a short preview of ``N`` steps, where to put the
feet (``p_2 .. p_N``), how long the current step lasts (``sigma_1``) and
which convex region every foothold lands in. The stance foot ``p_1`` and the
initial DCM ``z_1`` of the current step are data.

The pieces:

    * :mod:`bifrost.planner.qp` - a small dense convex QP kernel.
    * :mod:`bifrost.planner.model` - builds the quadratic model.
    * :mod:`bifrost.planner.branch` - branch-and-bound and in-step replanning.
    * :mod:`bifrost.planner.checker` - independent re-evaluation of solutions.
    * :mod:`bifrost.planner.serialize` - problem/solution records.

This module only defines the shared types.

Reference
=========
"""

# Stdlib:
import math

from collections import namedtuple

# External:
import numpy as np

# Internal:
from bifrost.dcm import TemplateParams, sagittal_capture_radius


OPTIMAL, INFEASIBLE, ITERATION_LIMIT = 'optimal', 'infeasible', 'iteration_limit'


class PlannerError(ValueError):
    'Raised for invalid planner configurations and problems.'


###########################################################################
#                              Configuration                              #
###########################################################################


_CONFIG_FIELDS = [
    'N', 'T_nom', 'T_min', 'T_max',
    'L_min', 'L_max', 'W_min', 'W_max',
    'delta_x', 'delta_y',
    'w_z', 'w_sigma', 'w_x', 'w_y',
    'M_big', 'p_x_nom', 'p_y_nom', 'goal',
    'M_max', 'node_budget', 'g', 'z_c',
    'fixed_duration', 'viability', 'replan_margin'
]


class PlannerConfig(namedtuple('PlannerConfig', _CONFIG_FIELDS)):
    """All knobs of the footstep planner.

    Durations are in seconds, lengths in meters. ``w_z`` may be a scalar or
    one weight per preview stage. ``fixed_duration`` pins ``sigma_1`` to the
    nominal value, ``viability=False`` drops the lateral corridor, the
    sagittal capture bound and the growth bound.
    """
    __slots__ = ()

    def __new__(
        cls, N=4, T_nom=0.5, T_min=0.3, T_max=0.7,
        L_min=-0.6, L_max=0.6, W_min=0.05, W_max=0.5,
        delta_x=0.04, delta_y=0.04,
        w_z=10.0, w_sigma=5.0, w_x=1.0, w_y=1.0,
        M_big=10.0, p_x_nom=0.5, p_y_nom=0.3, goal=(1.5, 0.0),
        M_max=8, node_budget=2000, g=9.81, z_c=0.9,
        fixed_duration=False, viability=True, replan_margin=0.05
    ):
        if np.ndim(w_z) == 0:
            w_z = float(w_z)
        else:
            w_z = tuple(float(w) for w in w_z)

        return super().__new__(
            cls, int(N), float(T_nom), float(T_min), float(T_max),
            float(L_min), float(L_max), float(W_min), float(W_max),
            float(delta_x), float(delta_y),
            w_z, float(w_sigma), float(w_x), float(w_y),
            float(M_big), float(p_x_nom), float(p_y_nom),
            (float(goal[0]), float(goal[1])),
            int(M_max), int(node_budget), float(g), float(z_c),
            bool(fixed_duration), bool(viability), float(replan_margin)
        )

    @staticmethod
    def from_config(config):
        """Build the config from the flat ``planner_*`` keys of a session config."""
        return PlannerConfig(
            N=config['planner_horizon'],
            T_nom=config['planner_t_nom'],
            T_min=config['planner_t_min'],
            T_max=config['planner_t_max'],
            L_min=config['planner_stride_length'][0],
            L_max=config['planner_stride_length'][1],
            W_min=config['planner_stride_width'][0],
            W_max=config['planner_stride_width'][1],
            delta_x=config['planner_margin_x'],
            delta_y=config['planner_margin_y'],
            w_z=config['planner_w_z'],
            w_sigma=config['planner_w_sigma'],
            w_x=config['planner_w_x'],
            w_y=config['planner_w_y'],
            M_big=config['planner_big_m'],
            p_x_nom=config['planner_nominal_stride'][0],
            p_y_nom=config['planner_nominal_stride'][1],
            goal=(config['planner_goal_ahead'], 0.0),
            M_max=config['planner_max_regions'],
            node_budget=config['planner_node_budget'],
            g=config['planner_gravity'],
            z_c=config['planner_com_height'],
            fixed_duration=config['planner_fixed_duration'],
            viability=config['planner_viability'],
            replan_margin=config['planner_replan_margin']
        )

    @property
    def params(self):
        return TemplateParams(self.g, self.z_c)

    @property
    def sigma_nom(self):
        return self.params.sigma(self.T_nom)

    @property
    def sigma_min(self):
        return self.params.sigma(self.T_min)

    @property
    def sigma_max(self):
        return self.params.sigma(self.T_max)

    @property
    def capture_radius(self):
        'Bound on the sagittal DCM offset ``|z^x - p^x|``.'
        return sagittal_capture_radius(self.L_max, self.T_min, self.delta_x, self.params)

    def stage_weights(self):
        'The DCM tracking weight of every stage ``k = 2 .. N + 1``.'
        if isinstance(self.w_z, tuple):
            if len(self.w_z) != self.N:
                raise PlannerError('need {} stage weights, got {}'.format(self.N, len(self.w_z)))
            return np.array(self.w_z)
        return np.full(self.N, self.w_z)

    def scaled(self, factor):
        'Same config with every cost weight multiplied by ``factor``.'
        w_z = tuple(factor * w for w in self.w_z) if isinstance(self.w_z, tuple) \
            else factor * self.w_z
        return self._replace(
            w_z=w_z, w_sigma=factor * self.w_sigma,
            w_x=factor * self.w_x, w_y=factor * self.w_y
        )

    def validate(self):
        """Check the config for consistency.

        :raises PlannerError: on the first inconsistency found.
        :returns: self, so it can be chained.
        """
        if self.N < 1:
            raise PlannerError('preview horizon must be at least 1 (got {})'.format(self.N))
        if not 0 < self.T_min <= self.T_nom <= self.T_max:
            raise PlannerError('need 0 < T_min <= T_nom <= T_max (got {}, {}, {})'.format(
                self.T_min, self.T_nom, self.T_max
            ))
        if self.L_min > self.L_max or self.W_min > self.W_max:
            raise PlannerError('empty stride box: L [{}, {}], W [{}, {}]'.format(
                self.L_min, self.L_max, self.W_min, self.W_max
            ))
        if not (self.L_min <= self.p_x_nom <= self.L_max and
                self.W_min <= self.p_y_nom <= self.W_max):
            raise PlannerError('nominal stride ({}, {}) outside the stride box'.format(
                self.p_x_nom, self.p_y_nom
            ))

        weights = [self.w_sigma, self.w_x, self.w_y] + list(self.stage_weights())
        if min(weights) < 0:
            raise PlannerError('cost weights must be non-negative')
        if self.M_big <= 0 or self.M_max < 1 or self.node_budget < 1:
            raise PlannerError('M_big, M_max and node_budget must be positive')

        try:
            self.capture_radius
        except ValueError as err:
            raise PlannerError(str(err))
        return self


###########################################################################
#                           Problem & Solution                            #
###########################################################################


class PlannerProblem(namedtuple('PlannerProblem', [
    'config', 'z1', 'p1', 'ell', 'regions', 'fixed_assignment', 'goal', 'sigma_floor'
])):
    """One planning instance, expressed in the stance frame.

    :param config: A :class:`PlannerConfig`.
    :param z1: Initial DCM of the current step (anchored on a measurement).
    :param p1: Current stance foot.
    :param ell: Stance sign of the current step, 0 = left, 1 = right.
    :param regions: List of :class:`bifrost.geometry.hull.ConvexRegion`.
    :param fixed_assignment: Optional region ids for ``p_2 .. p_N``; turns the
                             problem into a single QP.
    :param goal: Tracking goal, either one point for all stages or one
                 row per stage ``k = 2 .. N + 1``; defaults to ``config.goal``.
    :param sigma_floor: Optional extra lower bound on ``sigma_1`` (in-step replanning).
    """
    __slots__ = ()

    def __new__(cls, config, z1, p1, ell, regions, fixed_assignment=None, goal=None, sigma_floor=None):
        if fixed_assignment is not None:
            fixed_assignment = tuple(int(rid) for rid in fixed_assignment)

        goal = np.array(config.goal if goal is None else goal, dtype=float)
        return super().__new__(
            cls, config,
            np.array(z1, dtype=float).reshape(2),
            np.array(p1, dtype=float).reshape(2),
            int(ell), list(regions), fixed_assignment,
            goal.reshape(2) if goal.size == 2 else goal.reshape(-1, 2),
            None if sigma_floor is None else float(sigma_floor)
        )

    def validate(self):
        """Check the problem (and its config).

        :raises PlannerError: on invalid data.
        """
        self.config.validate()
        if self.ell not in (0, 1):
            raise PlannerError('stance sign must be 0 or 1 (got {})'.format(self.ell))
        if not self.regions:
            raise PlannerError('need at least one region (M = 0)')
        if not (np.all(np.isfinite(self.z1)) and np.all(np.isfinite(self.p1))):
            raise PlannerError('initial DCM and stance foot must be finite')
        if self.goal.ndim == 2 and len(self.goal) != self.config.N:
            raise PlannerError('need {} stage goals, got {}'.format(self.config.N, len(self.goal)))
        if not np.all(np.isfinite(self.goal)):
            raise PlannerError('goal must be finite')

        ids = [region.id for region in self.regions]
        if len(set(ids)) != len(ids):
            raise PlannerError('duplicate region ids: {}'.format(ids))

        if self.fixed_assignment is not None:
            if len(self.fixed_assignment) != self.config.N - 1:
                raise PlannerError('fixed assignment needs {} region ids, got {}'.format(
                    self.config.N - 1, len(self.fixed_assignment)
                ))
            unknown = set(self.fixed_assignment) - set(ids)
            if unknown:
                raise PlannerError('fixed assignment names unknown regions {}'.format(sorted(unknown)))

        if self.stance_index() is None:
            raise PlannerError('stance foot {} lies outside every region'.format(self.p1.tolist()))
        return self

    def stance_index(self, tol=1e-9):
        'Index of the first region containing the stance foot, or None.'
        for idx, region in enumerate(self.regions):
            if region.contains(self.p1, tol):
                return idx
        return None

    def stage_goals(self):
        'The DCM goal of each stage ``k = 2 .. N + 1`` as an (N, 2) array.'
        if self.goal.ndim == 2:
            return self.goal
        return np.tile(self.goal, (self.config.N, 1))

    @property
    def M(self):
        return len(self.regions)


PlannerSolution = namedtuple('PlannerSolution', [
    'status',        # OPTIMAL, INFEASIBLE or ITERATION_LIMIT
    'objective',     # float, inf without a solution
    'footholds',     # (N, 2): row 0 is the stance foot p_1
    'dcm',           # (N + 1, 2): row 0 is the initial DCM z_1
    'sigma1',        # e^(lambda T_1)
    'assignment',    # region id per step k = 1 .. N
    'delta',         # (N, M) 0/1 matrix, columns in problem region order
    'slacks',        # (N - 1, 2) stride slacks (s^x, s^y)
    'relaxed_rows',  # names of dropped initial-state rows
    'solve_stats'    # dict: nodes, qp_iterations, wall_us, gap
])


def _duration(solution, config):
    if solution.sigma1 is None:
        return None
    return math.log(solution.sigma1) / config.params.lam


PlannerSolution.duration = _duration
PlannerSolution.found = property(lambda self: self.footholds is not None)
PlannerSolution.__doc__ = """Result of a planning call.

``solution.found`` tells whether the arrays are populated (this is also the
case for an iteration limit with an incumbent). ``solution.duration(config)``
converts ``sigma1`` back to seconds.
"""


def empty_solution(status, relaxed_rows=(), solve_stats=None):
    'A solution without a plan (infeasible or out of budget).'
    return PlannerSolution(
        status, math.inf, None, None, None, None, None, None,
        tuple(relaxed_rows), dict(solve_stats or {})
    )


if __name__ == '__main__':
    import unittest

    from bifrost.geometry import rectangle
    from bifrost.geometry.hull import to_halfspaces
    from bifrost.planner import PlannerConfig, PlannerProblem, PlannerError

    class ConfigTests(unittest.TestCase):
        def test_defaults(self):
            cfg = PlannerConfig().validate()
            self.assertAlmostEqual(cfg.params.lam, math.sqrt(9.81 / 0.9))
            self.assertAlmostEqual(cfg.capture_radius, 0.3148, places=4)
            self.assertLess(cfg.sigma_min, cfg.sigma_nom)
            self.assertLess(cfg.sigma_nom, cfg.sigma_max)

        def test_inconsistent_durations(self):
            with self.assertRaises(PlannerError):
                PlannerConfig(T_min=0.8).validate()

        def test_stage_weights(self):
            self.assertEqual(list(PlannerConfig().stage_weights()), [10.0] * 4)
            with self.assertRaises(PlannerError):
                PlannerConfig(w_z=(1.0, 2.0)).stage_weights()

        def test_scaled(self):
            cfg = PlannerConfig().scaled(3.0)
            self.assertEqual((cfg.w_z, cfg.w_sigma, cfg.w_x, cfg.w_y), (30.0, 15.0, 3.0, 3.0))

        def test_from_config(self):
            from bifrost.session import DEFAULT_CONFIG
            self.assertEqual(PlannerConfig.from_config(DEFAULT_CONFIG), PlannerConfig())

    class ProblemTests(unittest.TestCase):
        def setUp(self):
            self.floor = to_halfspaces(rectangle(-0.5, 2.0, -1.0, 1.0), 7)

        def test_valid(self):
            problem = PlannerProblem(PlannerConfig(), (0.1, -0.05), (0, 0), 0, [self.floor])
            self.assertIs(problem.validate(), problem)
            self.assertEqual(problem.stance_index(), 0)
            self.assertTrue(np.array_equal(problem.goal, [1.5, 0.0]))

        def test_no_regions(self):
            with self.assertRaises(PlannerError):
                PlannerProblem(PlannerConfig(), (0, 0), (0, 0), 0, []).validate()

        def test_stance_outside(self):
            problem = PlannerProblem(PlannerConfig(), (0, 0), (5, 5), 0, [self.floor])
            with self.assertRaises(PlannerError):
                problem.validate()

        def test_fixed_assignment_length(self):
            problem = PlannerProblem(
                PlannerConfig(), (0, 0), (0, 0), 0, [self.floor], fixed_assignment=[7]
            )
            with self.assertRaises(PlannerError):
                problem.validate()

        def test_stage_goals(self):
            problem = PlannerProblem(PlannerConfig(), (0.1, -0.05), (0, 0), 0, [self.floor])
            self.assertEqual(problem.stage_goals().shape, (4, 2))
            self.assertTrue(np.all(problem.stage_goals() == [1.5, 0.0]))

            goals = [[0.5, 0.1], [1.0, -0.1], [1.5, 0.1], [2.0, -0.1]]
            problem = problem._replace(goal=np.array(goals))
            self.assertIs(problem.validate(), problem)
            self.assertTrue(np.array_equal(problem.stage_goals(), goals))

        def test_stage_goal_count(self):
            problem = PlannerProblem(
                PlannerConfig(), (0.1, -0.05), (0, 0), 0, [self.floor], goal=[[1, 0], [2, 0], [3, 0]]
            )
            self.assertEqual(problem.goal.shape, (3, 2))
            with self.assertRaises(PlannerError):
                problem.validate()

    unittest.main()
