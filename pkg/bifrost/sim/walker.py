#!/usr/bin/env python
# encoding: utf-8

"""
.. currentmodule:: bifrost.sim.walker

Overview
--------

The closed loop: a DCM template walker, its planner and its perception.

Every tick of ``dt`` seconds runs, in this order:

    1. Scheduled pushes: the DCM jumps by the impulse.
    2. Perception, at the start of a step and then every
       ``sim_perception_period`` seconds (heightmap terrain only).
    3. Replanning, at the start of a step and then every
       ``sim_replan_period`` seconds. With ``sim_inplace_replan`` off the
       walker only plans at step start.
    4. One log row.
    5. The DCM advances along its closed form, the CoM follows and the
       phase grows; at phase 1 the swing foot touches down.
    6. Termination checks: fall, goal, timeout.

The walker state lives in the stance frame. At touchdown the landing point
must lie on a ground-truth stone, otherwise the episode ends with a fall.
Then every planar quantity is re-anchored to the new stance foot.

The phase grows at ``(1 - phi) / (T - t)`` per second. As long as the
planned duration ``T`` holds this is ``1 / T``; when a replan changes ``T``
in the middle of a step the phase still reaches 1 exactly at the new ``T``.
No replan happens in the last ``replan_margin`` seconds of a step.

Without a plan (infeasible, or a problem the planner rejects) the walker
performs a capture-style stop: the step is cut as short as allowed and the
swing foot heads for the point of the nearest region closest to the
capture point.

Reference
---------
"""

# Stdlib:
import csv
import io
import math

from collections import namedtuple

import logging
LOGGER = logging.getLogger(__name__)

# External:
import numpy as np

# Internal:
from bifrost.dcm import (
    LEFT, DcmState, backward_init, capture_point, com_step, com_velocity,
    dcm_at, other_side, periodic_dcm, side_sign
)
from bifrost.geometry.hull import shrink_region
from bifrost.geometry.regions import (
    RegionConfig, extract_regions, find_stance_region, select_regions, stance_patch
)
from bifrost.helper import rotation
from bifrost.perception import SensorModel, StancePose
from bifrost.perception.heightmap import HeightMap, HeightMapConfig, update
from bifrost.planner import OPTIMAL, PlannerConfig, PlannerError
from bifrost.planner.branch import replan_problem, solve
from bifrost.planner.checker import assert_solution
from bifrost.session import DEFAULT_CONFIG
from bifrost.sim import FALL, GOAL_REACHED, TEMPLATE_HEADER, TIMEOUT, ScenarioError
from bifrost.sim.sensor import SyntheticDepthSensor, sense
from bifrost.sim.swing import SwingTrajectory


GROUND_TRUTH, HEIGHTMAP = 'ground_truth', 'heightmap'
TERRAIN_SOURCES = (GROUND_TRUTH, HEIGHTMAP)

# The stance foot in its own frame.
ORIGIN = np.zeros(2)

# Status of a replan the planner refused to take.
REJECTED = 'rejected'


StepRecord = namedtuple('StepRecord', [
    'index',           # step counter, 0 for the first step
    'stance',          # LEFT or RIGHT
    'start',           # simulated time the step began
    'duration',        # seconds until touchdown
    'stance_world',    # (x, y) of the stance foot
    'landing',         # touchdown point in the stance frame of this step
    'landing_world',   # touchdown point in the world
    'stone',           # id of the stone hit, None over the pit
    'region'           # planned region id, None for a fallback
])


ReplanRecord = namedtuple('ReplanRecord', [
    'time', 'step', 't_elapsed', 'status',
    'z1',            # planned initial DCM (world), None if rejected
    'xi',            # measured DCM (world)
    'sigma1', 'duration', 'solve_us', 'relaxed_rows'
])


def nominal_target(side, config):
    'Nominal landing point of the swing foot while ``side`` is the stance.'
    lateral = -config.p_y_nom if side == LEFT else config.p_y_nom
    return np.array([config.p_x_nom, lateral])


def nominal_dcm_goals(side, midline, bar_x, config):
    """Stage goals that hold the walker on the nominal gait.

    Step ``k = 2 .. N + 1`` gets the initial DCM of the periodic gait on
    the nominal foothold lattice: ``(k - 1) p_x_nom`` ahead of the stance
    foot, ``p_y_nom / 2`` off the midline. Goals never pass the goal bar.

    :param side: Current stance side.
    :param midline: Stance-frame y of the walking line.
    :param bar_x: Stance-frame x of the goal bar.
    :returns: (N, 2) array for :class:`bifrost.planner.PlannerProblem`.
    """
    goals, foot_side = [], side
    for k in range(2, config.N + 2):
        foot_side = other_side(foot_side)
        lateral = config.p_y_nom / 2.0 if foot_side == LEFT else -config.p_y_nom / 2.0
        foot = np.array([(k - 1) * config.p_x_nom, midline + lateral])
        goal = foot + periodic_dcm(config.p_x_nom, config.p_y_nom, config.sigma_nom, side_sign(foot_side))
        goal[0] = min(goal[0], bar_x)
        goals.append(goal)
    return np.array(goals)


###########################################################################
#                              Walker State                               #
###########################################################################


class WalkerState:
    """Everything the walker knows, in the frame of its stance foot.

    The stance foot is the origin of that frame and ``pose`` places it in
    the world.
    """
    def __init__(self, pose, side, xi0, com, com_vel, T_current, swing,
                 t_elapsed=0.0, phase=0.0, step_index=0, xi=None):
        self.pose = pose
        self.side = side
        self.xi0 = np.array(xi0, dtype=float)
        self.xi = self.xi0.copy() if xi is None else np.array(xi, dtype=float)
        self.com = np.array(com, dtype=float)
        self.com_vel = np.array(com_vel, dtype=float)
        self.T_current = float(T_current)
        self.t_elapsed = float(t_elapsed)
        self.phase = float(phase)
        self.step_index = int(step_index)
        self.swing = swing

        # Last plan and the region it picked for the swing foot.
        self.plan, self.region = None, None

    def __repr__(self):
        return '<WalkerState step {} ({}) t={:.3f}/{:.3f} phase {:.3f}>'.format(
            self.step_index, self.side, self.t_elapsed, self.T_current, self.phase
        )

    @property
    def target(self):
        return self.swing.target

    @property
    def remaining(self):
        return self.T_current - self.t_elapsed

    def offset(self):
        'Distance of the DCM from the stance foot.'
        return float(np.linalg.norm(self.xi))

    def dcm_state(self):
        return DcmState(
            self.xi.copy(), self.xi0.copy(), ORIGIN.copy(),
            self.side, self.t_elapsed, self.T_current
        )

    def world(self, point):
        'A stance-frame point in world coordinates.'
        return self.pose.to_world(point)[0]

    def world_vector(self, vector):
        return rotation(self.pose.yaw).dot(vector)

    ##############
    #  Dynamics  #
    ##############

    def push(self, impulse, params):
        """Offset the DCM by a world-frame ``impulse``."""
        self.xi = self.xi + rotation(self.pose.yaw).T.dot(impulse)
        self.xi0 = backward_init(self.xi, self.t_elapsed, ORIGIN, params)

    def retime(self, duration, target):
        """Adopt a new step duration and landing target."""
        self.T_current = float(duration)
        target = np.asarray(target, dtype=float)
        if not np.array_equal(target, self.swing.target):
            self.swing = self.swing.retarget(self.phase, target)

    def advance(self, dt, params):
        """Move the template ``dt`` seconds forward.

        :returns: True if the swing foot touched down during this tick.
        """
        remaining = self.remaining
        self.com = com_step(self.com, self.xi, ORIGIN, dt, params)
        self.t_elapsed += dt
        self.xi = dcm_at(self.xi0, ORIGIN, self.t_elapsed, params)
        self.com_vel = com_velocity(self.com, self.xi, params)

        if remaining <= dt * (1.0 + 1e-9):
            self.phase = 1.0
            return True

        self.phase += dt * (1.0 - self.phase) / remaining
        return False

    def reanchor(self, new_pose, config, apex):
        """Make the swing foot the stance foot, standing at ``new_pose``.

        The old stance foot becomes the swing foot and heads for the
        nominal target until the next plan arrives.
        """
        old = self.pose

        def move(point):
            return new_pose.from_world(old.to_world(point))[0]

        turn = rotation(new_pose.yaw).T.dot(rotation(old.yaw))
        swing_start = move(ORIGIN)

        self.xi = move(self.xi)
        self.xi0 = self.xi.copy()
        self.com = move(self.com)
        self.com_vel = turn.dot(self.com_vel)

        self.pose = new_pose
        self.side = other_side(self.side)
        self.step_index += 1
        self.t_elapsed, self.phase = 0.0, 0.0
        self.T_current = config.T_nom
        self.swing = SwingTrajectory(swing_start, nominal_target(self.side, config), apex=apex)
        self.plan, self.region = None, None


def initial_state(field, config, apex=0.1):
    """Left stance on the start stone, walking at the nominal gait.

    :raises ScenarioError: if there is no stone under the start foot.
    """
    foot = np.array([0.0, config.p_y_nom / 2.0])
    stone = field.stone_at(foot)
    if stone is None:
        raise ScenarioError('no stone under the start foot at {}'.format(foot.tolist()))

    params = config.params
    xi0 = periodic_dcm(config.p_x_nom, config.p_y_nom, config.sigma_nom, side_sign(LEFT))
    com = xi0 - np.array([config.p_x_nom / config.T_nom / params.lam, 0.0])
    swing = SwingTrajectory(
        (0.0, -config.p_y_nom), nominal_target(LEFT, config), apex=apex
    )
    return WalkerState(
        StancePose((foot[0], foot[1], stone.mean_height), 0.0), LEFT,
        xi0, com, com_velocity(com, xi0, params), config.T_nom, swing
    )


###########################################################################
#                             Trajectory Log                              #
###########################################################################


def _fmt(value):
    return '{:.6f}'.format(value)


class TrajectoryLog:
    """One CSV row per tick plus per-step and per-replan records.

    Planar quantities in the rows are world coordinates. Solve times only
    reach the rows if ``log_timing`` is set, so that two runs of the same
    scenario produce the same bytes.
    """
    COLUMNS = (
        'time', 'step', 'stance', 'p_x', 'p_y',
        'xi_x', 'xi_y', 'xi0_x', 'xi0_y',
        'com_x', 'com_y', 'com_vx', 'com_vy',
        'swing_x', 'swing_y', 'swing_z',
        'phase', 'T_current', 'status', 'solve_us', 'z1_x', 'z1_y', 'event'
    )

    def __init__(self, scenario_name='scenario', digest='', dt=0.001, log_timing=False):
        self.scenario_name, self.digest = scenario_name, digest
        self.dt, self.log_timing = dt, bool(log_timing)
        self.rows, self.steps, self.replans = [], [], []
        self.outcome, self.end_time = None, 0.0

    def __len__(self):
        return len(self.rows)

    def __repr__(self):
        return '<TrajectoryLog {!r}: {} rows, {} steps, {}>'.format(
            self.scenario_name, len(self.rows), len(self.steps), self.outcome
        )

    def add_row(self, time, state, status='', solve_us=None, z1=None, events=()):
        """Append the row of one tick.

        :param state: The :class:`WalkerState` at ``time``.
        :param z1: World position of the initial DCM planned in this tick.
        """
        p = state.pose.position
        xi, xi0 = state.world(state.xi), state.world(state.xi0)
        com, com_vel = state.world(state.com), state.world_vector(state.com_vel)
        swing = state.world(state.swing.position(state.phase))
        swing_z = p[2] + state.swing.height(state.phase)

        timing = '' if solve_us is None or not self.log_timing else str(int(solve_us))
        self.rows.append([
            _fmt(time), str(state.step_index), state.side, _fmt(p[0]), _fmt(p[1]),
            _fmt(xi[0]), _fmt(xi[1]), _fmt(xi0[0]), _fmt(xi0[1]),
            _fmt(com[0]), _fmt(com[1]), _fmt(com_vel[0]), _fmt(com_vel[1]),
            _fmt(swing[0]), _fmt(swing[1]), _fmt(swing_z),
            _fmt(state.phase), _fmt(state.T_current), status, timing,
            '' if z1 is None else _fmt(z1[0]), '' if z1 is None else _fmt(z1[1]),
            ';'.join(events)
        ])

    def column(self, name):
        """All values of column ``name``; numbers become floats, empty cells None."""
        idx = self.COLUMNS.index(name)
        values = []
        for row in self.rows:
            cell = row[idx]
            if cell == '':
                values.append(None)
                continue
            try:
                values.append(float(cell))
            except ValueError:
                values.append(cell)
        return values

    def events(self):
        'Pairs of (row index, event name) in row order.'
        idx = self.COLUMNS.index('event')
        return [
            (number, name) for number, row in enumerate(self.rows)
            for name in row[idx].split(';') if name
        ]

    @property
    def solve_us(self):
        'Wall time of every planner call in microseconds.'
        return [record.solve_us for record in self.replans if record.solve_us is not None]

    @property
    def mean_velocity(self):
        'Mean forward velocity of the CoM over the episode.'
        if len(self.rows) < 2:
            return 0.0
        times, com_x = self.column('time'), self.column('com_x')
        elapsed = times[-1] - times[0]
        return (com_x[-1] - com_x[0]) / elapsed if elapsed > 0 else 0.0

    def header_lines(self):
        return [
            TEMPLATE_HEADER,
            '# scenario {} sha1 {} dt {}'.format(self.scenario_name, self.digest, self.dt)
        ]

    def to_csv(self):
        buffer = io.StringIO()
        for line in self.header_lines():
            buffer.write(line + '\n')

        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(self.COLUMNS)
        writer.writerows(self.rows)
        return buffer.getvalue()

    def write_csv(self, path):
        with open(path, 'w') as handle:
            handle.write(self.to_csv())


###########################################################################
#                              Closed Loop                                #
###########################################################################


class ClosedLoop:
    """One episode of a :class:`bifrost.sim.scenario.Scenario`.

    :param scenario: The scenario to run.
    :param planner: Optional :class:`PlannerConfig`; built from the config otherwise.
    :param dt: Tick length, defaults to ``sim_dt``.
    :param horizon: Simulated seconds until timeout, defaults to ``sim_horizon``.
    :param config: Base config the scenario overrides apply to.
    :raises ScenarioError: on unusable scenarios.
    :raises PlannerError: on invalid planner configs or ``N < 2``.
    """
    def __init__(self, scenario, planner=None, dt=None, horizon=None, config=None):
        self.scenario = scenario
        self.config = cfg = scenario.config(DEFAULT_CONFIG if config is None else config)

        self.planner = (planner or PlannerConfig.from_config(cfg)).validate()
        if self.planner.N < 2:
            raise PlannerError('the closed loop needs a preview of two steps or more (N = {})'.format(
                self.planner.N
            ))
        self.params = self.planner.params

        self.dt = float(cfg['sim_dt'] if dt is None else dt)
        self.horizon = float(cfg['sim_horizon'] if horizon is None else horizon)
        if self.dt <= 0 or self.horizon <= 0:
            raise ScenarioError('dt and horizon must be positive (got {}, {})'.format(
                self.dt, self.horizon
            ))

        self.source = cfg['sim_terrain_source']
        if self.source not in TERRAIN_SOURCES:
            raise ScenarioError('unknown terrain source {!r} (expected one of {})'.format(
                self.source, ', '.join(TERRAIN_SOURCES)
            ))

        self.field = scenario.build_field()
        self.region_cfg = RegionConfig.from_config(cfg)
        self.inplace = bool(cfg['sim_inplace_replan'])
        self.replan_ticks = max(1, int(round(cfg['sim_replan_period'] / self.dt)))
        self.perception_ticks = max(1, int(round(cfg['sim_perception_period'] / self.dt)))

        self.sensors, self.hmap = [], None
        if self.source == HEIGHTMAP:
            self.sensors = SyntheticDepthSensor.from_config(cfg)
            self.hmap = HeightMap.from_config(cfg)
            self.map_cfg = HeightMapConfig.from_config(cfg)
            self.noise = self.sensors[0].noise_model or SensorModel(
                math.sqrt(self.map_cfg.variance_floor), cfg['sensor_epsilon'], cfg['sensor_max_range']
            )
            self.rng = np.random.default_rng(scenario.seed)

        self.state = initial_state(self.field, self.planner, cfg['sim_swing_apex'])
        self.log = TrajectoryLog(scenario.name, scenario.digest(), self.dt, cfg['sim_log_timing'])

        self._pending = list(scenario.disturbances)
        self._tick, self._step_tick, self._step_start = 0, 0, 0.0
        self._candidates, self._candidates_key = None, None
        self._events, self._status, self._z1, self._solve_us = [], '', None, None

    @property
    def time(self):
        return self._tick * self.dt

    def run(self):
        """Tick until the episode ends.

        :returns: The :class:`TrajectoryLog`.
        """
        LOGGER.info('episode {!r} (seed {}) on {}, terrain from {}'.format(
            self.scenario.name, self.scenario.seed, self.field, self.source
        ))

        last_tick = int(round(self.horizon / self.dt))
        outcome = None
        while outcome is None:
            outcome = self.tick()
            if outcome is None and self._tick >= last_tick:
                outcome = TIMEOUT

        self._events.append(outcome)
        self._write_row()
        self.log.outcome, self.log.end_time = outcome, self.time
        LOGGER.info('episode {!r} ended with {} after {} steps at t={:.3f} s'.format(
            self.scenario.name, outcome, len(self.log.steps), self.time
        ))
        return self.log

    def tick(self):
        """Run one tick.

        :returns: The outcome if the episode ended, else None.
        """
        state = self.state
        while self._pending and self._pending[0].time <= self.time + 1e-9:
            push = self._pending.pop(0)
            state.push(push.impulse, self.params)
            self._events.append('push')
            LOGGER.info('push {} at t={:.3f}'.format(list(push.impulse), self.time))

        if self.hmap is not None and self._step_tick % self.perception_ticks == 0:
            self.perceive()

        at_start = self._step_tick == 0
        due = self.inplace and self._step_tick % self.replan_ticks == 0 \
            and state.remaining >= self.planner.replan_margin
        if at_start or due:
            self.replan()

        self._write_row()

        touchdown = state.advance(self.dt, self.params)
        self._tick += 1
        self._step_tick += 1

        if touchdown:
            outcome = self.touchdown()
            if outcome is not None:
                return outcome

        if state.offset() > self.config['sim_fall_dcm_offset']:
            LOGGER.error('DCM diverged {:.3f} m from the stance foot at t={:.3f}'.format(
                state.offset(), self.time
            ))
            return FALL
        return None

    def _write_row(self):
        self.log.add_row(self.time, self.state, self._status, self._solve_us, self._z1, self._events)
        self._events, self._z1, self._solve_us = [], None, None

    ################
    #  Perception  #
    ################

    def perceive(self):
        state = self.state
        frame = self.hmap.frame_index + 1
        clouds = [sense(self.field, state.pose, sensor, self.rng, frame) for sensor in self.sensors]
        update(self.hmap, clouds, state.pose, self.noise, self.map_cfg)
        self._events.append('perceive')

    def candidate_regions(self):
        """All regions of the current step (or map frame) and the stance region id.

        A foot-sized patch is added if no region holds the stance foot.
        """
        key = (self.state.step_index, None if self.hmap is None else self.hmap.frame_index)
        if key == self._candidates_key:
            return self._candidates

        if self.hmap is None:
            regions = self.field.regions_in_frame(self.state.pose)
        else:
            erosion = self.config['sim_region_erosion']
            shrunk = (shrink_region(region, erosion) for region in extract_regions(self.hmap, self.region_cfg))
            regions = [region for region in shrunk if region is not None]

        stance = find_stance_region(regions, ORIGIN, tol=1e-9)
        if stance is None:
            next_id = max([region.id for region in regions], default=-1) + 1
            stance = stance_patch(ORIGIN, self.config['sim_stance_patch'], next_id)
            regions.append(stance)
            LOGGER.debug('no region under the stance foot, using patch {}'.format(next_id))

        self._candidates, self._candidates_key = (regions, stance.id), key
        return self._candidates

    def goal(self):
        'The goal bar center in the stance frame, at most ``goal[0]`` ahead.'
        goal = self.state.pose.from_world([(self.field.goal_x, 0.0)])[0]
        goal[0] = min(goal[0], self.planner.goal[0])
        return goal

    def stage_goals(self):
        'Nominal-gait DCM goals in the stance frame; see :func:`nominal_dcm_goals`.'
        bar = self.state.pose.from_world([(self.field.goal_x, 0.0)])[0]
        return nominal_dcm_goals(self.state.side, bar[1], bar[0], self.planner)

    ##############
    #  Planning  #
    ##############

    def replan(self):
        state, planner = self.state, self.planner
        candidates, stance_id = self.candidate_regions()
        goal = self.goal()
        regions = select_regions(
            candidates, stance_id, goal, state.com_vel[0], planner.M_max, self.region_cfg
        )

        problem, solution = None, None
        try:
            problem = replan_problem(
                state.dcm_state(), regions, planner, state.xi, goal=self.stage_goals()
            )
            solution = solve(problem)
        except PlannerError as err:
            LOGGER.warning('planner rejected the problem at t={:.3f}: {}'.format(self.time, err))
            problem = None

        if solution is not None and solution.found:
            if self.config['sim_check_solutions'] and solution.status == OPTIMAL:
                assert_solution(problem, solution)
            duration, target = solution.duration(planner), solution.footholds[1]
            region, status = solution.assignment[1], solution.status
        else:
            duration, target, region = self.fallback(regions)
            status = REJECTED if solution is None else solution.status
            self._events.append('fallback')

        state.retime(duration, target)
        state.plan, state.region = solution, region

        stats = {} if solution is None else solution.solve_stats
        self._status, self._solve_us = status, stats.get('wall_us')
        self._z1 = None if problem is None else state.world(problem.z1)
        self._events.append('replan')

        self.log.replans.append(ReplanRecord(
            self.time, state.step_index, state.t_elapsed, status,
            self._z1, state.world(state.xi),
            None if solution is None else solution.sigma1, duration,
            self._solve_us, () if solution is None else solution.relaxed_rows
        ))

    def fallback(self, regions):
        """Capture-style stop: shortest step toward the capture point.

        :returns: (duration, target, region id)
        """
        state, planner = self.state, self.planner
        duration = max(planner.T_min, state.t_elapsed + planner.replan_margin)
        point = capture_point(state.xi, ORIGIN, duration - state.t_elapsed, self.params)

        def distance(region):
            return float(np.linalg.norm(region.closest_point(point) - point)), region.id

        best = min(regions, key=distance)
        LOGGER.warning('no plan at t={:.3f}; stopping toward region {} in {:.3f} s'.format(
            self.time, best.id, duration - state.t_elapsed
        ))
        return duration, best.closest_point(point), best.id

    ###############
    #  Touchdown  #
    ###############

    def touchdown(self):
        """Land the swing foot and switch the stance.

        :returns: FALL, GOAL_REACHED or None.
        """
        state = self.state
        landing = np.array(state.target, dtype=float)
        world = state.world(landing)
        stone = self.field.stone_at(world)

        self.log.steps.append(StepRecord(
            state.step_index, state.side, self._step_start, state.t_elapsed,
            state.pose.position[:2].copy(), landing, world,
            None if stone is None else stone.id, state.region
        ))

        if stone is None:
            LOGGER.error('step {} landed in the pit at {}'.format(state.step_index, world.tolist()))
            return FALL

        state.reanchor(
            StancePose((world[0], world[1], stone.mean_height), state.pose.yaw),
            self.planner, self.config['sim_swing_apex']
        )
        self._step_tick, self._step_start = 0, self.time
        self._events.append('touchdown')
        LOGGER.info('step {} on stone {} at ({:.3f}, {:.3f})'.format(
            state.step_index, stone.id, world[0], world[1]
        ))

        if world[0] >= self.field.goal_x - self.config['sim_goal_tolerance']:
            return GOAL_REACHED
        return None


def step_closed_loop(scenario, planner=None, dt=None, horizon=None, config=None):
    """Run one episode; see :class:`ClosedLoop` for the parameters.

    :returns: The :class:`TrajectoryLog`.
    """
    return ClosedLoop(scenario, planner, dt, horizon, config).run()


###########################################################################
#                                  Tests                                  #
###########################################################################

if __name__ == '__main__':
    import unittest

    from bifrost.sim.scenario import Scenario

    FLAT = Scenario(name='flat', seed=0, field={'family': 'flat'}, sim={'terrain_source': GROUND_TRUTH})

    class WalkerStateTests(unittest.TestCase):
        def setUp(self):
            self.config = PlannerConfig()
            self.state = initial_state(FLAT.build_field(), self.config)

        def test_initial(self):
            self.assertEqual(self.state.side, LEFT)
            self.assertTrue(np.allclose(self.state.pose.position, [0.0, 0.15, 0.0]))
            self.assertAlmostEqual(self.state.xi0[0], 0.1189, places=4)
            self.assertAlmostEqual(self.state.com_vel[0], 1.0, places=9)

        def test_reanchor_round_trip(self):
            state = self.state
            for _ in range(100):
                state.advance(0.001, self.config.params)
            before = [state.world(state.xi), state.world(state.com), state.world_vector(state.com_vel)]

            state.reanchor(StancePose((0.8, -0.2, 0.01), 0.3), self.config, 0.1)
            after = [state.world(state.xi), state.world(state.com), state.world_vector(state.com_vel)]
            for old, new in zip(before, after):
                self.assertTrue(np.allclose(old, new, atol=1e-12))

            self.assertEqual(state.side, 'right')
            self.assertEqual((state.t_elapsed, state.phase, state.step_index), (0.0, 0.0, 1))
            self.assertTrue(np.allclose(state.world(state.swing.position(0.0)), [0.0, 0.15], atol=1e-12))

        def test_phase_reaches_one_at_new_duration(self):
            state, params = self.state, self.config.params
            ticks = 0
            while not state.advance(0.001, params):
                ticks += 1
                if ticks == 100:
                    state.retime(0.35, state.target)
            self.assertEqual(state.phase, 1.0)
            self.assertAlmostEqual(state.t_elapsed, 0.35, delta=0.0011)

        def test_nominal_dcm_goals(self):
            cfg = self.config
            goals = nominal_dcm_goals(LEFT, -0.15, 10.0, cfg)
            self.assertEqual(goals.shape, (cfg.N, 2))

            # Zero-cost plan: starting on the periodic gait the goals are its DCMs.
            z, foot = self.state.xi0.copy(), np.zeros(2)
            for k, goal in enumerate(goals, 2):
                z = cfg.sigma_nom * z + (1.0 - cfg.sigma_nom) * foot
                self.assertTrue(np.allclose(z, goal, atol=1e-9), 'stage {}'.format(k))
                foot = np.array([(k - 1) * cfg.p_x_nom, -0.3 if k % 2 == 0 else 0.0])

            capped = nominal_dcm_goals(LEFT, -0.15, 0.7, cfg)
            self.assertTrue(np.all(capped[:, 0] <= 0.7))
            self.assertTrue(np.array_equal(capped[:, 1], goals[:, 1]))

        def test_push(self):
            state, params = self.state, self.config.params
            for _ in range(50):
                state.advance(0.001, params)
            xi = state.xi.copy()
            state.push((0.05, 0.0), params)
            self.assertAlmostEqual(state.xi[0] - xi[0], 0.05)
            self.assertTrue(np.allclose(dcm_at(state.xi0, ORIGIN, state.t_elapsed, params), state.xi))

    class ClosedLoopTests(unittest.TestCase):
        @classmethod
        def setUpClass(cls):
            cls.log = step_closed_loop(FLAT, horizon=4.0)

        def test_flat_walk(self):
            log, cfg = self.log, PlannerConfig()
            self.assertEqual(log.outcome, TIMEOUT)
            self.assertGreaterEqual(len(log.steps), 7)
            self.assertNotIn(FALL, [name for _, name in log.events()])
            for step in log.steps:
                self.assertIsNotNone(step.stone)
                self.assertGreaterEqual(step.duration, cfg.T_min - 1e-9)
                self.assertLessEqual(step.duration, cfg.T_max + 0.001 + 1e-9)

        def test_flat_limit_cycle(self):
            # After five steps stride and timing sit on the nominal gait.
            cfg = PlannerConfig()
            for step in self.log.steps[5:]:
                self.assertAlmostEqual(step.landing[0], cfg.p_x_nom, delta=0.02 * cfg.p_x_nom)
                self.assertAlmostEqual(abs(step.landing[1]), cfg.p_y_nom, delta=0.02 * cfg.p_y_nom)
                self.assertAlmostEqual(step.duration, cfg.T_nom, delta=0.02 * cfg.T_nom)
            self.assertAlmostEqual(self.log.mean_velocity, cfg.p_x_nom / cfg.T_nom, delta=0.05)

        def test_rows(self):
            log = self.log
            self.assertEqual(len(log), 4001)
            self.assertTrue(log.to_csv().startswith(TEMPLATE_HEADER + '\n# scenario flat sha1 '))
            self.assertEqual(log.column('solve_us'), [None] * len(log))
            touchdowns = [number for number, name in log.events() if name == 'touchdown']
            self.assertEqual(len(touchdowns), len(log.steps))

        def test_world_bookkeeping(self):
            steps = self.log.steps
            for step, following in zip(steps, steps[1:]):
                self.assertTrue(np.allclose(step.stance_world + step.landing, step.landing_world, atol=1e-9))
                self.assertTrue(np.allclose(following.stance_world, step.landing_world, atol=1e-9))

        def test_dcm_diverges_within_step(self):
            log = self.log
            step, t = log.column('step'), log.column('time')
            px, py = log.column('p_x'), log.column('p_y')
            xx, xy = log.column('xi_x'), log.column('xi_y')
            offset = np.hypot(np.subtract(xx, px), np.subtract(xy, py))
            phase = log.column('phase')
            for i in range(1, len(log)):
                if step[i] == step[i - 1]:
                    self.assertGreaterEqual(offset[i], offset[i - 1] - 2e-6, 'at t={}'.format(t[i]))
                    self.assertGreaterEqual(phase[i], phase[i - 1])
                self.assertTrue(0.0 <= phase[i] <= 1.0)

        def test_deterministic(self):
            first = step_closed_loop(FLAT, horizon=0.8).to_csv()
            self.assertEqual(first, step_closed_loop(FLAT, horizon=0.8).to_csv())

        def test_huge_push_falls(self):
            pushed = Scenario(
                name='shove', field={'family': 'flat'}, sim={'terrain_source': GROUND_TRUTH},
                disturbances=[{'time': 0.2, 'impulse': [3.0, 0.0]}]
            )
            log = step_closed_loop(pushed, horizon=1.0)
            self.assertEqual(log.outcome, FALL)
            self.assertLess(log.end_time, 0.25)

        def test_moderate_push_recovers(self):
            pushed = Scenario(
                name='nudge', field={'family': 'flat'}, sim={'terrain_source': GROUND_TRUTH},
                disturbances=[{'time': 0.75, 'impulse': [0.08, 0.0]}]
            )
            log = step_closed_loop(pushed, horizon=2.0)
            self.assertEqual(log.outcome, TIMEOUT)
            self.assertIn('push', [name for _, name in log.events()])

        def test_heightmap_terrain(self):
            scenario = Scenario(name='seen', field={'family': 'flat'})
            loop = ClosedLoop(scenario, horizon=0.2)
            log = loop.run()
            self.assertGreater(int(loop.hmap.observed.sum()), 100)
            self.assertEqual([name for _, name in log.events()].count('perceive'), 2)
            self.assertEqual(log.outcome, TIMEOUT)

        def test_needs_two_steps(self):
            with self.assertRaises(PlannerError):
                ClosedLoop(FLAT, planner=PlannerConfig(N=1))

        def test_unknown_terrain(self):
            with self.assertRaises(ScenarioError):
                ClosedLoop(FLAT._replace(sim={'terrain_source': 'lidar'}))

    unittest.main()
