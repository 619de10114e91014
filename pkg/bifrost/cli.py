#!/usr/bin/env python
# encoding: utf-8

"""
Overview
--------

Command line front end, reachable as ``python -m bifrost``::

    bifrost plan problem.json            # one planner call
    bifrost simulate scenario.yml        # one closed-loop episode
    bifrost perceive replay.txt          # replay clouds into a heightmap
    bifrost ablate scenario.yml          # variants A-D over many seeds
    bifrost bench                        # planner timing on random problems

Every subcommand takes ``--seed``, ``--out-dir``, ``--config`` (a YAML
mapping of config overrides) and ``-v``. Exit codes: 0 when the command
ran through (a fall is a result, not an error), 1 on unreadable input,
2 on a malformed scenario, 3 if the planner returned a solution that
breaks one of its own constraints.

Reference
---------
"""

# Stdlib:
import argparse
import json
import os

import logging
LOGGER = logging.getLogger(__name__)

# Internal:
from bifrost import __version__
from bifrost.experiment import (
    MIN_ABLATION_SEEDS, MIN_BENCH_INSTANCES, VARIANTS,
    format_bench, resolve_variant, run_ablation, run_timing_bench, variant_planner
)
from bifrost.geometry.regions import regions_to_records
from bifrost.logutil import create_logger, verbosity_level
from bifrost.perception.heightmap import dump_heightmap, read_replay
from bifrost.planner import OPTIMAL, PlannerError
from bifrost.planner.branch import solve
from bifrost.planner.checker import InvariantViolation, assert_solution
from bifrost.planner.serialize import dump_solution, load_problem
from bifrost.plot import emit_plots
from bifrost.session import DEFAULT_CONFIG, Session, load_config
from bifrost.sim import ScenarioError
from bifrost.sim.scenario import load_scenario
from bifrost.sim.walker import step_closed_loop


EXIT_OK, EXIT_INPUT, EXIT_SCENARIO, EXIT_INVARIANT = 0, 1, 2, 3


###########################################################################
#                              Subcommands                                #
###########################################################################


def cmd_plan(args, config):
    problem = load_problem(args.problem)
    solution = solve(problem)
    if solution.status == OPTIMAL:
        assert_solution(problem, solution)

    path = os.path.join(args.out_dir, 'solution.json')
    dump_solution(solution, path)
    if solution.found:
        print('{}: objective {:.6f}, T1 = {:.3f} s, regions {}'.format(
            solution.status, solution.objective,
            solution.duration(problem.config), list(solution.assignment)
        ))
    else:
        print('{}: no plan'.format(solution.status))
    LOGGER.info('solution written to {}'.format(path))


def cmd_simulate(args, config):
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)

    planner = variant_planner(resolve_variant(args.variant), scenario.config(config))
    log = step_closed_loop(scenario, planner=planner, horizon=args.horizon, config=config)

    log.write_csv(os.path.join(args.out_dir, 'trajectory.csv'))
    emit_plots(log, args.out_dir, scenario.build_field())
    print('{} after {} steps at t = {:.3f} s, mean velocity {:.3f} m/s'.format(
        log.outcome, len(log.steps), log.end_time, log.mean_velocity
    ))


def cmd_perceive(args, config):
    session = Session(os.path.splitext(os.path.basename(args.replay))[0], config)
    for frame_id, pose, cloud in read_replay(args.replay):
        session.perceive([cloud], pose)
        LOGGER.info('frame {}: {} points'.format(frame_id, len(cloud)))

    regions = session.regions()
    dump_heightmap(session.heightmap, os.path.join(args.out_dir, 'heightmap.txt'))
    with open(os.path.join(args.out_dir, 'regions.json'), 'w') as handle:
        json.dump(regions_to_records(regions), handle, indent=2, sort_keys=True)
    print('{} observed cells, {} regions'.format(int(session.heightmap.observed.sum()), len(regions)))


def cmd_ablate(args, config):
    if args.seeds < MIN_ABLATION_SEEDS:
        raise ScenarioError('an ablation needs at least {} seeds (got {})'.format(
            MIN_ABLATION_SEEDS, args.seeds
        ))

    scenario = load_scenario(args.scenario)
    first = scenario.seed if args.seed is None else args.seed
    variants = [args.variant] if args.variant else list(VARIANTS)
    _, table = run_ablation(
        scenario, list(range(first, first + args.seeds)), variants, config,
        args.horizon, args.out_dir, args.workers
    )
    for row in table:
        print('{variant:<18} success {success_rate:.2f}  falls {fall:>3}  v {mean_velocity:.3f} m/s'.format(**row))


def cmd_bench(args, config):
    if args.instances < MIN_BENCH_INSTANCES:
        raise ScenarioError('the benchmark needs at least {} instances (got {})'.format(
            MIN_BENCH_INSTANCES, args.instances
        ))
    report = run_timing_bench(
        args.instances, args.steps, args.regions, args.seed or 0, args.out_dir
    )
    print(format_bench(report))


###########################################################################
#                                Parsing                                  #
###########################################################################


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=None, help='Seed (overrides the scenario seed)')
    common.add_argument('--out-dir', default='bifrost-out', help='Directory for all output files')
    common.add_argument('--config', default=None, help='YAML file with config overrides')
    common.add_argument('-v', '--verbose', action='count', default=0, help='More log output (-vv for debug)')

    parser = argparse.ArgumentParser(
        prog='bifrost', description='Perceptive footstep planning on stepping stones'
    )
    parser.add_argument('--version', action='version', version='%(prog)s ' + __version__)
    commands = parser.add_subparsers(dest='command')
    commands.required = True

    plan = commands.add_parser('plan', parents=[common], help='Solve one planner problem file')
    plan.add_argument('problem', help='Problem file (json)')
    plan.set_defaults(func=cmd_plan)

    simulate = commands.add_parser('simulate', parents=[common], help='Run one closed-loop episode')
    simulate.add_argument('scenario', help='Scenario file (yaml)')
    simulate.add_argument('--variant', default='A_full', choices=list(VARIANTS))
    simulate.add_argument('--horizon', type=float, default=None, help='Simulated seconds until timeout')
    simulate.set_defaults(func=cmd_simulate)

    perceive = commands.add_parser('perceive', parents=[common], help='Replay point clouds into a heightmap')
    perceive.add_argument('replay', help='Replay file with "x y z frame_id" lines')
    perceive.set_defaults(func=cmd_perceive)

    ablate = commands.add_parser('ablate', parents=[common], help='Compare the planner variants')
    ablate.add_argument('scenario', help='Scenario file (yaml)')
    ablate.add_argument('--seeds', type=int, default=30, help='Number of consecutive seeds')
    ablate.add_argument('--variant', default=None, choices=list(VARIANTS), help='Only this variant')
    ablate.add_argument('--horizon', type=float, default=None)
    ablate.add_argument('--workers', type=int, default=None, help='Worker processes')
    ablate.set_defaults(func=cmd_ablate)

    bench = commands.add_parser('bench', parents=[common], help='Time the planner on random problems')
    bench.add_argument('--instances', type=int, default=MIN_BENCH_INSTANCES)
    bench.add_argument('--steps', type=int, default=4, help='Preview length N')
    bench.add_argument('--regions', type=int, default=8, help='Regions per problem')
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)

    os.makedirs(args.out_dir, exist_ok=True)
    create_logger(
        None, log_file=os.path.join(args.out_dir, 'bifrost.log'),
        verbosity=verbosity_level(args.verbose)
    )

    try:
        config = DEFAULT_CONFIG if args.config is None else load_config(args.config)
        args.func(args, config)
    except ScenarioError as err:
        LOGGER.error('scenario error: {}'.format(err))
        return EXIT_SCENARIO
    except InvariantViolation as err:
        LOGGER.error('planner returned an invalid solution: {}'.format(err))
        return EXIT_INVARIANT
    except (OSError, KeyError, PlannerError, ValueError) as err:
        LOGGER.error('{}: {}'.format(type(err).__name__, err))
        return EXIT_INPUT
    return EXIT_OK


###########################################################################
#                                  Tests                                  #
###########################################################################

if __name__ == '__main__':
    import tempfile
    import unittest

    from bifrost.sim.scenario import Scenario, dump_scenario
    from bifrost.planner.serialize import dump_problem
    from bifrost.testing import random_problem

    import numpy as np

    class CliTests(unittest.TestCase):
        def setUp(self):
            self.tmp = tempfile.TemporaryDirectory()
            self.out = os.path.join(self.tmp.name, 'out')

        def tearDown(self):
            self.tmp.cleanup()

        def path(self, name):
            return os.path.join(self.tmp.name, name)

        def test_plan(self):
            dump_problem(random_problem(np.random.default_rng(1), N=2, M=2), self.path('problem.json'))
            self.assertEqual(main(['plan', self.path('problem.json'), '--out-dir', self.out]), EXIT_OK)
            self.assertTrue(os.path.exists(os.path.join(self.out, 'solution.json')))

        def test_simulate(self):
            scenario = Scenario(name='flat', field={'family': 'flat'}, sim={'terrain_source': 'ground_truth'})
            dump_scenario(scenario, self.path('flat.yml'))
            argv = ['simulate', self.path('flat.yml'), '--horizon', '0.6', '--out-dir', self.out]
            self.assertEqual(main(argv), EXIT_OK)
            with open(os.path.join(self.out, 'trajectory.csv')) as handle:
                first = handle.read()
            self.assertEqual(main(argv), EXIT_OK)
            with open(os.path.join(self.out, 'trajectory.csv')) as handle:
                self.assertEqual(handle.read(), first)
            self.assertTrue(os.path.exists(os.path.join(self.out, 'footprints.csv')))

        def test_bad_scenario(self):
            with open(self.path('bad.yml'), 'w') as handle:
                handle.write('field: {family: lava}\n')
            self.assertEqual(main(['simulate', self.path('bad.yml'), '--out-dir', self.out]), EXIT_SCENARIO)

        def test_too_few_seeds(self):
            dump_scenario(Scenario(), self.path('s.yml'))
            argv = ['ablate', self.path('s.yml'), '--seeds', '3', '--out-dir', self.out]
            self.assertEqual(main(argv), EXIT_SCENARIO)

        def test_unknown_config_key(self):
            with open(self.path('config.yml'), 'w') as handle:
                handle.write('planner_horizn: 3\n')
            argv = ['bench', '--config', self.path('config.yml'), '--out-dir', self.out]
            self.assertEqual(main(argv), EXIT_INPUT)

        def test_perceive(self):
            with open(self.path('replay.txt'), 'w') as handle:
                handle.write('# pose 0 0.0 0.0 0.0 0.0\n')
                for x in np.arange(0.2, 0.6, 0.01):
                    for y in np.arange(-0.2, 0.2, 0.01):
                        handle.write('{:.3f} {:.3f} 0.0 0\n'.format(x, y))
            self.assertEqual(main(['perceive', self.path('replay.txt'), '--out-dir', self.out]), EXIT_OK)
            with open(os.path.join(self.out, 'regions.json')) as handle:
                self.assertIsInstance(json.load(handle), list)
            with open(os.path.join(self.out, 'heightmap.txt')) as handle:
                self.assertEqual(handle.readline().split()[:2], ['120', '80'])

    unittest.main()
