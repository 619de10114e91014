#!/usr/bin/env python
# encoding: utf-8

"""
Overview
--------

Batch experiments on top of the closed loop and the planner.

    * :func:`run_ablation` walks every seed with every planner variant on
      the very same field and pushes.
    * :func:`run_push_sweep` pushes the walker mid-step with growing
      magnitudes, once with in-step replanning and once without.
    * :func:`run_timing_bench` times the planner on random problems.

The variants:

    ==================== =============================================
    ``A_full``           the planner as configured
    ``B_fixed_duration`` step duration pinned to ``T_nom``
    ``C_short_preview``  only two previewed steps
    ``D_no_viability``   no lateral corridor, capture or growth bound
    ==================== =============================================

Episodes run in a :class:`concurrent.futures.ProcessPoolExecutor`; each
episode on its own is single threaded and deterministic. Outcome files
(``ablation.csv``, ``push_sweep.csv``) therefore only depend on the
command; wall clock numbers go to separate files.

Reference
---------
"""

# Stdlib:
import math
import os
import time

from collections import Counter, OrderedDict, namedtuple
from concurrent.futures import ProcessPoolExecutor

import logging
LOGGER = logging.getLogger(__name__)

# External:
import numpy as np

# Internal:
from bifrost.helper import RunningMean
from bifrost.planner import OPTIMAL, PlannerConfig
from bifrost.planner.branch import solve
from bifrost.plot import write_csv
from bifrost.session import DEFAULT_CONFIG
from bifrost.sim import FALL, GOAL_REACHED, OUTCOMES
from bifrost.sim.scenario import Disturbance
from bifrost.sim.walker import step_closed_loop
from bifrost.testing import random_problem


AblationVariant = namedtuple('AblationVariant', ['id', 'overrides'])

VARIANTS = OrderedDict((variant.id, variant) for variant in [
    AblationVariant('A_full', {}),
    AblationVariant('B_fixed_duration', {'fixed_duration': True}),
    AblationVariant('C_short_preview', {'N': 2}),
    AblationVariant('D_no_viability', {'viability': False})
])

# Ablations below this many seeds say nothing.
MIN_ABLATION_SEEDS = 10

# The timing benchmark needs a sample this large for its range.
MIN_BENCH_INSTANCES = 100

PUSH_MAGNITUDES = (0.02, 0.04, 0.06, 0.08, 0.10, 0.12)

# Middle of the second step at nominal timing.
PUSH_TIME = 0.75


RunSummary = namedtuple('RunSummary', [
    'variant', 'seed', 'outcome', 'steps', 'mean_velocity',
    'solve_stats',   # dict: mean, sd, min, max, count (microseconds)
    'digest'         # scenario digest; equal for all variants of a seed
])

PushResult = namedtuple('PushResult', [
    'seed', 'magnitude', 'inplace', 'outcome', 'steps',
    'pushed_step',       # index of the step the push hit, None if never reached
    'pushed_duration'    # duration that step ended up with
])

BenchReport = namedtuple('BenchReport', [
    'instances', 'N', 'M', 'mean', 'sd', 'median', 'min', 'max', 'statuses',
    'median_nodes'   # median branch-and-bound node count
])


def resolve_variant(name):
    """Look up a variant by id or by its letter (``'B'``).

    :raises KeyError: for unknown names.
    """
    for variant in VARIANTS.values():
        if name in (variant.id, variant.id.split('_', 1)[0]):
            return variant
    raise KeyError('unknown variant {!r} (expected one of {})'.format(name, ', '.join(VARIANTS)))


def variant_planner(variant, config):
    """The :class:`PlannerConfig` of ``variant`` over a flat ``config``."""
    return PlannerConfig.from_config(config)._replace(**variant.overrides).validate()


def _map(function, jobs, workers):
    if workers == 1:
        return [function(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(function, jobs))


###########################################################################
#                                Ablation                                 #
###########################################################################


def run_episode(job):
    """Run one (scenario, variant, config, horizon) job.

    Module level, so that worker processes can unpickle it.

    :returns: A :class:`RunSummary`.
    """
    scenario, variant, config, horizon = job
    merged = scenario.config(config)
    log = step_closed_loop(
        scenario, planner=variant_planner(variant, merged), horizon=horizon, config=config
    )

    stats = RunningMean()
    for value in log.solve_us:
        stats.add(value)

    LOGGER.info('{} seed {}: {} after {} steps'.format(
        variant.id, scenario.seed, log.outcome, len(log.steps)
    ))
    return RunSummary(
        variant.id, scenario.seed, log.outcome, len(log.steps), log.mean_velocity,
        stats.as_dict(), scenario.digest()
    )


def compare_variants(summaries):
    """Success rate, falls and mean velocity per variant.

    :returns: list of dicts in variant order.
    """
    table = []
    for variant in VARIANTS:
        runs = [run for run in summaries if run.variant == variant]
        if not runs:
            continue
        outcomes = Counter(run.outcome for run in runs)
        row = {
            'variant': variant,
            'runs': len(runs),
            'success_rate': outcomes[GOAL_REACHED] / len(runs),
            'mean_velocity': sum(run.mean_velocity for run in runs) / len(runs)
        }
        row.update((outcome, outcomes[outcome]) for outcome in OUTCOMES)
        table.append(row)
    return table


def run_ablation(scenario, seeds, variants=None, config=None, horizon=None,
                 out_dir=None, workers=None):
    """Walk every seed with every variant.

    The field and the pushes of a seed are the same for all variants, the
    scenario digest in each summary proves it.

    :param scenario: Base :class:`Scenario`; its seed is replaced per run.
    :param variants: Variant ids, all four by default.
    :param out_dir: If given, ``ablation.csv``, ``ablation_rates.csv`` and
                    ``ablation_timing.csv`` are written there.
    :param workers: Process count, 1 runs in this process.
    :returns: (list of :class:`RunSummary`, comparison table)
    """
    config = DEFAULT_CONFIG if config is None else config
    chosen = [resolve_variant(name) for name in (variants or VARIANTS)]
    jobs = [
        (scenario.with_seed(seed), variant, config, horizon)
        for seed in seeds for variant in chosen
    ]

    LOGGER.info('ablation: {} seeds x {} variants'.format(len(seeds), len(chosen)))
    summaries = _map(run_episode, jobs, workers)

    digests = {}
    for run in summaries:
        if digests.setdefault(run.seed, run.digest) != run.digest:
            raise AssertionError('seed {} ran on different scenarios'.format(run.seed))

    table = compare_variants(summaries)
    for row in table:
        LOGGER.info('{variant}: success {success_rate:.2f} over {runs} runs'.format(**row))

    if out_dir is not None:
        write_ablation(summaries, table, out_dir)
    return summaries, table


def write_ablation(summaries, table, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    outcome_rows, timing_rows = [], []
    for run in summaries:
        outcome_rows.append({
            'variant': run.variant, 'seed': run.seed, 'outcome': run.outcome,
            'steps': run.steps, 'mean_velocity': '{:.6f}'.format(run.mean_velocity),
            'digest': run.digest
        })
        timing = {'variant': run.variant, 'seed': run.seed}
        timing.update(('solve_' + key, value) for key, value in run.solve_stats.items())
        timing_rows.append(timing)

    write_csv(
        os.path.join(out_dir, 'ablation.csv'), outcome_rows,
        ['variant', 'seed', 'outcome', 'steps', 'mean_velocity', 'digest']
    )
    write_csv(
        os.path.join(out_dir, 'ablation_rates.csv'), table,
        ['variant', 'runs', 'success_rate', 'mean_velocity'] + list(OUTCOMES)
    )
    write_csv(
        os.path.join(out_dir, 'ablation_timing.csv'), timing_rows,
        ['variant', 'seed', 'solve_mean', 'solve_sd', 'solve_min', 'solve_max', 'solve_count']
    )


###########################################################################
#                               Push Sweep                                #
###########################################################################


def _push_episode(job):
    scenario, inplace, config, horizon, push_time = job
    log = step_closed_loop(scenario, horizon=horizon, config=config)

    pushed = None
    for step in log.steps:
        if step.start <= push_time < step.start + step.duration:
            pushed = step
            break

    magnitude = math.hypot(*scenario.disturbances[0].impulse)
    return PushResult(
        scenario.seed, magnitude, inplace, log.outcome, len(log.steps),
        None if pushed is None else pushed.index,
        None if pushed is None else pushed.duration
    )


def push_scenario(scenario, seed, magnitude, inplace, push_time=PUSH_TIME):
    'A forward push of ``magnitude`` at ``push_time`` on top of ``scenario``.'
    sim = dict(scenario.sim, inplace_replan=bool(inplace))
    return scenario.with_seed(seed)._replace(
        sim=sim, disturbances=(Disturbance(push_time, (magnitude, 0.0)), )
    )


def run_push_sweep(scenario, seeds, magnitudes=PUSH_MAGNITUDES, config=None, horizon=None,
                   push_time=PUSH_TIME, out_dir=None, workers=None):
    """Push once per episode, with and without in-step replanning.

    :returns: list of :class:`PushResult`; written to ``push_sweep.csv``
              if ``out_dir`` is given.
    """
    config = DEFAULT_CONFIG if config is None else config
    jobs = [
        (push_scenario(scenario, seed, magnitude, inplace, push_time), inplace, config, horizon, push_time)
        for seed in seeds for magnitude in magnitudes for inplace in (True, False)
    ]
    results = _map(_push_episode, jobs, workers)

    falls = Counter((result.inplace, result.outcome == FALL) for result in results)
    LOGGER.info('push sweep: {} falls with in-step replanning, {} without'.format(
        falls[(True, True)], falls[(False, True)]
    ))

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_csv(
            os.path.join(out_dir, 'push_sweep.csv'),
            [dict(result._asdict(), pushed_duration='' if result.pushed_duration is None
                  else '{:.6f}'.format(result.pushed_duration)) for result in results],
            list(PushResult._fields)
        )
    return results


###########################################################################
#                              Timing Bench                               #
###########################################################################


def run_timing_bench(instances=MIN_BENCH_INSTANCES, N=4, M_max=8, seed=0, out_dir=None):
    """Build and solve random problems and time them.

    Every instance has ``N`` steps and ``M_max`` regions.

    :returns: A :class:`BenchReport`, times in milliseconds.
    """
    rng = np.random.default_rng(seed)
    config = PlannerConfig(N=N, M_max=M_max)

    times, nodes, rows, statuses = [], [], [], Counter()
    for idx in range(instances):
        problem = random_problem(rng, N=N, M=M_max, config=config)
        started = time.perf_counter()
        solution = solve(problem)
        elapsed = (time.perf_counter() - started) * 1e3

        times.append(elapsed)
        nodes.append(solution.solve_stats.get('nodes', 0))
        statuses[solution.status] += 1
        rows.append({
            'instance': idx, 'N': N, 'M': M_max, 'status': solution.status,
            'nodes': solution.solve_stats.get('nodes', 0), 'wall_ms': '{:.3f}'.format(elapsed)
        })

    times = np.array(times)
    report = BenchReport(
        instances, N, M_max, float(times.mean()), float(times.std(ddof=1)) if instances > 1 else 0.0,
        float(np.median(times)), float(times.min()), float(times.max()), dict(statuses),
        float(np.median(nodes))
    )
    LOGGER.info(format_bench(report))

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_csv(
            os.path.join(out_dir, 'timing.csv'), rows,
            ['instance', 'N', 'M', 'status', 'nodes', 'wall_ms'], ()
        )
    return report


def format_bench(report):
    return 'N={} M={}: {:.1f} ms (SD = {:.1f} ms, median {:.1f} ms), range [{:.0f}, {:.0f}] ms, ' \
        '{}/{} optimal, median {:.0f} nodes'.format(
            report.N, report.M, report.mean, report.sd, report.median,
            report.min, report.max, report.statuses.get(OPTIMAL, 0), report.instances,
            report.median_nodes
        )


###########################################################################
#                                  Tests                                  #
###########################################################################

if __name__ == '__main__':
    import csv
    import tempfile
    import unittest

    from bifrost.sim.scenario import Scenario

    FLAT = Scenario(name='flat', field={'family': 'flat'}, sim={'terrain_source': 'ground_truth'})

    class VariantTests(unittest.TestCase):
        def test_resolve(self):
            self.assertEqual(resolve_variant('C').id, 'C_short_preview')
            self.assertEqual(resolve_variant('D_no_viability').overrides, {'viability': False})
            with self.assertRaises(KeyError):
                resolve_variant('E')

        def test_planner(self):
            planner = variant_planner(VARIANTS['B_fixed_duration'], DEFAULT_CONFIG)
            self.assertTrue(planner.fixed_duration)
            self.assertEqual(variant_planner(VARIANTS['C_short_preview'], DEFAULT_CONFIG).N, 2)
            self.assertEqual(variant_planner(VARIANTS['A_full'], DEFAULT_CONFIG), PlannerConfig.from_config(DEFAULT_CONFIG))

    class AblationTests(unittest.TestCase):
        def test_plumbing(self):
            with tempfile.TemporaryDirectory() as tmp:
                summaries, table = run_ablation(FLAT, [3], horizon=0.6, out_dir=tmp, workers=1)
                with open(os.path.join(tmp, 'ablation.csv')) as handle:
                    first = handle.read()
                run_ablation(FLAT, [3], horizon=0.6, out_dir=tmp, workers=1)
                with open(os.path.join(tmp, 'ablation.csv')) as handle:
                    self.assertEqual(handle.read(), first)

                rows = list(csv.DictReader(line for line in first.splitlines() if not line.startswith('#')))

            self.assertEqual([run.variant for run in summaries], list(VARIANTS))
            self.assertEqual(len({run.digest for run in summaries}), 1)
            self.assertEqual(len(rows), 4)
            self.assertEqual([row['variant'] for row in table], list(VARIANTS))
            for run in summaries:
                self.assertIn(run.outcome, OUTCOMES)
                self.assertGreaterEqual(run.solve_stats['count'], 1)

        def test_compare(self):
            runs = [
                RunSummary('A_full', 0, GOAL_REACHED, 10, 1.0, {}, 'x'),
                RunSummary('A_full', 1, FALL, 3, 0.5, {}, 'y'),
                RunSummary('B_fixed_duration', 0, FALL, 2, 0.25, {}, 'x')
            ]
            table = compare_variants(runs)
            self.assertEqual(len(table), 2)
            self.assertAlmostEqual(table[0]['success_rate'], 0.5)
            self.assertAlmostEqual(table[0]['mean_velocity'], 0.75)
            self.assertEqual(table[1][FALL], 1)

    class PushSweepTests(unittest.TestCase):
        def test_scenario(self):
            pushed = push_scenario(FLAT, 4, 0.06, False)
            self.assertEqual(pushed.seed, 4)
            self.assertEqual(pushed.sim['inplace_replan'], False)
            self.assertEqual(pushed.disturbances[0].impulse, (0.06, 0.0))

        def test_small_sweep(self):
            results = run_push_sweep(FLAT, [0], magnitudes=(0.04, ), horizon=1.5, workers=1)
            self.assertEqual([result.inplace for result in results], [True, False])
            for result in results:
                self.assertNotEqual(result.outcome, FALL)
                self.assertIsNotNone(result.pushed_step)
                self.assertAlmostEqual(result.magnitude, 0.04)

    class BenchTests(unittest.TestCase):
        def test_small_bench(self):
            with tempfile.TemporaryDirectory() as tmp:
                report = run_timing_bench(5, N=2, M_max=2, out_dir=tmp)
                with open(os.path.join(tmp, 'timing.csv')) as handle:
                    self.assertEqual(len(handle.read().splitlines()), 6)
            self.assertEqual(report.instances, 5)
            self.assertEqual(sum(report.statuses.values()), 5)
            self.assertLessEqual(report.min, report.median)
            self.assertLessEqual(report.median, report.max)
            self.assertRegex(format_bench(report), r'range \[\d+, \d+\] ms')

        def test_full_size_bench(self):
            # Full problem size on a small sample, loose wall-clock bound.
            report = run_timing_bench(20, N=4, M_max=8, seed=1)
            self.assertGreaterEqual(report.statuses.get(OPTIMAL, 0), 19, report.statuses)
            self.assertLessEqual(report.median_nodes, 200)
            self.assertLessEqual(report.median, 300.0, format_bench(report))

    unittest.main()
