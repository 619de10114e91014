#!/usr/bin/env python
# encoding: utf-8

"""
.. currentmodule:: bifrost.planner.serialize

Overview
--------

Plain-text (json) records of planner problems and solutions.

A problem file looks like this::

    {
        "config": {"N": 4, "T_nom": 0.5, ...},
        "z1": [0.12, -0.05],
        "p1": [0.0, 0.0],
        "ell": 0,
        "goal": [1.5, 0.0],
        "sigma_floor": null,
        "fixed_assignment": null,
        "regions": [{"id": 0, "vertices": [...], "A": [...], "b": [...]}]
    }

Config keys that are missing fall back to the :class:`PlannerConfig`
defaults, so hand written problem files can stay short.

Reference
---------
"""

# Stdlib:
import json
import math

# External:
import numpy as np

# Internal:
from bifrost.geometry.regions import regions_from_records, regions_to_records
from bifrost.planner import PlannerConfig, PlannerProblem, PlannerSolution


def _listify(value):
    if value is None:
        return None
    return np.asarray(value).tolist()


def _float(value):
    'json has no infinity; map it to None.'
    return None if value is None or not math.isfinite(value) else float(value)


def config_to_record(config):
    record = config._asdict()
    record['goal'] = list(config.goal)
    record['w_z'] = list(config.w_z) if isinstance(config.w_z, tuple) else config.w_z
    return record


def config_from_record(record):
    unknown = set(record) - set(PlannerConfig._fields)
    if unknown:
        raise KeyError('unknown planner config keys: {}'.format(', '.join(sorted(unknown))))
    return PlannerConfig(**record)


def problem_to_record(problem):
    return {
        'config': config_to_record(problem.config),
        'z1': _listify(problem.z1),
        'p1': _listify(problem.p1),
        'ell': problem.ell,
        'goal': _listify(problem.goal),
        'sigma_floor': problem.sigma_floor,
        'fixed_assignment': _listify(problem.fixed_assignment),
        'regions': regions_to_records(problem.regions)
    }


def problem_from_record(record):
    return PlannerProblem(
        config_from_record(record.get('config', {})),
        record['z1'], record['p1'], record['ell'],
        regions_from_records(record['regions']),
        fixed_assignment=record.get('fixed_assignment'),
        goal=record.get('goal'),
        sigma_floor=record.get('sigma_floor')
    )


def solution_to_record(solution):
    record = {
        'status': solution.status,
        'objective': _float(solution.objective),
        'footholds': _listify(solution.footholds),
        'dcm': _listify(solution.dcm),
        'sigma1': solution.sigma1,
        'assignment': _listify(solution.assignment),
        'delta': _listify(solution.delta),
        'slacks': _listify(solution.slacks),
        'relaxed_rows': list(solution.relaxed_rows),
        'solve_stats': dict(solution.solve_stats)
    }
    record['solve_stats']['gap'] = _float(record['solve_stats'].get('gap'))
    return record


def solution_from_record(record):
    def array(key, dtype=float, width=2):
        value = record.get(key)
        return None if value is None else np.array(value, dtype=dtype).reshape(-1, width)

    delta = record.get('delta')

    stats = dict(record.get('solve_stats', {}))
    if 'gap' in stats and stats['gap'] is None:
        stats['gap'] = math.inf

    objective = record.get('objective')
    assignment = record.get('assignment')
    return PlannerSolution(
        record['status'],
        math.inf if objective is None else objective,
        array('footholds'), array('dcm'), record.get('sigma1'),
        None if assignment is None else tuple(assignment),
        None if delta is None else array('delta', int, len(delta[0])), array('slacks'),
        tuple(record.get('relaxed_rows', ())), stats
    )


def dump_problem(problem, path):
    with open(path, 'w') as handle:
        json.dump(problem_to_record(problem), handle, indent=2, sort_keys=True)


def load_problem(path):
    with open(path, 'r') as handle:
        return problem_from_record(json.load(handle))


def dump_solution(solution, path):
    with open(path, 'w') as handle:
        json.dump(solution_to_record(solution), handle, indent=2, sort_keys=True)


def load_solution(path):
    with open(path, 'r') as handle:
        return solution_from_record(json.load(handle))


if __name__ == '__main__':
    import os
    import tempfile
    import unittest

    from bifrost.geometry import rectangle
    from bifrost.geometry.hull import to_halfspaces
    from bifrost.planner.branch import solve

    class RecordTests(unittest.TestCase):
        def setUp(self):
            regions = [
                to_halfspaces(rectangle(-0.2, 0.2, -0.3, 0.3), 0),
                to_halfspaces(rectangle(0.3, 2.0, -0.8, 0.8), 5)
            ]
            self.problem = PlannerProblem(
                PlannerConfig(N=3, w_z=(1.0, 2.0, 3.0)), (0.1, -0.06), (0, 0), 0, regions,
                goal=(1.2, 0.1), sigma_floor=3.0
            )

        def test_problem_file(self):
            with tempfile.TemporaryDirectory() as tmp:
                path = os.path.join(tmp, 'problem.json')
                dump_problem(self.problem, path)
                back = load_problem(path)

            self.assertEqual(back.config, self.problem.config)
            self.assertTrue(np.array_equal(back.z1, self.problem.z1))
            self.assertTrue(np.array_equal(back.goal, self.problem.goal))
            self.assertEqual(back.regions, self.problem.regions)
            self.assertEqual(back.sigma_floor, 3.0)
            self.assertIsNone(back.fixed_assignment)

        def test_short_config(self):
            record = problem_to_record(self.problem)
            record['config'] = {'N': 2}
            self.assertEqual(problem_from_record(record).config, PlannerConfig(N=2))

        def test_unknown_config_key(self):
            with self.assertRaises(KeyError):
                config_from_record({'horizon': 4})

        def test_solution_file(self):
            solution = solve(self.problem)
            with tempfile.TemporaryDirectory() as tmp:
                path = os.path.join(tmp, 'solution.json')
                dump_solution(solution, path)
                back = load_solution(path)

            self.assertEqual(back.status, solution.status)
            self.assertEqual(back.assignment, solution.assignment)
            self.assertEqual(back.objective, solution.objective)
            self.assertTrue(np.array_equal(back.footholds, solution.footholds))
            self.assertTrue(np.array_equal(back.delta, solution.delta))
            self.assertEqual(back.solve_stats['nodes'], solution.solve_stats['nodes'])

        def test_infeasible_solution(self):
            from bifrost.planner import INFEASIBLE, empty_solution
            record = json.loads(json.dumps(solution_to_record(empty_solution(INFEASIBLE))))
            back = solution_from_record(record)
            self.assertEqual(back.objective, math.inf)
            self.assertFalse(back.found)

    unittest.main()
