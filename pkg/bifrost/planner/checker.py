#!/usr/bin/env python
# encoding: utf-8

"""
.. currentmodule:: bifrost.planner.checker

Overview
--------

Independent re-evaluation of planner solutions.

Nothing in here touches the model builder or the QP kernel; every
constraint group is recomputed straight from the problem data and the
reported plan. :func:`check_solution` returns a list of human readable
violations, :func:`assert_solution` raises :class:`InvariantViolation` if
that list is not empty.

Rows listed in ``solution.relaxed_rows`` are skipped, nothing else.

Reference
---------
"""

# Stdlib:
import math

# External:
import numpy as np


class InvariantViolation(AssertionError):
    'A solution reported as optimal violates one of its constraints.'


def _lam(config):
    return math.sqrt(config.g / config.z_c)


def _sign(k, ell):
    return (-1) ** (k + ell)


def cost_groups(problem, solution):
    """The three cost groups (DCM tracking, timing, stride), recomputed.

    :returns: Tuple ``(tracking, timing, stride)``.
    """
    cfg = problem.config
    lam = _lam(cfg)
    sigma_nom = math.exp(lam * cfg.T_nom)
    weights = cfg.w_z if isinstance(cfg.w_z, tuple) else [cfg.w_z] * cfg.N

    goals = np.broadcast_to(problem.goal, (cfg.N, 2))
    tracking = sum(
        weight * float(np.sum((solution.dcm[k] - goal) ** 2))
        for k, weight, goal in zip(range(1, cfg.N + 1), weights, goals)
    )
    timing = cfg.w_sigma * (solution.sigma1 - sigma_nom) ** 2

    stride = 0.0
    for k in range(1, cfg.N):
        step = solution.footholds[k] - solution.footholds[k - 1]
        s_x, s_y = step[0], _sign(k, problem.ell) * step[1]
        stride += cfg.w_x * (s_x - cfg.p_x_nom) ** 2 + cfg.w_y * (s_y - cfg.p_y_nom) ** 2
    return tracking, timing, stride


def check_solution(problem, solution, tol=1e-8):
    """Re-evaluate every constraint group of a solution.

    :param tol: Absolute tolerance on every row.
    :returns: List of violation descriptions (empty if the plan is valid).
    """
    if not solution.found:
        return []

    cfg, ell = problem.config, problem.ell
    N = cfg.N
    lam = _lam(cfg)
    sigma_nom = math.exp(lam * cfg.T_nom)
    sigma_min, sigma_max = math.exp(lam * cfg.T_min), math.exp(lam * cfg.T_max)
    radius = cfg.L_max / (sigma_min - 1.0) - cfg.delta_x
    p, z, sigma1 = np.asarray(solution.footholds), np.asarray(solution.dcm), solution.sigma1
    skip = set(solution.relaxed_rows)
    violations = []

    def expect(ok, text, *args):
        if not ok:
            violations.append(text.format(*args))

    # Data.
    expect(np.allclose(p[0], problem.p1, atol=tol), 'p1 {} is not the stance foot', p[0])
    expect(np.allclose(z[0], problem.z1, atol=tol), 'z1 {} is not the initial DCM', z[0])

    # Timing.
    expect(sigma_min - tol <= sigma1 <= sigma_max + tol, 'sigma1 {:.6f} outside [{:.6f}, {:.6f}]',
           sigma1, sigma_min, sigma_max)
    if cfg.fixed_duration:
        expect(abs(sigma1 - sigma_nom) <= tol, 'sigma1 {:.6f} is not nominal', sigma1)
    elif problem.sigma_floor is not None:
        floor = max(sigma_min, min(problem.sigma_floor, sigma_max))
        expect(sigma1 >= floor - tol, 'sigma1 {:.6f} below the replan floor {:.6f}', sigma1, floor)

    # Dynamics.
    for k in range(1, N + 1):
        gain = sigma1 if k == 1 else sigma_nom
        residual = np.max(np.abs(z[k] - gain * z[k - 1] - (1.0 - gain) * p[k - 1]))
        expect(residual <= tol, 'dynamics residual {:.3e} at step {}', residual, k)

    # Stride boxes.
    for k in range(1, N):
        s_x = p[k][0] - p[k - 1][0]
        s_y = _sign(k, ell) * (p[k][1] - p[k - 1][1])
        expect(cfg.L_min - tol <= s_x <= cfg.L_max + tol, 'stride length {:.4f} at step {}', s_x, k)
        expect(cfg.W_min - tol <= s_y <= cfg.W_max + tol, 'stride width {:.4f} at step {}', s_y, k)
        if solution.slacks is not None:
            expect(abs(solution.slacks[k - 1][0] - s_x) <= tol and abs(solution.slacks[k - 1][1] - s_y) <= tol,
                   'slack {} does not match the footholds', k)

    # Viability.
    if cfg.viability:
        for k in range(1, N + 1):
            lateral = _sign(k, ell) * (z[k - 1][1] - p[k - 1][1])
            if 'lateral[{}]'.format(k) not in skip:
                expect(lateral >= cfg.delta_y - tol, 'lateral corridor {:.4f} at step {}', lateral, k)

            offset = z[k - 1][0] - p[k - 1][0]
            if 'sagittal+[{}]'.format(k) not in skip:
                expect(offset <= radius + tol, 'sagittal offset {:.4f} at step {}', offset, k)
            if 'sagittal-[{}]'.format(k) not in skip:
                expect(-offset <= radius + tol, 'sagittal offset {:.4f} at step {}', offset, k)

        for k in range(1, N):
            growth = z[k][0] - z[k - 1][0]
            expect(growth <= cfg.L_max + tol, 'DCM growth {:.4f} at step {}', growth, k)

    # Regions.
    by_id = {region.id: region for region in problem.regions}
    delta = np.asarray(solution.delta)
    expect(delta.shape == (N, len(problem.regions)), 'assignment matrix has shape {}', delta.shape)
    expect(np.all((delta == 0) | (delta == 1)), 'assignment is not binary')
    expect(np.all(delta.sum(axis=1) == 1), 'not exactly one region per step')
    for k, rid in enumerate(solution.assignment, 1):
        region = by_id.get(rid)
        if region is None:
            violations.append('step {} assigned to unknown region {}'.format(k, rid))
            continue
        slack = region.b - region.A.dot(p[k - 1])
        expect(slack.min() >= -tol, 'foothold {} leaves region {} by {:.3e}', k, rid, -slack.min())
    if problem.fixed_assignment is not None:
        expect(tuple(solution.assignment[1:]) == problem.fixed_assignment, 'fixed assignment not honored')

    # Objective.
    total = sum(cost_groups(problem, solution))
    expect(abs(total - solution.objective) <= 1e-9 * max(1.0, abs(total)),
           'objective {:.12f} differs from the recomputed {:.12f}', solution.objective, total)
    return violations


def assert_solution(problem, solution, tol=1e-8):
    """Raise :class:`InvariantViolation` if :func:`check_solution` finds anything."""
    violations = check_solution(problem, solution, tol)
    if violations:
        raise InvariantViolation('{} violation(s): {}'.format(len(violations), '; '.join(violations)))


if __name__ == '__main__':
    import unittest

    from collections import Counter

    from bifrost.geometry import rectangle
    from bifrost.geometry.hull import to_halfspaces
    from bifrost.planner import INFEASIBLE, ITERATION_LIMIT, OPTIMAL, PlannerConfig, PlannerProblem
    from bifrost.planner.branch import solve
    from bifrost.testing import random_problem

    class CheckerTests(unittest.TestCase):
        def setUp(self):
            floor = to_halfspaces(rectangle(-0.5, 3.0, -1.5, 1.5), 0)
            self.problem = PlannerProblem(PlannerConfig(), (0.1, -0.06), (0, 0), 0, [floor])
            self.solution = solve(self.problem)

        def test_clean(self):
            self.assertEqual(check_solution(self.problem, self.solution), [])
            assert_solution(self.problem, self.solution)

        def test_moved_foothold(self):
            footholds = self.solution.footholds.copy()
            footholds[2, 0] += 0.01
            broken = self.solution._replace(footholds=footholds)
            violations = check_solution(self.problem, broken)
            self.assertTrue(any('dynamics' in text for text in violations))
            with self.assertRaises(InvariantViolation):
                assert_solution(self.problem, broken)

        def test_outside_region(self):
            small = to_halfspaces(rectangle(-0.1, 0.1, -0.1, 0.1), 0)
            problem = self.problem._replace(regions=[small])
            self.assertTrue(any('leaves region' in text for text in check_solution(problem, self.solution)))

        def test_sigma_out_of_bounds(self):
            broken = self.solution._replace(sigma1=50.0)
            self.assertTrue(any('sigma1' in text for text in check_solution(self.problem, broken)))

        def test_relaxed_rows_skipped(self):
            pushed = self.problem._replace(z1=np.array([0.1, -0.02]))
            solution = solve(pushed)
            self.assertEqual(solution.relaxed_rows, ('lateral[1]', ))
            self.assertEqual(check_solution(pushed, solution), [])

        def test_random_instances(self):
            # Every plan that is returned, optimal or not, must be clean.
            rng = np.random.default_rng(1000)
            statuses = Counter()
            for _ in range(1000):
                problem = random_problem(rng, N=4, M=int(rng.integers(1, 9)))
                solution = solve(problem)
                statuses[solution.status] += 1
                if solution.found:
                    self.assertIn(solution.status, (OPTIMAL, ITERATION_LIMIT))
                    self.assertEqual(check_solution(problem, solution), [])
                else:
                    self.assertIn(solution.status, (INFEASIBLE, ITERATION_LIMIT))

            self.assertEqual(sum(statuses.values()), 1000)
            self.assertGreater(statuses[OPTIMAL], 500)
            self.assertLessEqual(statuses[ITERATION_LIMIT], 50, dict(statuses))

        def test_stage_goals(self):
            goals = np.array([[0.5, 0.1], [1.0, -0.1], [1.5, 0.1], [2.0, -0.1]])
            problem = self.problem._replace(goal=goals)
            solution = solve(problem)
            self.assertEqual(check_solution(problem, solution), [])
            tracking = cost_groups(problem, solution)[0]
            expected = sum(10.0 * np.sum((solution.dcm[1:] - goals) ** 2, axis=1))
            self.assertAlmostEqual(tracking, expected, places=9)
            self.assertNotAlmostEqual(tracking, cost_groups(self.problem, solution)[0], places=3)

    unittest.main()
