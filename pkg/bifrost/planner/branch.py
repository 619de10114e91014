#!/usr/bin/env python
# encoding: utf-8

"""
.. currentmodule:: bifrost.planner.branch

Overview
--------

Branch-and-bound over the region binaries, and in-step replanning.

The search is depth-first:

    * Every node is the QP relaxation with some binaries fixed to 0 or 1,
      the others relaxed to ``[0, 1]``.
    * A node is pruned if its bound cannot beat the incumbent.
    * An integral relaxation is re-solved with the binaries fixed (and
      polished) and offered as incumbent.
    * Otherwise the most fractional binary is branched on (ties broken by
      step, then region column). Both children are solved right away; the
      search dives into the one with the lower bound (the ``delta = 1`` child
      on ties) and stacks the other.

Among assignments with equal objective (within ``TIE_TOL``) the
lexicographically smallest one (region columns of steps ``2 .. N`` in
problem order) wins. With positive stride and timing weights the
continuous optimum is unique, so all tying assignments share the same
footholds; the search uses this to resolve ties without enumerating them.

Every child relaxation is warm-started from its parent's primal point and
multipliers (see :func:`bifrost.planner.qp.solve_qp`), and the fixed
re-solve of an integral node from the node itself.

A relaxation or fixed re-solve that hits the QP iteration limit drops its
node. The search still finishes, but it can no longer prove anything: the
result is ``ITERATION_LIMIT`` with the best plan found (if any) and a gap
measured against the lowest bound among the dropped nodes' parents. It is
never reported as ``INFEASIBLE``.

Reference
---------
"""

# Stdlib:
import math
import time

from collections import namedtuple

import logging
LOGGER = logging.getLogger(__name__)

# External:
import numpy as np

# Internal:
from bifrost.dcm import backward_init, side_sign
from bifrost.planner import (
    INFEASIBLE, ITERATION_LIMIT, OPTIMAL,
    PlannerError, PlannerProblem, PlannerSolution, empty_solution
)
from bifrost.planner.model import build
from bifrost.planner.qp import solve_qp


# Objectives closer than this are treated as equal.
TIE_TOL = 1e-7

# Relaxed binaries this close to 0 or 1 count as integral.
INTEGRALITY_TOL = 1e-6

# Footholds this close to a region count as inside it for tie resolution.
MEMBERSHIP_TOL = 1e-7


_Node = namedtuple('_Node', ['lb', 'ub', 'result', 'node_id'])


class _Search:
    'State of one branch-and-bound run.'
    def __init__(self, problem, model, trace=None):
        self.problem, self.model, self.trace = problem, model, trace
        self.layout = model.layout
        self.columns = np.nonzero(model.binary)[0]
        self.budget = problem.config.node_budget

        self.nodes = self.qp_iterations = 0
        # Parent bounds of dropped nodes (-inf for the root).
        self.dropped = []
        self.best, self.best_key = None, (math.inf, ())

    ##########################
    #  Relaxations & Fixing  #
    ##########################

    def relax(self, lb, ub, parent=None):
        warm = None if parent is None else parent.result
        result = solve_qp(self.model, lb, ub, polish=False, warm=warm)
        self.nodes += 1
        self.qp_iterations += result.iterations
        if self.trace is not None:
            bound = result.objective if result.status == OPTIMAL else None
            self.trace.append((self.nodes, None if parent is None else parent.node_id, bound))

        if result.status == ITERATION_LIMIT:
            self.dropped.append(-math.inf if parent is None else parent.result.objective)
            LOGGER.warning('relaxation {} did not converge, node dropped'.format(self.nodes))
        if result.status != OPTIMAL:
            return None
        return _Node(lb, ub, result, self.nodes)

    def fixed_bounds(self, lb, ub, columns):
        'Bounds with every binary pinned to the region column of ``columns[k - 1]``.'
        lb, ub = lb.copy(), ub.copy()
        for k, column in enumerate(columns, 1):
            for j in range(self.layout.M):
                col = self.layout.delta(k, j)
                lb[col] = ub[col] = 1.0 if j == column else 0.0
        return lb, ub

    def solve_fixed(self, node, columns):
        lb, ub = self.fixed_bounds(node.lb, node.ub, columns)
        result = solve_qp(self.model, lb, ub, polish=True, warm=node.result)
        self.qp_iterations += result.iterations
        if result.status == ITERATION_LIMIT:
            self.dropped.append(node.result.objective)
            LOGGER.warning('fixed re-solve of node {} did not converge'.format(node.node_id))
        return result if result.status == OPTIMAL else None

    def columns_of(self, x):
        'Region column of every step under a (near) integral ``x``.'
        lay = self.layout
        return tuple(
            int(np.argmax([x[lay.delta(k, j)] for j in range(lay.M)]))
            for k in range(1, lay.N + 1)
        )

    def allowed(self, ub, k):
        return [j for j in range(self.layout.M) if ub[self.layout.delta(k, j)] > 0.5]

    def lex_min(self, lb, ub):
        'Smallest assignment (lexicographic) still possible below a node.'
        return tuple(min(self.allowed(ub, k)) for k in range(1, self.layout.N + 1))

    ######################
    #  Search Decisions  #
    ######################

    def improves(self, objective, columns):
        best_obj, best_cols = self.best_key
        if objective < best_obj - TIE_TOL:
            return True
        return objective <= best_obj + TIE_TOL and columns < best_cols

    def prunable(self, node):
        bound = node.result.objective
        best_obj, best_cols = self.best_key
        if bound > best_obj + TIE_TOL:
            return True
        return bound >= best_obj - TIE_TOL and self.lex_min(node.lb, node.ub) >= best_cols

    def branching_column(self, x):
        'Most fractional binary (first in (k, j) order on ties), or None.'
        values = x[self.columns]
        frac = np.minimum(values, 1.0 - values)
        if frac.size == 0 or frac.max() <= INTEGRALITY_TOL:
            return None
        return int(self.columns[np.nonzero(frac >= frac.max() - 1e-9)[0][0]])

    def settle(self, node):
        """Handle an integral relaxation: fix, polish, resolve ties, offer."""
        columns = self.columns_of(node.result.x)
        result = self.solve_fixed(node, columns)
        if result is None:
            return

        # Tying assignments share the footholds; take the smallest region
        # column still allowed at this node that contains each foothold.
        lay = self.layout
        smallest = [columns[0]]
        for k in range(2, lay.N + 1):
            foothold = result.x[list(lay.p(k))]
            inside = [
                j for j in self.allowed(node.ub, k)
                if self.problem.regions[j].contains(foothold, MEMBERSHIP_TOL)
            ]
            smallest.append(min(inside + [columns[k - 1]]))
        smallest = tuple(smallest)

        if smallest < columns:
            tied = self.solve_fixed(node, smallest)
            if tied is not None and tied.objective <= result.objective + TIE_TOL:
                result, columns = tied, smallest

        if self.improves(result.objective, columns):
            self.best, self.best_key = result, (result.objective, columns)
            LOGGER.debug('bnb: incumbent {:.6f} at node {}'.format(result.objective, node.node_id))

    def children(self, node, col):
        kids = []
        for value in (1.0, 0.0):
            lb, ub = node.lb.copy(), node.ub.copy()
            lb[col] = ub[col] = value
            child = self.relax(lb, ub, node)
            if child is not None:
                kids.append((child.result.objective, -value, child))

        # Stack order: the worse child first, so the better one is popped next.
        kids.sort(key=lambda item: (item[0], item[1]))
        if len(kids) == 2 and abs(kids[0][0] - kids[1][0]) <= 1e-9:
            kids.sort(key=lambda item: item[1])
        return [child for _, _, child in reversed(kids)]

    def gap(self, open_bounds):
        'Incumbent objective minus the lowest open bound (inf without incumbent).'
        best_obj = self.best_key[0]
        if not open_bounds or math.isinf(best_obj):
            return math.inf if math.isinf(best_obj) else 0.0
        return max(best_obj - min(open_bounds), 0.0)

    def run(self):
        'Run the search; returns (status, gap).'
        root = self.relax(self.model.lb.copy(), self.model.ub.copy())
        if root is None:
            return (ITERATION_LIMIT if self.dropped else INFEASIBLE), math.inf

        stack = [root]
        while stack:
            if self.nodes >= self.budget:
                LOGGER.warning('bnb: node budget of {} exhausted'.format(self.budget))
                open_bounds = [node.result.objective for node in stack] + self.dropped
                return ITERATION_LIMIT, self.gap(open_bounds)

            node = stack.pop()
            if self.prunable(node):
                continue

            col = self.branching_column(node.result.x)
            if col is None:
                self.settle(node)
            else:
                stack.extend(self.children(node, col))

        if self.dropped:
            LOGGER.warning('bnb: {} node(s) dropped, optimality not proven'.format(len(self.dropped)))
            return ITERATION_LIMIT, self.gap(self.dropped)
        if self.best is None:
            return INFEASIBLE, math.inf
        return OPTIMAL, 0.0


###########################################################################
#                               Front End                                 #
###########################################################################


def _solution(problem, model, result, status, relaxed, stats):
    decoded = model.decode(result.x, problem)
    return PlannerSolution(
        status, result.objective,
        decoded['footholds'], decoded['dcm'], decoded['sigma1'],
        decoded['assignment'], decoded['delta'], decoded['slacks'],
        tuple(relaxed), stats
    )


def solve(problem, trace=None):
    """Solve a planning problem to global optimality.

    :param problem: A :class:`bifrost.planner.PlannerProblem`.
    :param trace: Optional list; receives ``(node, parent, bound)`` per relaxation.
    :raises PlannerError: on invalid problems.
    :returns: A :class:`bifrost.planner.PlannerSolution`.
    """
    started = time.perf_counter()
    model = build(problem)

    if model.n_binary == 0:
        result = solve_qp(model)
        status, best = result.status, result
        gap = 0.0 if status == OPTIMAL else math.inf
        nodes, iterations = 1, result.iterations
        dropped = int(status == ITERATION_LIMIT)
    else:
        search = _Search(problem, model, trace)
        status, gap = search.run()
        best, nodes, iterations = search.best, search.nodes, search.qp_iterations
        dropped = len(search.dropped)

    stats = {
        'nodes': nodes,
        'qp_iterations': iterations,
        'wall_us': int(round((time.perf_counter() - started) * 1e6)),
        'gap': gap,
        'dropped': dropped
    }
    LOGGER.debug('solve: {} after {} nodes, {} qp iterations, {} us'.format(
        status, nodes, iterations, stats['wall_us']
    ))

    if best is None or best.x is None or status == INFEASIBLE:
        return empty_solution(status, model.relaxed_rows, stats)
    return _solution(problem, model, best, status, model.relaxed_rows, stats)


def replan_floor(t_elapsed, config):
    'Lower bound on sigma_1 that leaves ``replan_margin`` seconds of the step.'
    return config.params.sigma(t_elapsed + config.replan_margin)


def replan_problem(state, regions, config, xi_meas, replan_floor_enabled=True, goal=None):
    """The planning problem for replanning in the middle of a step.

    The initial DCM of the current step is obtained by propagating the
    measurement backward to the step start.

    :param state: :class:`bifrost.dcm.DcmState` of the current step.
    :param xi_meas: Measured instantaneous DCM (stance frame).
    :param replan_floor_enabled: Keep the remaining step duration above
                                 ``config.replan_margin``.
    :param goal: Optional goal override.
    :raises PlannerError: on inconsistent timing or invalid problems.
    """
    if not 0.0 <= state.t_elapsed <= state.T_current + 1e-9:
        raise PlannerError('elapsed time {} outside the current step [0, {}]'.format(
            state.t_elapsed, state.T_current
        ))

    z1 = backward_init(xi_meas, state.t_elapsed, state.p, config.params)
    floor = replan_floor(state.t_elapsed, config) if replan_floor_enabled else None
    return PlannerProblem(
        config, z1, state.p, side_sign(state.stance_side), regions,
        goal=goal, sigma_floor=floor
    )


def replan(state, regions, config, xi_meas, replan_floor_enabled=True, goal=None):
    """Replan in the middle of a step from a measured DCM.

    See :func:`replan_problem` for the parameters.

    :raises PlannerError: on inconsistent timing or invalid problems.
    """
    return solve(replan_problem(state, regions, config, xi_meas, replan_floor_enabled, goal))


if __name__ == '__main__':
    import sys
    import unittest

    from unittest import mock

    from bifrost.dcm import LEFT, DcmState, dcm_at
    from bifrost.geometry import rectangle
    from bifrost.geometry.hull import to_halfspaces
    from bifrost.planner import PlannerConfig
    from bifrost.planner.checker import check_solution, cost_groups
    from bifrost.planner.qp import QpResult
    from bifrost.testing import enumerate_assignments, nominal_dcm, random_problem

    REAL_SOLVE_QP = solve_qp

    def floor_region(region_id=0):
        return to_halfspaces(rectangle(-0.5, 3.0, -1.5, 1.5), region_id)

    class NominalTests(unittest.TestCase):
        def test_single_region_nominal_gait(self):
            cfg = PlannerConfig(w_z=0.0)
            problem = PlannerProblem(cfg, nominal_dcm(cfg, 0), (0, 0), 0, [floor_region()])
            solution = solve(problem)
            self.assertEqual(solution.status, OPTIMAL)
            self.assertAlmostEqual(solution.sigma1, cfg.sigma_nom, places=6)
            self.assertTrue(np.allclose(solution.slacks, [[0.5, 0.3]] * 3, atol=1e-6))
            self.assertAlmostEqual(solution.objective, 0.0, places=9)

        def test_single_region_matches_fixed(self):
            problem = PlannerProblem(PlannerConfig(), (0.1, -0.06), (0, 0), 0, [floor_region(4)])
            free = solve(problem)
            fixed = solve(problem._replace(fixed_assignment=(4, 4, 4)))
            self.assertEqual(free.assignment, (4, 4, 4, 4))
            self.assertAlmostEqual(free.objective, fixed.objective, places=7)
            self.assertEqual(check_solution(problem, free), [])

        def test_push_shortens_first_step(self):
            cfg = PlannerConfig()
            platform = to_halfspaces(rectangle(-0.15, 2.5, -1.0, 1.0), 0)
            far = to_halfspaces(rectangle(3.5, 3.8, -0.2, 0.2), 1)
            problem = PlannerProblem(cfg, (0.25, -0.06), (0, 0), 0, [platform, far])
            solution = solve(problem)
            self.assertEqual(solution.status, OPTIMAL)
            self.assertEqual(solution.assignment, (0, 0, 0, 0))

            # p2 <= L_max and z2 - p2 <= r bound sigma_1 from above.
            bound = (cfg.L_max + cfg.capture_radius) / 0.25
            self.assertLess(bound, cfg.sigma_nom)
            self.assertLessEqual(solution.sigma1, bound + 1e-7)
            self.assertEqual(check_solution(problem, solution), [])

        def test_infeasible_margin(self):
            cfg = PlannerConfig(delta_y=0.6)
            problem = PlannerProblem(cfg, (0.1, -0.06), (0, 0), 0, [floor_region()])
            solution = solve(problem)
            self.assertEqual(solution.status, INFEASIBLE)
            self.assertFalse(solution.found)

        def test_node_budget(self):
            rng = np.random.default_rng(11)
            problem = random_problem(rng, N=4, M=6)
            problem = problem._replace(config=problem.config._replace(node_budget=1))
            solution = solve(problem)
            self.assertIn(solution.status, (ITERATION_LIMIT, INFEASIBLE))
            self.assertLessEqual(solution.solve_stats['nodes'], 3)

    class OracleTests(unittest.TestCase):
        def test_enumeration_oracle(self):
            rng = np.random.default_rng(2024)
            for _ in range(200):
                problem = random_problem(rng, N=int(rng.integers(1, 4)), M=int(rng.integers(1, 4)))
                solution = solve(problem)
                objective, assignment = enumerate_assignments(problem)
                if assignment is None:
                    self.assertEqual(solution.status, INFEASIBLE)
                    continue

                self.assertEqual(solution.status, OPTIMAL)
                self.assertAlmostEqual(solution.objective, objective, delta=1e-6)
                self.assertEqual(solution.assignment, assignment)

        def test_checker_and_decomposition(self):
            rng = np.random.default_rng(99)
            for _ in range(25):
                problem = random_problem(rng, N=4, M=int(rng.integers(1, 6)))
                solution = solve(problem)
                if solution.status != OPTIMAL:
                    continue
                self.assertEqual(check_solution(problem, solution), [])
                self.assertAlmostEqual(sum(cost_groups(problem, solution)), solution.objective, delta=1e-9)

        def test_relaxation_monotone(self):
            rng = np.random.default_rng(7)
            for _ in range(10):
                trace = []
                solve(random_problem(rng, N=3, M=3), trace=trace)
                bounds = {node: bound for node, _, bound in trace}
                for node, parent, bound in trace:
                    if parent is None or bound is None or bounds[parent] is None:
                        continue
                    self.assertGreaterEqual(bound, bounds[parent] - 1e-7)

        def test_weight_scaling(self):
            rng = np.random.default_rng(3)
            for _ in range(10):
                problem = random_problem(rng, N=3, M=2)
                base = solve(problem)
                scaled = solve(problem._replace(config=problem.config.scaled(4.0)))
                self.assertEqual(base.status, scaled.status)
                if base.status == OPTIMAL:
                    self.assertTrue(np.allclose(base.footholds, scaled.footholds, atol=1e-7))
                    self.assertAlmostEqual(base.sigma1, scaled.sigma1, delta=1e-7)

    class UnconvergedTests(unittest.TestCase):
        'Relaxations that hit the QP iteration limit must never give a false verdict.'
        class Unconverged:
            'Stands in for solve_qp; the ``victim``-th call of one kind does not converge.'
            def __init__(self, victim, polished=False):
                self.victim, self.polished, self.calls = victim, polished, 0

            def __call__(self, model, lb=None, ub=None, polish=True, **kwargs):
                if polish == self.polished:
                    self.calls += 1
                    if self.calls == self.victim:
                        return QpResult(None, math.inf, ITERATION_LIMIT, 100, {}, {})
                return REAL_SOLVE_QP(model, lb, ub, polish=polish, **kwargs)

        def solve_with(self, problem, victim, polished=False):
            unconverged = self.Unconverged(victim, polished)
            with mock.patch.object(sys.modules[__name__], 'solve_qp', unconverged):
                return solve(problem), unconverged.calls >= victim

        def test_dropped_child(self):
            rng = np.random.default_rng(7)
            hit = 0
            for _ in range(40):
                problem = random_problem(rng, N=3, M=3)
                truth = solve(problem)
                for victim in (2, 3, 5):
                    solution, dropped = self.solve_with(problem, victim)
                    if not dropped:
                        continue
                    hit += 1
                    self.assertEqual(solution.status, ITERATION_LIMIT)
                    self.assertEqual(solution.solve_stats['dropped'], 1)
                    self.assertGreaterEqual(solution.solve_stats['gap'], 0.0)
                    if solution.found:
                        self.assertEqual(truth.status, OPTIMAL)
                        self.assertGreaterEqual(solution.objective, truth.objective - 1e-7)
                        self.assertEqual(check_solution(problem, solution), [])
            self.assertGreater(hit, 5)

        def test_dropped_root(self):
            problem = random_problem(np.random.default_rng(5), N=3, M=3)
            solution, dropped = self.solve_with(problem, 1)
            self.assertTrue(dropped)
            self.assertEqual(solution.status, ITERATION_LIMIT)
            self.assertFalse(solution.found)
            self.assertEqual(solution.solve_stats['gap'], math.inf)

        def test_fixed_resolve(self):
            problem = PlannerProblem(PlannerConfig(), (0.1, -0.06), (0, 0), 0, [floor_region()])
            solution, dropped = self.solve_with(problem, 1, polished=True)
            self.assertTrue(dropped)
            self.assertEqual(solution.status, ITERATION_LIMIT)
            self.assertFalse(solution.found)

        def test_gap_against_dropped_bound(self):
            search = _Search(mock.Mock(), mock.Mock(layout=None, binary=np.zeros(0, dtype=bool)))
            self.assertEqual(search.gap([1.0]), math.inf)
            search.best_key = (3.0, (0, ))
            self.assertEqual(search.gap([1.0, 2.5]), 2.0)
            self.assertEqual(search.gap([-math.inf]), math.inf)
            self.assertEqual(search.gap([]), 0.0)

    class ReplanTests(unittest.TestCase):
        def setUp(self):
            self.cfg = PlannerConfig()
            self.z1, self.p1 = np.array([0.12, -0.05]), np.zeros(2)
            self.regions = [floor_region()]
            self.base = solve(PlannerProblem(self.cfg, self.z1, self.p1, 0, self.regions))

        def state_at(self, t):
            xi = dcm_at(self.z1, self.p1, t, self.cfg.params)
            return DcmState(xi, self.z1, self.p1, LEFT, t, 0.5), xi

        def test_on_trajectory(self):
            state, xi = self.state_at(0.1)
            again = replan(state, self.regions, self.cfg, xi)
            self.assertAlmostEqual(again.sigma1, self.base.sigma1, delta=1e-6)
            self.assertTrue(np.allclose(again.footholds, self.base.footholds, atol=1e-6))

        def test_push_reacts(self):
            state, xi = self.state_at(0.1)
            pushed = replan(state, self.regions, self.cfg, xi + (0.05, 0.0))
            self.assertEqual(pushed.status, OPTIMAL)
            shorter = pushed.sigma1 < self.base.sigma1 - 1e-6
            farther = pushed.footholds[1, 0] > self.base.footholds[1, 0] + 1e-6
            self.assertTrue(shorter or farther)

        def test_end_of_step(self):
            state, xi = self.state_at(0.49)
            late = replan(state, self.regions, self.cfg, xi)
            self.assertEqual(late.status, OPTIMAL)
            self.assertGreaterEqual(late.sigma1, replan_floor(0.49, self.cfg) - 1e-9)

        def test_no_floor(self):
            state, xi = self.state_at(0.3)
            free = replan(state, self.regions, self.cfg, xi, replan_floor_enabled=False)
            self.assertAlmostEqual(free.sigma1, self.base.sigma1, delta=1e-6)

        def test_bad_time(self):
            state, xi = self.state_at(0.1)
            with self.assertRaises(PlannerError):
                replan(state._replace(t_elapsed=0.8), self.regions, self.cfg, xi)

    unittest.main()
