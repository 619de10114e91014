#!/usr/bin/env python
# encoding: utf-8

"""
.. currentmodule:: bifrost.planner.model

Overview
--------

Turns a :class:`bifrost.planner.PlannerProblem` into a quadratic model.

**Variables** (in this order):

    ============= ============ ==========================================
    Name          Count        Meaning
    ============= ============ ==========================================
    ``p1 .. pN``  2N           footholds, ``p1`` fixed to the stance foot
    ``z1 .. zN+1`` 2(N + 1)    step-initial DCMs, ``z1`` fixed
    ``sigma1``    1            ``e^(lambda T_1)``
    ``sx, sy``    2(N - 1)     stride slacks
    ``delta``     N M          region assignment binaries
    ============= ============ ==========================================

Only the first step has a free duration; all later steps run at
``sigma_nom``. Since ``z1`` and ``p1`` are data, the first dynamics row
``z2 = sigma1 (z1 - p1) + p1`` is affine in ``sigma1`` and the whole model is
a convex QP once the binaries are fixed.

The binaries of the stance step are fixed right away: the first region
that contains the stance foot gets ``delta = 1``. Initial-state rows (the
lateral corridor and the sagittal bound at ``k = 1``) only involve data.
A satisfied one is dropped by the QP presolve. A violated one (typically
after a push) is left out and reported, so the rest of the plan can still
recover.

Region rows use one big-M coefficient per (row, other region) instead of a
single constant. Row ``r`` of region ``j`` at step ``k`` reads::

    a_r p_k <= b_r + sum_{i != j} M_jri delta_k,i

where ``M_jri`` is how far region ``i`` reaches past the edge (capped at
``M_big``). With integral binaries this is the same feasible set as the
plain ``M_big`` form, since exactly one ``delta_k,i`` is set. The relaxation
is much tighter: a foothold can only leave region ``j`` in proportion to
the weight put on regions that actually lie beyond the edge.

The cost is::

    sum_k w_z,k |z_k - g_k|^2               k = 2 .. N + 1
    + w_sigma (sigma1 - sigma_nom)^2
    + sum_k w_x (sx_k - px_nom)^2 + w_y (sy_k - py_nom)^2     k = 1 .. N - 1

The timing term of later steps vanishes because ``sigma_k = sigma_nom``.
The stage goals ``g_k`` come from :meth:`PlannerProblem.stage_goals`; by
default every stage tracks the same waypoint.

Reference
---------
"""

# Stdlib:
import logging
LOGGER = logging.getLogger(__name__)

# External:
import numpy as np

from bidict import bidict

# Internal:
from bifrost.planner.qp import QuadraticModel


# Tolerance for initial-state rows that only involve data.
DATA_ROW_TOL = 1e-9

# Slack on the vertex support of a region; matches the containment
# tolerance of the stance foot.
SUPPORT_PAD = 1e-9


def stance_sign(k, ell):
    'The factor ``(-1)^(k + ell)`` that points toward the midline.'
    return 1.0 if (k + ell) % 2 == 0 else -1.0


###########################################################################
#                                 Layout                                  #
###########################################################################


class VariableLayout:
    """Column indices of the planner variables.

    :param N: Preview horizon.
    :param region_ids: Region ids in problem order; each gets a binary column block.
    :param with_binaries: False for a fixed assignment (no binary columns).
    """
    def __init__(self, N, region_ids, with_binaries=True):
        self.N = N
        self.blocks = bidict((rid, j) for j, rid in enumerate(region_ids))
        self.M = len(self.blocks) if with_binaries else 0
        self.n_continuous = 6 * N + 1
        self.size = self.n_continuous + N * self.M

    def p(self, k):
        'Columns (x, y) of foothold ``k`` (1-based).'
        base = 2 * (k - 1)
        return base, base + 1

    def z(self, k):
        'Columns (x, y) of the initial DCM of step ``k`` (1-based, up to N + 1).'
        base = 2 * self.N + 2 * (k - 1)
        return base, base + 1

    @property
    def sigma(self):
        return 4 * self.N + 2

    def sx(self, k):
        return 4 * self.N + 3 + (k - 1)

    def sy(self, k):
        return 4 * self.N + 3 + (self.N - 1) + (k - 1)

    def delta(self, k, j):
        'Column of the binary of step ``k`` and region column ``j``.'
        return self.n_continuous + (k - 1) * self.M + j

    def region_column(self, region_id):
        return self.blocks[region_id]

    def region_id(self, column):
        return self.blocks.inverse[column]

    def names(self):
        names = [None] * self.size
        for k in range(1, self.N + 1):
            names[self.p(k)[0]], names[self.p(k)[1]] = 'p{}x'.format(k), 'p{}y'.format(k)
        for k in range(1, self.N + 2):
            names[self.z(k)[0]], names[self.z(k)[1]] = 'z{}x'.format(k), 'z{}y'.format(k)
        names[self.sigma] = 'sigma1'
        for k in range(1, self.N):
            names[self.sx(k)], names[self.sy(k)] = 'sx{}'.format(k), 'sy{}'.format(k)
        for k in range(1, self.N + 1):
            for j in range(self.M):
                names[self.delta(k, j)] = 'delta{},{}'.format(k, self.region_id(j))
        return names


class FootstepModel(QuadraticModel):
    """:class:`QuadraticModel` that knows its variable layout.

    ``relaxed_rows`` lists the initial-state rows that were left out.
    """
    def __init__(self, layout, relaxed_rows, **kwargs):
        QuadraticModel.__init__(self, **kwargs)
        self.layout = layout
        self.relaxed_rows = tuple(relaxed_rows)

    def decode(self, x, problem):
        """Split a solution vector into the planner quantities.

        :returns: dict with footholds, dcm, sigma1, slacks, delta, assignment.
        """
        lay, N = self.layout, self.layout.N
        footholds = np.array([x[list(lay.p(k))] for k in range(1, N + 1)])
        dcm = np.array([x[list(lay.z(k))] for k in range(1, N + 2)])
        slacks = np.array([[x[lay.sx(k)], x[lay.sy(k)]] for k in range(1, N)]).reshape(-1, 2)

        ids = [region.id for region in problem.regions]
        if lay.M:
            delta = np.array([
                [x[lay.delta(k, j)] for j in range(lay.M)] for k in range(1, N + 1)
            ])
            delta = np.round(delta).astype(int)
            assignment = tuple(ids[int(np.argmax(row))] for row in delta)
        else:
            assignment = (ids[problem.stance_index()], ) + tuple(problem.fixed_assignment)
            delta = np.zeros((N, len(ids)), dtype=int)
            for k, rid in enumerate(assignment):
                delta[k, ids.index(rid)] = 1

        return {
            'footholds': footholds,
            'dcm': dcm,
            'sigma1': float(x[lay.sigma]),
            'slacks': slacks,
            'delta': delta,
            'assignment': assignment
        }


###########################################################################
#                                Assembly                                 #
###########################################################################


class _Rows:
    'Accumulates sparse rows as dense arrays.'
    def __init__(self, n):
        self.n = n
        self.rows, self.rhs, self.names = [], [], []

    def add(self, coefficients, rhs, name=None):
        row = np.zeros(self.n)
        for col, value in coefficients:
            row[col] += value
        self.rows.append(row)
        self.rhs.append(float(rhs))
        self.names.append(name or 'row{}'.format(len(self.rows)))

    def add_block(self, matrix, rhs, names):
        self.rows.extend(np.asarray(matrix, dtype=float))
        self.rhs.extend(float(value) for value in rhs)
        self.names.extend(names)

    def arrays(self):
        if not self.rows:
            return np.zeros((0, self.n)), np.zeros(0)
        return np.array(self.rows), np.array(self.rhs)


def _add_square(P, q, col, weight, target):
    'Add ``weight (x_col - target)^2``; returns the constant part.'
    P[col, col] += 2.0 * weight
    q[col] -= 2.0 * weight * target
    return weight * target ** 2


def _initial_rows(problem, radius):
    """Evaluate the data-only rows of step 1.

    :returns: List of (name, satisfied) pairs.
    """
    cfg, z1, p1 = problem.config, problem.z1, problem.p1
    lateral = stance_sign(1, problem.ell) * (z1[1] - p1[1]) - cfg.delta_y
    offset = z1[0] - p1[0]
    return [
        ('lateral[1]', lateral >= -DATA_ROW_TOL),
        ('sagittal+[1]', radius - offset >= -DATA_ROW_TOL),
        ('sagittal-[1]', radius + offset >= -DATA_ROW_TOL)
    ]


def _region_support(regions, cap):
    """Big-M coefficients of the region rows.

    Entry ``[j][r, i]`` is how far region ``i`` reaches past edge ``r`` of
    region ``j``: ``max_{v in region i} a_r v - b_r``, capped at ``cap``.
    The diagonal block ``i == j`` is zero.

    :returns: List of (edges_j, M) arrays.
    """
    support = []
    for j, region in enumerate(regions):
        block = np.zeros((region.edges, len(regions)))
        for i, other in enumerate(regions):
            if i != j:
                reach = other.vertices.dot(region.A.T).max(axis=0) + SUPPORT_PAD
                block[:, i] = np.minimum(reach - region.b, cap)
        support.append(block)
    return support


def build(problem):
    """Build the quadratic model of ``problem``.

    :raises PlannerError: on invalid problems (no regions, inconsistent
                          bounds, stance foot outside every region).
    :returns: A :class:`FootstepModel`.
    """
    problem.validate()
    cfg = problem.config
    N, M = cfg.N, problem.M
    with_binaries = problem.fixed_assignment is None

    lay = VariableLayout(N, [region.id for region in problem.regions], with_binaries)
    n = lay.size
    sigma_nom = cfg.sigma_nom

    ###########
    # Bounds  #
    ###########

    lb, ub = np.full(n, -np.inf), np.full(n, np.inf)
    for col, value in zip(lay.p(1), problem.p1):
        lb[col] = ub[col] = value
    for col, value in zip(lay.z(1), problem.z1):
        lb[col] = ub[col] = value

    if cfg.fixed_duration:
        lb[lay.sigma] = ub[lay.sigma] = sigma_nom
    else:
        lb[lay.sigma], ub[lay.sigma] = cfg.sigma_min, cfg.sigma_max
        if problem.sigma_floor is not None:
            lb[lay.sigma] = max(cfg.sigma_min, min(problem.sigma_floor, cfg.sigma_max))

    for k in range(1, N):
        lb[lay.sx(k)], ub[lay.sx(k)] = cfg.L_min, cfg.L_max
        lb[lay.sy(k)], ub[lay.sy(k)] = cfg.W_min, cfg.W_max

    binary = np.zeros(n, dtype=bool)
    stance_column = problem.stance_index()
    for k in range(1, N + 1):
        for j in range(lay.M):
            col = lay.delta(k, j)
            binary[col] = True
            lb[col], ub[col] = 0.0, 1.0
            if k == 1:
                lb[col] = ub[col] = 1.0 if j == stance_column else 0.0

    ##############
    # Equalities #
    ##############

    eq = _Rows(n)
    z1, p1 = problem.z1, problem.p1
    for axis in (0, 1):
        # z2 = sigma1 (z1 - p1) + p1
        eq.add([(lay.z(2)[axis], 1.0), (lay.sigma, -(z1[axis] - p1[axis]))], p1[axis], 'dynamics[1]')

    for k in range(2, N + 1):
        for axis in (0, 1):
            eq.add([
                (lay.z(k + 1)[axis], 1.0),
                (lay.z(k)[axis], -sigma_nom),
                (lay.p(k)[axis], -(1.0 - sigma_nom))
            ], 0.0, 'dynamics[{}]'.format(k))

    for k in range(1, N):
        sign = stance_sign(k, problem.ell)
        eq.add([(lay.sx(k), 1.0), (lay.p(k + 1)[0], -1.0), (lay.p(k)[0], 1.0)], 0.0, 'slack_x[{}]'.format(k))
        eq.add([(lay.sy(k), 1.0), (lay.p(k + 1)[1], -sign), (lay.p(k)[1], sign)], 0.0, 'slack_y[{}]'.format(k))

    for k in range(1, N + 1):
        if lay.M:
            eq.add([(lay.delta(k, j), 1.0) for j in range(lay.M)], 1.0, 'choose[{}]'.format(k))

    ################
    # Inequalities #
    ################

    ineq = _Rows(n)
    relaxed = []
    if cfg.viability:
        radius = cfg.capture_radius
        dropped = {name for name, ok in _initial_rows(problem, radius) if not ok}
        relaxed = sorted(dropped)

        for k in range(1, N + 1):
            sign = stance_sign(k, problem.ell)
            zx, zy = lay.z(k)
            px, py = lay.p(k)
            rows = [
                ('lateral[{}]', [(zy, -sign), (py, sign)], -cfg.delta_y),
                ('sagittal+[{}]', [(zx, 1.0), (px, -1.0)], radius),
                ('sagittal-[{}]', [(zx, -1.0), (px, 1.0)], radius)
            ]
            for template, coefficients, rhs in rows:
                name = template.format(k)
                if name not in dropped:
                    ineq.add(coefficients, rhs, name)

        for k in range(1, N):
            ineq.add([(lay.z(k + 1)[0], 1.0), (lay.z(k)[0], -1.0)], cfg.L_max, 'growth[{}]'.format(k))

    if relaxed:
        LOGGER.info('initial state violates {}; rows left out'.format(', '.join(relaxed)))

    if with_binaries:
        support = _region_support(problem.regions, cfg.M_big)
        for k in range(1, N + 1):
            px, py = lay.p(k)
            deltas = [lay.delta(k, i) for i in range(M)]
            for j, region in enumerate(problem.regions):
                block = np.zeros((region.edges, n))
                block[:, px], block[:, py] = region.A[:, 0], region.A[:, 1]
                block[:, deltas] = -support[j]
                ineq.add_block(block, region.b, [
                    'region[{},{},{}]'.format(k, region.id, edge) for edge in range(region.edges)
                ])
    else:
        by_id = {region.id: region for region in problem.regions}
        for k, rid in enumerate(problem.fixed_assignment, 2):
            px, py = lay.p(k)
            region = by_id[rid]
            for edge, (a, b) in enumerate(zip(region.A, region.b)):
                ineq.add([(px, a[0]), (py, a[1])], b, 'region[{},{},{}]'.format(k, rid, edge))

    ########
    # Cost #
    ########

    P, q, constant = np.zeros((n, n)), np.zeros(n), 0.0
    for k, weight, goal in zip(range(2, N + 2), cfg.stage_weights(), problem.stage_goals()):
        for axis in (0, 1):
            constant += _add_square(P, q, lay.z(k)[axis], weight, goal[axis])

    constant += _add_square(P, q, lay.sigma, cfg.w_sigma, sigma_nom)
    for k in range(1, N):
        constant += _add_square(P, q, lay.sx(k), cfg.w_x, cfg.p_x_nom)
        constant += _add_square(P, q, lay.sy(k), cfg.w_y, cfg.p_y_nom)

    A_eq, b_eq = eq.arrays()
    G, h = ineq.arrays()
    model = FootstepModel(
        lay, relaxed,
        P=P, q=q, constant=constant, A_eq=A_eq, b_eq=b_eq, G=G, h=h,
        lb=lb, ub=ub, binary=binary, names=lay.names(), row_names=ineq.names
    )
    LOGGER.debug('built {}'.format(model))
    return model


if __name__ == '__main__':
    import unittest

    from bifrost.geometry import rectangle
    from bifrost.geometry.hull import to_halfspaces
    from bifrost.planner import PlannerConfig, PlannerProblem, PlannerError
    from bifrost.planner.qp import solve_qp

    def octagon(cx, cy, radius, region_id):
        angles = np.linspace(0, 2 * np.pi, 8, endpoint=False)
        ring = np.column_stack([cx + radius * np.cos(angles), cy + radius * np.sin(angles)])
        return to_halfspaces(ring, region_id)

    class BuildTests(unittest.TestCase):
        def setUp(self):
            self.regions = [octagon(0, 0, 0.2, 0), octagon(0.5, -0.2, 0.2, 1), octagon(1.0, 0, 0.2, 2)]
            self.problem = PlannerProblem(PlannerConfig(), (0.1, -0.06), (0, 0), 0, self.regions)

        def test_counts(self):
            model = build(self.problem)
            self.assertEqual(model.n_binary, 12)
            self.assertEqual(model.n_continuous, 25)
            big_m = [name for name in model.row_names if name.startswith('region')]
            self.assertEqual(len(big_m), 96)

        def test_layout_names(self):
            model = build(self.problem)
            lay = model.layout
            self.assertEqual(model.names[lay.sigma], 'sigma1')
            self.assertEqual(model.names[lay.delta(2, 1)], 'delta2,1')
            self.assertEqual(lay.region_id(lay.region_column(2)), 2)
            self.assertEqual(len(set(model.names)), model.n_vars)

        def test_stance_binaries_fixed(self):
            model = build(self.problem)
            lay = model.layout
            self.assertEqual([model.lb[lay.delta(1, j)] for j in range(3)], [1.0, 0.0, 0.0])
            self.assertEqual(model.ub[lay.delta(1, 1)], 0.0)

        def test_fixed_assignment_pure_qp(self):
            problem = self.problem._replace(fixed_assignment=(1, 2, 2))
            model = build(problem)
            self.assertEqual(model.n_binary, 0)
            self.assertEqual(model.n_vars, 25)

        def test_no_regions(self):
            with self.assertRaises(PlannerError):
                build(self.problem._replace(regions=[]))

        def test_inconsistent_sigma(self):
            problem = self.problem._replace(config=PlannerConfig(T_min=0.6, T_max=0.4))
            with self.assertRaises(PlannerError):
                build(problem)

        def test_relaxed_initial_rows(self):
            # DCM on the outer side of the left foot: lateral row violated.
            model = build(self.problem._replace(z1=np.array([0.1, 0.05])))
            self.assertEqual(model.relaxed_rows, ('lateral[1]', ))
            self.assertNotIn('lateral[1]', model.row_names)
            self.assertIn('lateral[2]', model.row_names)

        def test_no_viability(self):
            cfg = PlannerConfig(viability=False)
            model = build(self.problem._replace(config=cfg))
            self.assertFalse(any(name.startswith(('lateral', 'sagittal', 'growth')) for name in model.row_names))

        def test_large_lateral_margin_infeasible(self):
            floor = to_halfspaces(rectangle(-0.5, 3.0, -1.5, 1.5), 0)
            cfg = PlannerConfig(delta_y=0.6)
            problem = PlannerProblem(cfg, (0.1, -0.06), (0, 0), 0, [floor], fixed_assignment=(0, 0, 0))
            model = build(problem)
            self.assertEqual(solve_qp(model).status, 'infeasible')

        def test_region_rows_exact(self):
            # With integral binaries a step's rows pin it to its region.
            model = build(self.problem)
            lay = model.layout
            rows = [idx for idx, name in enumerate(model.row_names) if name.startswith('region[2,')]
            for column, region in enumerate(self.regions):
                for other in self.regions:
                    x = np.zeros(model.n_vars)
                    x[list(lay.p(2))] = other.centroid
                    for k in range(1, 5):
                        x[lay.delta(k, column if k == 2 else 0)] = 1.0
                    values = model.G[rows].dot(x) - model.h[rows]
                    if other is region:
                        self.assertLessEqual(values.max(), 1e-9)
                    else:
                        self.assertGreater(values.max(), 0.1)

        def test_region_support_signs(self):
            support = _region_support(self.regions, PlannerConfig().M_big)
            self.assertEqual(len(support), 3)
            self.assertEqual(support[0].shape, (8, 3))
            self.assertTrue(np.all(support[1][:, 1] == 0.0))
            # Region 2 lies past the +x edge of region 0, region 0 does not
            # reach past the +x edge of region 2.
            right = int(np.argmax(self.regions[0].A[:, 0]))
            self.assertGreater(support[0][right, 2], 0.5)
            self.assertLess(support[2][right, 0], 0.0)

        def test_relaxation_tighter_than_big_m(self):
            model = build(self.problem)
            lay, M_big = model.layout, PlannerConfig().M_big
            G, h = model.G.copy(), model.h.copy()
            for row, name in enumerate(model.row_names):
                if name.startswith('region'):
                    k, rid, _ = (int(part) for part in name[len('region['):-1].split(','))
                    G[row, [lay.delta(k, j) for j in range(lay.M)]] = 0.0
                    G[row, lay.delta(k, lay.region_column(rid))] = M_big
                    h[row] += M_big
            plain = QuadraticModel(
                model.P, model.q, model.constant, model.A_eq, model.b_eq, G, h, model.lb, model.ub
            )
            tight_bound = solve_qp(model).objective
            plain_bound = solve_qp(plain).objective
            self.assertGreater(tight_bound, plain_bound + 1e-3)

        def test_stage_goals(self):
            # Stage goals on the nominal gait: only the timing and stride
            # terms remain, and they vanish there.
            goals = np.array([[0.5, 0.1], [1.0, -0.1], [1.5, 0.1], [2.0, -0.1]])
            model = build(self.problem._replace(goal=goals, fixed_assignment=(0, 0, 0)))
            lay = model.layout
            x = np.zeros(model.n_vars)
            x[lay.sigma] = PlannerConfig().sigma_nom
            for k, goal in zip(range(2, 6), goals):
                x[list(lay.z(k))] = goal
            for k in range(1, 4):
                x[lay.sx(k)], x[lay.sy(k)] = 0.5, 0.3
            self.assertAlmostEqual(model.objective(x), 0.0, places=9)

        def test_objective_constant(self):
            # At the nominal values the timing and stride terms vanish.
            model = build(self.problem._replace(config=PlannerConfig(w_z=0.0), fixed_assignment=(0, 0, 0)))
            x = np.zeros(model.n_vars)
            lay = model.layout
            x[lay.sigma] = PlannerConfig().sigma_nom
            for k in range(1, 4):
                x[lay.sx(k)], x[lay.sy(k)] = 0.5, 0.3
            self.assertAlmostEqual(model.objective(x), 0.0, places=9)

    unittest.main()
