#!/usr/bin/env python
# encoding: utf-8

"""
.. currentmodule:: bifrost.planner.qp

Overview
--------

A small dense convex QP kernel.

The problem form is::

    minimize    1/2 x'Px + q'x + constant
    subject to  A_eq x  = b_eq
                G x    <= h
                lb <= x <= ub

:func:`solve_qp` runs in three stages:

    1. **Presolve.** Variables with ``lb == ub`` are substituted. Rows that
       become constant are checked and dropped. Finite bounds are folded
       into the inequality rows.
    2. **Interior point.** Mehrotra predictor-corrector on the reduced KKT
       system, factorized once per iteration with :func:`scipy.linalg.lu_factor`.
       A previous result (``warm``) on the same model seeds the iterates:
       its primal point and multipliers are mapped onto the reduced problem
       and pushed ``WARM_SHIFT`` into the interior. A warm run that fails is
       repeated from the cold start before anything is reported.
       If the iterates look like a primal infeasible problem, a feasibility
       LP (:func:`scipy.optimize.linprog`, HiGHS) gives the final verdict.
    3. **Polish** (optional). The rows with dual larger than slack are taken
       as active set, and the equality-constrained KKT system is solved
       exactly. The polished point is kept if it is feasible and its duals
       have the right sign.

Binary variables are not treated specially here; :class:`QuadraticModel`
only carries the mask for the branch-and-bound driver.

Reference
---------
"""

# Stdlib:
import logging
LOGGER = logging.getLogger(__name__)

from collections import namedtuple

# External:
import numpy as np

from scipy.linalg import LinAlgError, lstsq, lu_factor, lu_solve
from scipy.optimize import linprog

# Internal:
from bifrost.planner import INFEASIBLE, ITERATION_LIMIT, OPTIMAL


# Regularization of the reduced KKT matrix.
KKT_REGULARIZATION = 1e-10

# Rows whose coefficients vanish after presolve are checked against these.
CONSTANT_ROW_TOL = 1e-9

# Smallest slack and multiplier of a warm-started interior point run.
WARM_SHIFT = 1e-2


###########################################################################
#                                  Model                                  #
###########################################################################


class QuadraticModel:
    """Dense data of a convex QP, plus names and a binary mask.

    :param P: (n, n) positive semidefinite matrix.
    :param q: (n,) linear term.
    :param constant: Constant term of the objective.
    :param A_eq, b_eq: Equality rows.
    :param G, h: Inequality rows.
    :param lb, ub: Variable bounds, may be infinite.
    :param binary: Boolean mask of variables meant to be integral.
    :param names: Variable names.
    :param row_names: Names of the inequality rows.
    """
    def __init__(self, P, q, constant=0.0, A_eq=None, b_eq=None, G=None, h=None,
                 lb=None, ub=None, binary=None, names=None, row_names=None):
        self.q = np.asarray(q, dtype=float).reshape(-1)
        n = len(self.q)

        self.P = np.asarray(P, dtype=float).reshape(n, n)
        self.constant = float(constant)
        self.A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
        self.b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
        self.G = np.zeros((0, n)) if G is None else np.asarray(G, dtype=float).reshape(-1, n)
        self.h = np.zeros(0) if h is None else np.asarray(h, dtype=float).reshape(-1)
        self.lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float).copy()
        self.ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float).copy()
        self.binary = np.zeros(n, dtype=bool) if binary is None else np.asarray(binary, dtype=bool)
        self.names = list(names) if names is not None else ['x{}'.format(i) for i in range(n)]
        self.row_names = list(row_names) if row_names is not None else \
            ['g{}'.format(i) for i in range(len(self.h))]

        if len(self.b_eq) != len(self.A_eq) or len(self.h) != len(self.G):
            raise ValueError('row count mismatch between matrices and right-hand sides')

    def __repr__(self):
        return '<QuadraticModel {} vars ({} binary), {} eq, {} ineq>'.format(
            self.n_vars, self.n_binary, len(self.b_eq), len(self.h)
        )

    @property
    def n_vars(self):
        return len(self.q)

    @property
    def n_binary(self):
        return int(np.count_nonzero(self.binary))

    @property
    def n_continuous(self):
        return self.n_vars - self.n_binary

    def index(self, name):
        return self.names.index(name)

    def objective(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x.dot(self.P).dot(x)) + float(self.q.dot(x)) + self.constant


QpResult = namedtuple('QpResult', [
    'x',           # full solution vector (None if infeasible)
    'objective',
    'status',      # OPTIMAL, INFEASIBLE, ITERATION_LIMIT
    'iterations',  # interior point iterations
    'residuals',   # dict: stationarity, primal, dual, complementarity
    'duals'        # dict: eq, ineq, lower, upper
])


def _no_solution(status, iterations=0):
    return QpResult(None, np.inf, status, iterations, {}, {})


###########################################################################
#                                Presolve                                 #
###########################################################################


_Reduced = namedtuple('_Reduced', [
    'P', 'q', 'constant', 'A', 'b', 'G', 'h',
    'free', 'x_fixed', 'eq_rows', 'ineq_rows', 'bound_rows'
])


def _constant_rows(matrix):
    return ~np.any(matrix != 0.0, axis=1)


def _presolve(model, lb, ub):
    """Substitute fixed variables and fold bounds into inequality rows.

    :returns: A :class:`_Reduced` or None if presolve proves infeasibility.
    """
    if np.any(lb > ub):
        return None

    fixed = lb == ub
    free = ~fixed
    x_fixed = np.where(fixed, lb, 0.0)

    P_ff = model.P[np.ix_(free, free)]
    q_f = model.q[free] + model.P[np.ix_(free, fixed)].dot(x_fixed[fixed])
    constant = model.objective(x_fixed)

    A = model.A_eq[:, free]
    b = model.b_eq - model.A_eq.dot(x_fixed)
    G = model.G[:, free]
    h = model.h - model.G.dot(x_fixed)

    const_eq = _constant_rows(A)
    if np.any(np.abs(b[const_eq]) > CONSTANT_ROW_TOL):
        return None
    const_ineq = _constant_rows(G)
    if np.any(h[const_ineq] < -CONSTANT_ROW_TOL):
        return None

    eq_rows = np.nonzero(~const_eq)[0]
    ineq_rows = np.nonzero(~const_ineq)[0]
    A, b = A[eq_rows], b[eq_rows]
    G, h = G[ineq_rows], h[ineq_rows]

    # Bounds on free variables become rows: -x <= -lb and x <= ub.
    free_idx = np.nonzero(free)[0]
    lb_f, ub_f = lb[free], ub[free]
    has_lb, has_ub = np.isfinite(lb_f), np.isfinite(ub_f)
    eye = np.eye(len(free_idx))
    G = np.vstack([G, -eye[has_lb], eye[has_ub]])
    h = np.concatenate([h, -lb_f[has_lb], ub_f[has_ub]])
    bound_rows = (free_idx[has_lb], free_idx[has_ub])

    return _Reduced(P_ff, q_f, constant, A, b, G, h, free, x_fixed, eq_rows, ineq_rows, bound_rows)


###########################################################################
#                              Interior Point                             #
###########################################################################


def _max_step(v, dv):
    'Largest alpha in (0, 1] with v + alpha dv >= 0.'
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, float(np.min(-v[neg] / dv[neg])))


def _kkt_solve(P, A):
    """Factorize ``[[P, A'], [A, -reg I]]`` and return a solver for it."""
    n, m = P.shape[0], A.shape[0]
    K = np.empty((n + m, n + m))
    K[:n, :n] = P + KKT_REGULARIZATION * np.eye(n)
    K[:n, n:] = A.T
    K[n:, :n] = A
    K[n:, n:] = -KKT_REGULARIZATION * np.eye(m)
    factor = lu_factor(K, check_finite=False)
    return lambda rhs: lu_solve(factor, rhs, check_finite=False)


def _equality_only(red):
    'Solve a reduced problem without inequality rows directly.'
    n, m = len(red.q), len(red.b)
    K = np.block([[red.P, red.A.T], [red.A, np.zeros((m, m))]])
    sol = lstsq(K, np.concatenate([-red.q, red.b]))[0]
    x, y = sol[:n], sol[n:]
    if np.linalg.norm(red.A.dot(x) - red.b, np.inf) > 1e-8 * (1 + np.linalg.norm(red.b, np.inf)):
        return None
    return x, y


def _certify_infeasible(red):
    'True if a feasibility LP proves the reduced problem infeasible.'
    n = len(red.q)
    result = linprog(
        np.zeros(n),
        A_ub=red.G if len(red.h) else None, b_ub=red.h if len(red.h) else None,
        A_eq=red.A if len(red.b) else None, b_eq=red.b if len(red.b) else None,
        bounds=[(None, None)] * n, method='highs'
    )
    return result.status == 2


def _warm_point(red, warm):
    'Map a previous :class:`QpResult` onto the reduced problem, or None.'
    if warm is None or warm.x is None or not warm.duals:
        return None
    duals = warm.duals
    z = np.concatenate([
        duals['ineq'][red.ineq_rows],
        duals['lower'][red.bound_rows[0]],
        duals['upper'][red.bound_rows[1]]
    ])
    return warm.x[red.free], duals['eq'][red.eq_rows], z


def _interior_point(red, tol, max_iter, start=None):
    """Mehrotra predictor-corrector on the reduced problem.

    :param start: Optional (x, y, z) from :func:`_warm_point`.
    :returns: (x, y, z, s, status, iterations)
    """
    P, q, A, b, G, h = red.P, red.q, red.A, red.b, red.G, red.h
    n, m_ineq = len(q), len(h)

    if start is None:
        # Least squares system with unit weights.
        solve = _kkt_solve(P + G.T.dot(G), A)
        start = solve(np.concatenate([-q + G.T.dot(h), b]))
        x, y = start[:n], start[n:]
        s = np.maximum(h - G.dot(x), 1.0)
        z = np.ones(m_ineq)
    else:
        x, y, z = (np.array(part, dtype=float) for part in start)
        s = np.maximum(h - G.dot(x), WARM_SHIFT)
        z = np.maximum(z, WARM_SHIFT)

    scale_d = 1.0 + np.linalg.norm(q, np.inf)
    scale_p = 1.0 + max(np.linalg.norm(b, np.inf) if len(b) else 0.0, np.linalg.norm(h, np.inf))

    for iteration in range(1, max_iter + 1):
        r_d = P.dot(x) + q + A.T.dot(y) + G.T.dot(z)
        r_p = A.dot(x) - b
        r_g = G.dot(x) + s - h
        mu = s.dot(z) / m_ineq

        primal = max(np.linalg.norm(r_p, np.inf) if len(b) else 0.0, np.linalg.norm(r_g, np.inf))
        if np.linalg.norm(r_d, np.inf) <= tol * scale_d and primal <= tol * scale_p and mu <= tol:
            return x, y, z, s, OPTIMAL, iteration

        # Exploding duals with stuck primal residuals point to infeasibility.
        if np.max(z) > 1e8 and primal > 1e-6:
            return x, y, z, s, INFEASIBLE, iteration

        W = z / s
        try:
            solve = _kkt_solve(P + G.T.dot(W[:, None] * G), A)
        except (LinAlgError, ValueError):
            return x, y, z, s, ITERATION_LIMIT, iteration

        def newton(r_c):
            # ds = -r_g - G dx, dz = W G dx + (z r_g - r_c) / s
            corr = (z * r_g - r_c) / s
            rhs = np.concatenate([-r_d - G.T.dot(corr), -r_p])
            sol = solve(rhs)
            dx, dy = sol[:n], sol[n:]
            dz = W * G.dot(dx) + corr
            ds = -r_g - G.dot(dx)
            return dx, dy, dz, ds

        # Predictor.
        dx, dy, dz, ds = newton(s * z)
        alpha = min(_max_step(s, ds), _max_step(z, dz))
        mu_aff = (s + alpha * ds).dot(z + alpha * dz) / m_ineq
        centering = (mu_aff / mu) ** 3

        # Corrector.
        dx, dy, dz, ds = newton(s * z + ds * dz - centering * mu)
        alpha = 0.99 * min(_max_step(s, ds), _max_step(z, dz))
        if not np.all(np.isfinite(dx)):
            return x, y, z, s, ITERATION_LIMIT, iteration

        if alpha < 1e-10:
            return x, y, z, s, INFEASIBLE, iteration

        x, y, z, s = x + alpha * dx, y + alpha * dy, z + alpha * dz, s + alpha * ds

    return x, y, z, s, ITERATION_LIMIT, max_iter


def _polish(red, x, z, s):
    """Solve the KKT system on the guessed active set.

    :returns: (x, y, z) or None if the polished point is rejected.
    """
    active = z > s
    G_act, h_act = red.G[active], red.h[active]
    n, m_eq, m_act = len(red.q), len(red.b), int(np.count_nonzero(active))

    K = np.zeros((n + m_eq + m_act, n + m_eq + m_act))
    K[:n, :n] = red.P
    K[:n, n:n + m_eq] = red.A.T
    K[:n, n + m_eq:] = G_act.T
    K[n:n + m_eq, :n] = red.A
    K[n + m_eq:, :n] = G_act
    rhs = np.concatenate([-red.q, red.b, h_act])

    try:
        sol = lstsq(K, rhs)[0]
    except (LinAlgError, ValueError):
        return None

    x_pol, y_pol, z_act = sol[:n], sol[n:n + m_eq], sol[n + m_eq:]
    if np.any(z_act < -1e-9):
        return None
    if len(red.b) and np.linalg.norm(red.A.dot(x_pol) - red.b, np.inf) > 1e-9:
        return None
    if len(red.h) and np.max(red.G.dot(x_pol) - red.h) > 1e-9:
        return None

    z_pol = np.zeros(len(red.h))
    z_pol[active] = np.maximum(z_act, 0.0)
    return x_pol, y_pol, z_pol


###########################################################################
#                                Front End                                #
###########################################################################


def kkt_residuals(red, x, y, z):
    'Infinity norms of the KKT residuals on the reduced problem.'
    slack = red.h - red.G.dot(x)
    return {
        'stationarity': float(np.linalg.norm(
            red.P.dot(x) + red.q + red.A.T.dot(y) + red.G.T.dot(z), np.inf
        )) if len(x) else 0.0,
        'primal': float(max(
            np.linalg.norm(red.A.dot(x) - red.b, np.inf) if len(red.b) else 0.0,
            np.max(-slack, initial=0.0)
        )),
        'dual': float(np.max(-z, initial=0.0)),
        'complementarity': float(np.max(np.abs(z * slack), initial=0.0))
    }


def _expand(model, red, x_free, y, z):
    x = red.x_fixed.copy()
    x[red.free] = x_free

    eq = np.zeros(len(model.b_eq))
    eq[red.eq_rows] = y
    n_rows = len(red.ineq_rows)
    ineq = np.zeros(len(model.h))
    ineq[red.ineq_rows] = z[:n_rows]

    lower, upper = np.zeros(model.n_vars), np.zeros(model.n_vars)
    n_lower = len(red.bound_rows[0])
    lower[red.bound_rows[0]] = z[n_rows:n_rows + n_lower]
    upper[red.bound_rows[1]] = z[n_rows + n_lower:]
    return x, {'eq': eq, 'ineq': ineq, 'lower': lower, 'upper': upper}


def solve_qp(model, lb=None, ub=None, polish=True, tol=1e-9, max_iter=100, warm=None):
    """Solve a convex :class:`QuadraticModel`.

    :param lb, ub: Optional bound overrides (branch-and-bound nodes).
    :param warm: Optional :class:`QpResult` of the same model under other
                 bounds; seeds the interior point iterates.
    :param polish: Refine the interior point result on its active set.
    :param tol: Convergence tolerance on the scaled KKT residuals.
    :param max_iter: Interior point iteration limit.
    :returns: A :class:`QpResult`.
    """
    lb = model.lb if lb is None else np.asarray(lb, dtype=float)
    ub = model.ub if ub is None else np.asarray(ub, dtype=float)

    red = _presolve(model, lb, ub)
    if red is None:
        return _no_solution(INFEASIBLE)

    n = len(red.q)
    if n == 0:
        empty = np.zeros(0)
        x, duals = _expand(model, red, empty, empty, empty)
        return QpResult(x, model.objective(x), OPTIMAL, 0, kkt_residuals(red, empty, empty, empty), duals)

    if len(red.h) == 0:
        solved = _equality_only(red)
        if solved is None:
            return _no_solution(INFEASIBLE)
        x_free, y = solved
        z, iterations, status = np.zeros(0), 0, OPTIMAL
    else:
        start = _warm_point(red, warm)
        x_free, y, z, s, status, iterations = _interior_point(red, tol, max_iter, start)
        if status != OPTIMAL:
            if _certify_infeasible(red):
                return _no_solution(INFEASIBLE, iterations)
            if start is not None:
                LOGGER.debug('qp: warm start failed after {} iterations, restarting'.format(iterations))
                x_free, y, z, s, status, cold = _interior_point(red, tol, max_iter)
                iterations += cold

        if status != OPTIMAL:
            LOGGER.debug('qp: no convergence after {} iterations, problem is feasible'.format(iterations))
            status = ITERATION_LIMIT

        if polish and status == OPTIMAL:
            polished = _polish(red, x_free, z, s)
            if polished is not None:
                x_free, y, z = polished

    residuals = kkt_residuals(red, x_free, y, z)
    x, duals = _expand(model, red, x_free, y, z)
    return QpResult(x, model.objective(x), status, iterations, residuals, duals)


if __name__ == '__main__':
    import unittest

    class QpTests(unittest.TestCase):
        def test_scalar_bound(self):
            model = QuadraticModel([[2.0]], [-2.0], 1.0, G=[[1.0]], h=[0.5])
            result = solve_qp(model)
            self.assertEqual(result.status, OPTIMAL)
            self.assertAlmostEqual(result.x[0], 0.5, places=9)
            self.assertAlmostEqual(result.objective, 0.25, places=9)
            self.assertAlmostEqual(result.duals['ineq'][0], 1.0, places=7)

        def test_residual_contract(self):
            model = QuadraticModel([[2.0]], [-2.0], 1.0, G=[[1.0]], h=[0.5])
            for polish in (True, False):
                residuals = solve_qp(model, polish=polish).residuals
                for key in ('stationarity', 'primal', 'dual', 'complementarity'):
                    self.assertLessEqual(residuals[key], 1e-7, key)

        def test_unconstrained(self):
            rng = np.random.default_rng(5)
            root = rng.standard_normal((6, 6))
            P = root.dot(root.T) + 6 * np.eye(6)
            q = rng.standard_normal(6)
            result = solve_qp(QuadraticModel(P, q))
            self.assertTrue(np.allclose(result.x, np.linalg.solve(P, -q), atol=1e-9))

        def test_unconstrained_with_inactive_row(self):
            P, q = np.diag([2.0, 4.0]), np.array([-2.0, 4.0])
            result = solve_qp(QuadraticModel(P, q, G=[[1.0, 1.0]], h=[10.0]))
            self.assertTrue(np.allclose(result.x, [1.0, -1.0], atol=1e-9))
            self.assertAlmostEqual(result.duals['ineq'][0], 0.0, places=9)

        def test_infeasible_box(self):
            model = QuadraticModel([[2.0]], [0.0], lb=[1.0], ub=[-1.0])
            self.assertEqual(solve_qp(model).status, INFEASIBLE)

        def test_infeasible_rows(self):
            model = QuadraticModel([[2.0]], [0.0], G=[[1.0], [-1.0]], h=[-1.0, -1.0])
            self.assertEqual(solve_qp(model).status, INFEASIBLE)

        def test_equality_and_bounds(self):
            # min x^2 + y^2 s.t. x + y = 1, x >= 0.8
            model = QuadraticModel(
                2 * np.eye(2), [0.0, 0.0], A_eq=[[1.0, 1.0]], b_eq=[1.0], lb=[0.8, -np.inf]
            )
            result = solve_qp(model)
            self.assertTrue(np.allclose(result.x, [0.8, 0.2], atol=1e-9))
            self.assertAlmostEqual(result.duals['lower'][0], 1.2, places=7)

        def test_fixed_variables(self):
            model = QuadraticModel(2 * np.eye(2), [-2.0, -2.0], lb=[0.3, -5], ub=[0.3, 5])
            result = solve_qp(model)
            self.assertTrue(np.allclose(result.x, [0.3, 1.0], atol=1e-9))

        def test_constant_row_violated(self):
            model = QuadraticModel(2 * np.eye(2), [0.0, 0.0], G=[[1.0, 0.0]], h=[0.1], lb=[0.5, -1], ub=[0.5, 1])
            self.assertEqual(solve_qp(model).status, INFEASIBLE)

        def test_deterministic(self):
            rng = np.random.default_rng(1)
            G = rng.standard_normal((10, 4))
            model = QuadraticModel(np.eye(4), rng.standard_normal(4), G=G, h=np.abs(rng.standard_normal(10)))
            first, second = solve_qp(model), solve_qp(model)
            self.assertTrue(np.array_equal(first.x, second.x))

        def test_random_kkt(self):
            rng = np.random.default_rng(2)
            for _ in range(50):
                G = rng.standard_normal((12, 5))
                P = np.diag(rng.uniform(0.5, 2.0, 5))
                model = QuadraticModel(P, rng.standard_normal(5) * 3, G=G, h=rng.uniform(0.1, 1.0, 12))
                result = solve_qp(model)
                self.assertEqual(result.status, OPTIMAL)
                for value in result.residuals.values():
                    self.assertLessEqual(value, 1e-7)

        def test_warm_start(self):
            rng = np.random.default_rng(4)
            for _ in range(30):
                G = rng.standard_normal((12, 5))
                P = np.diag(rng.uniform(0.5, 2.0, 5))
                model = QuadraticModel(
                    P, rng.standard_normal(5) * 3, G=G, h=rng.uniform(0.1, 1.0, 12),
                    lb=np.full(5, -2.0), ub=np.full(5, 2.0)
                )
                parent = solve_qp(model, polish=False)
                self.assertEqual(parent.status, OPTIMAL)

                # Child node: one variable pinned, another bound tightened.
                lb, ub = model.lb.copy(), model.ub.copy()
                lb[0] = ub[0] = 0.0
                ub[1] = parent.x[1] - 0.1
                cold = solve_qp(model, lb, ub, polish=False)
                warm = solve_qp(model, lb, ub, polish=False, warm=parent)
                self.assertEqual(warm.status, cold.status)
                if cold.status == OPTIMAL:
                    self.assertAlmostEqual(warm.objective, cold.objective, delta=1e-7)
                    self.assertTrue(np.allclose(warm.x, cold.x, atol=1e-5))

        def test_warm_start_from_failure(self):
            model = QuadraticModel([[2.0]], [-2.0], 1.0, G=[[1.0]], h=[0.5])
            failed = _no_solution(ITERATION_LIMIT, 100)
            self.assertIsNone(_warm_point(None, failed))
            result = solve_qp(model, warm=failed)
            self.assertEqual(result.status, OPTIMAL)
            self.assertAlmostEqual(result.x[0], 0.5, places=9)

    unittest.main()
