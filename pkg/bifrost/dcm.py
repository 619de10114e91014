#!/usr/bin/env python
# encoding: utf-8

"""
.. currentmodule:: bifrost.dcm

Overview
--------

Closed-form math of the divergent component of motion (DCM) template.

With a constant CoM height the DCM ``xi`` diverges from the stance foot ``p``
exponentially with rate ``lambda = sqrt(g / z_c)``. Over one step of duration
``T`` the step-initial DCM therefore obeys the step-to-step map::

    xi0_next = e^(lambda T) * xi0 + (1 - e^(lambda T)) * p

All quantities live in the current stance-foot frame. The functions accept
either single 2D vectors or stacks of shape ``(n, 2)`` together with a
matching vector of times.

Reference
---------
"""

# Stdlib:
import math

from collections import namedtuple

# External:
import numpy as np


GRAVITY = 9.81
COM_HEIGHT = 0.9

LEFT, RIGHT = 'left', 'right'


def other_side(side):
    'Return the opposite stance side.'
    return RIGHT if side == LEFT else LEFT


def side_sign(side):
    """Return the stance sign ``ell`` (0 for left, 1 for right).

    :raises ValueError: on unknown side names.
    """
    if side == LEFT:
        return 0
    if side == RIGHT:
        return 1
    raise ValueError('Unknown stance side: {!r}'.format(side))


###########################################################################
#                              Parameters                                 #
###########################################################################


class TemplateParams(namedtuple('TemplateParams', ['g', 'z_c'])):
    """Gravity and constant CoM height of the template.

    ``lam`` is derived, so it can never disagree with ``g`` and ``z_c``.
    """
    __slots__ = ()

    def __new__(cls, g=GRAVITY, z_c=COM_HEIGHT):
        if g <= 0 or z_c <= 0:
            raise ValueError('g and z_c must be positive (got {}, {})'.format(g, z_c))
        return super().__new__(cls, float(g), float(z_c))

    @property
    def lam(self):
        'Natural frequency of the pendulum in 1/s.'
        return math.sqrt(self.g / self.z_c)

    def sigma(self, duration):
        'Unstable-mode gain ``e^(lambda T)`` of a step lasting ``duration``.'
        return math.exp(self.lam * duration)

    def duration(self, sigma):
        'Inverse of :meth:`sigma`.'
        return math.log(sigma) / self.lam

    @staticmethod
    def from_config(config):
        return TemplateParams(config['planner_gravity'], config['planner_com_height'])


def _gain(t, lam):
    gain = np.exp(lam * np.asarray(t, dtype=float))
    return gain[..., None] if gain.ndim > 0 else gain


###########################################################################
#                               Recursion                                 #
###########################################################################


def step_map(xi0, p, duration, params):
    """Step-to-step map: DCM at the end of a step of length ``duration``.

    :param xi0: Step-initial DCM.
    :param p: Stance foot position.
    :param duration: Step duration in seconds, > 0.
    :returns: ``e^(lambda T) xi0 + (1 - e^(lambda T)) p``
    """
    if np.any(np.asarray(duration) <= 0):
        raise ValueError('step duration must be positive')

    gain = _gain(duration, params.lam)
    xi0, p = np.asarray(xi0, dtype=float), np.asarray(p, dtype=float)
    return gain * xi0 + (1.0 - gain) * p


def dcm_at(xi0, p, t, params):
    """Instantaneous DCM ``t`` seconds into the step.

    :returns: ``p + (xi0 - p) e^(lambda t)``
    """
    xi0, p = np.asarray(xi0, dtype=float), np.asarray(p, dtype=float)
    return p + (xi0 - p) * _gain(t, params.lam)


def backward_init(xi_meas, t_elapsed, p, params):
    """Propagate a measured DCM back to the start of the current step.

    This anchors the planner's initial DCM on the measurement; it is the
    exact inverse of :func:`dcm_at`.

    :param xi_meas: Measured instantaneous DCM.
    :param t_elapsed: Time since the step started.
    :param p: Stance foot position.
    """
    if np.any(np.asarray(t_elapsed) < 0):
        raise ValueError('elapsed time must be non-negative')

    gain = _gain(-np.asarray(t_elapsed, dtype=float), params.lam)
    xi_meas, p = np.asarray(xi_meas, dtype=float), np.asarray(p, dtype=float)
    return gain * xi_meas + (1.0 - gain) * p


def capture_point(xi, p, t_remaining, params):
    """DCM predicted at touchdown when ``t_remaining`` seconds are left.

    This is where a capture-style stop wants to place the next foot.
    """
    return dcm_at(xi, p, max(t_remaining, 0.0), params)


def com_step(com, xi, p, dt, params):
    """Advance the CoM by ``dt`` under ``c' = lambda (xi - c)``.

    The DCM is assumed to evolve with the stance foot ``p`` fixed during
    ``dt``, which makes the integration exact.

    :returns: The new CoM position.
    """
    lam = params.lam
    com, xi, p = (np.asarray(v, dtype=float) for v in (com, xi, p))
    return p + math.exp(-lam * dt) * (com - p) + math.sinh(lam * dt) * (xi - p)


def com_velocity(com, xi, params):
    'CoM velocity reconstructed from the DCM definition.'
    return params.lam * (np.asarray(xi, dtype=float) - np.asarray(com, dtype=float))


###########################################################################
#                         Capturability Bounds                            #
###########################################################################


def sagittal_capture_radius(l_max, t_min, delta_x, params):
    """Infinite-step sagittal bound on ``|z_k^x - p_k^x|``, tightened by a margin.

    Assumes all future steps may use the maximal stride at the shortest
    duration: ``L_max / (e^(lambda T_min) - 1) - delta_x``.

    :raises ValueError: if the resulting radius is not positive.
    """
    sigma_min = math.exp(params.lam * t_min)
    if sigma_min <= 1.0:
        raise ValueError('T_min must be positive to bound the sagittal DCM offset')

    radius = l_max / (sigma_min - 1.0) - delta_x
    if radius <= 0:
        raise ValueError('sagittal capture radius is not positive: {:.4f} m'.format(radius))
    return radius


def periodic_dcm(stride_x, stride_y, sigma, ell):
    """Step-initial DCM of the periodic gait with constant stride and timing.

    The stance foot sits at the origin; the lateral part lies on the inner
    (midline) side, i.e. negative for a left stance (``ell = 0``).
    """
    if sigma <= 1.0:
        raise ValueError('sigma must exceed 1 (got {})'.format(sigma))
    inner = -1.0 if ell == 0 else 1.0
    return np.array([stride_x / (sigma - 1.0), inner * stride_y / (sigma + 1.0)])


def lateral_ok(xi0_y, p_y, k, ell, delta_y):
    """Inner-side lateral corridor: the DCM must sit on the midline side.

    :param k: Step index (1-based).
    :param ell: Stance sign of the first step (0 = left, 1 = right).
    :returns: True if ``(-1)^(k + ell) (xi0_y - p_y) >= delta_y``.
    """
    if ell not in (0, 1):
        raise ValueError('ell must be 0 or 1')
    return (-1) ** (k + ell) * (xi0_y - p_y) >= delta_y


###########################################################################
#                                 State                                   #
###########################################################################


DcmState = namedtuple('DcmState', [
    'xi',          # instantaneous DCM (stance frame)
    'xi0',         # step-initial DCM
    'p',           # stance foot
    'stance_side',
    't_elapsed',
    'T_current'
])


def state_valid(state):
    'Check the in-step timing invariant of a :class:`DcmState`.'
    return 0.0 <= state.t_elapsed <= state.T_current + 1e-12 \
        and state.stance_side in (LEFT, RIGHT)


###########################################################################
#                                  Tests                                  #
###########################################################################


if __name__ == '__main__':
    import unittest

    PARAMS = TemplateParams(9.81, 0.9)

    class StepMapTests(unittest.TestCase):
        def test_lambda(self):
            self.assertAlmostEqual(PARAMS.lam, 3.2998, places=4)
            self.assertAlmostEqual(PARAMS.lam ** 2 * PARAMS.z_c, PARAMS.g, delta=1e-12)

        def test_fixed_point(self):
            p = np.array([0.3, -0.1])
            self.assertTrue(np.allclose(step_map(p, p, 0.4, PARAMS), p, atol=1e-15))

        def test_scalar_value(self):
            result = step_map([0.1, 0.0], [0.0, 0.0], 0.5, PARAMS)
            self.assertAlmostEqual(result[0], 0.5207, places=4)
            self.assertAlmostEqual(result[1], 0.0)

        def test_composition(self):
            xi0, p = np.array([0.2, 0.05]), np.array([0.01, -0.02])
            half = step_map(step_map(xi0, p, 0.25, PARAMS), p, 0.25, PARAMS)
            self.assertTrue(np.allclose(half, step_map(xi0, p, 0.5, PARAMS), atol=1e-12, rtol=0))

        def test_rejects_non_positive_duration(self):
            with self.assertRaises(ValueError):
                step_map([0, 0], [0, 0], 0.0, PARAMS)

        def test_offset_norm_scaling(self):
            rng = np.random.default_rng(1)
            xi0 = rng.uniform(-1, 1, size=(1000, 2))
            p = rng.uniform(-1, 1, size=(1000, 2))
            T = rng.uniform(0.05, 0.7, size=1000)
            result = step_map(xi0, p, T, PARAMS)
            lhs = np.linalg.norm(result - p, axis=1)
            rhs = np.exp(PARAMS.lam * T) * np.linalg.norm(xi0 - p, axis=1)
            self.assertTrue(np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12))

    class InStepTests(unittest.TestCase):
        def test_start_and_end(self):
            xi0, p = np.array([0.1, 0.05]), np.array([0.0, 0.0])
            self.assertTrue(np.allclose(dcm_at(xi0, p, 0.0, PARAMS), xi0))
            self.assertTrue(np.allclose(
                dcm_at(xi0, p, 0.5, PARAMS), step_map(xi0, p, 0.5, PARAMS), atol=1e-15
            ))

        def test_midpoint_between(self):
            xi0, p = np.array([0.1, 0.0]), np.array([0.0, 0.0])
            mid = dcm_at(xi0, p, 0.25, PARAMS)[0]
            end = step_map(xi0, p, 0.5, PARAMS)[0]
            self.assertTrue(xi0[0] < mid < end)

        def test_backward_value(self):
            result = backward_init([0.2, 0.0], 0.25, [0.0, 0.0], PARAMS)
            self.assertAlmostEqual(result[0], 0.0877, places=4)
            self.assertTrue(np.allclose(backward_init([0.2, 0.1], 0.0, [0, 0], PARAMS), [0.2, 0.1]))

        def test_round_trip_and_semigroup(self):
            rng = np.random.default_rng(7)
            count = 100000
            xi0 = rng.uniform(-1, 1, size=(count, 2))
            p = rng.uniform(-1, 1, size=(count, 2))
            s = rng.uniform(0, 0.7, size=count)
            t = rng.uniform(0, 0.7, size=count)

            forward = dcm_at(xi0, p, t, PARAMS)
            back = backward_init(forward, t, p, PARAMS)
            self.assertLess(np.max(np.abs(back - xi0)), 1e-12)

            once = dcm_at(xi0, p, s + t, PARAMS)
            twice = dcm_at(dcm_at(xi0, p, s, PARAMS), p, t, PARAMS)
            self.assertLess(np.max(np.abs(once - twice)), 1e-12)

        def test_offset_diverges(self):
            xi0, p = np.array([0.05, 0.02]), np.array([0.0, 0.0])
            norms = [np.linalg.norm(dcm_at(xi0, p, t, PARAMS) - p) for t in np.linspace(0, 0.7, 50)]
            self.assertTrue(all(b >= a for a, b in zip(norms, norms[1:])))

        def test_com_step_consistent(self):
            # Integrating the CoM in small pieces equals one big exact step.
            com, xi0, p = np.array([0.0, 0.0]), np.array([0.1, 0.03]), np.array([0.0, 0.0])
            big = com_step(com, xi0, p, 0.3, PARAMS)
            small, xi = com.copy(), xi0.copy()
            for _ in range(300):
                small = com_step(small, xi, p, 0.001, PARAMS)
                xi = dcm_at(xi, p, 0.001, PARAMS)
            self.assertTrue(np.allclose(big, small, atol=1e-12))

    class BoundTests(unittest.TestCase):
        def test_radius_values(self):
            self.assertAlmostEqual(sagittal_capture_radius(0.6, 0.3, 0.04, PARAMS), 0.3148, places=4)
            self.assertAlmostEqual(sagittal_capture_radius(0.6, 0.3, 0.0, PARAMS), 0.3548, places=4)

        def test_radius_monotone(self):
            for l_max in np.linspace(0.3, 0.9, 7):
                values = [sagittal_capture_radius(l_max, t, 0.0, PARAMS) for t in np.linspace(0.2, 0.8, 13)]
                self.assertTrue(all(b < a for a, b in zip(values, values[1:])))
            for t_min in np.linspace(0.2, 0.8, 7):
                values = [sagittal_capture_radius(l, t_min, 0.0, PARAMS) for l in np.linspace(0.3, 0.9, 13)]
                self.assertTrue(all(b > a for a, b in zip(values, values[1:])))

        def test_radius_rejects_infeasible(self):
            with self.assertRaises(ValueError):
                sagittal_capture_radius(0.6, 3.0, 0.04, PARAMS)

        def test_lateral(self):
            self.assertTrue(lateral_ok(0.05, 0.0, 1, 1, 0.04))
            self.assertTrue(lateral_ok(-0.05, 0.0, 2, 1, 0.04))
            self.assertFalse(lateral_ok(0.0, 0.0, 1, 1, 0.04))
            self.assertFalse(lateral_ok(0.05, 0.0, 2, 1, 0.04))

        def test_periodic_fixed_point(self):
            # One nominal step lands on the mirrored periodic state of the next stance.
            sigma = PARAMS.sigma(0.5)
            xi0 = periodic_dcm(0.5, 0.3, sigma, 0)
            foot = np.array([0.5, -0.3])
            after = step_map(xi0, [0.0, 0.0], 0.5, PARAMS)
            self.assertTrue(np.allclose(after - foot, periodic_dcm(0.5, 0.3, sigma, 1), atol=1e-12))
            self.assertAlmostEqual(xi0[0], 0.1189, places=4)
            with self.assertRaises(ValueError):
                periodic_dcm(0.5, 0.3, 1.0, 0)

        def test_sides(self):
            self.assertEqual(side_sign(LEFT), 0)
            self.assertEqual(side_sign(RIGHT), 1)
            self.assertEqual(other_side(LEFT), RIGHT)

    unittest.main()
