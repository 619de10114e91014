#!/usr/bin/env python
# encoding: utf-8

"""
.. currentmodule:: bifrost.sim.swing

Overview
--------

Minimum-jerk swing foot, parameterized by the step phase.

The planar foot path is a quintic in the phase ``phi`` with zero velocity
and acceleration at touchdown (``phi = 1``). All derivatives are taken with
respect to the phase, so a change of the step duration only changes how
fast the phase runs, not the path.

When the planner moves the landing target during the swing,
:meth:`SwingTrajectory.retarget` starts a new quintic from the current
position, velocity and acceleration, so the foot path stays continuous up
to the second derivative. The foot height follows a separate symmetric
bump ``16 h phi^2 (1 - phi)^2`` that peaks at mid-swing.

Reference
---------
"""

# External:
import numpy as np


class SwingTrajectory:
    """Quintic from the state at ``phase0`` to ``target`` at phase 1.

    :param start: Position at ``phase0`` (2D).
    :param target: Landing position (2D).
    :param phase0: Phase the segment starts at, in [0, 1).
    :param velocity: d position / d phase at ``phase0``.
    :param acceleration: d^2 position / d phase^2 at ``phase0``.
    :param apex: Peak foot clearance at mid-swing.
    """
    def __init__(self, start, target, phase0=0.0, velocity=None, acceleration=None, apex=0.1):
        if not 0.0 <= phase0 < 1.0:
            raise ValueError('a swing segment must start in [0, 1), got {}'.format(phase0))

        self.start = np.asarray(start, dtype=float)
        self.target = np.asarray(target, dtype=float)
        self.phase0 = float(phase0)
        self.apex = float(apex)

        xd = np.zeros(2) if velocity is None else np.asarray(velocity, dtype=float)
        xdd = np.zeros(2) if acceleration is None else np.asarray(acceleration, dtype=float)

        # Coefficients over s = phi - phase0 with tau phase units left,
        # ending at rest on the target.
        tau = 1.0 - self.phase0
        dist = self.target - self.start
        v0, a0 = xd * tau, xdd * tau ** 2
        self._coeffs = (
            (6.0 * dist - a0 / 2.0 - 3.0 * v0) / tau ** 5,
            (-15.0 * dist + 3.0 * a0 / 2.0 + 8.0 * v0) / tau ** 4,
            (10.0 * dist - 3.0 * a0 / 2.0 - 6.0 * v0) / tau ** 3,
            xdd / 2.0,
            xd,
            self.start
        )

    def __repr__(self):
        return '<SwingTrajectory {} -> {} from phase {:.3f}>'.format(
            self.start.tolist(), self.target.tolist(), self.phase0
        )

    def _offset(self, phase):
        if not -1e-12 <= phase <= 1.0 + 1e-12:
            raise ValueError('phase must be in [0, 1], got {}'.format(phase))
        return min(max(phase, self.phase0), 1.0) - self.phase0

    def position(self, phase):
        c5, c4, c3, c2, c1, c0 = self._coeffs
        s = self._offset(phase)
        return ((((c5 * s + c4) * s + c3) * s + c2) * s + c1) * s + c0

    def velocity(self, phase):
        c5, c4, c3, c2, c1, _ = self._coeffs
        s = self._offset(phase)
        return (((5.0 * c5 * s + 4.0 * c4) * s + 3.0 * c3) * s + 2.0 * c2) * s + c1

    def acceleration(self, phase):
        c5, c4, c3, c2, _, _ = self._coeffs
        s = self._offset(phase)
        return ((20.0 * c5 * s + 12.0 * c4) * s + 6.0 * c3) * s + 2.0 * c2

    def height(self, phase):
        phase = min(max(phase, 0.0), 1.0)
        return 16.0 * self.apex * phase ** 2 * (1.0 - phase) ** 2

    def retarget(self, phase, target):
        """Continue from the current state at ``phase`` toward a new target.

        At touchdown (phase 1) there is nothing left to move; the old
        trajectory is returned unchanged.
        """
        if phase >= 1.0:
            return self
        return SwingTrajectory(
            self.position(phase), target, phase,
            self.velocity(phase), self.acceleration(phase), self.apex
        )


def swing_trajectory(start, target, phase, apex=0.1):
    """Foot position of a fresh swing from ``start`` to ``target``.

    :returns: (planar position, height) at ``phase``.
    """
    swing = SwingTrajectory(start, target, apex=apex)
    return swing.position(phase), swing.height(phase)


###########################################################################
#                                  Tests                                  #
###########################################################################

if __name__ == '__main__':
    import unittest

    class SwingTests(unittest.TestCase):
        def test_boundaries(self):
            start, target = np.array([0.0, -0.3]), np.array([0.55, 0.02])
            for phase, expected in [(0.0, start), (1.0, target)]:
                position, height = swing_trajectory(start, target, phase)
                self.assertTrue(np.allclose(position, expected, atol=1e-12))
                self.assertAlmostEqual(height, 0.0)

            swing = SwingTrajectory(start, target)
            for phase in (0.0, 1.0):
                self.assertTrue(np.allclose(swing.velocity(phase), 0.0, atol=1e-12))
                self.assertTrue(np.allclose(swing.acceleration(phase), 0.0, atol=1e-12))
            self.assertAlmostEqual(swing.height(0.5), 0.1)

        def test_constant(self):
            point = np.array([0.2, 0.1])
            swing = SwingTrajectory(point, point)
            for phase in np.linspace(0, 1, 11):
                self.assertTrue(np.allclose(swing.position(phase), point, atol=1e-15))

        def test_midpoint_symmetric(self):
            swing = SwingTrajectory([0.0, 0.0], [1.0, 2.0])
            self.assertTrue(np.allclose(swing.position(0.5), [0.5, 1.0]))

        def test_retarget_continuous(self):
            swing = SwingTrajectory([0.0, -0.3], [0.5, 0.0])
            moved = swing.retarget(0.5, [0.6, 0.0])

            self.assertTrue(np.allclose(moved.position(0.5), swing.position(0.5), atol=1e-15))
            self.assertTrue(np.allclose(moved.velocity(0.5), swing.velocity(0.5), atol=1e-12))
            self.assertTrue(np.allclose(moved.acceleration(0.5), swing.acceleration(0.5), atol=1e-12))
            self.assertTrue(np.allclose(moved.position(1.0), [0.6, 0.0], atol=1e-12))
            self.assertTrue(np.allclose(moved.velocity(1.0), 0.0, atol=1e-9))

            # Central difference across the retarget instant, old path on the left.
            h = 1e-4
            central = (moved.position(0.5 + h) - swing.position(0.5 - h)) / (2 * h)
            self.assertLess(np.max(np.abs(central - swing.velocity(0.5))), 1e-6)

            # The path stays the same up to the jerk term.
            gap = np.abs(moved.position(0.5 + 1e-3) - swing.position(0.5 + 1e-3))
            self.assertLess(np.max(gap), 1e-6)

        def test_retarget_at_touchdown(self):
            swing = SwingTrajectory([0.0, 0.0], [0.5, 0.0])
            self.assertIs(swing.retarget(1.0, [0.7, 0.0]), swing)

        def test_phase_range(self):
            with self.assertRaises(ValueError):
                SwingTrajectory([0, 0], [1, 0]).position(1.5)
            with self.assertRaises(ValueError):
                SwingTrajectory([0, 0], [1, 0], phase0=1.0)

    unittest.main()
