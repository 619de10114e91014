#!/usr/bin/env python
# encoding: utf-8

"""
Overview
========

A desk-scale closed loop around the planner.

The walker is the DCM template itself: its DCM follows the closed form of
:mod:`bifrost.dcm` exactly, the swing foot is kinematic and the step timing
is carried by a phase variable. Terrain comes from a ground-truth stone
field, either straight as polygons or through synthetic depth sensing and
the heightmap.

    * :mod:`bifrost.sim.field` - stone fields.
    * :mod:`bifrost.sim.sensor` - synthetic depth sensors.
    * :mod:`bifrost.sim.swing` - minimum-jerk swing foot.
    * :mod:`bifrost.sim.scenario` - scenario files.
    * :mod:`bifrost.sim.walker` - the closed loop and its log.

No contact or joint dynamics are simulated; every output says so in its
header.

Reference
=========
"""

# Every CSV written by the harness starts with this line.
TEMPLATE_HEADER = '# template simulator (DCM point-foot model), not a physics simulation'

# Episode outcomes:
GOAL_REACHED, FALL, TIMEOUT = 'goal_reached', 'fall', 'timeout'
OUTCOMES = (GOAL_REACHED, FALL, TIMEOUT)

# Everything below ground level that is not a stone:
PIT_HEIGHT = -0.5


class ScenarioError(ValueError):
    'Malformed scenario data or a stone field that cannot be generated.'
