#!/usr/bin/env python
# encoding: utf-8

"""
Overview
--------

Plot-ready data of an episode.

Nothing is drawn here. :func:`emit_plots` writes one small CSV per panel,
each starting with the template simulator comment, so any plotting tool
can pick them up:

    ================== =====================================================
    ``footprints.csv`` one row per completed step: stance and landing point
    ``stones.csv``     stone polygons, one row per vertex
    ``traces.csv``     CoM, DCM and stance foot per tick (world frame)
    ``velocity.csv``   CoM velocity per tick
    ``durations.csv``  current step duration per tick
    ``initial_dcm.csv`` planned initial DCM next to the measured one per replan
    ================== =====================================================

Reference
---------
"""

# Stdlib:
import csv
import os

import logging
LOGGER = logging.getLogger(__name__)

# Internal:
from bifrost.sim import TEMPLATE_HEADER


FOOTPRINT_HEADER = [
    'step', 'stance', 'start', 'duration', 'stance_x', 'stance_y',
    'landing_x', 'landing_y', 'stone', 'region'
]
STONE_HEADER = ['stone', 'vertex', 'x', 'y', 'height']
TRACE_HEADER = ['time', 'step', 'p_x', 'p_y', 'com_x', 'com_y', 'xi_x', 'xi_y']
VELOCITY_HEADER = ['time', 'com_vx', 'com_vy']
DURATION_HEADER = ['time', 'step', 'phase', 'T_current']
INITIAL_DCM_HEADER = [
    'time', 'step', 't_elapsed', 'status', 'z1_x', 'z1_y', 'xi_x', 'xi_y', 'sigma1', 'duration'
]


def write_csv(path, rows, header, comments=(TEMPLATE_HEADER, )):
    """Write ``rows`` (dicts) below ``#`` comment lines and a header.

    Keys missing in a row become empty cells, unknown keys are ignored.
    """
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        for line in comments:
            handle.write(line if line.startswith('#') else '# ' + line)
            handle.write('\n')

        writer = csv.DictWriter(handle, fieldnames=header, extrasaction='ignore', lineterminator='\n')
        writer.writeheader()
        for row in rows:
            writer.writerow({key: row.get(key, '') for key in header})
    return path


def _num(value):
    return '' if value is None else '{:.6f}'.format(value)


def footprint_rows(log):
    for step in log.steps:
        yield {
            'step': step.index, 'stance': step.stance,
            'start': _num(step.start), 'duration': _num(step.duration),
            'stance_x': _num(step.stance_world[0]), 'stance_y': _num(step.stance_world[1]),
            'landing_x': _num(step.landing_world[0]), 'landing_y': _num(step.landing_world[1]),
            'stone': '' if step.stone is None else step.stone,
            'region': '' if step.region is None else step.region
        }


def stone_rows(field):
    for stone in field or ():
        for idx, (x, y) in enumerate(stone.vertices):
            yield {
                'stone': stone.id, 'vertex': idx,
                'x': _num(x), 'y': _num(y), 'height': _num(stone.mean_height)
            }


def tick_rows(log, header):
    'Pick the ``header`` columns of every log row; the cells stay as logged.'
    indices = [log.COLUMNS.index(name) for name in header]
    for row in log.rows:
        yield {name: row[idx] for name, idx in zip(header, indices)}


def initial_dcm_rows(log):
    for record in log.replans:
        z1 = record.z1 if record.z1 is not None else (None, None)
        yield {
            'time': _num(record.time), 'step': record.step,
            't_elapsed': _num(record.t_elapsed), 'status': record.status,
            'z1_x': _num(z1[0]), 'z1_y': _num(z1[1]),
            'xi_x': _num(record.xi[0]), 'xi_y': _num(record.xi[1]),
            'sigma1': _num(record.sigma1), 'duration': _num(record.duration)
        }


def emit_plots(log, out_dir, field=None):
    """Write all panel CSVs of ``log`` into ``out_dir``.

    :param log: A :class:`bifrost.sim.walker.TrajectoryLog`; an empty log
                gives files with headers only.
    :param field: The :class:`StoneField` for the stone overlay (optional).
    :returns: dict of panel name to written path.
    """
    os.makedirs(out_dir, exist_ok=True)
    comments = log.header_lines()

    panels = [
        ('footprints', footprint_rows(log), FOOTPRINT_HEADER),
        ('stones', stone_rows(field), STONE_HEADER),
        ('traces', tick_rows(log, TRACE_HEADER), TRACE_HEADER),
        ('velocity', tick_rows(log, VELOCITY_HEADER), VELOCITY_HEADER),
        ('durations', tick_rows(log, DURATION_HEADER), DURATION_HEADER),
        ('initial_dcm', initial_dcm_rows(log), INITIAL_DCM_HEADER)
    ]

    paths = {}
    for name, rows, header in panels:
        paths[name] = write_csv(os.path.join(out_dir, name + '.csv'), rows, header, comments)

    LOGGER.info('wrote {} panel files to {}'.format(len(paths), out_dir))
    return paths


###########################################################################
#                                  Tests                                  #
###########################################################################

if __name__ == '__main__':
    import tempfile
    import unittest

    from bifrost.sim.scenario import Scenario
    from bifrost.sim.walker import TrajectoryLog, step_closed_loop

    def read_rows(path):
        with open(path) as handle:
            lines = [line for line in handle if not line.startswith('#')]
        return list(csv.DictReader(lines))

    class EmitPlotsTests(unittest.TestCase):
        def test_empty_log(self):
            with tempfile.TemporaryDirectory() as tmp:
                paths = emit_plots(TrajectoryLog(), tmp)
                self.assertEqual(len(paths), 6)
                for path in paths.values():
                    with open(path) as handle:
                        lines = handle.read().splitlines()
                    self.assertEqual(lines[0], TEMPLATE_HEADER)
                    self.assertEqual(len(lines), 3)

        def test_flat_run(self):
            scenario = Scenario(name='flat', field={'family': 'flat'}, sim={'terrain_source': 'ground_truth'})
            log = step_closed_loop(scenario, horizon=1.5)
            with tempfile.TemporaryDirectory() as tmp:
                paths = emit_plots(log, tmp, scenario.build_field())

                footprints = read_rows(paths['footprints'])
                self.assertEqual(len(footprints), len(log.steps))
                self.assertEqual(len(read_rows(paths['traces'])), len(log))
                self.assertEqual(len(read_rows(paths['stones'])), 4)

                initial = read_rows(paths['initial_dcm'])
                self.assertEqual(len(initial), len(log.replans))
                self.assertTrue(all(row['z1_x'] for row in initial))

                durations = [float(row['T_current']) for row in read_rows(paths['durations'])]
                self.assertTrue(all(0.3 - 1e-9 <= value <= 0.7 + 1e-9 for value in durations))

    unittest.main()
