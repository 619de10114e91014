#!/usr/bin/env python
# encoding: utf-8

"""
.. currentmodule:: bifrost.sim.scenario

Overview
--------

Scenario files: everything one closed-loop episode depends on.

A scenario is a small YAML document::

    name: push-recovery
    seed: 7
    field:
      family: corridor        # flat | random | corridor
      length: 6.0
      gap_range: [0.1, 0.3]
    sensor:
      dropout: 0.02           # -> sensor_dropout
    planner:
      horizon: 4              # -> planner_horizon
    sim:
      terrain_source: ground_truth
    disturbances:
      - {time: 2.25, impulse: [0.08, 0.0]}

The ``sensor``, ``planner`` and ``sim`` sections override the matching
prefixed keys of :data:`bifrost.session.DEFAULT_CONFIG`. The field seed
defaults to the scenario seed. Disturbance impulses are instantaneous
offsets of the DCM in meters (a velocity kick divided by lambda), in world
coordinates.

:meth:`Scenario.digest` hashes the canonical YAML form, so two runs that
claim to share a scenario can prove it.

Reference
---------
"""

# Stdlib:
import hashlib
import math
import os

from collections import namedtuple

# External:
import yaml

# Internal:
from bifrost.sim import ScenarioError
from bifrost.sim.field import corridor_field, flat_field, generate_field


FAMILIES = {
    'flat': flat_field,
    'random': generate_field,
    'corridor': corridor_field
}

# Scenario section -> config key prefix.
SECTIONS = (('sensor', 'sensor_'), ('planner', 'planner_'), ('sim', 'sim_'))


class Disturbance(namedtuple('Disturbance', ['time', 'impulse'])):
    """A push: the DCM jumps by ``impulse`` (world frame, meters) at ``time``."""
    __slots__ = ()

    def __new__(cls, time, impulse):
        try:
            time = float(time)
            impulse = (float(impulse[0]), float(impulse[1]))
        except (TypeError, ValueError, IndexError) as err:
            raise ScenarioError('malformed disturbance: {}'.format(err))

        if not all(math.isfinite(v) for v in (time, ) + impulse) or time < 0:
            raise ScenarioError('disturbance must be finite and not before t=0: {} {}'.format(
                time, impulse
            ))
        return super().__new__(cls, time, impulse)

    @staticmethod
    def from_velocity(time, velocity, params):
        'A velocity kick of the CoM expressed as DCM offset (``v / lambda``).'
        return Disturbance(time, (velocity[0] / params.lam, velocity[1] / params.lam))


class Scenario(namedtuple('Scenario', [
    'name', 'seed', 'field', 'sensor', 'planner', 'sim', 'disturbances'
])):
    """One closed-loop episode setup; see the module docs for the sections."""
    __slots__ = ()

    def __new__(cls, name='scenario', seed=0, field=None, sensor=None, planner=None, sim=None,
                disturbances=()):
        field = dict(field or {'family': 'corridor'})
        if field.get('family') not in FAMILIES:
            raise ScenarioError('unknown field family {!r} (expected one of {})'.format(
                field.get('family'), ', '.join(sorted(FAMILIES))
            ))

        disturbances = tuple(
            item if isinstance(item, Disturbance) else Disturbance(**item)
            for item in disturbances
        )
        return super().__new__(
            cls, str(name), int(seed), field,
            dict(sensor or {}), dict(planner or {}), dict(sim or {}),
            tuple(sorted(disturbances))
        )

    def with_seed(self, seed):
        """Same scenario with another seed; an explicit field seed is dropped."""
        field = dict(self.field)
        field.pop('seed', None)
        return self._replace(seed=int(seed), field=field)

    def build_field(self):
        """Generate the ground-truth :class:`StoneField`.

        :raises ScenarioError: on unknown parameters or infeasible fields.
        """
        params = dict(self.field)
        family = params.pop('family')
        if family != 'flat':
            params.setdefault('seed', self.seed)
        for key, value in params.items():
            if isinstance(value, list):
                params[key] = tuple(value)

        try:
            return FAMILIES[family](**params)
        except TypeError as err:
            raise ScenarioError('bad parameters for field family {!r}: {}'.format(family, err))

    def config(self, base):
        """Merge the override sections over ``base`` (a flat config dict).

        :raises ScenarioError: on keys ``base`` does not know.
        """
        merged = dict(base)
        for section, prefix in SECTIONS:
            for key, value in getattr(self, section).items():
                full = prefix + key
                if full not in base:
                    raise ScenarioError('unknown {} option {!r} (no config key {!r})'.format(
                        section, key, full
                    ))
                merged[full] = tuple(value) if isinstance(value, list) else value
        return merged

    ###################
    #  Serialization  #
    ###################

    def to_record(self):
        def plain(value):
            if isinstance(value, tuple):
                return [plain(v) for v in value]
            if isinstance(value, dict):
                return {key: plain(v) for key, v in value.items()}
            return value

        return {
            'name': self.name,
            'seed': self.seed,
            'field': plain(self.field),
            'sensor': plain(self.sensor),
            'planner': plain(self.planner),
            'sim': plain(self.sim),
            'disturbances': [
                {'time': item.time, 'impulse': list(item.impulse)}
                for item in self.disturbances
            ]
        }

    def to_yaml(self):
        return yaml.safe_dump(self.to_record(), sort_keys=True, default_flow_style=False)

    def digest(self):
        'SHA-1 of the canonical YAML bytes.'
        return hashlib.sha1(self.to_yaml().encode('utf-8')).hexdigest()


def scenario_from_record(record, default_name='scenario'):
    """Build a :class:`Scenario` from a parsed YAML mapping.

    :raises ScenarioError: on anything malformed.
    """
    if not isinstance(record, dict):
        raise ScenarioError('a scenario must be a mapping, got {}'.format(type(record).__name__))

    unknown = set(record) - set(Scenario._fields)
    if unknown:
        raise ScenarioError('unknown scenario sections: {}'.format(', '.join(sorted(unknown))))

    for section in ('field', 'sensor', 'planner', 'sim'):
        if not isinstance(record.get(section) or {}, dict):
            raise ScenarioError('section {!r} must be a mapping'.format(section))

    disturbances = record.get('disturbances') or []
    if not isinstance(disturbances, list) or not all(isinstance(d, dict) for d in disturbances):
        raise ScenarioError('disturbances must be a list of {time, impulse} mappings')

    try:
        return Scenario(
            name=record.get('name', default_name),
            seed=record.get('seed', 0),
            field=record.get('field'),
            sensor=record.get('sensor'),
            planner=record.get('planner'),
            sim=record.get('sim'),
            disturbances=disturbances
        )
    except (TypeError, ValueError) as err:
        if isinstance(err, ScenarioError):
            raise
        raise ScenarioError('malformed scenario: {}'.format(err))


def load_scenario(path):
    """Read a scenario file.

    :raises ScenarioError: if the file is missing, not YAML or malformed.
    """
    try:
        with open(path, 'r') as handle:
            record = yaml.safe_load(handle)
    except OSError as err:
        raise ScenarioError('cannot read scenario {}: {}'.format(path, err))
    except yaml.YAMLError as err:
        raise ScenarioError('scenario {} is not valid YAML: {}'.format(path, err))

    name = os.path.splitext(os.path.basename(path))[0]
    return scenario_from_record(record, default_name=name)


def dump_scenario(scenario, path):
    with open(path, 'w') as handle:
        handle.write(scenario.to_yaml())


###########################################################################
#                                  Tests                                  #
###########################################################################

if __name__ == '__main__':
    import tempfile
    import unittest

    from bifrost.dcm import TemplateParams
    from bifrost.session import DEFAULT_CONFIG

    EXAMPLE = """
name: push
seed: 7
field:
  family: corridor
  length: 3.0
  gap_range: [0.1, 0.2]
planner:
  horizon: 3
sim:
  terrain_source: ground_truth
disturbances:
  - {time: 1.5, impulse: [0.08, 0.0]}
  - {time: 0.5, impulse: [0.0, -0.02]}
"""

    BASE = {'planner_horizon': 4, 'sim_terrain_source': 'heightmap', 'sensor_dropout': 0.02}

    class ScenarioTests(unittest.TestCase):
        def setUp(self):
            self.scenario = scenario_from_record(yaml.safe_load(EXAMPLE))

        def test_parse(self):
            self.assertEqual(self.scenario.seed, 7)
            self.assertEqual([d.time for d in self.scenario.disturbances], [0.5, 1.5])
            config = self.scenario.config(BASE)
            self.assertEqual(config['planner_horizon'], 3)
            self.assertEqual(config['sim_terrain_source'], 'ground_truth')
            self.assertEqual(config['sensor_dropout'], 0.02)

        def test_file_round_trip(self):
            with tempfile.TemporaryDirectory() as tmp:
                path = os.path.join(tmp, 'push.yml')
                dump_scenario(self.scenario, path)
                back = load_scenario(path)
            self.assertEqual(back.digest(), self.scenario.digest())
            self.assertEqual(back, self.scenario)

        def test_digest(self):
            self.assertEqual(len(self.scenario.digest()), 40)
            self.assertNotEqual(self.scenario.with_seed(8).digest(), self.scenario.digest())

        def test_field_follows_seed(self):
            first = self.scenario.build_field()
            self.assertEqual(first.rng_seed, 7)
            self.assertEqual(first.digest(), self.scenario.build_field().digest())
            self.assertEqual(self.scenario.with_seed(8).build_field().rng_seed, 8)

        def test_unknown_keys(self):
            with self.assertRaises(ScenarioError):
                self.scenario._replace(planner={'horizn': 3}).config(BASE)
            with self.assertRaises(ScenarioError):
                scenario_from_record({'feld': {}})
            with self.assertRaises(ScenarioError):
                Scenario(field={'family': 'lava'})
            with self.assertRaises(ScenarioError):
                Scenario(field={'family': 'random', 'density': 1.0}).build_field()

        def test_bad_disturbance(self):
            with self.assertRaises(ScenarioError):
                Disturbance(float('nan'), (0, 0))
            with self.assertRaises(ScenarioError):
                scenario_from_record({'disturbances': [{'time': 1.0, 'impulse': 'x'}]})

        def test_bad_file(self):
            with tempfile.TemporaryDirectory() as tmp:
                path = os.path.join(tmp, 'broken.yml')
                with open(path, 'w') as handle:
                    handle.write('field: [unclosed\n')
                with self.assertRaises(ScenarioError):
                    load_scenario(path)
                with self.assertRaises(ScenarioError):
                    load_scenario(os.path.join(tmp, 'missing.yml'))

        def test_shipped_scenarios(self):
            directory = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', '..', 'scenarios')
            if not os.path.isdir(directory):
                self.skipTest('no scenario directory next to the package')
            for name in sorted(os.listdir(directory)):
                scenario = load_scenario(os.path.join(directory, name))
                scenario.config(DEFAULT_CONFIG)
                self.assertGreater(len(scenario.build_field()), 0)

        def test_from_velocity(self):
            params = TemplateParams()
            push = Disturbance.from_velocity(1.0, (0.33, 0.0), params)
            self.assertAlmostEqual(push.impulse[0], 0.33 / params.lam)

    unittest.main()
