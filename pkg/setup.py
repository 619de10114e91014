from setuptools import setup
from bifrost import __version__, __url__


def parse_requirements(path):
    with open(path, 'r') as handle:
        for line in handle:
            line = line.strip()
            if line and not line.startswith('#'):
                yield line


setup(
    name='libbifrost',
    version=__version__,
    description='Perceptive footstep planning on stepping stones with a DCM template and an MIQP planner',
    long_description=open('README.rst').read(),
    url=__url__,
    license='GPLv3',
    packages=[
        'bifrost',
        'bifrost.geometry',
        'bifrost.perception',
        'bifrost.planner',
        'bifrost.sim',
    ],
    install_requires=list(parse_requirements('pip_requirements.txt')),
    extras_require={
        'color': list(parse_requirements('pip_optional_requirements.txt'))
    },
    entry_points={
        'console_scripts': ['bifrost = bifrost.cli:main']
    }
)
