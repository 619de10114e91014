"""Collect the unit tests that live in ``if __name__ == '__main__':`` blocks.

The package keeps its tests inline (see run_tests.sh, which runs every
module with ``python -m``).  This collector does the same for pytest: it
executes each such module as ``__main__`` with ``unittest.main`` disabled
and hands the resulting ``unittest.TestCase`` classes to pytest.
"""

import re
import sys
import types
import unittest
from pathlib import Path

import pytest

_ROOT = Path(__file__).parent
_MAIN_RE = re.compile(r"^if __name__ == '__main__':", re.MULTILINE)


def _module_name(path):
    rel = Path(path).relative_to(_ROOT).with_suffix('')
    parts = list(rel.parts)
    if parts[-1] == '__init__':
        parts.pop()
    return '.'.join(parts)


class MainBlockModule(pytest.Module):
    def _getobj(self):
        name = _module_name(self.path)
        is_package = self.path.name == '__init__.py'
        module = types.ModuleType('__main__')
        module.__file__ = str(self.path)
        module.__package__ = name if is_package else name.rpartition('.')[0]
        code = compile(self.path.read_text(), str(self.path), 'exec')
        original = unittest.main
        unittest.main = lambda *args, **kwargs: None
        saved = sys.modules.get('__main__')
        sys.modules['__main__'] = module
        try:
            exec(code, module.__dict__)
        finally:
            unittest.main = original
            sys.modules['__main__'] = saved
        return module

    # Like ``python -m``, the module is ``sys.modules['__main__']`` while its
    # tests run (mock.patch('__main__...') and pickling rely on it).
    def setup(self):
        self._saved_main = sys.modules.get('__main__')
        sys.modules['__main__'] = self.obj
        super().setup()

    def teardown(self):
        super().teardown()
        sys.modules['__main__'] = self._saved_main


def pytest_collect_file(file_path, parent):
    if file_path.suffix != '.py' or file_path.name == '__main__.py':
        return None
    try:
        file_path.relative_to(_ROOT / 'bifrost')
    except ValueError:
        return None
    source = file_path.read_text()
    if 'unittest' not in source or not _MAIN_RE.search(source):
        return None
    return MainBlockModule.from_parent(parent, path=file_path)
