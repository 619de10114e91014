#!/usr/bin/env python
# encoding: utf-8

"""
Overview
--------

Logging setup for the command line harness.

Library modules only ever do ``LOGGER = logging.getLogger(__name__)``;
:func:`create_logger` is called once by the front end and installs a
(optionally colored) console handler plus a rotating file handler.

Reference
---------
"""

import logging
import logging.handlers


COLORED_FORMAT = "%(asctime)s%(reset)s %(log_color)s{logsymbol} \
%(levelname)-8s%(reset)s %(bold_blue)s[%(filename)s:%(lineno)3d]%(reset)s \
%(bold_black)s%(name)s:%(reset)s %(message)s"

SIMPLE_FORMAT = "%(asctime)s %(levelname)-8s [%(filename)s:%(lineno)3d] \
%(name)s: %(message)s"

DATE_FORMAT = "%H:%M:%S"
UNICODE_ICONS = {
    logging.DEBUG: '⚙',
    logging.INFO: '⚐',
    logging.WARNING: '⚠',
    logging.ERROR: '⚡',
    logging.CRITICAL: '☠'
}

# Set on loggers that already went through create_logger().
_CONFIGURED_MARK = '_bifrost_configured'


def _console_formatter():
    """Build the console formatter, colored if ``colorlog`` is importable."""
    try:
        import colorlog
    except ImportError:
        return logging.Formatter(SIMPLE_FORMAT, datefmt=DATE_FORMAT)

    class SymbolFormatter(colorlog.ColoredFormatter):
        def format(self, record):
            result = colorlog.ColoredFormatter.format(self, record)
            return result.replace(
                '{logsymbol}', UNICODE_ICONS.get(record.levelno, ' ')
            )

    return SymbolFormatter(COLORED_FORMAT, datefmt=DATE_FORMAT, reset=False)


def verbosity_level(count):
    """Map a ``-v`` count from the command line to a logging level.

    :param count: How often -v was given (0 means warnings only).
    :returns: One of logging.WARNING, logging.INFO, logging.DEBUG.
    """
    if count <= 0:
        return logging.WARNING
    return logging.INFO if count == 1 else logging.DEBUG


def create_logger(name=None, log_file=None, verbosity=logging.INFO):
    """Create (or re-use) a logger with bifrost's defaults.

    :param name: A user-defined name that describes the logger, None for root.
    :param log_file: Optional path; a 10 MB rotating file handler is attached.
    :param verbosity: The level of the returned logger.
    :returns: The configured logger.
    """
    logger = logging.getLogger(name)
    logger.setLevel(verbosity)

    if getattr(logger, _CONFIGURED_MARK, False):
        return logger

    stream = logging.StreamHandler()
    stream.setFormatter(_console_formatter())
    logger.addHandler(stream)

    if log_file is not None:
        file_stream = logging.handlers.RotatingFileHandler(
            filename=log_file,
            maxBytes=(1024 ** 2 * 10),  # 10 MB
            backupCount=2,
            delay=True
        )
        file_stream.setFormatter(
            logging.Formatter(SIMPLE_FORMAT, datefmt=DATE_FORMAT)
        )
        logger.addHandler(file_stream)

    setattr(logger, _CONFIGURED_MARK, True)
    return logger


if __name__ == '__main__':
    import sys
    import unittest

    if '--cli' in sys.argv:
        logger = create_logger('Heimdall', log_file='/tmp/bifrost.log', verbosity=logging.DEBUG)
        logger.debug('Hello, I guard the bridge.')
        logger.info('I will be your logging guide for today.')
        logger.warning('You only need to call create_logger(None) for the root logger.')
        logger.error('Afterwards use logging.getLogger(__name__) in every module.')
        logger.critical("That's it.")
    else:
        class LogutilTests(unittest.TestCase):
            def test_verbosity(self):
                self.assertEqual(verbosity_level(0), logging.WARNING)
                self.assertEqual(verbosity_level(1), logging.INFO)
                self.assertEqual(verbosity_level(5), logging.DEBUG)

            def test_create_twice(self):
                first = create_logger('bifrost.test.logutil')
                handlers = len(first.handlers)
                second = create_logger('bifrost.test.logutil', verbosity=logging.DEBUG)
                self.assertIs(first, second)
                self.assertEqual(len(second.handlers), handlers)
                self.assertEqual(second.level, logging.DEBUG)

        unittest.main()
