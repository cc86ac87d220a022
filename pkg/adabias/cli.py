# -*- coding: utf-8 -*-

r"""COMMAND LINE.

Entry point of the ``adabias`` script::

    adabias gen   --config config_CATT.ini
    adabias train --config config_CATT.ini --variant catt+ped
    adabias eval  --config config_CATT.ini --mode off,on,ped --bias-n 0,20
    adabias bench --config config_CATT.ini --mode on,ped
    adabias trends --config example/config_trends.ini

Exit codes: ``0`` success, ``2`` configuration error, ``3`` runtime error.

"""

from __future__ import absolute_import, print_function
import argparse
import logging
import sys
from adabias.auxiliary_fun import ConfigError, run_pipeline
from adabias.catt import VARIANTS
from adabias.info import __version__
from adabias.trends import run_trends

logger = logging.getLogger('adabias')

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
COMMANDS = ('gen', 'train', 'eval', 'bench', 'trends')


class _ArgumentParser(argparse.ArgumentParser):
    r"""Argument parser raising instead of exiting on bad flags."""

    def error(self, message):
        raise ConfigError(message)


def _int_list(text):
    try:
        return [int(item) for item in text.split(',') if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            'expected comma separated integers, got {!r}'.format(text))


def _name_list(text):
    return [item.strip() for item in text.split(',') if item.strip()]


def build_parser():
    r"""Build the argument parser of the ``adabias`` script."""
    parser = _ArgumentParser(
        prog='adabias',
        description='Adaptive contextual biasing for streaming transducers.')
    parser.add_argument('--version', action='version',
                        version='%(prog)s ' + __version__)
    subparsers = parser.add_subparsers(dest='command')

    for command in COMMANDS:
        sub = subparsers.add_parser(command)
        sub.add_argument('--config', required=True,
                         help='INI configuration file.')
        sub.add_argument('--seed', type=int, default=None,
                         help='Override every seed of the configuration.')
        sub.add_argument('--out', dest='out_dir', default=None,
                         help='Output directory.')
        sub.add_argument('--data', dest='data_dir', default=None,
                         help='Dataset directory.')
        sub.add_argument('--verbose', '-v', action='store_true',
                         help='Log progress messages.')
        if command == 'train':
            sub.add_argument('--variant', choices=VARIANTS, default=None)
        if command in ('eval', 'bench'):
            sub.add_argument('--checkpoint', default=None,
                             help='Checkpoint path.')
            sub.add_argument('--mode', dest='modes', type=_name_list,
                             default=None,
                             help='Comma separated decode modes (off, on, '
                                  'ped, eped, random50).')
            sub.add_argument('--threads', type=int, default=None)
        if command == 'eval':
            sub.add_argument('--bias-n', dest='bias_n', type=_int_list,
                             default=None,
                             help='Comma separated bias list sizes.')
    return parser


def main(argv=None):
    r"""Run the ``adabias`` command line.

    Parameters
    ----------
    argv: list of str
        Arguments; default is ``sys.argv[1:]``.

    Returns
    -------
    int
        Exit code.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise ConfigError('A command among {} is required.'.format(
                ', '.join(COMMANDS)))
    except ConfigError as err:
        print('adabias: error: {}'.format(err), file=sys.stderr)
        return EXIT_CONFIG

    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format='%(asctime)s %(name)s %(levelname)s: %(message)s')

    overrides = dict((key, getattr(args, key, None)) for key in
                     ('seed', 'out_dir', 'data_dir', 'variant', 'checkpoint',
                      'modes', 'threads', 'bias_n'))
    try:
        if args.command == 'trends':
            run_trends(args.config, overrides=overrides,
                       verbose=args.verbose)
        else:
            run_pipeline(args.command, args.config, overrides=overrides,
                         verbose=args.verbose)
    except ConfigError as err:
        logger.error('Configuration error: %s', err)
        return EXIT_CONFIG
    except Exception as err:
        logger.error('%s failed: %s', args.command, err)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
