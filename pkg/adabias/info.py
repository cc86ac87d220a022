# -*- coding: utf-8 -*-

"""PACKAGE INFO.

This module provides some basic information about the package.

"""

# Set the package release version
version_info = (0, 1, 0)
__version__ = '.'.join(str(c) for c in version_info)

# Set the package details
__author__ = 'adabias developers'
__year__ = '2026'
__description__ = ('Adaptive contextual biasing with entity detectors for '
                   'streaming transducers.')

# Default package properties
__license__ = 'MIT'
__about__ = ('{}\nAuthor: {} \nYear: {} \nInfo: {}'
             ''.format(__name__, __author__, __year__, __description__))
__setup_requires__ = ['pytest-runner', ]
__tests_require__ = ['pytest', 'pytest-cov', 'pytest-pycodestyle']
