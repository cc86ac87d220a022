# -*- coding: utf-8 -*-
#
# adabias documentation build configuration file.
#
# Built with ``python setup.py build_sphinx`` (see setup.cfg).

import sys
import os

# The package is documented from the repository root.
sys.path.insert(0, os.path.abspath('../..'))

# -- General configuration ------------------------------------------------

# Docstrings follow the numpydoc layout; numerics and losses use :math:.
extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.mathjax',
    'sphinx.ext.viewcode',
    'numpydoc'
]

# Include init in class documentation.
autoclass_content = 'both'

# Order docstrings as in the source
autodoc_member_order = 'bysource'

# Suppress class members in toctree.
numpydoc_show_class_members = False

source_suffix = '.rst'
master_doc = 'index'

project = u'adabias'
copyright = u'2026, adabias developers'
author = u'adabias developers'
version = u'0.1'
release = u'0.1.0'

exclude_patterns = []
pygments_style = 'sphinx'

# -- Options for HTML output ----------------------------------------------

html_theme = 'sphinx_rtd_theme'
html_theme_options = {
    'collapse_navigation': False,
    'navigation_depth': 3,
    'titles_only': True,
}
html_static_path = []
htmlhelp_basename = 'adabiasdoc'
