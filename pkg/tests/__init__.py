# -*- coding: utf-8 -*-

"""Unit Tests

Unit testing framework for the package.

"""

__all__ = ['test_numerics', 'test_losses', 'test_metrics',
           'test_context_encoder', 'test_entity_detector',
           'test_transducer', 'test_decoder', 'test_synth_task',
           'test_catt', 'test_auxiliary_fun',
           'test_trends']  # List of submodules
