# -*- coding: utf-8 -*-

"""ADABIAS PACKAGE.

Context-aware streaming transducers whose contextual biasing is switched
on and off per token by an entity detector.

"""

from .catt import CATT, catt_quickload
from . import numerics, context_encoder, transducer, entity_detector
from . import losses, grads, decoder, metrics, synth_task
from . import catt_utils, auxiliary_fun
from .info import __version__, __about__

__all__ = []  # List of submodules
__all__ += [CATT, catt_quickload]
__all__ += [numerics, context_encoder, transducer, entity_detector]
__all__ += [losses, grads, decoder, metrics, synth_task]
__all__ += [catt_utils, auxiliary_fun]
