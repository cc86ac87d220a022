# -*- coding: utf-8 -*-

r"""DECODER.

Frame-synchronous greedy decoding of a :class:`adabias.catt.CATT` model
with per-token control of contextual biasing.

For every frame the encoder output is computed, then the joint is queried
until it predicts blank or ``max_symbols_per_frame`` tokens were emitted.
The gate in force decides whether the joint consumes embeddings biased
with the full phrase list or with the empty list (the no-bias row). After
every emitted token the gate is updated according to the decode mode:

========================  ===================================================
``AlwaysOff``             empty list throughout
``AlwaysOn``              full list throughout
``AdaptivePED``           predictor-based detector on the new predictor output
``AdaptiveEPED``          encoder-predictor detector over the frames so far
``Random50``              seeded coin flip
``Forced``                replay of a recorded gate trace
========================  ===================================================

"""

from __future__ import absolute_import, print_function
import io
import json
import logging
import numpy as np
from adabias.numerics import Tensor, concat, no_grad
from adabias.context_encoder import as_phrases, empty_context
from adabias.entity_detector import ed_decide
from adabias.transducer import BLANK, SOS, as_frames

logger = logging.getLogger(__name__)

INITIAL_GATES = ('detect', 'on', 'off')


class DecodeMode(object):
    r"""Biasing mode of a decode.

    Parameters
    ----------
    kind: str
        One of :attr:`KINDS`.
    seed: int
        Seed of ``Random50`` draws.
    trace: sequence of bool
        Gate trace replayed by ``Forced``.
    """

    KINDS = ('AlwaysOff', 'AlwaysOn', 'AdaptivePED', 'AdaptiveEPED',
             'Random50', 'Forced')
    ALIASES = {'off': 'AlwaysOff', 'alwaysoff': 'AlwaysOff',
               'on': 'AlwaysOn', 'alwayson': 'AlwaysOn',
               'ped': 'AdaptivePED', 'adaptiveped': 'AdaptivePED',
               'eped': 'AdaptiveEPED', 'adaptiveeped': 'AdaptiveEPED',
               'random50': 'Random50', 'forced': 'Forced'}

    def __init__(self, kind, seed=None, trace=None):
        r"""Initialize class attributes."""
        if kind not in self.KINDS:
            raise ValueError('Unknown decode mode {}.'.format(kind))
        if kind == 'Random50' and seed is None:
            raise ValueError('Random50 needs an explicit seed.')
        if kind == 'Forced':
            if trace is None or len(trace) == 0:
                raise ValueError('Forced mode needs a nonempty gate trace.')
            trace = tuple(bool(gate) for gate in trace)
        self.kind = kind
        self.seed = seed
        self.trace = trace

    @classmethod
    def always_off(cls):
        return cls('AlwaysOff')

    @classmethod
    def always_on(cls):
        return cls('AlwaysOn')

    @classmethod
    def adaptive_ped(cls):
        return cls('AdaptivePED')

    @classmethod
    def adaptive_eped(cls):
        return cls('AdaptiveEPED')

    @classmethod
    def random50(cls, seed):
        return cls('Random50', seed=seed)

    @classmethod
    def forced(cls, trace):
        return cls('Forced', trace=trace)

    @classmethod
    def parse(cls, name, seed=0):
        r"""Mode from a command-line name such as ``'ped'`` or ``'AlwaysOn'``.
        """
        kind = cls.ALIASES.get(name.strip().lower().replace('-', '')
                               .replace('_', ''))
        if kind is None or kind == 'Forced':
            raise ValueError('Unknown decode mode {}; choose among off, on, '
                             'ped, eped, random50.'.format(name))
        return cls(kind, seed=seed if kind == 'Random50' else None)

    @property
    def name(self):
        return self.kind

    @property
    def uses_bias(self):
        return self.kind != 'AlwaysOff'

    @property
    def detector_kind(self):
        return {'AdaptivePED': 'ped', 'AdaptiveEPED': 'eped'}.get(self.kind)

    def __eq__(self, other):
        return (isinstance(other, DecodeMode) and
                (self.kind, self.seed, self.trace) ==
                (other.kind, other.seed, other.trace))

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return hash((self.kind, self.seed, self.trace))

    def __repr__(self):
        if self.kind == 'Random50':
            return 'DecodeMode(Random50, seed={})'.format(self.seed)
        return 'DecodeMode({})'.format(self.kind)


class NullBiasCache(object):
    r"""Empty-list context and its query-independent attention outputs.

    With only the no-bias row as key, every query puts a weight of exactly
    one on it, so the biased embedding is the same row for all queries and
    is computed once.
    """

    def __init__(self, model):
        r"""Initialize class attributes."""
        dim = model.config.model_dim
        with no_grad():
            self.context = empty_context(model.context_encoder)
            self.enc_memory = model.enc_bias.prepare(self.context)
            self.pred_memory = model.pred_bias.prepare(self.context)
            zero_query = Tensor(np.zeros((1, dim), dtype=model.params.dtype))
            self.enc_biased = model.enc_bias.attention.attend_memory(
                zero_query, self.enc_memory)
            self.pred_biased = model.pred_bias.attention.attend_memory(
                zero_query, self.pred_memory)
        self._layers = {'encoder': model.enc_bias,
                        'predictor': model.pred_bias}

    @property
    def num_rows(self):
        return len(self.context)

    def bias(self, queries, side):
        r"""Same output as the biasing layer of ``side`` with the empty list.
        """
        biased = self.enc_biased if side == 'encoder' else self.pred_biased
        if queries.shape[0] > 1:
            biased = concat([biased] * queries.shape[0], axis=0)
        return biased, self._layers[side].combine(biased, queries)


def null_bias_cache(model):
    r"""Empty-list cache of ``model`` (``None`` for the plain transducer)."""
    if not model.biased:
        return None
    return NullBiasCache(model)


class Hypothesis(object):
    r"""Result and state of a streaming greedy decode.

    Attributes
    ----------
    tokens: list of int
        Emitted tokens (never blank).
    frames: list of int
        Frame index at which each token was emitted.
    gate_trace: list of bool
        Gate in force for token ``i`` at position ``i``; the last entry is
        the gate for the next token. Length is ``len(tokens) + 1``.
    counters: dict
        ``enc_bias_full``, ``pred_bias_full`` (full-list biasing attention
        calls) and ``ed_calls`` (detector evaluations).
    predictor_state: adabias.transducer.PredictorState
        Predictor state after the last token.
    trace: list of dict
        Per joint evaluation records when tracing is enabled.
    """

    def __init__(self, mode_name, num_frames=0):
        r"""Initialize class attributes."""
        self.mode = mode_name
        self.num_frames = num_frames
        self.tokens = []
        self.frames = []
        self.gate_trace = []
        self.counters = {'enc_bias_full': 0, 'pred_bias_full': 0,
                         'ed_calls': 0}
        self.predictor_state = None
        self.trace = None

    @property
    def token_gates(self):
        r"""Gate in force when each token was emitted."""
        return self.gate_trace[:len(self.tokens)]

    @property
    def gate_labels(self):
        return np.asarray(self.token_gates, dtype=np.int64)

    def as_dict(self):
        return {'mode': self.mode, 'num_frames': self.num_frames,
                'tokens': list(self.tokens), 'frames': list(self.frames),
                'gate_trace': [bool(g) for g in self.gate_trace],
                'counters': dict(self.counters)}

    def write_trace(self, path):
        r"""Write the step records as JSON-lines."""
        if self.trace is None:
            raise RuntimeError('This hypothesis was decoded without trace.')
        with io.open(path, 'w', encoding='utf-8') as handle:
            for record in self.trace:
                handle.write(json.dumps(record, sort_keys=True) + u'\n')


class _SideEmbeddings(object):
    r"""Lazily biased embeddings of one query row (encoder or predictor)."""

    def __init__(self, decoder, side, query):
        self.decoder = decoder
        self.side = side
        self.query = query
        self._full = None
        self._null = None

    def full(self):
        if self._full is None:
            decoder = self.decoder
            layer = decoder.model.core.bias_layer(self.side)
            memory = decoder.memories[self.side]
            self._full = layer(self.query, memory=memory)
            key = 'enc_bias_full' if self.side == 'encoder' \
                else 'pred_bias_full'
            decoder.hyp.counters[key] += 1
        return self._full

    def null(self):
        if self._null is None:
            self._null = self.decoder.null_cache.bias(self.query, self.side)
        return self._null

    def combined(self, gate):
        if not self.decoder.model.biased:
            return self.query
        return self.full()[1] if gate else self.null()[1]


class GreedyDecoder(object):
    r"""Streaming greedy decoder for one utterance.

    Parameters
    ----------
    model: adabias.catt.CATT
        Trained model (parameters are read only).
    bias_list: list
        Context phrases.
    mode: DecodeMode
        Biasing mode.
    max_symbols_per_frame: int
        Emission guard per frame. Default is ``5``.
    initial_gate: str
        Gate before the first token in adaptive modes: ``'on'`` and
        ``'off'`` fix it, ``'detect'`` runs the detector on the
        start-of-sequence predictor output. Default is ``'on'``, so the
        frames up to the first emitted token are always biased; use
        ``'detect'`` when every gate must come from a detector decision
        (a negative detector then never runs the full encoder bias of
        ``AdaptivePED``).
    latch: bool
        Once the gate is on it stays on until the end of the utterance.
        Default is ``False``.
    null_cache: NullBiasCache
        Precomputed empty-list cache. Built on demand if ``None``.
    phrase_cache: dict
        Optional phrase embedding cache shared across utterances.
    trace: bool
        Record every joint evaluation. Default is ``False``.
    """

    def __init__(self, model, bias_list, mode, max_symbols_per_frame=5,
                 initial_gate='on', latch=False, null_cache=None,
                 phrase_cache=None, trace=False):
        r"""Initialize class attributes."""
        if initial_gate not in INITIAL_GATES:
            raise ValueError('initial_gate must be one of {}.'.format(
                ', '.join(INITIAL_GATES)))
        if max_symbols_per_frame < 1:
            raise ValueError('max_symbols_per_frame must be positive.')
        if not model.biased and mode.uses_bias:
            raise ValueError('The {} variant only supports AlwaysOff '
                             'decoding, not {}.'.format(model.variant,
                                                        mode.name))
        if mode.detector_kind and mode.detector_kind != model.detector_kind:
            raise ValueError('{} decoding needs a catt+{} checkpoint, got '
                             '{}.'.format(mode.name, mode.detector_kind,
                                          model.variant))
        self.model = model
        self.mode = mode
        self.max_symbols = int(max_symbols_per_frame)
        self.initial_gate = initial_gate
        self.latch = latch
        self.trace = trace
        self.phrases = as_phrases(bias_list)
        self.kind = mode.kind
        if mode.uses_bias and not self.phrases:
            logger.warning('Empty bias list in %s mode; decoding without '
                           'bias.', mode.name)
            self.kind = 'AlwaysOff'

        self.null_cache = None
        self.context = None
        self.memories = {}
        self.detector_memory = None
        if model.biased:
            self.null_cache = null_cache if null_cache is not None \
                else NullBiasCache(model)
            if self.kind != 'AlwaysOff':
                with no_grad():
                    self.context = model.context_encoder(self.phrases,
                                                         cache=phrase_cache)
                    self.memories = {
                        'encoder': model.enc_bias.prepare(self.context),
                        'predictor': model.pred_bias.prepare(self.context)}
                    if self.kind == 'AdaptivePED':
                        self.detector_memory = model.detector.prepare(
                            self.context.matrix)
        self._rng = None
        if self.kind == 'Random50':
            self._rng = np.random.default_rng(mode.seed)
        self.hyp = None
        self._eped_keys = []
        self._eped_values = []

    def _detect(self, pred_view):
        hyp = self.hyp
        detector = self.model.detector
        if self.kind == 'AdaptivePED':
            query = pred_view.full()[1]
            memory = self.detector_memory
        else:
            query = pred_view.full()[0]
            memory = (concat(self._eped_keys, axis=0),
                      concat(self._eped_values, axis=0))
        hyp.counters['ed_calls'] += 1
        decision = detector(query, memory=memory)
        return ed_decide(decision.logits.data[0])

    def _decide(self, previous, pred_view):
        r"""Gate for the next token, given the current predictor output."""
        kind = self.kind
        if kind == 'AlwaysOff':
            return False
        if kind == 'AlwaysOn':
            return True
        if kind == 'Forced':
            position = len(self.hyp.tokens)
            trace = self.mode.trace
            return trace[position] if position < len(trace) else trace[-1]
        if previous is None and kind in ('AdaptivePED', 'AdaptiveEPED') \
                and self.initial_gate != 'detect':
            return self.initial_gate == 'on'
        if kind == 'Random50':
            gate = bool(self._rng.random() < 0.5)
        else:
            gate = self._detect(pred_view)
        if self.latch and previous:
            return True
        return gate

    def _add_eped_key(self, frame_view):
        biased = frame_view.full()[0]
        key, value = self.model.detector.prepare(biased)
        self._eped_keys.append(key)
        self._eped_values.append(value)

    def decode(self, frames):
        r"""Decode ``frames`` (T, feature_dim) and return a Hypothesis."""
        model = self.model
        with no_grad():
            frames = as_frames(frames, model.params.dtype)
            n_frames = frames.shape[0]
            self.hyp = hyp = Hypothesis(self.mode.name, n_frames)
            if self.trace:
                hyp.trace = []
            self._eped_keys = []
            self._eped_values = []

            encoder_state = model.encoder.init_state()
            h_P, pred_state = model.predictor.step(
                SOS, model.predictor.init_state())
            pred_view = _SideEmbeddings(self, 'predictor', h_P)
            gate = None
            if self.kind != 'AdaptiveEPED' or self.initial_gate != 'detect':
                gate = self._decide(None, pred_view)
                hyp.gate_trace.append(gate)

            for t in range(n_frames):
                h_E = model.encoder.step(frames[t:t + 1], encoder_state)
                frame_view = _SideEmbeddings(self, 'encoder', h_E)
                if self.kind == 'AdaptiveEPED':
                    self._add_eped_key(frame_view)
                if gate is None:
                    gate = self._decide(None, pred_view)
                    hyp.gate_trace.append(gate)

                emitted = 0
                while emitted < self.max_symbols:
                    logits = model.joint.step(frame_view.combined(gate),
                                              pred_view.combined(gate))
                    token = int(np.argmax(logits.data[0]))
                    if hyp.trace is not None:
                        hyp.trace.append({'frame': t, 'token': token,
                                          'gate': bool(gate),
                                          'counters': dict(hyp.counters)})
                    if token == BLANK:
                        break
                    hyp.tokens.append(token)
                    hyp.frames.append(t)
                    emitted += 1
                    h_P, pred_state = model.predictor.step(token, pred_state)
                    pred_view = _SideEmbeddings(self, 'predictor', h_P)
                    gate = self._decide(gate, pred_view)
                    hyp.gate_trace.append(gate)

            hyp.predictor_state = pred_state
        return hyp


def decode_greedy(model, frames, bias_list, mode, max_symbols_per_frame=5,
                  initial_gate='on', latch=False, null_cache=None,
                  phrase_cache=None, trace=False):
    r"""Greedy streaming decode of one utterance.

    Parameters
    ----------
    model: adabias.catt.CATT
        Trained model.
    frames: numpy.ndarray
        Acoustic frames, shape (T, feature_dim), T >= 1.
    bias_list: list
        Context phrases.
    mode: DecodeMode
        Biasing mode.

    Returns
    -------
    Hypothesis

    Notes
    -----
    See :class:`GreedyDecoder` for the remaining options.
    """
    decoder = GreedyDecoder(model, bias_list, mode,
                            max_symbols_per_frame=max_symbols_per_frame,
                            initial_gate=initial_gate, latch=latch,
                            null_cache=null_cache, phrase_cache=phrase_cache,
                            trace=trace)
    return decoder.decode(frames)
