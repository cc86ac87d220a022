# -*- coding: utf-8 -*-

r"""TRANSDUCER.

Backbone of the context-aware transducer: streaming audio encoder,
prediction network, encoder and predictor biasing layers with their combine
modules, and the joint network.

Token ids follow one convention everywhere: ``0`` is the blank (a joint
output only), real tokens are ``1..V`` and the predictor start symbol is
:data:`SOS`.

"""

from __future__ import absolute_import, print_function
import numpy as np
from adabias.numerics import (Tensor, Linear, LayerNorm, Embedding,
                              FeedForward, MultiHeadAttention, MHAConfig,
                              LSTMCell, concat, tanh, zero_state)

BLANK = 0
SOS = -1


class ModelConfig(object):
    r"""Network dimensions.

    Parameters
    ----------
    vocab_size: int
        Number of real tokens V.
    feature_dim: int
        Acoustic feature dimension.
    model_dim: int
        Model dimension D. Default is ``64``.
    num_heads: int
        Attention heads. Default is ``2``.
    enc_layers: int
        Causal self-attention blocks. Default is ``2``.
    ff_dim: int
        Hidden size of the encoder feed-forward blocks. Default is ``128``.
    pred_layers: int
        LSTM layers of the predictor. Default is ``1``.
    context_hidden: int
        BLSTM hidden size of the context encoder. Default is ``32``.
    joint_dim: int
        Hidden size of the joint network. Default is ``64``.
    ed_activation: str
        Projection activation of the entity detectors, ``'identity'`` or
        ``'sigmoid'``. Default is ``'identity'``.
    frame_ms: float
        Duration of one acoustic frame in milliseconds. Default is ``40.``.
    """

    FIELDS = ('vocab_size', 'feature_dim', 'model_dim', 'num_heads',
              'enc_layers', 'ff_dim', 'pred_layers', 'context_hidden',
              'joint_dim', 'ed_activation', 'frame_ms')

    def __init__(self, vocab_size, feature_dim, model_dim=64, num_heads=2,
                 enc_layers=2, ff_dim=128, pred_layers=1, context_hidden=32,
                 joint_dim=64, ed_activation='identity', frame_ms=40.):
        r"""Initialize class attributes."""
        self.vocab_size = int(vocab_size)
        self.feature_dim = int(feature_dim)
        self.model_dim = int(model_dim)
        self.num_heads = int(num_heads)
        self.enc_layers = int(enc_layers)
        self.ff_dim = int(ff_dim)
        self.pred_layers = int(pred_layers)
        self.context_hidden = int(context_hidden)
        self.joint_dim = int(joint_dim)
        self.ed_activation = ed_activation
        self.frame_ms = float(frame_ms)
        for field in self.FIELDS[:-2]:
            if getattr(self, field) <= 0:
                raise ValueError('{} must be positive.'.format(field))
        if self.ed_activation not in ('identity', 'sigmoid'):
            raise ValueError('ed_activation must be identity or sigmoid.')
        self.mha = MHAConfig(self.model_dim, self.num_heads)

    def to_dict(self):
        return dict((field, getattr(self, field)) for field in self.FIELDS)

    @classmethod
    def from_dict(cls, values):
        return cls(**dict((key, values[key]) for key in cls.FIELDS
                          if key in values))


class EncoderState(object):
    r"""Per-block key/value caches of the streaming encoder."""

    def __init__(self, num_blocks):
        r"""Initialize class attributes."""
        self.keys = [[] for _ in range(num_blocks)]
        self.values = [[] for _ in range(num_blocks)]
        self.num_frames = 0


class AudioEncoder(object):
    r"""Causal self-attention encoder evaluated one frame at a time.

    Each block applies pre-norm causal multi-head attention and a tanh
    feed-forward layer, both with residual connections. Frame ``t`` attends
    to the cached keys and values of frames ``0..t``, so whole utterances
    and streamed prefixes go through exactly the same computation.
    """

    def __init__(self, params, cfg, name='encoder'):
        r"""Initialize class attributes."""
        self.cfg = cfg
        self.dtype = params.dtype
        dim = cfg.model_dim
        self.input = Linear(params, name + '.input', cfg.feature_dim, dim)
        self.blocks = []
        for b in range(cfg.enc_layers):
            prefix = '{}.block{}'.format(name, b)
            self.blocks.append((
                LayerNorm(params, prefix + '.norm_attn', dim),
                MultiHeadAttention(params, prefix + '.attn', cfg.mha),
                LayerNorm(params, prefix + '.norm_ff', dim),
                FeedForward(params, prefix + '.ff', dim, cfg.ff_dim, dim)))
        self.final_norm = LayerNorm(params, name + '.norm_out', dim)

    def init_state(self):
        return EncoderState(len(self.blocks))

    def step(self, frame, state):
        r"""Encode the next frame, shape (1, feature_dim) -> (1, D)."""
        if frame.shape[-1] != self.cfg.feature_dim:
            raise ValueError('Expected {} features per frame, got {}.'.format(
                self.cfg.feature_dim, frame.shape[-1]))
        hidden = self.input(frame)
        for b, (norm_attn, attn, norm_ff, ff) in enumerate(self.blocks):
            normed = norm_attn(hidden)
            key, value = attn.project_memory(normed, normed)
            state.keys[b].append(key)
            state.values[b].append(value)
            memory = (concat(state.keys[b], axis=0),
                      concat(state.values[b], axis=0))
            hidden = hidden + attn.attend_memory(normed, memory)
            hidden = hidden + ff(norm_ff(hidden))
        state.num_frames += 1
        return self.final_norm(hidden)

    def __call__(self, frames):
        r"""Encode a whole utterance, (T, feature_dim) -> h_E (T, D)."""
        frames = as_frames(frames, self.dtype)
        if frames.shape[-1] != self.cfg.feature_dim:
            raise ValueError('Expected {} features per frame, got {}.'.format(
                self.cfg.feature_dim, frames.shape[-1]))
        state = self.init_state()
        rows = [self.step(frames[t:t + 1], state)
                for t in range(frames.shape[0])]
        return concat(rows, axis=0)


def as_frames(frames, dtype=np.float32):
    r"""Check acoustic frames and wrap them as a constant tensor."""
    if isinstance(frames, Tensor):
        data = frames.data
    else:
        data = np.asarray(frames, dtype=dtype)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValueError('Frames must be a nonempty (T, feature_dim) '
                         'array, got shape {}.'.format(data.shape))
    if not np.all(np.isfinite(data)):
        raise ValueError('Frames contain non-finite values.')
    if isinstance(frames, Tensor):
        return frames
    return Tensor(data)


class BiasingLayer(object):
    r"""Attention over context embeddings followed by the combine module.

    ``biased = MHA(queries, C, C)`` and
    ``combined = FeedForward([LayerNorm(biased), LayerNorm(queries)])``.

    Parameters
    ----------
    params: adabias.numerics.ParamStore
        Parameter store.
    name: str
        Parameter prefix (one per side, encoder or predictor).
    cfg: ModelConfig
        Network dimensions.
    """

    def __init__(self, params, name, cfg):
        r"""Initialize class attributes."""
        dim = cfg.model_dim
        self.attention = MultiHeadAttention(params, name + '.attn', cfg.mha)
        self.norm_biased = LayerNorm(params, name + '.norm_biased', dim)
        self.norm_query = LayerNorm(params, name + '.norm_query', dim)
        self.combine_ff = FeedForward(params, name + '.combine', 2 * dim, dim,
                                      dim)

    def prepare(self, context):
        r"""Project the context matrix to attention keys and values."""
        matrix = getattr(context, 'matrix', context)
        if matrix.shape[0] < 1:
            raise ValueError('Context needs at least one row.')
        return self.attention.project_memory(matrix, matrix)

    def combine(self, biased, queries):
        return self.combine_ff(concat([self.norm_biased(biased),
                                       self.norm_query(queries)], axis=-1))

    def __call__(self, queries, context=None, memory=None,
                 return_weights=False):
        r"""Bias ``queries`` with ``context`` (or prepared ``memory``).

        Returns
        -------
        biased: Tensor
            Attention output, shape (N, D).
        combined: Tensor
            Combine module output, shape (N, D).
        """
        if queries.shape[0] < 1:
            raise ValueError('Biasing needs at least one query row.')
        if memory is None:
            memory = self.prepare(context)
        biased, weights = self.attention.attend_memory(
            queries, memory, return_weights=True)
        combined = self.combine(biased, queries)
        if return_weights:
            return biased, combined, weights
        return biased, combined


class PredictorState(object):
    r"""Recurrent state of the predictor and the last token fed to it."""

    def __init__(self, layers, last_token=SOS):
        r"""Initialize class attributes."""
        self.layers = tuple(layers)
        self.last_token = last_token


class Predictor(object):
    r"""Autoregressive LSTM over emitted tokens.

    Embedding row 0 is the start symbol; token ``k`` uses row ``k``.
    """

    def __init__(self, params, cfg, name='predictor'):
        r"""Initialize class attributes."""
        self.cfg = cfg
        dim = cfg.model_dim
        self.embedding = Embedding(params, name + '.embed', cfg.vocab_size + 1,
                                   dim)
        self.cells = [LSTMCell(params, '{}.lstm.{}'.format(name, layer), dim,
                               dim) for layer in range(cfg.pred_layers)]
        self.dtype = params.dtype

    def init_state(self):
        return PredictorState(zero_state(self.cfg.model_dim, dtype=self.dtype,
                                         num_layers=len(self.cells)))

    def _row(self, token):
        token = int(token)
        if token == BLANK:
            raise ValueError('The blank symbol cannot be fed to the '
                             'predictor.')
        if token == SOS:
            return 0
        if token < 1 or token > self.cfg.vocab_size:
            raise ValueError('Token id {} outside [1, {}].'.format(
                token, self.cfg.vocab_size))
        return token

    def step(self, prev_token, state):
        r"""One step: returns (h_P row (1, D), new PredictorState)."""
        out = self.embedding([self._row(prev_token)])
        layers = []
        for cell, layer_state in zip(self.cells, state.layers):
            out, layer_state = cell(out, layer_state)
            layers.append(layer_state)
        return out, PredictorState(layers, last_token=int(prev_token))

    def __call__(self, tokens):
        r"""Teacher-forced outputs for ``[SOS] + tokens``, shape (U + 1, D)."""
        state = self.init_state()
        rows = []
        for token in [SOS] + [int(tok) for tok in tokens]:
            out, state = self.step(token, state)
            rows.append(out)
        return concat(rows, axis=0)


class Joint(object):
    r"""Joint network ``W2 tanh(W1 h_enc + W1' h_pred + b) + b2``."""

    def __init__(self, params, cfg, name='joint'):
        r"""Initialize class attributes."""
        self.cfg = cfg
        self.enc_proj = Linear(params, name + '.enc', cfg.model_dim,
                               cfg.joint_dim)
        self.pred_proj = Linear(params, name + '.pred', cfg.model_dim,
                                cfg.joint_dim, bias=False)
        self.out = Linear(params, name + '.out', cfg.joint_dim,
                          cfg.vocab_size + 1)

    def pre_activation(self, h_enc, h_pred):
        r"""Hidden pre-activation broadcast over (T, U + 1)."""
        enc = self.enc_proj(h_enc)
        pred = self.pred_proj(h_pred)
        return (enc.reshape((enc.shape[0], 1, enc.shape[1])) +
                pred.reshape((1, pred.shape[0], pred.shape[1])))

    def __call__(self, h_enc, h_pred):
        r"""Full lattice of logits, shape (T, U + 1, V + 1)."""
        return self.out(tanh(self.pre_activation(h_enc, h_pred)))

    def step(self, h_enc, h_pred):
        r"""Logits for one (frame, token) pair, shape (1, V + 1)."""
        return self.out(tanh(self.enc_proj(h_enc) + self.pred_proj(h_pred)))


class TransducerCore(object):
    r"""Encoder, predictor, biasing layers and joint for one model.

    Parameters
    ----------
    params: adabias.numerics.ParamStore
        Parameter store.
    cfg: ModelConfig
        Network dimensions.
    biased: bool
        Build the encoder and predictor biasing layers. Default is ``True``.
    """

    def __init__(self, params, cfg, biased=True):
        r"""Initialize class attributes."""
        self.cfg = cfg
        self.encoder = AudioEncoder(params, cfg)
        self.predictor = Predictor(params, cfg)
        self.joint = Joint(params, cfg)
        self.enc_bias = None
        self.pred_bias = None
        if biased:
            self.enc_bias = BiasingLayer(params, 'enc_bias', cfg)
            self.pred_bias = BiasingLayer(params, 'pred_bias', cfg)

    @property
    def biased(self):
        return self.enc_bias is not None

    def bias_layer(self, side):
        if side not in ('encoder', 'predictor'):
            raise ValueError('side must be encoder or predictor.')
        if not self.biased:
            raise ValueError('This model has no biasing layers.')
        return self.enc_bias if side == 'encoder' else self.pred_bias


def encode_audio(frames, params, cfg):
    r"""Streaming encoder output h_E, shape (T, D)."""
    return AudioEncoder(params, cfg)(frames)


def bias_embed(queries, context, side, params, cfg):
    r"""Biased and combined embeddings for ``side`` of the transducer."""
    name = {'encoder': 'enc_bias', 'predictor': 'pred_bias'}.get(side)
    if name is None:
        raise ValueError('side must be encoder or predictor.')
    return BiasingLayer(params, name, cfg)(queries, context)


def predictor_step(prev_token, state, params, cfg):
    r"""One predictor step; ``state=None`` starts a new sequence."""
    predictor = Predictor(params, cfg)
    if state is None:
        state = predictor.init_state()
    return predictor.step(prev_token, state)


def joint(h_cae_t, h_cap_u, params, cfg):
    r"""Joint logits over V + 1 outputs for one (t, u) pair."""
    return Joint(params, cfg).step(h_cae_t, h_cap_u)
