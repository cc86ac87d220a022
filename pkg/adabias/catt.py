# -*- coding: utf-8 -*-

r"""CATT CLASS.

This module contains the main CATT class: a context-aware transformer
transducer optionally extended with an entity detector, its teacher-forced
training objective, the training loop and checkpoint IO.

Variants:

- ``'ct'``: plain transducer, no context encoder nor biasing layers.
- ``'catt'``: context-aware transducer, no detector (``lambda1 = 0``).
- ``'catt+ped'``: with the predictor-based entity detector.
- ``'catt+eped'``: with the encoder-predictor entity detector.

"""

from __future__ import absolute_import, print_function
import io
import json
import logging
import numpy as np
from modopt.opt.algorithms import ADAMGradOpt
from modopt.opt.proximity import IdentityProx
from adabias.numerics import ParamStore, no_grad
from adabias.context_encoder import ContextEncoder
from adabias.transducer import ModelConfig, TransducerCore
from adabias.entity_detector import (EntityDetector, make_ed_labels,
                                     frame_visibility_mask,
                                     aligned_frame_counts)
from adabias.losses import transducer_loss, bias_ce_loss, DEFAULT_LAMBDA1
import adabias.grads as grads

logger = logging.getLogger(__name__)

VARIANTS = ('ct', 'catt', 'catt+ped', 'catt+eped')
CHECKPOINT_FORMAT = 'adabias-checkpoint'


def catt_quickload(path):
    r"""Load a CATT model saved with :meth:`CATT.quicksave`.

    Parameters
    ----------
    path: str
        Checkpoint path.

    Returns
    -------
    loaded_model: CATT
        The model, parameters restored bit-exactly.
    """
    with io.open(path, 'rb') as handle:
        header_line = handle.readline()
        payload = handle.read()
    try:
        header = json.loads(header_line.decode('utf-8'))
    except ValueError:
        raise ValueError('{} is not an adabias checkpoint.'.format(path))
    if header.get('format') != CHECKPOINT_FORMAT:
        raise ValueError('{} is not an adabias checkpoint.'.format(path))

    config = header['config']
    loaded_model = CATT(variant=header['variant'], lambda1=header['lambda1'],
                        seed=header['seed'], verbose=False, **config)
    values = np.frombuffer(payload, dtype='<f4')
    expected = sum(int(np.prod(entry['shape'])) for entry in header['params'])
    if values.size != expected:
        raise ValueError('Checkpoint payload holds {} values, header '
                         'describes {}.'.format(values.size, expected))
    offset = 0
    for entry in header['params']:
        name = entry['name']
        if name not in loaded_model.params:
            raise ValueError('Unknown parameter {} in checkpoint.'.format(
                name))
        count = int(np.prod(entry['shape']))
        loaded_model.params.set(name, values[offset:offset + count].reshape(
            entry['shape']))
        offset += count
    if len(header['params']) != len(loaded_model.params):
        raise ValueError('Checkpoint does not cover every model parameter.')
    loaded_model.history = header.get('history', [])
    loaded_model.is_fitted = bool(header.get('fitted', True))
    return loaded_model


class CATT(object):
    r"""Context-aware transformer transducer.

    Parameters
    ----------
    vocab_size: int
        Number of real tokens V (ids ``1..V``; ``0`` is blank).
    feature_dim: int
        Acoustic feature dimension.
    variant: str
        One of ``'ct'``, ``'catt'``, ``'catt+ped'`` or ``'catt+eped'``.
        Default is ``'catt+ped'``.
    lambda1: float
        Weight of the detection loss. Forced to ``0`` for variants without
        a detector. Default is ``0.4``.
    seed: int
        Parameter initialisation seed. Default is ``0``.
    dtype: numpy.dtype
        Parameter float type. Default is ``numpy.float32``.
    verbose: bool
        Log training progress. Default is ``True``.
    **model_kw
        Network dimensions, see :class:`adabias.transducer.ModelConfig`.
    """

    def __init__(self, vocab_size, feature_dim, variant='catt+ped',
                 lambda1=DEFAULT_LAMBDA1, seed=0, dtype=np.float32,
                 verbose=True, **model_kw):
        r"""General parameter initialisations."""
        if variant not in VARIANTS:
            raise ValueError('Unknown variant {}; choose among {}.'.format(
                variant, ', '.join(VARIANTS)))
        self.variant = variant
        self.config = ModelConfig(vocab_size, feature_dim, **model_kw)
        self.lambda1 = float(lambda1) if self.detector_kind else 0.
        self.seed = int(seed)
        self.verbose = verbose
        self.params = ParamStore(seed=self.seed, dtype=dtype)

        self.core = TransducerCore(self.params, self.config,
                                   biased=self.biased)
        self.context_encoder = None
        self.detector = None
        if self.biased:
            self.context_encoder = ContextEncoder(
                self.params, self.config.vocab_size, self.config.model_dim,
                self.config.context_hidden)
        if self.detector_kind:
            self.detector = EntityDetector(
                self.params, self.detector_kind, self.config.mha,
                activation=self.config.ed_activation)

        self.is_fitted = False
        self.history = []

    def __repr__(self):
        return 'CATT(variant={}, params={})'.format(self.variant,
                                                     self.params.size)

    @property
    def biased(self):
        return self.variant != 'ct'

    @property
    def detector_kind(self):
        r"""``'ped'``, ``'eped'`` or ``None``."""
        if self.variant == 'catt+ped':
            return 'ped'
        if self.variant == 'catt+eped':
            return 'eped'
        return None

    @property
    def encoder(self):
        return self.core.encoder

    @property
    def predictor(self):
        return self.core.predictor

    @property
    def joint(self):
        return self.core.joint

    @property
    def enc_bias(self):
        return self.core.enc_bias

    @property
    def pred_bias(self):
        return self.core.pred_bias

    def forward(self, frames, tokens, phrases=()):
        r"""Teacher-forced losses of one utterance.

        Parameters
        ----------
        frames: numpy.ndarray
            Acoustic frames, shape (T, feature_dim).
        tokens: sequence of int
            Reference tokens.
        phrases: list
            Bias list shown to the model.

        Returns
        -------
        l_transducer: adabias.numerics.Tensor
            Transducer negative log-likelihood.
        l_bias: adabias.numerics.Tensor or None
            Detection cross-entropy, ``None`` without detector or tokens.
        """
        tokens = [int(tok) for tok in tokens]
        h_E = self.encoder(frames)
        h_P = self.predictor(tokens)
        if not self.biased:
            return transducer_loss(self.joint(h_E, h_P), tokens), None

        context = self.context_encoder(phrases)
        h_EB, h_CAE = self.enc_bias(h_E, context)
        h_PB, h_CAP = self.pred_bias(h_P, context)
        l_transducer = transducer_loss(self.joint(h_CAE, h_CAP), tokens)

        n_tokens = len(tokens)
        if self.detector is None or n_tokens == 0:
            return l_transducer, None
        labels = make_ed_labels(tokens, context.phrases)
        if self.detector_kind == 'ped':
            decision = self.detector(h_CAP[0:n_tokens], keys=context.matrix)
        else:
            n_frames = h_EB.shape[0]
            mask = frame_visibility_mask(
                aligned_frame_counts(n_tokens, n_frames), n_frames)
            decision = self.detector(h_PB[0:n_tokens], keys=h_EB, mask=mask)
        return l_transducer, bias_ce_loss(decision, labels)

    def fit(self, train_set, phrase_pool=(), dev_set=None, n_epochs=1,
            batch_size=8, eta=1e-3, max_steps=None, clip_norm=5.,
            max_list_size=10, empty_list_rate=0.2, drop_entity_rate=0.2,
            train_seed=None):
        r"""Fit the model to a training set.

        Parameters
        ----------
        train_set: list of adabias.synth_task.Utterance
            Training utterances.
        phrase_pool: list
            Phrases used as training distractors.
        dev_set: list of adabias.synth_task.Utterance
            Optional held-out set, decoded after every epoch.
        n_epochs: int
            Number of passes over ``train_set``. Default is ``1``.
        batch_size: int
            Utterances per optimizer step. Default is ``8``.
        eta: float
            Adam step size. Default is ``1e-3``.
        max_steps: int
            Optional cap on the number of steps per epoch.
        clip_norm: float
            Global gradient norm clip. Default is ``5.``.
        max_list_size: int
            Maximum number of distractors in training lists.
            Default is ``10``.
        empty_list_rate: float
            Probability of an empty training list. Default is ``0.2``.
        drop_entity_rate: float
            Probability of hiding the true entities. Default is ``0.2``.
        train_seed: int
            Seed of batch order and list sampling. Default is the model
            seed.

        Returns
        -------
        list of dict
            Per-epoch training history.
        """
        if train_seed is None:
            train_seed = self.seed
        grad_op = grads.CATTGrad(
            self, train_set, phrase_pool, batch_size=batch_size,
            seed=train_seed, clip_norm=clip_norm,
            max_list_size=max_list_size, empty_list_rate=empty_list_rate,
            drop_entity_rate=drop_entity_rate)
        optimizer = ADAMGradOpt(
            self.params.flatten().astype(np.float64), grad_op,
            IdentityProx(), cost=None, eta=eta, gamma=0.999, beta=0.9,
            epsilon=1e-8, progress=False, verbose=False)

        steps_per_epoch = int(np.ceil(len(train_set) / float(batch_size)))
        if max_steps is not None:
            steps_per_epoch = min(steps_per_epoch, int(max_steps))

        for epoch in range(n_epochs):
            optimizer.iterate(max_iter=steps_per_epoch)
            self.params.load_vector(optimizer.x_final)
            reports = grad_op.get_iter_cost()
            grad_op.reset_iter_cost()
            record = {
                'epoch': epoch + 1,
                'steps': len(reports),
                'l_transducer': float(np.mean([r.l_transducer
                                               for r in reports])),
                'l_bias': float(np.mean([r.l_bias for r in reports])),
                'l_total': float(np.mean([r.l_total for r in reports])),
            }
            if dev_set:
                record['dev_wer'] = self.dev_error_rate(dev_set)
            self.history.append(record)
            if self.verbose:
                logger.info(
                    'epoch %d: l_transducer=%.4f l_bias=%.4f l_total=%.4f%s',
                    record['epoch'], record['l_transducer'],
                    record['l_bias'], record['l_total'],
                    ' dev_wer={:.4f}'.format(record['dev_wer'])
                    if 'dev_wer' in record else '')

        self.is_fitted = True
        return self.history

    def dev_error_rate(self, utterances):
        r"""Token error rate decoding each utterance with its own entities.

        Biased variants decode with the bias always on, the plain
        transducer without bias.
        """
        from adabias.decoder import DecodeMode, decode_greedy, null_bias_cache
        from adabias.metrics import corpus_error_rate

        mode = DecodeMode.always_on() if self.biased \
            else DecodeMode.always_off()
        cache = null_bias_cache(self)
        pairs = []
        with no_grad():
            for utt in utterances:
                hyp = decode_greedy(self, utt.frames, utt.entities, mode,
                                    null_cache=cache)
                pairs.append((utt.tokens, hyp.tokens))
        return corpus_error_rate(pairs).rate

    def quicksave(self, path):
        r"""Save fitted model.

        The file holds one JSON header line (parameter names and shapes in
        payload order, model configuration, variant, ``lambda1``, training
        history) followed by the little-endian float32 parameter values.
        Stored models can be loaded with :func:`catt_quickload`.

        Parameters
        ----------
        path: str
            Destination path.
        """
        if not self.is_fitted:
            raise RuntimeError('CATT instance has not yet been fitted. '
                               'Please run the fit method.')
        names = self.params.names()
        header = {
            'format': CHECKPOINT_FORMAT,
            'version': 1,
            'variant': self.variant,
            'lambda1': self.lambda1,
            'seed': self.seed,
            'fitted': self.is_fitted,
            'config': self.config.to_dict(),
            'params': [{'name': name, 'shape': list(self.params[name].shape)}
                       for name in names],
            'history': self.history,
        }
        payload = np.concatenate(
            [self.params[name].data.reshape(-1) for name in names]).astype(
            '<f4')
        with io.open(path, 'wb') as handle:
            handle.write(json.dumps(header, sort_keys=True).encode('utf-8'))
            handle.write(b'\n')
            handle.write(payload.tobytes())
