# -*- coding: utf-8 -*-

r"""ENTITY DETECTOR.

Per-token detection of contextual phrase occurrences. Two detectors share
the same attention plus 2-class classifier machinery:

- the predictor-based detector attends from the combined predictor output
  over the context embeddings,
- the encoder-predictor detector attends from the biased predictor
  embeddings over the biased encoder embeddings seen so far.

The module also builds the per-token labels used to train them.

"""

from __future__ import absolute_import, print_function
import numpy as np
from adabias.numerics import Linear, MultiHeadAttention, MHAConfig, Tensor


class EDDecision(object):
    r"""Detector output for a run of tokens.

    Parameters
    ----------
    logits: adabias.numerics.Tensor
        Shape (U, 2); column 1 scores "inside a context phrase".
    weights: adabias.numerics.Tensor
        Attention probabilities, shape (heads, U, keys). Optional.
    """

    def __init__(self, logits, weights=None):
        r"""Initialize class attributes."""
        if logits.ndim != 2 or logits.shape[1] != 2:
            raise ValueError('Detector logits must have shape (U, 2).')
        self.logits = logits
        self.weights = weights

    def __len__(self):
        return self.logits.shape[0]

    @property
    def gates(self):
        r"""Boolean gate per token (ties switch the bias on)."""
        data = self.logits.data
        return data[:, 1] >= data[:, 0]

    @property
    def labels(self):
        return self.gates.astype(np.int64)


def ed_decide(logits_row):
    r"""Hard gate from a pair of detector logits.

    Parameters
    ----------
    logits_row: array_like or Tensor
        Two finite logits (negative class, positive class).

    Returns
    -------
    bool
        ``True`` when the positive logit is at least the negative one.
    """
    if isinstance(logits_row, Tensor):
        logits_row = logits_row.data
    row = np.asarray(logits_row, dtype=np.float64).reshape(-1)
    if row.size != 2:
        raise ValueError('ed_decide expects two logits, got {}.'.format(
            row.size))
    if not np.all(np.isfinite(row)):
        raise ValueError('Detector logits are not finite.')
    return bool(row[1] >= row[0])


class EntityDetector(object):
    r"""Attention block and linear 2-class classifier.

    The query, key and value projections go through the activation
    ``sigma`` and the heads are concatenated without output projection.

    Parameters
    ----------
    params: adabias.numerics.ParamStore
        Parameter store.
    name: str
        Parameter prefix, e.g. ``'ped'`` or ``'eped'``.
    mha_cfg: adabias.numerics.MHAConfig
        Attention geometry.
    activation: str
        ``'identity'`` or ``'sigmoid'``. Default is ``'identity'``.
    """

    def __init__(self, params, name, mha_cfg, activation='identity'):
        r"""Initialize class attributes."""
        self.name = name
        self.mha_cfg = mha_cfg
        self.activation = activation
        self.attention = MultiHeadAttention(params, name + '.attn', mha_cfg,
                                            activation=activation,
                                            output_projection=False)
        self.classifier = Linear(params, name + '.classifier',
                                 mha_cfg.model_dim, 2)

    def prepare(self, keys):
        r"""Project key/value rows once for repeated queries."""
        if keys.shape[0] < 1:
            raise ValueError('The detector needs at least one key row.')
        return self.attention.project_memory(keys, keys)

    def __call__(self, queries, keys=None, memory=None, mask=None):
        r"""Detector decision for each query row.

        Parameters
        ----------
        queries: adabias.numerics.Tensor
            Shape (U, D), U >= 1.
        keys: adabias.numerics.Tensor
            Key/value rows, shape (K, D). Ignored when ``memory`` is given.
        memory: tuple
            Output of :meth:`prepare`.
        mask: numpy.ndarray
            Optional boolean (U, K) array of visible keys.

        Returns
        -------
        EDDecision
        """
        if queries.ndim != 2 or queries.shape[0] < 1:
            raise ValueError('The detector needs at least one query row.')
        if memory is None:
            memory = self.prepare(keys)
        hidden, weights = self.attention.attend_memory(
            queries, memory, mask=mask, return_weights=True)
        return EDDecision(self.classifier(hidden), weights)


def ped_forward(X, C, params, mha_cfg=None, activation='identity',
                name='ped'):
    r"""Predictor-based detection.

    Parameters
    ----------
    X: adabias.numerics.Tensor
        Combined predictor outputs, shape (U, D).
    C: adabias.context_encoder.ContextEmbeddings or Tensor
        Context embeddings including the no-bias row.
    params: adabias.numerics.ParamStore
        Parameter store holding ``name.*``.
    mha_cfg: adabias.numerics.MHAConfig
        Attention geometry. Default is one head over the model dimension.

    Returns
    -------
    EDDecision
    """
    matrix = getattr(C, 'matrix', C)
    if mha_cfg is None:
        mha_cfg = MHAConfig(X.shape[-1], 1)
    if matrix.shape[-1] != X.shape[-1]:
        raise ValueError('Query and context dimensions differ: {} vs '
                         '{}.'.format(X.shape[-1], matrix.shape[-1]))
    detector = EntityDetector(params, name, mha_cfg, activation=activation)
    return detector(X, keys=matrix)


def eped_forward(h_PB, h_EB, params, mha_cfg=None, activation='identity',
                 name='eped', available=None):
    r"""Encoder-predictor detection.

    Parameters
    ----------
    h_PB: adabias.numerics.Tensor
        Biased predictor embeddings, shape (U, D).
    h_EB: adabias.numerics.Tensor
        Biased encoder embeddings of the frames available so far, (T', D).
    params: adabias.numerics.ParamStore
        Parameter store holding ``name.*``.
    available: array_like
        Optional number of visible frames per query row; row ``u`` attends
        to frames ``0..available[u] - 1``. Default is all ``T'`` frames.

    Returns
    -------
    EDDecision
    """
    if h_EB.shape[0] < 1:
        raise ValueError('Encoder-predictor detection needs at least one '
                         'available frame.')
    if h_EB.shape[-1] != h_PB.shape[-1]:
        raise ValueError('Query and key dimensions differ: {} vs {}.'.format(
            h_PB.shape[-1], h_EB.shape[-1]))
    if mha_cfg is None:
        mha_cfg = MHAConfig(h_PB.shape[-1], 1)
    mask = None
    if available is not None:
        mask = frame_visibility_mask(available, h_EB.shape[0])
    detector = EntityDetector(params, name, mha_cfg, activation=activation)
    return detector(h_PB, keys=h_EB, mask=mask)


def frame_visibility_mask(available, num_frames):
    r"""Boolean (U, T) mask with the first ``available[u]`` frames set."""
    available = np.asarray(available, dtype=np.int64).reshape(-1)
    if np.any(available < 1) or np.any(available > num_frames):
        raise ValueError('Visible frame counts must lie in [1, {}].'.format(
            num_frames))
    return np.arange(num_frames)[np.newaxis, :] < available[:, np.newaxis]


def aligned_frame_counts(num_tokens, num_frames):
    r"""Frames visible to each token row during training.

    Token row ``u`` (predicting token ``u + 1``) sees the first
    ``1 + floor(u * T / (U + 1))`` frames, a uniform alignment estimate that
    mirrors the frames consumed at decode time.
    """
    rows = np.arange(num_tokens, dtype=np.int64)
    counts = 1 + (rows * num_frames) // (num_tokens + 1)
    return np.minimum(counts, num_frames)


def make_ed_labels(reference_tokens, phrases):
    r"""Per-token phrase membership labels.

    Parameters
    ----------
    reference_tokens: sequence of int
        Reference token ids.
    phrases: iterable
        Phrases (token sequences or ``ContextPhrase``).

    Returns
    -------
    numpy.ndarray
        Integer array of length ``len(reference_tokens)``; entry ``u`` is 1
        when token ``u`` is covered by an exact occurrence of a phrase.

    Examples
    --------
    >>> make_ed_labels([7, 3, 4], [[3, 4]]).tolist()
    [0, 1, 1]
    """
    reference = [int(tok) for tok in reference_tokens]
    labels = np.zeros(len(reference), dtype=np.int64)
    for phrase in phrases:
        phrase = [int(tok) for tok in phrase]
        size = len(phrase)
        if size == 0 or size > len(reference):
            continue
        for start in range(len(reference) - size + 1):
            if reference[start:start + size] == phrase:
                labels[start:start + size] = 1
    return labels
