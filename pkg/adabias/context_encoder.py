# -*- coding: utf-8 -*-

r"""CONTEXT ENCODER.

Turns a list of contextual phrases into the matrix of phrase embeddings
attended to by the biasing layers and the entity detectors.

Row 0 of every :class:`ContextEmbeddings` is a learned no-bias embedding,
so an empty phrase list still gives one key to attend to.

"""

from __future__ import absolute_import, print_function
import io
import logging
import numpy as np
from adabias.numerics import BLSTM, Embedding, concat, no_grad

logger = logging.getLogger(__name__)


class ContextPhrase(object):
    r"""Contextual phrase given as a sequence of token ids.

    Parameters
    ----------
    tokens: iterable of int
        Token ids, at least one.
    """

    def __init__(self, tokens):
        r"""Initialize class attributes."""
        self.tokens = tuple(int(tok) for tok in tokens)
        if len(self.tokens) == 0:
            raise ValueError('A context phrase needs at least one token.')

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __eq__(self, other):
        if isinstance(other, ContextPhrase):
            return self.tokens == other.tokens
        return self.tokens == tuple(other)

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return hash(self.tokens)

    def __repr__(self):
        return 'ContextPhrase({})'.format(list(self.tokens))

    def to_text(self):
        return ' '.join(str(tok) for tok in self.tokens)


def as_phrases(phrases):
    r"""Convert an iterable of token sequences to ``ContextPhrase``."""
    return [phrase if isinstance(phrase, ContextPhrase)
            else ContextPhrase(phrase) for phrase in phrases]


def dedup_phrases(phrases):
    r"""Drop repeated phrases, keeping first occurrences in order."""
    phrases = as_phrases(phrases)
    seen = set()
    unique = []
    for phrase in phrases:
        if phrase in seen:
            continue
        seen.add(phrase)
        unique.append(phrase)
    if len(unique) < len(phrases):
        logger.warning('Removed %d duplicated context phrase(s).',
                       len(phrases) - len(unique))
    return unique


class ContextEmbeddings(object):
    r"""Matrix of context embeddings.

    Parameters
    ----------
    matrix: adabias.numerics.Tensor
        Shape (K + 1, D). Row 0 is the no-bias embedding.
    phrases: list of ContextPhrase
        The K encoded phrases, in row order (row ``k + 1`` for phrase k).
    """

    def __init__(self, matrix, phrases):
        r"""Initialize class attributes."""
        if matrix.shape[0] != len(phrases) + 1:
            raise ValueError('Context matrix has {} rows for {} '
                             'phrases.'.format(matrix.shape[0], len(phrases)))
        self.matrix = matrix
        self.phrases = list(phrases)
        self.index = dict((phrase, k + 1)
                          for k, phrase in enumerate(self.phrases))

    @property
    def num_phrases(self):
        return len(self.phrases)

    @property
    def is_empty(self):
        r"""``True`` when only the no-bias row is present."""
        return len(self.phrases) == 0

    def __len__(self):
        return self.matrix.shape[0]

    def row(self, phrase):
        r"""Row index of ``phrase``."""
        return self.index[ContextPhrase(phrase)]


class ContextEncoder(object):
    r"""Phrase encoder: token embedding, BLSTM and final-state projection.

    Parameters
    ----------
    params: adabias.numerics.ParamStore
        Parameter store.
    vocab_size: int
        Number of real tokens V (ids ``1..V``).
    model_dim: int
        Embedding dimension D.
    hidden_dim: int
        BLSTM hidden size per direction.
    name: str
        Parameter prefix. Default is ``'context'``.
    """

    def __init__(self, params, vocab_size, model_dim, hidden_dim,
                 name='context'):
        r"""Initialize class attributes."""
        self.params = params
        self.name = name
        self.vocab_size = vocab_size
        self.model_dim = model_dim
        self.embedding = Embedding(params, name + '.embed', vocab_size + 1,
                                   model_dim)
        self.blstm = BLSTM(params, name + '.blstm', model_dim, hidden_dim,
                           model_dim)
        params.require(name + '.null', (1, model_dim), scale=1.)

    @property
    def null_row(self):
        r"""Learned no-bias embedding, shape (1, D)."""
        return self.params[self.name + '.null']

    def check_phrase(self, phrase):
        ids = np.asarray(phrase.tokens)
        if np.any(ids < 1) or np.any(ids > self.vocab_size):
            raise ValueError('Phrase {} has token ids outside [1, {}].'.format(
                list(phrase.tokens), self.vocab_size))

    def encode_phrase(self, phrase):
        r"""Embedding of a single phrase, shape (1, D)."""
        self.check_phrase(phrase)
        return self.blstm.pooled(self.embedding(phrase.tokens))

    def __call__(self, phrases, cache=None):
        r"""Encode ``phrases``.

        Parameters
        ----------
        phrases: list
            Phrases (``ContextPhrase`` or token sequences).
        cache: dict
            Optional mapping phrase -> row reused across calls. Only use it
            while parameters are frozen.

        Returns
        -------
        ContextEmbeddings
            The (K + 1) x D context matrix.
        """
        phrases = dedup_phrases(phrases)
        rows = [self.null_row]
        for phrase in phrases:
            if cache is not None:
                if phrase not in cache:
                    cache[phrase] = self.encode_phrase(phrase)
                rows.append(cache[phrase])
            else:
                rows.append(self.encode_phrase(phrase))
        return ContextEmbeddings(concat(rows, axis=0), phrases)


def encode_context(phrases, params, vocab_size, model_dim, hidden_dim,
                   name='context'):
    r"""Functional form of :class:`ContextEncoder`."""
    return ContextEncoder(params, vocab_size, model_dim, hidden_dim,
                          name=name)(phrases)


def empty_context(encoder):
    r"""Context matrix of the empty list (no-bias row only)."""
    with no_grad():
        return encoder([])


def read_phrase_file(path):
    r"""Read phrases from a text file, one phrase per line.

    Tokens are whitespace separated integer ids; blank lines are skipped.
    """
    phrases = []
    with io.open(path, 'r', encoding='utf-8') as handle:
        for line_number, line in enumerate(handle, 1):
            line = line.strip()
            if not line:
                continue
            try:
                phrases.append(ContextPhrase(int(tok) for tok in line.split()))
            except ValueError:
                raise ValueError('{}:{}: invalid phrase "{}".'.format(
                    path, line_number, line))
    return phrases


def write_phrase_file(path, phrases):
    r"""Write phrases to ``path``, one phrase per line."""
    with io.open(path, 'w', encoding='utf-8') as handle:
        for phrase in as_phrases(phrases):
            handle.write(phrase.to_text() + u'\n')
