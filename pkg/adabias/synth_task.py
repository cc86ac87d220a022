# -*- coding: utf-8 -*-

r"""SYNTHETIC TASK.

Seeded generator of a toy recognition corpus with rare entity phrases and
the bias lists used to evaluate personalized and common conditions.

Token ids are laid out as carriers (``1..n_carriers``), rare tokens (the
only tokens used in entity phrases) and common tokens. Every token has a
fixed feature template; each rare token is a noisy copy of the template of
a "sound-alike" common token, so without biasing a recogniser tends to
output the common token. Entities appear after a carrier token, the way a
name follows "call".

An utterance's frames repeat the template of each token
``frames_per_token`` times (plus or minus ``frame_jitter``) and add
Gaussian noise.

"""

from __future__ import absolute_import, print_function
import itertools
import zlib
import numpy as np
from adabias.context_encoder import ContextPhrase, as_phrases, dedup_phrases
from adabias.entity_detector import make_ed_labels

SPLITS = ('train', 'dev', 'personalized', 'common')
BIAS_MODES = ('personalized', 'common')


class SynthConfig(object):
    r"""Parameters of the synthetic corpus.

    Parameters
    ----------
    vocab_size: int
        Number of tokens V. Default is ``40``.
    feature_dim: int
        Feature dimension. Default is ``16``.
    frames_per_token: int
        Mean frames per token. Default is ``4``.
    frame_jitter: int
        Maximum deviation from ``frames_per_token``. Default is ``1``.
    noise_std: float
        Standard deviation of the additive frame noise. Default is ``0.3``.
    confusion: float
        Distance scale between a rare token and its sound-alike.
        Default is ``0.35``.
    n_carriers: int
        Carrier tokens. Default is ``2``.
    n_rare: int
        Rare tokens. Default is ``12``.
    n_entities: int
        Entity phrases. Default is ``20``.
    entity_len: int
        Tokens per entity phrase. Default is ``2``.
    n_extra_distractors: int
        Phrases built like entities that never occur. Default is ``60``.
    entity_rate: float
        Fraction of train/dev utterances with an entity. Default is ``0.2``.
    carrier_rate: float
        Probability that a filler token is a carrier. Default is ``0.05``.
    min_filler: int
        Minimum filler tokens per utterance. Default is ``3``.
    max_filler: int
        Maximum filler tokens per utterance. Default is ``6``.
    max_entities: int
        Maximum entities in a personalized utterance. Default is ``2``.
    n_train: int
        Default is ``2000``.
    n_dev: int
        Default is ``200``.
    n_test: int
        Utterances in each of the personalized and common sets.
        Default is ``200``.
    frame_ms: float
        Frame duration in milliseconds. Default is ``40.``.
    seed: int
        Master seed. Default is ``0``.
    """

    FIELDS = ('vocab_size', 'feature_dim', 'frames_per_token',
              'frame_jitter', 'noise_std', 'confusion', 'n_carriers',
              'n_rare', 'n_entities', 'entity_len', 'n_extra_distractors',
              'entity_rate', 'carrier_rate', 'min_filler', 'max_filler',
              'max_entities', 'n_train', 'n_dev', 'n_test', 'frame_ms',
              'seed')

    def __init__(self, vocab_size=40, feature_dim=16, frames_per_token=4,
                 frame_jitter=1, noise_std=0.3, confusion=0.35, n_carriers=2,
                 n_rare=12, n_entities=20, entity_len=2,
                 n_extra_distractors=60, entity_rate=0.2, carrier_rate=0.05,
                 min_filler=3, max_filler=6, max_entities=2, n_train=2000,
                 n_dev=200, n_test=200, frame_ms=40., seed=0):
        r"""Initialize class attributes."""
        self.vocab_size = int(vocab_size)
        self.feature_dim = int(feature_dim)
        self.frames_per_token = int(frames_per_token)
        self.frame_jitter = int(frame_jitter)
        self.noise_std = float(noise_std)
        self.confusion = float(confusion)
        self.n_carriers = int(n_carriers)
        self.n_rare = int(n_rare)
        self.n_entities = int(n_entities)
        self.entity_len = int(entity_len)
        self.n_extra_distractors = int(n_extra_distractors)
        self.entity_rate = float(entity_rate)
        self.carrier_rate = float(carrier_rate)
        self.min_filler = int(min_filler)
        self.max_filler = int(max_filler)
        self.max_entities = int(max_entities)
        self.n_train = int(n_train)
        self.n_dev = int(n_dev)
        self.n_test = int(n_test)
        self.frame_ms = float(frame_ms)
        self.seed = int(seed)
        self.validate()

    @property
    def carrier_ids(self):
        return list(range(1, self.n_carriers + 1))

    @property
    def rare_ids(self):
        start = self.n_carriers + 1
        return list(range(start, start + self.n_rare))

    @property
    def common_ids(self):
        return list(range(self.n_carriers + self.n_rare + 1,
                          self.vocab_size + 1))

    def validate(self):
        r"""Raise ``ValueError`` if the constraints cannot be met."""
        for field in ('vocab_size', 'feature_dim', 'frames_per_token',
                      'n_carriers', 'n_rare', 'n_entities', 'entity_len',
                      'max_entities', 'max_filler', 'frame_ms'):
            if getattr(self, field) <= 0:
                raise ValueError('{} must be positive.'.format(field))
        for field in ('frame_jitter', 'noise_std', 'confusion',
                      'n_extra_distractors', 'min_filler', 'n_train',
                      'n_dev', 'n_test'):
            if getattr(self, field) < 0:
                raise ValueError('{} must be nonnegative.'.format(field))
        for field in ('entity_rate', 'carrier_rate'):
            if not 0. <= getattr(self, field) <= 1.:
                raise ValueError('{} must lie in [0, 1].'.format(field))
        if self.frame_jitter >= self.frames_per_token:
            raise ValueError('frame_jitter must be smaller than '
                             'frames_per_token.')
        if self.min_filler > self.max_filler:
            raise ValueError('min_filler exceeds max_filler.')
        n_common = self.vocab_size - self.n_carriers - self.n_rare
        if n_common < max(2, self.n_rare):
            raise ValueError('Need at least max(2, n_rare) common tokens for '
                             'fillers and sound-alikes, got {}.'.format(
                                 n_common))
        if self.entity_len > self.n_rare:
            raise ValueError('entity_len exceeds the number of rare tokens.')
        n_phrases = int(np.prod(range(self.n_rare - self.entity_len + 1,
                                      self.n_rare + 1)))
        if self.n_entities + self.n_extra_distractors > n_phrases:
            raise ValueError('Only {} distinct rare phrases of length {}; '
                             'cannot draw {} entities and {} distractors.'
                             .format(n_phrases, self.entity_len,
                                     self.n_entities,
                                     self.n_extra_distractors))
        if self.max_entities > self.n_entities:
            raise ValueError('max_entities exceeds n_entities.')

    def to_dict(self):
        return dict((field, getattr(self, field)) for field in self.FIELDS)

    @classmethod
    def from_dict(cls, values):
        unknown = set(values) - set(cls.FIELDS)
        if unknown:
            raise ValueError('Unknown synthetic corpus options: {}.'.format(
                ', '.join(sorted(unknown))))
        return cls(**values)


class Utterance(object):
    r"""One synthetic utterance.

    Parameters
    ----------
    uid: str
        Identifier, e.g. ``'train-00042'``.
    tokens: list of int
        Reference tokens.
    entities: list of tuple
        Entity phrases contained in ``tokens``, in order of appearance.
    frames: numpy.ndarray
        Float32 features, shape (T, feature_dim).
    """

    def __init__(self, uid, tokens, entities, frames):
        r"""Initialize class attributes."""
        if len(tokens) == 0:
            raise ValueError('Utterance {} has no tokens.'.format(uid))
        self.uid = uid
        self.tokens = [int(tok) for tok in tokens]
        self.entities = [tuple(int(tok) for tok in phrase)
                         for phrase in entities]
        self.frames = np.asarray(frames, dtype=np.float32)

    @property
    def num_frames(self):
        return self.frames.shape[0]

    def __repr__(self):
        return 'Utterance({}, tokens={}, frames={})'.format(
            self.uid, self.tokens, self.num_frames)


class SynthCorpus(object):
    r"""Generated splits and the phrase inventory.

    Iterating yields ``(train, dev, personalized, common)``.
    """

    def __init__(self, config, templates, sound_alikes, entities,
                 distractors, splits):
        r"""Initialize class attributes."""
        self.config = config
        self.templates = templates
        self.sound_alikes = sound_alikes
        self.entities = entities
        self.distractors = distractors
        self.train = splits['train']
        self.dev = splits['dev']
        self.personalized = splits['personalized']
        self.common = splits['common']

    @property
    def phrase_pool(self):
        r"""Every phrase a bias list may contain."""
        return list(self.entities) + list(self.distractors)

    def split(self, name):
        if name not in SPLITS:
            raise ValueError('Unknown split {}.'.format(name))
        return getattr(self, name)

    def __iter__(self):
        return iter((self.train, self.dev, self.personalized, self.common))


def _inventory(cfg):
    rng = np.random.default_rng([cfg.seed, 0])
    templates = np.zeros((cfg.vocab_size + 1, cfg.feature_dim))
    templates[1:] = rng.standard_normal((cfg.vocab_size, cfg.feature_dim))
    alike_ids = rng.choice(cfg.common_ids, size=cfg.n_rare, replace=False)
    sound_alikes = {}
    for rare, common in zip(cfg.rare_ids, alike_ids):
        sound_alikes[rare] = int(common)
        templates[rare] = templates[common] + cfg.confusion * \
            rng.standard_normal(cfg.feature_dim)

    phrases = list(itertools.permutations(cfg.rare_ids, cfg.entity_len))
    picks = rng.choice(len(phrases),
                       size=cfg.n_entities + cfg.n_extra_distractors,
                       replace=False)
    chosen = [ContextPhrase(phrases[i]) for i in picks]
    return (templates, sound_alikes, chosen[:cfg.n_entities],
            chosen[cfg.n_entities:])


def _draw(rng, choices, previous):
    r"""Uniform draw avoiding an immediate repeat when possible."""
    allowed = [tok for tok in choices if tok != previous] or list(choices)
    return int(allowed[rng.integers(len(allowed))])


def _utterance_tokens(cfg, rng, entities, n_entities):
    r"""Filler tokens with ``n_entities`` carrier-introduced entities."""
    n_filler = int(rng.integers(cfg.min_filler, cfg.max_filler + 1))
    slots = np.sort(rng.integers(0, n_filler + 1, size=n_entities))
    inserted = [entities[i] for i in rng.choice(len(entities),
                                                size=n_entities,
                                                replace=False)]
    tokens = []
    contained = []
    k = 0
    for gap in range(n_filler + 1):
        while k < n_entities and slots[k] == gap:
            previous = tokens[-1] if tokens else None
            tokens.append(_draw(rng, cfg.carrier_ids, previous))
            tokens.extend(inserted[k].tokens)
            contained.append(inserted[k].tokens)
            k += 1
        if gap == n_filler:
            break
        previous = tokens[-1] if tokens else None
        if rng.random() < cfg.carrier_rate:
            tokens.append(_draw(rng, cfg.carrier_ids, previous))
        else:
            tokens.append(_draw(rng, cfg.common_ids, previous))
    return tokens, contained


def _frames(cfg, rng, templates, tokens):
    durations = cfg.frames_per_token + rng.integers(
        -cfg.frame_jitter, cfg.frame_jitter + 1, size=len(tokens))
    frames = np.repeat(templates[tokens], durations, axis=0)
    if cfg.noise_std > 0:
        frames = frames + cfg.noise_std * rng.standard_normal(frames.shape)
    return frames.astype(np.float32)


def generate_utterance(cfg, templates, entities, split, index):
    r"""Utterance ``index`` of ``split``, a pure function of its inputs."""
    rng = np.random.default_rng([cfg.seed, SPLITS.index(split) + 1, index])
    if split == 'personalized':
        n_entities = 1 + int(rng.integers(cfg.max_entities))
    elif split == 'common':
        n_entities = 0
    else:
        n_entities = int(rng.random() < cfg.entity_rate)
    tokens, contained = _utterance_tokens(cfg, rng, entities, n_entities)
    frames = _frames(cfg, rng, templates, tokens)
    return Utterance('{}-{:05d}'.format(split, index), tokens, contained,
                     frames)


def generate_corpus(cfg):
    r"""Generate the four splits of the synthetic corpus.

    Parameters
    ----------
    cfg: SynthConfig
        Corpus parameters.

    Returns
    -------
    SynthCorpus
        Unpacks as ``train, dev, personalized, common``.
    """
    cfg.validate()
    templates, sound_alikes, entities, distractors = _inventory(cfg)
    sizes = {'train': cfg.n_train, 'dev': cfg.n_dev,
             'personalized': cfg.n_test, 'common': cfg.n_test}
    splits = dict((split, [generate_utterance(cfg, templates, entities,
                                              split, index)
                           for index in range(sizes[split])])
                  for split in SPLITS)
    return SynthCorpus(cfg, templates, sound_alikes, entities, distractors,
                       splits)


def build_bias_list(utt, mode, n, seed, phrase_pool):
    r"""Bias list of size ``n`` for one utterance.

    Parameters
    ----------
    utt: Utterance
        Utterance the list is built for.
    mode: str
        ``'personalized'`` (true entities plus distractors) or
        ``'common'`` (distractors only).
    n: int
        List size; ``0`` gives the empty list. A personalized list no
        longer than the entity count holds a random subset of the entities.
    seed: int
        Seed; combined with the utterance id.
    phrase_pool: list
        Candidate phrases.

    Returns
    -------
    list of adabias.context_encoder.ContextPhrase
    """
    if mode not in BIAS_MODES:
        raise ValueError('Unknown bias list mode {}.'.format(mode))
    if n < 0:
        raise ValueError('Bias list size must be nonnegative.')
    if n == 0:
        return []
    pool = dedup_phrases(phrase_pool)
    rng = np.random.default_rng([int(seed), zlib.crc32(
        utt.uid.encode('utf-8'))])
    true = []
    if mode == 'personalized':
        true = dedup_phrases(utt.entities)
        if n <= len(true):
            return [true[i] for i in rng.choice(len(true), size=n,
                                                replace=False)]
    occurring = set(phrase for phrase in pool
                    if make_ed_labels(utt.tokens, [phrase]).any())
    candidates = [phrase for phrase in pool
                  if phrase not in occurring and phrase not in true]
    need = n - len(true)
    if need > len(candidates):
        raise ValueError('Distractor pool exhausted: {} needed, {} '
                         'available for {}.'.format(need, len(candidates),
                                                    utt.uid))
    listed = list(true) + [candidates[i] for i in
                           rng.choice(len(candidates), size=need,
                                      replace=False)]
    return [listed[i] for i in rng.permutation(len(listed))]


def build_bias_lists(utterances, mode, n, seed, phrase_pool):
    r"""One list per utterance, see :func:`build_bias_list`."""
    phrase_pool = as_phrases(phrase_pool)
    return [build_bias_list(utt, mode, n, seed, phrase_pool)
            for utt in utterances]
