# -*- coding: utf-8 -*-

r"""GRADIENTS.

Defines the gradient class used by the ModOpt first-order optimizer to
train a :class:`adabias.catt.CATT` model on minibatches of utterances.

"""

from __future__ import absolute_import, print_function
import numpy as np
from modopt.opt.gradient import GradParent
from adabias.numerics import backward
from adabias.losses import combine_losses, joint_loss
from adabias.context_encoder import as_phrases


def clip_by_global_norm(grad, max_norm):
    r"""Rescale ``grad`` so its Euclidean norm is at most ``max_norm``.

    A non-positive ``max_norm`` disables clipping.
    """
    if max_norm is None or max_norm <= 0:
        return grad
    norm = np.linalg.norm(grad)
    if norm > max_norm:
        grad = grad * (max_norm / norm)
    return grad


def sample_training_list(entities, phrase_pool, rng, max_size=10,
                         empty_rate=0.2, drop_rate=0.2):
    r"""Draw the bias list shown with one training utterance.

    Parameters
    ----------
    entities: list
        Phrases present in the utterance.
    phrase_pool: list
        Phrases distractors are drawn from.
    rng: numpy.random.Generator
        Random generator (advanced in place).
    max_size: int
        Upper bound on the number of distractors. Default is ``10``.
    empty_rate: float
        Probability of an empty list. Default is ``0.2``.
    drop_rate: float
        Probability of leaving the true entities out. Default is ``0.2``.

    Returns
    -------
    list of adabias.context_encoder.ContextPhrase
    """
    entities = as_phrases(entities)
    if rng.random() < empty_rate:
        return []
    listed = [] if rng.random() < drop_rate else list(entities)
    candidates = [phrase for phrase in as_phrases(phrase_pool)
                  if phrase not in set(entities)]
    n_distractors = min(int(rng.integers(0, max_size + 1)), len(candidates))
    if n_distractors:
        picks = rng.choice(len(candidates), size=n_distractors,
                           replace=False)
        listed.extend(candidates[i] for i in picks)
    order = rng.permutation(len(listed))
    return [listed[i] for i in order]


class CATTGrad(GradParent):
    r"""Gradient of the joint objective over a minibatch.

    Each call to :meth:`get_grad` loads the flat parameter vector into the
    model, draws the next minibatch and a bias list per utterance, runs one
    backward pass over the summed losses and stores the clipped gradient.

    Parameters
    ----------
    model: adabias.catt.CATT
        Model being trained.
    utterances: list of adabias.synth_task.Utterance
        Training set.
    phrase_pool: list
        Phrases used as training distractors.
    batch_size: int
        Utterances per step. Default is ``8``.
    seed: int
        Seed of the batch order and list sampling. Default is ``0``.
    clip_norm: float
        Global gradient norm clip. Default is ``5.``.
    max_list_size: int
        Maximum number of training distractors. Default is ``10``.
    empty_list_rate: float
        Probability of training with an empty list. Default is ``0.2``.
    drop_entity_rate: float
        Probability of removing the true entities from the list.
        Default is ``0.2``.
    """

    def __init__(self, model, utterances, phrase_pool, batch_size=8, seed=0,
                 clip_norm=5., max_list_size=10, empty_list_rate=0.2,
                 drop_entity_rate=0.2):
        r"""Initialize class attributes."""
        if len(utterances) == 0:
            raise ValueError('The training set is empty.')
        if batch_size < 1:
            raise ValueError('batch_size must be positive.')
        GradParent.__init__(self, model.params.flatten().astype(np.float64),
                            self._identity, self._identity)
        self.model = model
        self.utterances = utterances
        self.phrase_pool = as_phrases(phrase_pool)
        self.batch_size = int(batch_size)
        self.clip_norm = clip_norm
        self.max_list_size = max_list_size
        self.empty_list_rate = empty_list_rate
        self.drop_entity_rate = drop_entity_rate
        self._rng = np.random.default_rng([int(seed), 1])
        self._queue = []
        self.iter_cost = []
        self._last_cost = None

    @staticmethod
    def _identity(x):
        return x

    def reset_iter_cost(self):
        r"""Reset iteration cost."""
        self.iter_cost = []

    def get_iter_cost(self):
        r"""Get the per-step loss reports since the last reset."""
        return self.iter_cost

    def next_batch(self):
        r"""Indices of the next minibatch (reshuffled every pass)."""
        batch = []
        while len(batch) < min(self.batch_size, len(self.utterances)):
            if not self._queue:
                self._queue = list(self._rng.permutation(
                    len(self.utterances)))
            batch.append(int(self._queue.pop(0)))
        return batch

    def cost(self, x, y=None, verbose=False):
        r"""Mean joint loss of the last minibatch."""
        return self._last_cost

    def get_grad(self, x):
        r"""Compute current iteration's gradient."""
        params = self.model.params
        params.load_vector(x)
        params.zero_grad()
        lambda1 = self.model.lambda1

        total = None
        reports = []
        batch = self.next_batch()
        for idx in batch:
            utt = self.utterances[idx]
            phrases = []
            if self.model.biased:
                phrases = sample_training_list(
                    utt.entities, self.phrase_pool, self._rng,
                    max_size=self.max_list_size,
                    empty_rate=self.empty_list_rate,
                    drop_rate=self.drop_entity_rate)
            l_t, l_b = self.model.forward(utt.frames, utt.tokens, phrases)
            loss = combine_losses(l_t, l_b, lambda1)
            total = loss if total is None else total + loss
            reports.append((l_t.item(), 0. if l_b is None else l_b.item()))

        total = total * (1. / len(batch))
        self._last_cost = total.item()
        if not np.isfinite(self._last_cost):
            raise RuntimeError(
                'Training diverged: non-finite loss {} on utterances '
                '{}.'.format(self._last_cost,
                             [self.utterances[i].uid for i in batch]))
        backward(total)

        grad = params.grad_vector().astype(np.float64)
        if not np.all(np.isfinite(grad)):
            raise RuntimeError('Training diverged: non-finite gradient on '
                               'utterances {}.'.format(
                                   [self.utterances[i].uid for i in batch]))
        self.grad = clip_by_global_norm(grad, self.clip_norm)
        mean_terms = np.mean(np.array(reports), axis=0)
        self.iter_cost.append(joint_loss(mean_terms[0], mean_terms[1],
                                         lambda1))
