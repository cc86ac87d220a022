# -*- coding: utf-8 -*-

r"""LOSSES.

Transducer negative log-likelihood, detection cross-entropy and their
weighted combination used for training.

The transducer dynamic programme runs in the log domain in 64-bit floats.
For a lattice of log-probabilities :math:`\log p(k | t, u)`, the forward
variables are

.. math::
    \alpha(t, u) = \log\left(e^{\alpha(t-1, u) + \log p(\varnothing|t-1, u)}
                   + e^{\alpha(t, u-1) + \log p(y_u | t, u-1)}\right)

and the likelihood is :math:`\alpha(T-1, U) + \log p(\varnothing|T-1, U)`.

"""

from __future__ import absolute_import, print_function
import numpy as np
from adabias.numerics import (Tensor, log_softmax, record_op, check_finite,
                              as_tensor)
from adabias.transducer import BLANK

DEFAULT_LAMBDA1 = 0.4


def _check_targets(log_probs, targets):
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    num_frames, num_nodes, num_outputs = log_probs.shape
    if num_frames < 1:
        raise ValueError('The lattice needs at least one frame.')
    if num_nodes != targets.size + 1:
        raise ValueError('Lattice has {} token positions for {} '
                         'targets.'.format(num_nodes, targets.size))
    if np.any(targets == BLANK):
        raise ValueError('Targets must not contain the blank symbol.')
    if np.any(targets < 0) or np.any(targets >= num_outputs):
        raise ValueError('Target ids must lie in [1, {}).'.format(
            num_outputs))
    return targets


def _blank_and_emit(log_probs, targets):
    blank = log_probs[:, :, BLANK]
    num_frames = log_probs.shape[0]
    emit = np.full(blank.shape, -np.inf)
    if targets.size:
        emit[:, :-1] = log_probs[:, np.arange(targets.size), targets].reshape(
            num_frames, targets.size)
    return blank, emit


def forward_variables(log_probs, targets):
    r"""Forward variables of the transducer lattice.

    Parameters
    ----------
    log_probs: numpy.ndarray
        Normalised log-probabilities, shape (T, U + 1, V + 1).
    targets: array_like
        U target ids (no blank).

    Returns
    -------
    alpha: numpy.ndarray
        Shape (T, U + 1).
    log_likelihood: float
        :math:`\log P(y | x)`.
    """
    log_probs = np.asarray(log_probs, dtype=np.float64)
    targets = _check_targets(log_probs, targets)
    blank, emit = _blank_and_emit(log_probs, targets)
    num_frames, num_nodes = blank.shape
    alpha = np.full((num_frames, num_nodes), -np.inf)
    alpha[0, 0] = 0.
    for t in range(num_frames):
        for u in range(num_nodes):
            if t == 0 and u == 0:
                continue
            stay = alpha[t - 1, u] + blank[t - 1, u] if t > 0 else -np.inf
            move = alpha[t, u - 1] + emit[t, u - 1] if u > 0 else -np.inf
            alpha[t, u] = np.logaddexp(stay, move)
    log_likelihood = alpha[-1, -1] + blank[-1, -1]
    return alpha, float(log_likelihood)


def backward_variables(log_probs, targets):
    r"""Backward variables, ``beta[t, u]`` = log-probability of finishing
    the alignment from node (t, u), shape (T, U + 1)."""
    log_probs = np.asarray(log_probs, dtype=np.float64)
    targets = _check_targets(log_probs, targets)
    blank, emit = _blank_and_emit(log_probs, targets)
    num_frames, num_nodes = blank.shape
    beta = np.full((num_frames, num_nodes), -np.inf)
    beta[-1, -1] = blank[-1, -1]
    for t in reversed(range(num_frames)):
        for u in reversed(range(num_nodes)):
            if t == num_frames - 1 and u == num_nodes - 1:
                continue
            stay = beta[t + 1, u] + blank[t, u] \
                if t < num_frames - 1 else -np.inf
            move = beta[t, u + 1] + emit[t, u] \
                if u < num_nodes - 1 else -np.inf
            beta[t, u] = np.logaddexp(stay, move)
    return beta


def lattice_gradient(log_probs, targets):
    r"""Gradient of the negative log-likelihood w.r.t. ``log_probs``."""
    log_probs = np.asarray(log_probs, dtype=np.float64)
    targets = _check_targets(log_probs, targets)
    alpha, log_likelihood = forward_variables(log_probs, targets)
    beta = backward_variables(log_probs, targets)
    blank, emit = _blank_and_emit(log_probs, targets)
    num_frames, num_nodes = blank.shape

    grad = np.zeros(log_probs.shape)
    next_beta = np.full((num_frames, num_nodes), -np.inf)
    next_beta[:-1] = beta[1:]
    next_beta[-1, -1] = 0.
    grad[:, :, BLANK] = -np.exp(alpha + blank + next_beta - log_likelihood)
    if targets.size:
        label_occupancy = -np.exp(alpha[:, :-1] + emit[:, :-1] + beta[:, 1:] -
                                  log_likelihood)
        grad[:, np.arange(targets.size), targets] = label_occupancy
    return grad


def _transducer_nll(log_probs, targets):
    lattice = log_probs.data.astype(np.float64)
    _, log_likelihood = forward_variables(lattice, targets)

    def backward_fn(grad):
        return ((grad * lattice_gradient(lattice, targets)).astype(
            log_probs.dtype),)

    return record_op(np.asarray(-log_likelihood, dtype=log_probs.dtype),
                     (log_probs,), backward_fn)


def transducer_loss(logits, targets):
    r"""Transducer negative log-likelihood.

    Parameters
    ----------
    logits: adabias.numerics.Tensor
        Joint output lattice, shape (T, U + 1, V + 1).
    targets: array_like
        U target ids, each in ``1..V``.

    Returns
    -------
    adabias.numerics.Tensor
        Scalar :math:`-\log P(y | x)` in nats.
    """
    if logits.ndim != 3:
        raise ValueError('Expected a (T, U + 1, V + 1) lattice, got shape '
                         '{}.'.format(logits.shape))
    check_finite(logits, 'joint logits')
    return _transducer_nll(log_softmax(logits, axis=-1), targets)


def bias_ce_loss(decision, labels):
    r"""Mean detection cross-entropy over tokens.

    Parameters
    ----------
    decision: adabias.entity_detector.EDDecision or Tensor
        Detector logits of shape (U, 2).
    labels: array_like
        U binary labels.

    Returns
    -------
    adabias.numerics.Tensor
        Scalar loss in nats.
    """
    logits = getattr(decision, 'logits', decision)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.shape[0] != labels.size:
        raise ValueError('{} detector rows for {} labels.'.format(
            logits.shape[0], labels.size))
    if labels.size == 0:
        raise ValueError('The detection loss needs at least one token.')
    if np.any((labels != 0) & (labels != 1)):
        raise ValueError('Detection labels must be 0 or 1.')
    picked = log_softmax(logits, axis=-1)[np.arange(labels.size), labels]
    return -picked.mean()


class JointLossReport(object):
    r"""Value of the joint objective and its terms, in nats."""

    def __init__(self, l_transducer, l_bias, lambda1=DEFAULT_LAMBDA1):
        r"""Initialize class attributes."""
        self.l_transducer = float(l_transducer)
        self.l_bias = float(l_bias)
        self.lambda1 = float(lambda1)
        self.l_total = self.l_transducer + self.lambda1 * self.l_bias

    def as_dict(self):
        return {'l_transducer': self.l_transducer, 'l_bias': self.l_bias,
                'lambda1': self.lambda1, 'l_total': self.l_total}

    def __repr__(self):
        return ('JointLossReport(l_transducer={:.6f}, l_bias={:.6f}, '
                'lambda1={}, l_total={:.6f})'.format(
                    self.l_transducer, self.l_bias, self.lambda1,
                    self.l_total))


def _value(loss):
    return loss.item() if isinstance(loss, Tensor) else float(loss)


def joint_loss(l_t, l_b, lambda1=DEFAULT_LAMBDA1):
    r"""Report ``l_t + lambda1 * l_b``.

    Accepts floats or scalar tensors; raises ``ValueError`` on non-finite
    terms.
    """
    values = (_value(l_t), _value(l_b), float(lambda1))
    if not np.all(np.isfinite(values)):
        raise ValueError('Loss terms must be finite, got {}.'.format(values))
    return JointLossReport(*values)


def combine_losses(l_t, l_b, lambda1=DEFAULT_LAMBDA1):
    r"""Differentiable ``l_t + lambda1 * l_b``; ``l_b`` may be ``None``."""
    if l_b is None or lambda1 == 0:
        return l_t
    return l_t + as_tensor(lambda1, like=l_t) * l_b
