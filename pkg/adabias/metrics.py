# -*- coding: utf-8 -*-

r"""METRICS.

Evaluation measures: Levenshtein alignment, pooled error rates, the
biased-label error rate comparing detector gates to reference phrase
labels, and real-time factor measurement with operation counters.

"""

from __future__ import absolute_import, print_function
import time
import numpy as np
from threadpoolctl import threadpool_limits


def edit_distance(ref, hyp):
    r"""Levenshtein distance with unit costs and its error breakdown.

    Ties in the backtrace prefer substitutions (or matches), then
    deletions, then insertions, so the split into S, I and D is
    reproducible.

    Parameters
    ----------
    ref: sequence
        Reference symbols.
    hyp: sequence
        Hypothesis symbols.

    Returns
    -------
    tuple
        ``(distance, substitutions, insertions, deletions)``.
    """
    ref = list(ref)
    hyp = list(hyp)
    n_ref, n_hyp = len(ref), len(hyp)
    table = np.zeros((n_ref + 1, n_hyp + 1), dtype=np.int64)
    table[:, 0] = np.arange(n_ref + 1)
    table[0, :] = np.arange(n_hyp + 1)
    for i in range(1, n_ref + 1):
        for j in range(1, n_hyp + 1):
            cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            table[i, j] = min(table[i - 1, j - 1] + cost,
                              table[i - 1, j] + 1,
                              table[i, j - 1] + 1)

    subs = ins = dels = 0
    i, j = n_ref, n_hyp
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            if table[i - 1, j - 1] + cost == table[i, j]:
                subs += cost
                i -= 1
                j -= 1
                continue
        if i > 0 and table[i - 1, j] + 1 == table[i, j]:
            dels += 1
            i -= 1
            continue
        ins += 1
        j -= 1
    return int(table[n_ref, n_hyp]), subs, ins, dels


class ErrorRateReport(object):
    r"""Error counts of one or more aligned pairs.

    Parameters
    ----------
    substitutions: int
    insertions: int
    deletions: int
    ref_len: int
        Total reference length.
    """

    def __init__(self, substitutions=0, insertions=0, deletions=0, ref_len=0):
        r"""Initialize class attributes."""
        self.substitutions = int(substitutions)
        self.insertions = int(insertions)
        self.deletions = int(deletions)
        self.ref_len = int(ref_len)

    @classmethod
    def from_pair(cls, ref, hyp):
        _, subs, ins, dels = edit_distance(ref, hyp)
        return cls(subs, ins, dels, len(ref))

    @property
    def errors(self):
        return self.substitutions + self.insertions + self.deletions

    @property
    def rate(self):
        r"""``(S + I + D) / ref_len``."""
        if self.ref_len == 0:
            raise ValueError('Error rate undefined for an empty reference.')
        return self.errors / float(self.ref_len)

    def __add__(self, other):
        return ErrorRateReport(self.substitutions + other.substitutions,
                               self.insertions + other.insertions,
                               self.deletions + other.deletions,
                               self.ref_len + other.ref_len)

    def as_dict(self):
        return {'substitutions': self.substitutions,
                'insertions': self.insertions, 'deletions': self.deletions,
                'ref_len': self.ref_len, 'rate': self.rate}

    def __repr__(self):
        return ('ErrorRateReport(S={}, I={}, D={}, ref_len={})'.format(
            self.substitutions, self.insertions, self.deletions,
            self.ref_len))


def corpus_error_rate(pairs):
    r"""Pooled error rate of ``(ref, hyp)`` pairs.

    The rate is the total number of errors over the total reference length,
    not the mean of per-utterance rates.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError('corpus_error_rate needs at least one pair.')
    report = ErrorRateReport()
    for ref, hyp in pairs:
        report = report + ErrorRateReport.from_pair(ref, hyp)
    if report.ref_len == 0:
        raise ValueError('Total reference length is zero.')
    return report


def l_cer(ref_labels, hyp_labels):
    r"""Biased-label error rate of one utterance.

    ``EditDistance(ref, hyp) / max(len(ref), len(hyp))`` over per-token
    binary label strings; two empty strings give ``0``.
    """
    ref_labels = [int(label) for label in ref_labels]
    hyp_labels = [int(label) for label in hyp_labels]
    longest = max(len(ref_labels), len(hyp_labels))
    if longest == 0:
        return 0.
    return edit_distance(ref_labels, hyp_labels)[0] / float(longest)


def corpus_l_cer(pairs):
    r"""Pooled biased-label error rate: total distance over total length."""
    distance = 0
    longest = 0
    for ref_labels, hyp_labels in pairs:
        distance += edit_distance(list(ref_labels), list(hyp_labels))[0]
        longest += max(len(ref_labels), len(hyp_labels))
    if longest == 0:
        return 0.
    return distance / float(longest)


def relative_reduction(baseline, system):
    r"""Relative error rate reduction ``(baseline - system) / baseline``."""
    if baseline == 0:
        raise ValueError('Relative reduction undefined for a zero baseline.')
    return (baseline - system) / float(baseline)


def gap_recovery(unbiased, always_on, system):
    r"""Fraction of the degradation ``always_on - unbiased`` recovered.

    ``1`` means ``system`` matches the unbiased rate, ``0`` means it is as
    bad as the always-on decode.
    """
    gap = always_on - unbiased
    if gap == 0:
        raise ValueError('No degradation to recover.')
    return (always_on - system) / float(gap)


class RtfReport(object):
    r"""Real-time factor of a decode run.

    Parameters
    ----------
    decode_seconds: float
        Wall-clock decoding time.
    audio_seconds: float
        Total audio duration.
    counters: dict
        Summed operation counters.
    num_utterances: int
        Number of decoded utterances.
    """

    def __init__(self, decode_seconds, audio_seconds, counters=None,
                 num_utterances=0):
        r"""Initialize class attributes."""
        if audio_seconds <= 0:
            raise ValueError('Audio duration must be positive.')
        self.decode_seconds = float(decode_seconds)
        self.audio_seconds = float(audio_seconds)
        self.counters = dict(counters or {})
        self.num_utterances = int(num_utterances)

    @property
    def rtf(self):
        return self.decode_seconds / self.audio_seconds

    def as_dict(self):
        return {'decode_seconds': self.decode_seconds,
                'audio_seconds': self.audio_seconds, 'rtf': self.rtf,
                'counters': dict(self.counters),
                'num_utterances': self.num_utterances}


def sum_counters(hypotheses):
    totals = {}
    for hyp in hypotheses:
        for key, value in hyp.counters.items():
            totals[key] = totals.get(key, 0) + value
    return totals


def measure_rtf(decode_fn, utterances, frame_ms=40., timer=time.perf_counter,
                blas_threads=1):
    r"""Time ``decode_fn`` over ``utterances`` in the calling thread.

    The BLAS and OpenMP pools numpy links against are limited to
    ``blas_threads`` for the timed loop and restored afterwards.

    Parameters
    ----------
    decode_fn: callable
        Maps an utterance to a hypothesis carrying ``counters``.
    utterances: list
        Objects with a ``frames`` array of shape (T, feature_dim).
    frame_ms: float
        Frame duration in milliseconds. Default is ``40.``.
    timer: callable
        Clock. Default is ``time.perf_counter``.
    blas_threads: int
        Native thread pool size while timing. Default is ``1``.

    Returns
    -------
    RtfReport
    """
    utterances = list(utterances)
    audio_seconds = sum(utt.frames.shape[0] for utt in utterances) * \
        frame_ms / 1000.
    if audio_seconds <= 0:
        raise ValueError('Zero audio duration.')
    hypotheses = []
    with threadpool_limits(limits=blas_threads):
        start = timer()
        for utt in utterances:
            hypotheses.append(decode_fn(utt))
        elapsed = timer() - start
    return RtfReport(elapsed, audio_seconds, sum_counters(hypotheses),
                     len(utterances))
