# -*- coding: utf-8 -*-

r"""TRENDS.

Directional checks on a pair of trained detectors. Both adaptive variants
are trained on the same synthetic corpus, evaluated and benchmarked, and
the reports are compared against the qualitative behaviour expected from
adaptive biasing:

- biasing lowers the personalized-set WER,
- always-on biasing raises the common-set WER,
- the adaptive modes recover most of that common-set gap without losing
  the personalized gain,
- the detectors label tokens accurately,
- adaptive < random gating < always-on on the common set,
- the predictor-side detector costs no extra decoding time and runs fewer
  biasing operations than the encoder-predictor one.

"""

from __future__ import absolute_import, print_function
import logging
import os
import numpy as np
from adabias import catt_utils
from adabias.auxiliary_fun import RunCATT
from adabias.metrics import gap_recovery, relative_reduction

logger = logging.getLogger(__name__)

ADAPTIVE_MODES = {'catt+ped': 'AdaptivePED', 'catt+eped': 'AdaptiveEPED'}
TREND_COLUMNS = ['check', 'variant', 'value', 'relation', 'threshold',
                 'passed']
RELATIONS = {'>=': np.greater_equal, '<=': np.less_equal, '>': np.greater}

MIN_PERSONALIZED_GAIN = 0.2
MIN_GAP_RECOVERY = 0.5
MAX_PERSONALIZED_LOSS = 0.1
MAX_L_CER = 0.15
MAX_RTF_RATIO = 1.05


def cell_value(report, mode, n, split, key='wer'):
    r"""Value of ``key`` in the eval report cell (mode, n, split)."""
    for cell in report['cells']:
        if (cell['mode'], cell['n'], cell['split']) == (mode, n, split):
            return cell[key]
    raise ValueError('The eval report has no {} cell for N={} on the {} '
                     'set.'.format(mode, n, split))


def bench_entry(report, mode):
    for entry in report['results']:
        if entry['mode'] == mode:
            return entry
    raise ValueError('The bench report has no {} entry.'.format(mode))


def _check(name, variant, value, relation, threshold):
    passed = value is not None and bool(RELATIONS[relation](value,
                                                            threshold))
    return {'check': name, 'variant': variant,
            'value': None if value is None else float(value),
            'relation': relation, 'threshold': float(threshold),
            'passed': passed}


def _relative_loss(reference, system):
    if reference == 0:
        return 0. if system == 0 else np.inf
    return (system - reference) / float(reference)


def eval_checks(report, variant, n=20):
    r"""Accuracy checks of one checkpoint from its eval report.

    Parameters
    ----------
    report: dict
        Eval report with the ``AlwaysOn``, ``Random50`` and adaptive cells
        at ``N = 0`` and ``N = n`` on both test sets.
    variant: str
        ``'catt+ped'`` or ``'catt+eped'``.
    n: int
        Bias list size of the comparison. Default is ``20``.

    Returns
    -------
    list of dict
        One row per check.
    """
    adaptive = ADAPTIVE_MODES[variant]

    def wer(mode, size, split):
        return cell_value(report, mode, size, split)

    checks = []
    baseline = wer('AlwaysOn', 0, 'personalized')
    gain = None
    if baseline > 0:
        gain = relative_reduction(baseline, wer('AlwaysOn', n,
                                                'personalized'))
    checks.append(_check('personalized_gain', variant, gain, '>=',
                         MIN_PERSONALIZED_GAIN))

    always_on = wer('AlwaysOn', n, 'common')
    unbiased = wer(adaptive, 0, 'common')
    checks.append(_check('common_degradation', variant,
                         always_on - wer('AlwaysOn', 0, 'common'), '>', 0.))

    recovery = None
    if always_on != unbiased:
        recovery = gap_recovery(unbiased, always_on,
                                wer(adaptive, n, 'common'))
    checks.append(_check('gap_recovery', variant, recovery, '>=',
                         MIN_GAP_RECOVERY))
    checks.append(_check(
        'personalized_loss', variant,
        _relative_loss(wer('AlwaysOn', n, 'personalized'),
                       wer(adaptive, n, 'personalized')),
        '<=', MAX_PERSONALIZED_LOSS))
    checks.append(_check(
        'l_cer', variant,
        max(cell_value(report, adaptive, n, split, 'l_cer')
            for split in ('personalized', 'common')),
        '<=', MAX_L_CER))

    random50 = wer('Random50', n, 'common')
    checks.append(_check('ablation_order', variant,
                         min(random50 - wer(adaptive, n, 'common'),
                             always_on - random50), '>', 0.))
    return checks


def bench_checks(ped_report, eped_report):
    r"""Cost checks from the bench reports of both detectors.

    The RTF of ``AdaptivePED`` must stay within 5% of ``AlwaysOn`` and the
    encoder-predictor detector must count more biasing and detector calls
    than the predictor one.
    """
    ped = bench_entry(ped_report, 'AdaptivePED')
    always_on = bench_entry(ped_report, 'AlwaysOn')
    eped = bench_entry(eped_report, 'AdaptiveEPED')
    ratio = None
    if always_on['rtf'] > 0:
        ratio = ped['rtf'] / always_on['rtf']
    checks = [_check('rtf_ratio', 'catt+ped', ratio, '<=', MAX_RTF_RATIO)]
    extra = (sum(eped['counters'].values()) -
             sum(ped['counters'].values()))
    checks.append(_check('counter_totals', 'catt+eped', extra, '>', 0.))
    return checks


def trend_checks(eval_reports, bench_reports, n=20):
    r"""Every directional check of a trained detector pair.

    Parameters
    ----------
    eval_reports: dict
        Eval report per variant (``'catt+ped'``, ``'catt+eped'``).
    bench_reports: dict
        Bench report per variant.
    n: int
        Bias list size of the comparison. Default is ``20``.

    Returns
    -------
    list of dict
    """
    checks = []
    for variant in ('catt+ped', 'catt+eped'):
        checks.extend(eval_checks(eval_reports[variant], variant, n=n))
    checks.extend(bench_checks(bench_reports['catt+ped'],
                               bench_reports['catt+eped']))
    return checks


def run_trends(config_file_path, overrides=None, verbose=True):
    r"""Generate, train both detectors, evaluate, benchmark and check.

    Each checkpoint and its reports go to ``<OUT_DIR>/<variant>/``; the
    checks are written to ``<OUT_DIR>/trend_report.json`` and ``.txt``.

    Returns
    -------
    dict
        The trend report.
    """
    overrides = dict(overrides or {})
    runner = RunCATT(config_file_path, overrides=overrides, verbose=verbose)
    runner.parse_config_file()
    out_dir = runner.out_dir
    sizes = runner.catt_eval_kw['bias_n']
    n = max(sizes)
    if 0 not in sizes or runner.catt_eval_kw['bench_n'] != n:
        logger.warning('The checks compare N=0 with N=%d; BIAS_N should '
                       'hold both and BENCH_N should be %d.', n, n)
    runner.generate_data()

    eval_reports, bench_reports = {}, {}
    for variant in ('catt+ped', 'catt+eped'):
        variant_runner = RunCATT(
            config_file_path, verbose=verbose,
            overrides=dict(overrides, variant=variant, modes=['auto'],
                           out_dir=os.path.join(out_dir, variant)))
        variant_runner.train_model()
        eval_reports[variant] = variant_runner.evaluate_model()
        bench_reports[variant] = variant_runner.benchmark_model()

    checks = trend_checks(eval_reports, bench_reports, n=n)
    report = {'n': n, 'seed': runner.catt_eval_kw['seed'], 'checks': checks,
              'passed': all(check['passed'] for check in checks)}
    catt_utils.write_report(report, checks, TREND_COLUMNS, out_dir,
                            'trend_report')
    failed = [check['check'] for check in checks if not check['passed']]
    if failed:
        logger.warning('Directional checks failed: %s.', ', '.join(failed))
    elif verbose:
        logger.info('All %d directional checks passed.', len(checks))
    return report
