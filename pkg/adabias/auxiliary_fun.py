# -*- coding: utf-8 -*-

r"""AUXILIARY FUNCTIONS.

Essential helper functions of the command-line pipelines. They are needed
to:

- Parse the configuration file.

- Generate the synthetic corpus.

- Train, evaluate and benchmark CATT models from the config file
  parameters.

"""

from __future__ import absolute_import, print_function
import os
import logging
import zlib
from configparser import ConfigParser, Error as ConfigParserError
from concurrent.futures import ProcessPoolExecutor
import numpy as np
from adabias.catt import CATT, VARIANTS, catt_quickload
from adabias.decoder import DecodeMode, INITIAL_GATES, decode_greedy, \
    null_bias_cache
from adabias.entity_detector import make_ed_labels
from adabias.metrics import ErrorRateReport, corpus_l_cer, measure_rtf, \
    relative_reduction, gap_recovery, sum_counters
from adabias.numerics import no_grad
from adabias.synth_task import SynthConfig, generate_corpus, build_bias_list
from adabias.transducer import ModelConfig
import adabias.catt_utils as catt_utils

logger = logging.getLogger(__name__)

EVAL_SPLITS = ('personalized', 'common')
COUNTER_KEYS = ('enc_bias_full', 'pred_bias_full', 'ed_calls')


class ConfigError(ValueError):
    r"""Invalid configuration file or command-line override."""


class CATTParamsParser(object):
    r"""Parse CATT config file.

    Set up a parser for the CATT parameters. Every option has a default,
    so an empty file is a valid configuration; unknown sections and
    options are rejected.

    Parameters
    ----------
    file_path: str
        Path to the config file.

    Raises
    ------
    IOError
        For non existent configuration file.

    """

    MODEL_DEFAULTS = (('VARIANT', 'catt+ped'), ('LAMBDA1', '0.4'),
                      ('MODEL_DIM', '64'), ('NUM_HEADS', '2'),
                      ('ENC_LAYERS', '2'), ('FF_DIM', '128'),
                      ('PRED_LAYERS', '1'), ('CONTEXT_HIDDEN', '32'),
                      ('JOINT_DIM', '64'), ('ED_ACTIVATION', 'identity'))
    TRAIN_DEFAULTS = (('SEED', '0'), ('ETA', '1e-3'), ('N_EPOCHS', '1'),
                      ('BATCH_SIZE', '8'), ('MAX_STEPS', 'None'),
                      ('CLIP_NORM', '5.'), ('MAX_LIST_SIZE', '10'),
                      ('EMPTY_LIST_RATE', '0.2'),
                      ('DROP_ENTITY_RATE', '0.2'))
    EVAL_DEFAULTS = (('SEED', '0'), ('MODES', 'auto'), ('BIAS_N', '0,20'),
                     ('MAX_SYMBOLS', '5'), ('INITIAL_GATE', 'on'),
                     ('LATCH', 'False'), ('THREADS', '1'),
                     ('MAX_UTTERANCES', '0'), ('BENCH_SPLIT', 'common'),
                     ('BENCH_N', '20'), ('BENCH_REPEATS', '3'))
    OUTPUT_DEFAULTS = (('DATA_DIR', './data/'), ('OUT_DIR', './outputs/'),
                       ('CHECKPOINT_NAME', 'catt_checkpoint.bin'))

    def __init__(self, file_path):
        r"""Initialize class."""
        if not os.path.exists(file_path):
            raise IOError('Configuration file {} does not exist.'.format(
                file_path))

        self.file_name = file_path
        self.config = ConfigParser()
        self.config.optionxform = str.upper

        self.processed_inputs = False
        self.catt_model_kw = None
        self.catt_data_kw = None
        self.catt_train_kw = None
        self.catt_eval_kw = None
        self.catt_output_kw = None

    @staticmethod
    def _data_defaults():
        defaults = SynthConfig().to_dict()
        return tuple((field.upper(), repr(defaults[field]))
                     for field in SynthConfig.FIELDS)

    def _sections(self):
        return {'MODEL': self.MODEL_DEFAULTS, 'DATA': self._data_defaults(),
                'TRAIN': self.TRAIN_DEFAULTS, 'EVAL': self.EVAL_DEFAULTS,
                'OUTPUT': self.OUTPUT_DEFAULTS}

    def _set_defaults(self, section, defaults):
        if not self.config.has_section(section):
            self.config.add_section(section)
        for option, value in defaults:
            if not self.config.has_option(section, option):
                self.config.set(section, option, value)

    def _check_unknown(self):
        r"""Reject sections and options the parser does not know."""
        sections = self._sections()
        for section in self.config.sections():
            if section not in sections:
                raise ConfigError('Unknown section [{}] in {}.'.format(
                    section, self.file_name))
            known = set(option for option, _ in sections[section])
            unknown = sorted(set(self.config.options(section)) - known)
            if unknown:
                raise ConfigError('Unknown option(s) {} in section [{}] of '
                                  '{}.'.format(', '.join(unknown), section,
                                               self.file_name))

    def _set_model_options(self):
        """Set Model Options.

        This method checks the ``MODEL`` options in the configuration file.

        """
        self._set_defaults('MODEL', self.MODEL_DEFAULTS)

    def _set_data_options(self):
        """Set Data Options.

        The ``DATA`` options are the synthetic corpus parameters.

        """
        self._set_defaults('DATA', self._data_defaults())

    def _set_train_options(self):
        """Set Train Options."""
        self._set_defaults('TRAIN', self.TRAIN_DEFAULTS)

    def _set_eval_options(self):
        """Set Eval Options."""
        self._set_defaults('EVAL', self.EVAL_DEFAULTS)

    def _set_output_options(self):
        """Set Output Options."""
        self._set_defaults('OUTPUT', self.OUTPUT_DEFAULTS)

    def parse_document(self):
        r"""Parse config file."""
        if not self.processed_inputs:
            try:
                self.config.read(self.file_name)
            except ConfigParserError as err:
                raise ConfigError('Malformed configuration file {}: '
                                  '{}'.format(self.file_name, err))
            self._check_unknown()
            self._set_model_options()
            self._set_data_options()
            self._set_train_options()
            self._set_eval_options()
            self._set_output_options()
            self.processed_inputs = True

    def _get(self, section, option, cast):
        raw = self.config[section].get(option).strip()
        try:
            return cast(raw)
        except ValueError:
            raise ConfigError('Invalid value {!r} for {} in section '
                              '[{}].'.format(raw, option, section))

    @staticmethod
    def _as_bool(raw):
        if raw in ('True', 'true', '1', 'yes'):
            return True
        if raw in ('False', 'false', '0', 'no'):
            return False
        raise ValueError(raw)

    @staticmethod
    def _as_optional_int(raw):
        return None if raw in ('None', '') else int(raw)

    @staticmethod
    def _as_int_list(raw):
        return [int(item) for item in raw.split(',') if item.strip()]

    @staticmethod
    def _as_name_list(raw):
        return [item.strip() for item in raw.split(',') if item.strip()]

    def _build_model_kw(self):
        r"""Build ``MODEL`` parameter dictionary."""
        if not self.processed_inputs:
            self.parse_document()

        if self.catt_model_kw is None:
            variant = self._get('MODEL', 'VARIANT', str)
            if variant not in VARIANTS:
                raise ConfigError('VARIANT must be one of {}.'.format(
                    ', '.join(VARIANTS)))
            self.catt_model_kw = {
                'variant': variant,
                'lambda1': self._get('MODEL', 'LAMBDA1', float),
                'model_dim': self._get('MODEL', 'MODEL_DIM', int),
                'num_heads': self._get('MODEL', 'NUM_HEADS', int),
                'enc_layers': self._get('MODEL', 'ENC_LAYERS', int),
                'ff_dim': self._get('MODEL', 'FF_DIM', int),
                'pred_layers': self._get('MODEL', 'PRED_LAYERS', int),
                'context_hidden': self._get('MODEL', 'CONTEXT_HIDDEN', int),
                'joint_dim': self._get('MODEL', 'JOINT_DIM', int),
                'ed_activation': self._get('MODEL', 'ED_ACTIVATION', str)}
            if self.catt_model_kw['lambda1'] < 0:
                raise ConfigError('LAMBDA1 must be nonnegative.')
            dims = dict((key, val) for key, val in self.catt_model_kw.items()
                        if key not in ('variant', 'lambda1'))
            try:
                ModelConfig(1, 1, **dims)
            except ValueError as err:
                raise ConfigError('Invalid [MODEL] section: {}'.format(err))

    def _build_data_kw(self):
        r"""Build ``DATA`` parameter dictionary."""
        if not self.processed_inputs:
            self.parse_document()

        if self.catt_data_kw is None:
            defaults = SynthConfig().to_dict()
            values = {}
            for field in SynthConfig.FIELDS:
                cast = type(defaults[field])
                values[field] = self._get('DATA', field.upper(), cast)
            try:
                SynthConfig(**values).validate()
            except ValueError as err:
                raise ConfigError('Invalid [DATA] section: {}'.format(err))
            self.catt_data_kw = values

    def _build_train_kw(self):
        r"""Build ``TRAIN`` parameter dictionary."""
        if not self.processed_inputs:
            self.parse_document()

        if self.catt_train_kw is None:
            self.catt_train_kw = {
                'seed': self._get('TRAIN', 'SEED', int),
                'eta': self._get('TRAIN', 'ETA', float),
                'n_epochs': self._get('TRAIN', 'N_EPOCHS', int),
                'batch_size': self._get('TRAIN', 'BATCH_SIZE', int),
                'max_steps': self._get('TRAIN', 'MAX_STEPS',
                                       self._as_optional_int),
                'clip_norm': self._get('TRAIN', 'CLIP_NORM', float),
                'max_list_size': self._get('TRAIN', 'MAX_LIST_SIZE', int),
                'empty_list_rate': self._get('TRAIN', 'EMPTY_LIST_RATE',
                                             float),
                'drop_entity_rate': self._get('TRAIN', 'DROP_ENTITY_RATE',
                                              float)}
            kw = self.catt_train_kw
            if kw['eta'] <= 0 or kw['n_epochs'] < 1 or kw['batch_size'] < 1:
                raise ConfigError('ETA, N_EPOCHS and BATCH_SIZE must be '
                                  'positive.')
            for key in ('empty_list_rate', 'drop_entity_rate'):
                if not 0 <= kw[key] <= 1:
                    raise ConfigError('{} must lie in [0, 1].'.format(
                        key.upper()))

    def _build_eval_kw(self):
        r"""Build ``EVAL`` parameter dictionary."""
        if not self.processed_inputs:
            self.parse_document()

        if self.catt_eval_kw is None:
            self.catt_eval_kw = {
                'seed': self._get('EVAL', 'SEED', int),
                'modes': self._get('EVAL', 'MODES', self._as_name_list),
                'bias_n': self._get('EVAL', 'BIAS_N', self._as_int_list),
                'max_symbols': self._get('EVAL', 'MAX_SYMBOLS', int),
                'initial_gate': self._get('EVAL', 'INITIAL_GATE', str),
                'latch': self._get('EVAL', 'LATCH', self._as_bool),
                'threads': self._get('EVAL', 'THREADS', int),
                'max_utterances': self._get('EVAL', 'MAX_UTTERANCES', int),
                'bench_split': self._get('EVAL', 'BENCH_SPLIT', str),
                'bench_n': self._get('EVAL', 'BENCH_N', int),
                'bench_repeats': self._get('EVAL', 'BENCH_REPEATS', int)}
            check_eval_kw(self.catt_eval_kw)

    def _build_output_kw(self):
        r"""Build ``OUTPUT`` parameter dictionary."""
        if not self.processed_inputs:
            self.parse_document()

        if self.catt_output_kw is None:
            self.catt_output_kw = {
                'data_dir': self._get('OUTPUT', 'DATA_DIR', str),
                'out_dir': self._get('OUTPUT', 'OUT_DIR', str),
                'checkpoint_name': self._get('OUTPUT', 'CHECKPOINT_NAME',
                                             str)}

    def get_model_kw(self):
        r"""Get model parameter dictionary.

        Returns
        -------
        catt_model_kw: dict
            Variant, ``lambda1`` and network dimensions.
        """
        if self.catt_model_kw is None:
            self._build_model_kw()

        return self.catt_model_kw

    def get_data_kw(self):
        r"""Get synthetic corpus parameter dictionary.

        Returns
        -------
        catt_data_kw: dict
            Keyword arguments of :class:`adabias.synth_task.SynthConfig`.
        """
        if self.catt_data_kw is None:
            self._build_data_kw()

        return self.catt_data_kw

    def get_train_kw(self):
        r"""Get optimizer parameter dictionary."""
        if self.catt_train_kw is None:
            self._build_train_kw()

        return self.catt_train_kw

    def get_eval_kw(self):
        r"""Get evaluation and benchmark parameter dictionary."""
        if self.catt_eval_kw is None:
            self._build_eval_kw()

        return self.catt_eval_kw

    def get_output_kw(self):
        r"""Get paths parameter dictionary."""
        if self.catt_output_kw is None:
            self._build_output_kw()

        return self.catt_output_kw


def check_eval_kw(eval_kw):
    r"""Validate evaluation options, raising :class:`ConfigError`."""
    if any(n < 0 for n in eval_kw['bias_n']) or not eval_kw['bias_n']:
        raise ConfigError('BIAS_N must be a nonempty list of nonnegative '
                          'sizes.')
    if eval_kw['initial_gate'] not in INITIAL_GATES:
        raise ConfigError('INITIAL_GATE must be one of {}.'.format(
            ', '.join(INITIAL_GATES)))
    if eval_kw['bench_split'] not in EVAL_SPLITS:
        raise ConfigError('BENCH_SPLIT must be personalized or common.')
    for key in ('max_symbols', 'threads', 'bench_repeats'):
        if eval_kw[key] < 1:
            raise ConfigError('{} must be positive.'.format(key.upper()))
    if eval_kw['max_utterances'] < 0 or eval_kw['bench_n'] < 0:
        raise ConfigError('MAX_UTTERANCES and BENCH_N must be '
                          'nonnegative.')
    if not eval_kw['modes']:
        raise ConfigError('MODES must not be empty.')
    if eval_kw['modes'] != ['auto']:
        for name in eval_kw['modes']:
            try:
                DecodeMode.parse(name)
            except ValueError as err:
                raise ConfigError(str(err))


def supported_modes(model):
    r"""Names of the decode modes ``model`` can run."""
    if not model.biased:
        return ['off']
    modes = ['off', 'on']
    if model.detector_kind:
        modes.append(model.detector_kind)
    modes.append('random50')
    return modes


def resolve_modes(model, names, seed):
    r"""Parse mode names and check the checkpoint supports them.

    Raises
    ------
    ConfigError
        For a mode the checkpoint variant cannot run.
    """
    if names == ['auto']:
        names = supported_modes(model)
    modes = []
    for name in names:
        mode = DecodeMode.parse(name, seed=seed)
        if (mode.uses_bias and not model.biased) or (
                mode.detector_kind and
                mode.detector_kind != model.detector_kind):
            raise ConfigError('Mode {} is not available for a {} '
                              'checkpoint.'.format(mode.name, model.variant))
        modes.append(mode)
    return modes


def utterance_seed(seed, uid):
    r"""Integer seed derived from a run seed and an utterance id."""
    sequence = np.random.SeedSequence([int(seed),
                                       zlib.crc32(uid.encode('utf-8'))])
    return int(sequence.generate_state(1)[0])


def decode_utterance(model, utt, phrases, mode, decode_kw, null_cache=None,
                     phrase_cache=None):
    r"""Decode one utterance and summarise the hypothesis.

    An empty list runs the unbiased decode; ``Random50`` draws are seeded
    per utterance so results do not depend on the decoding order.

    Returns
    -------
    dict
        ``uid``, ``tokens``, ``gates``, ``ref_labels`` and ``counters``.
    """
    if not phrases:
        mode = DecodeMode.always_off()
    elif mode.kind == 'Random50':
        mode = DecodeMode.random50(utterance_seed(mode.seed, utt.uid))
    hyp = decode_greedy(model, utt.frames, phrases, mode,
                        null_cache=null_cache, phrase_cache=phrase_cache,
                        **decode_kw)
    return {'uid': utt.uid, 'tokens': list(hyp.tokens),
            'gates': [int(gate) for gate in hyp.token_gates],
            'ref_labels': [int(label) for label in
                           make_ed_labels(utt.tokens, phrases)],
            'counters': dict(hyp.counters)}


_WORKER = {}


def _init_worker(checkpoint_path):
    model = catt_quickload(checkpoint_path)
    _WORKER['model'] = model
    _WORKER['null_cache'] = null_bias_cache(model)
    _WORKER['phrase_cache'] = {}


def _decode_job(job):
    utt, phrases, mode, decode_kw = job
    with no_grad():
        return decode_utterance(_WORKER['model'], utt, phrases, mode,
                                decode_kw, _WORKER['null_cache'],
                                _WORKER['phrase_cache'])


class RunCATT(object):
    r"""Run the CATT pipelines.

    This class allows to generate the synthetic corpus, train a model and
    evaluate or benchmark it using the parameters present on the
    configuration file.

    Parameters
    ----------
    config_file_path: str
        Path to the configuration file.
    overrides: dict
        Command-line values replacing the file ones. Recognised keys are
        ``seed``, ``modes``, ``bias_n``, ``out_dir``, ``threads``,
        ``variant``, ``data_dir`` and ``checkpoint``.
    verbose: bool
        Verbose mode.
        Default is ``True``.

    """

    def __init__(self, config_file_path, overrides=None, verbose=True):
        r"""Initialize class."""
        self.config_file_path = config_file_path
        self.overrides = dict((key, val) for key, val in
                              (overrides or {}).items() if val is not None)

        self.param_parser = None
        self.catt_model_kw = None
        self.catt_data_kw = None
        self.catt_train_kw = None
        self.catt_eval_kw = None
        self.catt_output_kw = None

        self.eval_report_name = 'eval_report'
        self.bench_report_name = 'bench_report'

        self.parsed_parameters = False
        self.verbose = verbose

    def parse_config_file(self):
        r"""Parse configuration file and apply the overrides."""
        if self.parsed_parameters:
            return
        try:
            self.param_parser = CATTParamsParser(self.config_file_path)
        except IOError as err:
            raise ConfigError(str(err))
        self.catt_model_kw = dict(self.param_parser.get_model_kw())
        self.catt_data_kw = dict(self.param_parser.get_data_kw())
        self.catt_train_kw = dict(self.param_parser.get_train_kw())
        self.catt_eval_kw = dict(self.param_parser.get_eval_kw())
        self.catt_output_kw = dict(self.param_parser.get_output_kw())

        over = self.overrides
        if 'seed' in over:
            seed = int(over['seed'])
            if seed < 0:
                raise ConfigError('--seed must be nonnegative.')
            self.catt_data_kw['seed'] = seed
            self.catt_train_kw['seed'] = seed
            self.catt_eval_kw['seed'] = seed
        if 'variant' in over:
            if over['variant'] not in VARIANTS:
                raise ConfigError('--variant must be one of {}.'.format(
                    ', '.join(VARIANTS)))
            self.catt_model_kw['variant'] = over['variant']
        for key in ('modes', 'bias_n', 'threads'):
            if key in over:
                self.catt_eval_kw[key] = over[key]
        if 'out_dir' in over:
            self.catt_output_kw['out_dir'] = over['out_dir']
        if 'data_dir' in over:
            self.catt_output_kw['data_dir'] = over['data_dir']
        check_eval_kw(self.catt_eval_kw)
        self.parsed_parameters = True

    @property
    def data_dir(self):
        return self.catt_output_kw['data_dir']

    @property
    def out_dir(self):
        return self.catt_output_kw['out_dir']

    @property
    def checkpoint_path(self):
        if 'checkpoint' in self.overrides:
            return self.overrides['checkpoint']
        return os.path.join(self.out_dir,
                            self.catt_output_kw['checkpoint_name'])

    def _decode_kw(self):
        return {'max_symbols_per_frame': self.catt_eval_kw['max_symbols'],
                'initial_gate': self.catt_eval_kw['initial_gate'],
                'latch': self.catt_eval_kw['latch']}

    def _load_split(self, split):
        utterances = catt_utils.load_dataset(
            catt_utils.dataset_path(self.data_dir, split))
        limit = self.catt_eval_kw['max_utterances']
        if limit and split in EVAL_SPLITS:
            utterances = utterances[:limit]
        return utterances

    def _phrase_pool(self):
        return catt_utils.load_phrase_pool(self.data_dir)

    def generate_data(self):
        r"""Generate the corpus and write it with its manifest.

        Returns
        -------
        str
            Manifest path.
        """
        self.parse_config_file()
        cfg = SynthConfig(**self.catt_data_kw)
        corpus = generate_corpus(cfg)
        paths = catt_utils.save_corpus(corpus, self.data_dir)
        manifest = catt_utils.write_manifest(paths, cfg.seed, self.data_dir)
        if self.verbose:
            logger.info('Corpus written to %s (%d train, %d dev, %d + %d '
                        'test utterances).', self.data_dir,
                        len(corpus.train), len(corpus.dev),
                        len(corpus.personalized), len(corpus.common))
        return manifest

    def train_model(self):
        r"""Train a model on the generated corpus and save it.

        Returns
        -------
        CATT
            The fitted model.
        """
        self.parse_config_file()
        data_cfg = SynthConfig(**self.catt_data_kw)
        cfg_path = os.path.join(self.data_dir, catt_utils.INVENTORY_NAME)
        saved_cfg, _, _ = catt_utils.load_inventory(cfg_path)
        if saved_cfg.vocab_size != data_cfg.vocab_size or \
                saved_cfg.feature_dim != data_cfg.feature_dim:
            logger.warning('Corpus in %s was generated with a different '
                           '[DATA] section; using its dimensions.',
                           self.data_dir)
        train_set = catt_utils.load_dataset(
            catt_utils.dataset_path(self.data_dir, 'train'))
        dev_set = catt_utils.load_dataset(
            catt_utils.dataset_path(self.data_dir, 'dev'))

        model_kw = dict(self.catt_model_kw)
        variant = model_kw.pop('variant')
        lambda1 = model_kw.pop('lambda1')
        train_kw = dict(self.catt_train_kw)
        seed = train_kw.pop('seed')
        model = CATT(saved_cfg.vocab_size, saved_cfg.feature_dim,
                     variant=variant, lambda1=lambda1, seed=seed,
                     verbose=self.verbose, frame_ms=saved_cfg.frame_ms,
                     **model_kw)
        if self.verbose:
            logger.info('Training %r with lambda1=%.2f.', model,
                        model.lambda1)
        model.fit(train_set, phrase_pool=self._phrase_pool(),
                  dev_set=dev_set, train_seed=seed, **train_kw)

        if not os.path.isdir(self.out_dir):
            os.makedirs(self.out_dir)
        model.quicksave(self.checkpoint_path)
        if self.verbose:
            logger.info('Checkpoint saved to %s.', self.checkpoint_path)
        return model

    def _load_model(self):
        path = self.checkpoint_path
        if not os.path.isfile(path):
            raise IOError('Checkpoint {} does not exist.'.format(path))
        model = catt_quickload(path)
        model.verbose = self.verbose
        return model

    def _decode_jobs(self, model, jobs):
        threads = self.catt_eval_kw['threads']
        if threads > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=threads,
                                     initializer=_init_worker,
                                     initargs=(self.checkpoint_path,)) as \
                    pool:
                return list(pool.map(_decode_job, jobs, chunksize=8))
        cache = null_bias_cache(model)
        phrase_cache = {}
        with no_grad():
            return [decode_utterance(model, utt, phrases, mode, kw, cache,
                                     phrase_cache)
                    for utt, phrases, mode, kw in jobs]

    def evaluate_cell(self, model, utterances, phrase_pool, mode, n, split):
        r"""Decode one (mode, list size, split) cell of the grid.

        Returns
        -------
        dict
            WER breakdown, L-CER and summed counters of the cell.
        """
        seed = self.catt_eval_kw['seed']
        decode_kw = self._decode_kw()
        jobs = [(utt, build_bias_list(utt, split, n, seed, phrase_pool),
                 mode, decode_kw) for utt in utterances]
        results = self._decode_jobs(model, jobs)
        errors = ErrorRateReport()
        for utt, result in zip(utterances, results):
            errors = errors + ErrorRateReport.from_pair(utt.tokens,
                                                        result['tokens'])
        cell = {'mode': mode.name, 'n': int(n), 'split': split,
                'num_utterances': len(utterances),
                'wer': errors.rate,
                'substitutions': errors.substitutions,
                'insertions': errors.insertions,
                'deletions': errors.deletions,
                'ref_len': errors.ref_len,
                'l_cer': corpus_l_cer((res['ref_labels'], res['gates'])
                                      for res in results)}
        totals = dict((key, 0) for key in COUNTER_KEYS)
        totals.update(sum_counters(_CountedResult(res) for res in results))
        cell['counters'] = totals
        return cell

    def evaluate_model(self):
        r"""Evaluate the checkpoint over modes, list sizes and test sets.

        Returns
        -------
        dict
            The report written to ``eval_report.json``.
        """
        self.parse_config_file()
        model = self._load_model()
        modes = resolve_modes(model, self.catt_eval_kw['modes'],
                              self.catt_eval_kw['seed'])
        phrase_pool = self._phrase_pool()
        splits = dict((split, self._load_split(split))
                      for split in EVAL_SPLITS)

        cells = []
        for mode in modes:
            for n in self.catt_eval_kw['bias_n']:
                for split in EVAL_SPLITS:
                    cell = self.evaluate_cell(model, splits[split],
                                              phrase_pool, mode, n, split)
                    cells.append(cell)
                    if self.verbose:
                        logger.info('%-12s N=%-3d %-12s WER=%.4f '
                                    'L-CER=%.4f', cell['mode'], n, split,
                                    cell['wer'], cell['l_cer'])

        report = {'checkpoint': {'variant': model.variant,
                                 'lambda1': model.lambda1,
                                 'seed': model.seed},
                  'seed': self.catt_eval_kw['seed'],
                  'decode': self._decode_kw(),
                  'cells': cells,
                  'summary': summarize_cells(cells)}
        rows = [flat_row(cell) for cell in cells]
        catt_utils.write_report(report, rows, EVAL_COLUMNS, self.out_dir,
                                self.eval_report_name)
        return report

    def benchmark_model(self):
        r"""Measure the real-time factor of each mode, single-threaded.

        Each mode is timed ``BENCH_REPEATS`` times and the minimum RTF is
        reported. Decoding runs in the calling process with the native
        BLAS pools pinned to one thread. Operation counters must not change
        across repeats.

        Returns
        -------
        dict
            The report written to ``bench_report.json``.
        """
        self.parse_config_file()
        if self.catt_eval_kw['threads'] != 1:
            logger.info('Benchmark runs single-threaded; ignoring '
                        'threads=%d.', self.catt_eval_kw['threads'])
        model = self._load_model()
        modes = resolve_modes(model, self.catt_eval_kw['modes'],
                              self.catt_eval_kw['seed'])
        split = self.catt_eval_kw['bench_split']
        n = self.catt_eval_kw['bench_n'] if model.biased else 0
        utterances = self._load_split(split)
        phrase_pool = self._phrase_pool()
        seed = self.catt_eval_kw['seed']
        lists = dict((utt.uid, build_bias_list(utt, split, n, seed,
                                               phrase_pool))
                     for utt in utterances)
        decode_kw = self._decode_kw()
        cache = null_bias_cache(model)

        results = []
        for mode in modes:
            phrase_cache = {}

            def decode_fn(utt):
                return _CountedResult(decode_utterance(
                    model, utt, lists[utt.uid], mode, decode_kw, cache,
                    phrase_cache))

            reports = []
            with no_grad():
                for _ in range(self.catt_eval_kw['bench_repeats']):
                    reports.append(measure_rtf(
                        decode_fn, utterances, frame_ms=model.config.frame_ms,
                        blas_threads=1))
            for other in reports[1:]:
                if other.counters != reports[0].counters:
                    logger.warning('Counters of %s differ across repeats: '
                                   '%s vs %s.', mode.name,
                                   reports[0].counters, other.counters)
            best = min(reports, key=lambda report: report.rtf)
            entry = best.as_dict()
            entry.update({'mode': mode.name, 'n': n, 'split': split,
                          'repeats': len(reports),
                          'all_rtf': [report.rtf for report in reports]})
            results.append(entry)
            if self.verbose:
                logger.info('%-12s RTF=%.4f counters=%s', mode.name,
                            entry['rtf'], entry['counters'])

        report = {'checkpoint': {'variant': model.variant,
                                 'seed': model.seed},
                  'seed': seed, 'blas_threads': 1, 'results': results}
        rows = [dict(flat_row(entry), rtf=entry['rtf'],
                     audio_seconds=entry['audio_seconds'])
                for entry in results]
        catt_utils.write_report(report, rows, BENCH_COLUMNS, self.out_dir,
                                self.bench_report_name)
        return report


class _CountedResult(object):
    r"""Adapter exposing decode summaries to :func:`measure_rtf`."""

    def __init__(self, result):
        self.counters = result['counters']


EVAL_COLUMNS = ['mode', 'n', 'split', 'num_utterances', 'wer', 'l_cer',
                'enc_bias_full', 'pred_bias_full', 'ed_calls']
BENCH_COLUMNS = ['mode', 'n', 'split', 'audio_seconds', 'rtf',
                 'enc_bias_full', 'pred_bias_full', 'ed_calls']


def flat_row(cell):
    r"""Flatten the counters of a report cell for the text table."""
    row = dict((key, val) for key, val in cell.items() if key != 'counters')
    row.update(cell.get('counters', {}))
    return row


def summarize_cells(cells):
    r"""Relative WER reduction and common-set gap recovery per mode and N.

    The personalized reduction compares each cell with the ``N = 0`` decode
    of the same mode. The gap recovery measures how much of the common-set
    degradation of ``AlwaysOn`` a mode removes at the same list size.
    Entries that are undefined (zero baseline, no degradation) are
    ``None``.
    """
    index = dict(((cell['mode'], cell['n'], cell['split']), cell['wer'])
                 for cell in cells)
    summary = []
    for (mode, n, split), wer in sorted(index.items()):
        if n == 0:
            continue
        entry = {'mode': mode, 'n': n, 'split': split,
                 'relative_reduction': None, 'gap_recovery': None}
        baseline = index.get((mode, 0, split))
        if baseline is not None and baseline > 0:
            entry['relative_reduction'] = relative_reduction(baseline, wer)
        always_on = index.get(('AlwaysOn', n, 'common'))
        unbiased = index.get((mode, 0, 'common'))
        if split == 'common' and always_on is not None and \
                unbiased is not None and always_on != unbiased:
            entry['gap_recovery'] = gap_recovery(unbiased, always_on, wer)
        summary.append(entry)
    return summary


def run_pipeline(command, config_file_path, overrides=None, verbose=True):
    r"""Run one of the ``gen``, ``train``, ``eval`` or ``bench`` commands."""
    runner = RunCATT(config_file_path, overrides=overrides, verbose=verbose)
    actions = {'gen': runner.generate_data, 'train': runner.train_model,
               'eval': runner.evaluate_model,
               'bench': runner.benchmark_model}
    if command not in actions:
        raise ValueError('Unknown command {}.'.format(command))
    return actions[command]()
