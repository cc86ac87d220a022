from unittest import TestCase
import io
import json
import os
import shutil
import tempfile
import numpy.testing as npt
from adabias.auxiliary_fun import (CATTParamsParser, ConfigError, RunCATT,
                                   run_pipeline, resolve_modes,
                                   supported_modes, summarize_cells,
                                   utterance_seed, flat_row)
from adabias.catt import CATT, catt_quickload
from adabias.cli import main, EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME
from adabias.synth_task import SynthConfig
from adabias.trends import run_trends
import adabias.catt_utils as catt_utils

TINY_CONFIG = u"""
[MODEL]
VARIANT = catt+ped
MODEL_DIM = 8
NUM_HEADS = 2
ENC_LAYERS = 1
FF_DIM = 8
CONTEXT_HIDDEN = 4
JOINT_DIM = 8

[DATA]
VOCAB_SIZE = 20
FEATURE_DIM = 3
N_RARE = 6
N_ENTITIES = 5
N_EXTRA_DISTRACTORS = 10
MIN_FILLER = 1
MAX_FILLER = 2
FRAMES_PER_TOKEN = 2
FRAME_JITTER = 0
N_TRAIN = 6
N_DEV = 2
N_TEST = 3
SEED = 5

[TRAIN]
N_EPOCHS = 1
BATCH_SIZE = 2
MAX_STEPS = 1

[EVAL]
MODES = off,on,ped
BIAS_N = 0,3
BENCH_N = 3
BENCH_REPEATS = 2

[OUTPUT]
DATA_DIR = {data_dir}
OUT_DIR = {out_dir}
"""


def write_text(path, text):
    with io.open(path, 'w', encoding='utf-8') as handle:
        handle.write(text)
    return path


def read_json(path):
    with io.open(path, 'r', encoding='utf-8') as handle:
        return json.load(handle)


def tiny_model(variant):
    return CATT(vocab_size=6, feature_dim=3, variant=variant, verbose=False,
                model_dim=8, num_heads=2, enc_layers=1, ff_dim=8,
                context_hidden=4, joint_dim=8)


class ParamsParserTestCase(TestCase):

    def setUp(self):
        self.tmp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp_dir)

    def config(self, text):
        return write_text(os.path.join(self.tmp_dir, 'config.ini'), text)

    def test_empty_file_defaults(self):
        parser = CATTParamsParser(self.config(u''))
        model_kw = parser.get_model_kw()
        self.assertEqual(model_kw['variant'], 'catt+ped')
        npt.assert_almost_equal(model_kw['lambda1'], 0.4)
        self.assertEqual(parser.get_data_kw(), SynthConfig().to_dict())
        self.assertIsNone(parser.get_train_kw()['max_steps'])
        eval_kw = parser.get_eval_kw()
        self.assertEqual(eval_kw['bias_n'], [0, 20])
        self.assertEqual(eval_kw['modes'], ['auto'])
        self.assertEqual(eval_kw['initial_gate'], 'on')
        self.assertFalse(eval_kw['latch'])
        self.assertEqual(parser.get_output_kw()['checkpoint_name'],
                         'catt_checkpoint.bin')

    def test_values_are_read(self):
        parser = CATTParamsParser(self.config(
            u'[MODEL]\nvariant = catt+eped\nLAMBDA1 = 0.7\n'
            u'[EVAL]\nBIAS_N = 0, 5, 10\nLATCH = True\nMODES = on,eped\n'))
        self.assertEqual(parser.get_model_kw()['variant'], 'catt+eped')
        npt.assert_almost_equal(parser.get_model_kw()['lambda1'], 0.7)
        self.assertEqual(parser.get_eval_kw()['bias_n'], [0, 5, 10])
        self.assertTrue(parser.get_eval_kw()['latch'])
        self.assertEqual(parser.get_eval_kw()['modes'], ['on', 'eped'])

    def test_missing_file(self):
        with self.assertRaises(IOError):
            CATTParamsParser(os.path.join(self.tmp_dir, 'none.ini'))

    def test_invalid_files(self):
        bad_texts = (u'[MODEL]\nVARIANTS = ct\n', u'[SPEAKERS]\nN = 3\n',
                     u'[TRAIN]\nETA = fast\n', u'[MODEL]\nVARIANT = rnnt\n',
                     u'[MODEL]\nMODEL_DIM = 9\n',
                     u'[DATA]\nFRAME_JITTER = 9\n',
                     u'[EVAL]\nMODES = sometimes\n', u'[EVAL]\nBIAS_N = -1\n',
                     u'[EVAL]\nINITIAL_GATE = maybe\n', u'no section here\n')
        for text in bad_texts:
            parser = CATTParamsParser(self.config(text))
            with self.assertRaises(ConfigError, msg=text):
                parser.get_model_kw()
                parser.get_data_kw()
                parser.get_train_kw()
                parser.get_eval_kw()


class ModeResolutionTestCase(TestCase):

    def test_supported_modes(self):
        self.assertEqual(supported_modes(tiny_model('ct')), ['off'])
        self.assertEqual(supported_modes(tiny_model('catt')),
                         ['off', 'on', 'random50'])
        self.assertEqual(supported_modes(tiny_model('catt+eped')),
                         ['off', 'on', 'eped', 'random50'])

    def test_resolve(self):
        model = tiny_model('catt+ped')
        kinds = [mode.kind for mode in resolve_modes(model, ['auto'], 0)]
        self.assertEqual(kinds, ['AlwaysOff', 'AlwaysOn', 'AdaptivePED',
                                 'Random50'])
        with self.assertRaises(ConfigError):
            resolve_modes(model, ['eped'], 0)
        with self.assertRaises(ConfigError):
            resolve_modes(tiny_model('ct'), ['on'], 0)

    def test_utterance_seed(self):
        self.assertEqual(utterance_seed(3, 'common-00001'),
                         utterance_seed(3, 'common-00001'))
        self.assertNotEqual(utterance_seed(3, 'common-00001'),
                            utterance_seed(3, 'common-00002'))


class SummaryTestCase(TestCase):

    def test_summarize_cells(self):
        wers = {('AlwaysOff', 0, 'personalized'): 0.4,
                ('AlwaysOff', 20, 'personalized'): 0.4,
                ('AlwaysOn', 0, 'personalized'): 0.4,
                ('AlwaysOn', 20, 'personalized'): 0.2,
                ('AlwaysOn', 0, 'common'): 0.1,
                ('AlwaysOn', 20, 'common'): 0.3,
                ('AdaptivePED', 0, 'common'): 0.1,
                ('AdaptivePED', 20, 'common'): 0.15}
        cells = [{'mode': mode, 'n': n, 'split': split, 'wer': wer}
                 for (mode, n, split), wer in wers.items()]
        summary = dict(((entry['mode'], entry['split']), entry)
                       for entry in summarize_cells(cells))
        self.assertEqual(len(summary), 4)
        npt.assert_almost_equal(
            summary[('AlwaysOn', 'personalized')]['relative_reduction'], 0.5)
        npt.assert_almost_equal(
            summary[('AlwaysOff', 'personalized')]['relative_reduction'], 0.)
        npt.assert_almost_equal(
            summary[('AdaptivePED', 'common')]['gap_recovery'], 0.75)
        npt.assert_almost_equal(
            summary[('AlwaysOn', 'common')]['gap_recovery'], 0.)
        self.assertIsNone(
            summary[('AlwaysOn', 'personalized')]['gap_recovery'])

    def test_flat_row(self):
        row = flat_row({'mode': 'AlwaysOn', 'counters': {'ed_calls': 3}})
        self.assertEqual(row, {'mode': 'AlwaysOn', 'ed_calls': 3})


class PipelineTestCase(TestCase):

    def setUp(self):
        self.tmp_dir = tempfile.mkdtemp()
        self.data_dir = os.path.join(self.tmp_dir, 'data')
        self.out_dir = os.path.join(self.tmp_dir, 'out')
        self.config_path = write_text(
            os.path.join(self.tmp_dir, 'config.ini'),
            TINY_CONFIG.format(data_dir=self.data_dir, out_dir=self.out_dir))
        run_pipeline('gen', self.config_path, verbose=False)

    def tearDown(self):
        shutil.rmtree(self.tmp_dir)

    def test_generation_is_reproducible(self):
        manifest = read_json(os.path.join(self.data_dir, 'manifest.json'))
        self.assertEqual(manifest['seed'], 5)
        self.assertIn('train.jsonl', manifest['files'])
        self.assertIn('entities.txt', manifest['files'])
        other_dir = os.path.join(self.tmp_dir, 'again')
        RunCATT(self.config_path, overrides={'data_dir': other_dir},
                verbose=False).generate_data()
        self.assertEqual(read_json(os.path.join(other_dir, 'manifest.json')),
                         manifest)
        RunCATT(self.config_path, overrides={'data_dir': other_dir,
                                             'seed': 6},
                verbose=False).generate_data()
        self.assertNotEqual(
            read_json(os.path.join(other_dir, 'manifest.json'))['files'],
            manifest['files'])

    def test_dataset_files(self):
        train = catt_utils.load_dataset(
            catt_utils.dataset_path(self.data_dir, 'train'))
        self.assertEqual(len(train), 6)
        self.assertEqual(train[0].frames.shape[1], 3)
        self.assertEqual(len(catt_utils.load_phrase_pool(self.data_dir)), 15)
        config, entities, _ = catt_utils.load_inventory(
            os.path.join(self.data_dir, catt_utils.INVENTORY_NAME))
        self.assertEqual(config.seed, 5)
        self.assertEqual(len(entities), 5)
        with self.assertRaises(IOError):
            catt_utils.load_dataset(os.path.join(self.data_dir, 'x.jsonl'))

    def test_train_eval_bench(self):
        model = run_pipeline('train', self.config_path, verbose=False)
        checkpoint = os.path.join(self.out_dir, 'catt_checkpoint.bin')
        self.assertTrue(os.path.isfile(checkpoint))
        self.assertEqual(catt_quickload(checkpoint).variant, model.variant)

        report = run_pipeline('eval', self.config_path, verbose=False)
        cells = report['cells']
        self.assertEqual(len(cells), 3 * 2 * 2)
        for split in ('personalized', 'common'):
            unbiased = [cell['wer'] for cell in cells
                        if cell['n'] == 0 and cell['split'] == split]
            # An empty list always decodes without bias.
            self.assertEqual(len(set(unbiased)), 1)
        for cell in cells:
            self.assertEqual(cell['num_utterances'], 3)
            self.assertGreaterEqual(cell['l_cer'], 0.)
            if cell['mode'] == 'AlwaysOff' or cell['n'] == 0:
                self.assertEqual(cell['counters']['enc_bias_full'], 0)
        self.assertTrue(os.path.isfile(os.path.join(self.out_dir,
                                                    'eval_report.txt')))
        self.assertEqual(read_json(os.path.join(
            self.out_dir, 'eval_report.json'))['seed'], 0)

        bench = run_pipeline('bench', self.config_path, verbose=False)
        common = catt_utils.load_dataset(
            catt_utils.dataset_path(self.data_dir, 'common'))
        n_frames = sum(utt.num_frames for utt in common)
        by_mode = dict((entry['mode'], entry) for entry in bench['results'])
        self.assertEqual(sorted(by_mode),
                         ['AdaptivePED', 'AlwaysOff', 'AlwaysOn'])
        self.assertEqual(by_mode['AlwaysOn']['counters']['enc_bias_full'],
                         n_frames)
        self.assertEqual(by_mode['AlwaysOff']['counters']['ed_calls'], 0)
        npt.assert_almost_equal(by_mode['AlwaysOn']['audio_seconds'],
                                n_frames * 0.04)
        self.assertEqual(len(by_mode['AlwaysOn']['all_rtf']), 2)
        self.assertEqual(bench['blas_threads'], 1)

    def test_command_line(self):
        args = ['--config', self.config_path]
        self.assertEqual(main(['train'] + args), EXIT_OK)
        self.assertEqual(main(['eval'] + args + ['--mode', 'off',
                                                 '--bias-n', '0']), EXIT_OK)
        report = read_json(os.path.join(self.out_dir, 'eval_report.json'))
        self.assertEqual(len(report['cells']), 2)
        self.assertEqual(main(['eval'] + args + ['--mode', 'eped']),
                         EXIT_CONFIG)
        self.assertEqual(main(['eval'] + args + ['--checkpoint', os.path.join(
            self.tmp_dir, 'missing.bin')]), EXIT_RUNTIME)

    def test_command_line_errors(self):
        bad_config = write_text(os.path.join(self.tmp_dir, 'bad.ini'),
                                u'[MODEL]\nUNKNOWN = 1\n')
        self.assertEqual(main(['gen', '--config', bad_config]), EXIT_CONFIG)
        self.assertEqual(main(['gen', '--config', os.path.join(
            self.tmp_dir, 'missing.ini')]), EXIT_CONFIG)
        self.assertEqual(main(['gen']), EXIT_CONFIG)
        self.assertEqual(main([]), EXIT_CONFIG)
        self.assertEqual(main(['eval', '--config', self.config_path,
                               '--bias-n', 'a,b']), EXIT_CONFIG)
        self.assertEqual(main(['train', '--config', self.config_path,
                               '--variant', 'rnnt']), EXIT_CONFIG)
        self.assertEqual(main(['trends', '--config', os.path.join(
            self.tmp_dir, 'missing.ini')]), EXIT_CONFIG)

    def test_trend_report(self):
        report = run_trends(self.config_path, verbose=False)
        self.assertEqual(report['n'], 3)
        self.assertEqual(len(report['checks']), 14)
        self.assertEqual(report['passed'],
                         all(check['passed'] for check in report['checks']))
        for variant in ('catt+ped', 'catt+eped'):
            self.assertTrue(os.path.isfile(os.path.join(
                self.out_dir, variant, 'catt_checkpoint.bin')))
        self.assertEqual(
            read_json(os.path.join(self.out_dir, 'trend_report.json')),
            report)
        self.assertTrue(os.path.isfile(
            os.path.join(self.out_dir, 'trend_report.txt')))
