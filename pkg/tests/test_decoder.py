from unittest import TestCase
import json
import os
import shutil
import tempfile
import numpy.testing as npt
import numpy as np
from adabias.catt import CATT
from adabias.numerics import Tensor
from adabias.context_encoder import (empty_context, read_phrase_file,
                                     write_phrase_file)
from adabias.decoder import (DecodeMode, GreedyDecoder, NullBiasCache,
                             null_bias_cache, decode_greedy)

BIAS_LIST = [[1, 2], [3, 4, 5], [6]]


def tiny_model(variant='catt+ped', seed=1):
    model = CATT(vocab_size=6, feature_dim=3, variant=variant, seed=seed,
                 verbose=False, model_dim=8, num_heads=2, enc_layers=1,
                 ff_dim=8, context_hidden=4, joint_dim=8)
    # Sharper joint outputs so that random weights emit some tokens.
    weight = model.params['joint.out.weight'].data
    model.params.set('joint.out.weight', 4. * weight)
    return model


def force_detector(model, positive):
    name = model.detector_kind
    dim = model.config.model_dim
    model.params.set(name + '.classifier.weight', np.zeros((dim, 2)))
    model.params.set(name + '.classifier.bias',
                     [0., 1.] if positive else [1., 0.])


def rig_joint(model, token):
    r"""Make the joint predict ``token`` whatever its inputs."""
    size = model.config.vocab_size + 1
    bias = np.zeros(size)
    bias[token] = 5.
    model.params.set('joint.out.weight',
                     np.zeros((model.config.joint_dim, size)))
    model.params.set('joint.out.bias', bias)


class DecodeModeTestCase(TestCase):

    def test_parse_names(self):
        self.assertEqual(DecodeMode.parse('ped'), DecodeMode.adaptive_ped())
        self.assertEqual(DecodeMode.parse('AlwaysOn').kind, 'AlwaysOn')
        self.assertEqual(DecodeMode.parse('adaptive-eped').kind,
                         'AdaptiveEPED')
        self.assertEqual(DecodeMode.parse('random50', seed=4),
                         DecodeMode.random50(4))
        self.assertIsNone(DecodeMode.parse('off').detector_kind)
        self.assertFalse(DecodeMode.always_off().uses_bias)

    def test_invalid_modes(self):
        with self.assertRaises(ValueError):
            DecodeMode.parse('forced')
        with self.assertRaises(ValueError):
            DecodeMode.parse('sometimes')
        with self.assertRaises(ValueError):
            DecodeMode('Random50')
        with self.assertRaises(ValueError):
            DecodeMode.forced([])


class GreedyDecoderTestCase(TestCase):

    def setUp(self):
        self.frames = np.random.default_rng(5).normal(
            size=(8, 3)).astype(np.float32)

    def tearDown(self):
        self.frames = None

    def decode(self, model, mode, bias_list=BIAS_LIST, **kwargs):
        return decode_greedy(model, self.frames, bias_list, mode, **kwargs)

    def test_off_equals_negative_detector(self):
        for variant, mode in (('catt+ped', DecodeMode.adaptive_ped()),
                              ('catt+eped', DecodeMode.adaptive_eped())):
            model = tiny_model(variant)
            force_detector(model, positive=False)
            adaptive = self.decode(model, mode, initial_gate='detect')
            off = self.decode(model, DecodeMode.always_off())
            self.assertEqual(adaptive.tokens, off.tokens)
            self.assertEqual(adaptive.frames, off.frames)
            self.assertFalse(any(adaptive.gate_trace))
            # The encoder-predictor detector keys on biased frames.
            self.assertEqual(adaptive.counters['enc_bias_full'],
                             0 if variant == 'catt+ped' else 8)
            self.assertEqual(off.counters, {'enc_bias_full': 0,
                                            'pred_bias_full': 0,
                                            'ed_calls': 0})

    def test_on_equals_positive_detector(self):
        for variant, mode in (('catt+ped', DecodeMode.adaptive_ped()),
                              ('catt+eped', DecodeMode.adaptive_eped())):
            model = tiny_model(variant)
            force_detector(model, positive=True)
            adaptive = self.decode(model, mode, initial_gate='detect')
            on = self.decode(model, DecodeMode.always_on())
            self.assertEqual(adaptive.tokens, on.tokens)
            self.assertTrue(all(adaptive.gate_trace))
            self.assertEqual(on.counters['enc_bias_full'], 8)
            self.assertEqual(adaptive.counters['enc_bias_full'], 8)
            self.assertEqual(on.counters['ed_calls'], 0)
            self.assertEqual(adaptive.counters['ed_calls'],
                             len(adaptive.tokens) + 1)

    def test_gate_trace_length(self):
        model = tiny_model('catt+eped')
        for mode in (DecodeMode.always_off(), DecodeMode.always_on(),
                     DecodeMode.adaptive_eped(), DecodeMode.random50(3)):
            hyp = self.decode(model, mode)
            self.assertEqual(len(hyp.gate_trace), len(hyp.tokens) + 1)
            self.assertEqual(len(hyp.gate_labels), len(hyp.tokens))
            self.assertEqual(len(hyp.frames), len(hyp.tokens))
            self.assertTrue(all(np.diff(hyp.frames) >= 0))

    def test_streaming_prefix(self):
        for variant, mode in (('catt+ped', DecodeMode.adaptive_ped()),
                              ('catt+eped', DecodeMode.adaptive_eped()),
                              ('catt+ped', DecodeMode.random50(9)),
                              ('catt', DecodeMode.always_on())):
            model = tiny_model(variant)
            full = self.decode(model, mode)
            for k in (1, 4, 7):
                prefix = decode_greedy(model, self.frames[:k], BIAS_LIST,
                                       mode)
                expected = [tok for tok, frame in zip(full.tokens,
                                                      full.frames)
                            if frame < k]
                self.assertEqual(prefix.tokens, expected)
                self.assertEqual(prefix.gate_trace,
                                 full.gate_trace[:len(expected) + 1])

    def test_random_gates_replay(self):
        model = tiny_model('catt')
        first = self.decode(model, DecodeMode.random50(11))
        again = self.decode(model, DecodeMode.random50(11))
        self.assertEqual(first.gate_trace, again.gate_trace)
        self.assertEqual(first.tokens, again.tokens)
        replay = self.decode(model, DecodeMode.forced(first.gate_trace))
        self.assertEqual(replay.tokens, first.tokens)
        self.assertEqual(replay.gate_trace, first.gate_trace)
        self.assertEqual(replay.counters, first.counters)

    def test_adaptive_gates_replay(self):
        for seed in (1, 2, 3):
            for variant, mode in (('catt+ped', DecodeMode.adaptive_ped()),
                                  ('catt+eped', DecodeMode.adaptive_eped())):
                model = tiny_model(variant, seed=seed)
                adaptive = self.decode(model, mode)
                replay = self.decode(model,
                                     DecodeMode.forced(adaptive.gate_trace))
                self.assertEqual(replay.tokens, adaptive.tokens)
                self.assertEqual(replay.frames, adaptive.frames)
                self.assertEqual(replay.gate_trace, adaptive.gate_trace)

    def test_forced_on_equals_always_on(self):
        model = tiny_model('catt')
        forced = self.decode(model, DecodeMode.forced([True]))
        on = self.decode(model, DecodeMode.always_on())
        self.assertEqual(forced.tokens, on.tokens)
        self.assertEqual(forced.counters, on.counters)

    def test_initial_gate_and_latch(self):
        model = tiny_model('catt+ped')
        force_detector(model, positive=False)
        hyp = self.decode(model, DecodeMode.adaptive_ped(),
                          initial_gate='on')
        self.assertTrue(hyp.gate_trace[0])
        self.assertFalse(any(hyp.gate_trace[1:]))
        latched = self.decode(model, DecodeMode.adaptive_ped(),
                              initial_gate='on', latch=True)
        self.assertTrue(all(latched.gate_trace))
        with self.assertRaises(ValueError):
            self.decode(model, DecodeMode.adaptive_ped(),
                        initial_gate='maybe')

    def test_default_initial_gate_is_on(self):
        model = tiny_model('catt+ped')
        force_detector(model, positive=False)
        hyp = self.decode(model, DecodeMode.adaptive_ped())
        self.assertTrue(hyp.gate_trace[0])
        self.assertFalse(any(hyp.gate_trace[1:]))
        self.assertEqual(hyp.counters['ed_calls'], len(hyp.tokens))
        # Frames up to the first emission run the full encoder bias.
        first = hyp.frames[0] + 1 if hyp.tokens else 8
        self.assertEqual(hyp.counters['enc_bias_full'], first)
        explicit = self.decode(model, DecodeMode.adaptive_ped(),
                               initial_gate='on')
        self.assertEqual(hyp.as_dict(), explicit.as_dict())

    def test_random_latch(self):
        model = tiny_model('catt')
        rig_joint(model, 2)
        hyp = self.decode(model, DecodeMode.random50(2), latch=True)
        trace = hyp.gate_trace
        if True in trace:
            self.assertTrue(all(trace[trace.index(True):]))

    def test_max_symbols_guard(self):
        model = tiny_model('catt')
        rig_joint(model, 1)
        hyp = self.decode(model, DecodeMode.always_off())
        self.assertEqual(hyp.tokens, [1] * 40)
        self.assertEqual(hyp.frames, list(np.repeat(np.arange(8), 5)))
        hyp = self.decode(model, DecodeMode.always_on(),
                          max_symbols_per_frame=2)
        self.assertEqual(len(hyp.tokens), 16)
        with self.assertRaises(ValueError):
            self.decode(model, DecodeMode.always_on(),
                        max_symbols_per_frame=0)

    def test_blank_only_joint(self):
        model = tiny_model('catt+ped')
        rig_joint(model, 0)
        hyp = self.decode(model, DecodeMode.adaptive_ped())
        self.assertEqual(hyp.tokens, [])
        self.assertEqual(len(hyp.gate_trace), 1)

    def test_empty_list_decodes_unbiased(self):
        model = tiny_model('catt+ped')
        with self.assertLogs('adabias.decoder', level='WARNING'):
            hyp = self.decode(model, DecodeMode.always_on(), bias_list=[])
        off = self.decode(model, DecodeMode.always_off())
        self.assertEqual(hyp.tokens, off.tokens)
        self.assertEqual(hyp.counters['enc_bias_full'], 0)

    def test_capability_errors(self):
        with self.assertRaises(ValueError):
            self.decode(tiny_model('ct'), DecodeMode.always_on())
        with self.assertRaises(ValueError):
            self.decode(tiny_model('catt'), DecodeMode.adaptive_ped())
        with self.assertRaises(ValueError):
            self.decode(tiny_model('catt+ped'), DecodeMode.adaptive_eped())
        plain = self.decode(tiny_model('ct'), DecodeMode.always_off())
        self.assertEqual(len(plain.gate_trace), len(plain.tokens) + 1)

    def test_shared_caches(self):
        model = tiny_model('catt+ped')
        cache = null_bias_cache(model)
        phrase_cache = {}
        shared = self.decode(model, DecodeMode.adaptive_ped(),
                             null_cache=cache, phrase_cache=phrase_cache)
        fresh = self.decode(model, DecodeMode.adaptive_ped())
        self.assertEqual(shared.tokens, fresh.tokens)
        self.assertEqual(len(phrase_cache), len(BIAS_LIST))
        self.assertIsNone(null_bias_cache(tiny_model('ct')))

    def test_decoder_is_reusable(self):
        model = tiny_model('catt+eped')
        decoder = GreedyDecoder(model, BIAS_LIST, DecodeMode.adaptive_eped())
        first = decoder.decode(self.frames)
        second = decoder.decode(self.frames)
        self.assertEqual(first.as_dict(), second.as_dict())


class NullBiasCacheTestCase(TestCase):

    def test_matches_biasing_layer(self):
        model = tiny_model('catt')
        cache = NullBiasCache(model)
        empty = empty_context(model.context_encoder)
        self.assertEqual(cache.num_rows, 1)
        rng = np.random.default_rng(0)
        for side, layer in (('encoder', model.enc_bias),
                            ('predictor', model.pred_bias)):
            for _ in range(3):
                query = Tensor(rng.normal(size=(1, 8)).astype(np.float32))
                biased, combined = cache.bias(query, side)
                ref_biased, ref_combined = layer(query, empty)
                npt.assert_array_equal(biased.data, ref_biased.data)
                npt.assert_array_equal(combined.data, ref_combined.data)


class TraceTestCase(TestCase):

    def setUp(self):
        self.tmp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp_dir)

    def test_write_trace(self):
        model = tiny_model('catt+ped')
        frames = np.random.default_rng(1).normal(size=(5, 3))
        hyp = decode_greedy(model, frames, BIAS_LIST,
                            DecodeMode.adaptive_ped(), trace=True)
        path = os.path.join(self.tmp_dir, 'trace.jsonl')
        hyp.write_trace(path)
        with open(path) as handle:
            records = [json.loads(line) for line in handle]
        self.assertEqual(len(records), 5 + len(hyp.tokens))
        calls = [record['counters']['ed_calls'] for record in records]
        self.assertTrue(all(np.diff(calls) >= 0))
        untraced = decode_greedy(model, frames, BIAS_LIST,
                                 DecodeMode.adaptive_ped())
        with self.assertRaises(RuntimeError):
            untraced.write_trace(path)


class HandBuiltModelTestCase(TestCase):
    r"""Three tokens, two frames and a joint that only reads the predictor.

    The predictor output is (nearly) the one-hot of the last token fed to
    it, start symbol included, and the joint maps it to: start -> 1,
    1 -> 2, 2 -> blank, 3 -> blank.
    """

    def setUp(self):
        model = CATT(vocab_size=3, feature_dim=3, variant='ct', seed=0,
                     dtype=np.float64, verbose=False, model_dim=4,
                     num_heads=2, enc_layers=1, ff_dim=4, context_hidden=4,
                     joint_dim=4)
        params = model.params
        w_x = np.zeros((4, 16))
        w_x[:, 8:12] = 3. * np.eye(4)
        params.set('predictor.embed.table', np.eye(4))
        params.set('predictor.lstm.0.w_x', w_x)
        params.set('predictor.lstm.0.w_h', np.zeros((4, 16)))
        params.set('predictor.lstm.0.bias',
                   np.repeat([20., -20., 0., 20.], 4))
        params.set('joint.enc.weight', np.zeros((4, 4)))
        params.set('joint.enc.bias', np.zeros(4))
        params.set('joint.pred.weight', 5. * np.eye(4))
        params.set('joint.out.weight', np.array([[0., 1., 0., 0.],
                                                 [0., 0., 1., 0.],
                                                 [1., 0., 0., 0.],
                                                 [1., 0., 0., 0.]]))
        params.set('joint.out.bias', np.zeros(4))
        self.model = model
        self.frames = np.random.default_rng(2).normal(size=(2, 3))

    def tearDown(self):
        self.model = None

    def test_lattice_walk(self):
        hyp = decode_greedy(self.model, self.frames, [],
                            DecodeMode.always_off(), trace=True)
        # Frame 0 emits 1 then 2 then blank, frame 1 only emits blank.
        self.assertEqual(hyp.tokens, [1, 2])
        self.assertEqual(hyp.frames, [0, 0])
        self.assertEqual(hyp.gate_trace, [False] * 3)
        self.assertEqual([(record['frame'], record['token'])
                          for record in hyp.trace],
                         [(0, 1), (0, 2), (0, 0), (1, 0)])

    def test_emission_guard(self):
        hyp = decode_greedy(self.model, self.frames, [],
                            DecodeMode.always_off(), max_symbols_per_frame=1)
        self.assertEqual(hyp.tokens, [1, 2])
        self.assertEqual(hyp.frames, [0, 1])


class EmptyListTestCase(TestCase):

    def setUp(self):
        self.tmp_dir = tempfile.mkdtemp()
        self.frames = np.random.default_rng(4).normal(size=(6, 3))

    def tearDown(self):
        shutil.rmtree(self.tmp_dir)

    def test_empty_inputs_decode_identically(self):
        model = tiny_model('catt+ped')
        empty = os.path.join(self.tmp_dir, 'empty.txt')
        blank = os.path.join(self.tmp_dir, 'blank.txt')
        write_phrase_file(empty, [])
        with open(blank, 'w') as handle:
            handle.write('\n\n')
        off = decode_greedy(model, self.frames, BIAS_LIST,
                            DecodeMode.always_off(), trace=True)
        for bias_list in (read_phrase_file(empty), read_phrase_file(blank),
                          []):
            with self.assertLogs('adabias.decoder', level='WARNING'):
                hyp = decode_greedy(model, self.frames, bias_list,
                                    DecodeMode.adaptive_ped(), trace=True)
            self.assertEqual(hyp.trace, off.trace)
            self.assertEqual(hyp.tokens, off.tokens)
            self.assertEqual(hyp.gate_trace, off.gate_trace)
            self.assertEqual(hyp.counters, off.counters)
