from unittest import TestCase
import numpy.testing as npt
import numpy as np
from adabias.numerics import ParamStore, Tensor, softmax
from adabias.context_encoder import ContextEncoder, empty_context
from adabias.transducer import (ModelConfig, AudioEncoder, Predictor, Joint,
                                BiasingLayer, TransducerCore, as_frames,
                                encode_audio, bias_embed, predictor_step,
                                joint, SOS)
from tests import numpy_reference as ref


def tiny_config(**kwargs):
    values = dict(vocab_size=6, feature_dim=3, model_dim=8, num_heads=2,
                  enc_layers=1, ff_dim=8, context_hidden=4, joint_dim=8)
    values.update(kwargs)
    return ModelConfig(**values)


class ModelConfigTestCase(TestCase):

    def test_round_trip_dict(self):
        cfg = tiny_config(ed_activation='sigmoid')
        again = ModelConfig.from_dict(cfg.to_dict())
        self.assertEqual(again.to_dict(), cfg.to_dict())
        self.assertEqual(cfg.mha.head_dim, 4)

    def test_invalid_values(self):
        with self.assertRaises(ValueError):
            tiny_config(model_dim=0)
        with self.assertRaises(ValueError):
            tiny_config(model_dim=9)
        with self.assertRaises(ValueError):
            tiny_config(ed_activation='relu')


class EncoderTestCase(TestCase):

    def setUp(self):
        self.cfg = tiny_config(enc_layers=2)
        self.params = ParamStore(seed=2)
        self.frames = np.random.default_rng(0).normal(
            size=(7, 3)).astype(np.float32)

    def tearDown(self):
        self.params = None

    def test_prefix_causality(self):
        encoder = AudioEncoder(self.params, self.cfg)
        full = encoder(self.frames).data
        for k in (1, 3, 6):
            npt.assert_array_equal(encoder(self.frames[:k]).data, full[:k])

    def test_streaming_steps(self):
        encoder = AudioEncoder(self.params, self.cfg)
        state = encoder.init_state()
        rows = [encoder.step(Tensor(self.frames[t:t + 1]), state).data
                for t in range(self.frames.shape[0])]
        npt.assert_array_equal(np.concatenate(rows), encoder(self.frames).data)
        self.assertEqual(state.num_frames, 7)

    def test_functional_form(self):
        npt.assert_array_equal(
            encode_audio(self.frames, self.params, self.cfg).data,
            AudioEncoder(self.params, self.cfg)(self.frames).data)

    def test_bad_frames(self):
        encoder = AudioEncoder(self.params, self.cfg)
        with self.assertRaises(ValueError):
            encoder(np.zeros((4, 2)))
        with self.assertRaises(ValueError):
            as_frames(np.zeros((0, 3)))
        with self.assertRaises(ValueError):
            as_frames(np.zeros(3))
        bad = np.zeros((2, 3))
        bad[1, 1] = np.nan
        with self.assertRaises(ValueError):
            as_frames(bad)


class PredictorTestCase(TestCase):

    def setUp(self):
        self.cfg = tiny_config(pred_layers=2)
        self.params = ParamStore(seed=3)

    def tearDown(self):
        self.params = None

    def test_teacher_forcing_matches_steps(self):
        predictor = Predictor(self.params, self.cfg)
        tokens = [2, 5, 5, 1]
        forced = predictor(tokens).data
        self.assertEqual(forced.shape, (5, 8))
        state = predictor.init_state()
        for u, token in enumerate([SOS] + tokens):
            row, state = predictor.step(token, state)
            npt.assert_array_equal(row.data[0], forced[u])
        self.assertEqual(state.last_token, 1)

    def test_functional_step(self):
        row, state = predictor_step(SOS, None, self.params, self.cfg)
        npt.assert_array_equal(row.data,
                               Predictor(self.params, self.cfg)([]).data)
        self.assertEqual(len(state.layers), 2)

    def test_blank_and_range(self):
        predictor = Predictor(self.params, self.cfg)
        with self.assertRaises(ValueError):
            predictor([3, 0])
        with self.assertRaises(ValueError):
            predictor([7])


class JointTestCase(TestCase):

    def setUp(self):
        self.cfg = tiny_config()
        self.params = ParamStore(seed=4, dtype=np.float64)
        rng = np.random.default_rng(1)
        self.h_enc = Tensor(rng.normal(size=(3, 8)))
        self.h_pred = Tensor(rng.normal(size=(2, 8)))

    def tearDown(self):
        self.params = None

    def test_lattice_matches_steps(self):
        network = Joint(self.params, self.cfg)
        lattice = network(self.h_enc, self.h_pred).data
        self.assertEqual(lattice.shape, (3, 2, 7))
        for t in range(3):
            for u in range(2):
                npt.assert_allclose(
                    lattice[t, u],
                    joint(self.h_enc[t:t + 1], self.h_pred[u:u + 1],
                          self.params, self.cfg).data[0],
                    rtol=1e-12, atol=1e-12)

    def test_additive_pre_activation(self):
        network = Joint(self.params, self.cfg)
        hidden = network.pre_activation(self.h_enc, self.h_pred).data
        enc = network.enc_proj(self.h_enc).data
        pred = network.pred_proj(self.h_pred).data
        npt.assert_allclose(hidden[2, 1], enc[2] + pred[1], atol=1e-12)

    def test_zero_output_weights(self):
        network = Joint(self.params, self.cfg)
        self.params.set('joint.out.weight', np.zeros((8, 7)))
        self.params.set('joint.out.bias', np.arange(7.))
        lattice = network(self.h_enc, self.h_pred).data
        npt.assert_array_equal(lattice, np.broadcast_to(np.arange(7.),
                                                        (3, 2, 7)))


class BiasingLayerTestCase(TestCase):

    def setUp(self):
        self.cfg = tiny_config()
        self.params = ParamStore(seed=5)
        self.context_encoder = ContextEncoder(self.params, 6, 8, 4)
        self.queries = Tensor(np.random.default_rng(2).normal(
            size=(3, 8)).astype(np.float32))

    def tearDown(self):
        self.params = None

    def test_empty_context_weights(self):
        layer = BiasingLayer(self.params, 'enc_bias', self.cfg)
        null = empty_context(self.context_encoder)
        biased, combined, weights = layer(self.queries, null,
                                          return_weights=True)
        npt.assert_array_equal(weights.data, np.ones((2, 3, 1)))
        # With one key every query attends to the same value row.
        npt.assert_allclose(biased.data[0], biased.data[2], rtol=1e-6)
        self.assertEqual(combined.shape, (3, 8))

    def test_functional_form(self):
        context = self.context_encoder([[1, 2], [3]])
        biased, combined = bias_embed(self.queries, context, 'predictor',
                                      self.params, self.cfg)
        ref_biased, ref_combined = BiasingLayer(
            self.params, 'pred_bias', self.cfg)(self.queries, context)
        npt.assert_array_equal(biased.data, ref_biased.data)
        npt.assert_array_equal(combined.data, ref_combined.data)
        with self.assertRaises(ValueError):
            bias_embed(self.queries, context, 'joint', self.params, self.cfg)

    def test_core_layers(self):
        core = TransducerCore(self.params, self.cfg)
        self.assertTrue(core.biased)
        self.assertIs(core.bias_layer('encoder'), core.enc_bias)
        plain = TransducerCore(ParamStore(seed=5), self.cfg, biased=False)
        with self.assertRaises(ValueError):
            plain.bias_layer('encoder')
        with self.assertRaises(ValueError):
            core.bias_layer('audio')


class ReferenceValueTestCase(TestCase):

    def setUp(self):
        self.cfg = tiny_config(enc_layers=2)
        self.params = ParamStore(seed=9, dtype=np.float64)
        self.rng = np.random.default_rng(4)

    def tearDown(self):
        self.params = None
        self.rng = None

    def randomize(self, prefix):
        r"""Random biases and gains for the parameters under ``prefix``."""
        for name in self.params.names():
            if name.startswith(prefix) and name.endswith(('.bias', '.gain')):
                self.params.set(name, self.rng.normal(
                    size=self.params[name].shape))

    def test_encode_audio(self):
        frames = self.rng.normal(size=(4, 3))
        AudioEncoder(self.params, self.cfg)
        self.randomize('encoder.')
        npt.assert_allclose(
            encode_audio(frames, self.params, self.cfg).data,
            ref.audio_encoder(self.params, self.cfg, frames),
            rtol=1e-9, atol=1e-11)

    def test_bias_embed(self):
        queries = self.rng.normal(size=(3, 8))
        context = self.rng.normal(size=(4, 8))
        BiasingLayer(self.params, 'pred_bias', self.cfg)
        self.randomize('pred_bias.')
        biased, combined = bias_embed(Tensor(queries), Tensor(context),
                                      'predictor', self.params, self.cfg)
        ref_biased, ref_combined, _ = ref.biasing(
            self.params, 'pred_bias', self.cfg, queries, context)
        npt.assert_allclose(biased.data, ref_biased, rtol=1e-10,
                            atol=1e-12)
        npt.assert_allclose(combined.data, ref_combined, rtol=1e-10,
                            atol=1e-12)

    def test_identical_context_rows(self):
        layer = BiasingLayer(self.params, 'enc_bias', self.cfg)
        row = self.rng.normal(size=(1, 8))
        _, _, weights = layer(Tensor(self.rng.normal(size=(3, 8))),
                              Tensor(np.concatenate([row, row])),
                              return_weights=True)
        npt.assert_allclose(weights.data, 0.5, rtol=1e-12)

    def test_predictor_step(self):
        Predictor(self.params, self.cfg)
        self.randomize('predictor.')
        table = ref.value(self.params, 'predictor.embed.table')
        zeros = np.zeros((1, 8))
        row, state = predictor_step(SOS, None, self.params, self.cfg)
        hidden, cell = ref.lstm_cell(self.params, 'predictor.lstm.0',
                                     table[0:1], zeros, zeros)
        npt.assert_allclose(row.data, hidden, rtol=1e-10, atol=1e-12)
        row, _ = predictor_step(4, state, self.params, self.cfg)
        hidden, _ = ref.lstm_cell(self.params, 'predictor.lstm.0',
                                  table[4:5], hidden, cell)
        npt.assert_allclose(row.data, hidden, rtol=1e-10, atol=1e-12)

    def test_joint(self):
        Joint(self.params, self.cfg)
        self.randomize('joint.')
        h_enc, h_pred = self.rng.normal(size=(2, 1, 8))
        npt.assert_allclose(
            joint(Tensor(h_enc), Tensor(h_pred), self.params, self.cfg).data,
            ref.joint_step(self.params, h_enc, h_pred), rtol=1e-10,
            atol=1e-12)

    def test_zero_joint_is_uniform(self):
        Joint(self.params, self.cfg)
        for name in ('joint.enc.weight', 'joint.pred.weight',
                     'joint.out.weight', 'joint.out.bias'):
            self.params.set(name, np.zeros(self.params[name].shape))
        h_enc, h_pred = self.rng.normal(size=(2, 1, 8))
        logits = joint(Tensor(h_enc), Tensor(h_pred), self.params, self.cfg)
        npt.assert_array_equal(logits.data, np.zeros((1, 7)))
        npt.assert_allclose(softmax(logits).data, 1. / 7, rtol=1e-12)
