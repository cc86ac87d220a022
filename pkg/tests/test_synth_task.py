from unittest import TestCase
import numpy.testing as npt
import numpy as np
from adabias.context_encoder import ContextPhrase
from adabias.entity_detector import make_ed_labels
from adabias.synth_task import (SynthConfig, Utterance, generate_corpus,
                                generate_utterance, build_bias_list,
                                build_bias_lists, SPLITS)


def small_config(**kwargs):
    values = dict(n_train=20, n_dev=5, n_test=10, seed=3)
    values.update(kwargs)
    return SynthConfig(**values)


class SynthConfigTestCase(TestCase):

    def test_token_layout(self):
        cfg = small_config()
        self.assertEqual(cfg.carrier_ids, [1, 2])
        self.assertEqual(cfg.rare_ids, list(range(3, 15)))
        self.assertEqual(cfg.common_ids, list(range(15, 41)))
        self.assertEqual(SynthConfig.from_dict(cfg.to_dict()).to_dict(),
                         cfg.to_dict())

    def test_invalid_configs(self):
        with self.assertRaises(ValueError):
            small_config(frame_jitter=4)
        with self.assertRaises(ValueError):
            small_config(min_filler=7)
        with self.assertRaises(ValueError):
            small_config(vocab_size=20)
        with self.assertRaises(ValueError):
            small_config(n_entities=100, n_extra_distractors=100)
        with self.assertRaises(ValueError):
            small_config(entity_rate=1.5)
        with self.assertRaises(ValueError):
            SynthConfig.from_dict({'n_speakers': 3})


class CorpusTestCase(TestCase):

    def setUp(self):
        self.cfg = small_config()
        self.corpus = generate_corpus(self.cfg)

    def tearDown(self):
        self.corpus = None

    def test_split_sizes(self):
        train, dev, personalized, common = self.corpus
        self.assertEqual([len(train), len(dev), len(personalized),
                          len(common)], [20, 5, 10, 10])
        self.assertEqual(len(self.corpus.phrase_pool), 80)
        self.assertEqual(personalized[3].uid, 'personalized-00003')
        with self.assertRaises(ValueError):
            self.corpus.split('test')

    def test_deterministic(self):
        again = generate_corpus(small_config())
        for split in SPLITS:
            for one, two in zip(self.corpus.split(split), again.split(split)):
                self.assertEqual(one.tokens, two.tokens)
                npt.assert_array_equal(one.frames, two.frames)
        self.assertEqual(self.corpus.entities, again.entities)

    def test_utterance_is_pure(self):
        utt = generate_utterance(self.cfg, self.corpus.templates,
                                 self.corpus.entities, 'dev', 2)
        self.assertEqual(utt.tokens, self.corpus.dev[2].tokens)
        npt.assert_array_equal(utt.frames, self.corpus.dev[2].frames)

    def test_entity_labels(self):
        entities = self.corpus.entities
        for utt in self.corpus.common:
            self.assertEqual(make_ed_labels(utt.tokens, entities).sum(), 0)
            self.assertEqual(utt.entities, [])
        for utt in self.corpus.personalized:
            self.assertIn(len(utt.entities), (1, 2))
            labels = make_ed_labels(utt.tokens, utt.entities)
            self.assertEqual(labels.sum(),
                             sum(len(phrase) for phrase in utt.entities))
            # Entities follow a carrier token.
            first = labels.tolist().index(1)
            self.assertIn(utt.tokens[first - 1], self.cfg.carrier_ids)

    def test_frames_follow_templates(self):
        cfg = small_config(noise_std=0.)
        corpus = generate_corpus(cfg)
        templates = corpus.templates.astype(np.float32)
        for utt in corpus.personalized + corpus.train[:5]:
            frames = utt.frames
            change = np.any(frames[1:] != frames[:-1], axis=1)
            starts = np.concatenate([[0], np.nonzero(change)[0] + 1])
            npt.assert_array_equal(frames[starts], templates[utt.tokens])
            durations = np.diff(np.concatenate([starts, [len(frames)]]))
            self.assertTrue(np.all(durations >= 3))
            self.assertTrue(np.all(durations <= 5))

    def test_rare_tokens_only_in_entities(self):
        rare = set(self.cfg.rare_ids)
        for utt in self.corpus.train:
            labels = make_ed_labels(utt.tokens, utt.entities)
            for token, label in zip(utt.tokens, labels):
                self.assertEqual(token in rare, bool(label))


class BiasListTestCase(TestCase):

    def setUp(self):
        self.corpus = generate_corpus(small_config())
        self.pool = self.corpus.phrase_pool

    def tearDown(self):
        self.corpus = None

    def test_personalized_lists(self):
        for utt in self.corpus.personalized:
            listed = build_bias_list(utt, 'personalized', 20, 7, self.pool)
            self.assertEqual(len(listed), 20)
            self.assertEqual(len(set(listed)), 20)
            for phrase in utt.entities:
                self.assertIn(ContextPhrase(phrase), listed)
            self.assertEqual(
                listed, build_bias_list(utt, 'personalized', 20, 7,
                                        self.pool))

    def test_common_lists(self):
        for utt in self.corpus.common:
            listed = build_bias_list(utt, 'common', 50, 7, self.pool)
            self.assertEqual(len(listed), 50)
            self.assertEqual(make_ed_labels(utt.tokens, listed).sum(), 0)

    def test_distractors_never_occur(self):
        for utt in self.corpus.personalized:
            listed = build_bias_list(utt, 'personalized', 10, 1, self.pool)
            distractors = [phrase for phrase in listed
                           if tuple(phrase) not in utt.entities]
            self.assertEqual(make_ed_labels(utt.tokens, distractors).sum(),
                             0)

    def test_size_limits(self):
        utt = self.corpus.personalized[0]
        self.assertEqual(build_bias_list(utt, 'personalized', 0, 1,
                                         self.pool), [])
        with self.assertRaises(ValueError):
            build_bias_list(utt, 'common', 100, 1, self.pool)
        with self.assertRaises(ValueError):
            build_bias_list(utt, 'popular', 5, 1, self.pool)
        with self.assertRaises(ValueError):
            build_bias_list(utt, 'common', -1, 1, self.pool)

    def test_short_personalized_list(self):
        first, second = self.corpus.entities[:2]
        two_entities = Utterance(
            'personalized-00001',
            [1] + list(first.tokens) + [2] + list(second.tokens),
            [first.tokens, second.tokens], np.zeros((4, 16)))
        drawn = set()
        for seed in range(20):
            listed = build_bias_list(two_entities, 'personalized', 1, seed,
                                     self.pool)
            self.assertEqual(len(listed), 1)
            self.assertIn(listed[0], (first, second))
            drawn.add(listed[0])
        self.assertEqual(drawn, set([first, second]))
        self.assertEqual(
            build_bias_list(two_entities, 'personalized', 1, 3, self.pool),
            build_bias_list(two_entities, 'personalized', 1, 3, self.pool))
        both = build_bias_list(two_entities, 'personalized', 2, 0, self.pool)
        self.assertEqual(set(both), set([first, second]))

    def test_one_list_per_utterance(self):
        lists = build_bias_lists(self.corpus.common, 'common', 5, 2,
                                 self.pool)
        self.assertEqual(len(lists), len(self.corpus.common))
        self.assertTrue(all(len(listed) == 5 for listed in lists))
