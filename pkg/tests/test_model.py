# Copyright 2016 Matthias Gazzari
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import json
import math
import os
import tempfile
import unittest

import numpy as np

from acoref import autograd as ag
from acoref.corpus import Document, EmbeddingTable
from acoref.env import Action, EnvState, actionMask, linksToClusters
from acoref.exceptions import ContractViolation, DimensionError, FormatError
from acoref.model import CorefModel, PolicyNet, ValueNet, runEpisode, \
	selectAction
from .util import smallConfig, synthCorpus

def flatPolicy(stateDim=5, bias=(0.0, 0.0, 0.0)):
	policy = PolicyNet(stateDim, 4, np.random.default_rng(0))
	policy.head.weight.data[...] = 0.0
	policy.head.bias.data[...] = bias
	return policy

class test_select_action(unittest.TestCase):
	
	def setUp(self):
		self.state = ag.Tensor(np.random.default_rng(1).normal(size=5))
	
	def test_forced_choice(self):
		policy = PolicyNet(5, 4, np.random.default_rng(2))
		for mode in ('greedy', 'sample'):
			choice = selectAction(policy, self.state, [False, False, True], mode,
				np.random.default_rng(0))
			self.assertEqual(choice.action, Action.NO_ANTECEDENT_ADVANCE)
			self.assertEqual(choice.logProb.item(), 0.0)
			self.assertAlmostEqual(choice.entropy.item(), 0.0, delta=1e-12)
	
	def test_sampling_frequency(self):
		policy = flatPolicy()
		rng = np.random.default_rng(9)
		recurrent = policy.initialState()
		links = 0
		for _ in range(10000):
			choice = selectAction(policy, self.state, [True, True, False],
				'sample', rng, recurrent)
			self.assertNotEqual(choice.action, Action.NO_ANTECEDENT_ADVANCE)
			links += choice.action == Action.LINK_AND_ADVANCE
		self.assertLess(abs(links / 10000 - 0.5), 0.02)
	
	def test_uniform_log_probs(self):
		choice = selectAction(flatPolicy(), self.state, [True, True, False])
		self.assertAlmostEqual(choice.logProb.item(), math.log(0.5), delta=1e-12)
		self.assertAlmostEqual(choice.entropy.item(), math.log(2), delta=1e-12)
	
	def test_greedy_tie_break(self):
		policy = flatPolicy(bias=(2.0, 2.0, -1.0))
		choice = selectAction(policy, self.state, [True, True, True])
		self.assertEqual(choice.action, Action.LINK_AND_ADVANCE)
		choice = selectAction(flatPolicy(), self.state, [False, True, True])
		self.assertEqual(choice.action, Action.ADVANCE_ANTECEDENT)
	
	def test_greedy_ignores_illegal(self):
		policy = flatPolicy(bias=(5.0, 1.0, 0.0))
		choice = selectAction(policy, self.state, [False, True, True])
		self.assertEqual(choice.action, Action.ADVANCE_ANTECEDENT)
	
	def test_empty_mask(self):
		with self.assertRaises(ContractViolation):
			selectAction(flatPolicy(), self.state, [False, False, False])
		with self.assertRaises(ContractViolation):
			selectAction(flatPolicy(), self.state, [True, False])
	
	def test_unknown_mode(self):
		with self.assertRaises(ValueError):
			selectAction(flatPolicy(), self.state, [True, True, True], 'beam')
	
	def test_value_net(self):
		critic = ValueNet(5, 4, np.random.default_rng(3))
		value, (h, c) = critic(self.state, critic.initialState())
		self.assertEqual(value.shape, ())
		self.assertTrue(np.isfinite(value.item()))
		self.assertEqual(h.shape, (4,))
	
	def test_sequence_matches_steps(self):
		rng = np.random.default_rng(4)
		states = ag.Tensor(rng.uniform(-2, 2, size=(7, 5)))
		policy = PolicyNet(5, 4, rng)
		critic = ValueNet(5, 4, rng)
		logits, values = policy.sequence(states), critic.sequence(states)
		self.assertEqual(logits.shape, (7, len(Action)))
		self.assertEqual(values.shape, (7,))
		policyState, valueState = policy.initialState(), critic.initialState()
		for t in range(7):
			stepped, policyState = policy(states[t], policyState)
			value, valueState = critic(states[t], valueState)
			np.testing.assert_allclose(logits.data[t], stepped.data, atol=1e-12)
			self.assertAlmostEqual(values.data[t], value.item(), delta=1e-12)

class test_coref_model(unittest.TestCase):
	
	def setUp(self):
		self.docs, self.embeddings = synthCorpus(documents=2)
		self.doc = self.docs[0]
		self.model = CorefModel(smallConfig(), 8)
	
	def test_dimensions(self):
		self.assertEqual(self.model.spanDim, 3 * 8 + 4)
		self.assertEqual(self.model.stateDim, 2 * 28 + 12 + 1)
		encoding = self.model.encode(self.doc, self.embeddings)
		self.assertEqual(encoding.vectors.shape, (len(encoding.spans), 28))
		self.assertEqual(encoding.logits.shape, (len(encoding.spans),))
	
	def test_empty_document(self):
		encoding = self.model.encode(Document('empty', 'nw', []), self.embeddings)
		self.assertEqual(encoding.spans, [])
	
	def test_embedding_dimension(self):
		table = EmbeddingTable(3)
		for t in range(self.doc.tokenCount):
			table.add(self.doc.docKey, t, np.zeros(3))
		with self.assertRaises(DimensionError):
			self.model.encode(self.doc, table)
	
	def test_pair_table(self):
		encoding = self.model.encode(self.doc, self.embeddings)
		spans = encoding.spans[:5]
		vectors = encoding.vectors.data[:5]
		table = self.model.pairTable(self.doc, spans, vectors)
		scorer = self.model.scorer
		for i, j in table.pairs:
			features = self.model.pairFeatures(self.doc, spans, [i], [j])
			mj = scorer.sentinel.data if j == 0 else vectors[j - 1]
			expected = scorer.score(ag.Tensor(vectors[i - 1]), ag.Tensor(mj),
				features[0]).item()
			self.assertAlmostEqual(table.score(i, j), expected, delta=1e-12)
			state = self.model.stateVector(table, vectors, i, j)
			self.assertEqual(state.shape, (self.model.stateDim,))
			self.assertEqual(state[-1], table.score(i, j))
	
	def test_state_without_score(self):
		model = CorefModel(smallConfig(score_feature=False), 8)
		self.assertEqual(model.stateDim, 2 * 28 + 12)
		encoding = model.encode(self.doc, self.embeddings)
		vectors = encoding.vectors.data[:4]
		table = model.pairTable(self.doc, encoding.spans[:4], vectors)
		state = model.stateVector(table, vectors, 3, 1)
		self.assertEqual(state.shape, (model.stateDim,))
		np.testing.assert_array_equal(state[-12:], table.features[table.row(3,
			1)])
		record, transitions = runEpisode(model, table, vectors, 'sample',
			np.random.default_rng(0), learn=True)
		self.assertEqual(len(transitions), len(record.steps))
	
	def test_speaker_features(self):
		doc = Document('k', 'bc', [['a', 'b', 'c']], ['x', 'y', 'x'])
		spans = self.model.encode(doc, _zeroEmbeddings(doc)).spans
		single = [s for s in spans if s.width == 1]
		features = self.model.pairFeatures(doc, single, [3, 3, 2], [1, 0, 1])
		table = self.model.features.speaker.table.data
		np.testing.assert_array_equal(features.data[0, 4:8], table[1])
		np.testing.assert_array_equal(features.data[1, 4:8], table[2])
		np.testing.assert_array_equal(features.data[2, 4:8], table[0])
		genre = self.model.features.genre.table.data[0]
		np.testing.assert_array_equal(features.data[:, 8:], [genre] * 3)
	
	def test_save_and_load(self):
		self.model.history.append({'epoch': 1, 'loss': 0.5})
		self.model.embedding = {'hash_dim': 8, 'hash_seed': 0}
		with tempfile.TemporaryDirectory() as directory:
			path = os.path.join(directory, 'model.ckpt')
			self.model.save(path)
			self.assertTrue(os.path.exists(path + '.json'))
			restored = CorefModel.load(path)
		self.assertEqual(restored.config, self.model.config)
		self.assertEqual(restored.history, self.model.history)
		self.assertEqual(restored.embedding, self.model.embedding)
		original = dict(self.model.namedParameters())
		for name, param in restored.namedParameters():
			self.assertEqual(param.data.tobytes(), original[name].data.tobytes())
	
	def test_bad_sidecar(self):
		with tempfile.TemporaryDirectory() as directory:
			path = os.path.join(directory, 'model.ckpt')
			self.model.save(path)
			with open(path + '.json', 'w') as f:
				json.dump({'config': {'bogus': 1}, 'token_dim': 8}, f)
			with self.assertRaises(FormatError):
				CorefModel.load(path)
	
	def test_episode(self):
		encoding = self.model.encode(self.doc, self.embeddings)
		vectors = encoding.vectors.data[:6]
		table = self.model.pairTable(self.doc, encoding.spans[:6], vectors)
		record, transitions = runEpisode(self.model, table, vectors, 'sample',
			np.random.default_rng(0), learn=True)
		self.assertTrue(record.terminal)
		self.assertTrue(record.isChained())
		self.assertEqual(record.steps[0].state, EnvState())
		self.assertTrue(record.steps[-1].nextState.isTerminal(6))
		self.assertEqual(len(transitions), len(record.steps))
		for current, following in zip(transitions, transitions[1:]):
			self.assertIs(current.nextValue, following.value)
			self.assertFalse(current.terminal)
		self.assertTrue(transitions[-1].terminal)
		self.assertIsNone(transitions[-1].nextValue)
		for t, step in zip(transitions, record.steps):
			self.assertEqual(t.action, step.action)
			self.assertEqual(t.reward, step.reward)
			self.assertEqual(t.sentinel, step.state.j == 0)
			self.assertLessEqual(t.logProb.item(), 0.0)
			self.assertGreaterEqual(t.entropy.item(), -1e-12)
			self.assertTrue(t.logProb.requiresGrad)
		for step in record.steps:
			self.assertTrue(actionMask(step.state, 6, table.maxAntecedents)[
				step.action])
		for cluster in linksToClusters(record.links):
			self.assertTrue(all(1 <= m <= 6 for m in cluster))
	
	def test_greedy_episode_is_deterministic(self):
		encoding = self.model.encode(self.doc, self.embeddings)
		vectors = encoding.vectors.data[:6]
		table = self.model.pairTable(self.doc, encoding.spans[:6], vectors)
		with ag.noGrad():
			first, _ = runEpisode(self.model, table, vectors)
			second, _ = runEpisode(self.model, table, vectors)
		self.assertEqual([(s.state, s.action, s.reward) for s in first.steps],
			[(s.state, s.action, s.reward) for s in second.steps])

def _zeroEmbeddings(doc, dimension=8):
	table = EmbeddingTable(dimension)
	for t in range(doc.tokenCount):
		table.add(doc.docKey, t, np.zeros(dimension))
	return table
