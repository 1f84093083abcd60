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

'''
Module holding the networks of the resolver: the span encoder and reward
scorer shared by all parts, the actor (policy) and the critic (value), and
the episode runner driving them through the decision process.
'''

import json
import logging
from collections import namedtuple
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import autograd as ag
from .autograd import Tensor, noGrad
from .config import TrainConfig
from .corpus import genreId
from .env import Action, EnvState, EpisodeRecord, PairTable, RewardScorer, \
	StepRecord, actionMask, statePairs, step
from .exceptions import ContractViolation, DimensionError, FormatError
from .nn import LSTMCell, Linear, Module, loadCheckpoint, saveCheckpoint
from .spans import SPEAKER_DIFFERENT, SPEAKER_SAME, SPEAKER_SENTINEL, \
	AttentionHead, FeatureEmbedder, SpanEncoder, enumerateSpans

logger = logging.getLogger(__name__)

Encoding = namedtuple('Encoding', 'spans vectors logits')
ActionChoice = namedtuple('ActionChoice', 'action logProb entropy recurrent')

class PolicyNet(Module):
	'''
	The actor: an LSTM over the visited states and a linear head producing
	one logit per action kind.
	'''
	
	def __init__(self, stateDim, hidden, rng):
		self.lstm = LSTMCell(stateDim, hidden, rng)
		self.head = Linear(hidden, len(Action), rng)
	
	def initialState(self):
		return self.lstm.initialState()
	
	def __call__(self, x, recurrent):
		h, c = self.lstm(x, recurrent)
		return self.head(h), (h, c)
	
	def sequence(self, xs):
		'''The (steps, actions) logits of a whole state sequence.'''
		return self.head(self.lstm.sequence(xs))

class ValueNet(Module):
	'''The critic: an LSTM over the visited states and a scalar head.'''
	
	def __init__(self, stateDim, hidden, rng):
		self.lstm = LSTMCell(stateDim, hidden, rng)
		self.head = Linear(hidden, 1, rng)
	
	def initialState(self):
		return self.lstm.initialState()
	
	def __call__(self, x, recurrent):
		h, c = self.lstm(x, recurrent)
		return ag.reshape(self.head(h), ()), (h, c)
	
	def sequence(self, xs):
		hs = self.lstm.sequence(xs)
		return ag.reshape(self.head(hs), (hs.shape[0],))

@dataclass
class Transition:
	'''
	One step of a training episode with the tensors its losses need.
	Terminal transitions have no ``nextValue`` which counts as 0. Sentinel
	transitions were taken at a state whose antecedent is the sentinel.
	'''
	state: np.ndarray
	action: Action
	logProb: Tensor
	reward: float
	value: Tensor
	nextValue: Optional[Tensor] = None
	terminal: bool = False
	entropy: Optional[Tensor] = None
	sentinel: bool = False

def selectAction(policy, state, mask, mode='greedy', rng=None, recurrent=None):
	'''
	Choose an action among the legal ones.
	
	:param policy: the :class:`PolicyNet`
	:param state: the state vector tensor
	:param mask: boolean array of the legal actions
	:param mode: ``'sample'`` draws from the masked softmax using ``rng``,
		``'greedy'`` takes the most likely action, preferring the lower
		action on ties
	:param rng: the random generator used for sampling
	:param recurrent: the recurrent state of the policy, None to start
	:returns: an :class:`ActionChoice`
	'''
	mask = np.asarray(mask, dtype=bool)
	if mask.shape != (len(Action),) or not mask.any():
		raise ContractViolation('no legal action in mask {}'.format(
			mask.tolist()))
	if recurrent is None:
		recurrent = policy.initialState()
	logits, recurrent = policy(state, recurrent)
	logProbs = ag.logSoftmax(logits, mask=mask)
	probs = np.where(mask, np.exp(logProbs.data), 0.0)
	if mode == 'sample':
		action = int(rng.choice(len(Action), p=probs / probs.sum()))
	elif mode == 'greedy':
		action = int(np.argmax(np.where(mask, logits.data, -np.inf)))
	else:
		raise ValueError('unknown selection mode {!r}'.format(mode))
	entropy = ag.mul(ag.reduceSum(ag.mul(ag.softmax(logits, mask=mask),
		logProbs)), -1.0)
	return ActionChoice(Action(action), logProbs[action], entropy, recurrent)

class CorefModel(Module):
	'''
	Every parameter of the resolver along with its configuration.
	
	:param config: the :class:`acoref.config.TrainConfig`
	:param tokenDim: the dimension of the token embeddings
	:param embedding: how the token embeddings were made, e.g. the settings
		of hash embeddings, kept in the checkpoint sidecar
	'''
	
	def __init__(self, config, tokenDim, embedding=None):
		rng = np.random.default_rng(config.seed)
		self.features = FeatureEmbedder(config.max_span_width,
			config.feature_dim, rng)
		self.attention = AttentionHead(tokenDim, rng)
		self.spanDim = 3 * tokenDim + config.feature_dim
		self.scorer = RewardScorer(self.spanDim, self.features.pairDim,
			config.ffnn_hidden, config.scorer_dim, rng, config.gamma_decay,
			config.dropout)
		self.stateDim = 2 * self.spanDim + self.features.pairDim + \
			int(config.score_feature)
		self.policy = PolicyNet(self.stateDim, config.lstm_hidden, rng)
		self.critic = ValueNet(self.stateDim, config.lstm_hidden, rng)
		self.encoder = SpanEncoder(self.features, self.attention)
		self.config = config
		self.tokenDim = tokenDim
		self.embedding = dict(embedding or {})
		self.history = []
	
	def encode(self, doc, embeddings):
		'''
		Enumerate the candidate spans of a document and compute their vectors
		and mention logits.
		
		:returns: an :class:`Encoding`, empty for documents without tokens
		'''
		spans = enumerateSpans(doc, self.config.max_span_width)
		if not spans:
			return Encoding([], None, None)
		if embeddings.dimension != self.tokenDim:
			raise DimensionError('model expects token embeddings of dimension '
				'{}, got {}'.format(self.tokenDim, embeddings.dimension))
		vectors = self.encoder.encode(embeddings.matrix(doc), spans)
		return Encoding(spans, vectors, self.scorer.mentionLogits(vectors))
	
	def pairTable(self, doc, spans, vectors):
		'''
		Score every state an episode over the given mentions can visit,
		with dropout disabled and without recording gradients.
		
		:param doc: the document
		:param spans: the pruned mentions in document order
		:param vectors: their (mentions, span dim) vector array
		'''
		config = self.config
		pairs = statePairs(len(spans), config.max_antecedents)
		current, candidate = pairs[:, 0], pairs[:, 1]
		vectors = np.asarray(vectors).reshape(len(spans), self.spanDim)
		with noGrad(), self.evaluating():
			features = self.pairFeatures(doc, spans, current, candidate)
			mi = Tensor(vectors[current - 1])
			mj = Tensor(np.where((candidate == 0)[:, None],
				self.scorer.sentinel.data, vectors[candidate - 1]))
			scores = self.scorer.score(mi, mj, features).data
		return PairTable(len(spans), config.max_antecedents,
			config.gamma_decay, scores, features.data)
	
	def pairFeatures(self, doc, spans, current, candidate):
		'''
		Embed distance, speaker match and genre of mention pairs.
		
		:param doc: the document
		:param spans: the mentions in document order
		:param current: the ids of the current mentions, from 1
		:param candidate: the ids of the antecedents, 0 for the sentinel
		'''
		current = np.asarray(current, dtype=np.intp)
		candidate = np.asarray(candidate, dtype=np.intp)
		starts = [doc.speakers[span.start] for span in spans]
		speakers = np.array([SPEAKER_SENTINEL if j == 0 else
			SPEAKER_SAME if starts[i - 1] == starts[j - 1] else
			SPEAKER_DIFFERENT for i, j in zip(current, candidate)],
			dtype=np.intp)
		genres = np.full(len(current), genreId(doc.genre), dtype=np.intp)
		return self.features.pair(current - candidate, speakers, genres)
	
	def stateVector(self, table, vectors, i, j):
		'''The detached actor and critic input of state (i, j).'''
		row = table.row(i, j)
		antecedent = self.scorer.sentinel.data if j == 0 else vectors[j - 1]
		parts = [vectors[i - 1], antecedent, table.features[row]]
		if self.config.score_feature:
			parts.append([table.scores[row]])
		return np.concatenate(parts)
	
	def save(self, path):
		'''
		Write the parameters to ``path`` and the configuration, embedding
		settings and metric history to the JSON sidecar ``path + '.json'``.
		'''
		saveCheckpoint(path, self)
		sidecar = {
			'config': self.config.model_dump(),
			'token_dim': self.tokenDim,
			'embedding': self.embedding,
			'history': self.history,
		}
		with open(str(path) + '.json', 'w') as f:
			json.dump(sidecar, f, indent=2)
	
	@classmethod
	def load(cls, path):
		'''Restore a model written by :meth:`save`.'''
		try:
			with open(str(path) + '.json') as f:
				sidecar = json.load(f)
			config = TrainConfig(**sidecar['config'])
			tokenDim = int(sidecar['token_dim'])
		except (KeyError, TypeError, ValueError) as e:
			raise FormatError('invalid checkpoint sidecar {}.json: {}'.format(
				path, e))
		model = cls(config, tokenDim, sidecar.get('embedding'))
		model.history = list(sidecar.get('history', []))
		loadCheckpoint(path, model)
		logger.info('loaded checkpoint %s', Path(path))
		return model

def runEpisode(model, table, vectors, mode='greedy', rng=None, learn=False):
	'''
	Run the decision process over the mentions of a pair table until every
	mention was visited. The rollout itself records no gradients; with
	``learn`` the actor and the critic are then run once over the visited
	states to give the tensors of the transitions.
	
	:param model: the :class:`CorefModel`
	:param table: the :class:`acoref.env.PairTable` of the mentions
	:param vectors: the (mentions, span dim) vector array
	:param mode: the action selection mode, see :func:`selectAction`
	:param rng: the random generator used for sampling
	:param learn: whether to evaluate the critic and collect transitions
	:returns: the :class:`acoref.env.EpisodeRecord` and the transitions
	'''
	record = EpisodeRecord()
	spanCount = table.spanCount
	state = EnvState()
	inputs, masks = [], []
	with noGrad():
		policyState = model.policy.initialState()
		while not state.isTerminal(spanCount):
			x = model.stateVector(table, vectors, state.i, state.j)
			mask = actionMask(state, spanCount, table.maxAntecedents)
			choice = selectAction(model.policy, Tensor(x), mask, mode, rng,
				policyState)
			policyState = choice.recurrent
			nextState, value = step(state, choice.action, table)
			record.steps.append(StepRecord(state, choice.action, value,
				nextState))
			inputs.append(x)
			masks.append(mask)
			state = nextState
	record.terminal = True
	if not learn or not record.steps:
		return record, []
	return record, _transitions(model, record, np.stack(inputs),
		np.stack(masks))

def _transitions(model, record, inputs, masks):
	steps = len(record.steps)
	states = Tensor(inputs)
	logits = model.policy.sequence(states)
	logProbs = ag.logSoftmax(logits, mask=masks)
	entropies = ag.mul(ag.reduceSum(ag.mul(ag.softmax(logits, mask=masks),
		logProbs), axis=1), -1.0)
	actions = np.array([s.action for s in record.steps], dtype=np.intp)
	chosen = ag.take(ag.reshape(logProbs, (-1,)), np.arange(steps) *
		len(Action) + actions)
	values = model.critic.sequence(states)
	transitions = [Transition(inputs[t], s.action, chosen[t], s.reward,
		values[t], terminal=(t == steps - 1), entropy=entropies[t],
		sentinel=(s.state.j == 0)) for t, s in enumerate(record.steps)]
	for current, following in zip(transitions, transitions[1:]):
		current.nextValue = following.value
	return transitions
