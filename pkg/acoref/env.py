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
Module implementing the mention-pair decision process.

A state holds the current mention i and its antecedent candidate j over
the pruned mentions of a document, numbered from 1 in document order;
j = 0 denotes the sentinel. Three actions either store the pair as a link
and move on to the next mention, move on to the next candidate, or move on
to the next mention without a link.
'''

import enum
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Parameter, noGrad
from .exceptions import ContractViolation, DimensionError
from .nn import FeedForward, Module, biaffine, glorotUniform
from .spans import SpanRepr, mentionScore

logger = logging.getLogger(__name__)

class Action(enum.IntEnum):
	LINK_AND_ADVANCE = 0
	ADVANCE_ANTECEDENT = 1
	NO_ANTECEDENT_ADVANCE = 2

@dataclass(frozen=True)
class EnvState:
	'''
	:param i: the current mention, from 1
	:param j: the antecedent candidate, 0 for the sentinel
	:param links: the stored (i, j) links in the order they were made
	'''
	i: int = 1
	j: int = 0
	links: tuple = ()
	
	def isTerminal(self, spanCount):
		return self.i > spanCount

def windowStart(i, maxAntecedents):
	'''The first antecedent candidate of mention i.'''
	return max(1, i - maxAntecedents)

def legalActions(state, spanCount, maxAntecedents=250):
	'''
	Return the set of actions allowed in a state. Linking needs a real
	candidate, advancing needs a further candidate before i, and giving up
	is only allowed at the last candidate i - 1. The sentinel state of the
	first mention only allows giving up, the one of any later mention only
	allows advancing into the candidate window.
	
	:param state: the :class:`EnvState`
	:param spanCount: the number of mentions n
	:param maxAntecedents: the size of the candidate window
	'''
	i, j = state.i, state.j
	if state.isTerminal(spanCount):
		return frozenset()
	if not 0 <= j < i or (j and j < windowStart(i, maxAntecedents)):
		raise ContractViolation('invalid state (i={}, j={})'.format(i, j))
	actions = set()
	if j >= 1:
		actions.add(Action.LINK_AND_ADVANCE)
	if j + 1 <= i - 1:
		actions.add(Action.ADVANCE_ANTECEDENT)
	if j == i - 1:
		actions.add(Action.NO_ANTECEDENT_ADVANCE)
	return frozenset(actions)

def actionMask(state, spanCount, maxAntecedents=250):
	'''The legal actions as a boolean array indexed by action.'''
	legal = legalActions(state, spanCount, maxAntecedents)
	return np.array([action in legal for action in Action])

def decay(gammaDecay, distance):
	return np.exp(-gammaDecay * abs(distance))

class RewardScorer(Module):
	'''
	The learned pair score
	
		v_m . f1(m_i) + v_m . f1(m_j) + f2(m_j)^T U f2(m_i) + v_bi . f3(m_i)
	
	decayed by exp(-gamma |i - j|). The pair feature embeddings are appended
	to both span vectors before f2 and f3, f1 sees the span vector alone.
	
	:param spanDim: the width of a span vector
	:param pairDim: the width of the pair features
	:param hidden: the hidden width of the feed-forward blocks
	:param k: the output width of the feed-forward blocks
	:param rng: the random generator for initialization and dropout
	:param gammaDecay: the distance decay in (0, 1)
	:param dropout: the dropout rate inside the feed-forward blocks
	'''
	
	def __init__(self, spanDim, pairDim, hidden, k, rng, gammaDecay=0.5,
			dropout=0.0):
		if not 0.0 < gammaDecay < 1.0:
			raise ValueError('gammaDecay must be in (0, 1)')
		self.f1 = FeedForward(spanDim, hidden, k, rng, dropout)
		self.f2 = FeedForward(spanDim + pairDim, hidden, k, rng, dropout)
		self.f3 = FeedForward(spanDim + pairDim, hidden, k, rng, dropout)
		self.vM = Parameter(glorotUniform(rng, (k,)), 'vM')
		self.uBi = Parameter(glorotUniform(rng, (k, k)), 'uBi')
		self.vBi = Parameter(glorotUniform(rng, (k,)), 'vBi')
		self.sentinel = Parameter(rng.normal(0.0, 0.1, spanDim), 'sentinel')
		self.spanDim = spanDim
		self.pairDim = pairDim
		self.gammaDecay = gammaDecay
	
	def mentionLogits(self, m):
		return mentionScore(m, self.f1, self.vM)
	
	def score(self, mi, mj, pairFeatures):
		'''
		The undecayed score of one pair, or of a batch of pairs given as
		matrices with one row per pair.
		
		:param mi: the vector(s) of the current mention
		:param mj: the vector(s) of the antecedent, or the sentinel
		:param pairFeatures: the pair feature vector(s)
		'''
		if mi.shape[-1] != self.spanDim or mj.shape[-1] != self.spanDim or \
				pairFeatures.shape[-1] != self.pairDim:
			raise DimensionError('scorer expects widths {} and {}, got shapes '
				'{}, {} and {}'.format(self.spanDim, self.pairDim, mi.shape,
				mj.shape, pairFeatures.shape))
		left = ag.concat([mi, pairFeatures], axis=-1)
		right = ag.concat([mj, pairFeatures], axis=-1)
		return ag.add(
			ag.add(self.mentionLogits(mi), self.mentionLogits(mj)),
			ag.add(
				biaffine(self.f2(right), self.f2(left), self.uBi),
				ag.matmul(self.f3(left), self.vBi),
			),
		)

def reward(mi, mj, distance, pairFeatures, scorer):
	'''
	The decayed pair score of a single state as a plain number.
	
	:param mi: the :class:`acoref.spans.SpanRepr` (or vector) of mention i
	:param mj: the one of candidate j, None for the sentinel
	:param distance: the mention distance |i - j|
	:param pairFeatures: the pair feature vector
	:param scorer: the :class:`RewardScorer`
	'''
	vi = mi.vector if isinstance(mi, SpanRepr) else mi
	if mj is None:
		vj = scorer.sentinel
	else:
		vj = mj.vector if isinstance(mj, SpanRepr) else mj
	with noGrad():
		score = scorer.score(vi, vj, pairFeatures).item()
	return float(decay(scorer.gammaDecay, distance) * score)

def statePairs(spanCount, maxAntecedents):
	'''
	Return the (i, j) pairs of every state an episode can visit, grouped by
	i and with the sentinel first.
	'''
	rows = []
	for i in range(1, spanCount + 1):
		rows.append((i, 0))
		if i > 1:
			rows.extend((i, j) for j in range(windowStart(i,
				maxAntecedents), i))
	return np.array(rows, dtype=np.intp).reshape(-1, 2)

class PairTable:
	'''
	The undecayed scores of all states of one episode, computed once from a
	frozen scorer, plus the pair features of each state.
	
	:param spanCount: the number of mentions n
	:param maxAntecedents: the size of the candidate window
	:param gammaDecay: the distance decay of the rewards
	:param scores: the scores in the row order of :func:`statePairs`
	:param features: optional pair feature rows in the same order
	'''
	
	def __init__(self, spanCount, maxAntecedents, gammaDecay, scores,
			features=None):
		self.spanCount = spanCount
		self.maxAntecedents = maxAntecedents
		self.gammaDecay = gammaDecay
		self.pairs = statePairs(spanCount, maxAntecedents)
		self.scores = np.asarray(scores, dtype=np.float64)
		if self.scores.shape != (len(self.pairs),):
			raise DimensionError('expected {} scores, got shape {}'.format(
				len(self.pairs), self.scores.shape))
		self.features = features
		counts = [1 + i - windowStart(i, maxAntecedents) if i > 1 else 1
			for i in range(1, spanCount + 1)]
		self._offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.intp)
	
	@classmethod
	def fromFunction(cls, spanCount, maxAntecedents, gammaDecay, function):
		pairs = statePairs(spanCount, maxAntecedents)
		return cls(spanCount, maxAntecedents, gammaDecay,
			[function(int(i), int(j)) for i, j in pairs])
	
	def row(self, i, j):
		offset = self._offsets[i - 1]
		if j == 0:
			return offset
		return offset + 1 + j - windowStart(i, self.maxAntecedents)
	
	def score(self, i, j):
		return float(self.scores[self.row(i, j)])
	
	def reward(self, i, j):
		return float(decay(self.gammaDecay, i - j) * self.score(i, j))

def step(state, action, table):
	'''
	Apply an action. The reward is the decayed score of the state before
	the transition.
	
	:param state: the :class:`EnvState`
	:param action: the :class:`Action` to take
	:param table: the :class:`PairTable` of the episode
	:returns: the next state and the reward
	'''
	legal = legalActions(state, table.spanCount, table.maxAntecedents)
	if action not in legal:
		raise ContractViolation('illegal action {} in state (i={}, j={})'
			.format(Action(action).name, state.i, state.j))
	i, j = state.i, state.j
	value = table.reward(i, j)
	if action == Action.LINK_AND_ADVANCE:
		return EnvState(i + 1, 0, state.links + ((i, j),)), value
	if action == Action.ADVANCE_ANTECEDENT:
		if j == 0:
			return EnvState(i, windowStart(i, table.maxAntecedents),
				state.links), value
		return EnvState(i, j + 1, state.links), value
	return EnvState(i + 1, 0, state.links), value

class StepRecord:
	__slots__ = ('state', 'action', 'reward', 'nextState')
	
	def __init__(self, state, action, reward, nextState):
		self.state = state
		self.action = action
		self.reward = reward
		self.nextState = nextState

@dataclass
class EpisodeRecord:
	'''The steps of one episode in order.'''
	steps: list = field(default_factory=list)
	terminal: bool = False
	
	@property
	def links(self):
		return self.steps[-1].nextState.links if self.steps else ()
	
	def isChained(self):
		return all(a.nextState == b.state for a, b in
			zip(self.steps, self.steps[1:]))
	
	def writeTrace(self, fileobj, docKey=None):
		'''Write one JSON line per step.'''
		for record in self.steps:
			line = {
				'i': record.state.i,
				'j': record.state.j,
				'action': Action(record.action).name,
				'reward': record.reward,
			}
			if docKey is not None:
				line = {'doc_key': docKey, **line}
			fileobj.write(json.dumps(line))
			fileobj.write('\n')

class UnionFind:
	'''Disjoint sets with union by rank and path compression.'''
	
	def __init__(self, items=()):
		self._parent = {}
		self._rank = {}
		for item in items:
			self.add(item)
	
	def add(self, item):
		if item not in self._parent:
			self._parent[item] = item
			self._rank[item] = 0
	
	def find(self, item):
		self.add(item)
		root = item
		while self._parent[root] != root:
			root = self._parent[root]
		while self._parent[item] != root:
			self._parent[item], item = root, self._parent[item]
		return root
	
	def union(self, a, b):
		rootA, rootB = self.find(a), self.find(b)
		if rootA == rootB:
			return rootA
		if self._rank[rootA] < self._rank[rootB]:
			rootA, rootB = rootB, rootA
		self._parent[rootB] = rootA
		if self._rank[rootA] == self._rank[rootB]:
			self._rank[rootA] += 1
		return rootA
	
	def groups(self):
		result = {}
		for item in self._parent:
			result.setdefault(self.find(item), []).append(item)
		return list(result.values())

def linksToClusters(links):
	'''
	Return the connected components of the link graph, each as a sorted
	list of mention ids. Mentions without links are not part of the result.
	'''
	sets = UnionFind()
	for i, j in links:
		if not 1 <= j < i:
			raise ContractViolation('invalid link ({}, {})'.format(i, j))
		sets.union(i, j)
	return sorted(sorted(group) for group in sets.groups())
