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

import itertools
import os

import numpy as np

from acoref import autograd as ag
from acoref.config import SynthConfig, TrainConfig
from acoref.corpus import generateSynthetic, hashEmbeddings

SLOW_TESTS = os.environ.get('ACOREF_SLOW_TESTS') == '1'
# random draws per gradient check
TRIALS = 100

def numericGradient(function, param, eps=1e-4):
	'''Central finite differences of a scalar function w.r.t. a tensor.'''
	grad = np.zeros_like(param.data)
	for idx in np.ndindex(*param.shape):
		original = param.data[idx]
		param.data[idx] = original + eps
		plus = function().item()
		param.data[idx] = original - eps
		minus = function().item()
		param.data[idx] = original
		grad[idx] = (plus - minus) / (2 * eps)
	return grad

def relativeError(analytic, numeric, floor=1e-3):
	scale = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
	return float(np.max(np.abs(analytic - numeric) / scale, initial=0.0))

def gradientErrors(function, params, eps=1e-4):
	'''
	Compare the gradients of ``function()`` computed by backpropagation with
	finite differences and return the relative error per parameter.
	'''
	for param in params:
		param.zeroGrad()
	ag.backward(function())
	analytic = [param.grad.copy() for param in params]
	return [relativeError(a, numericGradient(function, param, eps))
		for a, param in zip(analytic, params)]

def tensor(rng, *shape, margin=0.0):
	'''
	A leaf with entries drawn uniformly from [-2, 2]. Entries closer to 0
	than ``margin`` are drawn again, for functions with a kink at 0.
	'''
	data = rng.uniform(-2.0, 2.0, size=shape)
	while margin and (np.abs(data) < margin).any():
		small = np.abs(data) < margin
		data[small] = rng.uniform(-2.0, 2.0, size=int(small.sum()))
	return ag.Tensor(data, requiresGrad=True)

def smallConfig(**overrides):
	values = dict(epochs=1, max_span_width=3, max_antecedents=10,
		prune_ratio=0.4, dropout=0.0, feature_dim=4, lstm_hidden=8,
		ffnn_hidden=8, scorer_dim=4, seed=0)
	values.update(overrides)
	return TrainConfig(**values)

def synthCorpus(documents=5, hashDim=8, **overrides):
	'''A small synthetic corpus and hash embeddings covering it.'''
	values = dict(vocab_size=20, documents=documents, entities=2, mentions=2,
		seed=1)
	values.update(overrides)
	docs = generateSynthetic(SynthConfig(**values))
	return docs, hashEmbeddings(docs, hashDim, seed=0)

def conllText(docKey, sentences, speaker='-'):
	'''
	Render sentences of (word, coref) pairs in the CoNLL-2012 column
	format.
	'''
	lines = ['#begin document ({}); part 000'.format(docKey)]
	for sentence in sentences:
		for i, (word, coref) in enumerate(sentence):
			lines.append(' '.join([docKey, '0', str(i), word, 'NN', '*', '-',
				'-', '-', speaker, '*', coref]))
		lines.append('')
	lines.append('#end document')
	return '\n'.join(lines) + '\n'

def randomClusters(rng, mentions=8, clusters=4):
	'''Partition a random subset of mentions into at most ``clusters`` sets.'''
	chosen = [m for m in range(mentions) if rng.random() < 0.8]
	labels = rng.integers(0, clusters, len(chosen))
	return [[m for m, l in zip(chosen, labels) if l == k]
		for k in range(clusters) if (labels == k).any()]

def _nonSingletons(clusters):
	return [set(c) for c in clusters if len(set(c)) > 1]

def mucOracle(gold, pred):
	gold, pred = _nonSingletons(gold), _nonSingletons(pred)
	def side(keys, responses):
		num = den = 0
		for key in keys:
			parts = []
			for m in key:
				owner = [i for i, r in enumerate(responses) if m in r]
				parts.append(owner[0] if owner else ('alone', m))
			num += len(key) - len(set(parts))
			den += len(key) - 1
		return num, den
	return side(pred, gold), side(gold, pred)

def bCubedOracle(gold, pred):
	gold, pred = _nonSingletons(gold), _nonSingletons(pred)
	def side(keys, responses):
		total = count = 0
		for key in keys:
			for m in key:
				other = next((r for r in responses if m in r), set())
				total += len(key & other) / len(key)
				count += 1
		return total, count
	return side(pred, gold), side(gold, pred)

def ceafOracle(gold, pred):
	'''The best summed phi4 over all one-to-one alignments.'''
	gold, pred = _nonSingletons(gold), _nonSingletons(pred)
	if len(gold) > len(pred):
		gold, pred = pred, gold
	best = 0.0
	for perm in itertools.permutations(range(len(pred)), len(gold)):
		total = sum(2 * len(g & pred[p]) / (len(g) + len(pred[p]))
			for g, p in zip(gold, perm))
		best = max(best, total)
	return best

def ratio(num, den):
	return num / den if den else 0.0
