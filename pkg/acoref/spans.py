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
Module to enumerate candidate spans, represent them as vectors and score
them as mentions.

A span vector is the concatenation of the start token embedding, the end
token embedding, the attention-weighted head embedding and the learned
width embedding. Pair-level features (distance, speaker match, genre) are
embedded here as well but only enter the pair scorer.
'''

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autograd as ag
from .autograd import Parameter, Tensor
from .corpus import GENRES
from .exceptions import ContractViolation, DimensionError
from .nn import Embedding, Module, binaryCrossEntropy, glorotUniform

logger = logging.getLogger(__name__)

# upper bounds of the distance buckets, the last bucket is open
DISTANCE_BOUNDS = (1, 2, 3, 4, 7, 15, 31, 63)
DISTANCE_BUCKETS = len(DISTANCE_BOUNDS) + 1
SPEAKER_DIFFERENT, SPEAKER_SAME, SPEAKER_SENTINEL = range(3)

@dataclass(frozen=True, order=True)
class CandidateSpan:
	'''An inclusive range of document-level token indices.'''
	start: int
	end: int
	
	def __post_init__(self):
		if self.start > self.end:
			raise ValueError('span starts after its end: ({}, {})'.format(
				self.start, self.end))
	
	@property
	def width(self):
		return self.end - self.start + 1
	
	def astuple(self):
		return (self.start, self.end)

@dataclass
class SpanRepr:
	'''
	The vector of a single span along with its mention logit once scored.
	'''
	vector: Tensor
	span: CandidateSpan
	mentionLogit: Optional[float] = None

def enumerateSpans(doc, maxWidth):
	'''
	Return every span of at most ``maxWidth`` tokens that does not cross a
	sentence boundary, ordered by (start, end).
	
	:param doc: the :class:`acoref.corpus.Document`
	:param maxWidth: the maximum span width
	'''
	if maxWidth < 1:
		raise ValueError('maxWidth must be positive')
	spans = []
	for first, last in doc.sentenceBounds():
		for start in range(first, last + 1):
			for end in range(start, min(last, start + maxWidth - 1) + 1):
				spans.append(CandidateSpan(start, end))
	return spans

def distanceBucket(distance):
	'''
	Map distances to the buckets 1, 2, 3, 4, 5-7, 8-15, 16-31, 32-63, 64+.
	Distances below 1 share the first bucket.
	
	:param distance: an integer or an integer array
	'''
	return np.searchsorted(DISTANCE_BOUNDS, np.maximum(distance, 1))

def widthBucket(width, maxWidth):
	'''Exact width buckets, widths beyond ``maxWidth`` share the last.'''
	return np.clip(np.asarray(width) - 1, 0, maxWidth - 1)

class FeatureEmbedder(Module):
	'''
	The learned embedding tables of the span width and of the pair
	features: bucketed distance, speaker match and genre.
	
	:param maxWidth: the number of width buckets
	:param dim: the width of every table row
	:param rng: the random generator used for the initialization
	'''
	
	def __init__(self, maxWidth, dim, rng):
		self.width = Embedding(maxWidth, dim, rng)
		self.distance = Embedding(DISTANCE_BUCKETS, dim, rng)
		self.speaker = Embedding(3, dim, rng)
		self.genre = Embedding(len(GENRES) + 1, dim, rng)
		self.maxWidth = maxWidth
		self.dim = dim
	
	@property
	def pairDim(self):
		return 3 * self.dim
	
	def widths(self, widths):
		return self.width(widthBucket(widths, self.maxWidth))
	
	def pair(self, distances, speakers, genres):
		'''
		Embed the features of mention pairs.
		
		:param distances: raw mention distances
		:param speakers: speaker match ids
		:param genres: genre ids
		:returns: a (pairs, 3 dim) tensor
		'''
		return ag.concat([
			self.distance(distanceBucket(np.asarray(distances))),
			self.speaker(np.asarray(speakers)),
			self.genre(np.asarray(genres)),
		], axis=-1)

class AttentionHead(Module):
	'''
	The head-finding attention over the token embeddings of a span.
	
	:param dim: the token embedding dimension
	:param rng: the random generator used for the initialization
	'''
	
	def __init__(self, dim, rng):
		self.vO = Parameter(glorotUniform(rng, (dim,)), 'vO')

def headAttention(tokens, vO):
	'''
	Weight the token embeddings of a span by the softmax of their logits
	v_o . x_t and sum them.
	
	:param tokens: the (width, dim) embeddings of the span tokens
	:param vO: the attention vector
	'''
	if tokens.ndim != 2 or tokens.shape[0] == 0:
		raise DimensionError('expected a non-empty (width, dim) matrix, got '
			'shape {}'.format(tokens.shape))
	alpha = ag.softmax(ag.matmul(tokens, vO))
	return ag.matmul(alpha, tokens)

def spanRepr(doc, span, embeddings, features, vO):
	'''
	Build the representation of a single span.
	
	:param doc: the document
	:param span: the :class:`CandidateSpan`
	:param embeddings: the :class:`acoref.corpus.EmbeddingTable`
	:param features: the :class:`FeatureEmbedder`
	:param vO: the attention vector
	'''
	tokens = Tensor(np.stack([embeddings.lookup(doc.docKey, t)
		for t in range(span.start, span.end + 1)]))
	vector = ag.concat([
		tokens[0],
		tokens[span.width - 1],
		headAttention(tokens, vO),
		features.widths(np.array([span.width]))[0],
	])
	return SpanRepr(vector, span)

class SpanEncoder:
	'''
	Batched computation of the span vectors of one document.
	
	:param features: the :class:`FeatureEmbedder`
	:param attention: the :class:`AttentionHead`
	'''
	
	def __init__(self, features, attention):
		self.features = features
		self.attention = attention
	
	def encode(self, tokens, spans):
		'''
		:param tokens: the (tokens, dim) embedding matrix of the document
		:param spans: the candidate spans
		:returns: a (spans, 3 dim + feature dim) tensor, one row per span
		'''
		if not isinstance(tokens, Tensor):
			tokens = Tensor(tokens)
		starts = np.array([s.start for s in spans], dtype=np.intp)
		ends = np.array([s.end for s in spans], dtype=np.intp)
		widths = ends - starts + 1
		offsets = np.arange(widths.max())
		positions = np.minimum(starts[:, None] + offsets, ends[:, None])
		mask = offsets < widths[:, None]
		logits = ag.take(ag.matmul(tokens, self.attention.vO), positions)
		alpha = ag.softmax(logits, axis=-1, mask=mask)
		gathered = ag.take(tokens, positions)
		heads = ag.reduceSum(ag.mul(gathered, ag.reshape(alpha,
			alpha.shape + (1,))), axis=1)
		return ag.concat([
			ag.take(tokens, starts),
			ag.take(tokens, ends),
			heads,
			self.features.widths(widths),
		], axis=-1)

def mentionScore(m, f1, vM):
	'''
	The mention logit v_m . f1(m) of one span or of a batch of spans.
	
	:param m: a :class:`SpanRepr`, a span vector or a (spans, dim) matrix
	:param f1: the feed-forward block of the mention score
	:param vM: the mention score vector
	'''
	vector = m.vector if isinstance(m, SpanRepr) else m
	logit = ag.matmul(f1(vector), vM)
	if isinstance(m, SpanRepr):
		m.mentionLogit = logit.item()
	return logit

def goldMentionLabels(spans, clusters):
	'''Label every span with 1 if it is in some gold cluster, else 0.'''
	mentions = {span for cluster in clusters for span in cluster}
	return np.array([1.0 if s.astuple() in mentions else 0.0 for s in spans])

def detectionLoss(spans, logits, clusters):
	'''
	The mean binary cross-entropy of the mention probabilities against
	gold cluster membership.
	
	:param spans: the candidate spans
	:param logits: a tensor holding one mention logit per span
	:param clusters: the gold clusters as (start, end) tuples
	'''
	if not spans:
		raise ContractViolation('detection loss of an empty span set')
	labels = goldMentionLabels(spans, clusters)
	return ag.mean(binaryCrossEntropy(logits, labels))

def pruneIndices(spans, logits, ratio, tokenCount):
	'''
	Return the indices of the ceil(ratio T) spans with the highest mention
	logits in (start, end) order. Ties prefer the earlier start, then the
	shorter width.
	'''
	if not 0.0 < ratio <= 1.0:
		raise ValueError('prune ratio must be in (0, 1], got {}'.format(ratio))
	keep = math.ceil(round(ratio * tokenCount, 9))
	logits = np.asarray(logits, dtype=np.float64)
	ranked = sorted(range(len(spans)), key=lambda k: (-logits[k],
		spans[k].start, spans[k].width))
	return sorted(ranked[:keep], key=lambda k: spans[k])

def prune(spans, logits, ratio, tokenCount):
	'''
	Keep the ceil(ratio T) most likely mentions of a document.
	
	:param spans: the candidate spans in (start, end) order
	:param logits: the mention logits of the spans
	:param ratio: the number of kept spans per token
	:param tokenCount: the document length T
	'''
	return [spans[k] for k in pruneIndices(spans, logits, ratio, tokenCount)]
