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
Module computing the coreference metrics MUC, B-cubed and CEAF-phi4.

Every metric is computed from counts (precision numerator and denominator,
recall numerator and denominator) so scores over a corpus sum the counts of
its documents before dividing. Clusters are iterables of hashable mentions;
singleton clusters are ignored.
'''

from collections import namedtuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import linear_sum_assignment

PRF = namedtuple('PRF', 'precision recall f1')

class Counts(namedtuple('Counts', 'pNum pDen rNum rDen')):
	'''The numerators and denominators of precision and recall.'''
	__slots__ = ()
	
	def merge(self, other):
		return Counts(*(a + b for a, b in zip(self, other)))
	
	def prf(self):
		precision = self.pNum / self.pDen if self.pDen else 0.0
		recall = self.rNum / self.rDen if self.rDen else 0.0
		return PRF(precision, recall, f1(precision, recall))

ZERO = Counts(0, 0, 0, 0)

def f1(precision, recall):
	if precision + recall:
		return 2 * precision * recall / (precision + recall)
	return 0.0

def scoringClusters(clusters):
	'''Turn clusters into frozensets, dropping singletons.'''
	result = [frozenset(cluster) for cluster in clusters]
	return [cluster for cluster in result if len(cluster) > 1]

def _mentionMap(clusters):
	return {m: k for k, cluster in enumerate(clusters) for m in cluster}

def _muc(keys, responses):
	mapping = _mentionMap(responses)
	num = den = 0
	for cluster in keys:
		# mentions missing from the responses form partitions of their own
		partitions = {mapping.get(m, (None, m)) for m in cluster}
		num += len(cluster) - len(partitions)
		den += len(cluster) - 1
	return num, den

def mucCounts(gold, pred):
	gold, pred = scoringClusters(gold), scoringClusters(pred)
	pNum, pDen = _muc(pred, gold)
	rNum, rDen = _muc(gold, pred)
	return Counts(pNum, pDen, rNum, rDen)

def _bCubed(keys, responses, empty=frozenset()):
	mapping = _mentionMap(responses)
	total, count = 0.0, 0
	for cluster in keys:
		for m in cluster:
			other = responses[mapping[m]] if m in mapping else empty
			total += len(cluster & other) / len(cluster)
			count += 1
	return total, count

def bCubedCounts(gold, pred):
	gold, pred = scoringClusters(gold), scoringClusters(pred)
	pNum, pDen = _bCubed(pred, gold)
	rNum, rDen = _bCubed(gold, pred)
	return Counts(pNum, pDen, rNum, rDen)

def phi4(a, b):
	return 2 * len(a & b) / (len(a) + len(b))

def ceafAlignment(gold, pred):
	'''
	Find the one-to-one alignment of gold and predicted clusters maximizing
	the summed phi4 similarity.
	
	:returns: the total similarity and the aligned (gold, pred) index pairs
	'''
	if not gold or not pred:
		return 0.0, []
	similarity = np.array([[phi4(g, p) for p in pred] for g in gold])
	rows, cols = linear_sum_assignment(similarity, maximize=True)
	return float(similarity[rows, cols].sum()), list(zip(rows.tolist(),
		cols.tolist()))

def ceafCounts(gold, pred):
	gold, pred = scoringClusters(gold), scoringClusters(pred)
	total, _ = ceafAlignment(gold, pred)
	return Counts(total, len(pred), total, len(gold))

def muc(gold, pred):
	'''
	The link-based MUC score.
	
	:param gold: the gold clusters
	:param pred: the predicted clusters
	:returns: a :class:`PRF`
	'''
	return mucCounts(gold, pred).prf()

def bCubed(gold, pred):
	'''
	The mention-based B-cubed score. Mentions only present on one side count
	in that side's denominator without any credit.
	'''
	return bCubedCounts(gold, pred).prf()

def ceafPhi4(gold, pred):
	'''The entity-based CEAF score under the phi4 similarity.'''
	return ceafCounts(gold, pred).prf()

def _unit(value):
	# summed fractions may exceed 1 by rounding
	return min(1.0, max(0.0, float(value)))

class MetricReport(BaseModel):
	'''Precision, recall and F1 of the three metrics plus their mean F1.'''
	model_config = ConfigDict(extra='forbid')
	
	muc_precision: float = Field(ge=0.0, le=1.0)
	muc_recall: float = Field(ge=0.0, le=1.0)
	muc_f1: float = Field(ge=0.0, le=1.0)
	b3_precision: float = Field(ge=0.0, le=1.0)
	b3_recall: float = Field(ge=0.0, le=1.0)
	b3_f1: float = Field(ge=0.0, le=1.0)
	ceaf_precision: float = Field(ge=0.0, le=1.0)
	ceaf_recall: float = Field(ge=0.0, le=1.0)
	ceaf_f1: float = Field(ge=0.0, le=1.0)
	avg_f1: float = Field(ge=0.0, le=1.0)
	
	@classmethod
	def fromScores(cls, mucScore, bCubedScore, ceafScore):
		values = {}
		for name, score in [('muc', mucScore), ('b3', bCubedScore),
				('ceaf', ceafScore)]:
			values[name + '_precision'] = _unit(score.precision)
			values[name + '_recall'] = _unit(score.recall)
			values[name + '_f1'] = _unit(score.f1)
		values['avg_f1'] = _unit(avgF1((mucScore.f1, bCubedScore.f1,
			ceafScore.f1)))
		return cls(**values)
	
	@property
	def muc(self):
		return PRF(self.muc_precision, self.muc_recall, self.muc_f1)
	
	@property
	def bCubed(self):
		return PRF(self.b3_precision, self.b3_recall, self.b3_f1)
	
	@property
	def ceaf(self):
		return PRF(self.ceaf_precision, self.ceaf_recall, self.ceaf_f1)

def avgF1(report):
	'''
	The arithmetic mean of the MUC, B-cubed and CEAF-phi4 F1 values.
	
	:param report: a :class:`MetricReport` or the three F1 values
	'''
	if isinstance(report, MetricReport):
		report = (report.muc_f1, report.b3_f1, report.ceaf_f1)
	values = tuple(report)
	if len(values) != 3:
		raise ValueError('expected three F1 values, got {}'.format(len(values)))
	return sum(values) / 3.0

def _hashable(mention):
	return tuple(mention) if isinstance(mention, list) else mention

class Evaluator:
	'''Accumulate the metric counts of many documents.'''
	
	def __init__(self):
		self.muc = ZERO
		self.bCubed = ZERO
		self.ceaf = ZERO
		self.documents = 0
	
	def update(self, gold, pred):
		gold = [[_hashable(m) for m in cluster] for cluster in gold]
		pred = [[_hashable(m) for m in cluster] for cluster in pred]
		self.muc = self.muc.merge(mucCounts(gold, pred))
		self.bCubed = self.bCubed.merge(bCubedCounts(gold, pred))
		self.ceaf = self.ceaf.merge(ceafCounts(gold, pred))
		self.documents += 1
		return self
	
	def report(self):
		return MetricReport.fromScores(self.muc.prf(), self.bCubed.prf(),
			self.ceaf.prf())
