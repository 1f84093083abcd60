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
Module to resolve documents with a trained model and to evaluate the
predicted clusters.
'''

import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .autograd import noGrad
from .env import linksToClusters
from .metrics import Evaluator
from .model import runEpisode
from .spans import pruneIndices

logger = logging.getLogger(__name__)

# the span width buckets of the detection breakdown, inclusive bounds
WIDTH_BUCKETS = ((1, 2), (3, 4), (5, 7), (8, 10))

def decode(doc, model, embeddings, trace=None):
	'''
	Resolve a document with the greedy policy.
	
	:param doc: the :class:`acoref.corpus.Document`
	:param model: the :class:`acoref.model.CorefModel`
	:param embeddings: the :class:`acoref.corpus.EmbeddingTable`
	:param trace: an optional text file receiving one JSON line per step
	:returns: the clusters of (start, end) spans, singletons excluded
	'''
	with noGrad(), model.evaluating():
		encoding = model.encode(doc, embeddings)
		if not encoding.spans:
			return []
		keep = pruneIndices(encoding.spans, encoding.logits.data,
			model.config.prune_ratio, doc.tokenCount)
		spans = [encoding.spans[k] for k in keep]
		vectors = encoding.vectors.data[keep]
		table = model.pairTable(doc, spans, vectors)
		record, _ = runEpisode(model, table, vectors, 'greedy')
	logger.debug('decoded %s: %d mentions in %d steps', doc.docKey, len(spans),
		len(record.steps))
	if trace is not None:
		record.writeTrace(trace, doc.docKey)
	return sorted([spans[m - 1].astuple() for m in group]
		for group in linksToClusters(record.links))

def decodeAll(docs, model, embeddings, threads=1):
	'''
	Resolve documents, in parallel if ``threads`` exceeds 1. The model is
	only read, so every worker shares it.
	
	:returns: a generator of (document, clusters) pairs in input order
	'''
	docs = list(docs)
	with model.evaluating():
		if threads <= 1:
			for doc in docs:
				yield doc, decode(doc, model, embeddings)
			return
		with ThreadPoolExecutor(max_workers=threads) as pool:
			yield from zip(docs, pool.map(lambda doc: decode(doc, model,
				embeddings), docs))

def mentionLogits(doc, model, embeddings):
	'''Return the candidate spans of a document and their mention logits.'''
	with noGrad(), model.evaluating():
		encoding = model.encode(doc, embeddings)
	if not encoding.spans:
		return [], np.zeros(0)
	return encoding.spans, encoding.logits.data

def detectionCounts(docs, model, embeddings):
	'''
	Count, per width, the gold mentions and those among them predicted as
	mentions, i.e. with a mention logit above zero.
	
	:returns: two :class:`collections.Counter` of found and gold mentions
	'''
	found, gold = Counter(), Counter()
	for doc in docs:
		spans, logits = mentionLogits(doc, model, embeddings)
		predicted = {span.astuple() for span, logit in zip(spans, logits)
			if logit > 0}
		for start, end in doc.mentions():
			width = end - start + 1
			gold[width] += 1
			if (start, end) in predicted:
				found[width] += 1
	return found, gold

def detectionRecall(found, gold, low=1, high=None):
	'''The recall of gold mentions with a width in [low, high].'''
	widths = [w for w in gold if w >= low and (high is None or w <= high)]
	total = sum(gold[w] for w in widths)
	if not total:
		return None
	return sum(found[w] for w in widths) / total

def mentionDetectionByWidth(docs, model, embeddings, buckets=WIDTH_BUCKETS):
	'''
	The recall of gold mentions per span width bucket. Buckets without any
	gold mention are left out.
	
	:param buckets: (low, high) inclusive width bounds
	:returns: a dict mapping bucket labels like ``'1-2'`` to recall values
	'''
	found, gold = detectionCounts(docs, model, embeddings)
	result = {}
	for low, high in buckets:
		recall = detectionRecall(found, gold, low, high)
		if recall is not None:
			result['{}-{}'.format(low, high)] = recall
	return result

def evaluateClusters(docs, predictions):
	'''
	Score predicted clusters against the gold clusters of the documents.
	
	:param docs: the gold documents
	:param predictions: a dict mapping document keys to clusters
	:returns: the :class:`acoref.metrics.MetricReport`
	'''
	evaluator = Evaluator()
	for doc in docs:
		evaluator.update(doc.clusters, predictions.get(doc.docKey, []))
	return evaluator.report()

def evaluate(docs, model, embeddings, threads=1):
	'''
	Decode and score documents.
	
	:returns: the :class:`acoref.metrics.MetricReport` and the overall
		gold mention recall, None if there are no gold mentions
	'''
	docs = list(docs)
	predictions = {doc.docKey: clusters for doc, clusters in
		decodeAll(docs, model, embeddings, threads)}
	report = evaluateClusters(docs, predictions)
	recall = detectionRecall(*detectionCounts(docs, model, embeddings))
	return report, recall
