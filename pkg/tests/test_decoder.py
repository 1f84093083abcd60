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

import io
import json
import unittest
from collections import Counter
from unittest import mock

import numpy as np

from acoref import decoder
from acoref.corpus import Document
from acoref.model import CorefModel
from acoref.spans import enumerateSpans
from .util import smallConfig, synthCorpus

class test_decoder(unittest.TestCase):
	
	@classmethod
	def setUpClass(cls):
		cls.docs, cls.embeddings = synthCorpus(documents=4)
		cls.model = CorefModel(smallConfig(), 8)
	
	def test_empty_document(self):
		self.assertEqual(decoder.decode(Document('empty', 'nw', []), self.model,
			self.embeddings), [])
	
	def test_output(self):
		for doc in self.docs:
			clusters = decoder.decode(doc, self.model, self.embeddings)
			seen = set()
			for cluster in clusters:
				self.assertGreaterEqual(len(cluster), 2)
				self.assertEqual(cluster, sorted(cluster))
				for start, end in cluster:
					self.assertTrue(0 <= start <= end < doc.tokenCount)
					self.assertNotIn((start, end), seen)
					seen.add((start, end))
			self.assertEqual(clusters, sorted(clusters))
	
	def test_deterministic(self):
		doc = self.docs[0]
		first = decoder.decode(doc, self.model, self.embeddings)
		for _ in range(9):
			self.assertEqual(decoder.decode(doc, self.model, self.embeddings),
				first)
	
	def test_keeps_training_mode(self):
		self.model.train()
		decoder.decode(self.docs[0], self.model, self.embeddings)
		self.assertTrue(self.model.policy.training)
		self.assertTrue(self.model.scorer.f1.training)
	
	def test_threads(self):
		sequential = list(decoder.decodeAll(self.docs, self.model,
			self.embeddings))
		parallel = list(decoder.decodeAll(self.docs, self.model,
			self.embeddings, threads=3))
		self.assertEqual([doc.docKey for doc, _ in parallel],
			[doc.docKey for doc in self.docs])
		self.assertEqual(sequential, parallel)
	
	def test_trace(self):
		buffer = io.StringIO()
		clusters = decoder.decode(self.docs[1], self.model, self.embeddings,
			trace=buffer)
		lines = [json.loads(line) for line in buffer.getvalue().splitlines()]
		self.assertTrue(lines)
		self.assertEqual(lines[0]['i'], 1)
		self.assertEqual(lines[0]['j'], 0)
		self.assertEqual({line['doc_key'] for line in lines},
			{self.docs[1].docKey})
		links = sum(line['action'] == 'LINK_AND_ADVANCE' for line in lines)
		self.assertGreaterEqual(links, sum(len(c) - 1 for c in clusters))

class test_detection(unittest.TestCase):
	
	def setUp(self):
		self.docs, self.embeddings = synthCorpus(documents=3, max_name_width=3)
		self.model = CorefModel(smallConfig(max_span_width=4), 8)
	
	def perfectLogits(self, doc, model, embeddings):
		spans = enumerateSpans(doc, model.config.max_span_width)
		gold = doc.mentions()
		return spans, np.array([5.0 if s.astuple() in gold else -5.0
			for s in spans])
	
	def test_perfect_detector(self):
		with mock.patch('acoref.decoder.mentionLogits', self.perfectLogits):
			result = decoder.mentionDetectionByWidth(self.docs, self.model,
				self.embeddings, buckets=((1, 2), (3, 4), (5, 7)))
		self.assertIn('1-2', result)
		self.assertNotIn('5-7', result)
		self.assertEqual(set(result.values()), {1.0})
	
	def test_counting_oracle(self):
		rng = np.random.default_rng(6)
		predicted = {}
		def randomLogits(doc, model, embeddings):
			spans = enumerateSpans(doc, model.config.max_span_width)
			logits = rng.normal(size=len(spans))
			predicted[doc.docKey] = {s.astuple() for s, l in zip(spans, logits)
				if l > 0}
			return spans, logits
		with mock.patch('acoref.decoder.mentionLogits', randomLogits):
			found, gold = decoder.detectionCounts(self.docs, self.model,
				self.embeddings)
		expectedFound, expectedGold = Counter(), Counter()
		for doc in self.docs:
			for start, end in doc.mentions():
				expectedGold[end - start + 1] += 1
				if (start, end) in predicted[doc.docKey]:
					expectedFound[end - start + 1] += 1
		self.assertEqual(gold, expectedGold)
		self.assertEqual(found, expectedFound)
		recall = decoder.detectionRecall(found, gold, 1, 2)
		total = sum(expectedGold[w] for w in (1, 2))
		self.assertAlmostEqual(recall, sum(expectedFound[w] for w in (1, 2)) /
			total, delta=1e-12)
	
	def test_absent_buckets(self):
		self.assertIsNone(decoder.detectionRecall(Counter(), Counter({1: 2}), 3,
			4))
		self.assertEqual(decoder.detectionRecall(Counter({1: 1}),
			Counter({1: 2})), 0.5)
	
	def test_real_logits(self):
		spans, logits = decoder.mentionLogits(self.docs[0], self.model,
			self.embeddings)
		self.assertEqual(len(spans), len(logits))
		self.assertEqual(decoder.mentionLogits(Document('e', 'nw', []),
			self.model, self.embeddings)[0], [])

class test_evaluate(unittest.TestCase):
	
	def test_oracle_clusters(self):
		docs, _ = synthCorpus(documents=3)
		predictions = {doc.docKey: doc.clusters for doc in docs}
		report = decoder.evaluateClusters(docs, predictions)
		self.assertEqual(report.avg_f1, 1.0)
		report = decoder.evaluateClusters(docs, {})
		self.assertEqual(report.avg_f1, 0.0)
	
	def test_evaluate(self):
		docs, embeddings = synthCorpus(documents=2)
		model = CorefModel(smallConfig(), 8)
		report, recall = decoder.evaluate(docs, model, embeddings)
		predictions = {doc.docKey: clusters for doc, clusters in
			decoder.decodeAll(docs, model, embeddings)}
		self.assertEqual(report, decoder.evaluateClusters(docs, predictions))
		self.assertTrue(0.0 <= recall <= 1.0)
