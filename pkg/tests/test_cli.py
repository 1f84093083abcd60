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

import contextlib
import io
import json
import os
import tempfile
import unittest
from pathlib import Path

from acoref import cli
from acoref.config import loadRunConfig
from acoref.corpus import EmbeddingTable, readCorpus, saveEmbeddings
from .util import conllText, smallConfig

def run(*argv):
	'''Run the command line interface and capture its output.'''
	stdout, stderr = io.StringIO(), io.StringIO()
	with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
		code = cli.main([str(arg) for arg in argv])
	return code, stdout.getvalue(), stderr.getvalue()

class test_cli(unittest.TestCase):
	
	def setUp(self):
		self.tmp = tempfile.TemporaryDirectory()
		self.directory = self.tmp.name
	
	def tearDown(self):
		self.tmp.cleanup()
	
	def path(self, name):
		return os.path.join(self.directory, name)
	
	def synth(self, name, documents=3, *extra):
		code, _, _ = run('gen-synth', self.path(name), '--documents', documents,
			'--vocab-size', 20, '--entities', 2, '--mentions', 2, *extra)
		self.assertEqual(code, cli.EXIT_OK)
		return self.path(name)
	
	def writeConfig(self, name='run.json', **overrides):
		config = {
			'train_corpus': self.synth('train.jsonl'),
			'dev_corpus': self.synth('dev.jsonl', 2, '--seed', 7),
			'hash_dim': 8,
			'checkpoint': self.path('out/model.ckpt'),
			'output_dir': self.path('out'),
			'train': smallConfig().model_dump(),
		}
		config.update(overrides)
		with open(self.path(name), 'w') as f:
			json.dump(config, f)
		return self.path(name)
	
	def test_prepare(self):
		conll = self.path('doc.conll')
		with open(conll, 'w') as f:
			f.write(conllText('bc/a', [[('x', '(0'), ('y', '0)'), ('z', '(0)')]]))
			f.write(conllText('bc/b', [[('u', '-')]]))
		output = self.path('docs.jsonl')
		code, stdout, _ = run('prepare', conll, output)
		self.assertEqual(code, cli.EXIT_OK)
		self.assertIn('2 documents', stdout)
		with open(output, 'rb') as f:
			first = f.read()
		self.assertEqual(run('prepare', conll, output)[0], cli.EXIT_OK)
		with open(output, 'rb') as f:
			self.assertEqual(f.read(), first)
		docs = readCorpus(output)
		self.assertEqual(docs[0].clusters, [[(0, 1), (2, 2)]])
	
	def test_prepare_malformed(self):
		conll = self.path('bad.conll')
		with open(conll, 'w') as f:
			f.write(conllText('a', [[('x', '(0'), ('y', '-')]]))
		code, _, stderr = run('prepare', conll, self.path('docs.jsonl'))
		self.assertEqual(code, cli.EXIT_INPUT)
		self.assertIn('line 2', stderr)
		code, _, _ = run('prepare', self.path('missing.conll'),
			self.path('docs.jsonl'))
		self.assertEqual(code, cli.EXIT_INPUT)
	
	def test_gen_synth(self):
		jsonl = self.synth('synth.jsonl', 4)
		conll = self.synth('synth.conll', 4, '--format', 'conll')
		self.assertEqual(readCorpus(jsonl), readCorpus(conll))
		self.assertEqual(len(readCorpus(jsonl)), 4)
		code, _, _ = run('gen-synth', self.path('x.jsonl'), '--pronoun-rate', 2)
		self.assertEqual(code, cli.EXIT_INPUT)
		self.assertFalse(os.path.exists(self.path('x.jsonl')))
	
	def test_train(self):
		config = self.writeConfig()
		code, stdout, _ = run('train', config)
		self.assertEqual(code, cli.EXIT_OK)
		self.assertIn('final dev avg F1', stdout)
		self.assertTrue(os.path.exists(self.path('out/model.ckpt')))
		with open(self.path('out/metrics.jsonl')) as f:
			first = f.read()
		self.assertEqual(len(first.splitlines()), 1)
		with open(self.path('out/model.ckpt.json')) as f:
			sidecar = json.load(f)
		self.assertTrue(sidecar['config']['detection_loss'])
		self.assertEqual(sidecar['embedding'], {'hash_dim': 8, 'hash_seed': 0})
		self.assertEqual(run('train', config)[0], cli.EXIT_OK)
		with open(self.path('out/metrics.jsonl')) as f:
			self.assertEqual(f.read(), first)
		code, _, _ = run('train', config, '--no-detection-loss', '--seed', 5)
		self.assertEqual(code, cli.EXIT_OK)
		with open(self.path('out/model.ckpt.json')) as f:
			sidecar = json.load(f)
		self.assertFalse(sidecar['config']['detection_loss'])
		self.assertEqual(sidecar['config']['seed'], 5)
	
	def test_train_bad_config(self):
		config = self.writeConfig(bogus=1)
		code, _, stderr = run('train', config)
		self.assertEqual(code, cli.EXIT_INPUT)
		self.assertIn('bogus', stderr)
		self.assertFalse(os.path.exists(self.path('out')))
		config = self.writeConfig(embeddings=self.path('missing.bin'),
			hash_dim=None)
		code, _, stderr = run('train', config)
		self.assertEqual(code, cli.EXIT_INPUT)
		self.assertIn('missing.bin', stderr)
		self.assertFalse(os.path.exists(self.path('out')))
		self.assertEqual(run('train', self.path('nothing.json'))[0],
			cli.EXIT_INPUT)
	
	def test_train_missing_embedding(self):
		train = self.synth('train.jsonl')
		table = EmbeddingTable(8)
		first, *rest = readCorpus(train)
		for t in range(first.tokenCount - 1):
			table.add(first.docKey, t, [0.5] * 8)
		for doc in rest:
			for t in range(doc.tokenCount):
				table.add(doc.docKey, t, [0.5] * 8)
		embeddings = self.path('train.bin')
		saveEmbeddings(table, embeddings)
		config = self.writeConfig(embeddings=embeddings, hash_dim=None)
		code, _, stderr = run('train', config)
		self.assertEqual(code, cli.EXIT_INPUT)
		self.assertIn('no embedding', stderr)
		self.assertFalse(os.path.exists(self.path('out')))
	
	def test_relative_paths(self):
		os.makedirs(self.path('runs'))
		self.synth('train.jsonl')
		with open(self.path('runs/run.json'), 'w') as f:
			json.dump({
				'train_corpus': '../train.jsonl',
				'hash_dim': 8,
				'checkpoint': 'out/model.ckpt',
				'output_dir': os.path.abspath(self.path('elsewhere')),
			}, f)
		config = loadRunConfig(self.path('runs/run.json'))
		runs = Path(self.directory) / 'runs'
		self.assertEqual(config.train_corpus, runs / '../train.jsonl')
		self.assertEqual(config.checkpoint, runs / 'out/model.ckpt')
		self.assertEqual(config.output_dir, Path(self.path('elsewhere'))
			.absolute())
		self.assertIsNone(config.dev_corpus)
		config.validatePaths()
	
	def test_eval_oracle(self):
		corpus = self.synth('gold.jsonl')
		report = self.path('report.json')
		code, stdout, _ = run('eval', corpus, '--oracle', '-o', report)
		self.assertEqual(code, cli.EXIT_OK)
		values = json.loads(stdout)
		self.assertEqual(len(values), 10)
		for key in ('muc_f1', 'b3_f1', 'ceaf_f1', 'avg_f1'):
			self.assertEqual(values[key], 1.0)
		with open(report) as f:
			self.assertEqual(json.load(f), values)
	
	def test_eval_empty_corpus(self):
		corpus = self.path('empty.jsonl')
		open(corpus, 'w').close()
		code, _, stderr = run('eval', corpus, '--oracle')
		self.assertEqual(code, cli.EXIT_INPUT)
		self.assertIn('no documents', stderr)
	
	def test_predict_and_eval(self):
		self.assertEqual(run('train', self.writeConfig())[0], cli.EXIT_OK)
		checkpoint = self.path('out/model.ckpt')
		corpus = self.path('dev.jsonl')
		predictions = self.path('predictions.jsonl')
		response = self.path('response.conll')
		code, _, _ = run('predict', checkpoint, corpus, predictions, '--conll',
			response, '--trace', self.path('trace.jsonl'))
		self.assertEqual(code, cli.EXIT_OK)
		docs = {doc.docKey: doc for doc in readCorpus(corpus)}
		with open(predictions) as f:
			records = [json.loads(line) for line in f]
		self.assertEqual([r['doc_key'] for r in records], list(docs))
		for record in records:
			for cluster in record['clusters']:
				for start, end in cluster:
					self.assertTrue(0 <= start <= end <
						docs[record['doc_key']].tokenCount)
		self.assertEqual(len(readCorpus(response)), len(docs))
		with open(self.path('trace.jsonl')) as f:
			self.assertTrue(all('action' in json.loads(line) for line in f))
		code, fromFile, _ = run('eval', corpus, '--predictions', predictions)
		self.assertEqual(code, cli.EXIT_OK)
		code, inProcess, _ = run('eval', corpus, '--checkpoint', checkpoint,
			'--threads', 2)
		self.assertEqual(code, cli.EXIT_OK)
		self.assertEqual(fromFile, inProcess)
		again = self.path('again.jsonl')
		run('predict', checkpoint, corpus, again)
		with open(predictions) as f, open(again) as g:
			self.assertEqual(f.read(), g.read())
	
	def test_eval_dimension_mismatch(self):
		self.assertEqual(run('train', self.writeConfig())[0], cli.EXIT_OK)
		corpus = self.path('dev.jsonl')
		table = EmbeddingTable(4)
		for doc in readCorpus(corpus):
			for t in range(doc.tokenCount):
				table.add(doc.docKey, t, [0.0] * 4)
		embeddings = self.path('small.bin')
		saveEmbeddings(table, embeddings)
		code, _, stderr = run('eval', corpus, '--checkpoint',
			self.path('out/model.ckpt'), '--embeddings', embeddings)
		self.assertEqual(code, cli.EXIT_INPUT)
		self.assertIn('dimension', stderr)
	
	def test_usage(self):
		with contextlib.redirect_stderr(io.StringIO()):
			with self.assertRaises(SystemExit) as context:
				cli.main(['eval', 'corpus.jsonl'])
		self.assertEqual(context.exception.code, 2)
