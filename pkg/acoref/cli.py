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
The command line interface of acoref.

Exit codes: 0 on success, 1 on internal errors and 2 on invalid input,
configuration or files.
'''

import argparse
import json
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from .config import SynthConfig, defaultThreads, loadRunConfig
from .corpus import generateSynthetic, hashEmbeddings, loadEmbeddings, \
	parseConll, readCorpus, writeConll, writeJsonl
from .decoder import decode, decodeAll, evaluate, evaluateClusters
from .exceptions import AcorefError, ConfigError
from .model import CorefModel
from .trainer import ablationRun, train
from .version import __version__

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT = 0, 1, 2

def _embeddingSettings(path=None, hashDim=None, hashSeed=0):
	if path is not None:
		return {'file': str(path)}
	if hashDim is not None:
		return {'hash_dim': hashDim, 'hash_seed': hashSeed}
	raise ConfigError('no token embeddings given')

def _embeddings(docs, settings):
	'''Load or compute the token embeddings described by the settings.'''
	if 'file' in settings:
		return loadEmbeddings(settings['file'])
	return hashEmbeddings(docs, settings['hash_dim'], settings.get('hash_seed', 0))

def _modelEmbeddings(args, model, docs):
	if args.embeddings is not None:
		return _embeddings(docs, _embeddingSettings(args.embeddings))
	if not model.embedding:
		raise ConfigError('the checkpoint records no embeddings, pass '
			'--embeddings')
	return _embeddings(docs, model.embedding)

def _readNonEmpty(path):
	docs = readCorpus(path)
	if not docs:
		raise AcorefError('no documents in {}'.format(path))
	return docs

def _threads(args, config=None):
	if args.threads is not None:
		return args.threads
	if config is not None and config.threads is not None:
		return config.threads
	return defaultThreads()

def cmdPrepare(args):
	'''Convert a CoNLL-2012 file to the JSONL document format.'''
	docs = parseConll(args.conll)
	writeJsonl(docs, args.output)
	print('{} documents, {} clusters written to {}'.format(len(docs),
		sum(len(doc.clusters) for doc in docs), args.output))
	return EXIT_OK

def cmdTrain(args):
	'''Train a model as described by a run configuration.'''
	config = loadRunConfig(args.config, seed=args.seed,
		detection_loss=False if args.no_detection_loss else None)
	config.validatePaths()
	docs = _readNonEmpty(config.train_corpus)
	dev = readCorpus(config.dev_corpus) if config.dev_corpus else []
	settings = _embeddingSettings(config.embeddings, config.hash_dim,
		config.hash_seed)
	embeddings = _embeddings(docs + dev, settings)
	embeddings.checkCoverage(docs + dev)
	config.output_dir.mkdir(parents=True, exist_ok=True)
	config.checkpoint.parent.mkdir(parents=True, exist_ok=True)
	result = train(docs, embeddings, config.train, dev, config.checkpoint,
		config.output_dir / 'metrics.jsonl', _threads(args, config), settings)
	final = result.history[-1].get('avg_f1') if result.history else None
	if final is None:
		print('trained without development corpus, checkpoint {}'.format(
			config.checkpoint))
	else:
		print('final dev avg F1: {:.4f}'.format(final))
	return EXIT_OK

def _readPredictions(path):
	predictions = {}
	with open(path, encoding='utf-8') as f:
		for lineno, line in enumerate(f, 1):
			if not line.strip():
				continue
			try:
				record = json.loads(line)
				predictions[record['doc_key']] = [[tuple(span) for span in
					cluster] for cluster in record['clusters']]
			except (ValueError, KeyError, TypeError) as e:
				raise AcorefError('{} line {}: invalid prediction: {}'.format(
					path, lineno, e))
	return predictions

def cmdEval(args):
	'''Score a checkpoint, a prediction file or the gold clusters.'''
	docs = _readNonEmpty(args.corpus)
	if args.oracle:
		report = evaluateClusters(docs, {doc.docKey: doc.clusters
			for doc in docs})
	elif args.predictions is not None:
		report = evaluateClusters(docs, _readPredictions(args.predictions))
	else:
		model = CorefModel.load(args.checkpoint)
		embeddings = _modelEmbeddings(args, model, docs)
		report, recall = evaluate(docs, model, embeddings, _threads(args))
		logger.info('gold mention recall %s', recall)
	text = json.dumps(report.model_dump(), indent=2)
	print(text)
	if args.output is not None:
		Path(args.output).write_text(text + '\n')
	return EXIT_OK

def cmdPredict(args):
	'''Resolve documents and write their clusters.'''
	docs = readCorpus(args.corpus)
	model = CorefModel.load(args.checkpoint)
	embeddings = _modelEmbeddings(args, model, docs)
	if args.trace is not None:
		with open(args.trace, 'w') as trace:
			results = [(doc, decode(doc, model, embeddings, trace))
				for doc in docs]
	else:
		results = list(decodeAll(docs, model, embeddings, _threads(args)))
	with open(args.output, 'w', encoding='utf-8') as f:
		for doc, clusters in results:
			f.write(json.dumps({'doc_key': doc.docKey, 'clusters': [[list(span)
				for span in cluster] for cluster in clusters]}) + '\n')
	if args.conll is not None:
		with open(args.conll, 'w', encoding='utf-8') as f:
			writeConll(docs, f, {doc.docKey: clusters for doc, clusters in
				results})
	print('{} documents resolved, {} clusters written to {}'.format(
		len(results), sum(len(c) for _, c in results), args.output))
	return EXIT_OK

def cmdGenSynth(args):
	'''Generate a synthetic corpus.'''
	config = SynthConfig(
		vocab_size=args.vocab_size,
		documents=args.documents,
		entities=args.entities,
		mentions=args.mentions,
		pronoun_rate=args.pronoun_rate,
		seed=args.seed,
		max_name_width=args.max_name_width,
		pronoun_classes=args.pronoun_classes,
		max_filler=args.max_filler,
	)
	docs = generateSynthetic(config)
	if args.format == 'conll':
		with open(args.output, 'w', encoding='utf-8') as f:
			writeConll(docs, f)
	else:
		writeJsonl(docs, args.output)
	print('{} documents, {} clusters written to {}'.format(len(docs),
		sum(len(doc.clusters) for doc in docs), args.output))
	return EXIT_OK

def cmdAblate(args):
	'''Train with and without the detection loss and compare.'''
	config = loadRunConfig(args.config)
	config.validatePaths()
	docs = _readNonEmpty(config.train_corpus)
	dev = readCorpus(config.dev_corpus) if config.dev_corpus else []
	embeddings = _embeddings(docs + dev, _embeddingSettings(config.embeddings,
		config.hash_dim, config.hash_seed))
	report = ablationRun(docs, embeddings, config.train, dev, args.seeds,
		_threads(args, config))
	config.output_dir.mkdir(parents=True, exist_ok=True)
	text = json.dumps(report.model_dump(), indent=2)
	(config.output_dir / 'ablation.json').write_text(text + '\n')
	print(text)
	return EXIT_OK

def buildParser():
	parser = argparse.ArgumentParser(prog='acoref',
		description='Actor-critic coreference resolution.')
	parser.add_argument('--version', action='version',
		version='%(prog)s ' + __version__)
	parser.add_argument('-v', '--verbose', action='count', default=0,
		help='log progress (-v) or debugging details (-vv)')
	commands = parser.add_subparsers(dest='command', required=True)
	
	prepare = commands.add_parser('prepare',
		help='convert a CoNLL-2012 file to JSONL')
	prepare.add_argument('conll', help='path to the CoNLL-2012 file')
	prepare.add_argument('output', help='path of the JSONL file to write')
	prepare.set_defaults(func=cmdPrepare)
	
	trainer = commands.add_parser('train', help='train a model')
	trainer.add_argument('config', help='path to the JSON run configuration')
	trainer.add_argument('--no-detection-loss', action='store_true',
		help='train without the mention detection loss')
	trainer.add_argument('--seed', type=int,
		help='override the seed of the configuration')
	trainer.add_argument('--threads', type=int,
		help='number of evaluation threads (default: $ACOREF_THREADS or 1)')
	trainer.set_defaults(func=cmdTrain)
	
	evaluation = commands.add_parser('eval', help='score predicted clusters')
	evaluation.add_argument('corpus', help='path to the gold documents')
	source = evaluation.add_mutually_exclusive_group(required=True)
	source.add_argument('--checkpoint', help='decode with this checkpoint')
	source.add_argument('--predictions',
		help='score a JSONL file written by predict')
	source.add_argument('--oracle', action='store_true',
		help='score the gold clusters against themselves')
	evaluation.add_argument('--embeddings',
		help='token embedding file (default: as recorded in the checkpoint)')
	evaluation.add_argument('-o', '--output',
		help='path of the JSON report to write')
	evaluation.add_argument('--threads', type=int,
		help='number of decoding threads (default: $ACOREF_THREADS or 1)')
	evaluation.set_defaults(func=cmdEval)
	
	predict = commands.add_parser('predict', help='resolve documents')
	predict.add_argument('checkpoint', help='path to the checkpoint')
	predict.add_argument('corpus', help='path to the documents')
	predict.add_argument('output', help='path of the JSONL file to write')
	predict.add_argument('--embeddings',
		help='token embedding file (default: as recorded in the checkpoint)')
	predict.add_argument('--conll',
		help='also write a CoNLL-2012 response file for the official scorer')
	predict.add_argument('--trace',
		help='write every step of every episode to this JSONL file')
	predict.add_argument('--threads', type=int,
		help='number of decoding threads (default: $ACOREF_THREADS or 1)')
	predict.set_defaults(func=cmdPredict)
	
	synth = commands.add_parser('gen-synth',
		help='generate a synthetic corpus')
	synth.add_argument('output', help='path of the corpus to write')
	defaults = SynthConfig()
	for name, field in SynthConfig.model_fields.items():
		synth.add_argument('--' + name.replace('_', '-'), type=field.annotation,
			default=getattr(defaults, name), help='(default: %(default)s)')
	synth.add_argument('--format', choices=('jsonl', 'conll'), default='jsonl',
		help='output format (default: %(default)s)')
	synth.set_defaults(func=cmdGenSynth)
	
	ablate = commands.add_parser('ablate',
		help='compare training with and without the detection loss')
	ablate.add_argument('config', help='path to the JSON run configuration')
	ablate.add_argument('--seeds', type=int, nargs='+',
		help='seeds of the paired runs (default: the configured seed)')
	ablate.add_argument('--threads', type=int,
		help='number of evaluation threads (default: $ACOREF_THREADS or 1)')
	ablate.set_defaults(func=cmdAblate)
	return parser

def main(argv=None):
	args = buildParser().parse_args(argv)
	level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
	logging.basicConfig(level=level,
		format='%(asctime)s %(levelname)s %(name)s: %(message)s')
	try:
		return args.func(args)
	except (AcorefError, ValidationError, OSError) as e:
		print('acoref {}: error: {}'.format(args.command, e), file=sys.stderr)
		return EXIT_INPUT
	except Exception:
		logger.exception('acoref %s failed', args.command)
		return EXIT_INTERNAL
