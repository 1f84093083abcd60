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
Module to read and write coreference corpora and token embeddings.

Documents are kept with document-level token indices: a span (start, end)
refers to the inclusive token range of the concatenated sentences.
'''

import contextlib
import hashlib
import json
import logging
import re
import struct
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConllParseError, DimensionError, FormatError, \
	MissingEmbeddingError

logger = logging.getLogger(__name__)

# the genres of the CoNLL-2012 English track, unknown genres share one id
GENRES = ('bc', 'bn', 'mz', 'nw', 'pt', 'tc', 'wb')
PRONOUNS = ('he', 'she', 'it', 'they')

CONLL_MIN_COLUMNS = 12
EMBEDDING_MAGIC = b'ACNE'
EMBEDDING_VERSION = 1

def genreId(genre):
	'''Map a genre code to its categorical id.'''
	try:
		return GENRES.index(genre)
	except ValueError:
		return len(GENRES)

def _canonicalClusters(clusters):
	result = []
	for cluster in clusters:
		spans = sorted({(int(start), int(end)) for start, end in cluster})
		if spans:
			result.append(spans)
	result.sort()
	return result

@dataclass
class Document:
	'''
	A document along with its gold coreference clusters.
	
	:param docKey: the unique document key
	:param genre: the genre code, see :data:`GENRES`
	:param sentences: a list of token lists
	:param speakers: one speaker label per token
	:param clusters: a list of clusters, each a list of (start, end) spans
	'''
	docKey: str
	genre: str
	sentences: list
	speakers: list = field(default_factory=list)
	clusters: list = field(default_factory=list)
	
	def __post_init__(self):
		self.sentences = [list(sentence) for sentence in self.sentences]
		if not self.speakers:
			self.speakers = ['-'] * self.tokenCount
		self.speakers = list(self.speakers)
		self.clusters = _canonicalClusters(self.clusters)
		self.validate()
	
	@property
	def tokens(self):
		return [token for sentence in self.sentences for token in sentence]
	
	@property
	def tokenCount(self):
		return sum(len(sentence) for sentence in self.sentences)
	
	def sentenceBounds(self):
		'''Return the inclusive (start, end) token range of every sentence.'''
		bounds, start = [], 0
		for sentence in self.sentences:
			if sentence:
				bounds.append((start, start + len(sentence) - 1))
			start += len(sentence)
		return bounds
	
	def mentions(self):
		'''Return the set of all gold mention spans.'''
		return {span for cluster in self.clusters for span in cluster}
	
	def validate(self):
		count = self.tokenCount
		if len(self.speakers) != count:
			raise FormatError('document {!r} has {} tokens but {} speakers'
				.format(self.docKey, count, len(self.speakers)))
		seen = set()
		for cluster in self.clusters:
			for start, end in cluster:
				if not 0 <= start <= end < count:
					raise FormatError('span ({}, {}) outside of document {!r}'
						.format(start, end, self.docKey))
				if (start, end) in seen:
					raise FormatError('span ({}, {}) in two clusters of {!r}'
						.format(start, end, self.docKey))
				seen.add((start, end))

@contextlib.contextmanager
def _openText(source, mode='r'):
	if isinstance(source, (str, Path)):
		with open(source, mode, encoding='utf-8') as f:
			yield f
	else:
		yield source

def _genreOfKey(docKey):
	prefix = docKey.split('/', 1)[0]
	return prefix if prefix in GENRES else 'nw'

class _ConllBuilder:
	'''Collect the rows of one CoNLL document and its bracket stacks.'''
	
	def __init__(self, docKey):
		self.docKey = docKey
		self.sentences = [[]]
		self.speakers = []
		self.clusters = defaultdict(list)
		self.stacks = defaultdict(list)
		self.token = 0
	
	def addRow(self, columns, lineno):
		self.sentences[-1].append(columns[3])
		self.speakers.append(columns[9])
		coref = columns[-1]
		if coref not in ('-', '_'):
			for label in coref.split('|'):
				self.addLabel(label, lineno)
		self.token += 1
	
	def addLabel(self, label, lineno, pattern=re.compile(r'(\()?(\d+)(\))?')):
		match = pattern.fullmatch(label)
		if not match or not (match.group(1) or match.group(3)):
			raise ConllParseError('cannot parse coreference label {!r}'.format(
				label), lineno)
		clusterId = int(match.group(2))
		if match.group(1) and match.group(3):
			self.clusters[clusterId].append((self.token, self.token))
		elif match.group(1):
			self.stacks[clusterId].append((self.token, lineno))
		else:
			try:
				start, _ = self.stacks[clusterId].pop()
			except IndexError:
				raise ConllParseError('closing bracket of cluster {} without '
					'an opening one'.format(clusterId), lineno)
			self.clusters[clusterId].append((start, self.token))
	
	def endSentence(self):
		if self.sentences[-1]:
			self.sentences.append([])
	
	def build(self):
		for clusterId, stack in self.stacks.items():
			if stack:
				raise ConllParseError('unclosed bracket of cluster {}'.format(
					clusterId), stack[-1][1])
		clusters, seen = [], set()
		for clusterId in sorted(self.clusters):
			cluster = []
			for span in self.clusters[clusterId]:
				if span in seen:
					if span not in cluster:
						logger.warning('span %s of %s is in several clusters, '
							'keeping the first', span, self.docKey)
					continue
				seen.add(span)
				cluster.append(span)
			clusters.append(cluster)
		sentences = [s for s in self.sentences if s]
		return Document(self.docKey, _genreOfKey(self.docKey), sentences,
			self.speakers, clusters)

def parseConllAll(source,
		pattern=re.compile(r'#begin document \((.*)\)(?:; part (\d+))?$')):
	'''
	Yield every document of a file in the CoNLL-2012 column format. The
	clusters are rebuilt from the bracket annotation of the last column.
	Parts of multi-part documents become separate documents whose key
	carries the part number as suffix, headers without a part keep their
	key as is.
	
	:param source: a path or an open text file
	:param pattern: the pattern of a document header line
	'''
	with _openText(source) as lines:
		builder = None
		for lineno, line in enumerate(lines, 1):
			stripped = line.strip()
			if stripped.startswith('#begin document'):
				if builder is not None:
					yield builder.build()
				match = pattern.match(stripped)
				if match and match.group(2) is None:
					docKey = match.group(1)
				elif match:
					docKey = '{}_{}'.format(match.group(1), int(match.group(2)))
				else:
					docKey = stripped[len('#begin document'):].strip()
				builder = _ConllBuilder(docKey)
			elif stripped.startswith('#end document'):
				if builder is not None:
					yield builder.build()
				builder = None
			elif stripped.startswith('#'):
				continue
			elif not stripped:
				if builder is not None:
					builder.endSentence()
			else:
				columns = stripped.split()
				if len(columns) < CONLL_MIN_COLUMNS:
					raise FormatError('line {}: expected at least {} columns, '
						'got {}'.format(lineno, CONLL_MIN_COLUMNS, len(columns)))
				if builder is None:
					# a single document without delimiters
					builder = _ConllBuilder('{}_{}'.format(columns[0],
						int(columns[1]) if columns[1].isdigit() else 0))
				builder.addRow(columns, lineno)
		if builder is not None:
			yield builder.build()

def parseConll(source):
	'''
	Parse every document of a CoNLL-2012 file.
	
	:param source: a path or an open text file
	:returns: a list of :class:`Document`
	'''
	return list(parseConllAll(source))

def _corefLabels(doc, clusters):
	'''Compute the bracket annotation of every token.'''
	opening = defaultdict(list)
	closing = defaultdict(list)
	single = defaultdict(list)
	for clusterId, cluster in enumerate(clusters):
		for start, end in cluster:
			if start == end:
				single[start].append(clusterId)
			else:
				opening[start].append((-end, clusterId))
				closing[end].append(clusterId)
	labels = []
	for token in range(doc.tokenCount):
		parts = ['({}'.format(c) for _, c in sorted(opening[token])]
		parts += ['({})'.format(c) for c in single[token]]
		parts += ['{})'.format(c) for c in closing[token]]
		labels.append('|'.join(parts) or '-')
	return labels

def _splitPart(docKey, pattern=re.compile(r'(.*)_(0|[1-9]\d*)')):
	'''The base key and part number of a key, None as part without suffix.'''
	match = pattern.fullmatch(docKey)
	if match:
		return match.group(1), int(match.group(2))
	return docKey, None

def writeConll(docs, fileobj, clusters=None):
	'''
	Write documents in the CoNLL-2012 column format, e.g. as key or
	response file of the official scorer.
	
	:param docs: the documents to write
	:param fileobj: an open text file
	:param clusters: optional dict mapping document keys to predicted
		clusters written instead of the gold ones
	'''
	for doc in docs:
		docClusters = doc.clusters if clusters is None else \
			_canonicalClusters(clusters.get(doc.docKey, []))
		labels = iter(_corefLabels(doc, docClusters))
		speakers = iter(doc.speakers)
		base, part = _splitPart(doc.docKey)
		if part is None:
			fileobj.write('#begin document ({})\n'.format(base))
		else:
			fileobj.write('#begin document ({}); part {:03d}\n'.format(base,
				part))
		for sentence in doc.sentences:
			for i, word in enumerate(sentence):
				fileobj.write('\t'.join([base, str(part or 0), str(i), word, '-',
					'-', '-', '-', '-', next(speakers), '*', next(labels)]))
				fileobj.write('\n')
			fileobj.write('\n')
		fileobj.write('#end document\n')

def documentToJson(doc):
	return {
		'doc_key': doc.docKey,
		'genre': doc.genre,
		'sentences': doc.sentences,
		'speakers': doc.speakers,
		'clusters': [[list(span) for span in cluster] for cluster in doc.clusters],
	}

def documentFromJson(data):
	try:
		return Document(
			data['doc_key'],
			data.get('genre', 'nw'),
			data['sentences'],
			data.get('speakers') or [],
			[[tuple(span) for span in cluster] for cluster in data['clusters']],
		)
	except (KeyError, TypeError, ValueError) as e:
		if isinstance(e, FormatError):
			raise
		raise FormatError('malformed document record: {}'.format(e))

def writeJsonl(docs, target):
	'''
	Write documents to the JSONL format, one document per line.
	
	:param docs: the documents to write
	:param target: a path or an open text file
	'''
	with _openText(target, 'w') as f:
		for doc in docs:
			f.write(json.dumps(documentToJson(doc), ensure_ascii=False))
			f.write('\n')

def readJsonlAll(source):
	'''
	Yield every document of a JSONL file.
	
	:param source: a path or an open text file
	'''
	with _openText(source) as lines:
		for lineno, line in enumerate(lines, 1):
			if not line.strip():
				continue
			try:
				data = json.loads(line)
			except json.JSONDecodeError as e:
				raise FormatError('line {}: {}'.format(lineno, e))
			yield documentFromJson(data)

def readJsonl(source):
	'''Read every document of a JSONL file into a list.'''
	return list(readJsonlAll(source))

class EmbeddingTable:
	'''
	Precomputed token embeddings keyed by document key and document-level
	token index.
	
	:param dimension: the length of every vector
	'''
	
	def __init__(self, dimension):
		if dimension < 1:
			raise DimensionError('embedding dimension must be positive')
		self.dimension = dimension
		self._vectors = {}
	
	def __len__(self):
		return len(self._vectors)
	
	def __contains__(self, key):
		return key in self._vectors
	
	def items(self):
		return self._vectors.items()
	
	def add(self, docKey, token, vector):
		vector = np.asarray(vector, dtype=np.float64)
		if vector.shape != (self.dimension,):
			raise DimensionError('expected an embedding of dimension {}, got '
				'shape {}'.format(self.dimension, vector.shape))
		self._vectors[(docKey, int(token))] = vector
	
	def lookup(self, docKey, token):
		try:
			return self._vectors[(docKey, token)]
		except KeyError:
			raise MissingEmbeddingError(docKey, token)
	
	def matrix(self, doc):
		'''Return the (tokens, dimension) embedding matrix of a document.'''
		if not doc.tokenCount:
			return np.zeros((0, self.dimension))
		return np.stack([self.lookup(doc.docKey, t)
			for t in range(doc.tokenCount)])
	
	def checkCoverage(self, docs):
		'''
		Raise :class:`MissingEmbeddingError` for the first token of the
		documents without an embedding.
		'''
		for doc in docs:
			for t in range(doc.tokenCount):
				if (doc.docKey, t) not in self._vectors:
					raise MissingEmbeddingError(doc.docKey, t)

def saveEmbeddings(table, target):
	'''
	Write an embedding table in the binary embedding format.
	
	:param table: the :class:`EmbeddingTable`
	:param target: a path or a binary file object
	'''
	with contextlib.ExitStack() as stack:
		f = target
		if isinstance(target, (str, Path)):
			f = stack.enter_context(open(target, 'wb'))
		f.write(EMBEDDING_MAGIC)
		f.write(struct.pack('<IIQ', EMBEDDING_VERSION, table.dimension,
			len(table)))
		for (docKey, token), vector in table.items():
			encoded = docKey.encode('utf-8')
			f.write(struct.pack('<H', len(encoded)))
			f.write(encoded)
			f.write(struct.pack('<I', token))
			f.write(vector.astype('<f8').tobytes())

def _read(f, size):
	data = f.read(size)
	if len(data) != size:
		raise FormatError('truncated embedding file')
	return data

def loadEmbeddings(source):
	'''
	Read an embedding table from the binary embedding format.
	
	:param source: a path or a binary file object
	'''
	with contextlib.ExitStack() as stack:
		f = source
		if isinstance(source, (str, Path)):
			f = stack.enter_context(open(source, 'rb'))
		if f.read(4) != EMBEDDING_MAGIC:
			raise FormatError('not an embedding file')
		version, dimension, count = struct.unpack('<IIQ', _read(f, 16))
		if version != EMBEDDING_VERSION:
			raise FormatError('unsupported embedding version {}'.format(version))
		table = EmbeddingTable(dimension)
		for _ in range(count):
			keyLength, = struct.unpack('<H', _read(f, 2))
			docKey = _read(f, keyLength).decode('utf-8')
			token, = struct.unpack('<I', _read(f, 4))
			vector = np.frombuffer(_read(f, 8 * dimension), dtype='<f8')
			table.add(docKey, token, vector)
		if f.read(1):
			raise FormatError('trailing bytes after {} embedding records'.format(
				count))
	logger.info('loaded %d embeddings of dimension %d', len(table), dimension)
	return table

def _hashedVector(dimension, *key):
	digest = hashlib.sha256('\x1f'.join(map(str, key)).encode('utf-8')).digest()
	rng = np.random.default_rng(int.from_bytes(digest[:8], 'little'))
	return rng.standard_normal(dimension) / np.sqrt(dimension)

def hashEmbeddings(docs, dimension, seed=0, bucketSize=16, positionScale=0.1):
	'''
	Build deterministic stand-in embeddings: every token gets the hashed
	vector of its lowercased word type plus a small hashed component of its
	position bucket.
	
	:param docs: the documents to cover
	:param dimension: the embedding dimension
	:param seed: the seed mixed into every hash
	:param bucketSize: the number of consecutive tokens sharing a bucket
	:param positionScale: the weight of the positional component
	'''
	table = EmbeddingTable(dimension)
	types = {}
	for doc in docs:
		for t, token in enumerate(doc.tokens):
			word = token.lower()
			if word not in types:
				types[word] = _hashedVector(dimension, seed, word)
			bucket = t // bucketSize
			table.add(doc.docKey, t, types[word] + positionScale *
				_hashedVector(dimension, seed, word, bucket))
	return table

def _synthNames(cfg, rng):
	'''Draw distinct name types, with distinct pronoun classes if possible.'''
	classes = cfg.pronoun_classes
	if cfg.entities <= classes:
		wanted = rng.choice(classes, cfg.entities, replace=False)
	else:
		wanted = rng.integers(0, classes, cfg.entities)
	names = []
	for c in wanted:
		candidates = [k for k in range(cfg.vocab_size)
			if k % classes == c and k not in names]
		if not candidates:
			candidates = [k for k in range(cfg.vocab_size) if k not in names]
		names.append(int(rng.choice(candidates)))
	return names

def _synthDocument(cfg, rng, index):
	names = _synthNames(cfg, rng)
	nameTokens = []
	for k in names:
		width = int(rng.integers(1, cfg.max_name_width + 1))
		nameTokens.append(['name{}'.format(k)] +
			['name{}x{}'.format(k, w) for w in range(1, width)])
	order = np.repeat(np.arange(cfg.entities), cfg.mentions)
	rng.shuffle(order)
	sentences, clusters, introduced = [], [[] for _ in names], set()
	position = 0
	for entity in order:
		if entity in introduced and rng.random() < cfg.pronoun_rate:
			mention = [PRONOUNS[names[entity] % cfg.pronoun_classes]]
		else:
			mention = nameTokens[entity]
		introduced.add(entity)
		before = int(rng.integers(0, cfg.max_filler + 1))
		after = int(rng.integers(0, cfg.max_filler + 1))
		if before + after == 0:
			after = 1
		fill = lambda n: ['w{}'.format(int(k)) for k in
			rng.integers(0, cfg.vocab_size, n)]
		sentence = fill(before) + mention + fill(after)
		start = position + before
		clusters[entity].append((start, start + len(mention) - 1))
		sentences.append(sentence)
		position += len(sentence)
	speakers = ['spk0'] * position
	return Document('synth/{:04d}_0'.format(index), 'nw', sentences, speakers,
		clusters)

def generateSynthetic(cfg):
	'''
	Generate a synthetic corpus. Every entity is introduced by its name and
	later referenced by its name or by the pronoun of its name class; the
	gold clusters are exactly these mentions.
	
	:param cfg: a :class:`acoref.config.SynthConfig`
	'''
	rng = np.random.default_rng(cfg.seed)
	return [_synthDocument(cfg, rng, i) for i in range(cfg.documents)]

def readCorpus(path):
	'''
	Read the documents of a JSONL file (``.jsonl`` suffix) or of a
	CoNLL-2012 file (any other suffix).
	'''
	if Path(path).suffix == '.jsonl':
		return readJsonl(path)
	return parseConll(path)
