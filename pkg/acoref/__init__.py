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
A library to resolve coreference with an actor-critic mention-pair model.

Documents are read from CoNLL-2012 or JSONL files, their tokens are
represented by precomputed (or hashed) embeddings and a trained model links
every mention to an antecedent or to none, forming entity clusters.
'''

from .config import RunConfig, SynthConfig, TrainConfig, loadRunConfig
from .corpus import Document, EmbeddingTable, generateSynthetic, \
	hashEmbeddings, loadEmbeddings, parseConll, parseConllAll, readCorpus, \
	readJsonl, readJsonlAll, saveEmbeddings, writeConll, writeJsonl
from .decoder import decode, decodeAll, evaluate, mentionDetectionByWidth
from .exceptions import AcorefError
from .metrics import MetricReport, avgF1, bCubed, ceafPhi4, muc
from .model import CorefModel
from .trainer import ablationRun, train
from .version import __version__

def resolveAll(docs, model, embeddings, threads=1):
	'''
	Yield the predicted clusters of every document.
	
	:param docs: the documents to resolve
	:param model: a :class:`CorefModel` or the path of a checkpoint
	:param embeddings: the token embeddings of the documents
	:param threads: the number of decoding threads
	'''
	if not isinstance(model, CorefModel):
		model = CorefModel.load(model)
	for _, clusters in decodeAll(docs, model, embeddings, threads):
		yield clusters

def resolve(doc, model, embeddings):
	'''
	Predict the clusters of a single document.
	
	:param doc: the document to resolve
	:param model: a :class:`CorefModel` or the path of a checkpoint
	:param embeddings: the token embeddings of the document
	'''
	try:
		return next(resolveAll([doc], model, embeddings))
	except StopIteration:
		return
