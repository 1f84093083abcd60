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
Module to train the resolver with the actor-critic method.

Each document is one episode. Its transitions give the actor and critic
losses, the detection loss over all candidate spans is added to both and
the pair scorer additionally learns from sampled gold pairs. All of it is
minimized with a single optimizer step per document.
'''

import dataclasses
import json
import logging
import statistics
from collections import namedtuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from . import autograd as ag
from .autograd import Tensor
from .decoder import evaluate
from .env import Action
from .exceptions import ContractViolation
from .model import CorefModel, runEpisode
from .nn import Adam, binaryCrossEntropy
from .spans import detectionLoss, pruneIndices

logger = logging.getLogger(__name__)

TrainResult = namedtuple('TrainResult', 'model losses history')

def creditedReward(reward, action, credit='decision', sentinel=False):
	'''
	The reward an action is trained with.
	
	``'decision'`` credit treats every step at a real candidate as a
	decision on that pair: linking is charged the pair reward when it is
	negative, passing on the pair is charged it when it is positive, and
	correct decisions as well as sentinel steps receive 0. With ``'link'``
	credit only the action storing the pair receives the pair reward, with
	``'state'`` credit every action receives the reward of its state.
	
	:param reward: the decayed score of the state the action was taken in
	:param action: the :class:`acoref.env.Action`
	:param credit: one of ``'decision'``, ``'link'`` and ``'state'``
	:param sentinel: whether the antecedent of the state is the sentinel
	'''
	if credit == 'state':
		return reward
	if credit == 'link':
		return reward if action == Action.LINK_AND_ADVANCE else 0.0
	if credit != 'decision':
		raise ValueError('unknown reward credit {!r}'.format(credit))
	if sentinel:
		return 0.0
	if action == Action.LINK_AND_ADVANCE:
		return min(reward, 0.0)
	return -max(reward, 0.0)

def actorCriticLosses(transition, gammaRl):
	'''
	The losses of one transition with the one-step advantage
	A = r + gamma V(s') - V(s).
	
	:param transition: the :class:`acoref.model.Transition`
	:param gammaRl: the discount factor
	:returns: the actor loss -log pi(a|s) A, with A held constant, and the
		critic loss A^2
	'''
	nextValue = 0.0
	if not transition.terminal and transition.nextValue is not None:
		nextValue = transition.nextValue
	advantage = ag.sub(ag.add(ag.mul(nextValue, gammaRl), transition.reward),
		transition.value)
	actor = ag.mul(transition.logProb, -float(advantage.data))
	critic = ag.mul(advantage, advantage)
	return actor, critic

def jointLosses(actorLoss, criticLoss, detectLoss, enabled=True):
	'''
	Add the detection loss to the actor and the critic loss, unless it is
	disabled.
	'''
	if not enabled or detectLoss is None:
		return actorLoss, criticLoss
	return actorLoss + detectLoss, criticLoss + detectLoss

def updateLoss(actorLoss, criticLoss, auxiliaryLoss):
	'''
	The single objective of a document update. The actor and critic losses
	each hold the detection loss when it is enabled, so their mean counts
	it once.
	'''
	return (actorLoss + criticLoss) * 0.5 + auxiliaryLoss

def samplePairs(spans, clusters, maxAntecedents, negativeRatio, rng):
	'''
	Collect the mention pairs within the antecedent window, all coreferent
	ones and at most ``negativeRatio`` non-coreferent ones per coreferent
	one (at least ``negativeRatio`` in total).
	
	:param spans: the mentions in document order
	:param clusters: the gold clusters
	:returns: the current and antecedent positions in ``spans`` and the
		labels, sorted by position
	'''
	clusterOf = {span: k for k, cluster in enumerate(clusters)
		for span in cluster}
	positives, negatives = [], []
	for a in range(len(spans)):
		ka = clusterOf.get(spans[a].astuple())
		for b in range(max(0, a - maxAntecedents), a):
			if ka is not None and ka == clusterOf.get(spans[b].astuple()):
				positives.append((a, b, 1.0))
			else:
				negatives.append((a, b, 0.0))
	cap = negativeRatio * max(1, len(positives))
	if len(negatives) > cap:
		chosen = rng.choice(len(negatives), cap, replace=False)
		negatives = [negatives[k] for k in chosen]
	rows = sorted(positives + negatives)
	if not rows:
		empty = np.zeros(0, dtype=np.intp)
		return empty, empty, np.zeros(0)
	current, antecedent, labels = zip(*rows)
	return np.array(current, dtype=np.intp), np.array(antecedent,
		dtype=np.intp), np.array(labels)

def scorerAuxiliaryLoss(scorer, mi, mj, pairFeatures, labels):
	'''
	The mean binary cross-entropy of sigmoid(undecayed pair score) against
	gold coreference of the pairs.
	
	:param scorer: the :class:`acoref.env.RewardScorer`
	:param mi: the (pairs, span dim) vectors of the current mentions
	:param mj: those of the antecedents
	:param pairFeatures: the (pairs, pair dim) features
	:param labels: 1 for coreferent pairs, else 0
	'''
	if not len(labels):
		return Tensor(0.0)
	logits = scorer.score(mi, mj, pairFeatures)
	return ag.mean(binaryCrossEntropy(logits, labels))

def episodeLosses(transitions, config):
	'''The mean actor and critic losses over the transitions of an episode.'''
	actor, critic = Tensor(0.0), Tensor(0.0)
	for t in transitions:
		credited = dataclasses.replace(t, reward=creditedReward(t.reward,
			t.action, config.reward_credit, t.sentinel))
		a, c = actorCriticLosses(credited, config.gamma_rl)
		if config.entropy_weight and t.entropy is not None:
			a = a - config.entropy_weight * t.entropy
		actor, critic = actor + a, critic + c
	scale = 1.0 / max(1, len(transitions))
	return actor * scale, critic * scale

def trainDocument(model, optimizer, doc, embeddings, rng):
	'''
	Run one sampled episode over a document and update every parameter
	once.
	
	:returns: a dict of the loss values, None for documents without tokens
	'''
	config = model.config
	model.train()
	encoding = model.encode(doc, embeddings)
	if not encoding.spans:
		logger.warning('skipping document %s without tokens', doc.docKey)
		return None
	keep = pruneIndices(encoding.spans, encoding.logits.data,
		config.prune_ratio, doc.tokenCount)
	spans = [encoding.spans[k] for k in keep]
	vectors = encoding.vectors.data[keep]
	table = model.pairTable(doc, spans, vectors)
	record, transitions = runEpisode(model, table, vectors, 'sample', rng,
		learn=True)
	detect = None
	if config.detection_loss:
		detect = detectionLoss(encoding.spans, encoding.logits, doc.clusters)
	actor, critic = jointLosses(*episodeLosses(transitions, config), detect,
		config.detection_loss)
	current, antecedent, labels = samplePairs(spans, doc.clusters,
		config.max_antecedents, config.negative_ratio, rng)
	pruned = ag.take(encoding.vectors, keep)
	auxiliary = scorerAuxiliaryLoss(model.scorer, ag.take(pruned, current),
		ag.take(pruned, antecedent), model.pairFeatures(doc, spans,
		current + 1, antecedent + 1), labels)
	total = updateLoss(actor, critic, auxiliary)
	optimizer.zeroGrad()
	ag.backward(total)
	optimizer.step()
	losses = {
		'actor': actor.item(),
		'critic': critic.item(),
		'detection': detect.item() if detect is not None else 0.0,
		'auxiliary': auxiliary.item(),
		'total': total.item(),
		'steps': len(record.steps),
		'links': len(record.links),
	}
	logger.debug('%s: %d mentions, %d steps, %d links, loss %.4f', doc.docKey,
		len(spans), losses['steps'], losses['links'], losses['total'])
	return losses

def _epochRecord(epoch, losses, model, dev, embeddings, threads):
	record = {'epoch': epoch}
	if dev:
		report, recall = evaluate(dev, model, embeddings, threads)
		record.update({
			'muc_f1': report.muc_f1,
			'b3_f1': report.b3_f1,
			'ceaf_f1': report.ceaf_f1,
			'avg_f1': report.avg_f1,
			'mention_det_acc': recall,
		})
	record['loss'] = float(np.mean(losses)) if losses else 0.0
	return record

def train(docs, embeddings, config, dev=None, checkpoint=None,
		metricsPath=None, threads=1, embedding=None):
	'''
	Train a resolver. After every epoch the development documents are
	decoded greedily and scored; the parameters of the best epoch by
	average F1 are kept, the last ones if there are no development
	documents.
	
	:param docs: the training documents
	:param embeddings: the :class:`acoref.corpus.EmbeddingTable` covering
		the training and development documents
	:param config: the :class:`acoref.config.TrainConfig`
	:param dev: optional development documents
	:param checkpoint: optional path the model is saved to
	:param metricsPath: optional JSONL file receiving one record per epoch
	:param threads: the number of decoding threads for evaluation
	:param embedding: the embedding settings stored with the model
	:returns: a :class:`TrainResult` with the model, the loss of every
		update and the per-epoch records
	'''
	docs = list(docs)
	if not docs:
		raise ContractViolation('cannot train on an empty corpus')
	embeddings.checkCoverage(docs + list(dev or []))
	model = CorefModel(config, embeddings.dimension, embedding)
	optimizer = Adam(model.parameters(), config.learning_rate, config.beta1,
		config.beta2, config.eps)
	rng = np.random.default_rng([config.seed, 1])
	losses, best = [], None
	metrics = open(metricsPath, 'w') if metricsPath else None
	try:
		for epoch in range(1, config.epochs + 1):
			epochLosses = []
			for k in rng.permutation(len(docs)):
				result = trainDocument(model, optimizer, docs[k], embeddings,
					rng)
				if result is not None:
					epochLosses.append(result['total'])
			losses.extend(epochLosses)
			record = _epochRecord(epoch, epochLosses, model, dev, embeddings,
				threads)
			model.history.append(record)
			if metrics:
				metrics.write(json.dumps(record) + '\n')
				metrics.flush()
			logger.info('epoch %d: %s', epoch, ', '.join('{} {}'.format(k,
				v if not isinstance(v, float) else round(v, 4))
				for k, v in record.items() if k != 'epoch'))
			if dev and (best is None or record['avg_f1'] > best[0]):
				best = (record['avg_f1'], {name: p.data.copy() for name, p in
					model.namedParameters()})
	finally:
		if metrics:
			metrics.close()
	if best is not None:
		for name, param in model.namedParameters():
			param.data[...] = best[1][name]
		logger.info('kept the parameters of the best epoch, avg F1 %.4f',
			best[0])
	if checkpoint:
		model.save(checkpoint)
	return TrainResult(model, losses, model.history)

class AblationRun(BaseModel):
	model_config = ConfigDict(extra='forbid')
	
	seed: int
	detection_loss: bool
	avg_f1: float

class AblationReport(BaseModel):
	'''The paired runs of the detection loss ablation.'''
	model_config = ConfigDict(extra='forbid')
	
	runs: list[AblationRun]
	joint_avg_f1: float
	ablated_avg_f1: float
	difference: float

def ablationRun(docs, embeddings, config, dev=None, seeds=None, threads=1):
	'''
	Train with and without the detection loss for every seed, all other
	settings matched, and compare the median average F1 of both variants
	on the development documents (the training documents if there are
	none).
	
	:returns: an :class:`AblationReport`
	'''
	docs = list(docs)
	target = list(dev) if dev else docs
	runs = []
	for seed in (seeds if seeds is not None else [config.seed]):
		for enabled in (True, False):
			variant = config.model_copy(update={'seed': seed,
				'detection_loss': enabled})
			result = train(docs, embeddings, variant, dev, threads=threads)
			report, _ = evaluate(target, result.model, embeddings, threads)
			logger.info('seed %d with%s detection loss: avg F1 %.4f', seed,
				'' if enabled else 'out', report.avg_f1)
			runs.append(AblationRun(seed=seed, detection_loss=enabled,
				avg_f1=report.avg_f1))
	joint = statistics.median(r.avg_f1 for r in runs if r.detection_loss)
	ablated = statistics.median(r.avg_f1 for r in runs if not r.detection_loss)
	return AblationReport(runs=runs, joint_avg_f1=joint, ablated_avg_f1=ablated,
		difference=joint - ablated)
