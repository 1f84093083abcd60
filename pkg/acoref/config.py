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
Module defining the validated configurations of training runs and of the
synthetic corpus generator.
'''

import json
import os
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, \
	model_validator

from .exceptions import ConfigError

THREADS_VARIABLE = 'ACOREF_THREADS'
RUN_PATHS = ('train_corpus', 'dev_corpus', 'embeddings', 'checkpoint',
	'output_dir')

class TrainConfig(BaseModel):
	'''The hyperparameters of the actor-critic resolver.'''
	model_config = ConfigDict(extra='forbid')
	
	gamma_rl: float = Field(0.95, ge=0.0, le=1.0)
	gamma_decay: float = Field(0.5, gt=0.0, lt=1.0)
	learning_rate: float = Field(1e-3, gt=0.0)
	beta1: float = Field(0.9, ge=0.0, lt=1.0)
	beta2: float = Field(0.999, ge=0.0, lt=1.0)
	eps: float = Field(1e-8, gt=0.0)
	epochs: int = Field(20, ge=1)
	max_span_width: int = Field(10, ge=1)
	max_antecedents: int = Field(250, ge=1)
	prune_ratio: float = Field(0.4, gt=0.0, le=1.0)
	dropout: float = Field(0.5, ge=0.0, lt=1.0)
	feature_dim: int = Field(20, ge=1)
	lstm_hidden: int = Field(200, ge=1)
	ffnn_hidden: int = Field(150, ge=1)
	scorer_dim: int = Field(150, ge=1)
	detection_loss: bool = True
	entropy_weight: float = Field(0.0, ge=0.0)
	negative_ratio: int = Field(3, ge=1)
	reward_credit: Literal['decision', 'link', 'state'] = 'decision'
	score_feature: bool = True
	seed: int = 0

class SynthConfig(BaseModel):
	'''The shape of a generated synthetic corpus.'''
	model_config = ConfigDict(extra='forbid')
	
	vocab_size: int = Field(50, ge=1)
	documents: int = Field(100, ge=1)
	entities: int = Field(3, ge=1)
	mentions: int = Field(4, ge=1)
	pronoun_rate: float = Field(0.5, ge=0.0, le=1.0)
	seed: int = 0
	max_name_width: int = Field(1, ge=1)
	pronoun_classes: int = Field(4, ge=1, le=4)
	max_filler: int = Field(3, ge=1)
	
	@model_validator(mode='after')
	def _enoughNames(self):
		if self.vocab_size < self.entities:
			raise ValueError('vocab_size must be at least the number of entities')
		return self

class RunConfig(BaseModel):
	'''
	A training run: the hyperparameters plus the input and output paths.
	Exactly one of ``embeddings`` and ``hash_dim`` selects the token
	embeddings.
	'''
	model_config = ConfigDict(extra='forbid')
	
	train_corpus: Path
	dev_corpus: Optional[Path] = None
	embeddings: Optional[Path] = None
	hash_dim: Optional[int] = Field(None, ge=1)
	hash_seed: int = 0
	checkpoint: Path
	output_dir: Path
	threads: Optional[int] = Field(None, ge=1)
	train: TrainConfig = Field(default_factory=TrainConfig)
	
	@model_validator(mode='after')
	def _oneEmbeddingSource(self):
		if (self.embeddings is None) == (self.hash_dim is None):
			raise ValueError('set exactly one of embeddings and hash_dim')
		return self
	
	def validatePaths(self):
		'''
		Check that every input exists and every output location can be
		created, before any file is written.
		'''
		inputs = [self.train_corpus, self.dev_corpus, self.embeddings]
		for path in inputs:
			if path is not None and not path.is_file():
				raise ConfigError('no such file: {}'.format(path))
		for path in [self.checkpoint.parent, self.output_dir]:
			existing = path
			while not existing.exists():
				existing = existing.parent
			if not existing.is_dir() or not os.access(existing, os.W_OK):
				raise ConfigError('cannot write to {}'.format(path))
		return self
	
	def relativeTo(self, base):
		'''A copy with the relative paths taken relative to ``base``.'''
		base = Path(base)
		update = {}
		for name in RUN_PATHS:
			path = getattr(self, name)
			if path is not None and not path.is_absolute():
				update[name] = base / path
		return self.model_copy(update=update)

def loadRunConfig(path, **overrides):
	'''
	Read and validate a JSON run configuration. Relative paths in it are
	taken relative to the directory of the configuration file.
	
	:param path: the configuration file
	:param overrides: keys of the nested ``train`` section to override,
		values of None are ignored
	'''
	try:
		with open(path) as f:
			raw = json.load(f)
	except (OSError, json.JSONDecodeError) as e:
		raise ConfigError('cannot read configuration {}: {}'.format(path, e))
	if not isinstance(raw, dict):
		raise ConfigError('configuration {} is not a JSON object'.format(path))
	train = dict(raw.get('train') or {})
	train.update({k: v for k, v in overrides.items() if v is not None})
	raw['train'] = train
	try:
		config = RunConfig(**raw)
	except ValidationError as e:
		raise ConfigError('invalid configuration {}:\n{}'.format(path, e))
	return config.relativeTo(Path(path).parent)

def defaultThreads():
	'''The worker count taken from the environment, 1 if unset.'''
	try:
		return max(1, int(os.environ.get(THREADS_VARIABLE, '1')))
	except ValueError:
		raise ConfigError('{} must be an integer'.format(THREADS_VARIABLE))
