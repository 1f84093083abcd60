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

'''Exceptions raised by the library.'''

class AcorefError(ValueError):
	'''Base class of every error raised on bad input or misuse.'''

class DimensionError(AcorefError):
	'''Raised if the shapes of two operands do not agree.'''

class FormatError(AcorefError):
	'''Raised if a file does not follow the expected format.'''

class ConllParseError(FormatError):
	'''
	Raised if the coreference brackets of a CoNLL file are unbalanced.
	
	:param message: the error description
	:param lineno: the 1-based line number the error was detected at
	'''
	def __init__(self, message, lineno):
		super().__init__('line {}: {}'.format(lineno, message))
		self.lineno = lineno

class MissingEmbeddingError(AcorefError):
	'''
	Raised if a token has no precomputed embedding.
	
	:param docKey: the document key looked up
	:param token: the document-level token index looked up
	'''
	def __init__(self, docKey, token):
		super().__init__('no embedding for token {} of document {!r}'.format(
			token, docKey))
		self.docKey = docKey
		self.token = token

class ContractViolation(AcorefError):
	'''Raised if a precondition of an operation does not hold.'''

class ConfigError(AcorefError):
	'''Raised if a run configuration is invalid.'''
