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
Module providing the layers, the optimizer and the checkpoint format used
by the networks of the resolver.
'''

import contextlib
import logging
import struct

import numpy as np
from scipy.special import expit

from . import autograd as ag
from .autograd import Parameter, Tensor
from .exceptions import DimensionError, FormatError

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b'ACNC'
CHECKPOINT_VERSION = 1

def glorotUniform(rng, shape):
	'''
	Draw a matrix from uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
	Vectors are treated as matrices with a single output.
	
	:param rng: a numpy random generator
	:param shape: the shape of the parameter
	'''
	fanIn = shape[0]
	fanOut = shape[1] if len(shape) > 1 else 1
	bound = np.sqrt(6.0 / (fanIn + fanOut))
	return rng.uniform(-bound, bound, size=shape)

class Module:
	'''
	Base class of every component holding parameters. Parameters and
	submodules are discovered from the instance attributes in definition
	order, which fixes the checkpoint layout.
	'''
	training = True
	
	def namedParameters(self, prefix=''):
		for name, value in vars(self).items():
			if isinstance(value, Parameter):
				yield prefix + name, value
			elif isinstance(value, Module):
				yield from value.namedParameters(prefix + name + '.')
			elif isinstance(value, (list, tuple)):
				for i, item in enumerate(value):
					if isinstance(item, Module):
						yield from item.namedParameters(
							'{}{}.{}.'.format(prefix, name, i))
	
	def parameters(self):
		return [param for _, param in self.namedParameters()]
	
	def modules(self):
		yield self
		for value in vars(self).values():
			if isinstance(value, Module):
				yield from value.modules()
			elif isinstance(value, (list, tuple)):
				for item in value:
					if isinstance(item, Module):
						yield from item.modules()
	
	def train(self, mode=True):
		for module in self.modules():
			module.training = mode
		return self
	
	def eval(self):
		return self.train(False)
	
	@contextlib.contextmanager
	def evaluating(self):
		'''Temporarily switch every submodule to evaluation mode.'''
		modes = [(module, module.training) for module in self.modules()]
		self.eval()
		try:
			yield self
		finally:
			for module, mode in modes:
				module.training = mode
	
	def zeroGrad(self):
		zeroGrad(self.parameters())

def zeroGrad(params):
	for param in params:
		param.zeroGrad()

class Linear(Module):
	'''
	An affine map x W + b.
	
	:param inDim: the input width
	:param outDim: the output width
	:param rng: the random generator used for the initialization
	'''
	
	def __init__(self, inDim, outDim, rng):
		self.weight = Parameter(glorotUniform(rng, (inDim, outDim)), 'weight')
		self.bias = Parameter(np.zeros(outDim), 'bias')
	
	@property
	def inDim(self):
		return self.weight.shape[0]
	
	@property
	def outDim(self):
		return self.weight.shape[1]
	
	def __call__(self, x):
		if x.shape[-1] != self.inDim:
			raise DimensionError('layer expects width {}, got shape {}'.format(
				self.inDim, x.shape))
		return ag.add(ag.matmul(x, self.weight), self.bias)

def ffLayer(x, layer):
	'''
	Apply one feed-forward layer with a ReLU activation.
	
	:param x: a vector or a matrix with one row per input
	:param layer: the :class:`Linear` parameters of the layer
	'''
	return ag.relu(layer(x))

def dropout(x, rate, training, rng):
	'''
	Zero each entry with probability ``rate`` and scale the survivors by
	1 / (1 - rate), so evaluation is a plain forward pass.
	
	:param x: the input tensor
	:param rate: the drop probability in [0, 1)
	:param training: whether dropout is active
	:param rng: the random generator drawing the mask
	'''
	if not training or rate <= 0.0:
		return x
	keep = rng.random(x.shape) >= rate
	return ag.mul(x, keep / (1.0 - rate))

class FeedForward(Module):
	'''
	Two stacked ReLU layers forming one feed-forward block, with dropout
	between them.
	'''
	
	def __init__(self, inDim, hidden, outDim, rng, rate=0.0):
		self.hidden = Linear(inDim, hidden, rng)
		self.output = Linear(hidden, outDim, rng)
		self.rate = rate
		self.rng = rng
	
	def __call__(self, x):
		h = ffLayer(x, self.hidden)
		h = dropout(h, self.rate, self.training, self.rng)
		return ffLayer(h, self.output)

def lstmCell(x, hPrev, cPrev, weight, bias):
	'''
	Compute one LSTM step with the gates stacked as input, forget, output
	and candidate in a single (in + hidden) x 4 hidden weight matrix.
	
	:param x: the input vector
	:param hPrev: the previous hidden state
	:param cPrev: the previous cell state
	:param weight: the stacked gate weights
	:param bias: the stacked gate biases
	:returns: the new hidden and cell state
	'''
	size = hPrev.shape[-1]
	if x.ndim != 1 or hPrev.shape != (size,) or cPrev.shape != (size,) or \
			weight.shape != (x.shape[0] + size, 4 * size) or \
			bias.shape != (4 * size,):
		raise DimensionError(
			'LSTM cell got input {}, states {} and {}, weights {} and {}'.format(
			x.shape, hPrev.shape, cPrev.shape, weight.shape, bias.shape))
	xh = np.concatenate([x.data, hPrev.data])
	gates = xh @ weight.data + bias.data
	i = expit(gates[:size])
	f = expit(gates[size:2 * size])
	o = expit(gates[2 * size:3 * size])
	g = np.tanh(gates[3 * size:])
	c = f * cPrev.data + i * g
	tc = np.tanh(c)
	h = o * tc
	def backward(grad):
		gh, gc = grad[:size], grad[size:]
		dc = gc + gh * o * (1.0 - tc * tc)
		dGates = np.concatenate([
			dc * g * i * (1.0 - i),
			dc * cPrev.data * f * (1.0 - f),
			gh * tc * o * (1.0 - o),
			dc * i * (1.0 - g * g),
		])
		dxh = weight.data @ dGates
		return (
			dxh[:x.shape[0]],
			dxh[x.shape[0]:],
			dc * f,
			np.outer(xh, dGates),
			dGates,
		)
	hc = Tensor(np.concatenate([h, c]), parents=(x, hPrev, cPrev, weight,
		bias), backward=backward)
	return hc[:size], hc[size:]

def lstmSequence(xs, weight, bias):
	'''
	Run an LSTM from zero states over the rows of ``xs`` as one operation.
	The backward pass walks the steps in reverse and collects the weight
	gradient of all steps with a single product.

	:param xs: the (steps, in) inputs
	:param weight: the stacked gate weights, see :func:`lstmCell`
	:param bias: the stacked gate biases
	:returns: the (steps, hidden) hidden states
	'''
	size = bias.shape[0] // 4
	if xs.ndim != 2 or bias.ndim != 1 or bias.shape[0] != 4 * size or \
			weight.shape != (xs.shape[1] + size, 4 * size):
		raise DimensionError('LSTM sequence got inputs {}, weights {} and '
			'{}'.format(xs.shape, weight.shape, bias.shape))
	steps, inDim = xs.shape
	recurrent = weight.data[inDim:]
	projected = xs.data @ weight.data[:inDim] + bias.data
	hs = np.zeros((steps + 1, size))
	cs = np.zeros((steps + 1, size))
	gates = np.empty((steps, 4 * size))
	for t in range(steps):
		pre = projected[t] + hs[t] @ recurrent
		gates[t, :3 * size] = expit(pre[:3 * size])
		gates[t, 3 * size:] = np.tanh(pre[3 * size:])
		i, f, o, g = np.split(gates[t], 4)
		cs[t + 1] = f * cs[t] + i * g
		hs[t + 1] = o * np.tanh(cs[t + 1])
	tcs = np.tanh(cs[1:])
	def backward(grad):
		dGates = np.empty_like(gates)
		dh = np.zeros(size)
		dc = np.zeros(size)
		for t in reversed(range(steps)):
			i, f, o, g = np.split(gates[t], 4)
			gh = grad[t] + dh
			dc = dc + gh * o * (1.0 - tcs[t] * tcs[t])
			dGates[t] = np.concatenate([
				dc * g * i * (1.0 - i),
				dc * cs[t] * f * (1.0 - f),
				gh * tcs[t] * o * (1.0 - o),
				dc * i * (1.0 - g * g),
			])
			dh = recurrent @ dGates[t]
			dc = dc * f
		xh = np.concatenate([xs.data, hs[:-1]], axis=1)
		return (
			dGates @ weight.data[:inDim].T if xs.requiresGrad else None,
			xh.T @ dGates,
			dGates.sum(axis=0),
		)
	return Tensor(hs[1:].copy(), parents=(xs, weight, bias), backward=backward)

class LSTMCell(Module):

	def __init__(self, inDim, hidden, rng):
		self.weight = Parameter(glorotUniform(rng, (inDim + hidden,
			4 * hidden)), 'weight')
		self.bias = Parameter(np.zeros(4 * hidden), 'bias')
		self.size = hidden

	def initialState(self):
		return Tensor(np.zeros(self.size)), Tensor(np.zeros(self.size))

	def __call__(self, x, state):
		return lstmCell(x, state[0], state[1], self.weight, self.bias)

	def sequence(self, xs):
		'''The hidden states of a whole input sequence, from zero states.'''
		return lstmSequence(xs, self.weight, self.bias)

class Embedding(Module):
	'''
	A learned lookup table.
	
	:param rows: the number of categorical values
	:param dim: the embedding width
	'''
	
	def __init__(self, rows, dim, rng):
		self.table = Parameter(glorotUniform(rng, (rows, dim)), 'table')
	
	@property
	def dim(self):
		return self.table.shape[1]
	
	def __call__(self, ids):
		return ag.take(self.table, ids)

def biaffine(left, right, matrix):
	'''
	Row-wise bilinear form left^T U right.
	
	:param left: a (k,) vector or an (n, k) matrix
	:param right: same shape as ``left``
	:param matrix: the (k, k) matrix U
	'''
	if left.shape != right.shape:
		raise DimensionError('biaffine operands {} and {} differ'.format(
			left.shape, right.shape))
	return ag.reduceSum(ag.mul(ag.matmul(left, matrix), right), axis=-1)

def binaryCrossEntropy(logits, targets):
	'''
	Elementwise -[y log sigmoid(x) + (1 - y) log(1 - sigmoid(x))], computed
	from the logits without overflow.
	
	:param logits: the logit tensor
	:param targets: an array of labels in [0, 1] of the same shape
	'''
	targets = np.asarray(targets, dtype=np.float64)
	if targets.shape != logits.shape:
		raise DimensionError('logits {} and targets {} differ'.format(
			logits.shape, targets.shape))
	x = logits.data
	out = np.maximum(x, 0.0) - x * targets + np.log1p(np.exp(-np.abs(x)))
	return Tensor(out, parents=(logits,),
		backward=lambda grad: (grad * (expit(x) - targets),))

class Adam:
	'''
	The Adam optimizer with bias correction.
	
	:param params: the parameters to update, only trainable ones are touched
	:param lr: the learning rate
	:param beta1: the decay of the first moment
	:param beta2: the decay of the second moment
	:param eps: the term added to the denominator
	'''
	
	def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
		self.params = [p for p in params if p.trainable]
		self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
		self.moments = [np.zeros_like(p.data) for p in self.params]
		self.velocities = [np.zeros_like(p.data) for p in self.params]
		self.stepCount = 0
	
	def zeroGrad(self):
		zeroGrad(self.params)
	
	def step(self):
		'''Apply one update in-place using the populated gradients.'''
		self.stepCount += 1
		correction1 = 1.0 - self.beta1 ** self.stepCount
		correction2 = 1.0 - self.beta2 ** self.stepCount
		for param, m, v in zip(self.params, self.moments, self.velocities):
			grad = param.grad
			m *= self.beta1
			m += (1.0 - self.beta1) * grad
			v *= self.beta2
			v += (1.0 - self.beta2) * grad * grad
			mHat = m / correction1
			vHat = v / correction2
			param.data -= self.lr * mHat / (np.sqrt(vHat) + self.eps)

def writeCheckpoint(fileobj, namedArrays):
	'''
	Write named arrays in the binary checkpoint format.
	
	:param fileobj: a binary file object
	:param namedArrays: iterable of (name, array) pairs
	'''
	fileobj.write(CHECKPOINT_MAGIC)
	fileobj.write(struct.pack('<I', CHECKPOINT_VERSION))
	for name, array in namedArrays:
		array = np.asarray(array, dtype='<f8')
		encoded = name.encode('utf-8')
		fileobj.write(struct.pack('<I', len(encoded)))
		fileobj.write(encoded)
		fileobj.write(struct.pack('<I', array.ndim))
		fileobj.write(struct.pack('<{}I'.format(array.ndim), *array.shape))
		fileobj.write(array.tobytes(order='C'))

def _readExactly(fileobj, size):
	data = fileobj.read(size)
	if len(data) != size:
		raise FormatError('truncated checkpoint')
	return data

def readCheckpoint(fileobj):
	'''
	Read the named arrays of a binary checkpoint.
	
	:param fileobj: a binary file object
	:returns: a dict mapping names to float64 arrays in file order
	'''
	if fileobj.read(4) != CHECKPOINT_MAGIC:
		raise FormatError('not a checkpoint file')
	version, = struct.unpack('<I', _readExactly(fileobj, 4))
	if version != CHECKPOINT_VERSION:
		raise FormatError('unsupported checkpoint version {}'.format(version))
	arrays = {}
	while True:
		head = fileobj.read(4)
		if not head:
			break
		if len(head) != 4:
			raise FormatError('truncated checkpoint')
		nameLength, = struct.unpack('<I', head)
		name = _readExactly(fileobj, nameLength).decode('utf-8')
		rank, = struct.unpack('<I', _readExactly(fileobj, 4))
		shape = struct.unpack('<{}I'.format(rank),
			_readExactly(fileobj, 4 * rank))
		count = int(np.prod(shape, dtype=np.int64))
		values = np.frombuffer(_readExactly(fileobj, 8 * count), dtype='<f8')
		arrays[name] = values.astype(np.float64).reshape(shape)
	return arrays

def saveCheckpoint(path, module):
	'''
	Save every parameter of a module to a checkpoint file.
	
	:param path: the file to write
	:param module: the :class:`Module` to save
	'''
	with open(path, 'wb') as f:
		writeCheckpoint(f, ((name, p.data) for name, p in
			module.namedParameters()))
	logger.info('wrote checkpoint %s', path)

def loadCheckpoint(path, module):
	'''
	Restore the parameters of a module from a checkpoint file. Every
	parameter must be present with a matching shape.
	
	:param path: the file to read
	:param module: the :class:`Module` receiving the values
	'''
	with open(path, 'rb') as f:
		arrays = readCheckpoint(f)
	params = dict(module.namedParameters())
	if set(arrays) != set(params):
		missing = sorted(set(params) - set(arrays))
		unknown = sorted(set(arrays) - set(params))
		raise FormatError('checkpoint does not match the model: missing {}, '
			'unknown {}'.format(missing, unknown))
	for name, param in params.items():
		if arrays[name].shape != param.shape:
			raise DimensionError('checkpoint entry {} has shape {}, expected '
				'{}'.format(name, arrays[name].shape, param.shape))
		param.data[...] = arrays[name]
	return module
