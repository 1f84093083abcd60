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
Module providing a dense tensor type with reverse-mode differentiation.

Every operation on tensors requiring gradients records its parents along with
a closure mapping the gradient of its output to the gradients of its inputs.
Calling :func:`backward` on a scalar loss orders the recorded operations
topologically and visits each of them exactly once.
'''

import contextlib
import threading

import numpy as np
from scipy.special import expit

from .exceptions import ContractViolation, DimensionError

_local = threading.local()

def isRecording():
	'''Return whether operations are currently recorded for differentiation.'''
	return getattr(_local, 'recording', True)

@contextlib.contextmanager
def noGrad():
	'''
	Context manager disabling the recording of operations in the current
	thread. Tensors created inside of it are constants.
	'''
	previous = isRecording()
	_local.recording = False
	try:
		yield
	finally:
		_local.recording = previous

class Tensor:
	'''
	A dense row-major array of 64-bit floats.
	
	:param data: anything numpy can turn into a float64 array
	:param requiresGrad: whether a leaf accumulates gradients into ``grad``
	:param parents: the tensors this tensor was computed from
	:param backward: maps the output gradient to a tuple of parent gradients
	'''
	
	def __init__(self, data, requiresGrad=False, parents=(), backward=None):
		self.data = np.asarray(data, dtype=np.float64)
		if parents:
			self.requiresGrad = isRecording() and any(
				p.requiresGrad for p in parents)
		else:
			self.requiresGrad = requiresGrad
		self.parents = parents if self.requiresGrad else ()
		self._backward = backward if self.parents else None
		self.grad = np.zeros_like(self.data) if self.isLeaf() and \
			self.requiresGrad else None
	
	def __repr__(self):
		return 'Tensor(shape={}, requiresGrad={})'.format(
			self.shape, self.requiresGrad)
	
	@property
	def shape(self):
		return self.data.shape
	
	@property
	def ndim(self):
		return self.data.ndim
	
	@property
	def size(self):
		return self.data.size
	
	def isLeaf(self):
		return not self.parents
	
	def item(self):
		return float(self.data.reshape(()))
	
	def detach(self):
		'''Return a constant tensor sharing no history with this one.'''
		return Tensor(self.data.copy())
	
	def zeroGrad(self):
		if self.grad is not None:
			self.grad[...] = 0.0
	
	def backward(self):
		backward(self)
	
	def __add__(self, other):
		return add(self, other)
	
	def __radd__(self, other):
		return add(other, self)
	
	def __sub__(self, other):
		return sub(self, other)
	
	def __rsub__(self, other):
		return sub(other, self)
	
	def __mul__(self, other):
		return mul(self, other)
	
	def __rmul__(self, other):
		return mul(other, self)
	
	def __neg__(self):
		return mul(self, -1.0)
	
	def __matmul__(self, other):
		return matmul(self, other)
	
	def __getitem__(self, key):
		return index(self, key)

class Parameter(Tensor):
	'''
	A trainable leaf tensor.
	
	:param value: the initial value
	:param name: the identifier used in checkpoints
	:param trainable: whether the optimizer updates this parameter
	'''
	
	def __init__(self, value, name='', trainable=True):
		super().__init__(np.array(value, dtype=np.float64),
			requiresGrad=trainable)
		if self.grad is None:
			self.grad = np.zeros_like(self.data)
		self.name = name
		self.trainable = trainable
	
	def __repr__(self):
		return 'Parameter({!r}, shape={})'.format(self.name, self.shape)

class ComputeGraph:
	'''
	The operations a loss depends on in topological order, inputs first.
	
	:param loss: the tensor whose history is collected
	'''
	
	def __init__(self, loss):
		self.nodes = []
		visited = set()
		stack = [(loss, False)]
		# iterative depth-first search, episodes create very deep graphs
		while stack:
			node, expanded = stack.pop()
			if expanded:
				self.nodes.append(node)
				continue
			if id(node) in visited or not node.requiresGrad:
				continue
			visited.add(id(node))
			stack.append((node, True))
			for parent in node.parents:
				if id(parent) not in visited:
					stack.append((parent, False))
	
	def __len__(self):
		return len(self.nodes)
	
	def __iter__(self):
		return iter(self.nodes)

def backward(loss, graph=None):
	'''
	Accumulate the gradient of a scalar loss into every leaf tensor
	requiring gradients. Repeated calls accumulate until the gradients are
	zeroed explicitly.
	
	:param loss: a tensor holding exactly one value
	:param graph: a previously built :class:`ComputeGraph` of the loss
	'''
	if loss.size != 1:
		raise ContractViolation('loss must be a scalar, got shape {}'.format(
			loss.shape))
	if not loss.requiresGrad:
		return
	graph = graph or ComputeGraph(loss)
	grads = {id(loss): np.ones_like(loss.data)}
	for node in reversed(graph.nodes):
		grad = grads.pop(id(node), None)
		if grad is None:
			continue
		if node.isLeaf():
			node.grad += grad
			continue
		for parent, parentGrad in zip(node.parents, node._backward(grad)):
			if parentGrad is None or not parent.requiresGrad:
				continue
			key = id(parent)
			if key in grads:
				grads[key] = grads[key] + parentGrad
			else:
				grads[key] = parentGrad

def _wrap(value):
	return value if isinstance(value, Tensor) else Tensor(value)

def _unbroadcast(grad, shape):
	'''Sum a broadcast gradient back to the shape of the operand.'''
	while grad.ndim > len(shape):
		grad = grad.sum(axis=0)
	for axis, size in enumerate(shape):
		if size == 1 and grad.shape[axis] != 1:
			grad = grad.sum(axis=axis, keepdims=True)
	return grad

def _broadcastShape(a, b):
	try:
		return np.broadcast_shapes(a.shape, b.shape)
	except ValueError:
		raise DimensionError('cannot broadcast shapes {} and {}'.format(
			a.shape, b.shape))

def add(a, b):
	a, b = _wrap(a), _wrap(b)
	_broadcastShape(a, b)
	def backward(grad):
		return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)
	return Tensor(a.data + b.data, parents=(a, b), backward=backward)

def sub(a, b):
	a, b = _wrap(a), _wrap(b)
	_broadcastShape(a, b)
	def backward(grad):
		return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)
	return Tensor(a.data - b.data, parents=(a, b), backward=backward)

def mul(a, b):
	a, b = _wrap(a), _wrap(b)
	_broadcastShape(a, b)
	def backward(grad):
		return (
			_unbroadcast(grad * b.data, a.shape),
			_unbroadcast(grad * a.data, b.shape),
		)
	return Tensor(a.data * b.data, parents=(a, b), backward=backward)

def matmul(a, b):
	'''
	Multiply a matrix (or vector) by a matrix (or vector).
	
	:param a: a tensor of shape (m, k) or (k,)
	:param b: a tensor of shape (k, n) or (k,)
	'''
	a, b = _wrap(a), _wrap(b)
	if a.ndim not in (1, 2) or b.ndim not in (1, 2) or \
			a.shape[-1] != b.shape[0]:
		raise DimensionError('cannot multiply shapes {} and {}'.format(
			a.shape, b.shape))
	left = a.data.reshape(1, -1) if a.ndim == 1 else a.data
	right = b.data.reshape(-1, 1) if b.ndim == 1 else b.data
	def backward(grad):
		grad = grad.reshape(left.shape[0], right.shape[1])
		return (
			(grad @ right.T).reshape(a.shape) if a.requiresGrad else None,
			(left.T @ grad).reshape(b.shape) if b.requiresGrad else None,
		)
	return Tensor(a.data @ b.data, parents=(a, b), backward=backward)

def reduceSum(x, axis=None):
	'''Sum all entries, or the entries along a single axis.'''
	def backward(grad):
		if axis is not None:
			grad = np.expand_dims(grad, axis)
		return np.broadcast_to(grad, x.shape).copy(),
	return Tensor(x.data.sum(axis=axis), parents=(x,), backward=backward)

def mean(x):
	return mul(reduceSum(x), 1.0 / x.size)

def exp(x):
	out = np.exp(x.data)
	return Tensor(out, parents=(x,), backward=lambda grad: (grad * out,))

def log(x):
	return Tensor(np.log(x.data), parents=(x,),
		backward=lambda grad: (grad / x.data,))

def sigmoid(x):
	out = expit(x.data)
	return Tensor(out, parents=(x,),
		backward=lambda grad: (grad * out * (1.0 - out),))

def tanh(x):
	out = np.tanh(x.data)
	return Tensor(out, parents=(x,),
		backward=lambda grad: (grad * (1.0 - out * out),))

def relu(x):
	positive = x.data > 0
	return Tensor(np.where(positive, x.data, 0.0), parents=(x,),
		backward=lambda grad: (grad * positive,))

def _maskedLogits(x, mask):
	if mask is None:
		return x.data
	return np.where(mask, x.data, -np.inf)

def softmax(x, axis=-1, mask=None):
	'''
	Normalize exponentiated entries along an axis. The maximum is
	subtracted first so large logits do not overflow.
	
	:param x: the logits
	:param axis: the axis to normalize over
	:param mask: optional boolean array; masked out entries get probability 0
	'''
	logits = _maskedLogits(x, mask)
	shifted = np.exp(logits - logits.max(axis=axis, keepdims=True))
	out = shifted / shifted.sum(axis=axis, keepdims=True)
	def backward(grad):
		return out * (grad - (grad * out).sum(axis=axis, keepdims=True)),
	return Tensor(out, parents=(x,), backward=backward)

def logSoftmax(x, axis=-1, mask=None):
	'''
	Logarithm of :func:`softmax`. Entries outside of the mask have
	probability 0 and are reported as 0 to keep the output finite.
	'''
	logits = _maskedLogits(x, mask)
	peak = logits.max(axis=axis, keepdims=True)
	logNorm = np.log(np.exp(logits - peak).sum(axis=axis, keepdims=True))
	out = logits - peak - logNorm
	probs = np.exp(out)
	if mask is not None:
		out = np.where(mask, out, 0.0)
	def backward(grad):
		if mask is not None:
			grad = np.where(mask, grad, 0.0)
		return grad - probs * grad.sum(axis=axis, keepdims=True),
	return Tensor(out, parents=(x,), backward=backward)

def concat(tensors, axis=0):
	tensors = [_wrap(t) for t in tensors]
	try:
		out = np.concatenate([t.data for t in tensors], axis=axis)
	except ValueError:
		raise DimensionError('cannot concatenate shapes {}'.format(
			[t.shape for t in tensors]))
	splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
	def backward(grad):
		return tuple(np.split(grad, splits, axis=axis))
	return Tensor(out, parents=tuple(tensors), backward=backward)

def take(x, indices):
	'''
	Gather rows of a tensor, like an embedding lookup.
	
	:param x: the tensor to gather from along its first axis
	:param indices: integer array of any shape
	'''
	indices = np.asarray(indices, dtype=np.intp)
	def backward(grad):
		full = np.zeros_like(x.data)
		np.add.at(full, indices, grad)
		return full,
	return Tensor(x.data[indices], parents=(x,), backward=backward)

def index(x, key):
	'''Basic slicing of a tensor.'''
	def backward(grad):
		full = np.zeros_like(x.data)
		full[key] += grad
		return full,
	return Tensor(x.data[key], parents=(x,), backward=backward)

def reshape(x, shape):
	return Tensor(x.data.reshape(shape), parents=(x,),
		backward=lambda grad: (grad.reshape(x.shape),))
