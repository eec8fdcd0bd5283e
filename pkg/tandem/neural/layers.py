import copy
import logging
import math

import numpy as np

from ..exceptions import NumericalError, ShapeError
from . import functional as F

logger = logging.getLogger(__name__)


def he_uniform(rng, shape, fan_in, dtype):
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base layer: forward caches what backward needs; parameters live in ``params``."""
    kind = 'activation'

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad_out, need_param_grads=True):
        raise NotImplementedError

    def zero_grad(self):
        for name, value in self.params.items():
            self.grads[name] = np.zeros_like(value)

    def describe(self):
        return {'kind': self.kind}


class Dense(Layer):
    kind = 'dense'

    def __init__(self, n_in, n_out, rng=None, init='he', dtype=np.float64):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        shape = (n_out, n_in)
        if init == 'he':
            weight = he_uniform(rng, shape, n_in, dtype)
        else:
            weight = glorot_uniform(rng, shape, n_in, n_out, dtype)
        self.params = {'weight': weight, 'bias': np.zeros(n_out, dtype=dtype)}
        self.init = init
        self.zero_grad()

    def forward(self, x):
        self._cache = x
        return F.dense_forward(x, self.params['weight'], self.params['bias'])

    def backward(self, grad_out, need_param_grads=True):
        grad_x, grad_w, grad_b = F.dense_backward(self._cache, self.params['weight'], grad_out, need_param_grads)
        if need_param_grads:
            self.grads['weight'] += grad_w
            self.grads['bias'] += grad_b
        return grad_x

    def describe(self):
        n_out, n_in = self.params['weight'].shape
        return {'kind': self.kind, 'n_in': n_in, 'n_out': n_out, 'init': self.init}


class Conv3x3(Layer):
    kind = 'conv3x3'

    def __init__(self, c_in, c_out, rng=None, init='he', dtype=np.float64):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        shape = (3, 3, c_in, c_out)
        if init == 'he':
            kernel = he_uniform(rng, shape, 9 * c_in, dtype)
        else:
            kernel = glorot_uniform(rng, shape, 9 * c_in, 9 * c_out, dtype)
        self.params = {'weight': kernel, 'bias': np.zeros(c_out, dtype=dtype)}
        self.init = init
        self.zero_grad()

    def forward(self, x):
        self._cache = x
        return F.conv2d_forward(x, self.params['weight'], self.params['bias'])

    def backward(self, grad_out, need_param_grads=True):
        grad_x, grad_k, grad_b = F.conv2d_backward(self._cache, self.params['weight'], grad_out, need_param_grads)
        if need_param_grads:
            self.grads['weight'] += grad_k
            self.grads['bias'] += grad_b
        return grad_x

    def describe(self):
        _, _, c_in, c_out = self.params['weight'].shape
        return {'kind': self.kind, 'c_in': c_in, 'c_out': c_out, 'init': self.init}


class MaxPool2x2(Layer):
    kind = 'maxpool2x2'

    def forward(self, x):
        out, argmax = F.maxpool_forward(x)
        self._cache = (argmax, x.shape)
        return out

    def backward(self, grad_out, need_param_grads=True):
        argmax, shape = self._cache
        return F.maxpool_backward(grad_out, argmax, shape)


class ReLU(Layer):

    def forward(self, x):
        self._cache = x
        return F.relu_forward(x)

    def backward(self, grad_out, need_param_grads=True):
        return F.relu_backward(self._cache, grad_out)

    def describe(self):
        return {'kind': self.kind, 'function': 'relu'}


class Sigmoid(Layer):

    def forward(self, x):
        y = F.sigmoid_forward(x)
        self._cache = y
        return y

    def backward(self, grad_out, need_param_grads=True):
        return F.sigmoid_backward(self._cache, grad_out)

    def describe(self):
        return {'kind': self.kind, 'function': 'sigmoid'}


class Flatten(Layer):
    kind = 'flatten'

    def forward(self, x):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out, need_param_grads=True):
        return grad_out.reshape(self._cache)


class Sequential:
    """Ordered container; every layer output is checked for NaN/Inf."""

    def __init__(self, *layers, name='sequential'):
        self.layers = list(layers)
        self.name = name

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, index):
        return self.layers[index]

    def forward(self, x):
        for index, layer in enumerate(self.layers):
            x = layer.forward(x)
            if not np.isfinite(x).all():
                raise NumericalError(f"non-finite values after {self.name}[{index}] ({layer.kind})")
        return x

    __call__ = forward

    def backward(self, grad_out, need_param_grads=True):
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out, need_param_grads)
        return grad_out

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def named_parameters(self):
        """(name, array) pairs in a stable order; names are ``<index>.<param>``."""
        for index, layer in enumerate(self.layers):
            for key in sorted(layer.params):
                yield f"{index}.{key}", layer.params[key]

    def named_grads(self):
        for index, layer in enumerate(self.layers):
            for key in sorted(layer.params):
                yield f"{index}.{key}", layer.grads[key]

    def parameters(self):
        return [value for _, value in self.named_parameters()]

    def grads(self):
        return [value for _, value in self.named_grads()]

    def state_dict(self):
        return dict(self.named_parameters())

    def load_state_dict(self, state):
        expected = dict(self.named_parameters())
        if set(state) != set(expected):
            raise ShapeError(f"{self.name}: parameter names do not match ({sorted(set(state) ^ set(expected))})")
        for name, value in state.items():
            index, key = name.split('.', 1)
            target = self.layers[int(index)].params[key]
            if target.shape != value.shape:
                raise ShapeError(f"{self.name}.{name}: expected shape {target.shape}, got {value.shape}")
            target[...] = value
        self.zero_grad()

    def describe(self):
        return [layer.describe() for layer in self.layers]

    def replica(self):
        """Copy that shares these parameter arrays but keeps its own gradients and caches."""
        layers = []
        for layer in self.layers:
            twin = copy.copy(layer)
            twin.params = dict(layer.params)
            twin.grads = {}
            twin._cache = None
            twin.zero_grad()
            layers.append(twin)
        return Sequential(*layers, name=self.name)

    def astype(self, dtype):
        for layer in self.layers:
            for key in layer.params:
                layer.params[key] = layer.params[key].astype(dtype)
        self.zero_grad()
        return self


def dense_stack(widths, rng, output=None, dtype=np.float64, name='dense'):
    """Dense layers with ReLU between them; ``output`` is None, 'relu' or 'sigmoid'."""
    layers = []
    for index, (n_in, n_out) in enumerate(zip(widths, widths[1:])):
        last = index == len(widths) - 2
        init = 'he' if not last or output == 'relu' else 'glorot'
        layers.append(Dense(n_in, n_out, rng, init=init, dtype=dtype))
        if not last or output == 'relu':
            layers.append(ReLU())
        elif output == 'sigmoid':
            layers.append(Sigmoid())
    return Sequential(*layers, name=name)


def build_from_description(description, dtype=np.float64, name='sequential'):
    """Rebuild a Sequential from ``describe()`` output; parameters start at zero."""
    layers = []
    for entry in description:
        kind = entry['kind']
        if kind == 'dense':
            layer = Dense(entry['n_in'], entry['n_out'], init=entry.get('init', 'he'), dtype=dtype)
        elif kind == 'conv3x3':
            layer = Conv3x3(entry['c_in'], entry['c_out'], init=entry.get('init', 'he'), dtype=dtype)
        elif kind == 'maxpool2x2':
            layer = MaxPool2x2()
        elif kind == 'flatten':
            layer = Flatten()
        elif kind == 'activation':
            layer = ReLU() if entry['function'] == 'relu' else Sigmoid()
        else:
            raise ShapeError(f"unknown layer kind {kind!r}")
        for value in layer.params.values():
            value[...] = 0
        layers.append(layer)
    return Sequential(*layers, name=name)
