# -*- coding: utf-8 -*-

r"""NUMERICS.

Dense tensors with tape-based reverse-mode differentiation, the parameter
store and the layer primitives composed by the context encoder, the
transducer and the entity detectors.

Tensors wrap ``numpy.ndarray`` objects. Every operation executed while
recording is enabled keeps a reference to its inputs and to a closure
computing the vector-Jacobian product, so :func:`backward` can walk the
recorded graph in reverse topological order.

Training and inference run in 32-bit floats. Building a
:class:`ParamStore` with ``dtype=numpy.float64`` and feeding 64-bit inputs
gives the 64-bit shadow mode used by the oracle tests.

"""

from __future__ import absolute_import, print_function
import contextlib
import zlib
import numpy as np
from scipy import special


_RECORDING = [True]


@contextlib.contextmanager
def no_grad():
    r"""Disable graph recording inside a ``with`` block."""
    previous = _RECORDING[0]
    _RECORDING[0] = False
    try:
        yield
    finally:
        _RECORDING[0] = previous


def is_recording():
    r"""Return ``True`` when operations are being recorded."""
    return _RECORDING[0]


def _unbroadcast(grad, shape):
    r"""Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor(object):
    r"""Dense array node of the differentiation graph.

    Parameters
    ----------
    data: numpy.ndarray or array_like
        Values. Non floating inputs are converted to ``float32``.
    requires_grad: bool
        Whether gradients should flow to this tensor.
        Default is ``False``.
    name: str
        Optional name (parameters carry their store name).
    """

    __array_priority__ = 100.

    def __init__(self, data, requires_grad=False, name=None):
        r"""Initialize class attributes."""
        data = np.asarray(data)
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float32)
        self.data = data
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None
        self._recorded = False

    def __repr__(self):
        return 'Tensor(shape={}, dtype={}{})'.format(
            self.shape, self.dtype,
            ', name={}'.format(self.name) if self.name else '')

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __len__(self):
        return self.data.shape[0]

    def numpy(self):
        r"""Return the underlying array."""
        return self.data

    def item(self):
        r"""Return the value of a single element tensor."""
        return self.data.item()

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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)


def as_tensor(value, like=None):
    r"""Wrap ``value`` as a constant tensor.

    Python scalars and arrays take the dtype of ``like`` when given.
    """
    if isinstance(value, Tensor):
        return value
    if like is not None:
        return Tensor(np.asarray(value, dtype=like.dtype))
    return Tensor(value)


def record_op(data, parents, backward_fn):
    r"""Create an operation output and record it on the tape."""
    out = Tensor(data)
    if _RECORDING[0]:
        out._recorded = True
        if any(parent.requires_grad for parent in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward_fn
    return out


def _pair(a, b):
    if not isinstance(a, Tensor):
        a = as_tensor(a, like=b)
    if not isinstance(b, Tensor):
        b = as_tensor(b, like=a)
    return a, b


def add(a, b):
    r"""Elementwise (broadcast) sum."""
    a, b = _pair(a, b)

    def backward_fn(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return record_op(a.data + b.data, (a, b), backward_fn)


def sub(a, b):
    r"""Elementwise (broadcast) difference."""
    a, b = _pair(a, b)

    def backward_fn(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)

    return record_op(a.data - b.data, (a, b), backward_fn)


def mul(a, b):
    r"""Elementwise (broadcast) product."""
    a, b = _pair(a, b)

    def backward_fn(grad):
        return (_unbroadcast(grad * b.data, a.shape),
                _unbroadcast(grad * a.data, b.shape))

    return record_op(a.data * b.data, (a, b), backward_fn)


def div(a, b):
    r"""Elementwise (broadcast) quotient."""
    a, b = _pair(a, b)

    def backward_fn(grad):
        return (_unbroadcast(grad / b.data, a.shape),
                _unbroadcast(-grad * a.data / (b.data * b.data), b.shape))

    return record_op(a.data / b.data, (a, b), backward_fn)


def power(a, exponent):
    r"""Raise ``a`` to a constant scalar ``exponent``."""
    exponent = float(exponent)

    def backward_fn(grad):
        return (grad * exponent * a.data ** (exponent - 1.),)

    return record_op(a.data ** exponent, (a,), backward_fn)


def matmul(a, b):
    r"""Matrix product with numpy ``matmul`` broadcasting (ndim >= 2)."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError('matmul expects operands with at least 2 '
                         'dimensions, got {} and {}.'.format(a.shape, b.shape))
    if a.shape[-1] != b.shape[-2]:
        raise ValueError('matmul dimension mismatch: {} @ {}.'.format(
            a.shape, b.shape))

    def backward_fn(grad):
        grad_a = np.matmul(grad, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), grad)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return record_op(np.matmul(a.data, b.data), (a, b), backward_fn)


def reduce_sum(a, axis=None, keepdims=False):
    r"""Sum over ``axis`` (all axes when ``None``)."""

    def backward_fn(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, a.shape),)

    return record_op(np.sum(a.data, axis=axis, keepdims=keepdims), (a,),
                     backward_fn)


def reduce_mean(a, axis=None, keepdims=False):
    r"""Mean over ``axis`` (all axes when ``None``)."""
    count = a.data.size if axis is None else a.shape[axis]
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1. / count)


def exp(a):
    r"""Elementwise exponential."""
    out_data = np.exp(a.data)

    def backward_fn(grad):
        return (grad * out_data,)

    return record_op(out_data, (a,), backward_fn)


def log(a):
    r"""Elementwise natural logarithm."""

    def backward_fn(grad):
        return (grad / a.data,)

    return record_op(np.log(a.data), (a,), backward_fn)


def tanh(a):
    r"""Elementwise hyperbolic tangent."""
    out_data = np.tanh(a.data)

    def backward_fn(grad):
        return (grad * (1. - out_data * out_data),)

    return record_op(out_data, (a,), backward_fn)


def sigmoid(a):
    r"""Elementwise logistic function."""
    out_data = special.expit(a.data)

    def backward_fn(grad):
        return (grad * out_data * (1. - out_data),)

    return record_op(out_data, (a,), backward_fn)


def identity(a):
    r"""Return ``a`` unchanged."""
    return a


ACTIVATIONS = {'identity': identity, 'sigmoid': sigmoid, 'tanh': tanh}


def reshape(a, shape):
    r"""Reshape without copying the values."""

    def backward_fn(grad):
        return (grad.reshape(a.shape),)

    return record_op(a.data.reshape(shape), (a,), backward_fn)


def transpose(a, axes=None):
    r"""Permute axes (reverse order when ``axes`` is ``None``)."""
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))

    def backward_fn(grad):
        return (grad.transpose(inverse),)

    return record_op(a.data.transpose(axes), (a,), backward_fn)


def _is_fancy(index):
    if not isinstance(index, tuple):
        index = (index,)
    return any(isinstance(item, (list, np.ndarray)) for item in index)


def getitem(a, index):
    r"""Index or slice ``a``; repeated fancy indices accumulate."""
    fancy = _is_fancy(index)

    def backward_fn(grad):
        full = np.zeros_like(a.data)
        if fancy:
            np.add.at(full, index, grad)
        else:
            full[index] += grad
        return (full,)

    return record_op(a.data[index], (a,), backward_fn)


def take_rows(table, ids):
    r"""Embedding lookup: rows ``ids`` of a 2-D ``table``."""
    ids = np.asarray(ids, dtype=np.int64)
    return getitem(table, ids)


def concat(tensors, axis=0):
    r"""Concatenate tensors along ``axis``."""
    tensors = tuple(tensors)
    sizes = [tensor.shape[axis] for tensor in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward_fn(grad):
        return tuple(np.split(grad, splits, axis=axis))

    return record_op(np.concatenate([tensor.data for tensor in tensors],
                                    axis=axis), tensors, backward_fn)


def stack(tensors, axis=0):
    r"""Stack equally shaped tensors along a new ``axis``."""
    tensors = tuple(tensors)

    def backward_fn(grad):
        return tuple(np.take(grad, i, axis=axis)
                     for i in range(len(tensors)))

    return record_op(np.stack([tensor.data for tensor in tensors],
                              axis=axis), tensors, backward_fn)


def check_finite(a, what='tensor'):
    r"""Raise ``ValueError`` if ``a`` holds NaN or infinite values."""
    data = a.data if isinstance(a, Tensor) else np.asarray(a)
    if not np.all(np.isfinite(data)):
        raise ValueError('Non-finite values found in {}.'.format(what))


def softmax(logits, axis=-1, mask=None):
    r"""Max-subtracted softmax along ``axis``.

    Parameters
    ----------
    logits: Tensor
        Input scores, must be finite.
    axis: int
        Normalisation axis. Default is ``-1``.
    mask: numpy.ndarray
        Optional boolean array broadcastable to ``logits``; ``False``
        entries get zero probability. Every row needs one kept entry.

    Returns
    -------
    Tensor
        Probabilities, rows along ``axis`` sum to one.
    """
    check_finite(logits, 'softmax input')
    scores = logits.data
    if mask is not None:
        scores = np.where(mask, scores, -np.inf)
    out_data = special.softmax(scores, axis=axis)

    def backward_fn(grad):
        inner = np.sum(grad * out_data, axis=axis, keepdims=True)
        return (out_data * (grad - inner),)

    return record_op(out_data, (logits,), backward_fn)


def log_softmax(logits, axis=-1):
    r"""Log of :func:`softmax`, computed in a stable way."""
    check_finite(logits, 'log_softmax input')
    out_data = special.log_softmax(logits.data, axis=axis)

    def backward_fn(grad):
        total = np.sum(grad, axis=axis, keepdims=True)
        return (grad - np.exp(out_data) * total,)

    return record_op(out_data, (logits,), backward_fn)


def layernorm(x, gain, bias, eps=1e-5):
    r"""Layer normalisation over the last axis.

    Output is :math:`\frac{x - \mu}{\sqrt{\sigma^2 + \epsilon}} g + b`.
    """
    if x.shape[-1] < 2:
        raise ValueError('layernorm needs a last axis of length >= 2.')
    centred = x - x.mean(axis=-1, keepdims=True)
    variance = (centred * centred).mean(axis=-1, keepdims=True)
    return centred * power(variance + eps, -0.5) * gain + bias


def backward(loss):
    r"""Accumulate gradients of a scalar ``loss`` into the graph leaves.

    Parameters
    ----------
    loss: Tensor
        Single element tensor produced by recorded operations.

    Raises
    ------
    ValueError
        If ``loss`` is not a single element tensor.
    RuntimeError
        If ``loss`` was not produced by a recorded forward pass.
    """
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ValueError('backward expects a single element Tensor.')
    if not loss._recorded:
        raise RuntimeError('backward called without a recorded forward '
                           'graph for this loss.')
    if not loss.requires_grad:
        return

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue
        if node._backward is None:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += grad
            continue
        for parent, parent_grad in zip(node._parents, node._backward(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + parent_grad
            else:
                grads[key] = parent_grad


def _topological_order(root):
    r"""Inputs-before-outputs ordering of the graph above ``root``."""
    order = []
    visited = set()
    stack_ = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack_.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack_.append((parent, False))
    return order


def numerical_gradient(fun, array, h=1e-3):
    r"""Central finite differences of a scalar function.

    Parameters
    ----------
    fun: callable
        Function of no argument returning a float; it must read ``array``.
    array: numpy.ndarray
        Array perturbed in place (restored afterwards).
    h: float
        Step. Default is ``1e-3``.

    Returns
    -------
    numpy.ndarray
        Estimated gradient with the shape of ``array``.
    """
    grad = np.zeros(array.shape, dtype=np.float64)
    flat = array.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + h
        upper = fun()
        flat[i] = saved - h
        lower = fun()
        flat[i] = saved
        grad.reshape(-1)[i] = (upper - lower) / (2. * h)
    return grad


class ParamStore(object):
    r"""Named parameter tensors with gradient buffers.

    Parameter initial values depend only on ``(seed, name)``, so the order
    in which layers register parameters does not change them.

    Parameters
    ----------
    seed: int
        Initialisation seed. Default is ``0``.
    dtype: numpy.dtype
        Floating type of every parameter. Default is ``numpy.float32``.
    """

    def __init__(self, seed=0, dtype=np.float32):
        r"""Initialize class attributes."""
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        self._params = {}

    def require(self, name, shape, init='normal', scale=None):
        r"""Return parameter ``name``, creating it if needed.

        Parameters
        ----------
        name: str
            Unique parameter name.
        shape: tuple
            Parameter shape.
        init: str
            One of ``'normal'``, ``'uniform'``, ``'zeros'`` or ``'ones'``.
        scale: float
            Standard deviation (normal) or half-width (uniform). Default
            is ``1 / sqrt(shape[0])``.
        """
        shape = tuple(int(size) for size in shape)
        if name in self._params:
            param = self._params[name]
            if param.shape != shape:
                raise ValueError('Parameter {} exists with shape {}, '
                                 'requested {}.'.format(name, param.shape,
                                                        shape))
            return param

        rng = np.random.default_rng([self.seed,
                                     zlib.crc32(name.encode('utf-8'))])
        if scale is None:
            scale = 1. / np.sqrt(shape[0])
        if init == 'normal':
            data = rng.standard_normal(shape) * scale
        elif init == 'uniform':
            data = rng.uniform(-scale, scale, size=shape)
        elif init == 'zeros':
            data = np.zeros(shape)
        elif init == 'ones':
            data = np.ones(shape)
        else:
            raise ValueError('Unknown initialisation {}.'.format(init))
        param = Tensor(data.astype(self.dtype), requires_grad=True, name=name)
        param.grad = np.zeros(shape, dtype=self.dtype)
        self._params[name] = param
        return param

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def __iter__(self):
        return iter(self.names())

    def names(self):
        r"""Parameter names in deterministic (sorted) order."""
        return sorted(self._params)

    def items(self):
        return [(name, self._params[name]) for name in self.names()]

    @property
    def size(self):
        r"""Total number of scalar parameters."""
        return int(sum(param.data.size for param in self._params.values()))

    def set(self, name, value):
        r"""Overwrite the values of parameter ``name``."""
        param = self._params[name]
        value = np.asarray(value, dtype=self.dtype)
        if value.shape != param.shape:
            raise ValueError('Shape mismatch for {}: {} vs {}.'.format(
                name, value.shape, param.shape))
        param.data = value.copy()

    def zero_grad(self):
        r"""Reset every gradient buffer to zero."""
        for param in self._params.values():
            param.grad = np.zeros(param.shape, dtype=self.dtype)

    def flatten(self):
        r"""Concatenate all parameters (sorted by name) into one vector."""
        if not self._params:
            return np.zeros(0, dtype=self.dtype)
        return np.concatenate([self._params[name].data.reshape(-1)
                               for name in self.names()])

    def grad_vector(self):
        r"""Concatenate all gradients in :meth:`flatten` order."""
        if not self._params:
            return np.zeros(0, dtype=self.dtype)
        return np.concatenate([self._params[name].grad.reshape(-1)
                               for name in self.names()])

    def load_vector(self, vector):
        r"""Inverse of :meth:`flatten`."""
        vector = np.asarray(vector)
        if vector.size != self.size:
            raise ValueError('Vector of size {} does not match {} '
                             'parameters.'.format(vector.size, self.size))
        offset = 0
        for name in self.names():
            param = self._params[name]
            count = param.data.size
            param.data = vector[offset:offset + count].reshape(
                param.shape).astype(self.dtype)
            offset += count

    def copy(self, dtype=None):
        r"""Deep copy, optionally converted to another float type."""
        new = ParamStore(seed=self.seed,
                         dtype=self.dtype if dtype is None else dtype)
        for name in self.names():
            param = self._params[name]
            tensor = Tensor(param.data.astype(new.dtype), requires_grad=True,
                            name=name)
            tensor.grad = np.zeros(param.shape, dtype=new.dtype)
            new._params[name] = tensor
        return new


class MHAConfig(object):
    r"""Multi-head attention geometry.

    Parameters
    ----------
    model_dim: int
        Model dimension.
    num_heads: int
        Number of heads; must divide ``model_dim``.
    """

    def __init__(self, model_dim, num_heads):
        r"""Initialize class attributes."""
        if model_dim <= 0 or num_heads <= 0:
            raise ValueError('model_dim and num_heads must be positive.')
        if model_dim % num_heads != 0:
            raise ValueError('model_dim {} is not divisible by num_heads '
                             '{}.'.format(model_dim, num_heads))
        self.model_dim = int(model_dim)
        self.num_heads = int(num_heads)
        self.head_dim = self.model_dim // self.num_heads

    def __repr__(self):
        return 'MHAConfig(model_dim={}, num_heads={})'.format(
            self.model_dim, self.num_heads)


class Linear(object):
    r"""Affine layer :math:`y = xW + b` with ``W`` of shape (in, out)."""

    def __init__(self, params, name, in_dim, out_dim, bias=True,
                 init='normal', scale=None):
        r"""Initialize class attributes."""
        self.params = params
        self.name = name
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.has_bias = bias
        params.require(name + '.weight', (in_dim, out_dim), init=init,
                       scale=scale)
        if bias:
            params.require(name + '.bias', (out_dim,), init='zeros')

    def __call__(self, x):
        if x.shape[-1] != self.in_dim:
            raise ValueError('{} expects input dim {}, got {}.'.format(
                self.name, self.in_dim, x.shape[-1]))
        out = matmul(x, self.params[self.name + '.weight'])
        if self.has_bias:
            out = out + self.params[self.name + '.bias']
        return out


class LayerNorm(object):
    r"""Layer normalisation with learned gain and bias."""

    def __init__(self, params, name, dim, eps=1e-5):
        r"""Initialize class attributes."""
        self.params = params
        self.name = name
        self.eps = eps
        params.require(name + '.gain', (dim,), init='ones')
        params.require(name + '.bias', (dim,), init='zeros')

    def __call__(self, x):
        return layernorm(x, self.params[self.name + '.gain'],
                         self.params[self.name + '.bias'], eps=self.eps)


class Embedding(object):
    r"""Lookup table of ``num`` vectors of size ``dim``."""

    def __init__(self, params, name, num, dim):
        r"""Initialize class attributes."""
        self.params = params
        self.name = name
        self.num = num
        params.require(name + '.table', (num, dim), scale=1.)

    def __call__(self, ids):
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        if np.any(ids < 0) or np.any(ids >= self.num):
            raise ValueError('{}: index out of range [0, {}).'.format(
                self.name, self.num))
        return take_rows(self.params[self.name + '.table'], ids)


class FeedForward(object):
    r"""Two affine layers with a tanh in between."""

    def __init__(self, params, name, in_dim, hidden_dim, out_dim):
        r"""Initialize class attributes."""
        self.inner = Linear(params, name + '.inner', in_dim, hidden_dim)
        self.outer = Linear(params, name + '.outer', hidden_dim, out_dim)

    def __call__(self, x):
        return self.outer(tanh(self.inner(x)))


def attend(query, key, value, num_heads, mask=None):
    r"""Scaled dot-product attention over already projected inputs.

    Parameters
    ----------
    query: Tensor
        Shape (Nq, D).
    key: Tensor
        Shape (Nk, D).
    value: Tensor
        Shape (Nk, D).
    num_heads: int
        Number of heads; the scaling uses the head dimension.
    mask: numpy.ndarray
        Optional boolean (Nq, Nk) array of allowed positions.

    Returns
    -------
    output: Tensor
        Shape (Nq, D), heads concatenated.
    weights: Tensor
        Attention probabilities, shape (num_heads, Nq, Nk).
    """
    if key.shape[0] != value.shape[0]:
        raise ValueError('key and value row counts differ: {} vs {}.'.format(
            key.shape[0], value.shape[0]))
    if query.shape[-1] != key.shape[-1] or key.shape[-1] != value.shape[-1]:
        raise ValueError('attention dimension mismatch: {}, {}, {}.'.format(
            query.shape, key.shape, value.shape))
    if key.shape[0] < 1:
        raise ValueError('attention needs at least one key.')
    n_query, dim = query.shape
    n_key = key.shape[0]
    head_dim = dim // num_heads
    q_heads = query.reshape((n_query, num_heads, head_dim)).transpose(
        (1, 0, 2))
    k_heads = key.reshape((n_key, num_heads, head_dim)).transpose((1, 2, 0))
    v_heads = value.reshape((n_key, num_heads, head_dim)).transpose(
        (1, 0, 2))
    scores = matmul(q_heads, k_heads) * (1. / np.sqrt(head_dim))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)[np.newaxis]
    weights = softmax(scores, axis=-1, mask=mask)
    heads = matmul(weights, v_heads)
    output = heads.transpose((1, 0, 2)).reshape((n_query, dim))
    return output, weights


class MultiHeadAttention(object):
    r"""Multi-head attention layer.

    Parameters
    ----------
    params: ParamStore
        Store holding (or receiving) the layer parameters.
    name: str
        Parameter prefix.
    cfg: MHAConfig
        Attention geometry.
    activation: str
        Activation applied to the query/key/value projections,
        ``'identity'`` or ``'sigmoid'``. Default is ``'identity'``.
    output_projection: bool
        Apply an output projection after concatenating the heads.
        Default is ``True``.
    """

    def __init__(self, params, name, cfg, activation='identity',
                 output_projection=True):
        r"""Initialize class attributes."""
        if activation not in ('identity', 'sigmoid'):
            raise ValueError('activation must be identity or sigmoid.')
        self.params = params
        self.name = name
        self.cfg = cfg
        self.activation = ACTIVATIONS[activation]
        dim = cfg.model_dim
        self.q_proj = Linear(params, name + '.q', dim, dim)
        self.k_proj = Linear(params, name + '.k', dim, dim)
        self.v_proj = Linear(params, name + '.v', dim, dim)
        self.o_proj = None
        if output_projection:
            self.o_proj = Linear(params, name + '.o', dim, dim)

    def project_query(self, query):
        return self.activation(self.q_proj(query))

    def project_memory(self, key, value):
        r"""Project keys and values once so they can be reused."""
        return (self.activation(self.k_proj(key)),
                self.activation(self.v_proj(value)))

    def attend_memory(self, query, memory, mask=None, return_weights=False):
        r"""Attend from ``query`` rows over projected ``memory``."""
        keys, values = memory
        output, weights = attend(self.project_query(query), keys, values,
                                 self.cfg.num_heads, mask=mask)
        if self.o_proj is not None:
            output = self.o_proj(output)
        if return_weights:
            return output, weights
        return output

    def __call__(self, query, key, value, mask=None, return_weights=False):
        return self.attend_memory(query, self.project_memory(key, value),
                                  mask=mask, return_weights=return_weights)


def mha_forward(query, key, value, cfg, params, name='mha', mask=None):
    r"""Functional multi-head attention using parameters ``name.*``."""
    layer = MultiHeadAttention(params, name, cfg)
    return layer(query, key, value, mask=mask)


def zero_state(hidden_dim, dtype=np.float32, num_layers=1):
    r"""All-zero (hidden, cell) state for a stack of LSTM layers."""
    return tuple((Tensor(np.zeros((1, hidden_dim), dtype=dtype)),
                  Tensor(np.zeros((1, hidden_dim), dtype=dtype)))
                 for _ in range(num_layers))


class LSTMCell(object):
    r"""Single LSTM cell with gates ordered (input, forget, cell, output)."""

    def __init__(self, params, name, in_dim, hidden_dim):
        r"""Initialize class attributes."""
        self.params = params
        self.name = name
        self.in_dim = in_dim
        self.hidden_dim = hidden_dim
        params.require(name + '.w_x', (in_dim, 4 * hidden_dim))
        params.require(name + '.w_h', (hidden_dim, 4 * hidden_dim))
        params.require(name + '.bias', (4 * hidden_dim,), init='zeros')

    def __call__(self, x, state):
        hidden, cell = state
        size = self.hidden_dim
        gates = (matmul(x, self.params[self.name + '.w_x']) +
                 matmul(hidden, self.params[self.name + '.w_h']) +
                 self.params[self.name + '.bias'])
        in_gate = sigmoid(gates[:, 0:size])
        forget_gate = sigmoid(gates[:, size:2 * size])
        candidate = tanh(gates[:, 2 * size:3 * size])
        out_gate = sigmoid(gates[:, 3 * size:4 * size])
        new_cell = forget_gate * cell + in_gate * candidate
        new_hidden = out_gate * tanh(new_cell)
        return new_hidden, (new_hidden, new_cell)


def lstm_step(x, state, params, name='lstm'):
    r"""One step of a stacked LSTM.

    Parameters
    ----------
    x: Tensor
        Input row, shape (1, in_dim).
    state: tuple
        Per-layer ``(hidden, cell)`` pairs, each of shape (1, H).
    params: ParamStore
        Store holding parameters ``name.<layer>.*``.
    name: str
        Parameter prefix. Default is ``'lstm'``.

    Returns
    -------
    output: Tensor
        Hidden state of the top layer.
    new_state: tuple
        Updated per-layer states.
    """
    new_state = []
    out = x
    for layer, layer_state in enumerate(state):
        cell = LSTMCell(params, name + '.{}'.format(layer), out.shape[-1],
                        layer_state[0].shape[-1])
        out, layer_state = cell(out, layer_state)
        new_state.append(layer_state)
    return out, tuple(new_state)


class BLSTM(object):
    r"""Bidirectional LSTM whose two directions are projected to ``out_dim``.

    Parameters
    ----------
    params: ParamStore
        Parameter store.
    name: str
        Parameter prefix; directions live under ``name.fwd`` / ``name.bwd``.
    in_dim: int
        Input dimension.
    hidden_dim: int
        Hidden size of each direction.
    out_dim: int
        Projection size.
    """

    def __init__(self, params, name, in_dim, hidden_dim, out_dim):
        r"""Initialize class attributes."""
        self.hidden_dim = hidden_dim
        self.forward_cell = LSTMCell(params, name + '.fwd', in_dim,
                                     hidden_dim)
        self.backward_cell = LSTMCell(params, name + '.bwd', in_dim,
                                      hidden_dim)
        self.proj = Linear(params, name + '.proj', 2 * hidden_dim, out_dim)

    def _directions(self, seq):
        if seq.shape[0] < 1:
            raise ValueError('BLSTM needs a nonempty sequence.')
        length = seq.shape[0]
        dtype = seq.dtype
        state = zero_state(self.hidden_dim, dtype=dtype)[0]
        forward_rows = []
        for t in range(length):
            out, state = self.forward_cell(seq[t:t + 1], state)
            forward_rows.append(out)
        state = zero_state(self.hidden_dim, dtype=dtype)[0]
        backward_rows = [None] * length
        for t in reversed(range(length)):
            out, state = self.backward_cell(seq[t:t + 1], state)
            backward_rows[t] = out
        return forward_rows, backward_rows

    def __call__(self, seq):
        r"""Per-row outputs, shape (L, out_dim)."""
        forward_rows, backward_rows = self._directions(seq)
        both = concat([concat(forward_rows, axis=0),
                       concat(backward_rows, axis=0)], axis=1)
        return self.proj(both)

    def pooled(self, seq):
        r"""Projected final states (last forward, first backward), (1, D)."""
        forward_rows, backward_rows = self._directions(seq)
        return self.proj(concat([forward_rows[-1], backward_rows[0]], axis=1))


def blstm_forward(seq, params, name='blstm', hidden_dim=None, out_dim=None):
    r"""Functional :class:`BLSTM` over existing parameters ``name.*``."""
    if hidden_dim is None:
        hidden_dim = params[name + '.fwd.w_h'].shape[0]
    if out_dim is None:
        out_dim = params[name + '.proj.weight'].shape[1]
    layer = BLSTM(params, name, seq.shape[-1], hidden_dim, out_dim)
    return layer(seq)
