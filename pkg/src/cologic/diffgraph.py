#
#  Copyright © 2023 The Cologic contributors
#
#  This file is part of Cologic.
#
#  Cologic is free software under terms of the GNU Lesser
#  General Public License version 3 (LGPLv3) as published by the Free
#  Software Foundation. See the file README.rst for copying conditions.
#
"""
Reverse-mode differentiation
~~~~~~~~~~~~~~~~~~~~~~~~~~~~

A small tape-free autodiff engine over dense float64 arrays of rank 0, 1
or 2.  Each :class:`Value` remembers its parents and a backward rule that
maps the gradient of its output to one gradient per parent.

Only the operations the adaptation model and its losses need are provided,
including :func:`grl`, the gradient reversal layer: identity on the way
forward, gradient multiplied by ``-lambda`` on the way back.

Gradients accumulate across :func:`backward` calls until
:func:`zero_grads` (or :meth:`ParameterStore.zero_grads`) resets them.

A graph is built and differentiated by a single thread; separate graphs may
live on separate threads.
"""
import itertools
import logging
from collections import OrderedDict

import numpy as np

from cologic.constants import CE_CLAMP
from cologic.exceptions import DataError, NonScalarLoss, ParseError, ShapeMismatch
from cologic.io import read_json, write_json

__all__ = [
    "Value",
    "Parameter",
    "ParameterStore",
    "constant",
    "linear",
    "matmul",
    "relu",
    "mean_pool",
    "softmax",
    "cross_entropy",
    "scalar_combine",
    "sum_all",
    "grl",
    "apply_function",
    "topological_order",
    "backward",
    "zero_grads",
]

logger = logging.getLogger(__name__)

_ids = itertools.count()


class Value:
    """
    A node of the computation graph.

    :ivar data: the forward value (float64 array, rank <= 2).
    :ivar grad: accumulated gradient of the last differentiated losses.
    :ivar parents: input nodes.
    :ivar op: name of the producing operation, for debugging.
    :ivar id: creation order; strictly increasing.
    """

    __slots__ = ("data", "grad", "parents", "backward_rule", "op", "id")

    def __init__(self, data, parents=(), backward_rule=None, op="constant"):
        data = np.array(data, dtype=np.float64)
        if data.ndim > 2:
            raise ShapeMismatch("rank {0} values are not supported".format(data.ndim))
        self.data = data
        self.grad = np.zeros_like(data)
        self.parents = tuple(parents)
        self.backward_rule = backward_rule
        self.op = op
        self.id = next(_ids)

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data.reshape(()))

    def __repr__(self):
        return "<Value #{0} {1} shape={2}>".format(self.id, self.op, self.shape)


class Parameter:
    "A named, optionally trainable leaf."

    def __init__(self, name, data, trainable=True):
        self.name = name
        self.value = Value(data, op="parameter")
        self.trainable = trainable

    @property
    def data(self):
        return self.value.data

    @data.setter
    def data(self, new):
        new = np.asarray(new, dtype=np.float64)
        if new.shape != self.value.data.shape:
            raise ShapeMismatch(
                "{0}: cannot assign shape {1} to {2}".format(
                    self.name, new.shape, self.value.data.shape
                )
            )
        self.value.data = new.copy()

    @property
    def grad(self):
        return self.value.grad

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return "<Parameter {0} shape={1}>".format(self.name, self.shape)


def _node(x):
    if isinstance(x, Parameter):
        return x.value
    if isinstance(x, Value):
        return x
    return Value(x)


def constant(data):
    "A leaf that is never differentiated against."
    return Value(data)


def _require_matrix(value, what):
    if value.data.ndim != 2:
        raise ShapeMismatch(
            "{0} must be a matrix, got shape {1}".format(what, value.shape)
        )


#
# Operations
#


def matmul(a, b):
    "Matrix product ``a @ b``."
    a, b = _node(a), _node(b)
    _require_matrix(a, "left operand")
    _require_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch("cannot multiply {0} by {1}".format(a.shape, b.shape))

    def rule(g):
        return g @ b.data.T, a.data.T @ g

    return Value(a.data @ b.data, (a, b), rule, "matmul")


def linear(x, weight, bias=None):
    """
    ``x @ weight + bias`` for ``x`` of shape b x d, ``weight`` d x k and
    ``bias`` of k elements (broadcast over rows).
    """
    x, weight = _node(x), _node(weight)
    _require_matrix(x, "input")
    _require_matrix(weight, "weight")
    if x.shape[1] != weight.shape[0]:
        raise ShapeMismatch(
            "input {0} does not fit weight {1}".format(x.shape, weight.shape)
        )
    out = x.data @ weight.data
    if bias is None:

        def rule(g):
            return g @ weight.data.T, x.data.T @ g

        return Value(out, (x, weight), rule, "linear")

    bias = _node(bias)
    if bias.data.size != weight.shape[1] or bias.data.ndim > 2:
        raise ShapeMismatch(
            "bias {0} does not fit weight {1}".format(bias.shape, weight.shape)
        )

    def rule_with_bias(g):
        return (
            g @ weight.data.T,
            x.data.T @ g,
            g.sum(axis=0).reshape(bias.shape),
        )

    out = out + bias.data.reshape(1, -1)
    return Value(out, (x, weight, bias), rule_with_bias, "linear")


def relu(x):
    x = _node(x)
    active = x.data > 0.0

    def rule(g):
        return (g * active,)

    return Value(np.where(active, x.data, 0.0), (x,), rule, "relu")


def mean_pool(x):
    "Averages the rows of a T x d matrix into a 1 x d matrix."
    x = _node(x)
    _require_matrix(x, "input")
    rows = x.shape[0]
    if rows == 0:
        raise ShapeMismatch("cannot pool zero rows")

    def rule(g):
        return (np.repeat(g / rows, rows, axis=0),)

    return Value(x.data.mean(axis=0, keepdims=True), (x,), rule, "mean_pool")


def softmax(x):
    "Softmax along the last axis (each row of a matrix)."
    x = _node(x)
    if x.data.ndim == 0:
        raise ShapeMismatch("softmax needs at least one axis")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def rule(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return Value(y, (x,), rule, "softmax")


def cross_entropy(probs, labels):
    """
    Mean negative log-likelihood of `labels` under the rows of `probs`.

    `probs` is a k-vector or a b x k matrix; `labels` an index or one index
    per row.  Probabilities are clamped at ``1e-12`` before the log, and the
    gradient is zero where the clamp is active.
    """
    probs = _node(probs)
    matrix = np.atleast_2d(probs.data)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if probs.data.ndim == 0 or labels.size != matrix.shape[0]:
        raise ShapeMismatch(
            "{0} labels for probabilities of shape {1}".format(labels.size, probs.shape)
        )
    if labels.min() < 0 or labels.max() >= matrix.shape[1]:
        raise ShapeMismatch("label outside 0..{0}".format(matrix.shape[1] - 1))
    rows = np.arange(labels.size)
    picked = matrix[rows, labels]
    clamped = np.maximum(picked, CE_CLAMP)
    loss = -np.log(clamped).mean()

    def rule(g):
        grad = np.zeros_like(matrix)
        grad[rows, labels] = np.where(
            picked > CE_CLAMP, -g / (clamped * labels.size), 0.0
        )
        return (grad.reshape(probs.shape),)

    return Value(loss, (probs,), rule, "cross_entropy")


def scalar_combine(terms):
    "Weighted sum of scalar values; `terms` is a list of ``(weight, value)``."
    weights = []
    nodes = []
    for weight, value in terms:
        value = _node(value)
        if value.data.size != 1:
            raise ShapeMismatch("scalar_combine takes scalar terms only")
        weights.append(float(weight))
        nodes.append(value)
    total = sum((w * float(v.data.reshape(())) for w, v in zip(weights, nodes)), 0.0)

    def rule(g):
        return tuple((w * g).reshape(v.shape) for w, v in zip(weights, nodes))

    return Value(total, nodes, rule, "scalar_combine")


def sum_all(x):
    x = _node(x)

    def rule(g):
        return (np.full(x.shape, float(g)),)

    return Value(x.data.sum(), (x,), rule, "sum")


def grl(x, lam=1.0):
    """
    Gradient reversal: returns a copy of `x` whose backward pass multiplies
    the incoming gradient by ``-lam``.
    """
    if lam < 0:
        raise DataError("the reversal strength must be non-negative")
    x = _node(x)

    def rule(g):
        return (-lam * g,)

    return Value(x.data.copy(), (x,), rule, "grl")


def apply_function(fn, *inputs, op="function"):
    """
    Wraps an arbitrary differentiable function as a graph node.

    `fn` receives the input arrays and returns ``(output, vjp)`` where
    ``vjp(g)`` maps the output gradient to one gradient per input.
    """
    nodes = [_node(x) for x in inputs]
    out, vjp = fn(*(n.data for n in nodes))

    def rule(g):
        grads = vjp(g)
        return tuple(
            np.asarray(gi, dtype=np.float64).reshape(n.shape)
            for gi, n in zip(grads, nodes)
        )

    return Value(out, nodes, rule, op)


#
# Backward pass
#


def topological_order(root):
    "All nodes reachable from `root`, every node listed once, parents first."
    root = _node(root)
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, finished = stack.pop()
        if finished:
            order.append(node)
            continue
        if node.id in seen:
            continue
        seen.add(node.id)
        stack.append((node, True))
        for parent in node.parents:
            if parent.id not in seen:
                stack.append((parent, False))
    return order


def backward(loss):
    """
    Adds d(loss)/d(node) to the ``grad`` of every node reachable from the
    scalar `loss`.

    Raises :class:`~cologic.exceptions.NonScalarLoss` for non-scalar roots.
    """
    loss = _node(loss)
    if loss.data.size != 1:
        raise NonScalarLoss(
            "cannot differentiate a value of shape {0}".format(loss.shape)
        )
    order = topological_order(loss)
    adjoint = {loss.id: np.ones_like(loss.data)}
    for node in reversed(order):
        g = adjoint.pop(node.id, None)
        if g is None:
            continue
        node.grad += g
        if node.backward_rule is None:
            continue
        for parent, parent_grad in zip(node.parents, node.backward_rule(g)):
            if parent.id in adjoint:
                adjoint[parent.id] = adjoint[parent.id] + parent_grad
            else:
                adjoint[parent.id] = parent_grad


def zero_grads(params):
    for param in params:
        param.grad[...] = 0.0


#
# Parameters and checkpoints
#


class ParameterStore:
    """
    An ordered collection of uniquely named :class:`Parameter` objects.

    Checkpoints are JSON objects mapping each name to
    ``{"shape": [...], "data": [...]}`` with the data in row-major order.
    Floats are written in shortest round-trip form, so loading a saved store
    restores it bit for bit.
    """

    def __init__(self):
        self._params = OrderedDict()

    def add(self, name, data, trainable=True):
        if name in self._params:
            raise DataError("duplicate parameter name {0!r}".format(name))
        param = Parameter(name, data, trainable)
        self._params[name] = param
        return param

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def trainable(self):
        return [p for p in self if p.trainable]

    def zero_grads(self):
        zero_grads(self)

    def copy(self):
        "A detached snapshot, e.g. for inference on another thread."
        other = ParameterStore()
        for param in self:
            other.add(param.name, param.data.copy(), param.trainable)
        return other

    def to_dict(self):
        return OrderedDict(
            (p.name, {"shape": list(p.shape), "data": p.data.ravel().tolist()})
            for p in self
        )

    @classmethod
    def from_dict(cls, doc):
        store = cls()
        for name, entry in doc.items():
            try:
                shape = tuple(int(n) for n in entry["shape"])
                data = np.array(entry["data"], dtype=np.float64).reshape(shape)
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(
                    "parameter {0!r}: malformed entry ({1})".format(name, exc)
                ) from None
            store.add(name, data)
        return store

    def save(self, path):
        write_json(path, self.to_dict(), sort_keys=False)

    @classmethod
    def load(cls, path):
        return cls.from_dict(read_json(path, usage=False))

    def equals(self, other):
        "Exact comparison of names, shapes and values."
        return self.names() == other.names() and all(
            np.array_equal(a.data, b.data) for a, b in zip(self, other)
        )
