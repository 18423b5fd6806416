"""Tape-based reverse-mode differentiation over float64 numpy arrays.

Operations record onto the innermost active :class:`Tape` whenever one of
their inputs requires a gradient. Outside a tape every op is a plain numpy
call, which is what inference and sampling use.

    with Tape() as tape:
        loss = model(x)
    grads = tape.backward(loss, model.parameters())
"""

import threading

import numpy as np
import scipy.sparse as sp

from ..errors import ShapeMismatch, StaleTape

_local = threading.local()


def _tape_stack():
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def current_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "_version")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self._version = 0

    shape = property(lambda self: self.data.shape)
    ndim = property(lambda self: self.data.ndim)

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    def numpy(self):
        return self.data

    def __len__(self):
        return len(self.data)

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)


class Parameter(Tensor):
    """A leaf tensor owned by a module and updated in place by an optimizer."""

    __slots__ = ()

    def __init__(self, data, name=None):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True, name=name)

    def assign(self, value):
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.data.shape:
            raise ShapeMismatch(f"cannot assign {value.shape} into {self.data.shape}")
        self.data[...] = value
        self._version += 1


class Tape:
    """Records operations in execution order; consumed by a single :meth:`backward`."""

    def __init__(self):
        self.nodes = []
        self.leaves = {}
        self.consumed = False

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().remove(self)
        return False

    def record(self, out, inputs, backward):
        for x in inputs:
            if isinstance(x, Parameter) and id(x) not in self.leaves:
                self.leaves[id(x)] = (x, x._version)
        self.nodes.append((out, inputs, backward))

    def backward(self, output, params=None, output_grad=None):
        """Gradients of ``output`` with respect to ``params``.

        Returns a list aligned with ``params``; when ``params`` is None a dict
        keyed by every parameter the tape touched. Parameters the output does
        not depend on get zero arrays.
        """
        if self.consumed:
            raise StaleTape("tape already consumed by a previous backward pass")
        for p, version in self.leaves.values():
            if p._version != version:
                raise StaleTape(f"parameter {p.name or p.shape} changed after forward")
        self.consumed = True
        if output_grad is None:
            if output.data.size != 1:
                raise ShapeMismatch("output gradient required for non-scalar outputs")
            output_grad = np.ones_like(output.data)
        output_grad = np.asarray(output_grad, dtype=np.float64)
        if output_grad.shape != output.shape:
            raise ShapeMismatch(f"output gradient {output_grad.shape} vs output {output.shape}")
        grads = {id(output): output_grad}
        for out, inputs, fn in reversed(self.nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for x, gx in zip(inputs, fn(g)):
                if gx is None or not (isinstance(x, Tensor) and x.requires_grad):
                    continue
                prev = grads.get(id(x))
                grads[id(x)] = gx if prev is None else prev + gx
        self.nodes = []
        if params is None:
            return {p: grads.get(id(p), np.zeros_like(p.data)) for p, _ in self.leaves.values()}
        return [grads.get(id(p), np.zeros_like(p.data)) for p in params]


def _data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _make(out_data, inputs, backward):
    tape = current_tape()
    needs = tape is not None and any(isinstance(x, Tensor) and x.requires_grad for x in inputs)
    out = Tensor(out_data, requires_grad=needs)
    if needs:
        tape.record(out, inputs, backward)
    return out


def unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def constant(x):
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# elementwise


def add(a, b):
    ad, bd = _data(a), _data(b)
    return _make(ad + bd, (a, b), lambda g: (unbroadcast(g, ad.shape), unbroadcast(g, bd.shape)))


def sub(a, b):
    ad, bd = _data(a), _data(b)
    return _make(ad - bd, (a, b), lambda g: (unbroadcast(g, ad.shape), unbroadcast(-g, bd.shape)))


def mul(a, b):
    ad, bd = _data(a), _data(b)
    return _make(ad * bd, (a, b),
                 lambda g: (unbroadcast(g * bd, ad.shape), unbroadcast(g * ad, bd.shape)))


def div(a, b):
    ad, bd = _data(a), _data(b)
    out = ad / bd
    return _make(out, (a, b),
                 lambda g: (unbroadcast(g / bd, ad.shape), unbroadcast(-g * out / bd, bd.shape)))


def square(a):
    ad = _data(a)
    return _make(ad * ad, (a,), lambda g: (2.0 * ad * g,))


def exp(a):
    out = np.exp(_data(a))
    return _make(out, (a,), lambda g: (g * out,))


def log(a):
    ad = _data(a)
    return _make(np.log(ad), (a,), lambda g: (g / ad,))


def tanh(a):
    out = np.tanh(_data(a))
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    out = 0.5 * (1.0 + np.tanh(0.5 * _data(a)))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a):
    ad = _data(a)
    return _make(np.maximum(ad, 0.0), (a,), lambda g: (g * (ad > 0),))


def silu(a):
    ad = _data(a)
    s = 0.5 * (1.0 + np.tanh(0.5 * ad))
    return _make(ad * s, (a,), lambda g: (g * s * (1.0 + ad * (1.0 - s)),))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a):
    """tanh approximation of GELU."""
    x = _data(a)
    x2 = x * x
    inner = _GELU_C * x * (1.0 + 0.044715 * x2)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return _make(out, (a,), backward)


def softplus(a):
    x = _data(a)
    out = np.logaddexp(0.0, x)
    return _make(out, (a,), lambda g: (g * 0.5 * (1.0 + np.tanh(0.5 * x)),))


# ---------------------------------------------------------------------------
# reductions and shape ops


def sum_(a, axis=None, keepdims=False):
    ad = _data(a)
    out = ad.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, ad.shape).copy(),)

    return _make(out, (a,), backward)


def mean(a, axis=None, keepdims=False):
    ad = _data(a)
    count = ad.size if axis is None else np.prod([ad.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis, keepdims), 1.0 / count)


def reshape(a, shape):
    ad = _data(a)
    return _make(ad.reshape(shape), (a,), lambda g: (g.reshape(ad.shape),))


def transpose(a, axes=None):
    ad = _data(a)
    if axes is None:
        axes = tuple(reversed(range(ad.ndim)))
    inv = tuple(np.argsort(axes))
    return _make(ad.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def swapaxes(a, i, j):
    ad = _data(a)
    axes = list(range(ad.ndim))
    axes[i], axes[j] = axes[j], axes[i]
    return transpose(a, tuple(axes))


def getitem(a, index):
    ad = _data(a)

    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(p, (int, slice, type(None), type(Ellipsis))) for p in parts)

    def backward(g):
        out = np.zeros_like(ad)
        if basic:
            out[index] += g
        else:
            np.add.at(out, index, g)
        return (out,)

    return _make(ad[index], (a,), backward)


def concat(tensors, axis=-1):
    datas = [_data(t) for t in tensors]
    sizes = np.cumsum([d.shape[axis] for d in datas])[:-1]
    return _make(np.concatenate(datas, axis=axis), tuple(tensors),
                 lambda g: tuple(np.split(g, sizes, axis=axis)))


def take_rows(table, index):
    """``table[index]`` for an integer index array (embedding lookup)."""
    td = _data(table)
    index = np.asarray(index)

    def backward(g):
        flat = index.reshape(-1)
        # scatter-add as a sparse product; much faster than np.add.at for many rows
        scatter = sp.csr_matrix((np.ones(len(flat)), (flat, np.arange(len(flat)))),
                                shape=(td.shape[0], len(flat)))
        return (np.asarray(scatter @ g.reshape(len(flat), -1)).reshape(td.shape),)

    return _make(td[index], (table,), backward)


def sparse_matmul(matrix, a):
    """``matrix @ a`` for a constant scipy.sparse ``matrix``."""
    ad = _data(a)
    return _make(np.asarray(matrix @ ad), (a,), lambda g: (np.asarray(matrix.T @ g),))


# ---------------------------------------------------------------------------
# linear algebra and normalization


def matmul(a, b):
    ad, bd = _data(a), _data(b)
    if ad.shape[-1] != bd.shape[-2 if bd.ndim > 1 else 0]:
        raise ShapeMismatch(f"matmul {ad.shape} @ {bd.shape}")
    if bd.ndim == 1 or ad.ndim == 1:
        raise ShapeMismatch("matmul expects operands with ndim >= 2")

    if bd.ndim == 2 and ad.ndim > 2:
        # batched input times a weight matrix: do the work as one 2-D product
        a2 = ad.reshape(-1, ad.shape[-1])

        def backward(g):
            g2 = g.reshape(-1, g.shape[-1])
            return (g2 @ bd.T).reshape(ad.shape), a2.T @ g2

        return _make((a2 @ bd).reshape(ad.shape[:-1] + (bd.shape[1],)), (a, b), backward)

    def backward(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return unbroadcast(ga, ad.shape), unbroadcast(gb, bd.shape)

    return _make(ad @ bd, (a, b), backward)


def softmax(a, axis=-1):
    x = _data(a)
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), backward)


def log_softmax(a, axis=-1):
    x = _data(a)
    shifted = x - x.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _make(out, (a,), backward)


def layer_norm(a, gamma=None, beta=None, eps=1e-5):
    """Normalize over the last axis; ``gamma``/``beta`` are optional affine terms."""
    x = _data(a)
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    inputs = (a,) + tuple(t for t in (gamma, beta) if t is not None)
    gd = None if gamma is None else _data(gamma)
    out = xhat if gd is None else xhat * gd
    if beta is not None:
        out = out + _data(beta)

    def backward(g):
        gx = g if gd is None else g * gd
        n = x.shape[-1]
        dx = inv / n * (n * gx - gx.sum(-1, keepdims=True)
                        - xhat * (gx * xhat).sum(-1, keepdims=True))
        grads = [dx]
        if gamma is not None:
            grads.append(unbroadcast(g * xhat, gd.shape))
        if beta is not None:
            grads.append(unbroadcast(g, _data(beta).shape))
        return tuple(grads)

    return _make(out, inputs, backward)
