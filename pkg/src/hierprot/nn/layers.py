"""Modules built on the tape: dense, layer norm, attention, transformer blocks."""

import numpy as np

from . import tensor as T
from .tensor import Parameter


class Module:
    """Minimal container: parameters are discovered from attributes in definition order."""

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            yield from _walk(value, f"{prefix}{name}")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in own.items():
            p.assign(state[name])

    def num_parameters(self):
        return sum(p.data.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _walk(value, name):
    if isinstance(value, Parameter):
        value.name = name
        yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(name + ".")
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            yield from _walk(v, f"{name}.{i}")
    elif isinstance(value, dict):
        for k, v in value.items():
            yield from _walk(v, f"{name}.{k}")


def uniform_init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, n_in, n_out, rng, bias=True):
        self.weight = Parameter(uniform_init(rng, (n_in, n_out), n_in))
        self.bias = Parameter(uniform_init(rng, (n_out,), n_in)) if bias else None

    def forward(self, x):
        y = T.matmul(x, self.weight)
        return y if self.bias is None else T.add(y, self.bias)


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5):
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))
        self.eps = eps

    def forward(self, x):
        return T.layer_norm(x, self.gamma, self.beta, self.eps)


class Embedding(Module):
    def __init__(self, num, dim, rng):
        self.weight = Parameter(rng.uniform(-1.0, 1.0, size=(num, dim)) / np.sqrt(dim))

    def forward(self, index):
        return T.take_rows(self.weight, index)


class MLP(Module):
    def __init__(self, dims, rng, activation=T.gelu, bias=True):
        self.layers = [Linear(a, b, rng, bias=bias) for a, b in zip(dims[:-1], dims[1:])]
        self.activation = activation

    def forward(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = self.activation(x)
        return x


def causal_mask(length):
    return np.tril(np.ones((length, length), dtype=bool))


class MultiHeadAttention(Module):
    def __init__(self, dim, heads, rng):
        if dim % heads:
            raise ValueError(f"hidden size {dim} not divisible by {heads} heads")
        self.heads = heads
        self.q = Linear(dim, dim, rng)
        self.k = Linear(dim, dim, rng)
        self.v = Linear(dim, dim, rng)
        self.out = Linear(dim, dim, rng)

    def _split(self, x):
        # (B, L, D) -> (B, H, L, D/H)
        b, n, d = x.shape
        return T.transpose(T.reshape(x, (b, n, self.heads, d // self.heads)), (0, 2, 1, 3))

    def forward(self, x, key_mask=None, causal=False):
        """``key_mask``: (B, L) bool, False marks padding keys."""
        b, n, d = x.shape
        q, k, v = self._split(self.q(x)), self._split(self.k(x)), self._split(self.v(x))
        scores = T.mul(T.matmul(q, T.swapaxes(k, -1, -2)), 1.0 / np.sqrt(d // self.heads))
        allowed = np.ones((b, 1, n, n), dtype=bool)
        if key_mask is not None:
            allowed = allowed & np.asarray(key_mask, dtype=bool)[:, None, None, :]
        if causal:
            allowed = allowed & causal_mask(n)[None, None]
        if not allowed.all():
            # every query keeps at least itself so padded rows stay finite
            allowed = allowed | np.eye(n, dtype=bool)[None, None]
            scores = T.add(scores, np.where(allowed, 0.0, -1e9))
        attn = T.softmax(scores, axis=-1)
        ctx = T.reshape(T.transpose(T.matmul(attn, v), (0, 2, 1, 3)), (b, n, d))
        return self.out(ctx)


class TransformerBlock(Module):
    """Pre-norm block: ``x + attn(LN x)`` then ``x + MLP(LN x)``."""

    def __init__(self, dim, heads, rng, mlp_ratio=2):
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.norm2 = LayerNorm(dim)
        self.mlp = MLP([dim, mlp_ratio * dim, dim], rng)

    def forward(self, x, key_mask=None, causal=False):
        x = T.add(x, self.attn(self.norm1(x), key_mask=key_mask, causal=causal))
        return T.add(x, self.mlp(self.norm2(x)))


class AdaLNBlock(Module):
    """Transformer block whose norms are modulated by a conditioning vector.

    A zero-initialized linear map of ``silu(cond)`` yields a shift, scale and
    gate per sublayer (adaLN-Zero), so every block starts as the identity.
    """

    def __init__(self, dim, heads, rng, cond_dim=None, mlp_ratio=2):
        self.dim = dim
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.mlp = MLP([dim, mlp_ratio * dim, dim], rng)
        self.modulation = Linear(cond_dim or dim, 6 * dim, rng)
        self.modulation.weight.assign(np.zeros_like(self.modulation.weight.data))
        self.modulation.bias.assign(np.zeros_like(self.modulation.bias.data))

    def forward(self, x, cond, key_mask=None, causal=False):
        d = self.dim
        m = T.reshape(self.modulation(T.silu(cond)), (x.shape[0], 1, 6 * d))
        shift1, scale1, gate1, shift2, scale2, gate2 = (m[:, :, i * d:(i + 1) * d] for i in range(6))
        h = T.add(T.mul(T.layer_norm(x), T.add(scale1, 1.0)), shift1)
        x = T.add(x, T.mul(gate1, self.attn(h, key_mask=key_mask, causal=causal)))
        h = T.add(T.mul(T.layer_norm(x), T.add(scale2, 1.0)), shift2)
        return T.add(x, T.mul(gate2, self.mlp(h)))


def sinusoidal_embedding(t, dim=64, max_period=10000.0):
    """Fixed sinusoidal embedding of integer steps; (B,) -> (B, dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / half)
    args = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)
