"""Numerical learning kernel: tensors with reverse-mode gradients, layers, Adam."""

from .layers import (AdaLNBlock, Embedding, LayerNorm, Linear, MLP, Module, MultiHeadAttention,
                     TransformerBlock, sinusoidal_embedding)
from .optim import Adam, clip_by_global_norm
from .tensor import Parameter, Tape, Tensor

__all__ = [
    "AdaLNBlock", "Adam", "Embedding", "LayerNorm", "Linear", "MLP", "Module", "MultiHeadAttention",
    "Parameter", "Tape", "Tensor", "TransformerBlock", "clip_by_global_norm",
    "sinusoidal_embedding",
]
