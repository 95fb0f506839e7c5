"""Differentiable tensor core, layers, optimizer and checkpoints."""
from vexel.nn.layers import MLP, LayerNorm, Linear, Module, MultiHeadAttention
from vexel.nn.tensor import Parameter, Tensor, no_grad

__all__ = ["MLP", "LayerNorm", "Linear", "Module", "MultiHeadAttention", "Parameter", "Tensor", "no_grad"]
