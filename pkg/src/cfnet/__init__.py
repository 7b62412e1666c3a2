"""Differentiable correlation filter layer, a depth-1 trainable tracking net,
and the tools to check, train, run and evaluate it."""

__version__ = "0.1.0"
