"""Gradient-descent updates with velocity momentum and weight decay."""

from __future__ import annotations

import numpy as np

from .tensor import ContractError, Tensor


class OptimizerState:
    """Hyperparameters plus per-parameter velocity buffers.

    Update rule: g' = g + weight_decay * theta; v <- momentum * v + g';
    theta <- theta - lr * v. With zero momentum and decay this is exactly
    theta - lr * g.
    """

    def __init__(self, lr: float, momentum: float = 0.0,
                 weight_decay: float = 0.0):
        if lr < 0:
            raise ContractError("learning rate must be non-negative")
        if not 0.0 <= momentum < 1.0:
            raise ContractError("momentum must be in [0, 1)")
        if weight_decay < 0:
            raise ContractError("weight decay must be non-negative")
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self.velocities: dict[int, np.ndarray] = {}


def sgd_step(params: list[Tensor], grads: list[np.ndarray],
             state: OptimizerState) -> list[Tensor]:
    """One in-place descent step on every parameter; returns params."""
    if len(params) != len(grads):
        raise ContractError("params/grads length mismatch")
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.asarray(g, dtype=p.dtype)
        if g.shape != p.shape:
            raise ContractError(
                f"grad shape {g.shape} does not match param {p.shape}")
        if state.weight_decay:
            g = g + state.weight_decay * p.data
        if state.momentum:
            v = state.velocities.get(i)
            if v is None:
                v = np.zeros_like(p.data)
            v = state.momentum * v + g
            state.velocities[i] = v
        else:
            v = g
        p.data = p.data - state.lr * v
    return params


class SGD:
    """Convenience wrapper binding an OptimizerState to a parameter list."""

    def __init__(self, params: list[Tensor], lr: float, momentum: float = 0.0,
                 weight_decay: float = 0.0):
        self.params = list(params)
        self.state = OptimizerState(lr, momentum, weight_decay)

    def step(self) -> None:
        grads = []
        for p in self.params:
            if p.grad is None:
                raise ContractError("step() before backward populated grads")
            grads.append(p.grad)
        sgd_step(self.params, grads, self.state)
