"""Gradient clipping and SGD with Nesterov momentum."""

from __future__ import annotations

import numpy as np

GRADIENT_CLIP_BOUND = 10.0
MOMENTUM = 0.9


def clip_gradients(grads: dict, bound: float = GRADIENT_CLIP_BOUND) -> dict:
    """Clamp every gradient element into [-bound, bound] (idempotent).

    Clips in place (each backward pass hands over fresh arrays, and the
    largest nets carry tens of millions of gradients per step).
    """
    for g in grads.values():
        np.clip(g, -bound, bound, out=g)
    return grads


class NesterovSGD:
    """SGD with Nesterov momentum in the lookahead formulation:

        v <- mu * v - lr * g
        p <- p + mu * v - lr * g

    Parameters are updated in place; velocity buffers mirror parameter
    shapes and start at zero.
    """

    def __init__(self, params: dict, learning_rate: float, momentum: float = MOMENTUM):
        self.params = params
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity = {key: np.zeros_like(value) for key, value in params.items()}
        # Persistent scratch avoids re-faulting a fresh temp every step on
        # multi-million-parameter nets (the update is memory-bound).
        self._scratch = {key: np.empty_like(value) for key, value in params.items()}

    def step(self, grads: dict):
        lr = self.learning_rate
        mu = self.momentum
        for key, p in self.params.items():
            g = grads[key]
            v = self.velocity[key]
            g *= lr  # gradients are per-step scratch; scale once, reuse twice
            v *= mu
            v -= g
            p -= g
            scratch = np.multiply(v, mu, out=self._scratch[key])
            p += scratch
