from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    """SGD with momentum and L2 weight decay.

    Update: ``v <- momentum*v - lr*(g + l2*p)``, ``p <- p + v``. The L2 term is applied to
    conv/dense weights and biases only, never to batch-norm gamma/beta.
    """

    learning_rate: float = 1e-3
    momentum: float = 0.9
    l2_lambda: float = 1e-4
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be >= 0")


def decays(name: str) -> bool:
    return not name.startswith("bn")


def sgdm_step(params: dict, grads: dict, state: OptimizerState) -> None:
    """In-place update of ``params`` and ``state.velocity``."""
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        v = state.velocity.get(name)
        if v is None:
            v = state.velocity[name] = np.zeros_like(p)
        step = g + state.l2_lambda * p if decays(name) else g
        v *= state.momentum
        v -= state.learning_rate * step
        p += v
