"""Adam with bias-corrected moments."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: Optional[np.ndarray] = field(default=None, repr=False)
    second_moment: Optional[np.ndarray] = field(default=None, repr=False)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState):
    """One Adam update; returns ``(new_param, state)``.

    ``param`` is not modified. The moment buffers in ``state`` are updated in
    place and created on the first call.
    """
    param = np.asarray(param, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != param.shape:
        raise ValueError(f"gradient shape {grad.shape} != parameter shape {param.shape}")
    if state.first_moment is None:
        state.first_moment = np.zeros_like(param)
        state.second_moment = np.zeros_like(param)
    state.step += 1
    m, v = state.first_moment, state.second_moment
    m *= state.beta1
    m += (1.0 - state.beta1) * grad
    v *= state.beta2
    v += (1.0 - state.beta2) * (grad * grad)
    m_hat = m / (1.0 - state.beta1 ** state.step)
    v_hat = v / (1.0 - state.beta2 ** state.step)
    return param - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon), state
