"""Adam optimizer over named parameter blocks.

Standard bias-corrected Adam (beta1=0.9, beta2=0.999, eps=1e-8) with an
optional single-step learning-rate decay. State is a plain dataclass so
fits are resumable and fully deterministic.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError


@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_factor: float = 1.0
    decay_at: int | None = None
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict, learning_rate: float,
                   decay_factor: float = 1.0, decay_at: int | None = None) -> "AdamState":
        state = cls(learning_rate=learning_rate, decay_factor=decay_factor, decay_at=decay_at)
        state.first_moment = {k: np.zeros_like(v) for k, v in params.items()}
        state.second_moment = {k: np.zeros_like(v) for k, v in params.items()}
        return state

    def current_learning_rate(self) -> float:
        if self.decay_at is not None and self.step > self.decay_at:
            return self.learning_rate * self.decay_factor
        return self.learning_rate


def adam_step(state: AdamState, params: dict, grads: dict,
              frozen: tuple = ()) -> dict:
    """One Adam update; returns new parameter arrays, mutating only `state`.

    Blocks listed in `frozen` keep their values and accumulate no moments.
    """
    if set(params) != set(state.first_moment):
        raise ParameterError("parameter layout does not match optimizer state")
    state.step += 1
    lr = state.current_learning_rate()
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    updated = {}
    for key, value in params.items():
        if key in frozen:
            updated[key] = value.copy()
            continue
        g = grads[key]
        if g.shape != value.shape:
            raise ParameterError(f"gradient shape mismatch for block '{key}'")
        m = state.first_moment[key]
        v = state.second_moment[key]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        updated[key] = value - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return updated
