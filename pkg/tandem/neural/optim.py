from dataclasses import dataclass, field

import numpy as np

from ..exceptions import OptimizerError, ShapeError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **hyper):
        state = cls(**hyper)
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
        return state


def adam_step(state, params, grads):
    """In-place bias-corrected Adam update of ``params``; returns the state."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError(f"Adam got {len(params)} params, {len(grads)} grads, {len(state.m)} moments")
    for index, grad in enumerate(grads):
        if not np.isfinite(grad).all():
            raise OptimizerError(f"non-finite gradient in parameter #{index}")
        if grad.shape != params[index].shape:
            raise ShapeError(f"gradient #{index} has shape {grad.shape}, parameter {params[index].shape}")
    state.step += 1
    correction1 = 1 - state.beta1 ** state.step
    correction2 = 1 - state.beta2 ** state.step
    for param, grad, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1 - state.beta1) * grad
        v *= state.beta2
        v += (1 - state.beta2) * grad * grad
        update = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        param -= update.astype(param.dtype, copy=False)
    return state
