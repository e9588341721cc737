"""Adam as a pure function over parameter dicts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class AdamState:
    step: int
    m: dict
    v: dict

    @classmethod
    def zeros(cls, params: dict) -> "AdamState":
        return cls(0, {k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``.

    Inputs are not modified.
    """
    if params.keys() != grads.keys() or params.keys() != state.m.keys():
        raise ValueError("params, grads and state must share the same keys")
    t = state.step + 1
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape or state.m[k].shape != p.shape:
            raise ValueError(f"shape mismatch for {k!r}: param {p.shape}, grad {g.shape}")
        m = beta1 * state.m[k] + (1.0 - beta1) * g
        v = beta2 * state.v[k] + (1.0 - beta2) * g * g
        new_params[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_m[k] = m
        new_v[k] = v
    return new_params, AdamState(t, new_m, new_v)
