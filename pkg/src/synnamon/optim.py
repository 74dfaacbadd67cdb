"""Bias-corrected Adam over keyed parameter dictionaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch


@dataclass
class AdamState:
    """Optimizer moments keyed like the parameter dictionary. ``t`` advances
    once per call to ``adam_step``; moments for a key are created on its
    first gradient."""

    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")
        if self.t < 0:
            raise ValueError("step counter must be >= 0")


def adam_step(state: AdamState, params: dict, grads: dict) -> tuple[dict, AdamState]:
    """One update over the keys present in ``grads``; other parameters pass
    through untouched. Returns the new parameter dict and the mutated state.
    """
    state.t += 1
    correct1 = 1.0 - state.beta1 ** state.t
    correct2 = 1.0 - state.beta2 ** state.t
    updated = dict(params)
    for key, g in grads.items():
        if key not in params:
            raise KeyError(f"gradient for unknown parameter {key!r}")
        p = params[key]
        if g.shape != p.shape:
            raise ShapeMismatch(
                f"grad shape {g.shape} != param shape {p.shape} for {key!r}"
            )
        m = state.m.get(key)
        v = state.v.get(key)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[key] = m
        state.v[key] = v
        updated[key] = p - state.lr * (m / correct1) / (np.sqrt(v / correct2) + state.eps)
    return updated, state
