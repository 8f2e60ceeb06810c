"""SGD with momentum, learning-rate schedules, and a finite-difference check.

Update rule (weight decay is an additive gradient term, not decoupled):

    buffer <- momentum * buffer + grad + weight_decay * param
    param  <- param - lr * buffer
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .tensor import Tensor


class NanGradientError(RuntimeError):
    """A gradient contained NaN; the optimizer step was aborted."""


@dataclass
class OptimizerState:
    """Per-parameter momentum buffers plus the fixed SGD hyperparameters."""

    momentum: float = 0.9
    weight_decay: float = 1e-4
    base_lr: float = 0.1
    buffers: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0,1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight decay must be nonnegative, got {self.weight_decay}")
        if self.base_lr <= 0:
            raise ValueError(f"base learning rate must be positive, got {self.base_lr}")


class SgdMomentum:
    """Classic SGD-with-momentum over a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], momentum=0.9, weight_decay=1e-4,
                 base_lr=0.1):
        self.params = params
        self.state = OptimizerState(momentum=momentum, weight_decay=weight_decay,
                                    base_lr=base_lr)
        for name, p in params.items():
            self.state.buffers[name] = np.zeros_like(p.data)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self, lr: float):
        """One update at learning rate ``lr``; NaN gradients abort the step."""
        for name, p in self.params.items():
            if p.grad is None:
                continue
            if np.isnan(p.grad).any():
                raise NanGradientError(f"NaN gradient in parameter {name!r}; step aborted")
        m = self.state.momentum
        wd = self.state.weight_decay
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            buf = self.state.buffers[name]
            buf *= m
            buf += g
            if wd:
                buf += wd * p.data
            p.data -= lr * buf


def sgd_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
             state: OptimizerState, lr: float):
    """Functional form of the update; mutates params and state in place."""
    for name, g in grads.items():
        if g.shape != params[name].data.shape:
            raise ValueError(
                f"grad shape {g.shape} does not match param {name!r} "
                f"shape {params[name].data.shape}"
            )
        if np.isnan(g).any():
            raise NanGradientError(f"NaN gradient in parameter {name!r}; step aborted")
    for name, g in grads.items():
        p = params[name]
        buf = state.buffers.setdefault(name, np.zeros_like(p.data))
        buf *= state.momentum
        buf += g
        if state.weight_decay:
            buf += state.weight_decay * p.data
        p.data -= lr * buf


@dataclass
class LrSchedule:
    """Constant or half-period-cosine learning rate over a fixed step budget."""

    kind: str
    initial_lr: float
    total_steps: int

    KINDS = ("constant", "half-period-cosine")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}; expected {self.KINDS}")
        if self.initial_lr <= 0:
            raise ValueError(f"initial lr must be positive, got {self.initial_lr}")
        if self.total_steps <= 0:
            raise ValueError(f"total steps must be positive, got {self.total_steps}")

    def at(self, step: int) -> float:
        if self.kind == "constant":
            return self.initial_lr
        t = min(max(step, 0), self.total_steps)
        return self.initial_lr * 0.5 * (1.0 + math.cos(math.pi * t / self.total_steps))


def grad_check(forward, params: dict[str, Tensor], n_samples: int = 8,
               epsilon: float = 1e-3, seed: int = 0) -> float:
    """Compare analytic parameter gradients against central differences.

    ``forward`` maps the parameter dict to a scalar loss Tensor. The analytic
    pass runs in the parameters' native precision; the finite-difference
    oracle re-evaluates the loss on float64 copies. Returns the max over
    sampled entries of |analytic - numeric| / max(1, |analytic|).
    """
    if not 1e-6 <= epsilon <= 1e-2:
        raise ValueError(f"epsilon must be in [1e-6, 1e-2], got {epsilon}")
    for p in params.values():
        p.grad = None
    loss = forward(params)
    loss.backward()

    params64 = {
        name: Tensor(p.data.astype(np.float64), requires_grad=False)
        for name, p in params.items()
    }
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, p in params.items():
        analytic = p.grad
        if analytic is None:
            continue
        n = min(n_samples, p.data.size)
        idxs = rng.choice(p.data.size, size=n, replace=False)
        flat64 = params64[name].data.reshape(-1)
        for idx in idxs:
            orig = flat64[idx]
            flat64[idx] = orig + epsilon
            up = float(forward(params64).data)
            flat64[idx] = orig - epsilon
            down = float(forward(params64).data)
            flat64[idx] = orig
            numeric = (up - down) / (2.0 * epsilon)
            a = float(analytic.reshape(-1)[idx])
            err = abs(a - numeric) / max(1.0, abs(a))
            worst = max(worst, err)
    return worst
