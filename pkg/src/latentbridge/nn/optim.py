"""Adam and Muon, operating in place on lists of numpy parameter arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Standard quintic Newton-Schulz coefficients (input pre-scaled by its Frobenius norm).
NS_COEFFS = (3.4445, -4.7750, 2.0315)


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class OptimizerState:
    kind: str
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    momentum: float = 0.95
    ns_steps: int = 6
    nesterov: bool = True
    # learning rate for vector parameters under Muon; None means "use lr"
    adam_lr: float | None = None
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    buf: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("adam", "muon"):
            raise ValueError(f"unknown optimizer {self.kind!r}")

    def ensure_buffers(self, params):
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
            if self.kind == "muon":
                self.buf = [np.zeros_like(p) for p in params]
        if len(self.m) != len(params) or any(m.shape != p.shape for m, p in zip(self.m, params)):
            raise ValueError("optimizer buffers do not match parameter shapes")


def _check_grads(params, grads):
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if p.shape != np.shape(g):
            raise ValueError(f"gradient shape {np.shape(g)} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("non-finite gradient; optimizer state left unchanged")


def _adam_update(p, g, m, v, state: OptimizerState, lr: float) -> None:
    m *= state.beta1
    m += (1.0 - state.beta1) * g
    v *= state.beta2
    v += (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1**state.step)
    v_hat = v / (1.0 - state.beta2**state.step)
    if state.weight_decay:
        p -= lr * state.weight_decay * p
    p -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


def adam_step(params, grads, state: OptimizerState, lr: float):
    """One bias-corrected Adam step (decoupled weight decay if configured)."""
    if state.kind != "adam":
        raise ValueError("adam_step needs an adam optimizer state")
    _check_grads(params, grads)
    state.ensure_buffers(params)
    state.step += 1
    for p, g, m, v in zip(params, grads, state.m, state.v):
        _adam_update(p, g, m, v, state, lr)
    return params, state


def newton_schulz(g: np.ndarray, steps: int = 6) -> np.ndarray:
    """Approximate the orthogonal polar factor U V^T of ``g`` with the quintic iteration.

    The fixed coefficients trade exact convergence for speed: singular values
    land roughly in [0.68, 1.13] rather than exactly at 1.
    """
    a, b, c = NS_COEFFS
    x = np.asarray(g, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("Newton-Schulz needs a matrix")
    transposed = x.shape[0] > x.shape[1]
    if transposed:
        x = x.T
    x = x / (np.linalg.norm(x) + 1e-7)
    for _ in range(steps):
        gram = x @ x.T
        x = a * x + (b * gram + c * gram @ gram) @ x
    return x.T if transposed else x


def muon_step(params, grads, state: OptimizerState, lr: float):
    """Muon for matrices; biases and LayerNorm gains fall back to the Adam rule."""
    if state.kind != "muon":
        raise ValueError("muon_step needs a muon optimizer state")
    _check_grads(params, grads)
    state.ensure_buffers(params)
    state.step += 1
    vec_lr = lr if state.adam_lr is None else state.adam_lr
    for p, g, m, v, buf in zip(params, grads, state.m, state.v, state.buf):
        if p.ndim != 2:
            _adam_update(p, g, m, v, state, vec_lr)
            continue
        buf *= state.momentum
        buf += g
        direction = g + state.momentum * buf if state.nesterov else buf
        if state.weight_decay:
            p -= lr * state.weight_decay * p
        p -= lr * newton_schulz(direction, state.ns_steps)
    return params, state


def optimizer_step(params, grads, state: OptimizerState, lr: float):
    if state.kind == "adam":
        return adam_step(params, grads, state, lr)
    return muon_step(params, grads, state, lr)
