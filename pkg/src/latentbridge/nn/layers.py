"""Dense layers with hand-written backward passes.

A :class:`Network` is a flat list of :class:`LayerSpec` entries plus their
parameters. Skip connections are expressed with ``residual-add`` layers that
name an earlier activation by index, so every architecture used in this
package (including the residual mapping networks) fits in a sequential list
and round-trips through the checkpoint format unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

LAYER_KINDS = ("linear", "layernorm", "gelu", "dropout", "residual-add")
LN_EPS = 1e-5
INPUT = -1  # residual source index meaning "the network input"


class ShapeError(ValueError):
    pass


class StaleCacheError(RuntimeError):
    pass


@dataclass
class LayerSpec:
    kind: str
    in_dim: int
    out_dim: int
    dropout_rate: float = 0.0
    # residual-add only: index of the layer whose output gets added (INPUT for x)
    source: int | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError(f"{self.kind}: dims must be positive, got {self.in_dim}->{self.out_dim}")
        if self.kind != "linear" and self.in_dim != self.out_dim:
            raise ValueError(f"{self.kind} must preserve width, got {self.in_dim}->{self.out_dim}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.dropout_rate}")
        if self.kind != "dropout" and self.dropout_rate != 0.0:
            raise ValueError("dropout_rate is only meaningful for dropout layers")
        if self.kind == "residual-add" and self.source is None:
            raise ValueError("residual-add needs a source index")

    def param_shapes(self) -> list[tuple[int, ...]]:
        if self.kind == "linear":
            return [(self.in_dim, self.out_dim), (self.out_dim,)]
        if self.kind == "layernorm":
            return [(self.out_dim,), (self.out_dim,)]
        return []


def linear(in_dim: int, out_dim: int) -> LayerSpec:
    return LayerSpec("linear", in_dim, out_dim)


def layernorm(dim: int) -> LayerSpec:
    return LayerSpec("layernorm", dim, dim)


def gelu(dim: int) -> LayerSpec:
    return LayerSpec("gelu", dim, dim)


def dropout(dim: int, rate: float) -> LayerSpec:
    return LayerSpec("dropout", dim, dim, dropout_rate=rate)


def residual_add(dim: int, source: int) -> LayerSpec:
    return LayerSpec("residual-add", dim, dim, source=source)


def init_params(spec: LayerSpec, rng: np.random.Generator) -> list[np.ndarray]:
    """Kaiming-uniform (fan-in) weights, zero biases, unit LayerNorm gain."""
    if spec.kind == "linear":
        bound = math.sqrt(6.0 / spec.in_dim)
        w = rng.uniform(-bound, bound, size=(spec.in_dim, spec.out_dim))
        return [w, np.zeros(spec.out_dim)]
    if spec.kind == "layernorm":
        return [np.ones(spec.out_dim), np.zeros(spec.out_dim)]
    return []


def _check_specs(specs: list[LayerSpec]) -> None:
    if not specs:
        raise ValueError("a network needs at least one layer")
    widths = [specs[0].in_dim]
    for i, s in enumerate(specs):
        if s.in_dim != widths[-1]:
            raise ShapeError(f"layer {i} ({s.kind}) expects width {s.in_dim}, previous layer gives {widths[-1]}")
        if s.kind == "residual-add":
            if not INPUT <= s.source < i:
                raise ValueError(f"layer {i}: residual source {s.source} must precede it")
            src_width = widths[s.source + 1]
            if src_width != s.in_dim:
                raise ShapeError(f"layer {i}: residual source width {src_width} != {s.in_dim}")
        widths.append(s.out_dim)


class Network:
    """Sequential stack of layers; parameters are float64 numpy arrays."""

    def __init__(self, specs, params=None, *, seed: int | None = 0):
        self.specs = list(specs)
        _check_specs(self.specs)
        if params is None:
            rng = np.random.default_rng(seed)
            params = [init_params(s, rng) for s in self.specs]
        if len(params) != len(self.specs):
            raise ValueError("need one parameter list per layer")
        self.params = []
        for i, (s, ps) in enumerate(zip(self.specs, params)):
            shapes = s.param_shapes()
            if [tuple(np.shape(p)) for p in ps] != shapes:
                raise ShapeError(f"layer {i} ({s.kind}): parameter shapes {[np.shape(p) for p in ps]} != {shapes}")
            self.params.append([np.array(p, dtype=np.float64) for p in ps])
        self.version = 0

    @property
    def in_dim(self) -> int:
        return self.specs[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.specs[-1].out_dim

    def parameters(self) -> list[np.ndarray]:
        return [p for ps in self.params for p in ps]

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def mark_updated(self) -> None:
        """Invalidate outstanding forward caches after an in-place parameter change."""
        self.version += 1

    def round_to_f32(self) -> None:
        """Snap parameters to float32-representable values (what checkpoints store)."""
        for p in self.parameters():
            p[...] = p.astype(np.float32)
        self.mark_updated()

    def copy(self) -> Network:
        return Network(self.specs, [[p.copy() for p in ps] for ps in self.params])

    def __call__(self, x) -> np.ndarray:
        y, _ = net_forward(self, x, mode="eval")
        return y


@dataclass
class ForwardCache:
    net: Network
    version: int
    mode: str
    squeeze: bool
    records: list = field(default_factory=list)


def _gelu_cdf(x):
    return 0.5 * (1.0 + erf(x / math.sqrt(2.0)))


def net_forward(net: Network, x, mode: str = "eval", rng_seed: int = 0, dtype=np.float64):
    """Run ``net`` on a batch ``x`` of shape (batch, in_dim) or (in_dim,).

    Returns ``(y, cache)``. Dropout masks are drawn from a generator seeded
    with ``rng_seed`` so train-mode passes are reproducible. ``dtype`` may be
    float32 for inference; training should stay in float64.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x, dtype=dtype)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ShapeError(f"input shape {x.shape} does not match network input width {net.in_dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("network input contains non-finite values")

    rng = np.random.default_rng(rng_seed) if mode == "train" else None
    cache = ForwardCache(net, net.version, mode, squeeze)
    acts = [x]  # acts[i + 1] is the output of layer i
    h = x
    for spec, ps in zip(net.specs, net.params):
        ps = [p.astype(dtype, copy=False) for p in ps]
        kind = spec.kind
        if kind == "linear":
            rec = h
            h = h @ ps[0] + ps[1]
        elif kind == "layernorm":
            mu = h.mean(axis=1, keepdims=True)
            xc = h - mu
            inv = 1.0 / np.sqrt((xc * xc).mean(axis=1, keepdims=True) + LN_EPS)
            xhat = xc * inv
            rec = (xhat, inv)
            h = xhat * ps[0] + ps[1]
        elif kind == "gelu":
            rec = h
            h = h * _gelu_cdf(h)
        elif kind == "dropout":
            if mode == "train" and spec.dropout_rate > 0.0:
                keep = 1.0 - spec.dropout_rate
                mask = (rng.random(h.shape) < keep).astype(dtype) / keep
                h = h * mask
                rec = mask
            else:
                rec = None
        else:  # residual-add
            rec = None
            h = h + acts[spec.source + 1]
        cache.records.append(rec)
        acts.append(h)
    if mode == "eval":
        cache.records = []
    y = h[0] if squeeze else h
    return y, cache


def net_backward(cache: ForwardCache, upstream_grad):
    """Backpropagate ``upstream_grad`` (dL/dy) through a train-mode forward pass.

    Returns ``(param_grads, input_grad)`` where ``param_grads`` is aligned with
    ``net.parameters()``.
    """
    net = cache.net
    if cache.mode != "train":
        raise StaleCacheError("backward needs a cache from a train-mode forward pass")
    if cache.version != net.version:
        raise StaleCacheError("network parameters changed since this forward pass")
    g = np.asarray(upstream_grad, dtype=np.float64)
    if cache.squeeze:
        g = g[None, :]
    n_layers = len(net.specs)
    pending: dict[int, np.ndarray] = {}
    grads: list[list[np.ndarray]] = [[] for _ in range(n_layers)]

    for i in range(n_layers - 1, -1, -1):
        if i in pending:
            g = g + pending.pop(i)
        spec, ps, rec = net.specs[i], net.params[i], cache.records[i]
        kind = spec.kind
        if kind == "linear":
            grads[i] = [rec.T @ g, g.sum(axis=0)]
            g = g @ ps[0].T
        elif kind == "layernorm":
            xhat, inv = rec
            grads[i] = [(g * xhat).sum(axis=0), g.sum(axis=0)]
            dxhat = g * ps[0]
            d = xhat.shape[1]
            g = inv / d * (
                d * dxhat
                - dxhat.sum(axis=1, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=1, keepdims=True)
            )
        elif kind == "gelu":
            pdf = np.exp(-0.5 * rec * rec) / math.sqrt(2.0 * math.pi)
            g = g * (_gelu_cdf(rec) + rec * pdf)
        elif kind == "dropout":
            if rec is not None:
                g = g * rec
        else:
            src = spec.source
            pending[src] = pending.get(src, 0.0) + g
    if INPUT in pending:
        g = g + pending.pop(INPUT)

    flat = [gr for layer in grads for gr in layer]
    input_grad = g[0] if cache.squeeze else g
    return flat, input_grad
