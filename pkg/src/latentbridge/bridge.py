"""Forward/reverse mapping networks between the encoder and generator latent spaces.

The forward network squeezes an encoder latent into a short code ``z_comp``;
the reverse network expands ``z_comp`` into a generator latent. Both are
trained jointly on synthetic pairs obtained by decoding generator latents
and re-encoding the result, with E and G frozen.

Gram term: for a batch ``Z`` (B x d_C) of codes the penalty is
``||Z Z^T - I_B||_F^2 / B^2``. Applied to a single code, ``z z^T`` would be a
scalar and the penalty would only fix the norm, so the batch reading is the
only one that says anything about redundancy between dimensions. Dividing by
B^2 keeps the term comparable across batch sizes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .codec import (
    CodecPair,
    ProvenanceError,
    TrainingDiverged,
    encode,
    encode_batch,
    generate,
    linear_decay,
    sample_generator_latents,
)
from .geometry.metrics import normalize
from .geometry.shapes import split_indices
from .nn import checkpoint
from .nn.layers import INPUT, Network, ShapeError, dropout, gelu, layernorm, linear, net_backward, net_forward, residual_add
from .nn.optim import OptimizerState, optimizer_step

log = logging.getLogger(__name__)

# "linear" is a single affine layer, a baseline with a closed-form optimum
ARCH_VARIANTS = ("feedforward-residual", "deep-residual", "linear")


@dataclass
class ArchConfig:
    variant: str = "feedforward-residual"
    hidden: int = 256
    # deep-residual only
    n_hidden: int = 4

    def __post_init__(self):
        if self.variant not in ARCH_VARIANTS:
            raise ValueError(f"unknown architecture {self.variant!r}")


def feedforward_residual_specs(in_dim, out_dim, hidden, rate):
    """linear -> LN -> GELU -> dropout -> linear (+ first linear) -> LN -> GELU -> dropout -> linear."""
    return [
        linear(in_dim, hidden),
        layernorm(hidden),
        gelu(hidden),
        dropout(hidden, rate),
        linear(hidden, hidden),
        residual_add(hidden, 0),
        layernorm(hidden),
        gelu(hidden),
        dropout(hidden, rate),
        linear(hidden, out_dim),
    ]


def deep_residual_specs(in_dim, out_dim, hidden, rate, n_hidden=4):
    """Projection + LayerNorm kept as a global residual, then GELU hidden layers.

    The global residual is re-added after the first hidden layer; every fourth
    hidden layer also adds its own input to its output.
    """
    specs = [linear(in_dim, hidden), layernorm(hidden)]
    global_res = 1
    for k in range(1, n_hidden + 1):
        block_input = len(specs) - 1
        specs += [linear(hidden, hidden), gelu(hidden), dropout(hidden, rate)]
        if k == 1:
            specs.append(residual_add(hidden, global_res))
        if k % 4 == 0:
            specs.append(residual_add(hidden, block_input))
    specs.append(linear(hidden, out_dim))
    return specs


@dataclass
class MappingNetwork:
    direction: str  # "forward" (d_E -> d_C) or "reverse" (d_C -> d_G)
    variant: str
    net: Network

    @classmethod
    def build(cls, direction, arch: ArchConfig, in_dim, out_dim, rate=0.0, seed=0) -> MappingNetwork:
        if direction not in ("forward", "reverse"):
            raise ValueError(f"direction must be forward or reverse, got {direction!r}")
        if arch.variant == "linear":
            specs = [linear(in_dim, out_dim)]
        elif arch.variant == "feedforward-residual":
            specs = feedforward_residual_specs(in_dim, out_dim, arch.hidden, rate)
        else:
            specs = deep_residual_specs(in_dim, out_dim, arch.hidden, rate, arch.n_hidden)
        return cls(direction, arch.variant, Network(specs, seed=seed))

    @property
    def in_dim(self) -> int:
        return self.net.in_dim

    @property
    def out_dim(self) -> int:
        return self.net.out_dim

    def __call__(self, z) -> np.ndarray:
        return self.net(z)


@dataclass
class LossBreakdown:
    gram_term: float
    recon_term: float
    total: float
    lambda_gram: float
    lambda_gen: float

    @classmethod
    def combine(cls, gram, recon, lambda_gram, lambda_gen) -> LossBreakdown:
        return cls(float(gram), float(recon), float(lambda_gram * gram + lambda_gen * recon), lambda_gram, lambda_gen)


def gram_penalty(z: np.ndarray):
    """``||Z Z^T - I||_F^2 / B^2`` and its gradient with respect to ``Z``."""
    b = z.shape[0]
    resid = z @ z.T - np.eye(b)
    return float(np.sum(resid * resid)) / b**2, 4.0 * resid @ z / b**2


def recon_penalty(pred: np.ndarray, target: np.ndarray):
    """Batch mean of squared L2 error, and its gradient with respect to ``pred``."""
    b = pred.shape[0]
    diff = pred - target
    return float(np.sum(diff * diff)) / b, 2.0 * diff / b


def _check_batch(f_e: MappingNetwork, f_d: MappingNetwork, z_e, z_g, lambda_gram):
    if f_e.out_dim != f_d.in_dim:
        raise ShapeError(f"forward output {f_e.out_dim} != reverse input {f_d.in_dim}")
    z_e = np.asarray(z_e, dtype=np.float64)
    z_g = np.asarray(z_g, dtype=np.float64)
    if z_e.ndim != 2 or len(z_e) == 0:
        raise ValueError("need a non-empty (B, d_E) batch")
    if len(z_g) != len(z_e):
        raise ValueError("encoder and generator batches differ in size")
    if lambda_gram > 0 and len(z_e) > f_e.out_dim:
        raise ValueError(
            f"batch size {len(z_e)} exceeds d_C={f_e.out_dim}: rows cannot be orthonormal, gram loss infeasible"
        )
    return z_e, z_g


def _loss_and_grads(f_e, f_d, z_e, z_g, lambda_gram, lambda_gen, seed):
    z, cache_f = net_forward(f_e.net, z_e, mode="train", rng_seed=seed)
    pred, cache_r = net_forward(f_d.net, z, mode="train", rng_seed=seed + 1)
    gram, d_gram = gram_penalty(z)
    recon, d_pred = recon_penalty(pred, z_g)
    g_r, dz = net_backward(cache_r, lambda_gen * d_pred)
    g_f, _ = net_backward(cache_f, dz + lambda_gram * d_gram)
    return LossBreakdown.combine(gram, recon, lambda_gram, lambda_gen), g_f + g_r


def bridge_loss(f_e, f_d, batch_z_e, batch_z_g, lambda_gram=0.1, lambda_gen=1.0, mode="eval", rng_seed=0):
    """Joint loss: ``lambda_gram * gram_term + lambda_gen * recon_term`` for one batch."""
    z_e, z_g = _check_batch(f_e, f_d, batch_z_e, batch_z_g, lambda_gram)
    z, _ = net_forward(f_e.net, z_e, mode=mode, rng_seed=rng_seed)
    pred, _ = net_forward(f_d.net, z, mode=mode, rng_seed=rng_seed + 1)
    return LossBreakdown.combine(gram_penalty(z)[0], recon_penalty(pred, z_g)[0], lambda_gram, lambda_gen)


@dataclass
class PairedLatentDataset:
    z_e: np.ndarray
    z_g: np.ndarray
    splits: dict
    codec_fingerprint: bytes
    seed: int
    n_skipped: int = 0

    def split(self, name: str):
        idx = self.splits[name]
        return self.z_e[idx], self.z_g[idx]

    def __len__(self) -> int:
        return len(self.z_e)

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        np.save(d / "z_e.npy", self.z_e)
        np.save(d / "z_g.npy", self.z_g)
        meta = {
            "kind": "paired-latents",
            "n": len(self),
            "d_e": int(self.z_e.shape[1]),
            "d_g": int(self.z_g.shape[1]),
            "split_sizes": {k: int(len(v)) for k, v in self.splits.items()},
            "codec_fingerprint": self.codec_fingerprint.hex(),
            "seed": self.seed,
            "n_skipped": self.n_skipped,
        }
        (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return d

    @classmethod
    def load(cls, directory) -> PairedLatentDataset:
        d = Path(directory)
        meta = json.loads((d / "meta.json").read_text())
        z_e, z_g = np.load(d / "z_e.npy"), np.load(d / "z_g.npy")
        return cls(z_e, z_g, split_indices(len(z_e)), bytes.fromhex(meta["codec_fingerprint"]), meta["seed"], meta["n_skipped"])


def gen_paired_dataset(codec: CodecPair, n: int, seed: int, batch: int = 64) -> PairedLatentDataset:
    """Sample generator latents, decode them, re-encode the (normalized) clouds with E."""
    if n < 10:
        raise ValueError("need at least 10 pairs")
    codec.assert_frozen()
    z_g = sample_generator_latents(codec.prior, n, seed)
    z_e = np.empty((n, codec.d_e))
    ok = np.ones(n, dtype=bool)
    for start in range(0, n, batch):
        clouds = generate(codec.generator, z_g[start : start + batch])
        normed = np.empty_like(clouds)
        for j, c in enumerate(clouds):
            if np.all(np.isfinite(c)):
                normed[j] = normalize(c)
            else:
                normed[j] = 0.0
                ok[start + j] = False
        z_e[start : start + len(clouds)] = encode_batch(codec.encoder, normed)
    ok &= np.all(np.isfinite(z_e), axis=1)
    n_skipped = int((~ok).sum())
    if n_skipped:
        log.warning("skipped %d non-finite pairs", n_skipped)
    if n_skipped > 0.01 * n:
        raise TrainingDiverged(f"{n_skipped} of {n} pairs non-finite (more than 1%)")
    z_e, z_g = z_e[ok], z_g[ok]
    return PairedLatentDataset(z_e, z_g, split_indices(len(z_e)), codec.fingerprint, seed, n_skipped)


@dataclass
class TrainConfig:
    lambda_gram: float = 0.1
    lambda_gen: float = 1.0
    optimizer: str = "adam"
    lr: float = 1e-3
    lr_final: float = 1e-5
    decay_epochs: int = 10
    # Muon only: base rate of the Adam rule used for vector parameters
    adam_lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    momentum: float = 0.95
    ns_steps: int = 6
    weight_decay: float = 0.0
    epochs: int = 10
    batch_size: int = 16
    dropout: float = 0.0
    seed: int = 0

    def validate(self, d_c: int) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lambda_gram < 0 or self.lambda_gen < 0:
            raise ValueError("loss weights must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")
        if self.lambda_gram > 0 and self.batch_size > d_c:
            raise ValueError(f"batch_size {self.batch_size} > d_C {d_c} with a gram term")

    def optimizer_state(self) -> OptimizerState:
        return OptimizerState(
            self.optimizer,
            beta1=self.beta1,
            beta2=self.beta2,
            momentum=self.momentum,
            ns_steps=self.ns_steps,
            weight_decay=self.weight_decay,
            adam_lr=self.adam_lr,
        )


def _eval_split(f_e, f_d, z_e, z_g, cfg: TrainConfig) -> LossBreakdown:
    gram, recon, count = 0.0, 0.0, 0
    for start in range(0, len(z_e), cfg.batch_size):
        lb = bridge_loss(f_e, f_d, z_e[start : start + cfg.batch_size], z_g[start : start + cfg.batch_size], cfg.lambda_gram, cfg.lambda_gen)
        w = min(cfg.batch_size, len(z_e) - start)
        gram += lb.gram_term * w
        recon += lb.recon_term * w
        count += w
    return LossBreakdown.combine(gram / count, recon / count, cfg.lambda_gram, cfg.lambda_gen)


def _log_row(epoch, train_lb: LossBreakdown, val_lb: LossBreakdown, lr: float) -> dict:
    return {
        "epoch": epoch,
        "train_gram": train_lb.gram_term,
        "train_recon": train_lb.recon_term,
        "val_gram": val_lb.gram_term,
        "val_recon": val_lb.recon_term,
        "lr": lr,
    }


def train_bridge(
    dataset: PairedLatentDataset,
    f_arch: ArchConfig,
    r_arch: ArchConfig,
    config: TrainConfig,
    d_c: int = 64,
    expected_fingerprint: bytes | None = None,
    codec: CodecPair | None = None,
):
    """Jointly fit the forward and reverse networks on the train split.

    Returns ``(f_e, f_d, log_rows)``; the networks are the best-validation
    epoch's, snapped to float32. Log row 0 evaluates the initialization and
    rows 1..epochs follow each pass over the data. If ``codec`` is given it is checked to be
    untouched by training.
    """
    if expected_fingerprint is not None and expected_fingerprint != dataset.codec_fingerprint:
        raise ProvenanceError("paired dataset was generated with a different codec")
    if codec is not None:
        if codec.fingerprint != dataset.codec_fingerprint:
            raise ProvenanceError("paired dataset was generated with a different codec")
        codec.assert_frozen()
    d_e, d_g = dataset.z_e.shape[1], dataset.z_g.shape[1]
    if d_c > d_e:
        raise ValueError(f"d_C={d_c} must not exceed d_E={d_e}")
    config.validate(d_c)

    rng = np.random.default_rng(config.seed)
    f_e = MappingNetwork.build("forward", f_arch, d_e, d_c, config.dropout, seed=int(rng.integers(2**31)))
    f_d = MappingNetwork.build("reverse", r_arch, d_c, d_g, config.dropout, seed=int(rng.integers(2**31)))
    params = f_e.net.parameters() + f_d.net.parameters()
    opt = config.optimizer_state()
    tr_e, tr_g = dataset.split("train")
    va_e, va_g = dataset.split("val")
    if len(tr_e) < config.batch_size:
        raise ValueError("training split smaller than one batch")

    # row 0 is the untrained initialization, so the log shows the full drop
    init_tr = _eval_split(f_e, f_d, tr_e, tr_g, config)
    init_va = _eval_split(f_e, f_d, va_e, va_g, config) if len(va_e) else init_tr
    rows = [_log_row(0, init_tr, init_va, 0.0)]
    best = None
    last_good = (f_e.net.copy(), f_d.net.copy())
    for epoch in range(1, config.epochs + 1):
        lr = linear_decay(epoch - 1, config.lr, config.lr_final, config.decay_epochs)
        order = rng.permutation(len(tr_e))
        gram_sum = recon_sum = 0.0
        steps = 0
        for start in range(0, len(order) - config.batch_size + 1, config.batch_size):
            idx = order[start : start + config.batch_size]
            lb, grads = _loss_and_grads(
                f_e, f_d, tr_e[idx], tr_g[idx], config.lambda_gram, config.lambda_gen, int(rng.integers(2**31))
            )
            if not np.isfinite(lb.total):
                raise TrainingDiverged(f"non-finite bridge loss at epoch {epoch}", last_good, epoch)
            if config.optimizer == "muon":
                # vector parameters follow the same decay, relative to their own base rate
                opt.adam_lr = config.adam_lr * lr / config.lr
            optimizer_step(params, grads, opt, lr)
            f_e.net.mark_updated()
            f_d.net.mark_updated()
            gram_sum += lb.gram_term
            recon_sum += lb.recon_term
            steps += 1
        train_lb = LossBreakdown.combine(gram_sum / steps, recon_sum / steps, config.lambda_gram, config.lambda_gen)
        val_lb = _eval_split(f_e, f_d, va_e, va_g, config) if len(va_e) else train_lb
        if not np.isfinite(val_lb.total):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}", last_good, epoch)
        last_good = (f_e.net.copy(), f_d.net.copy())
        rows.append(_log_row(epoch, train_lb, val_lb, lr))
        log.info("bridge epoch %d train=%s val=%s", epoch, train_lb, val_lb)
        if best is None or val_lb.total < best[0]:
            best = (val_lb.total, epoch, last_good)

    f_e.net, f_d.net = best[2]
    f_e.net.round_to_f32()
    f_d.net.round_to_f32()
    if codec is not None:
        codec.assert_frozen()
    return f_e, f_d, rows


def write_log_csv(rows, path) -> None:
    fields = ["epoch", "train_gram", "train_recon", "val_gram", "val_recon", "lr"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{r[k]:.10g}" if isinstance(r[k], float) else r[k]) for k in fields})


def compress(encoder, f_e: MappingNetwork, pc) -> np.ndarray:
    """Cloud -> encoder latent -> compact code (eval mode, deterministic)."""
    z_e = encode(encoder, normalize(pc))
    if z_e.size != f_e.in_dim:
        raise ShapeError(f"encoder latent size {z_e.size} != forward network input {f_e.in_dim}")
    return f_e(z_e)


def decompress(f_d: MappingNetwork, generator: Network, z_comp) -> np.ndarray:
    """Compact code -> generator latent -> cloud."""
    z_comp = np.asarray(z_comp, dtype=np.float64)
    if z_comp.shape[-1] != f_d.in_dim:
        raise ShapeError(f"code length {z_comp.shape[-1]} != reverse network input {f_d.in_dim}")
    z_g = f_d(z_comp)
    if z_g.shape[-1] != generator.in_dim:
        raise ShapeError(f"reverse network output {z_g.shape[-1]} != generator input {generator.in_dim}")
    return generate(generator, z_g)


def interpolate(z_a, z_b, t: float) -> np.ndarray:
    z_a, z_b = np.asarray(z_a, dtype=np.float64), np.asarray(z_b, dtype=np.float64)
    if z_a.shape != z_b.shape:
        raise ShapeError("codes must have equal length")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    return (1.0 - t) * z_a + t * z_b


@dataclass
class Bridge:
    f_e: MappingNetwork
    f_d: MappingNetwork
    lambda_gram: float
    lambda_gen: float
    codec_fingerprint: bytes
    fingerprint: bytes = field(default=b"", init=False)

    def __post_init__(self):
        if self.f_e.out_dim != self.f_d.in_dim:
            raise ShapeError("forward output and reverse input widths differ")
        self.fingerprint = checkpoint.fingerprint(self.f_e.net, self.f_d.net)

    @property
    def d_c(self) -> int:
        return self.f_e.out_dim


def save_bridge(bridge: Bridge, directory, codec_dir=None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    checkpoint.save(bridge.f_e.net, d / "forward.sqzn")
    checkpoint.save(bridge.f_d.net, d / "reverse.sqzn")
    manifest = {
        "kind": "bridge",
        "d_e": bridge.f_e.in_dim,
        "d_c": bridge.d_c,
        "d_g": bridge.f_d.out_dim,
        "lambda_gram": bridge.lambda_gram,
        "lambda_gen": bridge.lambda_gen,
        "forward_variant": bridge.f_e.variant,
        "reverse_variant": bridge.f_d.variant,
        "codec_fingerprint": bridge.codec_fingerprint.hex(),
        "bridge_fingerprint": bridge.fingerprint.hex(),
        "files": {
            name: {"path": name, "sha256": hashlib.sha256((d / name).read_bytes()).hexdigest()}
            for name in ("forward.sqzn", "reverse.sqzn")
        },
    }
    if codec_dir is not None:
        manifest["codec_dir"] = str(Path(codec_dir))
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return d


def load_bridge(directory) -> tuple[Bridge, dict]:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    f_e = MappingNetwork("forward", manifest["forward_variant"], checkpoint.load(d / "forward.sqzn"))
    f_d = MappingNetwork("reverse", manifest["reverse_variant"], checkpoint.load(d / "reverse.sqzn"))
    bridge = Bridge(f_e, f_d, manifest["lambda_gram"], manifest["lambda_gen"], bytes.fromhex(manifest["codec_fingerprint"]))
    if bridge.fingerprint.hex() != manifest["bridge_fingerprint"]:
        raise ProvenanceError("bridge fingerprint does not match manifest")
    return bridge, manifest


def config_dict(cfg) -> dict:
    return asdict(cfg)


__all__ = [
    "INPUT",
    "ArchConfig",
    "Bridge",
    "LossBreakdown",
    "MappingNetwork",
    "PairedLatentDataset",
    "TrainConfig",
    "bridge_loss",
    "compress",
    "decompress",
    "gen_paired_dataset",
    "gram_penalty",
    "interpolate",
    "load_bridge",
    "recon_penalty",
    "save_bridge",
    "train_bridge",
    "write_log_csv",
]
