"""Toy point-cloud autoencoders standing in for a frozen encoder and generator.

Two autoencoders are trained independently (different widths, latent sizes
and seeds). The encoder of the first becomes E, the decoder of the second
becomes the generator G, so the two latent spaces have nothing in common
beyond the data they were fit on.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .geometry.metrics import as_cloud, chamfer_and_grad
from .nn import checkpoint
from .nn.layers import Network, ShapeError, gelu, linear, net_backward, net_forward
from .nn.optim import OptimizerState, adam_step

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    """Raised when a loss turns non-finite; carries the last finite parameters."""

    def __init__(self, message, checkpoint=None, epoch=None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.epoch = epoch


class ProvenanceError(ValueError):
    pass


@dataclass
class AEConfig:
    latent_dim: int = 256
    point_widths: tuple = (64, 128)
    head_widths: tuple = (256,)
    decoder_widths: tuple = (256, 512)
    n_points: int = 2048
    epochs: int = 40
    batch_size: int = 32
    lr: float = 1e-3
    lr_final: float = 1e-4
    # encoder sees a random subset of this many points per step (None: all)
    sample_points: int | None = 512
    # "principal" keeps latent correlations, "diagonal" is per-coordinate
    prior: str = "principal"


def _mlp(widths, *, final_act: bool) -> list:
    specs = []
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        specs.append(linear(a, b))
        if final_act or i < len(widths) - 2:
            specs.append(gelu(b))
    return specs


@dataclass
class PointEncoder:
    """Shared per-point MLP, max pooling over points, then a dense head."""

    point_net: Network
    head: Network

    @classmethod
    def build(cls, latent_dim, point_widths=(64, 128), head_widths=(256,), seed=0) -> PointEncoder:
        point_net = Network(_mlp((3, *point_widths), final_act=True), seed=seed)
        head = Network(_mlp((point_widths[-1], *head_widths, latent_dim), final_act=False), seed=seed + 1)
        return cls(point_net, head)

    @property
    def latent_dim(self) -> int:
        return self.head.out_dim

    def as_network(self) -> Network:
        """Both stages in one layer list (for checkpoints); pooling sits at ``pool_index``."""
        return Network(self.point_net.specs + self.head.specs, self.point_net.params + self.head.params)

    @property
    def pool_index(self) -> int:
        return len(self.point_net.specs)

    @classmethod
    def from_network(cls, net: Network, pool_index: int) -> PointEncoder:
        return cls(
            Network(net.specs[:pool_index], net.params[:pool_index]),
            Network(net.specs[pool_index:], net.params[pool_index:]),
        )

    def round_to_f32(self):
        self.point_net.round_to_f32()
        self.head.round_to_f32()

    def parameters(self):
        return self.point_net.parameters() + self.head.parameters()

    def mark_updated(self):
        self.point_net.mark_updated()
        self.head.mark_updated()

    def __call__(self, clouds) -> np.ndarray:
        return encode_batch(self, clouds)


def encode_batch(encoder: PointEncoder, clouds) -> np.ndarray:
    x = np.asarray(clouds, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != 3:
        raise ShapeError(f"expected clouds of shape (B, N, 3), got {x.shape}")
    b, n, _ = x.shape
    feats, _ = net_forward(encoder.point_net, x.reshape(b * n, 3))
    pooled = feats.reshape(b, n, -1).max(axis=1)
    z, _ = net_forward(encoder.head, pooled)
    return z


def encode(encoder: PointEncoder, pc) -> np.ndarray:
    """Latent of one (normalized) cloud; invariant to point order."""
    return encode_batch(encoder, as_cloud(pc)[None])[0]


def generate(generator: Network, z) -> np.ndarray:
    """Decode a latent (or a batch of latents) to point clouds."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != generator.in_dim or z.ndim not in (1, 2):
        raise ShapeError(f"latent shape {z.shape} does not match generator input width {generator.in_dim}")
    out, _ = net_forward(generator, z)
    return out.reshape(*z.shape[:-1], -1, 3)


@dataclass
class LatentPrior:
    """Gaussian over generator latents, diagonal in the frame given by ``basis``.

    ``basis`` holds orthonormal axes as columns; ``None`` means the coordinate
    axes, i.e. a plain per-coordinate diagonal Gaussian. Fitting with
    ``kind="principal"`` uses the principal axes of the training latents, so
    samples keep the correlations between coordinates.
    """

    mean: np.ndarray
    std: np.ndarray
    basis: np.ndarray | None = None

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("prior mean and std must be matching vectors")
        if np.any(self.std < 0):
            raise ValueError("prior std must be non-negative")
        if self.basis is not None:
            self.basis = np.asarray(self.basis, dtype=np.float64)
            if self.basis.shape != (self.mean.size, self.mean.size):
                raise ValueError("prior basis must be a square d_G x d_G matrix")

    @classmethod
    def fit(cls, latents, kind: str = "principal") -> LatentPrior:
        """Mean and per-axis std, rounded to float32 so save/load is exact."""
        z = np.asarray(latents, dtype=np.float64)
        f32 = lambda a: np.asarray(a, dtype=np.float32).astype(np.float64)
        mean = f32(z.mean(axis=0))
        if kind == "diagonal":
            return cls(mean, f32(np.maximum(z.std(axis=0), 1e-6)))
        if kind != "principal":
            raise ValueError(f"unknown prior kind {kind!r}")
        zc = z - z.mean(axis=0)
        evals, evecs = np.linalg.eigh(zc.T @ zc / max(len(z), 1))
        order = np.argsort(evals)[::-1]
        evecs = evecs[:, order]
        # fix the sign of each axis so refits are reproducible
        evecs *= np.where(evecs[np.argmax(np.abs(evecs), axis=0), np.arange(evecs.shape[1])] < 0, -1.0, 1.0)
        std = np.sqrt(np.maximum(evals[order], 0.0))
        return cls(mean, f32(np.maximum(std, 1e-6)), f32(evecs))

    def to_bytes(self) -> bytes:
        parts = [self.mean, self.std] + ([self.basis.ravel()] if self.basis is not None else [])
        return np.concatenate(parts).astype("<f4").tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes, d_g: int) -> LatentPrior:
        a = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        if a.size == 2 * d_g:
            return cls(a[:d_g], a[d_g:])
        if a.size == 2 * d_g + d_g * d_g:
            return cls(a[:d_g], a[d_g : 2 * d_g], a[2 * d_g :].reshape(d_g, d_g))
        raise ValueError(f"prior blob of {a.size} floats does not fit d_G={d_g}")


def sample_generator_latents(prior: LatentPrior, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    eps = prior.std * rng.standard_normal((n, prior.mean.size))
    if prior.basis is not None:
        eps = eps @ prior.basis.T
    return prior.mean + eps


def sample_generator_latent(prior: LatentPrior, seed: int) -> np.ndarray:
    """``mean + basis @ (std * N(0, I))`` with the draw fixed by ``seed``."""
    return sample_generator_latents(prior, 1, seed)[0]


def _encoder_forward_train(encoder, x, seed):
    b, n, _ = x.shape
    feats, cache_p = net_forward(encoder.point_net, x.reshape(b * n, 3), mode="train", rng_seed=seed)
    feats = feats.reshape(b, n, -1)
    arg = feats.argmax(axis=1)
    pooled = np.take_along_axis(feats, arg[:, None, :], axis=1)[:, 0, :]
    z, cache_h = net_forward(encoder.head, pooled, mode="train", rng_seed=seed + 1)
    return z, (cache_p, cache_h, arg, (b, n, feats.shape[2]))


def _encoder_backward(caches, dz):
    cache_p, cache_h, arg, (b, n, c) = caches
    g_head, d_pooled = net_backward(cache_h, dz)
    d_feats = np.zeros((b, n, c))
    np.put_along_axis(d_feats, arg[:, None, :], d_pooled[:, None, :], axis=1)
    g_point, _ = net_backward(cache_p, d_feats.reshape(b * n, c))
    return g_point + g_head


def linear_decay(epoch: int, lr0: float, lr1: float, decay_epochs: int) -> float:
    if decay_epochs <= 0 or epoch >= decay_epochs:
        return lr1
    return lr0 + epoch / decay_epochs * (lr1 - lr0)


def train_autoencoder(clouds, config: AEConfig, seed: int = 0, val_clouds=None):
    """Fit a PointNet-style encoder and a dense decoder with Chamfer loss.

    Returns ``(encoder, decoder, prior, history)``; ``prior`` is a Gaussian
    (principal-axis by default) over the training latents and ``history`` lists per-epoch mean
    train (and validation, if given) Chamfer.
    """
    clouds = np.asarray(clouds, dtype=np.float64)
    if clouds.ndim != 3 or len(clouds) == 0:
        raise ValueError("need a non-empty (n, N, 3) array of clouds")
    if config.latent_dim < 1:
        raise ValueError("latent_dim must be positive")
    rng = np.random.default_rng(seed)
    encoder = PointEncoder.build(config.latent_dim, config.point_widths, config.head_widths, seed=seed)
    decoder = Network(
        _mlp((config.latent_dim, *config.decoder_widths, 3 * config.n_points), final_act=False), seed=seed + 2
    )
    params = encoder.parameters() + decoder.parameters()
    opt = OptimizerState("adam")
    n, n_pts = clouds.shape[:2]
    history = []
    last_good = None

    for epoch in range(config.epochs):
        lr = linear_decay(epoch, config.lr, config.lr_final, config.epochs - 1)
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            target = clouds[idx]
            x = target
            if config.sample_points and config.sample_points < n_pts:
                sub = np.stack([rng.choice(n_pts, config.sample_points, replace=False) for _ in idx])
                x = np.take_along_axis(target, sub[:, :, None], axis=1)
            step_seed = int(rng.integers(2**31))
            z, enc_caches = _encoder_forward_train(encoder, x, step_seed)
            out, cache_d = net_forward(decoder, z, mode="train", rng_seed=step_seed + 2)
            out = out.reshape(len(idx), -1, 3)
            batch_loss = 0.0
            d_out = np.empty_like(out)
            for j in range(len(idx)):
                loss_j, d_out[j] = chamfer_and_grad(out[j], target[j])
                batch_loss += loss_j
            batch_loss /= len(idx)
            if not np.isfinite(batch_loss):
                raise TrainingDiverged(f"non-finite autoencoder loss at epoch {epoch}", last_good, epoch)
            g_dec, dz = net_backward(cache_d, d_out.reshape(len(idx), -1) / len(idx))
            g_enc = _encoder_backward(enc_caches, dz)
            adam_step(params, g_enc + g_dec, opt, lr)
            encoder.mark_updated()
            decoder.mark_updated()
            losses.append(batch_loss)
        last_good = (encoder.as_network().copy(), decoder.copy())
        row = {"epoch": epoch, "lr": lr, "train_chamfer": float(np.mean(losses))}
        if val_clouds is not None:
            row["val_chamfer"] = float(np.mean(round_trip_chamfer(encoder, decoder, val_clouds)))
        history.append(row)
        log.info("autoencoder epoch %d %s", epoch, row)

    encoder.round_to_f32()
    decoder.round_to_f32()
    prior = LatentPrior.fit(encode_in_batches(encoder, clouds), kind=config.prior)
    return encoder, decoder, prior, history


def encode_in_batches(encoder: PointEncoder, clouds, batch: int = 64) -> np.ndarray:
    clouds = np.asarray(clouds, dtype=np.float64)
    return np.concatenate([encode_batch(encoder, clouds[i : i + batch]) for i in range(0, len(clouds), batch)])


def round_trip_chamfer(encoder: PointEncoder, decoder: Network, clouds) -> np.ndarray:
    """Per-cloud Chamfer of decoder(encoder(pc)) against pc."""
    from .geometry.metrics import chamfer

    z = encode_in_batches(encoder, clouds)
    recon = generate(decoder, z)
    return np.array([chamfer(r, c) for r, c in zip(recon, clouds)])


def fit_mean_shape(clouds, n_points: int, steps: int = 300, lr: float = 0.02, seed: int = 0) -> np.ndarray:
    """Single cloud minimizing the mean Chamfer to ``clouds`` (constant-predictor baseline)."""
    clouds = np.asarray(clouds, dtype=np.float64)
    rng = np.random.default_rng(seed)
    shape = rng.uniform(-1.0, 1.0, size=(n_points, 3))
    opt = OptimizerState("adam")
    for _ in range(steps):
        batch = clouds[rng.choice(len(clouds), min(32, len(clouds)), replace=False)]
        grad = np.zeros_like(shape)
        for c in batch:
            grad += chamfer_and_grad(shape, c)[1]
        adam_step([shape], [grad / len(batch)], opt, lr)
    return shape


@dataclass
class CodecPair:
    """Frozen encoder E (from autoencoder A) and generator G (decoder of autoencoder B)."""

    encoder: PointEncoder
    generator: Network
    prior: LatentPrior
    # encoder of autoencoder B: not part of the bridge, kept to measure G's own round trip
    generator_encoder: PointEncoder | None = None
    fingerprint: bytes = field(default=b"", init=False)

    def __post_init__(self):
        if self.prior.mean.size != self.generator.in_dim:
            raise ShapeError("latent prior size does not match the generator input")
        if np.any(self.prior.std <= 0):
            raise ValueError("latent prior std must be strictly positive")
        self.fingerprint = self.compute_fingerprint()

    @property
    def d_e(self) -> int:
        return self.encoder.latent_dim

    @property
    def d_g(self) -> int:
        return self.generator.in_dim

    @property
    def n_points(self) -> int:
        return self.generator.out_dim // 3

    def compute_fingerprint(self) -> bytes:
        return checkpoint.fingerprint(self.encoder.as_network(), self.generator)

    def assert_frozen(self) -> None:
        if self.compute_fingerprint() != self.fingerprint:
            raise ProvenanceError("codec parameters changed after freezing")


@dataclass
class CodecConfig:
    encoder_ae: AEConfig = field(
        default_factory=lambda: AEConfig(latent_dim=256, point_widths=(64, 128), head_widths=(256,), decoder_widths=(256, 512))
    )
    generator_ae: AEConfig = field(
        default_factory=lambda: AEConfig(latent_dim=128, point_widths=(48, 96), head_widths=(192,), decoder_widths=(256, 512))
    )


def train_codec_pair(clouds, config: CodecConfig | None = None, seed: int = 0, val_clouds=None):
    """Train both autoencoders and freeze the (E, G) pair. Returns ``(codec, histories)``."""
    config = config or CodecConfig()
    if config.encoder_ae.n_points != config.generator_ae.n_points:
        log.warning("autoencoders decode different point counts")
    enc_a, _dec_a, _, hist_a = train_autoencoder(clouds, config.encoder_ae, seed=seed, val_clouds=val_clouds)
    enc_b, dec_b, prior_b, hist_b = train_autoencoder(clouds, config.generator_ae, seed=seed + 1000, val_clouds=val_clouds)
    codec = CodecPair(enc_a, dec_b, prior_b, generator_encoder=enc_b)
    return codec, {"encoder_ae": hist_a, "generator_ae": hist_b}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_codec(codec: CodecPair, directory) -> Path:
    """Write checkpoints, the prior (f32 mean, std, then optional basis) and ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {"encoder": "encoder.sqzn", "generator": "generator.sqzn", "prior": "prior.f32"}
    checkpoint.save(codec.encoder.as_network(), d / files["encoder"])
    checkpoint.save(codec.generator, d / files["generator"])
    (d / files["prior"]).write_bytes(codec.prior.to_bytes())
    pools = {"encoder": codec.encoder.pool_index}
    if codec.generator_encoder is not None:
        files["generator_encoder"] = "generator_encoder.sqzn"
        checkpoint.save(codec.generator_encoder.as_network(), d / files["generator_encoder"])
        pools["generator_encoder"] = codec.generator_encoder.pool_index
    manifest = {
        "kind": "codec-pair",
        "d_e": codec.d_e,
        "d_g": codec.d_g,
        "n_points": codec.n_points,
        "pool_index": pools,
        "fingerprint": codec.fingerprint.hex(),
        "files": {k: {"path": v, "sha256": _sha256(d / v)} for k, v in files.items()},
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return d


def load_codec(directory) -> CodecPair:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    files = manifest["files"]
    for key, entry in files.items():
        if _sha256(d / entry["path"]) != entry["sha256"]:
            raise ProvenanceError(f"codec file {entry['path']} does not match its manifest hash")
    encoder = PointEncoder.from_network(checkpoint.load(d / files["encoder"]["path"]), manifest["pool_index"]["encoder"])
    generator = checkpoint.load(d / files["generator"]["path"])
    prior = LatentPrior.from_bytes((d / files["prior"]["path"]).read_bytes(), manifest["d_g"])
    gen_enc = None
    if "generator_encoder" in files:
        gen_enc = PointEncoder.from_network(
            checkpoint.load(d / files["generator_encoder"]["path"]), manifest["pool_index"]["generator_encoder"]
        )
    codec = CodecPair(encoder, generator, prior, generator_encoder=gen_enc)
    if codec.fingerprint.hex() != manifest["fingerprint"]:
        raise ProvenanceError("codec fingerprint does not match manifest")
    return codec


def config_to_dict(config) -> dict:
    return asdict(config)
