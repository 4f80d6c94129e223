"""Command-line driver for the whole pipeline.

Every verb reads an optional JSON config (``--config``); each flag has a
config key of the same name with dashes turned into underscores, and flags
win over the file. Artifacts default to subdirectories of
``$LATENTBRIDGE_ROOT`` (or ``./artifacts``). Each command writes a
``run_manifest.json`` (deterministic) and a ``timings.json`` (wall clock)
beside its outputs; bundles keep their own ``manifest.json`` untouched.

Exit codes: 0 ok, 2 config error, 3 provenance error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import payload as pl
from .analysis import spectrum
from .bridge import (
    ArchConfig,
    Bridge,
    PairedLatentDataset,
    TrainConfig,
    compress,
    decompress,
    gen_paired_dataset,
    interpolate,
    load_bridge,
    save_bridge,
    train_bridge,
    write_log_csv,
)
from .codec import AEConfig, CodecConfig, ProvenanceError, TrainingDiverged, load_codec, save_codec, train_codec_pair
from .geometry import chamfer, make_dataset, pointsim, raw_size, read_cloud, split_indices, write_cloud
from .nn import NonFiniteGradient

log = logging.getLogger("latentbridge")

EXIT_OK, EXIT_CONFIG, EXIT_PROVENANCE, EXIT_NUMERIC = 0, 2, 3, 4
ROOT_ENV = "LATENTBRIDGE_ROOT"

DEFAULTS = {
    "seed": 0,
    # gen-data
    "n_shapes": 1000,
    "n_points": 2048,
    # train-codecs
    "d_e": 256,
    "d_g": 128,
    "ae_epochs": 40,
    "ae_batch_size": 32,
    "ae_lr": 1e-3,
    "ae_lr_final": 1e-4,
    "sample_points": 512,
    "prior": "principal",
    # gen-pairs
    "n_pairs": 5000,
    # train-bridge
    "d_c": 64,
    "forward_arch": "feedforward-residual",
    "reverse_arch": "deep-residual",
    "hidden": 256,
    "n_hidden": 4,
    "lambda_gram": 0.1,
    "lambda_gen": 1.0,
    "optimizer": "adam",
    "lr": 1e-3,
    "lr_final": 1e-5,
    "decay_epochs": 10,
    "adam_lr": 1e-3,
    "momentum": 0.95,
    "ns_steps": 6,
    "weight_decay": 0.0,
    "epochs": 10,
    "batch_size": 16,
    "dropout": 0.0,
    # payload / eval
    "bits": 16,
    "entropy": True,
    "knn": 8,
    "limit": 0,
    "steps": 5,
    # analyze: codes from the paired test split ("pairs") or from test clouds ("clouds")
    "source": "pairs",
    "ablate_dcs": [32, 64, 128, 256],
    "ablate_lambdas": [0.0, 0.01, 0.1, 1.0],
    "force": False,
}

# config keys that name artifact paths; None means "derive from the root"
PATH_KEYS = ("data", "codec", "pairs", "bridge", "input", "output", "payload", "payload_a", "payload_b", "out")


# run records; left out of directory hashes
RUN_FILES = ("run_manifest.json", "timings.json")


# verbs that read a trained bridge bundle
LOADS_BUNDLE = ("compress", "decompress", "eval", "analyze", "interpolate")


class ConfigError(ValueError):
    pass


def artifact_root() -> Path:
    return Path(os.environ.get(ROOT_ENV, "artifacts"))


def substream_seed(root_seed: int, name: str) -> int:
    """Independent, reproducible seed for one named stage."""
    h = int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "little")
    return int(np.random.SeedSequence([int(root_seed), h]).generate_state(1)[0])


def file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def describe(path) -> dict:
    """Path plus content hash; directories hash every file inside, sorted by name."""
    p = Path(path)
    if p.is_dir():
        files = {str(f.relative_to(p)): file_sha256(f) for f in sorted(p.rglob("*")) if f.is_file() and f.name not in RUN_FILES}
        return {"path": str(p), "files": files}
    return {"path": str(p), "sha256": file_sha256(p)}


def config_hash(cfg: dict) -> str:
    clean = {k: v for k, v in cfg.items() if k not in ("force", "config", "command", "verbose")}
    return hashlib.sha256(json.dumps(clean, sort_keys=True, default=str).encode()).hexdigest()


def write_manifest(where: Path, cfg: dict, command: str, inputs: dict, outputs: dict, metrics=None, timings=None, seeds=None):
    """``where`` is a directory (run files inside) or an output file (sidecar files)."""
    where = Path(where)
    if where.is_dir():
        man_path, tim_path = where / RUN_FILES[0], where / RUN_FILES[1]
    else:
        man_path, tim_path = Path(f"{where}.manifest.json"), Path(f"{where}.timings.json")
    manifest = {
        "command": command,
        "config": {k: v for k, v in cfg.items() if k not in ("force", "config", "verbose")},
        "config_hash": config_hash(cfg),
        "seeds": seeds or {},
        "inputs": {k: describe(v) for k, v in inputs.items()},
        "outputs": {k: describe(v) for k, v in outputs.items()},
        "metrics": metrics or {},
    }
    man_path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    tim_path.write_text(json.dumps(timings or {}, indent=2, sort_keys=True) + "\n")
    return man_path


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o)}")


# ---- config -----------------------------------------------------------------


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _add_keys(p: argparse.ArgumentParser, keys):
    for key in keys:
        default = DEFAULTS.get(key)
        if isinstance(default, bool):
            p.add_argument(_flag(key), dest=key, action=argparse.BooleanOptionalAction, default=None)
        elif isinstance(default, list):
            p.add_argument(_flag(key), dest=key, type=type(default[0]), nargs="+", default=None)
        elif key in PATH_KEYS:
            p.add_argument(_flag(key), dest=key, default=None)
        else:
            p.add_argument(_flag(key), dest=key, type=type(default), default=None)


def resolve_config(args: argparse.Namespace, keys) -> dict:
    cfg = {k: DEFAULTS.get(k) for k in keys}
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS) - set(PATH_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update({k: v for k, v in loaded.items() if k in keys})
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    root = artifact_root()
    for k, sub in (("data", "data"), ("codec", "codec"), ("pairs", "pairs"), ("bridge", "bridge")):
        # commands that load a bridge find its codec through the bridge manifest
        if k == "codec" and getattr(args, "command", None) in LOADS_BUNDLE:
            continue
        if k in cfg and cfg[k] is None:
            cfg[k] = str(root / sub)
    return cfg


def _require(cfg: dict, *keys):
    missing = [k for k in keys if cfg.get(k) in (None, "")]
    if missing:
        raise ConfigError("missing required setting(s): " + ", ".join(_flag(k) for k in missing))


def _exists(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _train_config(cfg: dict, seed: int) -> TrainConfig:
    return TrainConfig(
        lambda_gram=float(cfg["lambda_gram"]),
        lambda_gen=float(cfg["lambda_gen"]),
        optimizer=cfg["optimizer"],
        lr=float(cfg["lr"]),
        lr_final=float(cfg["lr_final"]),
        decay_epochs=int(cfg["decay_epochs"]),
        adam_lr=float(cfg["adam_lr"]),
        momentum=float(cfg["momentum"]),
        ns_steps=int(cfg["ns_steps"]),
        weight_decay=float(cfg["weight_decay"]),
        epochs=int(cfg["epochs"]),
        batch_size=int(cfg["batch_size"]),
        dropout=float(cfg["dropout"]),
        seed=seed,
    )


def _archs(cfg: dict):
    return (
        ArchConfig(cfg["forward_arch"], int(cfg["hidden"]), int(cfg["n_hidden"])),
        ArchConfig(cfg["reverse_arch"], int(cfg["hidden"]), int(cfg["n_hidden"])),
    )


# ---- loaders with provenance checks ------------------------------------------


def load_clouds(data_dir) -> tuple[np.ndarray, dict]:
    d = _exists(data_dir, "dataset directory")
    clouds = np.load(d / "clouds.npy").astype(np.float64)
    return clouds, split_indices(len(clouds))


def load_bundle(cfg: dict):
    """Bridge plus the codec it was trained against; mismatch is fatal unless forced."""
    bridge, manifest = load_bridge(_exists(cfg["bridge"], "bridge bundle"))
    codec_dir = cfg.get("codec") or manifest.get("codec_dir") or artifact_root() / "codec"
    codec = load_codec(_exists(codec_dir, "codec bundle"))
    if codec.fingerprint != bridge.codec_fingerprint:
        msg = "bridge was trained against a different codec"
        if not cfg.get("force"):
            raise ProvenanceError(msg)
        log.warning("%s (continuing: --force)", msg)
    return bridge, codec


# ---- commands ----------------------------------------------------------------


def cmd_gen_data(cfg: dict) -> dict:
    out = Path(cfg["data"])
    out.mkdir(parents=True, exist_ok=True)
    seed = substream_seed(cfg["seed"], "data")
    t0 = time.perf_counter()
    clouds, specs = make_dataset(int(cfg["n_shapes"]), int(cfg["n_points"]), seed=seed)
    np.save(out / "clouds.npy", clouds.astype(np.float32))
    kinds = [s.kind for s in specs]
    sizes = {k: int(len(v)) for k, v in split_indices(len(clouds)).items()}
    (out / "splits.json").write_text(json.dumps(sizes, indent=2, sort_keys=True) + "\n")
    metrics = {"n_shapes": len(clouds), "n_points": int(cfg["n_points"]), "splits": sizes, "kinds": {k: kinds.count(k) for k in sorted(set(kinds))}}
    log.info("wrote %d clouds to %s", len(clouds), out)
    write_manifest(out, cfg, "gen-data", {}, {}, metrics, {"total_s": time.perf_counter() - t0}, {"data": seed})
    return metrics


def cmd_train_codecs(cfg: dict) -> dict:
    clouds, splits = load_clouds(cfg["data"])
    n_points = clouds.shape[1]
    common = dict(
        n_points=n_points,
        epochs=int(cfg["ae_epochs"]),
        batch_size=int(cfg["ae_batch_size"]),
        lr=float(cfg["ae_lr"]),
        lr_final=float(cfg["ae_lr_final"]),
        sample_points=min(int(cfg["sample_points"]), n_points),
        prior=cfg["prior"],
    )
    base = CodecConfig()
    ccfg = CodecConfig(
        encoder_ae=AEConfig(latent_dim=int(cfg["d_e"]), point_widths=base.encoder_ae.point_widths, head_widths=base.encoder_ae.head_widths, decoder_widths=base.encoder_ae.decoder_widths, **common),
        generator_ae=AEConfig(latent_dim=int(cfg["d_g"]), point_widths=base.generator_ae.point_widths, head_widths=base.generator_ae.head_widths, decoder_widths=base.generator_ae.decoder_widths, **common),
    )
    seed = substream_seed(cfg["seed"], "codec")
    t0 = time.perf_counter()
    codec, hist = train_codec_pair(clouds[splits["train"]], ccfg, seed=seed, val_clouds=clouds[splits["val"]])
    out = save_codec(codec, cfg["codec"])
    with open(out / "history.json", "w") as fh:
        json.dump(hist, fh, indent=2, sort_keys=True, default=_json_default)
    metrics = {
        "d_e": codec.d_e,
        "d_g": codec.d_g,
        "fingerprint": codec.fingerprint.hex(),
        "final_val_chamfer": {k: h[-1].get("val_chamfer") for k, h in hist.items()},
    }
    write_manifest(out, cfg, "train-codecs", {"data": cfg["data"]}, {}, metrics, {"total_s": time.perf_counter() - t0}, {"codec": seed})
    return metrics


def cmd_gen_pairs(cfg: dict) -> dict:
    codec = load_codec(_exists(cfg["codec"], "codec bundle"))
    seed = substream_seed(cfg["seed"], "pairs")
    t0 = time.perf_counter()
    ds = gen_paired_dataset(codec, int(cfg["n_pairs"]), seed)
    out = ds.save(cfg["pairs"])
    metrics = {"n": len(ds), "n_skipped": ds.n_skipped, "splits": {k: int(len(v)) for k, v in ds.splits.items()}}
    write_manifest(out, cfg, "gen-pairs", {"codec": cfg["codec"]}, {}, metrics, {"total_s": time.perf_counter() - t0}, {"pairs": seed})
    return metrics


def _fit_bridge(cfg: dict, ds, codec, d_c: int, lambda_gram: float, seed: int):
    f_arch, r_arch = _archs(cfg)
    tcfg = _train_config({**cfg, "lambda_gram": lambda_gram}, seed)
    f_e, f_d, rows = train_bridge(ds, f_arch, r_arch, tcfg, d_c=d_c, codec=codec)
    return Bridge(f_e, f_d, tcfg.lambda_gram, tcfg.lambda_gen, codec.fingerprint), rows


def cmd_train_bridge(cfg: dict) -> dict:
    codec = load_codec(_exists(cfg["codec"], "codec bundle"))
    ds = PairedLatentDataset.load(_exists(cfg["pairs"], "paired dataset"))
    if ds.codec_fingerprint != codec.fingerprint and not cfg.get("force"):
        raise ProvenanceError("paired dataset was generated with a different codec")
    if ds.codec_fingerprint != codec.fingerprint:
        log.warning("paired dataset comes from another codec (continuing: --force)")
        ds.codec_fingerprint = codec.fingerprint
    seed = substream_seed(cfg["seed"], "bridge")
    t0 = time.perf_counter()
    bridge, rows = _fit_bridge(cfg, ds, codec, int(cfg["d_c"]), float(cfg["lambda_gram"]), seed)
    out = save_bridge(bridge, cfg["bridge"], codec_dir=cfg["codec"])
    write_log_csv(rows, out / "log.csv")
    best = min(rows, key=lambda r: r["val_recon"])
    metrics = {"bridge_fingerprint": bridge.fingerprint.hex(), "best_epoch": best["epoch"], "best_val_recon": best["val_recon"], "first_val_recon": rows[0]["val_recon"]}
    write_manifest(out, cfg, "train-bridge", {"codec": cfg["codec"], "pairs": cfg["pairs"]}, {}, metrics, {"total_s": time.perf_counter() - t0}, {"bridge": seed})
    return metrics


def cmd_compress(cfg: dict) -> dict:
    _require(cfg, "input", "output")
    bridge, codec = load_bundle(cfg)
    pc = read_cloud(_exists(cfg["input"], "input cloud"))
    t0 = time.perf_counter()
    z = compress(codec.encoder, bridge.f_e, pc)
    n = pl.write_payload(z, cfg["output"], int(cfg["bits"]), bool(cfg["entropy"]), codec.fingerprint, bridge.fingerprint)
    ms = 1e3 * (time.perf_counter() - t0)
    metrics = {"payload_bytes": n, "raw_bytes": raw_size(len(pc)), "cr": pl.compression_ratio(raw_size(len(pc)), pl.latent_bytes(bridge.d_c, int(cfg["bits"]))), "cr_container": pl.compression_ratio(raw_size(len(pc)), n)}
    write_manifest(Path(cfg["output"]), cfg, "compress", {"bridge": cfg["bridge"], "input": cfg["input"]}, {"output": cfg["output"]}, metrics, {"compress_ms": ms})
    return metrics


def _read_checked(path, codec, bridge, force: bool):
    data = _exists(path, "payload").read_bytes()
    z, meta = pl.decode_payload(data)
    if meta.codec_fingerprint != codec.fingerprint or meta.bridge_fingerprint != bridge.fingerprint:
        msg = f"payload {path} was written with a different codec or bridge"
        if not force:
            raise ProvenanceError(msg)
        log.warning("%s (continuing: --force)", msg)
    if meta.d_c != bridge.d_c:
        raise ProvenanceError(f"payload code length {meta.d_c} != bridge d_C {bridge.d_c}")
    return z, meta


def cmd_decompress(cfg: dict) -> dict:
    _require(cfg, "payload", "output")
    bridge, codec = load_bundle(cfg)
    t0 = time.perf_counter()
    z, meta = _read_checked(cfg["payload"], codec, bridge, bool(cfg.get("force")))
    pc = decompress(bridge.f_d, codec.generator, z)
    ms = 1e3 * (time.perf_counter() - t0)
    write_cloud(pc, cfg["output"])
    metrics = {"n_points": int(len(pc)), "d_c": meta.d_c, "bits": meta.quant_bits, "entropy_coded": meta.entropy_coded}
    write_manifest(Path(cfg["output"]), cfg, "decompress", {"bridge": cfg["bridge"], "payload": cfg["payload"]}, {"output": cfg["output"]}, metrics, {"decompress_ms": ms})
    return metrics


def _mean_std(values) -> dict:
    a = np.asarray(values, dtype=np.float64)
    return {"mean": float(a.mean()), "std": float(a.std())}


def evaluate(bridge: Bridge, codec, clouds, bits: int, entropy: bool, k: int):
    """Per-item Chamfer, pointsim, compression ratios and timings through the payload path."""
    rows = []
    for i, pc in enumerate(clouds):
        t0 = time.perf_counter()
        z = compress(codec.encoder, bridge.f_e, pc)
        data = pl.encode_payload(z, bits, entropy, codec.fingerprint, bridge.fingerprint)
        t1 = time.perf_counter()
        z2, _ = pl.decode_payload(data)
        out = decompress(bridge.f_d, codec.generator, z2)
        t2 = time.perf_counter()
        raw = raw_size(len(pc))
        rows.append(
            {
                "item": i,
                "chamfer": chamfer(out, pc),
                "pointsim": pointsim(out, pc, k),
                "raw_bytes": raw,
                "payload_bytes": len(data),
                "cr": pl.compression_ratio(raw, pl.latent_bytes(bridge.d_c, bits)),
                "cr_container": pl.compression_ratio(raw, len(data)),
                "compress_ms": 1e3 * (t1 - t0),
                "decompress_ms": 1e3 * (t2 - t1),
            }
        )
    return rows


def summarize(rows) -> dict:
    keys = ("chamfer", "pointsim", "cr", "cr_container", "compress_ms", "decompress_ms")
    out = {k: _mean_std([r[k] for r in rows]) for k in keys}
    out["n"] = len(rows)
    return out


def _write_rows(rows, path, fields=None):
    fields = fields or list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{r[k]:.10g}" if isinstance(r[k], float) else r[k]) for k in fields})


def _test_clouds(cfg: dict):
    clouds, splits = load_clouds(cfg["data"])
    test = clouds[splits["test"]]
    if int(cfg.get("limit") or 0) > 0:
        test = test[: int(cfg["limit"])]
    if len(test) == 0:
        raise ConfigError("test split is empty")
    return test


def cmd_eval(cfg: dict) -> dict:
    _require(cfg, "out")
    bridge, codec = load_bundle(cfg)
    test = _test_clouds(cfg)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    rows = evaluate(bridge, codec, test, int(cfg["bits"]), bool(cfg["entropy"]), int(cfg["knn"]))
    summary = summarize(rows)
    timing_keys = ("compress_ms", "decompress_ms")
    metrics = {k: v for k, v in summary.items() if k not in timing_keys}
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    _write_rows(rows, out / "items.csv", [f for f in rows[0] if f not in timing_keys])
    timings = {k: summary[k] for k in timing_keys}
    timings["items"] = [{k: r[k] for k in ("item",) + timing_keys} for r in rows]
    write_manifest(out, cfg, "eval", {"bridge": cfg["bridge"], "data": cfg["data"]}, {}, metrics, timings)
    log.info("eval on %d items: chamfer %.5g, pointsim %.4f, CR %.4f", summary["n"], summary["chamfer"]["mean"], summary["pointsim"]["mean"], summary["cr"]["mean"])
    return summary


def _codes_for(cfg: dict, bridge, codec) -> np.ndarray:
    if cfg.get("source") == "clouds":
        test = _test_clouds(cfg)
        return np.stack([compress(codec.encoder, bridge.f_e, pc) for pc in test])
    ds = PairedLatentDataset.load(_exists(cfg["pairs"], "paired dataset"))
    if ds.codec_fingerprint != codec.fingerprint and not cfg.get("force"):
        raise ProvenanceError("paired dataset was generated with a different codec")
    z_e, _ = ds.split("test")
    return bridge.f_e(z_e)


def cmd_analyze(cfg: dict) -> dict:
    _require(cfg, "out")
    bridge, codec = load_bundle(cfg)
    z = _codes_for(cfg, bridge, codec)
    rep = spectrum(z)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "spectrum.json").write_text(rep.to_json() + "\n")
    (out / "spectrum.txt").write_text(rep.to_table())
    rep.write_sigma_csv(out / "sigma.csv")
    metrics = {k: v for k, v in rep.to_dict().items() if k != "sigma"}
    write_manifest(out, cfg, "analyze", {"bridge": cfg["bridge"]}, {}, metrics)
    return metrics


def cmd_ablate(cfg: dict) -> dict:
    _require(cfg, "out")
    codec = load_codec(_exists(cfg["codec"], "codec bundle"))
    ds = PairedLatentDataset.load(_exists(cfg["pairs"], "paired dataset"))
    if ds.codec_fingerprint != codec.fingerprint:
        raise ProvenanceError("paired dataset was generated with a different codec")
    test = _test_clouds(cfg)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    seed = substream_seed(cfg["seed"], "bridge")
    z_test, _ = ds.split("test")
    results, timings = [], {}
    for d_c in sorted(int(v) for v in cfg["ablate_dcs"]):
        for lam in sorted(float(v) for v in cfg["ablate_lambdas"]):
            key = f"dc{d_c}_lg{lam:g}"
            t0 = time.perf_counter()
            bridge, _ = _fit_bridge(cfg, ds, codec, d_c, lam, seed)
            summary = summarize(evaluate(bridge, codec, test, int(cfg["bits"]), bool(cfg["entropy"]), int(cfg["knn"])))
            rep = spectrum(bridge.f_e(z_test))
            results.append(
                {
                    "d_c": d_c,
                    "lambda_gram": lam,
                    "chamfer_mean": summary["chamfer"]["mean"],
                    "chamfer_std": summary["chamfer"]["std"],
                    "pointsim_mean": summary["pointsim"]["mean"],
                    "pointsim_std": summary["pointsim"]["std"],
                    "cr": summary["cr"]["mean"],
                    "d_eff": rep.d_eff,
                    "kappa": rep.kappa,
                }
            )
            timings[key] = time.perf_counter() - t0
            log.info("ablate %s: chamfer %.5g pointsim %.4f d_eff %.3g", key, summary["chamfer"]["mean"], summary["pointsim"]["mean"], rep.d_eff)
    _write_rows(results, out / "ablation.csv")
    write_manifest(out, cfg, "ablate", {"codec": cfg["codec"], "pairs": cfg["pairs"], "data": cfg["data"]}, {}, {"rows": results}, timings, {"bridge": seed})
    return {"rows": results}


def cmd_interpolate(cfg: dict) -> dict:
    _require(cfg, "payload_a", "payload_b", "out")
    bridge, codec = load_bundle(cfg)
    force = bool(cfg.get("force"))
    z_a, _ = _read_checked(cfg["payload_a"], codec, bridge, force)
    z_b, _ = _read_checked(cfg["payload_b"], codec, bridge, force)
    steps = int(cfg["steps"])
    if steps < 2:
        raise ConfigError("steps must be >= 2")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    ts = np.linspace(0.0, 1.0, steps)
    outputs, bounds = {}, []
    for i, t in enumerate(ts):
        pc = decompress(bridge.f_d, codec.generator, interpolate(z_a, z_b, float(t)))
        name = f"interp_{i:03d}.pcl"
        write_cloud(pc, out / name)
        outputs[name] = out / name
        bounds.append(float(np.abs(pc).max()))
    metrics = {"t": ts.tolist(), "max_abs_coord": bounds}
    write_manifest(out, cfg, "interpolate", {"bridge": cfg["bridge"], "payload_a": cfg["payload_a"], "payload_b": cfg["payload_b"]}, {}, metrics)
    return metrics


COMMON = ("seed", "force")
COMMANDS = {
    "gen-data": (cmd_gen_data, ("data", "n_shapes", "n_points")),
    "train-codecs": (cmd_train_codecs, ("data", "codec", "d_e", "d_g", "ae_epochs", "ae_batch_size", "ae_lr", "ae_lr_final", "sample_points", "prior")),
    "gen-pairs": (cmd_gen_pairs, ("codec", "pairs", "n_pairs")),
    "train-bridge": (
        cmd_train_bridge,
        ("codec", "pairs", "bridge", "d_c", "forward_arch", "reverse_arch", "hidden", "n_hidden", "lambda_gram", "lambda_gen",
         "optimizer", "lr", "lr_final", "decay_epochs", "adam_lr", "momentum", "ns_steps", "weight_decay", "epochs", "batch_size", "dropout"),
    ),
    "compress": (cmd_compress, ("bridge", "codec", "input", "output", "bits", "entropy")),
    "decompress": (cmd_decompress, ("bridge", "codec", "payload", "output")),
    "eval": (cmd_eval, ("bridge", "codec", "data", "out", "bits", "entropy", "knn", "limit")),
    "analyze": (cmd_analyze, ("bridge", "codec", "pairs", "data", "out", "source", "limit")),
    "ablate": (
        cmd_ablate,
        ("codec", "pairs", "data", "out", "ablate_dcs", "ablate_lambdas", "forward_arch", "reverse_arch", "hidden", "n_hidden",
         "lambda_gen", "optimizer", "lr", "lr_final", "decay_epochs", "adam_lr", "momentum", "ns_steps", "weight_decay",
         "epochs", "batch_size", "dropout", "bits", "entropy", "knn", "limit"),
    ),
    "interpolate": (cmd_interpolate, ("bridge", "codec", "payload_a", "payload_b", "out", "steps")),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latentbridge", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, keys) in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON file of settings; flags override it")
        _add_keys(p, tuple(keys) + COMMON)
    return parser


def run(argv=None) -> tuple[int, dict | None]:
    """Parse and run one command; returns ``(exit_code, result)``."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    fn, keys = COMMANDS[args.command]
    try:
        cfg = resolve_config(args, tuple(keys) + COMMON)
        return EXIT_OK, fn(cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG, None
    except ProvenanceError as exc:
        log.error("provenance error: %s", exc)
        return EXIT_PROVENANCE, None
    except (TrainingDiverged, NonFiniteGradient, FloatingPointError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC, None
    except pl.PayloadError as exc:
        log.error("bad payload: %s", exc)
        return EXIT_PROVENANCE, None
    except ValueError as exc:
        log.error("invalid setting: %s", exc)
        return EXIT_CONFIG, None


def main(argv=None) -> int:
    code, result = run(argv)
    if result is not None:
        print(json.dumps(result, indent=2, sort_keys=True, default=_json_default))
    return code


if __name__ == "__main__":
    sys.exit(main())
