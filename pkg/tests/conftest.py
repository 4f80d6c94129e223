import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


def tiny_codec_config(n_points=64, epochs=2):
    from latentbridge.codec import AEConfig, CodecConfig

    common = dict(n_points=n_points, epochs=epochs, batch_size=8, sample_points=None)
    return CodecConfig(
        encoder_ae=AEConfig(latent_dim=24, point_widths=(16, 32), head_widths=(32,), decoder_widths=(48,), **common),
        generator_ae=AEConfig(latent_dim=12, point_widths=(12, 24), head_widths=(24,), decoder_widths=(40,), **common),
    )


@pytest.fixture(scope="session")
def tiny_clouds():
    from latentbridge.geometry import make_dataset

    clouds, specs = make_dataset(40, 64, seed=11)
    return clouds, specs


@pytest.fixture(scope="session")
def tiny_codec(tiny_clouds):
    """Small, briefly trained codec pair; good enough for plumbing tests."""
    from latentbridge.codec import train_codec_pair

    codec, _ = train_codec_pair(tiny_clouds[0], tiny_codec_config(), seed=3)
    return codec


def pytest_terminal_summary(terminalreporter):
    import report

    if report.LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(report.LINES):
            terminalreporter.write_line(report.LINES[n])


# ---- trained toy pipeline, shared by the acceptance and trained-model tests ----

CACHE_ENV = "LATENTBRIDGE_ACCEPTANCE_DIR"
PIPELINE_POINTS = 512

# (verb, flags, directory whose run_manifest.json marks the stage as done)
PIPELINE_STAGES = (
    ("gen-data", ["--n-shapes", "1000", "--n-points", str(PIPELINE_POINTS)], "data"),
    ("train-codecs", ["--ae-epochs", "30", "--sample-points", "256"], "codec"),
    ("gen-pairs", ["--n-pairs", "5000"], "pairs"),
    ("train-bridge", [], "bridge"),
)


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """Standard toy pipeline (1000 shapes, d_E=256, d_C=64, d_G=128, 5000 pairs) built through the CLI.

    Set ``LATENTBRIDGE_ACCEPTANCE_DIR`` to keep the artifacts between runs;
    finished stages are then reused.
    """
    import os

    from latentbridge import cli

    cached = os.environ.get(CACHE_ENV)
    root = Path(cached) if cached else tmp_path_factory.mktemp("pipeline")
    root.mkdir(parents=True, exist_ok=True)
    mp = pytest.MonkeyPatch()
    mp.setenv(cli.ROOT_ENV, str(root))
    try:
        for verb, flags, out in PIPELINE_STAGES:
            if (root / out / "run_manifest.json").exists():
                continue
            code, _ = cli.run([verb, *flags, "--seed", "0"])
            assert code == 0, f"pipeline stage {verb} failed with exit code {code}"
    finally:
        mp.undo()
    return root
