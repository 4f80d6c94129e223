import numpy as np
import pytest

from latentbridge.codec import (
    CodecPair,
    LatentPrior,
    PointEncoder,
    ProvenanceError,
    encode,
    encode_batch,
    fit_mean_shape,
    generate,
    linear_decay,
    load_codec,
    round_trip_chamfer,
    sample_generator_latent,
    sample_generator_latents,
    save_codec,
)
from latentbridge.geometry import ShapeSpec, chamfer, gen_shape, normalize
from latentbridge.nn.layers import ShapeError


def test_encoder_permutation_invariant():
    enc = PointEncoder.build(32, point_widths=(16, 24), head_widths=(32,), seed=1)
    pc = gen_shape(ShapeSpec("torus", (1.0, 0.4), seed=3, n_points=400))
    rng = np.random.default_rng(0)
    z = encode(enc, pc)
    for _ in range(5):
        np.testing.assert_allclose(encode(enc, pc[rng.permutation(len(pc))]), z, rtol=0, atol=1e-9)


def test_encoder_sees_normalized_scale_only():
    enc = PointEncoder.build(32, point_widths=(16, 24), head_widths=(32,), seed=1)
    pc = gen_shape(ShapeSpec("cylinder", (0.5, 1.0), seed=4, n_points=300))
    np.testing.assert_allclose(encode(enc, normalize(5 * pc)), encode(enc, normalize(pc)), rtol=0, atol=1e-9)


def test_encoder_rejects_bad_shapes():
    enc = PointEncoder.build(8, point_widths=(4,), head_widths=(8,))
    with pytest.raises((ShapeError, ValueError)):
        encode(enc, np.zeros((10, 2)))
    with pytest.raises(ShapeError):
        encode_batch(enc, np.zeros((10, 3)))


def test_generate_deterministic_and_checks_width(tiny_codec):
    z = np.linspace(-1, 1, tiny_codec.d_g)
    a = generate(tiny_codec.generator, z)
    assert a.shape == (tiny_codec.n_points, 3)
    np.testing.assert_array_equal(generate(tiny_codec.generator, z), a)
    assert generate(tiny_codec.generator, np.stack([z, z])).shape == (2, tiny_codec.n_points, 3)
    with pytest.raises(ShapeError):
        generate(tiny_codec.generator, np.zeros(tiny_codec.d_g + 1))


# ---- prior -------------------------------------------------------------------


def test_zero_std_prior_returns_mean():
    prior = LatentPrior(np.arange(5.0), np.zeros(5))
    for seed in range(5):
        np.testing.assert_array_equal(sample_generator_latent(prior, seed), np.arange(5.0))


def test_sampling_reproducible_from_seed():
    prior = LatentPrior(np.zeros(4), np.ones(4))
    np.testing.assert_array_equal(sample_generator_latent(prior, 7), sample_generator_latent(prior, 7))
    assert not np.array_equal(sample_generator_latent(prior, 7), sample_generator_latent(prior, 8))


@pytest.mark.parametrize("kind", ["diagonal", "principal"])
def test_sample_mean_within_clt_bound(kind):
    rng = np.random.default_rng(0)
    latents = rng.standard_normal((500, 6)) @ rng.standard_normal((6, 6)) + rng.standard_normal(6)
    prior = LatentPrior.fit(latents, kind)
    n = 100_000
    draws = sample_generator_latents(prior, n, seed=1)
    if prior.basis is None:
        sd = prior.std
    else:
        sd = np.sqrt(np.sum((prior.basis * prior.std) ** 2, axis=1))
    assert np.all(np.abs(draws.mean(axis=0) - prior.mean) < 3 * sd / np.sqrt(n))


def test_principal_prior_keeps_correlations():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((4, 4))
    latents = rng.standard_normal((4000, 4)) @ a
    prior = LatentPrior.fit(latents, "principal")
    np.testing.assert_allclose(prior.basis.T @ prior.basis, np.eye(4), atol=1e-6)
    draws = sample_generator_latents(prior, 50_000, seed=2)
    np.testing.assert_allclose(np.cov(draws.T), np.cov(latents.T), rtol=0.05, atol=0.05)
    diag = LatentPrior.fit(latents, "diagonal")
    assert diag.basis is None
    off = np.cov(sample_generator_latents(diag, 50_000, seed=2).T) - np.diag(diag.std**2)
    assert np.abs(off).max() < 0.1


def test_prior_bytes_round_trip():
    rng = np.random.default_rng(3)
    for kind in ("diagonal", "principal"):
        prior = LatentPrior.fit(rng.standard_normal((50, 5)), kind)
        back = LatentPrior.from_bytes(prior.to_bytes(), 5)
        np.testing.assert_array_equal(back.mean, prior.mean)
        np.testing.assert_array_equal(back.std, prior.std)
        assert (back.basis is None) == (prior.basis is None)
    with pytest.raises(ValueError):
        LatentPrior.from_bytes(bytes(12), 5)
    with pytest.raises(ValueError):
        LatentPrior.fit(np.ones((3, 2)), "gaussian-mixture")


def test_prior_validation():
    with pytest.raises(ValueError):
        LatentPrior(np.zeros(3), -np.ones(3))
    with pytest.raises(ValueError):
        LatentPrior(np.zeros(3), np.ones(2))
    with pytest.raises(ValueError):
        LatentPrior(np.zeros(3), np.ones(3), np.eye(2))


# ---- codec pair -----------------------------------------------------------------


def test_codec_pair_dims_and_fingerprint(tiny_codec):
    assert tiny_codec.d_e == 24 and tiny_codec.d_g == 12 and tiny_codec.d_e != tiny_codec.d_g
    assert len(tiny_codec.fingerprint) == 8
    tiny_codec.assert_frozen()
    assert np.all(tiny_codec.prior.std > 0)


def test_codec_pair_rejects_bad_prior(tiny_codec):
    with pytest.raises(ShapeError):
        CodecPair(tiny_codec.encoder, tiny_codec.generator, LatentPrior(np.zeros(3), np.ones(3)))
    with pytest.raises(ValueError):
        CodecPair(tiny_codec.encoder, tiny_codec.generator, LatentPrior(np.zeros(12), np.zeros(12)))


def test_changing_parameters_breaks_frozen_check(tiny_codec):
    enc = PointEncoder.from_network(tiny_codec.encoder.as_network().copy(), tiny_codec.encoder.pool_index)
    codec = CodecPair(enc, tiny_codec.generator, tiny_codec.prior)
    codec.assert_frozen()
    enc.head.params[-1][0] += 1.0
    enc.mark_updated()
    with pytest.raises(ProvenanceError):
        codec.assert_frozen()


def test_codec_save_load(tiny_codec, tiny_clouds, tmp_path):
    d = save_codec(tiny_codec, tmp_path / "codec")
    back = load_codec(d)
    assert back.fingerprint == tiny_codec.fingerprint
    pc = tiny_clouds[0][0]
    np.testing.assert_array_equal(encode(back.encoder, pc), encode(tiny_codec.encoder, pc))
    np.testing.assert_array_equal(back.prior.basis, tiny_codec.prior.basis)
    np.testing.assert_array_equal(
        round_trip_chamfer(back.generator_encoder, back.generator, tiny_clouds[0][:3]),
        round_trip_chamfer(tiny_codec.generator_encoder, tiny_codec.generator, tiny_clouds[0][:3]),
    )
    blob = bytearray((d / "generator.sqzn").read_bytes())
    blob[-5] ^= 1
    (d / "generator.sqzn").write_bytes(bytes(blob))
    with pytest.raises(ProvenanceError):
        load_codec(d)


def test_linear_decay():
    assert linear_decay(0, 1.0, 0.1, 10) == 1.0
    assert linear_decay(5, 1.0, 0.0, 10) == 0.5
    assert linear_decay(50, 1.0, 0.1, 10) == 0.1
    assert linear_decay(3, 1.0, 0.1, 0) == 0.1


def test_mean_shape_baseline_beats_random_cloud(tiny_clouds):
    clouds = tiny_clouds[0][:10]
    shape = fit_mean_shape(clouds, 64, steps=100)
    rand = np.random.default_rng(0).uniform(-1, 1, (64, 3))
    assert np.mean([chamfer(shape, c) for c in clouds]) < np.mean([chamfer(rand, c) for c in clouds])
