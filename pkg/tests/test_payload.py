import struct
import zlib
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from latentbridge.payload import (
    HEADER_SIZE,
    BadMagic,
    BadVersion,
    CRCMismatch,
    FingerprintWarning,
    RangeCoderError,
    compression_ratio,
    decode_payload,
    dequantize,
    encode_payload,
    latent_bytes,
    quantize,
    range_decode,
    range_encode,
    read_payload,
    write_payload,
)

GOLDEN = Path(__file__).parent / "data" / "golden_z64_8bit.sqz3"


def golden_vector():
    return np.sin(np.arange(64) * 0.7) * np.linspace(0.5, 2, 64)


# ---- quantization ----------------------------------------------------------


def test_constant_vector_round_trips_exactly():
    for c in (0.0, 3.25, -1e-3, 123.456):
        codes, scale, offset = quantize(np.full(10, c), 8)
        assert scale == 0.0 and np.all(codes == 0)
        np.testing.assert_array_equal(dequantize(codes, scale, offset), np.full(10, c))


def test_endpoints_map_to_code_extremes():
    codes, scale, offset = quantize(np.array([0.0, 1.0]), 8)
    assert codes.tolist() == [0, 255]
    # scale is stored as float32, so the top endpoint is only within rounding
    np.testing.assert_allclose(dequantize(codes, scale, offset), [0.0, 1.0], rtol=0, atol=1e-7)


def test_error_bound_exhaustive_on_random_vector():
    z = np.random.default_rng(0).standard_normal(64)
    codes, scale, offset = quantize(z, 8)
    err = np.abs(z - dequantize(codes, scale, offset))
    for i in range(64):
        assert err[i] <= scale / 2


@settings(max_examples=200, deadline=None)
@given(
    z=arrays(np.float64, st.integers(1, 100), elements=st.floats(-1e6, 1e6, allow_nan=False)),
    bits=st.sampled_from([8, 16]),
)
def test_quantization_properties(z, bits):
    codes, scale, offset = quantize(z, bits)
    assert codes.min() >= 0 and codes.max() <= 2**bits - 1
    assert np.float32(scale) == scale and np.float32(offset) == offset or scale == 0.0
    assert np.max(np.abs(z - dequantize(codes, scale, offset))) <= scale / 2


def test_quantize_rejects_bad_input():
    with pytest.raises(ValueError):
        quantize(np.ones(3), 12)
    with pytest.raises(ValueError):
        quantize(np.array([1.0, np.nan]), 8)
    with pytest.raises(ValueError):
        quantize(np.array([]), 8)


# ---- range coder -----------------------------------------------------------


def test_all_equal_codes_compress_hard():
    data = range_encode(np.full(1000, 7), 8)
    assert len(data) < 50
    np.testing.assert_array_equal(range_decode(data, 1000, 8), np.full(1000, 7))


def test_single_symbol_round_trip():
    for bits, c in ((8, 200), (16, 54321)):
        assert range_decode(range_encode([c], bits), 1, bits).tolist() == [c]


@settings(max_examples=60, deadline=None)
@given(data=st.data(), bits=st.sampled_from([8, 16]), n=st.integers(0, 300))
def test_range_coder_lossless(data, bits, n):
    codes = np.array(data.draw(st.lists(st.integers(0, 2**bits - 1), min_size=n, max_size=n)), dtype=np.int64)
    np.testing.assert_array_equal(range_decode(range_encode(codes, bits), n, bits), codes)


def test_skewed_streams_shrink():
    rng = np.random.default_rng(0)
    codes = np.minimum(rng.geometric(0.4, 2000), 255)
    assert len(range_encode(codes, 8)) < 2000 // 2


def test_corrupt_stream_reports_position():
    data = range_encode(np.arange(200) % 256, 8)
    with pytest.raises(RangeCoderError, match="byte"):
        range_decode(data[:20], 200, 8)


def test_range_coder_rejects_out_of_range_codes():
    with pytest.raises(ValueError):
        range_encode([256], 8)
    with pytest.raises(ValueError):
        range_encode([1], 12)


# ---- container -------------------------------------------------------------


def test_golden_file_is_byte_exact():
    data = encode_payload(golden_vector(), 8, False, b"codec-fp", b"brdg-fp!")
    assert len(data) == 64 + HEADER_SIZE + 4 == 104
    assert data == GOLDEN.read_bytes()


@pytest.mark.xfail(strict=True, reason="the listed header fields (4+2+4+1+1+4+4+8+8) total 36 bytes, not 34")
def test_header_is_34_bytes():
    assert HEADER_SIZE == 34


def test_header_field_layout():
    z = golden_vector()
    data = GOLDEN.read_bytes()
    codes, scale, offset = quantize(z, 8)
    assert data[0:4] == b"SQZ3"
    assert struct.unpack_from("<H", data, 4)[0] == 1
    assert struct.unpack_from("<I", data, 6)[0] == 64
    assert data[10] == 8 and data[11] == 0
    assert struct.unpack_from("<ff", data, 12) == (scale, offset)
    assert data[20:28] == b"codec-fp" and data[28:36] == b"brdg-fp!"
    assert data[36:100] == codes.astype(np.uint8).tobytes()
    assert struct.unpack_from("<I", data, 100)[0] == zlib.crc32(data[:100])


@pytest.mark.parametrize("bits", [8, 16])
@pytest.mark.parametrize("entropy", [False, True])
def test_write_read_round_trip(tmp_path, bits, entropy):
    z = np.random.default_rng(bits).standard_normal(64)
    path = tmp_path / "p.sqz3"
    n = write_payload(z, path, bits, entropy, b"A" * 8, b"B" * 8)
    assert n == path.stat().st_size
    back, meta = read_payload(path)
    np.testing.assert_array_equal(back, dequantize(*quantize(z, bits)))
    assert meta.d_c == 64 and meta.quant_bits == bits
    # the writer keeps whichever body is smaller
    assert meta.body_bytes <= latent_bytes(64, bits)


def test_entropy_flag_set_for_compressible_codes():
    z = np.zeros(512)
    z[::97] = 1.0
    data = encode_payload(z, 16, True)
    assert data[11] == 1
    assert len(data) < HEADER_SIZE + 4 + latent_bytes(512, 16)
    back, meta = decode_payload(data)
    assert meta.entropy_coded
    np.testing.assert_array_equal(back, dequantize(*quantize(z, 16)))


def test_sixteen_bits_larger_than_eight():
    z = np.random.default_rng(1).standard_normal(64)
    assert len(encode_payload(z, 16, False)) > len(encode_payload(z, 8, False))


def test_damaged_payloads_rejected():
    data = GOLDEN.read_bytes()
    with pytest.raises(BadMagic):
        decode_payload(b"XQZ3" + data[4:])
    bad_version = bytearray(data)
    bad_version[4] = 2
    with pytest.raises(BadVersion):
        decode_payload(bytes(bad_version))
    flipped = bytearray(data)
    flipped[50] ^= 1
    with pytest.raises(CRCMismatch):
        decode_payload(bytes(flipped))
    for cut in (0, 10, 40, 103):
        with pytest.raises(CRCMismatch):
            decode_payload(data[:cut])


def test_fingerprint_mismatch_warns():
    data = GOLDEN.read_bytes()
    with pytest.warns(FingerprintWarning):
        decode_payload(data, expected_codec=b"other-fp")
    with pytest.warns(FingerprintWarning):
        decode_payload(data, expected_bridge=b"other-fp")


def test_compression_ratio():
    assert compression_ratio(117, 2) == 58.5
    assert compression_ratio(5, 5) == 1.0
    assert compression_ratio(120_000, latent_bytes(1024, 16)) == pytest.approx(58.59375)
    assert abs(compression_ratio(120_000, 2048) / 58.5 - 1) < 0.002
    with pytest.raises(ValueError):
        compression_ratio(10, 0)
