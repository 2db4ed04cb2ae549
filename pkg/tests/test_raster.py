"""Netpbm parsing, quantization, and the pixel-level preprocessing primitives."""

import numpy as np
import pytest

from biliscope import raster
from biliscope.errors import PgmParseError, UnsupportedFormatError


# ---------------------------------------------------------------------------
# Rounding and quantization
# ---------------------------------------------------------------------------

def test_round_half_up_breaks_ties_upward():
    got = raster.round_half_up(np.array([0.5, 1.5, 2.5, -0.5, -1.5, 0.49]))
    assert got.tolist() == [1.0, 2.0, 3.0, 0.0, -1.0, 0.0]


def test_round_half_up_scalar_like():
    assert float(raster.round_half_up(np.float64(76.5))) == 77.0


# ---------------------------------------------------------------------------
# PGM / PPM io
# ---------------------------------------------------------------------------

def test_pgm_roundtrip_preserves_pixels():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (13, 7)).astype(np.uint8)
    again = raster.load_pgm(raster.save_pgm(img))
    assert again.dtype == np.uint8
    assert np.array_equal(again, img)


def test_save_pgm_writes_canonical_header():
    data = raster.save_pgm(np.zeros((2, 3), dtype=np.uint8))
    assert data.startswith(b"P5")
    assert b"3 2" in data or (b"3" in data and b"2" in data)
    assert b"255" in data


def test_load_pgm_accepts_comments_and_whitespace():
    body = bytes([1, 2, 3, 4, 5, 6])
    data = b"P5\n# a comment\n 3   2\n# another\n255\n" + body
    img = raster.load_pgm(data)
    assert img.shape == (2, 3)
    assert img.ravel().tolist() == [1, 2, 3, 4, 5, 6]


def test_load_ppm_gives_rgb_array():
    body = bytes(range(2 * 2 * 3))
    img = raster.load_ppm(b"P6\n2 2\n255\n" + body)
    assert img.shape == (2, 2, 3)
    assert img[1, 1].tolist() == [9, 10, 11]


def test_load_netpbm_dispatches_on_magic():
    gray = raster.load_netpbm(b"P5\n1 1\n255\n\x42")
    assert gray.shape == (1, 1) and gray[0, 0] == 0x42
    rgb = raster.load_netpbm(b"P6\n1 1\n255\n\x01\x02\x03")
    assert rgb.shape == (1, 1, 3)


def test_load_rejects_bad_magic_and_ascii_variants():
    with pytest.raises((PgmParseError, UnsupportedFormatError)):
        raster.load_netpbm(b"P2\n1 1\n255\n9")
    with pytest.raises((PgmParseError, UnsupportedFormatError)):
        raster.load_netpbm(b"garbage")


def test_load_rejects_wrong_maxval():
    with pytest.raises(UnsupportedFormatError):
        raster.load_pgm(b"P5\n1 1\n65535\n\x00\x00")


def test_load_rejects_truncated_body():
    with pytest.raises(PgmParseError):
        raster.load_pgm(b"P5\n2 2\n255\n\x00\x01")


def test_write_and_read_image(tmp_path):
    img = np.arange(12, dtype=np.uint8).reshape(3, 4)
    path = tmp_path / "img.pgm"
    raster.write_pgm(path, img)
    assert np.array_equal(raster.read_image(path), img)


# ---------------------------------------------------------------------------
# Grayscale conversion
# ---------------------------------------------------------------------------

def test_grayscale_pure_channels():
    def gray(rgb):
        return int(raster.to_grayscale(np.array([[rgb]], dtype=np.uint8))[0, 0])

    assert gray((255, 255, 255)) == 255
    assert gray((0, 0, 0)) == 0
    assert gray((255, 0, 0)) == 77
    # channel weights sum to one: pure contributions add back to white
    assert gray((255, 0, 0)) + gray((0, 255, 0)) + gray((0, 0, 255)) == 255


def test_grayscale_rejects_non_rgb():
    with pytest.raises(ValueError):
        raster.to_grayscale(np.arange(6, dtype=np.uint8).reshape(2, 3))


# ---------------------------------------------------------------------------
# Resize
# ---------------------------------------------------------------------------

def test_resize_identity_when_same_shape():
    rng = np.random.default_rng(1)
    img = rng.integers(0, 256, (17, 9)).astype(np.uint8)
    assert np.array_equal(raster.resize(img, 17, 9), img)


def test_resize_constant_stays_constant():
    img = np.full((5, 5), 90, dtype=np.uint8)
    assert (raster.resize(img, 40, 28) == 90).all()


def test_resize_stays_within_input_range():
    rng = np.random.default_rng(2)
    img = rng.integers(40, 200, (6, 6)).astype(np.uint8)
    out = raster.resize(img, 50, 50)
    assert out.min() >= img.min() and out.max() <= img.max()


def test_resize_to_512_square():
    out = raster.resize_to_512(np.zeros((100, 30), dtype=np.uint8))
    assert out.shape == (512, 512)


# ---------------------------------------------------------------------------
# Complement, blur, sharpen
# ---------------------------------------------------------------------------

def test_complement_is_involution():
    rng = np.random.default_rng(3)
    img = rng.integers(0, 256, (9, 9)).astype(np.uint8)
    assert np.array_equal(raster.complement(raster.complement(img)), img)
    assert raster.complement(np.array([[0]], dtype=np.uint8))[0, 0] == 255


def test_box_blur_preserves_constant_and_mean():
    const = np.full((10, 10), 128, dtype=np.uint8)
    assert np.array_equal(raster.box_blur_3x3(const), const)


def test_sharpen_fixes_constant_and_overshoots_edges():
    const = np.full((8, 8), 128, dtype=np.uint8)
    assert np.array_equal(raster.sharpen(const), const)
    step = np.zeros((8, 8), dtype=np.uint8)
    step[:, 4:] = 200
    sharp = raster.sharpen(step)
    # overshoot on the bright side of the edge, clamped to 8 bits
    assert sharp[4].tolist() == [0, 0, 0, 0, 255, 200, 200, 200]


def test_sharpen_amount_zero_is_identity():
    rng = np.random.default_rng(4)
    img = rng.integers(0, 256, (12, 12)).astype(np.uint8)
    assert np.array_equal(raster.sharpen(img, amount=0.0), img)
