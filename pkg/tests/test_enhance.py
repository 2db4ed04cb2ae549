"""Histogram equalization and dark-channel dehazing."""

import numpy as np
import pytest

from biliscope import enhance
from biliscope.enhance import DehazeParams, dehaze, equalization_table, histogram_equalize


# ---------------------------------------------------------------------------
# Histogram equalization
# ---------------------------------------------------------------------------

def test_equalize_worked_example():
    img = np.array([[52, 55], [61, 59]], dtype=np.uint8)
    assert histogram_equalize(img).tolist() == [[0, 85], [255, 170]]


def test_equalize_constant_unchanged():
    img = np.full((5, 9), 200, dtype=np.uint8)
    out = histogram_equalize(img)
    assert np.array_equal(out, img)
    out[0, 0] = 0                     # returned copy must not alias the input
    assert img[0, 0] == 200


def test_equalize_two_level_to_extremes():
    img = np.array([[10, 240], [240, 10]], dtype=np.uint8)
    assert sorted(set(histogram_equalize(img).ravel().tolist())) == [0, 255]


def test_equalize_preserves_intensity_order():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (32, 32)).astype(np.uint8)
    out = histogram_equalize(img)
    flat_in, flat_out = img.ravel(), out.ravel()
    order = np.argsort(flat_in, kind="stable")
    assert (np.diff(flat_out[order].astype(int)) >= 0).all()


def test_equalize_spreads_to_full_range():
    rng = np.random.default_rng(1)
    img = rng.integers(100, 140, (64, 64)).astype(np.uint8)
    out = histogram_equalize(img)
    assert out.min() == 0 and out.max() == 255


def test_equalize_rejects_empty():
    with pytest.raises(ValueError):
        histogram_equalize(np.zeros((0, 4), dtype=np.uint8))


def test_equalization_table_pieces():
    cdf, cdf_min, total = equalization_table(np.array([[52, 55], [61, 59]], dtype=np.uint8))
    assert total == 4
    assert cdf_min == 1
    assert cdf[52] == 1 and cdf[55] == 2 and cdf[59] == 3 and cdf[61] == 4
    assert cdf[255] == 4


# ---------------------------------------------------------------------------
# Dehazing
# ---------------------------------------------------------------------------

def test_dehaze_params_validation():
    with pytest.raises(ValueError):
        DehazeParams(omega=0.0)
    with pytest.raises(ValueError):
        DehazeParams(t_floor=1.0)
    with pytest.raises(ValueError):
        DehazeParams(patch_radius=0)
    with pytest.raises(ValueError):
        DehazeParams(airlight_fraction=0.0)


def test_dark_channel_is_local_minimum():
    rng = np.random.default_rng(2)
    img = rng.integers(0, 256, (12, 12)).astype(np.float64)
    radius = 2
    dark = enhance._dark_channel(img, radius)
    h, w = img.shape
    for r in range(h):
        for c in range(w):
            r0, r1 = max(0, r - radius), min(h, r + radius + 1)
            c0, c1 = max(0, c - radius), min(w, c + radius + 1)
            assert dark[r, c] == img[r0:r1, c0:c1].min()


def test_estimate_airlight_tracks_brightest_hazy_region():
    img = np.full((20, 20), 50, dtype=np.float64)
    img[:8, :8] = 240                       # uniformly bright = hazy corner
    dark = enhance._dark_channel(img, 2)
    airlight = enhance.estimate_airlight(img, dark, fraction=0.01)
    assert airlight == 240.0


def test_dehaze_expands_contrast_of_hazy_input():
    clean = np.tile(np.linspace(40, 220, 64), (64, 1))
    hazy = np.clip(clean * 0.7 + 255.0 * 0.3, 0, 255).astype(np.uint8)
    out = dehaze(hazy)
    assert out.dtype == np.uint8 and out.shape == hazy.shape
    assert int(out.max()) - int(out.min()) > int(hazy.max()) - int(hazy.min())


def test_dehaze_constant_image_stays_constant():
    img = np.full((32, 32), 180, dtype=np.uint8)
    out = dehaze(img)
    assert len(np.unique(out)) == 1
