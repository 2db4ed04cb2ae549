"""Contrast enhancement: histogram equalization and dark-channel dehazing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import minimum_filter, uniform_filter

from .raster import round_half_up

__all__ = ["DehazeParams", "histogram_equalize", "equalization_table", "dehaze"]


@dataclass(frozen=True)
class DehazeParams:
    """Knobs of the dark-channel dehazing chain.

    patch_radius: half-width of the square min/box filter windows.
    omega: haze retention factor in (0, 1]; 0 disables haze removal.
    t_floor: lower bound on the transmission map.
    airlight_fraction: fraction of pixels (ranked by dark channel) averaged
        into the ambient-light estimate.
    """

    patch_radius: int = 7
    omega: float = 0.95
    t_floor: float = 0.1
    airlight_fraction: float = 0.001

    def __post_init__(self):
        if not 0 < self.omega <= 1:
            raise ValueError("omega must be in (0, 1]")
        if not 0 < self.t_floor < 1:
            raise ValueError("t_floor must be in (0, 1)")
        if self.patch_radius < 1:
            raise ValueError("patch_radius must be >= 1")
        if not 0 < self.airlight_fraction <= 1:
            raise ValueError("airlight_fraction must be in (0, 1]")


def equalization_table(img: np.ndarray):
    """Cumulative histogram pieces of the equalization map.

    Returns (cdf, cdf_min, total): the 256-entry cumulative counts, the
    smallest non-zero cumulative count, and the pixel count.
    """
    img = np.asarray(img, dtype=np.uint8)
    hist = np.bincount(img.ravel(), minlength=256)
    cdf = np.cumsum(hist)
    cdf_min = int(cdf[cdf > 0][0])
    return cdf, cdf_min, int(img.size)


def histogram_equalize(img: np.ndarray) -> np.ndarray:
    """Histogram equalization over 256 gray levels.

    Each level v maps to round((CDF(v) - CDF_min) / (total - CDF_min) * 255).
    A constant image (total == CDF_min) is returned unchanged.
    """
    img = np.asarray(img, dtype=np.uint8)
    if img.size == 0:
        raise ValueError("histogram_equalize needs at least one pixel")
    cdf, cdf_min, total = equalization_table(img)
    if total == cdf_min:
        return img.copy()
    table = round_half_up((cdf - cdf_min) / (total - cdf_min) * 255.0)
    table = np.clip(table, 0, 255).astype(np.uint8)
    return table[img]


def _dark_channel(img: np.ndarray, radius: int) -> np.ndarray:
    """Square min filter; for single-channel input the three RGB planes coincide."""
    return minimum_filter(img, size=2 * radius + 1, mode="nearest")


def estimate_airlight(img: np.ndarray, dark: np.ndarray, fraction: float) -> float:
    """Mean intensity over the brightest `fraction` of pixels ranked by dark channel.

    Ties keep ascending pixel order (stable sort on the negated dark channel),
    making the estimate deterministic.
    """
    flat_img = np.asarray(img, dtype=np.float64).ravel()
    order = np.argsort(-dark.ravel(), kind="stable")
    n = max(1, int(flat_img.size * fraction))
    return float(flat_img[order[:n]].mean())


def dehaze(img: np.ndarray, params: DehazeParams = DehazeParams()) -> np.ndarray:
    """Dark-channel dehazing for grayscale images.

    Dark channel -> ambient light A -> transmission t = 1 - omega * dark(I/A),
    box-refined -> recovery J = (I - A) / max(t, t_floor) + A, clamped.
    """
    data = np.asarray(img, dtype=np.float64)
    dark = _dark_channel(data, params.patch_radius)
    airlight = estimate_airlight(data, dark, params.airlight_fraction)
    a_safe = max(airlight, 1e-6)
    transmission = 1.0 - params.omega * _dark_channel(data / a_safe, params.patch_radius)
    transmission = uniform_filter(transmission, size=2 * params.patch_radius + 1,
                                  mode="nearest")
    transmission = np.maximum(transmission, params.t_floor)
    recovered = (data - airlight) / transmission + airlight
    return np.clip(round_half_up(recovered), 0, 255).astype(np.uint8)
