"""Blob analysis, geometric and texture features, and min-max scaling.

The duct blob is the largest 8-connected component of the segmentation
mask; geometry comes from its bounding box and 4-neighbor edge perimeter,
texture from a symmetric horizontal-offset co-occurrence matrix restricted
to the mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.ndimage import label as cc_label

from .errors import DegenerateTextureError, NoRegionError

__all__ = [
    "Blob",
    "GlcmStats",
    "FeatureVector",
    "ScalerState",
    "FEATURE_NAMES",
    "REDUCED_NAMES",
    "connected_components",
    "bile_duct_of",
    "axes",
    "compactness",
    "glcm",
    "glcm_stats",
    "extract",
    "reduce_features",
    "fit_scaler",
    "apply_scaler",
]

FEATURE_NAMES = ("mja", "mia", "bda", "iba", "cmp", "ar", "cont", "mean", "var", "corr")
REDUCED_NAMES = ("mja", "ar", "mia", "cmp")

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class Blob:
    pixels: np.ndarray      # (n, 2) row/col coordinates, row-major order
    area: int
    bbox: tuple[int, int, int, int]  # inclusive (row0, row1, col0, col1)
    perimeter: int          # exposed 4-neighbor edges


class GlcmStats(NamedTuple):
    contrast: float
    mean: float
    variance: float
    correlation: float
    degenerate: bool


@dataclass(frozen=True)
class FeatureVector:
    mja: float   # larger bounding-box extent of the duct, / axis_norm
    mia: float   # smaller extent, / axis_norm
    bda: float   # duct area, pixels
    iba: float   # whole-tree area, pixels
    cmp: float   # perimeter^2 / (4 pi area)
    ar: float    # bda / iba
    cont: float
    mean: float
    var: float
    corr: float
    texture_degenerate: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES])


# ---------------------------------------------------------------------------
# Blob analysis
# ---------------------------------------------------------------------------

def connected_components(mask: np.ndarray) -> list[Blob]:
    """8-connected foreground components with area, bbox, and edge perimeter."""
    fg = np.asarray(mask) > 0
    labels, count = cc_label(fg, structure=_EIGHT_CONNECTED)
    if count == 0:
        return []

    # exposed edges per pixel: 4 minus the number of foreground 4-neighbors
    padded = np.pad(fg, 1)
    neighbor_count = (
        padded[:-2, 1:-1].astype(np.int32) + padded[2:, 1:-1]
        + padded[1:-1, :-2] + padded[1:-1, 2:]
    )
    exposed = np.where(fg, 4 - neighbor_count, 0)

    areas = np.bincount(labels.ravel(), minlength=count + 1)
    perims = np.bincount(labels.ravel(), weights=exposed.ravel(), minlength=count + 1)

    blobs = []
    rows, cols = np.nonzero(fg)
    pixel_labels = labels[rows, cols]
    order = np.argsort(pixel_labels, kind="stable")
    rows, cols, pixel_labels = rows[order], cols[order], pixel_labels[order]
    starts = np.searchsorted(pixel_labels, np.arange(1, count + 2))
    for lbl in range(1, count + 1):
        sl = slice(starts[lbl - 1], starts[lbl])
        r, c = rows[sl], cols[sl]
        blobs.append(Blob(
            pixels=np.column_stack([r, c]),
            area=int(areas[lbl]),
            bbox=(int(r.min()), int(r.max()), int(c.min()), int(c.max())),
            perimeter=int(perims[lbl]),
        ))
    return blobs


def bile_duct_of(blobs: list[Blob]) -> Blob:
    """Largest blob; ties broken by the higher, then lefter, bounding-box corner."""
    if not blobs:
        raise NoRegionError("no blobs in mask")
    return min(blobs, key=lambda b: (-b.area, b.bbox[0], b.bbox[2]))


def axes(duct: Blob) -> tuple[int, int]:
    """(major, minor) bounding-box extents in pixels, inclusive counts."""
    r0, r1, c0, c1 = duct.bbox
    height = r1 - r0 + 1
    width = c1 - c0 + 1
    return max(width, height), min(width, height)


def compactness(duct: Blob) -> float:
    """Perimeter^2 over 4 pi area; 1 for a continuous circle."""
    if duct.area <= 0:
        raise NoRegionError("compactness of empty blob")
    return duct.perimeter ** 2 / (4.0 * math.pi * duct.area)


# ---------------------------------------------------------------------------
# Texture
# ---------------------------------------------------------------------------

def quantize_levels(img: np.ndarray, levels: int) -> np.ndarray:
    """Equal-width binning of [0, 255] into `levels` gray levels."""
    return (np.asarray(img, dtype=np.int32) * levels) // 256


def glcm(img: np.ndarray, mask: np.ndarray, levels: int = 8) -> np.ndarray:
    """Symmetric horizontal-offset co-occurrence matrix over mask pixels.

    Counts pairs at offset (0, +1) with both pixels in the mask, adds the
    transpose, and normalizes to sum 1.
    """
    if levels < 2:
        raise ValueError("levels must be >= 2")
    q = quantize_levels(img, levels)
    fg = np.asarray(mask) > 0
    pair_ok = fg[:, :-1] & fg[:, 1:]
    left = q[:, :-1][pair_ok]
    right = q[:, 1:][pair_ok]
    if left.size == 0:
        raise DegenerateTextureError("no horizontally adjacent in-mask pixel pair")
    counts = np.zeros((levels, levels), dtype=np.float64)
    np.add.at(counts, (left, right), 1.0)
    counts += counts.T.copy()
    return counts / counts.sum()


def glcm_stats(g: np.ndarray) -> GlcmStats:
    """Contrast, mean, variance, and correlation of a normalized GLCM.

    Zero variance (constant texture) reports correlation 1.0 with the
    degenerate flag set.
    """
    g = np.asarray(g, dtype=np.float64)
    n = g.shape[0]
    i = np.arange(n, dtype=np.float64)[:, None]
    j = np.arange(n, dtype=np.float64)[None, :]
    contrast = float((g * (i - j) ** 2).sum())
    mean = float((g * i).sum())
    variance = float((g * (i - mean) ** 2).sum())
    if variance == 0.0:
        return GlcmStats(contrast, mean, variance, 1.0, True)
    correlation = float((g * (i - mean) * (j - mean)).sum() / variance)
    return GlcmStats(contrast, mean, variance, correlation, False)


# ---------------------------------------------------------------------------
# Feature vector assembly and scaling
# ---------------------------------------------------------------------------

def extract(img: np.ndarray, tree_mask: np.ndarray, duct: Blob,
            glcm_levels: int = 8, axis_norm: float = 512.0) -> FeatureVector:
    """Assemble the ten measurements for one segmented image."""
    iba = int((np.asarray(tree_mask) > 0).sum())
    if iba == 0:
        raise NoRegionError("empty tree mask")
    mja_px, mia_px = axes(duct)
    stats = glcm_stats(glcm(img, tree_mask, glcm_levels))
    return FeatureVector(
        mja=mja_px / axis_norm,
        mia=mia_px / axis_norm,
        bda=float(duct.area),
        iba=float(iba),
        cmp=compactness(duct),
        ar=duct.area / iba,
        cont=stats.contrast,
        mean=stats.mean,
        var=stats.variance,
        corr=stats.correlation,
        texture_degenerate=stats.degenerate,
    )


def reduce_features(v: FeatureVector) -> np.ndarray:
    """Project to the reduced 4-feature form (mja, ar, mia, cmp)."""
    return np.array([v.mja, v.ar, v.mia, v.cmp])


@dataclass(frozen=True)
class ScalerState:
    mins: np.ndarray
    maxs: np.ndarray


def fit_scaler(rows: np.ndarray) -> ScalerState:
    """Per-feature min/max over the fitted rows (n, d)."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.size == 0:
        raise ValueError("fit_scaler needs at least one row")
    return ScalerState(mins=rows.min(axis=0), maxs=rows.max(axis=0))


def apply_scaler(state: ScalerState, rows: np.ndarray) -> np.ndarray:
    """(v - min) / (max - min) per feature; a constant feature maps to 0."""
    rows = np.asarray(rows, dtype=np.float64)
    span = state.maxs - state.mins
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (rows - state.mins) / safe, 0.0)
