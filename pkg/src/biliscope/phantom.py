"""Synthetic biliary-tree phantoms with ground-truth masks.

Each phantom is a vertical central duct with angled side branches on a
flat background, degraded by a multiplicative low-frequency haze field
(darkest near the image center, where haze concentrates) and additive
Gaussian noise.  All geometry that distinguishes wide ducts from narrow
ones — duct length, branch length and thickness, and whether branches
fuse with the duct or sit slightly detached — is driven by the duct
width, so corpora built from disjoint width ranges separate cleanly.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GeometryError
from .raster import read_image, round_half_up, write_pgm

__all__ = [
    "DILATION_THRESHOLD_PX",
    "NORMAL_WIDTH_RANGE",
    "DILATED_WIDTH_RANGE",
    "LABEL_DILATED",
    "LABEL_NORMAL",
    "PhantomSpec",
    "PhantomSample",
    "CorpusEntry",
    "width_label",
    "generate",
    "generate_corpus",
    "save_corpus",
    "load_manifest",
    "load_mask",
]

# A common duct wider than 8 mm is dilated; at 240 mm of field of view
# imaged over 512 px this is 8 * 512 / 240 px.  The convention is a fixed
# pixel threshold, deliberately independent of the rendered image size.
DILATION_THRESHOLD_PX = 8.0 * 512.0 / 240.0

NORMAL_WIDTH_RANGE = (6, 12)
DILATED_WIDTH_RANGE = (20, 34)

LABEL_DILATED = "dilated"
LABEL_NORMAL = "normal"

MANIFEST_FIELDS = ("id", "label", "duct_width_px", "image_path",
                   "tree_mask_path", "duct_mask_path")


@dataclass(frozen=True)
class PhantomSpec:
    duct_width_px: int
    size: int = 512
    branch_count: int = 6
    branch_width_px: int = 3
    fg_intensity: int = 230
    bg_intensity: int = 160
    noise_sigma: float = 0.0
    haze_strength: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.duct_width_px < 2:
            raise ValueError("duct_width_px must be >= 2")
        if not 0 <= self.bg_intensity < self.fg_intensity <= 255:
            raise ValueError("need 0 <= bg_intensity < fg_intensity <= 255")
        if not 0.0 <= self.haze_strength < 1.0:
            raise ValueError("haze_strength must be in [0, 1)")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.size < 64:
            raise ValueError("size must be >= 64")
        if self.branch_count < 0 or self.branch_width_px < 1:
            raise ValueError("invalid branch geometry")


@dataclass(frozen=True)
class PhantomSample:
    image: np.ndarray       # uint8 grayscale
    tree_mask: np.ndarray   # uint8 {0,1}, duct plus branches
    duct_mask: np.ndarray   # uint8 {0,1}, duct only
    label: str
    duct_width_px: int


def width_label(duct_width_px: float) -> str:
    return LABEL_DILATED if duct_width_px > DILATION_THRESHOLD_PX else LABEL_NORMAL


# ---------------------------------------------------------------------------
# Rendering helpers
# ---------------------------------------------------------------------------

# Interior tone of a vessel relative to its bright luminal core.  Wide
# vessels render as a bright core sheathed by a slightly darker wall, the
# way a fluid-filled duct images; vessels only a few pixels across blur
# into a single tone downstream, so the banding is a width cue, not a
# per-class switch.
WALL_TONE = 0.72
CORE_FRACTION = 0.55


def _paint_segment(mask: np.ndarray, tone: np.ndarray, p0: tuple[float, float],
                   p1: tuple[float, float], half_width: float) -> None:
    """Paint the capsule within half_width of segment p0-p1 (row, col).

    ``mask`` receives the boolean footprint; ``tone`` receives the two-tone
    intensity profile (1.0 inside the luminal core, WALL_TONE in the outer
    wall), max-blended so overlapping vessels keep their brightest tone.
    """
    size = mask.shape[0]
    pad = int(np.ceil(half_width)) + 1
    r_lo = max(0, int(np.floor(min(p0[0], p1[0]))) - pad)
    r_hi = min(size - 1, int(np.ceil(max(p0[0], p1[0]))) + pad)
    c_lo = max(0, int(np.floor(min(p0[1], p1[1]))) - pad)
    c_hi = min(size - 1, int(np.ceil(max(p0[1], p1[1]))) + pad)
    rr, cc = np.mgrid[r_lo:r_hi + 1, c_lo:c_hi + 1]
    dr, dc = p1[0] - p0[0], p1[1] - p0[1]
    length2 = dr * dr + dc * dc
    if length2 == 0:
        d2 = (rr - p0[0]) ** 2 + (cc - p0[1]) ** 2
    else:
        t = np.clip(((rr - p0[0]) * dr + (cc - p0[1]) * dc) / length2, 0.0, 1.0)
        d2 = (rr - (p0[0] + t * dr)) ** 2 + (cc - (p0[1] + t * dc)) ** 2
    inside = d2 <= half_width * half_width
    core = d2 <= (CORE_FRACTION * half_width) ** 2
    mask[r_lo:r_hi + 1, c_lo:c_hi + 1] |= inside
    patch = np.where(core, 1.0, np.where(inside, WALL_TONE, 0.0))
    region = tone[r_lo:r_hi + 1, c_lo:c_hi + 1]
    np.maximum(region, patch, out=region)


def _smooth_field(rng: np.random.Generator, size: int, cells: int = 5) -> np.ndarray:
    """Bilinearly upsampled uniform random grid in [0, 1]."""
    grid = rng.uniform(0.0, 1.0, (cells, cells))
    coords = np.linspace(0.0, cells - 1.0, size)
    i0 = np.minimum(coords.astype(int), cells - 2)
    frac = coords - i0
    rows = grid[i0, :] * (1.0 - frac)[:, None] + grid[i0 + 1, :] * frac[:, None]
    return rows[:, i0] * (1.0 - frac)[None, :] + rows[:, i0 + 1] * frac[None, :]


def _haze_field(rng: np.random.Generator, size: int) -> np.ndarray:
    """Low-frequency haze density in [0, 1]: a broad central bump plus a
    smooth random component with cell scale well below the duct length, so
    no single clear patch rivals the duct in extent."""
    random_part = _smooth_field(rng, size, cells=35)
    axis = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    d2 = axis[:, None] ** 2 + axis[None, :] ** 2
    bump = np.exp(-d2 / (2.0 * (0.35 * size) ** 2))
    return np.clip(0.05 * bump + 0.95 * random_part, 0.0, 1.0)


def _branch_layout(spec: PhantomSpec, rng: np.random.Generator,
                   duct_top: int, duct_len: int) -> list[tuple]:
    """Per-branch (anchor, tip, half_width) in row/col coordinates.

    All branch geometry varies smoothly with duct width: narrow-duct trees
    compensate with longer, thicker branches standing clear of the duct
    wall, while wide-duct trees grow shorter, thinner branches fused to the
    wall.  The total vessel area therefore stays a substantial fraction of
    the frame at every width, while connectivity and reach still separate
    the two regimes.
    """
    size = spec.size
    w = spec.duct_width_px
    gap = max(0, int(round((DILATION_THRESHOLD_PX - w) * 0.9)))
    length = size * float(np.clip(0.34 - 0.004 * w, 0.20, 0.32))
    if w < DILATION_THRESHOLD_PX:
        extra = int(np.clip(round((17.0 - w) / 8.0), 0, 1))
    else:
        extra = int(np.clip(round((w - 17.0) / 3.5), 0, 5))
    half_width = (spec.branch_width_px + extra) / 2.0
    c_left = size // 2 - w // 2
    c_right = c_left + w - 1

    branches = []
    for k in range(spec.branch_count):
        side = 1 if k % 2 == 0 else -1       # +1 → right, -1 → left
        frac = 0.22 + 0.56 * (k // 2) / max(1, (spec.branch_count - 1) // 2)
        frac += rng.uniform(-0.03, 0.03)
        anchor_r = duct_top + frac * duct_len
        theta = np.deg2rad(35.0 + rng.uniform(-8.0, 8.0))
        if gap == 0:
            anchor_c = c_right - 1.0 if side > 0 else c_left + 1.0
        else:
            anchor_c = c_right + gap + half_width if side > 0 else c_left - gap - half_width
        blen = length * rng.uniform(0.92, 1.08)
        tip_r = anchor_r - blen * np.sin(theta)
        tip_c = anchor_c + side * blen * np.cos(theta)
        branches.append(((anchor_r, anchor_c), (tip_r, tip_c), half_width))
    return branches


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

def generate(spec: PhantomSpec) -> PhantomSample:
    """Render one phantom; deterministic for a given spec."""
    rng = np.random.default_rng(spec.rng_seed)
    size = spec.size
    w = spec.duct_width_px

    duct_len = int(round(size * min(0.60 + 0.009 * w, 0.82)))
    if w >= size // 4 or duct_len >= size:
        raise GeometryError(f"duct {w}x{duct_len} px does not fit in {size} px image")
    duct_top = (size - duct_len) // 2
    c_left = size // 2 - w // 2

    duct = np.zeros((size, size), dtype=bool)
    duct[duct_top:duct_top + duct_len, c_left:c_left + w] = True

    tone = np.zeros((size, size), dtype=np.float64)
    cols = np.arange(c_left, c_left + w, dtype=np.float64)
    offset = np.abs(cols - (c_left + (w - 1) / 2.0))
    profile = np.where(offset <= CORE_FRACTION * w / 2.0, 1.0, WALL_TONE)
    tone[duct_top:duct_top + duct_len, c_left:c_left + w] = profile[None, :]

    tree = duct.copy()
    for anchor, tip, half_width in _branch_layout(spec, rng, duct_top, duct_len):
        margin = half_width + 1
        if not (margin <= tip[0] < size - margin and margin <= tip[1] < size - margin):
            raise GeometryError(f"branch tip {tip} outside {size} px image")
        _paint_segment(tree, tone, anchor, tip, half_width)

    fg, bg = float(spec.fg_intensity), float(spec.bg_intensity)
    clean = bg + (fg - bg) * tone
    img = clean
    if spec.haze_strength > 0.0:
        img = img * (1.0 - spec.haze_strength * _haze_field(rng, size))
    if spec.noise_sigma > 0.0:
        img = img + rng.normal(0.0, spec.noise_sigma, img.shape)

    return PhantomSample(
        image=round_half_up(np.clip(img, 0.0, 255.0)).astype(np.uint8),
        tree_mask=tree.astype(np.uint8),
        duct_mask=duct.astype(np.uint8),
        label=width_label(w),
        duct_width_px=w,
    )


def generate_corpus(n_per_class: int, base: PhantomSpec,
                    rng_seed: int = 0) -> list[PhantomSample]:
    """Balanced, shuffled corpus with class-disjoint duct-width ranges."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    rng = np.random.default_rng(rng_seed)
    widths = np.concatenate([
        rng.integers(NORMAL_WIDTH_RANGE[0], NORMAL_WIDTH_RANGE[1] + 1, n_per_class),
        rng.integers(DILATED_WIDTH_RANGE[0], DILATED_WIDTH_RANGE[1] + 1, n_per_class),
    ])
    seeds = rng.integers(0, 2**31 - 1, widths.size)
    samples = [
        generate(dataclasses.replace(base, duct_width_px=int(w), rng_seed=int(s)))
        for w, s in zip(widths, seeds)
    ]
    return [samples[i] for i in rng.permutation(widths.size)]


# ---------------------------------------------------------------------------
# Corpus persistence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorpusEntry:
    id: str
    label: str
    duct_width_px: int
    image_path: Path
    tree_mask_path: Path
    duct_mask_path: Path


def save_corpus(samples: list[PhantomSample], out_dir: str | Path) -> Path:
    """Write images, masks, and manifest.csv; returns the manifest path."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.csv"
    counters = {LABEL_DILATED: 0, LABEL_NORMAL: 0}
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_FIELDS)
        for sample in samples:
            sid = f"{sample.label}-{counters[sample.label]:03d}"
            counters[sample.label] += 1
            image_rel = f"images/{sid}.pgm"
            tree_rel = f"masks/{sid}_tree.pgm"
            duct_rel = f"masks/{sid}_duct.pgm"
            write_pgm(out / image_rel, sample.image)
            write_pgm(out / tree_rel, sample.tree_mask * 255)
            write_pgm(out / duct_rel, sample.duct_mask * 255)
            writer.writerow([sid, sample.label, sample.duct_width_px,
                             image_rel, tree_rel, duct_rel])
    return manifest


def load_manifest(path: str | Path) -> list[CorpusEntry]:
    """Read a corpus manifest; paths are resolved relative to its directory."""
    path = Path(path)
    base = path.parent
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_FIELDS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"manifest missing columns: {sorted(missing)}")
        for row in reader:
            entries.append(CorpusEntry(
                id=row["id"],
                label=row["label"],
                duct_width_px=int(row["duct_width_px"]),
                image_path=base / row["image_path"],
                tree_mask_path=base / row["tree_mask_path"],
                duct_mask_path=base / row["duct_mask_path"],
            ))
    return entries


def load_mask(path: str | Path) -> np.ndarray:
    """Read a stored 0/255 mask back to uint8 {0,1}."""
    return (read_image(path) > 127).astype(np.uint8)
