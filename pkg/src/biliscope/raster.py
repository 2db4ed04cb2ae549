"""Image representation, netpbm I/O, and elementary point/kernel operations.

Conventions used throughout the package:

- a grayscale image is a 2-D ``uint8`` array, row-major, values in [0, 255]
- an RGB image is an (h, w, 3) ``uint8`` array
- a real-valued intermediate is a 2-D ``float64`` array

Every integer pixel produced by this module is rounded half-up, and every
3x3 kernel replicates edge pixels at the border.
"""

from __future__ import annotations

import numpy as np

from .errors import PgmParseError, UnsupportedFormatError

__all__ = [
    "round_half_up",
    "load_pgm",
    "save_pgm",
    "load_ppm",
    "load_netpbm",
    "read_image",
    "write_pgm",
    "to_grayscale",
    "resize",
    "resize_to_512",
    "complement",
    "box_blur_3x3",
    "sharpen",
]


def round_half_up(values):
    """Round to nearest integer with .5 going up (plain float array in, float array out)."""
    return np.floor(np.asarray(values, dtype=np.float64) + 0.5)


def _quantize(values) -> np.ndarray:
    """Clamp to [0, 255] and round half-up into uint8."""
    return np.clip(round_half_up(values), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# netpbm I/O
# ---------------------------------------------------------------------------

def _read_header_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Read `count` whitespace-separated integer tokens after the magic.

    Supports '#' comments as allowed by the netpbm spec. Returns the tokens
    and the offset of the first raster byte (one whitespace past the last
    token).
    """
    tokens: list[int] = []
    pos = 2  # past the 2-byte magic
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token:
            raise PgmParseError("truncated header: expected %d more value(s)"
                                % (count - len(tokens)))
        try:
            tokens.append(int(token))
        except ValueError:
            raise PgmParseError("invalid header token %r" % token.decode("ascii", "replace"))
    if pos >= len(data):
        raise PgmParseError("missing whitespace after header")
    pos += 1  # exactly one whitespace byte separates header and raster
    return tokens, pos


def load_netpbm(data: bytes) -> np.ndarray:
    """Decode raw bytes as binary PGM (P5) or PPM (P6)."""
    magic = data[:2]
    if magic == b"P5":
        return load_pgm(data)
    if magic == b"P6":
        return load_ppm(data)
    raise UnsupportedFormatError("unsupported netpbm magic %r" % magic)


def load_pgm(data: bytes) -> np.ndarray:
    """Decode a binary portable graymap (magic P5, maxval 255) into a grayscale image."""
    magic = data[:2]
    if magic != b"P5":
        if magic in (b"P1", b"P2", b"P3", b"P4", b"P6"):
            raise UnsupportedFormatError("unsupported netpbm magic %r (need binary P5)"
                                         % magic.decode("ascii", "replace"))
        raise PgmParseError("bad magic %r" % magic)
    (width, height, maxval), offset = _read_header_tokens(data, 3)
    if width < 1 or height < 1:
        raise PgmParseError("invalid dimensions %dx%d" % (width, height))
    if maxval != 255:
        raise UnsupportedFormatError("maxval %d not supported (need 255)" % maxval)
    raster = data[offset:offset + width * height]
    if len(raster) != width * height:
        raise PgmParseError("raster truncated: expected %d bytes, got %d"
                            % (width * height, len(raster)))
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def save_pgm(img: np.ndarray) -> bytes:
    """Encode a grayscale image as a canonical binary P5 graymap."""
    img = np.ascontiguousarray(img, dtype=np.uint8)
    if img.ndim != 2:
        raise ValueError("save_pgm expects a 2-D grayscale image")
    height, width = img.shape
    header = b"P5\n%d %d\n255\n" % (width, height)
    return header + img.tobytes()


def load_ppm(data: bytes) -> np.ndarray:
    """Decode a binary portable pixmap (magic P6, maxval 255) into an RGB image."""
    magic = data[:2]
    if magic != b"P6":
        if magic in (b"P1", b"P2", b"P3", b"P4", b"P5"):
            raise UnsupportedFormatError("unsupported netpbm magic %r (need binary P6)"
                                         % magic.decode("ascii", "replace"))
        raise PgmParseError("bad magic %r" % magic)
    (width, height, maxval), offset = _read_header_tokens(data, 3)
    if width < 1 or height < 1:
        raise PgmParseError("invalid dimensions %dx%d" % (width, height))
    if maxval != 255:
        raise UnsupportedFormatError("maxval %d not supported (need 255)" % maxval)
    raster = data[offset:offset + width * height * 3]
    if len(raster) != width * height * 3:
        raise PgmParseError("raster truncated: expected %d bytes, got %d"
                            % (width * height * 3, len(raster)))
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()


def read_image(path) -> np.ndarray:
    """Load a P5 graymap or P6 pixmap from disk."""
    with open(path, "rb") as fh:
        return load_netpbm(fh.read())


def write_pgm(path, img: np.ndarray) -> None:
    """Write a grayscale image to disk as canonical P5."""
    with open(path, "wb") as fh:
        fh.write(save_pgm(img))


# ---------------------------------------------------------------------------
# Point and kernel operations
# ---------------------------------------------------------------------------

def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Convert an RGB image with the 0.3 R + 0.59 G + 0.11 B weighting."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("to_grayscale expects an (h, w, 3) RGB image")
    rgb = img.astype(np.float64)
    gray = 0.3 * rgb[:, :, 0] + 0.59 * rgb[:, :, 1] + 0.11 * rgb[:, :, 2]
    return _quantize(gray)


def resize(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize with corner-aligned sampling.

    Works on grayscale (2-D) and RGB (3-D) uint8 images; a same-size resize
    is the identity.
    """
    img = np.asarray(img)
    in_h, in_w = img.shape[:2]
    if (in_h, in_w) == (height, width):
        return img.copy()

    def _coords(n_out, n_in):
        if n_out == 1 or n_in == 1:
            return np.zeros(n_out, dtype=np.float64)
        return np.arange(n_out, dtype=np.float64) * (n_in - 1) / (n_out - 1)

    rows = _coords(height, in_h)
    cols = _coords(width, in_w)
    r0 = np.minimum(rows.astype(np.intp), in_h - 1)
    c0 = np.minimum(cols.astype(np.intp), in_w - 1)
    r1 = np.minimum(r0 + 1, in_h - 1)
    c1 = np.minimum(c0 + 1, in_w - 1)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    if img.ndim == 3:
        fr = fr[:, :, None]
        fc = fc[:, :, None]

    data = img.astype(np.float64)
    top = data[r0][:, c0] * (1 - fc) + data[r0][:, c1] * fc
    bottom = data[r1][:, c0] * (1 - fc) + data[r1][:, c1] * fc
    return _quantize(top * (1 - fr) + bottom * fr)


def resize_to_512(img: np.ndarray) -> np.ndarray:
    """Resize to the 512x512 processing scale."""
    return resize(img, 512, 512)


def complement(img: np.ndarray) -> np.ndarray:
    """Invert intensities: v -> 255 - v."""
    img = np.asarray(img, dtype=np.uint8)
    return (255 - img.astype(np.int16)).astype(np.uint8)


def box_blur_3x3(img: np.ndarray) -> np.ndarray:
    """3x3 box mean with replicated edges, in float."""
    padded = np.pad(np.asarray(img, dtype=np.float64), 1, mode="edge")
    out = np.zeros(np.asarray(img).shape, dtype=np.float64)
    for dr in range(3):
        for dc in range(3):
            out += padded[dr:dr + out.shape[0], dc:dc + out.shape[1]]
    return out / 9.0


def sharpen(img: np.ndarray, amount: float = 1.0) -> np.ndarray:
    """Unsharp mask: in + amount * (in - 3x3 box blur), clamped to [0, 255]."""
    data = np.asarray(img, dtype=np.float64)
    return _quantize(data + amount * (data - box_blur_3x3(data)))
