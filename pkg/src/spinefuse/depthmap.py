"""Depth image loading, normalization, and silhouette mask extraction.

A depth image is a plain 2D numpy array, either raw 8-bit (uint8) or
normalized float in [0, 1].  A mask is a 2D bool array of the same shape.
Foreground pixels are the ones whose normalized depth falls inside a
dual-threshold band, cleaned up with morphological opening and closing.
"""

import re

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import InvalidImage, InvalidThresholds

DEFAULT_LO = 0.2
DEFAULT_HI = 0.95


def _require_2d(values, name="image"):
    arr = np.asarray(values)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidImage(f"{name} must be a non-empty 2D array, got shape {arr.shape}")
    return arr


def normalize(values):
    """Map a raw 8-bit depth image to float64 in [0, 1] by dividing by 255."""
    arr = _require_2d(values)
    if arr.dtype != np.uint8:
        raise InvalidImage(f"normalize expects uint8 input, got {arr.dtype}")
    return arr.astype(np.float64) / 255.0


def to_unit(values):
    """Bring any supported raw depth array into [0, 1].

    uint8 divides by 255, uint16 by 65535; float input is validated and
    passed through unchanged.
    """
    arr = _require_2d(values)
    if arr.dtype == np.uint8:
        return normalize(arr)
    if arr.dtype == np.uint16:
        return arr.astype(np.float64) / 65535.0
    if np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise InvalidImage("float depth values must already lie in [0, 1]")
        return arr
    raise InvalidImage(f"unsupported depth dtype {arr.dtype}")


def invert(values):
    """Flip the brightness convention of a normalized depth image (1 - v)."""
    arr = _require_2d(values)
    if not np.issubdtype(arr.dtype, np.floating):
        raise InvalidImage("invert expects a normalized float image")
    return 1.0 - arr


def build_mask(values, lo=DEFAULT_LO, hi=DEFAULT_HI):
    """Foreground mask: pixel is set iff lo <= value <= hi.

    The input must already be normalized to [0, 1].
    """
    if not (0.0 <= lo < hi <= 1.0):
        raise InvalidThresholds(f"need 0 <= lo < hi <= 1, got lo={lo} hi={hi}")
    arr = _require_2d(values)
    if not np.issubdtype(arr.dtype, np.floating):
        raise InvalidImage("build_mask expects a normalized float image")
    return (arr >= lo) & (arr <= hi)


def disk_footprint(radius):
    """Elliptical (circular) structuring element with the given pixel radius."""
    if radius < 1:
        raise InvalidImage(f"structuring element radius must be >= 1, got {radius}")
    r = int(radius)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return (xx * xx + yy * yy) <= r * r


def refine_mask(mask, radius=3):
    """Morphological opening then closing with a circular element.

    Opening removes speckle smaller than the element; closing fills pinholes.
    """
    arr = _require_2d(mask, "mask")
    if arr.dtype != bool:
        raise InvalidImage("refine_mask expects a bool mask")
    footprint = disk_footprint(radius)
    opened = ndimage.binary_opening(arr, structure=footprint)
    return ndimage.binary_closing(opened, structure=footprint)


def combine_masks(computed, user_mask):
    """Intersect the computed mask with a user-supplied one."""
    a = _require_2d(computed, "mask")
    b = _require_2d(user_mask, "user mask")
    if a.shape != b.shape:
        raise InvalidImage(f"mask shapes differ: {a.shape} vs {b.shape}")
    return a & (b.astype(bool))


# ---------------------------------------------------------------------------
# File I/O.  PGM is parsed and written directly so fixture bytes stay fully
# deterministic; PNG and BMP go through Pillow.
# ---------------------------------------------------------------------------

def _parse_pgm(data):
    if not data.startswith(b"P5") and not data.startswith(b"P2"):
        raise InvalidImage("not a PGM file (expected P2 or P5 magic)")
    binary = data.startswith(b"P5")
    # Strip comments, then read magic, width, height, maxval.
    header_tokens = []
    pos = 0
    while len(header_tokens) < 4:
        match = re.compile(rb"\s*(#[^\n]*\n|\S+)").match(data, pos)
        if match is None:
            raise InvalidImage("truncated PGM header")
        pos = match.end()
        token = match.group(1)
        if not token.startswith(b"#"):
            header_tokens.append(token)
    width, height, maxval = (int(t) for t in header_tokens[1:])
    if binary:
        # exactly one whitespace byte separates the maxval token from the raster
        body = data[pos + 1:]
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
        if len(body) < width * height * dtype.itemsize:
            raise InvalidImage("PGM raster size does not match header")
        raster = np.frombuffer(body, dtype=dtype, count=width * height)
    else:
        dtype = np.uint16 if maxval > 255 else np.uint8
        raster = np.array(data[pos:].split()[: width * height], dtype=dtype)
    if raster.size != width * height:
        raise InvalidImage("PGM raster size does not match header")
    out = raster.reshape(height, width)
    return out.astype(np.uint16) if maxval > 255 else out.astype(np.uint8)


def load_depth(path):
    """Read a depth image (PGM, PNG, or BMP) as a raw uint8/uint16 array."""
    path = str(path)
    if path.lower().endswith((".pgm", ".pbm")):
        with open(path, "rb") as fh:
            return _parse_pgm(fh.read())
    img = Image.open(path)
    if img.mode == "I;16":
        return np.asarray(img, dtype=np.uint16)
    if img.mode not in ("L", "I"):
        img = img.convert("L")
    arr = np.asarray(img)
    if arr.dtype == np.int32:
        arr = arr.astype(np.uint16)
    return arr


def save_pgm(path, values):
    """Write a uint8 or uint16 array as binary PGM (16-bit is big-endian)."""
    arr = _require_2d(values)
    if arr.dtype == np.uint8:
        maxval, payload = 255, arr.tobytes()
    elif arr.dtype == np.uint16:
        maxval, payload = 65535, arr.astype(">u2").tobytes()
    else:
        raise InvalidImage(f"save_pgm expects uint8 or uint16, got {arr.dtype}")
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header + payload)


def save_mask(path, mask):
    """Write a bool mask as a 0/255 binary PGM."""
    arr = _require_2d(mask, "mask")
    save_pgm(path, np.where(arr.astype(bool), 255, 0).astype(np.uint8))


def load_mask(path):
    """Read a mask written by save_mask (any nonzero pixel is foreground)."""
    return load_depth(path) > 0
