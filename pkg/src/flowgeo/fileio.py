"""Middlebury .flo reading/writing and 8-bit image ingestion.

The .flo layout is the 4-byte magic "PIEH", little-endian int32 width and
height, then row-major interleaved (u, v) little-endian float32 pairs.
Flow data is float32 on disk; in memory the package works in float64.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

FLO_MAGIC = b"PIEH"  # the float32 202021.25 tag, little-endian


class FloParseError(ValueError):
    """Base class of .flo parse failures."""


class FloBadMagic(FloParseError):
    pass


class FloTruncated(FloParseError):
    """Payload shorter (or longer) than the declared dimensions."""


class FloBadDimensions(FloParseError):
    pass


class ImageReadError(ValueError):
    """Unreadable or unsupported image file."""


class UnsupportedImageDepth(ImageReadError):
    pass


def read_flo(path) -> np.ndarray:
    """Read a .flo file into an (H, W, 2) float64 flow field."""
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise FloTruncated(f"{path}: file too short to hold the magic tag")
    if data[:4] != FLO_MAGIC:
        raise FloBadMagic(
            f"{path}: bad magic {data[:4]!r}, expected {FLO_MAGIC!r}"
        )
    if len(data) < 12:
        raise FloTruncated(f"{path}: missing width/height header")
    width, height = struct.unpack("<ii", data[4:12])
    if width <= 0 or height <= 0:
        raise FloBadDimensions(
            f"{path}: non-positive dimensions {width}x{height}"
        )
    expected = 12 + 8 * width * height
    if len(data) != expected:
        raise FloTruncated(
            f"{path}: declared {width}x{height} needs {expected} bytes, "
            f"file has {len(data)}"
        )
    flat = np.frombuffer(data, dtype="<f4", count=2 * width * height, offset=12)
    return flat.reshape(height, width, 2).astype(np.float64)


def write_flo(path, flow: np.ndarray) -> None:
    """Write an (H, W, 2) flow field as a .flo file (float32 on disk)."""
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must be (H, W, 2), got {flow.shape}")
    h, w = flow.shape[:2]
    payload = np.ascontiguousarray(flow, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(FLO_MAGIC)
        fh.write(struct.pack("<ii", w, h))
        fh.write(payload)


_HIGH_DEPTH_MODES = {"I", "I;16", "I;16B", "I;16L", "I;16N", "F"}


def read_image(path) -> np.ndarray:
    """Read a PNG or binary PPM into an (H, W, 3) float64 array in [0, 1].

    8-bit channels are divided by 255; grayscale is promoted to three equal
    channels; palettes and alpha are flattened to RGB. Higher bit depths are
    rejected.
    """
    from PIL import Image as PILImage, UnidentifiedImageError

    try:
        with PILImage.open(path) as img:
            img.load()
            mode = img.mode
            if mode in _HIGH_DEPTH_MODES:
                raise UnsupportedImageDepth(
                    f"{path}: unsupported bit depth (mode {mode}); "
                    "only 8-bit images are supported"
                )
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float64)
    except UnidentifiedImageError as exc:
        raise ImageReadError(f"{path}: not a recognized image file") from exc
    except (OSError, SyntaxError) as exc:
        raise ImageReadError(f"{path}: failed to read image: {exc}") from exc
    return arr / 255.0


def read_mask(path) -> np.ndarray:
    """Read an image as a binary (H, W) mask: any nonzero pixel becomes 1."""
    arr = read_image(path)
    return (arr.sum(axis=2) > 0).astype(np.uint8)


def write_image(path, image: np.ndarray) -> None:
    """Write an (H, W, 3) float image in [0, 1] as an 8-bit PNG/PPM."""
    from PIL import Image as PILImage

    image = np.asarray(image, dtype=np.float64)
    data = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    PILImage.fromarray(data, mode="RGB").save(path)
