"""Grayscale PGM (P5) and PNG readers and writers.

Pixel values are normalised to [0, 1] by the format's maximum value: the PGM
``maxval`` header field, 255 for 8-bit PNG and 65535 for 16-bit PNG.
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import Tuple

import numpy as np
from PIL import Image

from umsli.errors import FormatError, InvalidParam
from umsli.scene import IntensityImage

IMAGE_SUFFIXES = (".png", ".pgm")
_WHITESPACE = b" \t\r\n"


def _parse_pgm(data: bytes) -> Tuple[np.ndarray, int]:
    if data[:2] != b"P5":
        raise FormatError("not a binary PGM (P5) file", 0)
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and (data[pos] in _WHITESPACE or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < len(data) and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < len(data) and data[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise FormatError("malformed PGM header", start)
        fields.append((int(data[start:pos]), start))
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise FormatError("missing whitespace after PGM header", pos)
    pos += 1

    (width, w_at), (height, h_at), (maxval, m_at) = fields
    if width <= 0:
        raise FormatError("PGM width must be positive", w_at)
    if height <= 0:
        raise FormatError("PGM height must be positive", h_at)
    if not 0 < maxval < 65536:
        raise FormatError("PGM maxval must be in 1..65535", m_at)

    depth = 1 if maxval < 256 else 2
    need = width * height * depth
    if len(data) - pos < need:
        raise FormatError(
            f"truncated PGM pixel data: expected {need} bytes, found {len(data) - pos}",
            len(data),
        )
    dtype = np.dtype(np.uint8) if depth == 1 else np.dtype(">u2")
    raw = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
    over = np.flatnonzero(raw > maxval)
    if over.size:
        raise FormatError("PGM sample exceeds maxval", pos + int(over[0]) * depth)
    return raw.reshape(height, width).astype(np.float64), maxval


def _parse_png(data: bytes) -> Tuple[np.ndarray, int]:
    try:
        with Image.open(io.BytesIO(data)) as img:
            img.load()
            mode = img.mode
            if mode == "1":
                img = img.convert("L")
                mode = "L"
            arr = np.array(img)
    except OSError as exc:
        raise FormatError(f"unreadable PNG: {exc}") from exc
    if mode == "L":
        return arr.astype(np.float64), 255
    if mode.startswith("I"):
        arr = arr.astype(np.int64)
        if arr.min() < 0 or arr.max() > 65535:
            raise FormatError(f"PNG samples outside the 16-bit range (mode {mode})")
        return arr.astype(np.float64), 65535
    raise FormatError(f"unsupported PNG mode {mode!r}; expected 8/16-bit grayscale")


def load_image(path: Path) -> IntensityImage:
    """Read a PGM or grayscale PNG as an ``IntensityImage`` in [0, 1]."""
    data = Path(path).read_bytes()
    if data[:2] == b"P5":
        pixels, maxval = _parse_pgm(data)
    elif data[:8] == b"\x89PNG\r\n\x1a\n":
        pixels, maxval = _parse_png(data)
    else:
        raise FormatError(f"{path}: not a PGM (P5) or PNG file", 0)
    return IntensityImage(pixels / maxval)


def load_mask(path: Path) -> np.ndarray:
    """Binary mask: any pixel at or above half scale is foreground."""
    return load_image(path).pixels >= 0.5


def _quantize(pixels: np.ndarray, bit_depth: int) -> np.ndarray:
    if bit_depth not in (8, 16):
        raise InvalidParam(f"bit_depth must be 8 or 16, got {bit_depth}")
    maxval = 255 if bit_depth == 8 else 65535
    scaled = np.rint(np.clip(pixels, 0.0, 1.0) * maxval)
    return scaled.astype(np.uint8 if bit_depth == 8 else np.uint16)


def save_array(path: Path, pixels: np.ndarray, bit_depth: int = 8) -> None:
    """Write values in [0, 1] (clipped) as PGM or PNG, chosen by suffix."""
    path = Path(path)
    arr = _quantize(np.asarray(pixels, dtype=np.float64), bit_depth)
    path.parent.mkdir(parents=True, exist_ok=True)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        height, width = arr.shape
        header = f"P5\n{width} {height}\n{255 if bit_depth == 8 else 65535}\n".encode("ascii")
        body = arr.tobytes() if bit_depth == 8 else arr.astype(">u2").tobytes()
        path.write_bytes(header + body)
    elif suffix == ".png":
        Image.fromarray(arr).save(path, format="PNG")
    else:
        raise InvalidParam(f"unsupported image suffix {path.suffix!r}; use .png or .pgm")


def save_image(path: Path, image: IntensityImage, bit_depth: int = 8) -> None:
    save_array(path, image.pixels, bit_depth)


def save_mask(path: Path, mask: np.ndarray) -> None:
    save_array(path, np.asarray(mask, dtype=np.float64), bit_depth=8)


def list_images(directory: Path) -> list[Path]:
    return sorted(
        p for p in Path(directory).iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
