"""Grayscale morphology and backscatter (illumination) correction.

The background estimate is an opening with a structuring element larger
than the expected objects; subtracting it leaves the small bright detail.
Borders replicate the nearest edge pixel so flat images are fixed points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import ndimage

from umsli.errors import InvalidParam, SeTooLarge
from umsli.scene import IntensityImage


@dataclass(frozen=True)
class StructuringElement:
    shape: Literal["disk", "square"]
    size: int  # radius for a disk, side length (odd) for a square

    def __post_init__(self) -> None:
        if self.shape not in ("disk", "square"):
            raise InvalidParam(f"unknown structuring element shape {self.shape!r}")
        if self.shape == "disk" and self.size < 0:
            raise InvalidParam("disk radius must be >= 0")
        if self.shape == "square" and (self.size < 1 or self.size % 2 == 0):
            raise InvalidParam("square side must be a positive odd number")

    @classmethod
    def disk(cls, radius: int) -> "StructuringElement":
        return cls("disk", radius)

    @classmethod
    def square(cls, side: int) -> "StructuringElement":
        return cls("square", side)

    @classmethod
    def parse(cls, text: str) -> "StructuringElement":
        """``"disk:32"`` or ``"square:15"``."""
        shape, _, size = text.strip().lower().partition(":")
        try:
            return cls(shape, int(size))  # type: ignore[arg-type]
        except ValueError as exc:
            if isinstance(exc, InvalidParam):
                raise
            raise InvalidParam(f"invalid structuring element {text!r}") from exc

    @classmethod
    def default_for(cls, width: int, height: int) -> "StructuringElement":
        return cls.disk(max(1, max(width, height) // 8))

    @property
    def mask(self) -> np.ndarray:
        if self.shape == "square":
            return np.ones((self.size, self.size), dtype=bool)
        r = self.size
        yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
        return xx * xx + yy * yy <= r * r

    def __str__(self) -> str:
        return f"{self.shape}:{self.size}"


@dataclass(frozen=True, eq=False)
class EnhancedImage:
    """Signed ``E = I - B`` plus the background estimate ``B``."""

    pixels: np.ndarray
    background: IntensityImage

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    def clamped(self) -> IntensityImage:
        return IntensityImage(np.clip(self.pixels, 0.0, None))


def _footprint(shape: tuple, se: StructuringElement) -> np.ndarray:
    fp = se.mask
    if fp.shape[0] > shape[0] or fp.shape[1] > shape[1]:
        raise SeTooLarge(
            f"structuring element {se} ({fp.shape[1]}x{fp.shape[0]}) exceeds image "
            f"{shape[1]}x{shape[0]}"
        )
    return fp


def erode_array(pixels: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Min-window over a signed array."""
    fp = _footprint(pixels.shape, se)
    return ndimage.grey_erosion(pixels, footprint=fp, mode="nearest")


def dilate_array(pixels: np.ndarray, se: StructuringElement) -> np.ndarray:
    fp = _footprint(pixels.shape, se)
    return ndimage.grey_dilation(pixels, footprint=fp, mode="nearest")


def erode(img: IntensityImage, se: StructuringElement) -> IntensityImage:
    return IntensityImage(erode_array(img.pixels, se))


def dilate(img: IntensityImage, se: StructuringElement) -> IntensityImage:
    return IntensityImage(dilate_array(img.pixels, se))


def open(img: IntensityImage, se: StructuringElement) -> IntensityImage:  # noqa: A001
    return dilate(erode(img, se), se)


def illumination_correct(img: IntensityImage, se: StructuringElement) -> EnhancedImage:
    background = open(img, se)
    return EnhancedImage(img.pixels - background.pixels, background)
