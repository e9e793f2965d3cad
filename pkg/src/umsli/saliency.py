"""Gamma-kernel centre-surround saliency and box extraction.

A gamma kernel of order ``k`` and decay ``mu`` is the radial mask

    g(r) = mu**(k+1) / (2*pi*k!) * r**(k-1) * exp(-mu*r)

which peaks at ``r = (k-1)/mu``: a blob for ``k = 1`` and a ring otherwise.
A bank sums kernels with alternating signs, so the first (centre) kernel
minus the ring kernels responds to objects about the size of the ring.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage
from scipy.signal import fftconvolve
from scipy.special import gammaln

from umsli.errors import InvalidParam, MaskTooLarge
from umsli.preprocess import EnhancedImage, StructuringElement, illumination_correct
from umsli.scene import Box, IntensityImage

DEFAULT_BANK: Tuple[Tuple[int, float], ...] = ((1, 0.7), (24, 1.0))
EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


def _check_order(k: int, mu: float) -> None:
    if int(k) != k or k < 1:
        raise InvalidParam(f"gamma kernel order must be a positive integer, got {k}")
    if not mu > 0:
        raise InvalidParam(f"gamma kernel decay must be > 0, got {mu}")


def _radial(k: int, mu: float, r: np.ndarray) -> np.ndarray:
    log_norm = (k + 1) * math.log(mu) - math.log(2.0 * math.pi) - float(gammaln(k + 1))
    if k == 1:
        return np.exp(log_norm - mu * r)
    out = np.zeros_like(r, dtype=float)
    pos = r > 0
    out[pos] = np.exp(log_norm + (k - 1) * np.log(r[pos]) - mu * r[pos])
    return out


def _grid(radius: int) -> np.ndarray:
    n = np.arange(-radius, radius + 1, dtype=float)
    return np.hypot(n[None, :], n[:, None])


@dataclass(frozen=True, eq=False)
class GammaKernel:
    k: int
    mu: float
    radius: int
    mask: np.ndarray

    @property
    def peak_radius(self) -> float:
        return (self.k - 1) / self.mu


def support_radius(k: int, mu: float, tol: float = 1e-3) -> int:
    """Smallest radius whose mask edge stays below ``tol`` times the mask peak."""
    _check_order(k, mu)
    rp = (k - 1) / mu
    # Continuous tail bound gives a starting point; the grid check confirms it.
    radius = max(1, int(math.ceil(rp)) + 1)
    peak = float(_radial(k, mu, np.array([rp]))[0])
    while float(_radial(k, mu, np.array([float(radius)]))[0]) >= tol * peak:
        radius += 1
    while True:
        mask = _radial(k, mu, _grid(radius))
        edge = max(mask[0, :].max(), mask[-1, :].max(), mask[:, 0].max(), mask[:, -1].max())
        if edge < tol * mask.max():
            return radius
        radius += 1


def gamma_kernel(k: int, mu: float, radius: Optional[int] = None) -> GammaKernel:
    _check_order(k, mu)
    if radius is None:
        radius = support_radius(k, mu)
    if radius < 1:
        raise InvalidParam(f"kernel radius must be >= 1, got {radius}")
    mask = _radial(int(k), float(mu), _grid(int(radius)))
    mask.setflags(write=False)
    return GammaKernel(int(k), float(mu), int(radius), mask)


@dataclass(frozen=True, eq=False)
class GammaKernelBank:
    params: Tuple[Tuple[int, float], ...]
    kernels: Tuple[GammaKernel, ...]
    composite: np.ndarray

    @property
    def radius(self) -> int:
        return self.kernels[0].radius

    @property
    def mass(self) -> float:
        return float(self.composite.sum())

    def describe(self) -> str:
        return ",".join(
            f"k{i + 1}:{k},mu{i + 1}:{mu:g}" for i, (k, mu) in enumerate(self.params)
        )


def kernel_bank(
    params: Sequence[Tuple[int, float]] = DEFAULT_BANK, radius: Optional[int] = None
) -> GammaKernelBank:
    """Alternating sum ``g0 - g1 + g2 - ...`` on a shared support."""
    params = tuple((int(k), float(mu)) for k, mu in params)
    if len(params) < 2:
        raise InvalidParam("a kernel bank needs at least two kernels")
    if radius is None:
        radius = max(support_radius(k, mu) for k, mu in params)
    kernels = tuple(gamma_kernel(k, mu, radius) for k, mu in params)
    composite = np.zeros_like(kernels[0].mask)
    for m, kern in enumerate(kernels):
        composite += kern.mask if m % 2 == 0 else -kern.mask
    composite.setflags(write=False)
    return GammaKernelBank(params, kernels, composite)


_BANK_TOKEN = re.compile(r"^(k|mu)(\d+)$")


def parse_bank(text: str) -> List[Tuple[int, float]]:
    """``"k1:1,mu1:0.7,k2:24,mu2:1.0"`` -> ``[(1, 0.7), (24, 1.0)]``."""
    ks: dict[int, int] = {}
    mus: dict[int, float] = {}
    for token in filter(None, (t.strip() for t in text.split(","))):
        key, _, value = token.partition(":")
        match = _BANK_TOKEN.match(key.strip().lower())
        if not match or not value:
            raise InvalidParam(f"invalid bank entry {token!r}")
        idx = int(match.group(2))
        try:
            if match.group(1) == "k":
                ks[idx] = int(value)
            else:
                mus[idx] = float(value)
        except ValueError as exc:
            raise InvalidParam(f"invalid bank value in {token!r}") from exc
    indices = sorted(set(ks) | set(mus))
    if indices != list(range(1, len(indices) + 1)) or set(ks) != set(mus):
        raise InvalidParam(f"bank must give k<i> and mu<i> for i = 1..M: {text!r}")
    return [(ks[i], mus[i]) for i in indices]


def convolve(pixels: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """'same'-size convolution with edge-replicated borders."""
    pixels = np.asarray(pixels, dtype=float)
    mask = np.asarray(mask, dtype=float)
    kh, kw = mask.shape
    if kh > pixels.shape[0] or kw > pixels.shape[1]:
        raise MaskTooLarge(
            f"mask {kw}x{kh} larger than image {pixels.shape[1]}x{pixels.shape[0]}"
        )
    cy, cx = kh // 2, kw // 2
    padded = np.pad(pixels, ((kh - 1 - cy, cy), (kw - 1 - cx, cx)), mode="edge")
    return fftconvolve(padded, mask, mode="valid")


ImageLike = Union[np.ndarray, IntensityImage, EnhancedImage]


def _pixels(img: ImageLike) -> np.ndarray:
    if isinstance(img, (IntensityImage, EnhancedImage)):
        return img.pixels
    return np.asarray(img, dtype=float)


def saliency_response(img: ImageLike, bank: GammaKernelBank) -> Tuple[np.ndarray, float]:
    """Normalised map and the pre-normalisation maximum."""
    response = np.clip(convolve(_pixels(img), bank.composite), 0.0, None)
    scale = float(response.max())
    if scale > 0:
        response = response / scale
    return response, scale


def saliency_map(img: ImageLike, bank: GammaKernelBank) -> np.ndarray:
    return saliency_response(img, bank)[0]


def binarize(smap: np.ndarray, threshold: float) -> np.ndarray:
    return np.asarray(smap) >= threshold


def adaptive_threshold(smap: np.ndarray, alpha: float) -> float:
    return float(alpha * np.mean(smap))


@dataclass(frozen=True)
class DetectedBox:
    x: int
    y: int
    w: int
    h: int
    score: float
    area: int

    def box(self) -> Box:
        return Box(self.x, self.y, self.w, self.h)


def extract_boxes(
    mask: np.ndarray, min_area: int = 1, smap: Optional[np.ndarray] = None
) -> List[DetectedBox]:
    """Tight boxes of 8-connected components, scored by mean saliency."""
    mask = np.asarray(mask, dtype=bool)
    labels, count = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if count == 0:
        return []
    index = np.arange(1, count + 1)
    areas = ndimage.sum_labels(np.ones_like(labels), labels, index)
    scores = (
        ndimage.mean(smap, labels, index) if smap is not None else np.ones(count, dtype=float)
    )
    boxes = []
    for label, sl in enumerate(ndimage.find_objects(labels), start=1):
        area = int(areas[label - 1])
        if sl is None or area < min_area:
            continue
        ys, xs = sl
        boxes.append(
            DetectedBox(
                xs.start, ys.start, xs.stop - xs.start, ys.stop - ys.start,
                float(scores[label - 1]), area,
            )
        )
    boxes.sort(key=lambda b: (-b.score, b.y, b.x))
    return boxes


@dataclass(frozen=True, eq=False)
class SaliencyResult:
    map: np.ndarray
    mask: np.ndarray
    boxes: List[DetectedBox]
    scale: float
    threshold: float
    enhanced: Optional[EnhancedImage] = None


def detect(
    image: IntensityImage,
    bank: GammaKernelBank,
    alpha: float = 4.0,
    min_area: int = 9,
    se: Optional[StructuringElement] = None,
    correct: bool = True,
) -> SaliencyResult:
    """Illumination correction (signed), saliency, adaptive binarisation, boxes."""
    enhanced = None
    source: ImageLike = image
    if correct:
        se = se or StructuringElement.default_for(image.width, image.height)
        enhanced = illumination_correct(image, se)
        source = enhanced
    smap, scale = saliency_response(source, bank)
    threshold = adaptive_threshold(smap, alpha)
    if scale > 0:
        mask = binarize(smap, threshold) & (smap > 0)
    else:
        mask = np.zeros(smap.shape, dtype=bool)
    boxes = extract_boxes(mask, min_area, smap)
    return SaliencyResult(smap, mask, boxes, scale, threshold, enhanced)
