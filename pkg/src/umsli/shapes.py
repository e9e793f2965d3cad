"""Parametric binary silhouettes for synthetic scenes and template libraries.

Every kind is a union of polygons in unit coordinates (x right, y down,
overall length about 1). Rendering scales by ``size`` pixels, squashes the
y axis to emulate an oblique view, rotates, and rasterises with
``skimage.draw.polygon``.
"""

from __future__ import annotations

import math
from typing import Dict, List, Tuple

import numpy as np
from scipy import ndimage
from skimage.draw import polygon as draw_polygon

from umsli.errors import InvalidParam

Polygon = np.ndarray  # (n, 2) array of (x, y) vertices


def _ellipse(cx: float, cy: float, ax: float, ay: float, angle_deg: float = 0.0) -> Polygon:
    t = np.linspace(0.0, 2.0 * math.pi, 64, endpoint=False)
    pts = np.stack([ax * np.cos(t), ay * np.sin(t)], axis=1)
    return _rotate(pts, angle_deg) + np.array([cx, cy])


def _rotate(points: np.ndarray, angle_deg: float) -> np.ndarray:
    a = math.radians(angle_deg)
    rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    return points @ rot.T


def _disk() -> List[Polygon]:
    return [_ellipse(0.0, 0.0, 0.5, 0.5)]


def _square() -> List[Polygon]:
    return [np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])]


def _triangle() -> List[Polygon]:
    h = math.sqrt(3.0) / 2.0
    return [np.array([[-0.5, h / 3.0], [0.5, h / 3.0], [0.0, -2.0 * h / 3.0]])]


def _turtle() -> List[Polygon]:
    return [
        _ellipse(0.0, 0.0, 0.32, 0.26),
        _ellipse(0.40, 0.0, 0.11, 0.08),
        _ellipse(0.16, -0.30, 0.17, 0.055, -35.0),
        _ellipse(0.16, 0.30, 0.17, 0.055, 35.0),
        _ellipse(-0.24, -0.22, 0.10, 0.045, 30.0),
        _ellipse(-0.24, 0.22, 0.10, 0.045, -30.0),
    ]


def _amberjack() -> List[Polygon]:
    tail = np.array([[-0.26, 0.0], [-0.5, -0.18], [-0.42, 0.0], [-0.5, 0.18]])
    dorsal = np.array([[0.02, -0.11], [-0.14, -0.21], [-0.16, -0.08]])
    return [_ellipse(0.06, 0.0, 0.38, 0.15), tail, dorsal]


def _barracuda() -> List[Polygon]:
    tail = np.array([[-0.34, 0.0], [-0.5, -0.10], [-0.45, 0.0], [-0.5, 0.10]])
    return [_ellipse(0.05, 0.0, 0.43, 0.06), tail]


def _ellipse_kind() -> List[Polygon]:
    return [_ellipse(0.0, 0.0, 0.5, 0.25)]


KINDS: Dict[str, callable] = {  # type: ignore[valid-type]
    "disk": _disk,
    "square": _square,
    "triangle": _triangle,
    "ellipse": _ellipse_kind,
    "turtle": _turtle,
    "amberjack": _amberjack,
    "barracuda": _barracuda,
}


def parse_shape(spec: str) -> Tuple[str, float]:
    """Split ``"turtle:18"`` into ``("turtle", 18.0)``."""
    kind, _, size = spec.partition(":")
    kind = kind.strip().lower()
    if kind not in KINDS:
        raise InvalidParam(f"unknown silhouette kind {kind!r}")
    try:
        value = float(size) if size else 16.0
    except ValueError as exc:
        raise InvalidParam(f"invalid silhouette size in {spec!r}") from exc
    return kind, value


def render_silhouette(
    kind: str,
    size: float,
    rotation_deg: float = 0.0,
    squash: float = 1.0,
    canvas: int | None = None,
) -> np.ndarray:
    """Rasterise a silhouette; tight-cropped unless ``canvas`` is given."""
    if kind not in KINDS:
        raise InvalidParam(f"unknown silhouette kind {kind!r}")
    if size <= 0 or not 0.0 < squash <= 1.0:
        raise InvalidParam("silhouette size must be > 0 and squash in (0, 1]")

    parts = []
    for poly in KINDS[kind]():
        pts = np.array(poly, dtype=float) * np.array([1.0, squash])
        parts.append(_rotate(pts, rotation_deg) * size)
    allpts = np.concatenate(parts)
    lo = allpts.min(axis=0)
    hi = allpts.max(axis=0)
    if canvas is None:
        offset = 1.0 - lo
        shape = (int(math.ceil(hi[1] - lo[1])) + 3, int(math.ceil(hi[0] - lo[0])) + 3)
    else:
        offset = np.array([canvas / 2.0, canvas / 2.0]) - (lo + hi) / 2.0
        shape = (canvas, canvas)

    mask = np.zeros(shape, dtype=bool)
    for pts in parts:
        rr, cc = draw_polygon(pts[:, 1] + offset[1], pts[:, 0] + offset[0], shape=shape)
        mask[rr, cc] = True
    if not mask.any():
        raise InvalidParam(f"silhouette {kind!r} at size {size} rasterises to nothing")
    if canvas is None:
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        mask = mask[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    return mask


def perturb_silhouette(
    mask: np.ndarray,
    rng: np.random.Generator,
    noise: float = 0.05,
    occlusion: float = 0.1,
) -> np.ndarray:
    """Flip boundary pixels with probability ``noise`` and cut away up to
    ``occlusion`` of the foreground with a random straight edge."""
    out = np.asarray(mask, dtype=bool).copy()
    if noise > 0:
        inner = out & ~ndimage.binary_erosion(out)
        outer = ndimage.binary_dilation(out) & ~out
        out[inner & (rng.random(out.shape) < noise)] = False
        out[outer & (rng.random(out.shape) < noise)] = True
    if occlusion > 0 and out.any():
        fraction = rng.uniform(0.0, occlusion)
        angle = rng.uniform(0.0, 2.0 * math.pi)
        ys, xs = np.nonzero(out)
        proj = xs * math.cos(angle) + ys * math.sin(angle)
        cut = np.quantile(proj, 1.0 - fraction)
        drop = proj > cut
        out[ys[drop], xs[drop]] = False
    return out
