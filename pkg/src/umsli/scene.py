"""LiDAR capture data model and the synthetic scene simulator.

A capture is a ``LidarCube`` of reflected intensity per (y, x, time bin);
summing over the time axis gives the 2-D ``IntensityImage`` every other
module works on. ``SyntheticScene`` stands in for field data: a smooth
backscatter gradient, Gaussian noise, and moving silhouettes, rendered either
as a full sparse frame or as an upsampled, less noisy dense region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import tomli_w

from umsli import shapes
from umsli.config import check_keys, load_toml
from umsli.errors import ConfigError, InvalidBox, InvalidParam, RegionOutOfBounds


@dataclass(frozen=True)
class Box:
    """Integer pixel rectangle; ``x``/``y`` is the top-left corner."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.w <= 0 or self.h <= 0:
            raise InvalidBox(f"box must have positive size, got {self.w}x{self.h}")

    @property
    def center(self) -> Tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def area(self) -> int:
        return self.w * self.h

    def inflate(self, margin: int) -> "Box":
        return Box(self.x - margin, self.y - margin, self.w + 2 * margin, self.h + 2 * margin)

    def clip(self, width: int, height: int) -> "Box":
        x0 = max(self.x, 0)
        y0 = max(self.y, 0)
        x1 = min(self.x + self.w, width)
        y1 = min(self.y + self.h, height)
        return Box(x0, y0, x1 - x0, y1 - y0)

    def within(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.x + self.w <= width and self.y + self.h <= height

    def contains(self, px: float, py: float) -> bool:
        return self.x <= px < self.x + self.w and self.y <= py < self.y + self.h

    @classmethod
    def around(cls, cx: float, cy: float, w: int, h: int) -> "Box":
        return cls(int(round(cx - w / 2.0)), int(round(cy - h / 2.0)), w, h)


def _frozen_array(values: np.ndarray, ndim: int, what: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise InvalidParam(f"{what} must be {ndim}-D, got shape {arr.shape}")
    if arr.size == 0:
        raise InvalidParam(f"{what} must not be empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidParam(f"{what} contains non-finite values")
    if np.any(arr < 0):
        raise InvalidParam(f"{what} contains negative intensities")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class IntensityImage:
    """Non-negative 2-D intensities, indexed ``pixels[y, x]``."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "pixels", _frozen_array(self.pixels, 2, "image"))

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])


@dataclass(frozen=True, eq=False)
class LidarCube:
    """Reflected intensity per (y, x, time bin)."""

    samples: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", _frozen_array(self.samples, 3, "cube"))

    @property
    def height(self) -> int:
        return int(self.samples.shape[0])

    @property
    def width(self) -> int:
        return int(self.samples.shape[1])

    @property
    def depth_bins(self) -> int:
        return int(self.samples.shape[2])


def project_time_axis(cube: LidarCube) -> IntensityImage:
    return IntensityImage(cube.samples.sum(axis=2))


@dataclass(frozen=True)
class Sparse:
    pass


@dataclass(frozen=True)
class Dense:
    region: Box


ScanMode = Union[Sparse, Dense]


@dataclass(frozen=True, eq=False)
class SceneObject:
    mask: np.ndarray
    position: Tuple[float, float]
    velocity: Tuple[float, float] = (0.0, 0.0)
    gain: float = 0.5
    shape: str = ""
    rotation: float = 0.0

    def __post_init__(self) -> None:
        mask = np.array(self.mask, dtype=bool)
        if mask.ndim != 2 or not mask.any():
            raise InvalidParam("object silhouette must be a non-empty 2-D mask")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_shape(
        cls,
        shape: str,
        position: Tuple[float, float],
        velocity: Tuple[float, float] = (0.0, 0.0),
        gain: float = 0.5,
        rotation: float = 0.0,
    ) -> "SceneObject":
        kind, size = shapes.parse_shape(shape)
        mask = shapes.render_silhouette(kind, size, rotation_deg=rotation)
        return cls(mask, position, velocity, gain, shape, rotation)

    def center_at(self, frame_index: int) -> Tuple[float, float]:
        return (
            self.position[0] + self.velocity[0] * frame_index,
            self.position[1] + self.velocity[1] * frame_index,
        )


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    """Backscatter ``gradient`` holds six coefficients of the quadratic
    ``c0 + c1 u + c2 v + c3 u^2 + c4 v^2 + c5 u v`` in normalised
    coordinates ``u = x / width``, ``v = y / height``."""

    width: int
    height: int
    gradient: Tuple[float, ...] = (0.0,) * 6
    noise_sigma: float = 0.0
    objects: Tuple[SceneObject, ...] = ()
    seed: int = 0
    dense_upsample: int = 4
    dense_noise_reduction: float = 2.0

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise InvalidParam("scene dimensions must be positive")
        if len(self.gradient) != 6:
            raise InvalidParam("gradient needs exactly 6 coefficients")
        if self.noise_sigma < 0:
            raise InvalidParam("noise_sigma must be >= 0")
        if self.dense_upsample < 1 or self.dense_noise_reduction <= 0:
            raise InvalidParam("dense_upsample must be >= 1 and dense_noise_reduction > 0")
        object.__setattr__(self, "gradient", tuple(float(c) for c in self.gradient))
        object.__setattr__(self, "objects", tuple(self.objects))
        for obj in self.objects:
            cx, cy = obj.position
            if not (0 <= cx < self.width and 0 <= cy < self.height):
                raise InvalidParam(f"object position {obj.position} outside the frame")


def _sample_grid(scene: SyntheticScene, mode: ScanMode) -> Tuple[np.ndarray, np.ndarray, float, List[int]]:
    if isinstance(mode, Dense):
        region = mode.region
        if not region.within(scene.width, scene.height):
            raise RegionOutOfBounds(
                f"dense region {region} outside {scene.width}x{scene.height} frame"
            )
        u = scene.dense_upsample
        xs = region.x + (np.arange(region.w * u) + 0.5) / u
        ys = region.y + (np.arange(region.h * u) + 0.5) / u
        sigma = scene.noise_sigma / scene.dense_noise_reduction
        tag = [1, region.x, region.y, region.w, region.h]
    else:
        xs = np.arange(scene.width) + 0.5
        ys = np.arange(scene.height) + 0.5
        sigma = scene.noise_sigma
        tag = [0]
    X, Y = np.meshgrid(xs, ys)
    return X, Y, sigma, tag


def _background(scene: SyntheticScene, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    c0, c1, c2, c3, c4, c5 = scene.gradient
    u = X / scene.width
    v = Y / scene.height
    return c0 + c1 * u + c2 * v + c3 * u * u + c4 * v * v + c5 * u * v


def _coverage(obj: SceneObject, X: np.ndarray, Y: np.ndarray, frame_index: int) -> np.ndarray:
    mh, mw = obj.mask.shape
    cx, cy = obj.center_at(frame_index)
    col = np.floor(X - (cx - mw / 2.0)).astype(np.int64)
    row = np.floor(Y - (cy - mh / 2.0)).astype(np.int64)
    valid = (col >= 0) & (col < mw) & (row >= 0) & (row < mh)
    inside = np.zeros(X.shape, dtype=bool)
    inside[valid] = obj.mask[row[valid], col[valid]]
    return inside


def _render_layers(
    scene: SyntheticScene, mode: ScanMode, frame_index: int
) -> Tuple[np.ndarray, np.ndarray]:
    X, Y, sigma, tag = _sample_grid(scene, mode)
    img = _background(scene, X, Y)
    objects = np.zeros(X.shape, dtype=bool)
    for obj in scene.objects:
        inside = _coverage(obj, X, Y, frame_index)
        img = img + obj.gain * inside
        objects |= inside
    if sigma > 0:
        rng = np.random.default_rng([scene.seed, frame_index, *tag])
        img = img + rng.normal(0.0, sigma, size=img.shape)
    return np.clip(img, 0.0, None), objects


def render_scene(scene: SyntheticScene, mode: ScanMode, frame_index: int) -> IntensityImage:
    img, _ = _render_layers(scene, mode, frame_index)
    return IntensityImage(img)


def ground_truth(scene: SyntheticScene, mode: ScanMode, frame_index: int) -> np.ndarray:
    """Boolean mask of pixels covered by any object."""
    X, Y, _, _ = _sample_grid(scene, mode)
    objects = np.zeros(X.shape, dtype=bool)
    for obj in scene.objects:
        objects |= _coverage(obj, X, Y, frame_index)
    return objects


def render_cube(
    scene: SyntheticScene, mode: ScanMode, frame_index: int, depth_bins: int = 32
) -> LidarCube:
    """Spread each pixel's intensity over a normalised return pulse.

    Objects return early (30% of the range window), backscatter late (70%),
    so the time projection reproduces ``render_scene``.
    """
    if depth_bins < 1:
        raise InvalidParam("depth_bins must be >= 1")
    img, objects = _render_layers(scene, mode, frame_index)
    t = np.arange(depth_bins, dtype=float)
    width = max(depth_bins / 20.0, 0.75)

    def pulse(center: float) -> np.ndarray:
        p = np.exp(-0.5 * ((t - center) / width) ** 2)
        return p / p.sum()

    early = pulse(0.3 * (depth_bins - 1))
    late = pulse(0.7 * (depth_bins - 1))
    profile = np.where(objects[..., None], early, late)
    return LidarCube(img[..., None] * profile)


# -- scene description files -------------------------------------------------

SCENE_KEYS = {
    "width": None,
    "height": None,
    "gradient": None,
    "noise_sigma": None,
    "seed": None,
    "dense_upsample": None,
    "dense_noise_reduction": None,
    "object_shapes": None,
    "object_rotations": None,
    "object_positions": None,
    "object_velocities": None,
    "object_gains": None,
}


def scene_from_mapping(data: dict, source: str = "scene") -> SyntheticScene:
    check_keys(data, SCENE_KEYS, source)
    try:
        shapes_ = list(data.get("object_shapes", []))
        n = len(shapes_)
        positions = data.get("object_positions", [])
        velocities = data.get("object_velocities", [[0.0, 0.0]] * n)
        gains = data.get("object_gains", [0.5] * n)
        rotations = data.get("object_rotations", [0.0] * n)
        if not (len(positions) == len(velocities) == len(gains) == len(rotations) == n):
            raise ConfigError(f"{source}: object_* lists must have equal length")
        objects = tuple(
            SceneObject.from_shape(
                str(shape),
                (float(pos[0]), float(pos[1])),
                (float(vel[0]), float(vel[1])),
                float(gain),
                float(rot),
            )
            for shape, pos, vel, gain, rot in zip(shapes_, positions, velocities, gains, rotations)
        )
        return SyntheticScene(
            width=int(data["width"]),
            height=int(data["height"]),
            gradient=tuple(data.get("gradient", (0.0,) * 6)),
            noise_sigma=float(data.get("noise_sigma", 0.0)),
            objects=objects,
            seed=int(data.get("seed", 0)),
            dense_upsample=int(data.get("dense_upsample", 4)),
            dense_noise_reduction=float(data.get("dense_noise_reduction", 2.0)),
        )
    except KeyError as exc:
        raise ConfigError(f"{source}: missing required key {exc.args[0]!r}") from exc
    except (TypeError, IndexError) as exc:
        raise ConfigError(f"{source}: malformed value ({exc})") from exc


def load_scene(path: Path) -> SyntheticScene:
    return scene_from_mapping(load_toml(path), str(path))


def scene_to_mapping(scene: SyntheticScene) -> dict:
    if any(not obj.shape for obj in scene.objects):
        raise InvalidParam("only objects built from a shape spec can be saved")
    return {
        "width": scene.width,
        "height": scene.height,
        "gradient": list(scene.gradient),
        "noise_sigma": scene.noise_sigma,
        "seed": scene.seed,
        "dense_upsample": scene.dense_upsample,
        "dense_noise_reduction": scene.dense_noise_reduction,
        "object_shapes": [obj.shape for obj in scene.objects],
        "object_rotations": [obj.rotation for obj in scene.objects],
        "object_positions": [list(obj.position) for obj in scene.objects],
        "object_velocities": [list(obj.velocity) for obj in scene.objects],
        "object_gains": [obj.gain for obj in scene.objects],
    }


def save_scene(path: Path, scene: SyntheticScene) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        tomli_w.dump(scene_to_mapping(scene), fh)


# -- random scenes and corpora -----------------------------------------------

SCENE_KINDS: Tuple[str, ...] = ("turtle", "amberjack", "barracuda", "disk", "ellipse")


def random_scene(
    rng: np.random.Generator,
    width: int = 128,
    height: int = 128,
    n_objects: Tuple[int, int] = (1, 3),
    sizes: Tuple[float, float] = (10.0, 22.0),
    kinds: Sequence[str] = SCENE_KINDS,
    noise_sigma: float = 0.02,
    max_speed: float = 0.0,
    seed: int | None = None,
    dense_noise_reduction: float = 2.0,
) -> SyntheticScene:
    """A scene with a random backscatter gradient and non-overlapping objects."""
    gradient = (
        rng.uniform(0.05, 0.2),
        rng.uniform(-0.1, 0.1),
        rng.uniform(0.0, 0.3),
        rng.uniform(-0.1, 0.1),
        rng.uniform(0.0, 0.2),
        rng.uniform(-0.1, 0.1),
    )
    count = int(rng.integers(n_objects[0], n_objects[1] + 1))
    objects: List[SceneObject] = []
    margin = sizes[1]
    for _ in range(count):
        size = float(rng.uniform(*sizes))
        kind = str(rng.choice(list(kinds)))
        for _attempt in range(20):
            cx = float(rng.uniform(margin, width - margin))
            cy = float(rng.uniform(margin, height - margin))
            if all(math.hypot(cx - o.position[0], cy - o.position[1]) > margin * 1.5 for o in objects):
                break
        angle = float(rng.uniform(0.0, 360.0))
        speed = float(rng.uniform(0.0, max_speed)) if max_speed > 0 else 0.0
        heading = math.radians(angle)
        objects.append(
            SceneObject.from_shape(
                f"{kind}:{size:.1f}",
                (round(cx, 2), round(cy, 2)),
                (round(speed * math.cos(heading), 3), round(speed * math.sin(heading), 3)),
                round(float(rng.uniform(0.3, 0.8)), 3),
                round(angle, 1),
            )
        )
    return SyntheticScene(
        width=width,
        height=height,
        gradient=tuple(round(c, 4) for c in gradient),
        noise_sigma=noise_sigma,
        objects=tuple(objects),
        seed=int(rng.integers(0, 2**31 - 1)) if seed is None else seed,
        dense_noise_reduction=dense_noise_reduction,
    )


@dataclass
class CorpusPaths:
    frames: List[Path] = field(default_factory=list)
    ground_truth: List[Path] = field(default_factory=list)
    scenes: List[Path] = field(default_factory=list)


def generate_corpus(
    out_dir: Path,
    n: int,
    seed: int,
    width: int = 128,
    height: int = 128,
    bit_depth: int = 16,
    **scene_kwargs,
) -> CorpusPaths:
    """Write ``frames/``, ``gt/`` and ``scenes/`` for ``n`` random scenes."""
    from umsli.image_io import save_image, save_mask

    if n < 1:
        raise InvalidParam("corpus needs at least one scene")
    rng = np.random.default_rng(seed)
    paths = CorpusPaths()
    for idx in range(n):
        scene = random_scene(rng, width, height, **scene_kwargs)
        stem = f"scene_{idx:03d}"
        frame = out_dir / "frames" / f"{stem}.png"
        gt = out_dir / "gt" / f"{stem}.png"
        desc = out_dir / "scenes" / f"{stem}.toml"
        save_image(frame, render_scene(scene, Sparse(), 0), bit_depth=bit_depth)
        save_mask(gt, ground_truth(scene, Sparse(), 0))
        save_scene(desc, scene)
        paths.frames.append(frame)
        paths.ground_truth.append(gt)
        paths.scenes.append(desc)
    return paths
