from pathlib import Path
from typing import Callable

import numpy as np
import pytest

from umsli import shapes
from umsli.scene import SceneObject, SyntheticScene


@pytest.fixture
def turtle_mask() -> np.ndarray:
    return shapes.render_silhouette("turtle", 40.0, canvas=64)


@pytest.fixture
def gradient_scene() -> Callable[..., SyntheticScene]:
    """Scene factory: smooth backscatter plus optional silhouettes.

    Usage:
        def test_contrast(gradient_scene):
            scene = gradient_scene(objects=[("turtle:18", (40, 40))])
    """

    def build(
        width: int = 96,
        height: int = 96,
        objects=(),
        noise_sigma: float = 0.0,
        gradient=(0.2, 0.1, 0.3, 0.0, 0.0, 0.0),
        velocity=(0.0, 0.0),
        gain: float = 0.5,
        seed: int = 0,
    ) -> SyntheticScene:
        objs = tuple(SceneObject.from_shape(spec, pos, velocity, gain) for spec, pos in objects)
        return SyntheticScene(width, height, tuple(gradient), noise_sigma, objs, seed)

    return build


@pytest.fixture
def write_pgm(tmp_path: Path) -> Callable[..., Path]:
    """Write raw P5 bytes: ``write_pgm(b"...", name="x.pgm")``."""

    def writer(payload: bytes, name: str = "image.pgm") -> Path:
        target = tmp_path / name
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(payload)
        return target

    return writer
