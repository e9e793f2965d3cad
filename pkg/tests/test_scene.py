import tempfile
import unittest
from pathlib import Path

import numpy as np
import pytest

from umsli import scene
from umsli.errors import ConfigError, FormatError, InvalidBox, InvalidParam, RegionOutOfBounds
from umsli.image_io import list_images, load_image, load_mask, save_array, save_image
from umsli.scene import (
    Box,
    Dense,
    IntensityImage,
    LidarCube,
    SceneObject,
    Sparse,
    SyntheticScene,
    project_time_axis,
    render_cube,
    render_scene,
)


def _centroid(mask: np.ndarray) -> tuple:
    ys, xs = np.nonzero(mask)
    return float(xs.mean()), float(ys.mean())


class BoxTests(unittest.TestCase):
    def test_rejects_non_positive_size(self) -> None:
        with self.assertRaises(InvalidBox):
            Box(0, 0, 0, 3)

    def test_inflate_and_clip(self) -> None:
        box = Box(2, 3, 4, 5).inflate(3)
        self.assertEqual(box, Box(-1, 0, 10, 11))
        self.assertEqual(box.clip(8, 8), Box(0, 0, 8, 8))

    def test_clip_outside_frame_raises(self) -> None:
        with self.assertRaises(InvalidBox):
            Box(20, 20, 4, 4).clip(10, 10)

    def test_around_keeps_center(self) -> None:
        box = Box.around(30.5, 12.0, 5, 4)
        self.assertEqual(box.center, (30.5, 12.0))


class ProjectTimeAxisTests(unittest.TestCase):
    def test_zero_cube(self) -> None:
        img = project_time_axis(LidarCube(np.zeros((3, 4, 5))))
        self.assertEqual(img.pixels.shape, (3, 4))
        self.assertFalse(img.pixels.any())

    def test_single_impulse(self) -> None:
        samples = np.zeros((4, 4, 8))
        samples[1, 2, 5] = 0.75
        img = project_time_axis(LidarCube(samples))
        expected = np.zeros((4, 4))
        expected[1, 2] = 0.75
        np.testing.assert_array_equal(img.pixels, expected)

    def test_matches_scalar_loop(self) -> None:
        samples = np.random.default_rng(3).random((4, 4, 8))
        img = project_time_axis(LidarCube(samples))
        for y in range(4):
            for x in range(4):
                total = 0.0
                for t in range(8):
                    total += samples[y, x, t]
                self.assertAlmostEqual(img.pixels[y, x], total, places=12)

    def test_linear(self) -> None:
        rng = np.random.default_rng(4)
        c1, c2 = rng.random((3, 5, 6)), rng.random((3, 5, 6))
        a, b = 0.3, 2.5
        combined = project_time_axis(LidarCube(a * c1 + b * c2)).pixels
        separate = a * project_time_axis(LidarCube(c1)).pixels + b * project_time_axis(LidarCube(c2)).pixels
        np.testing.assert_allclose(combined, separate, atol=1e-12)

    def test_negative_samples_rejected(self) -> None:
        with self.assertRaises(InvalidParam):
            LidarCube(-np.ones((2, 2, 2)))

    def test_images_are_read_only(self) -> None:
        img = IntensityImage(np.ones((2, 2)))
        with self.assertRaises(ValueError):
            img.pixels[0, 0] = 3.0


class RenderSceneTests(unittest.TestCase):
    def test_empty_scene_is_zero(self) -> None:
        img = render_scene(SyntheticScene(40, 30), Sparse(), 0)
        self.assertEqual(img.pixels.shape, (30, 40))
        self.assertFalse(img.pixels.any())

    def test_object_moves_with_velocity(self) -> None:
        obj = SceneObject.from_shape("disk:10", (30.0, 40.0), (2.0, 0.0), 0.5)
        sc = SyntheticScene(96, 80, objects=(obj,))
        x0, y0 = _centroid(scene.ground_truth(sc, Sparse(), 0))
        x3, y3 = _centroid(scene.ground_truth(sc, Sparse(), 3))
        self.assertAlmostEqual(x3 - x0, 6.0, places=9)
        self.assertAlmostEqual(y3 - y0, 0.0, places=9)

    def test_dense_region_dimensions(self) -> None:
        sc = SyntheticScene(64, 64, noise_sigma=0.05)
        img = render_scene(sc, Dense(Box(10, 10, 32, 32)), 0)
        self.assertEqual(img.pixels.shape, (128, 128))

    def test_dense_region_out_of_bounds(self) -> None:
        with self.assertRaises(RegionOutOfBounds):
            render_scene(SyntheticScene(64, 64), Dense(Box(40, 40, 32, 32)), 0)

    def test_deterministic_given_seed(self) -> None:
        obj = SceneObject.from_shape("turtle:18", (32.0, 32.0))
        sc = SyntheticScene(64, 64, (0.2, 0.1, 0.1, 0.0, 0.0, 0.0), 0.05, (obj,), seed=11)
        a = render_scene(sc, Sparse(), 2).pixels
        b = render_scene(sc, Sparse(), 2).pixels
        np.testing.assert_array_equal(a, b)
        other = SyntheticScene(64, 64, sc.gradient, 0.05, (obj,), seed=12)
        self.assertFalse(np.array_equal(a, render_scene(other, Sparse(), 2).pixels))

    def test_position_outside_frame_rejected(self) -> None:
        obj = SceneObject.from_shape("disk:6", (70.0, 10.0))
        with self.assertRaises(InvalidParam):
            SyntheticScene(64, 64, objects=(obj,))

    def test_cube_projects_to_rendered_frame(self) -> None:
        obj = SceneObject.from_shape("amberjack:20", (30.0, 30.0))
        sc = SyntheticScene(64, 48, (0.1, 0.2, 0.0, 0.0, 0.1, 0.0), 0.02, (obj,), seed=5)
        cube = render_cube(sc, Sparse(), 1, depth_bins=32)
        self.assertEqual(cube.depth_bins, 32)
        expected = render_scene(sc, Sparse(), 1).pixels
        np.testing.assert_allclose(project_time_axis(cube).pixels, expected, atol=1e-12)


class SceneFileTests(unittest.TestCase):
    def test_save_and_load(self) -> None:
        obj = SceneObject.from_shape("barracuda:24", (40.0, 20.0), (1.5, -0.5), 0.6, 15.0)
        sc = SyntheticScene(80, 60, (0.1, 0.0, 0.2, 0.0, 0.0, 0.05), 0.03, (obj,), seed=9)
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "scene.toml"
            scene.save_scene(path, sc)
            loaded = scene.load_scene(path)
        expected = render_scene(sc, Sparse(), 4).pixels
        np.testing.assert_array_equal(render_scene(loaded, Sparse(), 4).pixels, expected)

    def test_unknown_key_rejected(self) -> None:
        with self.assertRaises(ConfigError):
            scene.scene_from_mapping({"width": 10, "height": 10, "colour": "blue"})

    def test_missing_key_rejected(self) -> None:
        with self.assertRaises(ConfigError):
            scene.scene_from_mapping({"width": 10})

    def test_mismatched_object_lists(self) -> None:
        with self.assertRaises(ConfigError):
            scene.scene_from_mapping(
                {"width": 32, "height": 32, "object_shapes": ["disk:5"], "object_positions": []}
            )

    def test_generate_corpus_layout(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            paths = scene.generate_corpus(Path(td), 3, seed=2, width=64, height=64)
            names = [p.name for p in paths.frames]
            self.assertEqual(names, ["scene_000.png", "scene_001.png", "scene_002.png"])
            for gt in paths.ground_truth:
                self.assertTrue(load_mask(gt).any())
            self.assertEqual(len(list_images(Path(td) / "frames")), 3)


class ImageIoTests(unittest.TestCase):
    def test_pgm_scaling(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "a.pgm"
            path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
            img = load_image(path)
        np.testing.assert_allclose(img.pixels.ravel(), [0.0, 1.0, 128 / 255, 64 / 255])

    def test_pgm_header_comments(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "c.pgm"
            path.write_bytes(b"P5\n# sensor 3\n1 1\n# full scale\n100\n" + bytes([50]))
            self.assertAlmostEqual(load_image(path).pixels[0, 0], 0.5)

    def test_truncated_pgm(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "t.pgm"
            payload = b"P5\n4 4\n255\n" + bytes(10)
            path.write_bytes(payload)
            with self.assertRaises(FormatError) as ctx:
                load_image(path)
        self.assertEqual(ctx.exception.offset, len(payload))

    def test_sample_above_maxval(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "m.pgm"
            path.write_bytes(b"P5\n2 1\n100\n" + bytes([10, 200]))
            with self.assertRaises(FormatError) as ctx:
                load_image(path)
        self.assertEqual(ctx.exception.offset, 12)

    def test_not_an_image(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "x.png"
            path.write_bytes(b"hello world")
            with self.assertRaises(FormatError):
                load_image(path)

    def test_sixteen_bit_png_saturates(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "full.png"
            save_array(path, np.ones((3, 5)), bit_depth=16)
            img = load_image(path)
        np.testing.assert_array_equal(img.pixels, np.ones((3, 5)))

    def test_eight_bit_round_trip_is_exact(self) -> None:
        values = np.random.default_rng(0).integers(0, 256, size=(6, 7)) / 255.0
        for suffix in (".png", ".pgm"):
            with tempfile.TemporaryDirectory() as td:
                path = Path(td) / f"r{suffix}"
                save_image(path, IntensityImage(values), bit_depth=8)
                first = load_image(path).pixels
                save_array(path, first, bit_depth=8)
                np.testing.assert_array_equal(load_image(path).pixels, first)
                np.testing.assert_array_equal(first, values)

    def test_unsupported_suffix(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            with self.assertRaises(InvalidParam):
                save_array(Path(td) / "a.tif", np.zeros((2, 2)))


def test_sixteen_bit_pgm_fixture(write_pgm) -> None:
    path = write_pgm(b"P5 1 2 65535\n" + (65535).to_bytes(2, "big") + (0).to_bytes(2, "big"))
    np.testing.assert_array_equal(load_image(path).pixels, [[1.0], [0.0]])


def test_gradient_scene_fixture_renders(gradient_scene) -> None:
    sc = gradient_scene(objects=[("turtle:18", (48.0, 48.0))])
    gt = scene.ground_truth(sc, Sparse(), 0)
    assert gt.any()  # nosec B101
    assert render_scene(sc, Sparse(), 0).pixels[gt].mean() > 0.5  # nosec B101


def test_random_scene_is_reproducible() -> None:
    a = scene.random_scene(np.random.default_rng(5))
    b = scene.random_scene(np.random.default_rng(5))
    assert scene.scene_to_mapping(a) == scene.scene_to_mapping(b)  # nosec B101
    with pytest.raises(InvalidParam):
        scene.generate_corpus(Path("unused"), 0, seed=1)
