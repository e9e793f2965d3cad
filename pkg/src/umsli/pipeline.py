"""Sparse-to-dense mode switching.

The scanner sweeps sparse frames until a salient object persists for
``confirm_frames`` frames, predicts where it will be once the dense scan can
start (``scan_latency`` frames later), scans that region densely, segments
it, classifies the silhouette and goes back to sparse scanning:

    SparseScan -> Predict -> DenseScan -> Classify -> SparseScan
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from umsli import saliency, tracking
from umsli.classify import ClassScore, TemplateLibrary, classify, synthetic_library
from umsli.config import DEFAULTS
from umsli.errors import ConfigError, EmptyCorpus, EmptyMask, InvalidParam, UmsliError
from umsli.image_io import list_images, load_image, save_array
from umsli.preprocess import StructuringElement
from umsli.scene import (
    Box,
    Dense,
    IntensityImage,
    ScanMode,
    Sparse,
    SyntheticScene,
    project_time_axis,
    render_cube,
    render_scene,
)

# -- configuration -----------------------------------------------------------


@dataclass
class PipelineConfig:
    se: str = DEFAULTS["se"]
    bank: str = DEFAULTS["bank"]
    alpha: float = DEFAULTS["alpha"]
    min_area: int = DEFAULTS["min_area"]
    detection_threshold: float = DEFAULTS["detection_threshold"]
    confirm_frames: int = DEFAULTS["confirm_frames"]
    scan_latency: int = DEFAULTS["scan_latency"]
    dense_margin: int = DEFAULTS["dense_margin"]
    dense_alpha: float = DEFAULTS["dense_alpha"]
    frame_interval_s: float = DEFAULTS["frame_interval_s"]
    dense_upsample: int = DEFAULTS["dense_upsample"]
    depth_bins: int = DEFAULTS["depth_bins"]
    library: str = DEFAULTS["library"]
    n_points: int = DEFAULTS["n_points"]
    sigma_schedule: List[float] = field(default_factory=lambda: list(DEFAULTS["sigma_schedule"]))
    max_iter: int = DEFAULTS["max_iter"]
    classify_mode: str = DEFAULTS["classify_mode"]
    process_noise: float = DEFAULTS["process_noise"]
    measurement_noise: float = DEFAULTS["measurement_noise"]
    initial_position_var: float = DEFAULTS["initial_position_var"]
    initial_velocity_var: float = DEFAULTS["initial_velocity_var"]
    seed: int = DEFAULTS["seed"]

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "PipelineConfig":
        """Take the pipeline keys from a full config mapping; others are ignored."""
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})

    def validate(self) -> "PipelineConfig":
        def need(ok: bool, key: str, rule: str) -> None:
            if not ok:
                raise ConfigError(f"invalid {key}={getattr(self, key)!r}: {rule}")

        if self.se:
            try:
                StructuringElement.parse(self.se)
            except InvalidParam as exc:
                raise ConfigError(f"invalid se={self.se!r}: {exc}") from exc
        try:
            saliency.kernel_bank(saliency.parse_bank(self.bank))
        except InvalidParam as exc:
            raise ConfigError(f"invalid bank={self.bank!r}: {exc}") from exc
        need(self.alpha > 0, "alpha", "must be > 0")
        need(self.min_area >= 1, "min_area", "must be >= 1")
        need(self.detection_threshold >= 0, "detection_threshold", "must be >= 0")
        need(self.confirm_frames >= 1, "confirm_frames", "must be >= 1")
        need(self.scan_latency >= 0, "scan_latency", "must be >= 0")
        need(self.dense_margin >= 0, "dense_margin", "must be >= 0")
        need(self.dense_alpha > 0, "dense_alpha", "must be > 0")
        need(self.frame_interval_s > 0, "frame_interval_s", "must be > 0")
        need(self.dense_upsample >= 1, "dense_upsample", "must be >= 1")
        need(self.depth_bins >= 1, "depth_bins", "must be >= 1")
        need(self.n_points >= 8, "n_points", "must be >= 8")
        need(
            bool(self.sigma_schedule) and all(s > 0 for s in self.sigma_schedule),
            "sigma_schedule",
            "must be a non-empty list of positive bandwidths",
        )
        need(self.max_iter >= 1, "max_iter", "must be >= 1")
        modes = ("per_template", "aggregate")
        need(self.classify_mode in modes, "classify_mode", "per_template or aggregate")
        try:
            self.kalman()
        except InvalidParam as exc:
            raise ConfigError(f"invalid tracking noise: {exc}") from exc
        return self

    def kalman(self) -> tracking.KalmanConfig:
        return tracking.KalmanConfig(
            self.process_noise,
            self.measurement_noise,
            self.initial_position_var,
            self.initial_velocity_var,
        )


# -- frame sources -------------------------------------------------------------


class FrameSource(Protocol):
    width: int
    height: int

    def __len__(self) -> int: ...

    def sparse(self, index: int) -> IntensityImage: ...

    def dense(self, region: Box, index: int) -> IntensityImage: ...


class SceneSource:
    """Simulated sensor: with ``depth_bins`` set, every frame is rendered as a
    time-resolved cube and projected onto the image plane."""

    def __init__(self, scene: SyntheticScene, n_frames: int, depth_bins: Optional[int] = None) -> None:
        if n_frames < 1:
            raise InvalidParam("a scene source needs at least one frame")
        if depth_bins is not None and depth_bins < 1:
            raise InvalidParam("depth_bins must be >= 1")
        self.scene = scene
        self.n_frames = n_frames
        self.depth_bins = depth_bins
        self.width = scene.width
        self.height = scene.height

    def __len__(self) -> int:
        return self.n_frames

    def _render(self, mode: ScanMode, index: int) -> IntensityImage:
        if self.depth_bins is None:
            return render_scene(self.scene, mode, index)
        return project_time_axis(render_cube(self.scene, mode, index, self.depth_bins))

    def sparse(self, index: int) -> IntensityImage:
        return self._render(Sparse(), index)

    def dense(self, region: Box, index: int) -> IntensityImage:
        return self._render(Dense(region), index)


class DirectorySource:
    """Stored frames; a dense request crops the stored frame and upsamples it."""

    def __init__(self, paths: Sequence[Path], upsample: int = 4) -> None:
        if not paths:
            raise EmptyCorpus("no input frames")
        self.paths = list(paths)
        self.upsample = upsample
        first = load_image(self.paths[0])
        self.width, self.height = first.width, first.height

    @classmethod
    def from_dir(cls, directory: Path, upsample: int = 4) -> "DirectorySource":
        return cls(list_images(directory), upsample)

    def __len__(self) -> int:
        return len(self.paths)

    def sparse(self, index: int) -> IntensityImage:
        return load_image(self.paths[index])

    def dense(self, region: Box, index: int) -> IntensityImage:
        frame = self.sparse(min(index, len(self.paths) - 1)).pixels
        crop = frame[region.y : region.y + region.h, region.x : region.x + region.w]
        u = self.upsample
        return IntensityImage(np.repeat(np.repeat(crop, u, axis=0), u, axis=1))


# -- state machine -------------------------------------------------------------


@dataclass(frozen=True)
class SparseScan:
    name = "SparseScan"


@dataclass(frozen=True)
class Predict:
    track: tracking.TrackState
    name = "Predict"


@dataclass(frozen=True)
class DenseScan:
    region: Box
    name = "DenseScan"


@dataclass(frozen=True)
class Classify:
    mask: np.ndarray
    region: Box
    frame: int
    name = "Classify"


PipelineState = Union[SparseScan, Predict, DenseScan, Classify]

ALLOWED = {
    ("SparseScan", "SparseScan"),
    ("SparseScan", "Predict"),
    ("Predict", "DenseScan"),
    ("DenseScan", "Classify"),
    ("Classify", "SparseScan"),
}


@dataclass
class Event:
    frame: int
    kind: str  # "frame", "transition", "dense", "classification", "error"
    data: Dict[str, Any] = field(default_factory=dict)


def segment_dense(pixels: np.ndarray, alpha: float) -> np.ndarray:
    """Largest 8-connected component above ``alpha`` times the mean contrast
    over the frame minimum."""
    lifted = pixels - pixels.min()
    mean = float(lifted.mean())
    if mean <= 0:
        raise EmptyMask("dense frame is flat")
    mask = (lifted >= alpha * mean) & (lifted > 0)
    labels, count = ndimage.label(mask, structure=saliency.EIGHT_CONNECTED)
    if count == 0:
        raise EmptyMask("nothing segmented in the dense frame")
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return labels == int(np.argmax(sizes))


class Pipeline:
    def __init__(
        self,
        config: PipelineConfig,
        source: FrameSource,
        library: Optional[TemplateLibrary] = None,
    ) -> None:
        self.config = config.validate()
        self.source = source
        self._library = library
        self.bank = saliency.kernel_bank(saliency.parse_bank(config.bank))
        self.se = (
            StructuringElement.parse(config.se)
            if config.se
            else StructuringElement.default_for(source.width, source.height)
        )
        self.frame = 0
        self._pending: Optional[Tuple[Tuple[float, float], int]] = None

    @property
    def library(self) -> TemplateLibrary:
        if self._library is None:
            if self.config.library:
                self._library = TemplateLibrary.load(Path(self.config.library), self.config.n_points)
            else:
                self._library = synthetic_library(
                    per_class=8, seed=self.config.seed, n_points=self.config.n_points
                )
        return self._library

    def _transition(self, old: PipelineState, new: PipelineState, **data: Any) -> Event:
        if (old.name, new.name) not in ALLOWED:
            raise InvalidParam(f"illegal transition {old.name} -> {new.name}")
        time_s = round(self.frame * self.config.frame_interval_s, 6)
        payload = {"from": old.name, "to": new.name, "time_s": time_s}
        payload.update(data)
        return Event(self.frame, "transition", payload)

    def step(self, state: PipelineState) -> Tuple[PipelineState, List[Event]]:
        if isinstance(state, SparseScan):
            return self._sparse(state)
        if isinstance(state, Predict):
            return self._predict(state)
        if isinstance(state, DenseScan):
            return self._dense(state)
        return self._classify(state)

    def _sparse(self, state: SparseScan) -> Tuple[PipelineState, List[Event]]:
        index = self.frame
        image = self.source.sparse(index)
        result = saliency.detect(image, self.bank, self.config.alpha, self.config.min_area, self.se)
        self.frame += 1
        events = [Event(index, "frame", {"result": result})]
        top = result.boxes[0] if result.boxes else None
        triggered = (
            top is not None
            and top.score * result.scale >= self.config.detection_threshold
            and top.area >= self.config.min_area
        )
        if not triggered or top is None:
            self._pending = None
            return state, events
        box = top.box()
        center = box.center
        velocity = (0.0, 0.0)
        count = 1
        if self._pending is not None:
            (px, py), seen = self._pending
            velocity = (center[0] - px, center[1] - py)
            count = seen + 1
        if count < self.config.confirm_frames:
            self._pending = (center, count)
            return state, events
        self._pending = None
        track = tracking.init_track(box, index, self.config.kalman(), velocity)
        new = Predict(track)
        events.append(
            self._transition(
                state,
                new,
                box=[box.x, box.y, box.w, box.h],
                score=round(top.score * result.scale, 6),
                velocity=[round(v, 6) for v in velocity],
            )
        )
        return new, events

    def _predict(self, state: Predict) -> Tuple[PipelineState, List[Event]]:
        latency = self.config.scan_latency
        track = tracking.predict(state.track, latency)
        region = track.box().inflate(self.config.dense_margin).clip(self.source.width, self.source.height)
        # the dense scan samples the instant the track was predicted to
        self.frame = track.frame
        new = DenseScan(region)
        cx, cy = track.center
        return new, [
            self._transition(
                state,
                new,
                predicted_center=[round(cx, 6), round(cy, 6)],
                region=[region.x, region.y, region.w, region.h],
            )
        ]

    def _dense(self, state: DenseScan) -> Tuple[PipelineState, List[Event]]:
        index = self.frame
        image = self.source.dense(state.region, index)
        self.frame += 1
        mask = segment_dense(image.pixels, self.config.dense_alpha)
        new = Classify(mask, state.region, index)
        return new, [
            Event(index, "dense", {"image": image, "region": state.region}),
            self._transition(state, new, mask_area=int(mask.sum())),
        ]

    def _classify(self, state: Classify) -> Tuple[PipelineState, List[Event]]:
        score = classify(
            state.mask,
            self.library,
            self.config.sigma_schedule,
            self.config.classify_mode,  # type: ignore[arg-type]
            max_iter=self.config.max_iter,
        )
        new = SparseScan()
        return new, [
            Event(state.frame, "classification", {"score": score, "region": state.region}),
            self._transition(state, new, predicted=score.predicted, tie=score.tie),
        ]

    def run(self) -> "EpisodeLog":
        """Step until the source runs out. A module error ends the episode;
        the error event records the state it was raised in."""
        log = EpisodeLog()
        state: PipelineState = SparseScan()
        while self.frame < len(self.source) or not isinstance(state, SparseScan):
            if isinstance(state, DenseScan) and self.frame >= len(self.source):
                break
            at = self.frame
            try:
                state, events = self.step(state)
            except UmsliError as exc:
                log.events.append(Event(at, "error", {"state": state.name, "message": str(exc)}))
                log.errored_frames.add(at)
                log.aborted_in = state.name
                break
            log.events.extend(events)
        return log


@dataclass
class EpisodeLog:
    events: List[Event] = field(default_factory=list)
    errored_frames: set = field(default_factory=set)
    aborted_in: Optional[str] = None

    def of(self, kind: str) -> List[Event]:
        return [e for e in self.events if e.kind == kind]

    def path(self) -> List[str]:
        """State sequence implied by the transition log."""
        out = ["SparseScan"]
        for e in self.of("transition"):
            out.append(e.data["to"])
        return out


# -- batch runner --------------------------------------------------------------


@dataclass
class BatchResult:
    returncode: int
    message: str
    artifacts: List[str] = field(default_factory=list)
    log: Optional[EpisodeLog] = None


def _config_for_manifest(config: PipelineConfig) -> Dict[str, Any]:
    return {k: v for k, v in sorted(asdict(config).items())}


def run_batch(
    config: PipelineConfig,
    out_dir: Path,
    scene: Optional[SyntheticScene] = None,
    input_dir: Optional[Path] = None,
    n_frames: int = 20,
    library: Optional[TemplateLibrary] = None,
) -> BatchResult:
    """Run one episode and write maps, boxes, transitions, classifications,
    dense frames and ``manifest.json`` under ``out_dir``."""
    try:
        config.validate()
        if scene is not None:
            source: FrameSource = SceneSource(scene, n_frames, config.depth_bins)
        elif input_dir is not None:
            source = DirectorySource.from_dir(Path(input_dir), config.dense_upsample)
        else:
            raise InvalidParam("run_batch needs a scene or an input directory")
    except EmptyCorpus as exc:
        return BatchResult(2, f"empty input: {exc}")
    except UmsliError as exc:
        return BatchResult(exc.returncode, str(exc))

    log = Pipeline(config, source, library).run()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts: List[str] = []

    box_rows = []
    for event in log.of("frame"):
        result: saliency.SaliencyResult = event.data["result"]
        rel = f"maps/frame_{event.frame:04d}.png"
        save_array(out_dir / rel, result.map, bit_depth=8)
        artifacts.append(rel)
        for b in result.boxes:
            box_rows.append([event.frame, b.x, b.y, b.w, b.h, f"{b.score:.6f}", b.area])
    with (out_dir / "boxes.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "x", "y", "w", "h", "score", "area"])
        writer.writerows(box_rows)
    artifacts.append("boxes.csv")

    transitions = [e for e in log.events if e.kind in ("transition", "error")]
    if transitions:
        with (out_dir / "transitions.jsonl").open("w", encoding="utf-8") as fh:
            for e in transitions:
                entry = {"frame": e.frame, "kind": e.kind, **e.data}
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
        artifacts.append("transitions.jsonl")

    for event in log.of("dense"):
        rel = f"dense/frame_{event.frame:04d}.png"
        save_array(out_dir / rel, event.data["image"].pixels, bit_depth=8)
        artifacts.append(rel)

    scores = log.of("classification")
    if scores:
        with (out_dir / "classification.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["frame", "region_x", "region_y", "region_w", "region_h", "class", "score", "tie"]
            )
            for e in scores:
                s: ClassScore = e.data["score"]
                r: Box = e.data["region"]
                writer.writerow(
                    [
                        e.frame, r.x, r.y, r.w, r.h, s.predicted,
                        f"{s.combined[s.predicted_index]:.6f}", int(s.tie),
                    ]
                )
        artifacts.append("classification.csv")

    errors = [e.data["message"] for e in log.of("error")]
    manifest = {
        "artifacts": sorted(artifacts),
        "config": _config_for_manifest(config),
        "errors": errors,
        "aborted_in": log.aborted_in,
        "frames": len(source),
        "seed": config.seed,
        "source": "scene" if scene is not None else "directory",
    }
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    (out_dir / "manifest.json").write_text(text, encoding="utf-8")
    artifacts.append("manifest.json")

    code = 1 if log.errored_frames else 0
    message = f"{len(log.of('frame'))} sparse frames, {len(scores)} classifications, {len(errors)} errors"
    return BatchResult(code, message, sorted(artifacts), log)
