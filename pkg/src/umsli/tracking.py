"""Constant-velocity Kalman track between a sparse detection and the dense scan.

State is ``(cx, cy, vx, vy)`` in pixels and pixels per frame; only the
centre is measured. Predict and update go through ``filterpy``'s functional
Kalman steps and re-symmetrise the covariance afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from filterpy.kalman import predict as kf_predict
from filterpy.kalman import update as kf_update

from umsli.errors import InvalidBox, InvalidParam
from umsli.scene import Box

TRANSITION = np.array(
    [
        [1.0, 0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 1.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
)
MEASUREMENT = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])


@dataclass(frozen=True)
class KalmanConfig:
    process_noise: float = 0.1  # px^2 per frame, every state component
    measurement_noise: float = 1.0  # px^2
    initial_position_var: float = 4.0
    initial_velocity_var: float = 25.0

    def __post_init__(self) -> None:
        if self.process_noise < 0 or self.measurement_noise < 0:
            raise InvalidParam("noise variances must be >= 0")
        if self.initial_position_var <= 0 or self.initial_velocity_var <= 0:
            raise InvalidParam("initial variances must be > 0")

    @property
    def q(self) -> np.ndarray:
        return np.eye(4) * self.process_noise

    @property
    def r(self) -> np.ndarray:
        return np.eye(2) * self.measurement_noise

    @property
    def p0(self) -> np.ndarray:
        return np.diag(
            [self.initial_position_var] * 2 + [self.initial_velocity_var] * 2
        ).astype(float)


@dataclass(frozen=True, eq=False)
class TrackState:
    state: np.ndarray
    covariance: np.ndarray
    frame: int
    config: KalmanConfig = field(default_factory=KalmanConfig)
    size: Tuple[int, int] = (1, 1)  # (w, h) of the box that started the track

    @property
    def center(self) -> Tuple[float, float]:
        return (float(self.state[0]), float(self.state[1]))

    @property
    def velocity(self) -> Tuple[float, float]:
        return (float(self.state[2]), float(self.state[3]))

    def box(self) -> Box:
        return Box.around(self.state[0], self.state[1], self.size[0], self.size[1])


def _symmetric(p: np.ndarray) -> np.ndarray:
    return (p + p.T) / 2.0


def init_track(
    box: Box,
    frame: int,
    config: KalmanConfig | None = None,
    velocity: Tuple[float, float] = (0.0, 0.0),
) -> TrackState:
    """Start at the box centre with the configured initial covariance."""
    if box.w <= 0 or box.h <= 0:
        raise InvalidBox("cannot track a box with non-positive size")
    cfg = config or KalmanConfig()
    cx, cy = box.center
    state = np.array([cx, cy, float(velocity[0]), float(velocity[1])])
    return TrackState(state, cfg.p0, frame, cfg, (box.w, box.h))


def predict(track: TrackState, frames: int = 1) -> TrackState:
    if frames < 0:
        raise InvalidParam("cannot predict backwards in time")
    x, p = track.state, track.covariance
    for _ in range(frames):
        x, p = kf_predict(x, p, F=TRANSITION, Q=track.config.q)
        p = _symmetric(p)
    return TrackState(np.asarray(x, dtype=float), p, track.frame + frames, track.config, track.size)


def update(track: TrackState, measured: Tuple[float, float]) -> TrackState:
    z = np.asarray(measured, dtype=float)
    x, p = kf_update(track.state, track.covariance, z, track.config.r, MEASUREMENT)
    return TrackState(
        np.asarray(x, dtype=float), _symmetric(np.asarray(p)), track.frame, track.config, track.size
    )
