"""Flat TOML configuration: lookup, validation of key names, option layering."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Any, Dict, Mapping

try:  # Python 3.11+
    import tomllib  # type: ignore[import]
except ModuleNotFoundError:  # pragma: no cover - Python < 3.11
    import tomli as tomllib  # type: ignore[import,no-redef]

from umsli.errors import ConfigError

CONFIG_ENV = "UMSLI_CONFIG"
DEFAULT_CONFIG_PATH = Path("config") / "umsli.toml"
DEFAULT_LOG_FILE = Path("workspace") / "run_log.jsonl"

# Every recognised key with its built-in default. ``umsli.toml`` at the repo
# root mirrors this table.
DEFAULTS: Dict[str, Any] = {
    # preprocess
    "se": "",
    # saliency
    "bank": "k1:1,mu1:0.7,k2:24,mu2:1.0",
    "alpha": 4.0,
    "min_area": 9,
    # pipeline
    "detection_threshold": 0.1,
    "confirm_frames": 2,
    "scan_latency": 2,
    "dense_margin": 8,
    "dense_alpha": 1.0,
    "frame_interval_s": 0.1,
    # scene
    "dense_upsample": 4,
    "dense_noise_reduction": 2.0,
    "depth_bins": 32,
    "bit_depth": 16,
    # classify
    "library": "",
    "n_points": 64,
    "r_bins": 5,
    "theta_bins": 12,
    "sigma_schedule": [0.5, 0.25, 0.125, 0.0625],
    "max_iter": 10,
    "classify_mode": "per_template",
    # tracking
    "process_noise": 0.1,
    "measurement_noise": 1.0,
    "initial_position_var": 4.0,
    "initial_velocity_var": 25.0,
    # metrics
    "average": "micro",
    # dtg
    "n_select": 10,
    "model_steps": 5000,
    "dtg_steps": 2000,
    "dtg_episodes": 1,
    "gamma": 0.9,
    "dtg_alpha": 0.1,
    "d0": 0.0,
    "epsilon": 0.1,
    "d_max": 10.0,
    "dtg_temperature": 0.25,
    "dtg_support": 4.0,
    # global
    "seed": 0,
    "log_file": str(DEFAULT_LOG_FILE),
}


def resolve_path(root: Path, value: str | os.PathLike[str] | None) -> Path | None:
    if not value:
        return None
    candidate = Path(value)
    if not candidate.is_absolute():
        candidate = root / candidate
    return candidate.resolve()


def load_toml(path: Path) -> dict:
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"failed to parse config {path}: {exc}") from exc
    return data if isinstance(data, dict) else {}


def check_keys(data: Mapping[str, Any], known: Mapping[str, Any], source: str) -> None:
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {source}: {', '.join(unknown)}")


def find_config(root: Path, explicit: str | None = None) -> Path | None:
    """``--config`` wins, then ``$UMSLI_CONFIG``, then ``./config/umsli.toml``.

    An explicitly named file must exist; the fallback location is optional.
    """
    if explicit:
        path = resolve_path(root, explicit)
        if path is None or not path.exists():
            raise ConfigError(f"config file not found: {explicit}")
        return path
    if os.environ.get(CONFIG_ENV):
        path = resolve_path(root, os.environ[CONFIG_ENV])
        if path is None or not path.exists():
            raise ConfigError(f"config file from ${CONFIG_ENV} not found: {path}")
        return path
    fallback = root / DEFAULT_CONFIG_PATH
    return fallback if fallback.exists() else None


def load_config(root: Path, explicit: str | None = None) -> Dict[str, Any]:
    """Defaults overlaid with the located config file; ``_path`` records the file."""
    config = dict(DEFAULTS)
    path = find_config(root, explicit)
    if path is not None:
        data = load_toml(path)
        check_keys(data, DEFAULTS, str(path))
        config.update(data)
        config["_path"] = str(path)
    return config


def pick(option: Any, config: Mapping[str, Any], key: str) -> Any:
    """CLI option if given, else the config value, else the built-in default."""
    if option is not None:
        return option
    return config.get(key, DEFAULTS.get(key))
