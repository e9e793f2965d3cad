from __future__ import annotations

import datetime
import json
from pathlib import Path
from typing import Any, Mapping


def append_run_log(
    log_path: Path,
    *,
    command: str,
    arguments: Mapping[str, Any],
    returncode: int,
    message: str,
    timings: Mapping[str, float] | None = None,
) -> None:
    entry = {
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "command": command,
        "arguments": {k: _jsonable(v) for k, v in arguments.items()},
        "returncode": returncode,
        "message": message,
        "timings": dict(timings or {}),
    }
    try:
        log_path.parent.mkdir(parents=True, exist_ok=True)
        with log_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
    except Exception:  # nosec B110
        # Logging must never interrupt the main flow.
        pass


def _jsonable(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return str(value)
