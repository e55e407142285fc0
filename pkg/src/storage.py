# src/storage.py
import csv
import json
import os
from typing import Any, Dict, Iterable, Sequence

from .errors import ConfigError, StorageError


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def save_json(path: str, payload: Dict[str, Any]) -> None:
    """Write a JSON document. Floats keep full double precision."""
    try:
        _ensure_parent(path)
        with open(path, "w") as f:
            json.dump(payload, f, indent=2)
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc


def load_json(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r") as f:
            return json.load(f)
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc


def save_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """Write a CSV with a header row; floats are written with repr precision."""
    try:
        _ensure_parent(path)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc


def save_text(path: str, text: str) -> None:
    try:
        _ensure_parent(path)
        with open(path, "w") as f:
            f.write(text)
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc


def load_config(path: str) -> Dict[str, Any]:
    """
    Load a JSON config file of CLI defaults:
    - keys are long flag names, dashes or underscores both accepted
    - the top level must be an object
    """
    if not os.path.exists(path):
        raise ConfigError(f"config file {path} does not exist")
    try:
        data = load_json(path)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    return {str(k).replace("-", "_"): v for k, v in data.items()}
