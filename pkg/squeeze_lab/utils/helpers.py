import hashlib
import json
import logging
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


def to_jsonable(obj: Any) -> Any:
    """
    Convert numpy values, enums and nested containers to plain JSON types.

    Non-finite floats become None so the output stays strict JSON.
    """
    if isinstance(obj, dict):
        return {str(key): to_jsonable(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(value) for value in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, complex):
        return [to_jsonable(obj.real), to_jsonable(obj.imag)]
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    if isinstance(obj, Path):
        return str(obj)
    return obj


def config_hash(data: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON dump of data"""
    canonical = json.dumps(to_jsonable(data), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def atomic_write_text(text: str, filepath) -> Path:
    """
    Write text next to its destination and rename it into place.

    Args:
        text: File contents
        filepath (str or Path): Destination path

    Returns:
        Path: The written file
    """
    filepath = Path(filepath)

    # Ensure the directory exists
    filepath.parent.mkdir(parents=True, exist_ok=True)

    fd, tmp_name = tempfile.mkstemp(prefix=f".{filepath.name}.", dir=filepath.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp_name, filepath)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return filepath


def load_json_file(filepath):
    """
    Load data from a JSON file.

    Args:
        filepath (str or Path): Path to the JSON file

    Returns:
        dict or list: The loaded JSON data, or None if the file doesn't exist
    """
    filepath = Path(filepath)
    if not filepath.exists():
        logger.warning(f"File not found: {filepath}")
        return None

    with open(filepath, "r", encoding="utf-8") as f:
        data = json.load(f)
    logger.debug(f"Loaded data from {filepath}")
    return data


def save_json_file(data, filepath, metadata: Optional[Dict[str, Any]] = None) -> Path:
    """
    Save data to a JSON file with sorted keys.

    Args:
        data (dict): The data to save
        filepath (str or Path): Path to the JSON file
        metadata (dict): Merged into data["metadata"]

    Returns:
        Path: The written file
    """
    payload = dict(data)
    if metadata:
        payload["metadata"] = {**metadata, **payload.get("metadata", {})}
    text = json.dumps(to_jsonable(payload), indent=2, sort_keys=True, allow_nan=False) + "\n"
    path = atomic_write_text(text, filepath)
    logger.info(f"Saved data to {path}")
    return path


def metadata_header(metadata: Dict[str, Any]) -> str:
    """'# squeeze-lab <version> config=<hash>' line plus one '# key=value' line per remaining entry"""
    lines = [f"# squeeze-lab {metadata.get('code_version', '?')} config={metadata.get('config_hash', '?')}"]
    for key in sorted(metadata):
        if key not in ("code_version", "config_hash"):
            lines.append(f"# {key}={to_jsonable(metadata[key])}")
    return "\n".join(lines) + "\n"


def save_csv_table(frame: pd.DataFrame, filepath, metadata: Dict[str, Any]) -> Path:
    """
    Save a table as CSV behind a metadata comment header.

    Args:
        frame: Table to write
        filepath (str or Path): Path to the CSV file
        metadata (dict): Must carry code_version and config_hash

    Returns:
        Path: The written file
    """
    text = metadata_header(metadata) + frame.to_csv(index=False, lineterminator="\n")
    path = atomic_write_text(text, filepath)
    logger.info(f"Saved {len(frame)} rows to {path}")
    return path


def read_csv_table(filepath) -> pd.DataFrame:
    """Read a CSV written by save_csv_table, skipping the metadata header"""
    return pd.read_csv(filepath, comment="#")
