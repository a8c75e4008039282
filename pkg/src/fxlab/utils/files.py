"""Generic file system operations: atomic writes of JSON, CSV and plain text
artifacts."""

import json
import os
import tempfile
from pathlib import Path

import pandas as pd

# Enough digits for every `float64` to survive a write/read round trip
FLOAT_FORMAT = "%.17g"


class ArtifactWriteError(OSError):
    """Raised when an artifact could not be written and provides access to its path."""

    def __init__(self, message, path):
        super().__init__(message)
        self.path = path


def write_text(path: Path, text: str) -> Path:
    """Writes `text` to `path` atomically: the content goes to a temporary file in the
    same directory which then replaces the target. Returns the target `Path`."""

    path = Path(path)
    tmp_name = None
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        # `delete=False` because the file outlives the context manager through `replace`
        with tempfile.NamedTemporaryFile(
            "w",
            encoding="utf-8",
            newline="",
            dir=path.parent,
            prefix=f".{path.name}.",
            suffix=".tmp",
            delete=False,
        ) as tmp_file:
            tmp_name = tmp_file.name
            tmp_file.write(text)
        os.replace(tmp_name, path)
    except OSError as e:
        if tmp_name is not None:
            Path(tmp_name).unlink(missing_ok=True)
        raise ArtifactWriteError(f"`{path}` could not be written: {e}", path=path)
    return path


def write_json(path: Path, obj) -> Path:
    """Serializes `obj` to `path` as indented JSON. NaN and infinities are refused so
    that every emitted file is strict JSON."""

    return write_text(path, json.dumps(obj, indent=2, allow_nan=False) + "\n")


def read_json(path: Path):
    with open(path, encoding="utf-8") as json_file:
        return json.load(json_file)


def write_frame_csv(path: Path, frame: pd.DataFrame) -> Path:
    """Writes a `DataFrame` as CSV without its index."""

    return write_text(
        path, frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    )
