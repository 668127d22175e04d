"""Reading and writing run artifacts (CSV, JSON), always atomically.

CSV files start with a ``# schema=N`` comment line followed by a header
row.  Floats are written with ``repr`` so re-running a deterministic
command reproduces the file byte for byte; wall-clock information is kept
out of CSVs and lives only in JSON metadata.
"""

from __future__ import annotations

import csv
import io
import json
import os
import subprocess
import tempfile
from datetime import datetime, timezone
from importlib import metadata as importlib_metadata
from pathlib import Path

import numpy as np

from .errors import ValidationError

SCHEMA_VERSION = 1
SCHEMA_LINE = f"# schema={SCHEMA_VERSION}"


def atomic_write_text(path: str | os.PathLike, text: str) -> Path:
    """Write ``text`` to a temporary sibling, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v) + 0.0)  # folds -0.0 into 0.0
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows) -> Path:
    buf = io.StringIO()
    buf.write(SCHEMA_LINE + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return atomic_write_text(path, buf.getvalue())


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Header and float data of a CSV written by :func:`write_csv`."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    schema = [ln for ln in text.splitlines() if ln.startswith("# schema=")]
    if schema and schema[0] != SCHEMA_LINE:
        raise ValidationError(f"{path}: unsupported {schema[0][2:]}")
    if not lines:
        raise ValidationError(f"{path}: no header row")
    reader = csv.reader(lines)
    header = next(reader)
    try:
        data = np.array([[float(v) for v in row] for row in reader], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if data.size == 0:
        data = np.empty((0, len(header)))
    if data.shape[1] != len(header):
        raise ValidationError(f"{path}: rows do not match the header")
    return header, data


def write_json(path, obj) -> Path:
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    return doc


def build_description() -> str:
    """``git describe`` of the source tree, or the installed version."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=here, capture_output=True, text=True, timeout=5, check=True,
        )
        return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    try:
        return "version " + importlib_metadata.version("artifact")
    except importlib_metadata.PackageNotFoundError:
        return "unknown"


def run_stamp() -> dict:
    return {
        "build": build_description(),
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
