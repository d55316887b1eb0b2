"""
Result table writer.

Tables are rendered with a fixed column order and 12 significant digits,
written to a temporary sibling and renamed into place, so a failed run
never leaves a partial file behind.
"""

import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence, Union

import pandas as pd

from pvsa.exceptions import IoError
from pvsa.models.manifest import RunManifest

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"


def _atomic_write(destination: Union[str, Path], text: str) -> Path:
    destination = Path(destination)
    try:
        destination.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{destination.name}.", dir=destination.parent)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
                handle.write(text)
            os.replace(tmp, destination)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as e:
        raise IoError(f"cannot write {destination}: {e}") from e
    return destination


def render_table(rows: Iterable[Mapping[str, Any]], columns: Sequence[str]) -> str:
    frame = pd.DataFrame(list(rows), columns=list(columns))
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_results(rows: Iterable[Mapping[str, Any]], destination: Union[str, Path], columns: Sequence[str]) -> Path:
    """Write ``rows`` as CSV. Empty ``rows`` gives a header-only file."""
    path = _atomic_write(destination, render_table(rows, columns))
    logger.debug(f"Wrote {path}")
    return path


def write_manifest(manifest: RunManifest, destination: Union[str, Path]) -> Path:
    return _atomic_write(destination, manifest.model_dump_json(indent=2) + "\n")


def manifest_path(output: Union[str, Path]) -> Path:
    """``dv.csv`` -> ``dv.manifest.json``."""
    output = Path(output)
    return output.with_name(f"{output.stem}.manifest.json")
