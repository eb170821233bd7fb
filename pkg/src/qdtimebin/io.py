"""CSV output: '#'-prefixed header lines, comma separated, full double precision."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np


def _fmt(x) -> str:
    return repr(float(x))


def format_csv(names, rows, header=None) -> str:
    lines = []
    for key, value in (header or {}).items():
        lines.append(f"# {key} = {value}")
    lines.append(",".join(names))
    for row in np.atleast_2d(rows):
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path, names, rows, header=None) -> Path:
    """Write atomically: the target either keeps its old content or gets the full new file."""
    path = Path(path)
    text = format_csv(names, rows, header)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_csv(path):
    """Return ``(header, names, data)`` for a file written by :func:`write_csv`."""
    header, names, rows = {}, None, []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                header[key.strip()] = value.strip()
            elif names is None:
                names = line.split(",")
            elif line:
                rows.append([float(v) for v in line.split(",")])
    return header, names, np.array(rows).reshape(-1, len(names or []))
