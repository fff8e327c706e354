"""Deterministic result serialization: CSV payloads plus JSON metadata.

Numbers are written with 15 significant digits in scientific notation with
LF line endings, so identical configurations reproduce byte-identical CSV
files; metadata (which includes wall time) lives in a separate JSON file.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__


@dataclass(frozen=True)
class ResultArtifact:
    csv_path: Path
    meta_path: Path


def format_number(x: float) -> str:
    return f"{float(x):.14e}"


def write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> Path:
    lengths = {len(c) for c in columns}
    if len(lengths) != 1:
        raise ValueError("all CSV columns must have equal length")
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(format_number(v) for v in row))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(("\n".join(lines) + "\n").encode("ascii"))
    return path


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    return value


def write_metadata(path: Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = dict(payload)
    body.setdefault("tool_version", __version__)
    path.write_text(json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n")
    return path


class Stopwatch:
    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self._start
        return False


PLOTSCRIPT = """\
#!/usr/bin/env python3
\"\"\"Generic plot script for the CSV files listed below.\"\"\"
import csv
from pathlib import Path

import matplotlib.pyplot as plt

FILES = {files!r}

for name in FILES:
    path = Path(__file__).parent / name
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    cols = list(zip(*rows))
    fig, ax = plt.subplots()
    for label, col in zip(header[1:], cols[1:]):
        ax.plot(cols[0], col, label=label)
    ax.set_xlabel(header[0])
    ax.legend()
    ax.set_title(name)
    fig.savefig(path.with_suffix(".png"), dpi=150)
    print("wrote", path.with_suffix(".png"))
"""


def write_plotscript(out_dir: Path, csv_names: list[str]) -> Path:
    path = Path(out_dir) / "plot_results.py"
    path.write_text(PLOTSCRIPT.format(files=sorted(csv_names)))
    return path
