"""Sequence CSV files, report JSON and plot-data emission.

Sequence CSV layout: a header row ``dim=<d>,backend=<exact|float|mask>``,
then one row per index ``n``: ``n,v_0,...,v_{d-1}``. Exact values are
written as ``p/q``; projection sequences use ``backend=mask`` with 0/1 cells.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ConfigError
from .scalars import BACKENDS, EXACT, format_scalar, parse_scalar
from .sequences import ProjectionSequence, VectorSequence, max_norms

MASK = "mask"


def _parse_header(row: list[str], path: Path) -> tuple[int, str]:
    fields = {}
    for cell in row:
        if "=" not in cell:
            raise ConfigError(f"{path}:1: header must be 'dim=<d>,backend=<tag>', got {','.join(row)!r}")
        key, value = cell.split("=", 1)
        fields[key.strip()] = value.strip()
    try:
        dim = int(fields["dim"])
        backend = fields["backend"]
    except (KeyError, ValueError):
        raise ConfigError(f"{path}:1: header needs integer dim and a backend tag") from None
    if dim < 1:
        raise ConfigError(f"{path}:1: dim must be positive")
    if backend not in BACKENDS + (MASK,):
        raise ConfigError(f"{path}:1: unknown backend tag {backend!r}")
    return dim, backend


def _read_rows(path: Path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"input file not found: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh)]
    if not rows:
        raise ConfigError(f"{path}:1: empty file")
    dim, backend = _parse_header(rows[0], path)
    body = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != dim + 1:
            raise ConfigError(f"{path}:{lineno}: expected {dim + 1} cells, got {len(row)}")
        try:
            n = int(row[0])
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: index {row[0]!r} is not an integer") from None
        if n != len(body):
            raise ConfigError(f"{path}:{lineno}: expected index {len(body)}, got {n}")
        body.append((lineno, row[1:]))
    return dim, backend, body


def read_sequence_csv(path, expected_backend: str | None = None) -> VectorSequence:
    path = Path(path)
    dim, backend, body = _read_rows(path)
    if backend == MASK:
        raise ConfigError(f"{path}:1: expected a vector sequence, found a mask file")
    if expected_backend is not None and backend != expected_backend:
        raise ConfigError(f"{path}:1: backend {backend!r} does not match the experiment backend {expected_backend!r}")
    values = []
    for lineno, cells in body:
        try:
            values.append([parse_scalar(c, backend) for c in cells])
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"{path}:{lineno}: cannot parse value ({exc})") from None
    if not values:
        raise ConfigError(f"{path}: no data rows")
    arr = np.array(values, dtype=object if backend == EXACT else np.float64).reshape(len(values), dim)
    return VectorSequence.from_array(arr, backend)


def read_projection_csv(path) -> ProjectionSequence:
    path = Path(path)
    dim, backend, body = _read_rows(path)
    if backend != MASK:
        raise ConfigError(f"{path}:1: projection files need backend=mask")
    masks = []
    for lineno, cells in body:
        if any(c.strip() not in ("0", "1") for c in cells):
            raise ConfigError(f"{path}:{lineno}: mask cells must be 0 or 1")
        masks.append([c.strip() == "1" for c in cells])
    if not masks:
        raise ConfigError(f"{path}: no data rows")
    return ProjectionSequence.from_masks(np.array(masks, dtype=bool).reshape(len(masks), dim))


def _atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(rows: Iterable[Iterable]) -> str:
    import io as _io

    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def write_sequence_csv(seq: VectorSequence, path) -> None:
    arr = seq.array
    rows = [[f"dim={seq.dim}", f"backend={seq.backend}"]]
    rows += [[n] + [format_scalar(v) for v in arr[n]] for n in range(seq.horizon)]
    _atomic_write_text(Path(path), _csv_text(rows))


def write_projection_csv(ps: ProjectionSequence, path) -> None:
    rows = [[f"dim={ps.dim}", f"backend={MASK}"]]
    rows += [[n] + [int(b) for b in ps.masks[n]] for n in range(ps.horizon)]
    _atomic_write_text(Path(path), _csv_text(rows))


def write_json(data: dict, path) -> None:
    text = json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    _atomic_write_text(Path(path), text)


def sample_indices(horizon: int, points: int = 120, tail: int = 50) -> np.ndarray:
    """Geometrically spaced indices plus the final ``tail`` indices."""
    if horizon <= points + tail:
        return np.arange(horizon)
    geo = np.unique(np.geomspace(1, horizon, points).astype(np.int64) - 1)
    return np.unique(np.concatenate([geo, np.arange(horizon - tail, horizon)]))


def trajectory(seq_or_array, points: int = 120, tail: int = 50) -> dict:
    """Max-coordinate norm trajectory, sampled for embedding in a report."""
    arr = seq_or_array.array if isinstance(seq_or_array, VectorSequence) else np.asarray(seq_or_array)
    norms = max_norms(arr) if arr.ndim > 1 else np.abs(arr)
    idx = sample_indices(len(norms), points, tail)
    return {
        "horizon": int(len(norms)),
        "indices": [int(i) for i in idx],
        "values": [format_scalar(norms[i]) for i in idx],
    }


def emit_plot_data(report: dict, path, name: str | None = None) -> list[Path]:
    """Write two-column ``index,value`` CSVs for the report's trajectories.

    With a single selected trajectory the file is ``path`` itself; otherwise
    one file per trajectory named ``<stem>-<trajectory><suffix>``.
    """
    trajectories = report.get("trajectories") or {}
    if name is not None:
        if name not in trajectories:
            raise ConfigError(f"report has no trajectory {name!r}; available: {sorted(trajectories)}")
        trajectories = {name: trajectories[name]}
    if not trajectories:
        raise ConfigError("report contains no trajectories")
    path = Path(path)
    written = []
    for key in sorted(trajectories):
        traj = trajectories[key]
        if not traj.get("values"):
            raise ConfigError(f"trajectory {key!r} is empty")
        target = path if len(trajectories) == 1 else path.with_name(f"{path.stem}-{key}{path.suffix or '.csv'}")
        rows = [["index", "value"]]
        rows += [[i, repr(float(parse_scalar(v, "float")))] for i, v in zip(traj["indices"], traj["values"])]
        _atomic_write_text(target, _csv_text(rows))
        written.append(target)
    return written
