"""Long-format tensor-series files and run-configuration files.

File layout::

    # dims=I1,I2,I3 T=N
    # axis1=a|b|c          (optional, one line per labelled axis)
    t,i1,i2,i3,value
    1,1,1,1,0.25
    ...

All indices are 1-based and every cell must appear exactly once.
"""
from __future__ import annotations

import io
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import ValidationError

from btar.schemas.config import RunConfig
from btar.utils.errors import ConfigError, DataFormatError

logger = logging.getLogger(__name__)

KEY_COLUMNS = ["t", "i1", "i2", "i3"]
MAX_REPORTED_KEYS = 10


@dataclass
class TensorSeries:
    values: np.ndarray
    labels: list[list[str] | None] = field(default_factory=lambda: [None, None, None])

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.values.shape[1:])

    @property
    def length(self) -> int:
        return self.values.shape[0]

    def axis_labels(self, axis: int) -> list[str]:
        """Labels of 1-based ``axis``, defaulting to ``1..I``."""
        labels = self.labels[axis - 1]
        return labels if labels is not None else [str(k) for k in range(1, self.dims[axis - 1] + 1)]


def atomic_write_bytes(path: str | Path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path: str | Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def write_csv(df: pd.DataFrame, path: str | Path, float_format: str | None = "%.10g") -> Path:
    buffer = io.StringIO()
    df.to_csv(buffer, index=False, float_format=float_format, lineterminator="\n")
    path = atomic_write_text(path, buffer.getvalue())
    logger.info("Wrote %s (%s rows)", path, len(df))
    return path


def _parse_header(lines: list[str]) -> tuple[tuple[int, int, int], int, list[list[str] | None]]:
    dims = None
    length = None
    labels: list[list[str] | None] = [None, None, None]
    for line in lines:
        body = line.lstrip("#").strip()
        if body.startswith("dims="):
            for part in body.split():
                key, _, value = part.partition("=")
                if key == "dims":
                    dims = tuple(int(v) for v in value.split(","))
                elif key == "T":
                    length = int(value)
        elif body.startswith("axis"):
            key, _, value = body.partition("=")
            try:
                axis = int(key[4:])
            except ValueError as exc:
                raise DataFormatError(f"bad label line {line!r}") from exc
            if axis not in (1, 2, 3):
                raise DataFormatError(f"label line names axis {axis}; only axes 1..3 exist")
            labels[axis - 1] = value.split("|")
    if dims is None or length is None or len(dims) != 3:
        raise DataFormatError("missing '# dims=I1,I2,I3 T=N' manifest line")
    for axis, names in enumerate(labels, start=1):
        if names is not None and len(names) != dims[axis - 1]:
            raise DataFormatError(f"axis {axis} has {len(names)} labels but dimension {dims[axis - 1]}")
    return dims, length, labels


def ingest(path: str | Path) -> TensorSeries:
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"series file {path} does not exist")
    with path.open("r", encoding="utf-8") as handle:
        header = []
        for line in handle:
            if not line.startswith("#"):
                break
            header.append(line.rstrip("\n"))
    dims, length, labels = _parse_header(header)
    try:
        df = pd.read_csv(path, skiprows=len(header), float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataFormatError(f"cannot parse {path}: {exc}") from exc
    if list(df.columns) != KEY_COLUMNS + ["value"]:
        raise DataFormatError(f"expected columns t,i1,i2,i3,value, got {','.join(map(str, df.columns))}")

    dup = df.duplicated(subset=KEY_COLUMNS, keep="first")
    if dup.any():
        keys = [tuple(int(v) for v in row) for row in df.loc[dup, KEY_COLUMNS].head(MAX_REPORTED_KEYS).to_numpy()]
        raise DataFormatError(f"duplicate cells (t,i1,i2,i3): {keys}")
    bounds = (length,) + dims
    for col, bound in zip(KEY_COLUMNS, bounds):
        bad = (df[col] < 1) | (df[col] > bound)
        if bad.any():
            raise DataFormatError(f"column {col} has indices outside 1..{bound}")
    expected = pd.MultiIndex.from_product([range(1, b + 1) for b in bounds], names=KEY_COLUMNS)
    present = pd.MultiIndex.from_frame(df[KEY_COLUMNS].astype(int))
    missing = expected.difference(present)
    if len(missing):
        first = [tuple(int(v) for v in k) for k in missing[:MAX_REPORTED_KEYS]]
        raise DataFormatError(f"{len(missing)} missing cells (t,i1,i2,i3), first: {first}")
    values = pd.to_numeric(df["value"], errors="coerce").to_numpy(dtype=float)
    if not np.all(np.isfinite(values)):
        raise DataFormatError("series contains non-numeric or non-finite values")
    out = np.empty(bounds)
    idx = df[KEY_COLUMNS].to_numpy(dtype=int) - 1
    out[idx[:, 0], idx[:, 1], idx[:, 2], idx[:, 3]] = values
    logger.info("Ingested %s: T=%s dims=%s", path, length, dims)
    return TensorSeries(values=out, labels=labels)


def export(series: TensorSeries | np.ndarray, path: str | Path) -> Path:
    if not isinstance(series, TensorSeries):
        series = TensorSeries(values=np.asarray(series, dtype=float))
    values = series.values
    grid = np.indices(values.shape).reshape(4, -1) + 1
    df = pd.DataFrame(grid.T, columns=KEY_COLUMNS)
    df["value"] = values.reshape(-1)
    lines = [f"# dims={','.join(map(str, series.dims))} T={series.length}"]
    for axis, names in enumerate(series.labels, start=1):
        if names is not None:
            lines.append(f"# axis{axis}={'|'.join(names)}")
    buffer = io.StringIO()
    buffer.write("\n".join(lines) + "\n")
    df.to_csv(buffer, index=False, lineterminator="\n")
    path = atomic_write_text(path, buffer.getvalue())
    logger.info("Exported series to %s", path)
    return path


def parse_key_values(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {number}: expected 'key = value', got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def load_run_config(path: str | Path | None = None, **overrides) -> RunConfig:
    """Read a flat ``key = value`` file and apply non-``None`` overrides on top."""
    values: dict[str, object] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        values.update(parse_key_values(path.read_text(encoding="utf-8")))
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**values)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
