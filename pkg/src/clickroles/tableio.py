"""Shared file helpers: gzip-transparent text IO, TSV tables, CSV
matrices with ``#`` metadata header lines, and key=value files.

All writers produce byte-deterministic output for identical inputs:
floats are serialized with ``repr`` (shortest round-trip form), rows are
emitted in the order given by the caller, and no timestamps appear in
any data file.
"""

from __future__ import annotations

import gzip
import io
import math
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from .errors import DataError, UsageError


def open_text(path: str | Path, mode: str = "rt") -> IO[str]:
    """Open a text file, transparently decompressing ``.gz`` paths."""
    path = Path(path)
    if not mode.startswith("r"):
        path.parent.mkdir(parents=True, exist_ok=True)
    elif not path.exists():
        raise DataError(f"input file not found: {path}")
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, mode.replace("t", "") + "b"), encoding="utf-8")
    return open(path, mode, encoding="utf-8", newline="")


def fmt_value(v: object) -> str:
    """Serialize one table cell. Floats use shortest round-trip repr;
    NaN is emitted as the empty string (absent, never a number)."""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    if v is None:
        return ""
    return str(v)


def write_tsv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> None:
    with open_text(path, "wt") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(fmt_value(v) for v in row) + "\n")


def read_tsv(path: str | Path, expect_header: Sequence[str] | None = None) -> tuple[list[str], list[list[str]]]:
    """Read a headered TSV table into (header, rows of strings)."""
    with open_text(path, "rt") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines:
        raise DataError(f"empty table: {path}")
    header = lines[0].split("\t")
    if expect_header is not None and list(header) != list(expect_header):
        raise DataError(
            f"unexpected header in {path}: got {header!r}, expected {list(expect_header)!r}"
        )
    rows = [ln.split("\t") for ln in lines[1:] if ln != ""]
    return header, rows


def write_matrix_csv(path: str | Path, matrix: np.ndarray, metadata: dict[str, object]) -> None:
    """Write a 2-D matrix as CSV preceded by ``# key=value`` metadata lines.

    NaN cells are emitted empty (masked values are absent, never numbers).
    """
    mat = np.asarray(matrix)
    if mat.ndim != 2:
        raise UsageError(f"matrix must be 2-D, got {mat.ndim}-D")
    with open_text(path, "wt") as fh:
        for key, value in metadata.items():
            fh.write(f"# {key}={value}\n")
        for row in mat:
            fh.write(",".join(fmt_value(float(v)) for v in row) + "\n")


def read_matrix_csv(path: str | Path) -> tuple[np.ndarray, dict[str, str]]:
    """Read a matrix CSV written by :func:`write_matrix_csv`.

    Empty cells come back as NaN.
    """
    metadata: dict[str, str] = {}
    rows: list[list[float]] = []
    with open_text(path, "rt") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    metadata[key.strip()] = value.strip()
                continue
            if not line:
                continue
            rows.append([float(cell) if cell != "" else math.nan for cell in line.split(",")])
    return np.array(rows, dtype=float), metadata


def write_keyvalues(path: str | Path, items: dict[str, object]) -> None:
    with open_text(path, "wt") as fh:
        for key, value in items.items():
            fh.write(f"{key}={fmt_value(value)}\n")


def read_keyvalues(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open_text(path, "rt") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"malformed key=value line in {path}: {line!r}")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def iter_lines(path: str | Path) -> Iterator[str]:
    """Yield lines (without trailing newline) from a possibly-gzipped file."""
    with open_text(path, "rt") as fh:
        for line in fh:
            yield line.rstrip("\n")
