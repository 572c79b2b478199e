"""Plain-text matrix format: one row per line, whitespace-separated entries "a+bi".

Real entries may omit the imaginary part. Blank lines and lines starting
with ``#`` are ignored.
"""

import logging
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import ArrayLike
from numpy.typing import NDArray

from .exceptions import DimensionMismatchError

logger = logging.getLogger(__name__)


def format_entry(value: complex) -> str:
    """Format one entry as "a+bi" with round-trip precision."""
    z = complex(value)
    sign = "-" if z.imag < 0 else "+"
    return f"{format(z.real, '.17g')}{sign}{format(abs(z.imag), '.17g')}i"


def parse_entry(token: str) -> complex:
    """Parse "a+bi", "a-bi", "bi" or "a"."""
    text = token.strip()
    if text.endswith("i"):
        text = text[:-1] + "j"
    try:
        return complex(text)
    except ValueError as e:
        raise ValueError(f"Malformed matrix entry {token!r}") from e


def parse_matrix(text: str) -> NDArray[Any]:
    """Parse matrix text; the result is real when every imaginary part is zero.

    Raises:
        DimensionMismatchError: If rows have different lengths
        ValueError: If an entry cannot be parsed or the matrix is empty
    """
    rows: list[list[complex]] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        row = [parse_entry(token) for token in stripped.split()]
        if rows and len(row) != len(rows[0]):
            raise DimensionMismatchError(
                f"Row on line {line_no} has {len(row)} entries, expected {len(rows[0])}"
            )
        rows.append(row)

    if not rows:
        raise ValueError("Matrix text contains no rows")

    matrix = np.array(rows, dtype=np.complex128)
    if not np.any(matrix.imag):
        return matrix.real.copy()
    return matrix


def read_matrix(path: Path | str, square: bool = False) -> NDArray[Any]:
    """Read a matrix file written in the plain-text format.

    Raises:
        DimensionMismatchError: If ``square`` is set and the matrix is not square
        ValueError: If an entry is malformed or nonfinite
    """
    path = Path(path)
    matrix = parse_matrix(path.read_text(encoding="utf-8"))
    if not np.all(np.isfinite(matrix)):
        raise ValueError(f"Matrix in {path} has nonfinite entries")
    if square and matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatchError(f"Matrix in {path} must be square, got shape {matrix.shape}")
    logger.debug(f"Read {matrix.shape[0]}x{matrix.shape[1]} matrix from {path}")
    return matrix


def format_matrix(matrix: ArrayLike) -> str:
    x = np.atleast_2d(np.asarray(matrix))
    if x.ndim != 2:
        raise DimensionMismatchError(f"Expected a 2-D matrix, got shape {x.shape}")
    return "".join(" ".join(format_entry(v) for v in row) + "\n" for row in x)


def write_matrix(path: Path | str, matrix: ArrayLike) -> None:
    """Write ``matrix`` to ``path``, one row per line."""
    path = Path(path)
    path.write_text(format_matrix(matrix), encoding="utf-8")
    logger.debug(f"Wrote matrix of shape {np.shape(matrix)} to {path}")
