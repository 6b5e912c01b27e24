"""Shared domain types: points, samples, norms and discrete measures.

Everything in this module is immutable after construction and every
operation is pure, so types and functions are safe to share across
threads without synchronization.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Union

import numpy as np

__all__ = [
    "InvalidInputError",
    "NumericalError",
    "Norm",
    "DEFAULT_NORM",
    "Point",
    "as_point",
    "Sample",
    "LabeledSample",
    "DiscreteMeasure",
    "validate_measure",
    "uniform_empirical",
    "distance",
    "pairwise_distances",
    "read_sample_csv",
    "write_sample_csv",
]

# Tolerance on the total mass of a discrete probability measure.
MASS_TOL = 1e-12


class InvalidInputError(ValueError):
    """Raised when an input violates a documented precondition."""


class NumericalError(RuntimeError):
    """Raised when a computation cannot be certified to the required accuracy."""


class Norm(Enum):
    """Norm on R^d used for all distances. L2 is the default."""

    L1 = "l1"
    L2 = "l2"
    LINF = "linf"

    @property
    def p(self) -> float:
        """Minkowski exponent understood by spatial indexes."""
        if self is Norm.L1:
            return 1.0
        if self is Norm.L2:
            return 2.0
        return np.inf

    @classmethod
    def parse(cls, text: Union[str, "Norm"]) -> "Norm":
        if isinstance(text, Norm):
            return text
        key = str(text).strip().lower()
        for member in cls:
            if member.value == key:
                return member
        raise InvalidInputError(f"unknown norm {text!r}; expected one of l1, l2, linf")


DEFAULT_NORM = Norm.L2

# A point is a 1-D float64 vector of coordinates.
Point = np.ndarray


def as_point(coords) -> Point:
    """Coerce ``coords`` to a finite 1-D float64 vector of dimension >= 1."""
    arr = np.asarray(coords, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError("a point must be a nonempty 1-D coordinate vector")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("point coordinates must be finite")
    return arr


def _as_points_array(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise InvalidInputError("a sample must be a nonempty (n, d) array of coordinates")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("sample coordinates must be finite")
    return arr


@dataclass(frozen=True, eq=False)
class Sample:
    """Ordered collection of points sharing one dimension.

    1-D input is interpreted as n points in R^1.
    """

    points: np.ndarray

    def __post_init__(self):
        arr = _as_points_array(self.points)
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "points", arr)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.size

    def point(self, i: int) -> Point:
        return self.points[i]


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """Training sample: input points plus one output row per point."""

    inputs: Sample
    outputs: np.ndarray

    def __post_init__(self):
        if not isinstance(self.inputs, Sample):
            object.__setattr__(self, "inputs", Sample(self.inputs))
        out = np.asarray(self.outputs, dtype=np.float64)
        if out.ndim == 1:
            out = out.reshape(-1, 1)
        if out.ndim != 2 or out.shape[1] == 0:
            raise InvalidInputError("outputs must be an (m, e) array with e >= 1")
        if out.shape[0] != self.inputs.size:
            raise InvalidInputError(
                f"outputs rows ({out.shape[0]}) must match inputs size ({self.inputs.size})"
            )
        if not np.all(np.isfinite(out)):
            raise InvalidInputError("outputs must be finite")
        out = out.copy()
        out.flags.writeable = False
        object.__setattr__(self, "outputs", out)

    @property
    def size(self) -> int:
        return self.inputs.size

    @property
    def out_dim(self) -> int:
        return self.outputs.shape[1]


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finitely supported probability measure: points with masses summing to 1."""

    points: Sample
    masses: np.ndarray

    def __post_init__(self):
        if not isinstance(self.points, Sample):
            object.__setattr__(self, "points", Sample(self.points))
        masses = np.asarray(self.masses, dtype=np.float64).ravel()
        _check_masses(self.points, masses)
        masses = masses.copy()
        masses.flags.writeable = False
        object.__setattr__(self, "masses", masses)

    @property
    def size(self) -> int:
        return self.points.size


def _check_masses(points: Sample, masses: np.ndarray) -> None:
    if masses.size == 0:
        raise InvalidInputError("a measure needs a nonempty support")
    if masses.size != points.size:
        raise InvalidInputError(
            f"got {masses.size} masses for {points.size} support points"
        )
    if not np.all(np.isfinite(masses)):
        raise InvalidInputError("masses must be finite")
    if np.any(masses < 0.0):
        raise InvalidInputError("masses must be nonnegative")
    total = float(np.sum(masses))
    if abs(total - 1.0) > MASS_TOL:
        raise InvalidInputError(f"masses must sum to 1 within {MASS_TOL:g}, got {total!r}")


def validate_measure(points, masses) -> DiscreteMeasure:
    """Validate (points, masses) and return the discrete measure.

    Rejects negative masses, a total mass off 1 by more than 1e-12, and
    an empty support.
    """
    return DiscreteMeasure(points if isinstance(points, Sample) else Sample(points), masses)


def uniform_empirical(sample: Sample) -> DiscreteMeasure:
    """Empirical measure of a sample: mass 1/n on every point."""
    return DiscreteMeasure(sample, np.full(sample.size, 1.0 / sample.size))


def _reduce_norm(diff: np.ndarray, norm: Norm) -> np.ndarray:
    """Apply the norm along the last axis of a difference array.

    This single reduction is the canonical distance computation for the
    whole package: brute-force search, the accelerated index and the
    transport solver all go through it so their values agree bitwise.
    """
    if norm is Norm.L1:
        return np.abs(diff).sum(axis=-1)
    if norm is Norm.L2:
        return np.sqrt((diff * diff).sum(axis=-1))
    return np.abs(diff).max(axis=-1)


def distance(a, b, norm: Norm = DEFAULT_NORM) -> float:
    """Norm distance between two points of equal dimension."""
    pa = as_point(a)
    pb = as_point(b)
    if pa.shape != pb.shape:
        raise InvalidInputError(
            f"dimension mismatch: {pa.shape[0]} vs {pb.shape[0]}"
        )
    return float(_reduce_norm(pa - pb, norm))


def pairwise_distances(a, b, norm: Norm = DEFAULT_NORM) -> np.ndarray:
    """Dense (n, m) matrix of norm distances between two point sets."""
    pa = a.points if isinstance(a, Sample) else _as_points_array(a)
    pb = b.points if isinstance(b, Sample) else _as_points_array(b)
    if pa.shape[1] != pb.shape[1]:
        raise InvalidInputError(
            f"dimension mismatch: {pa.shape[1]} vs {pb.shape[1]}"
        )
    return _reduce_norm(pa[:, None, :] - pb[None, :, :], norm)


# --- CSV interchange -------------------------------------------------------
#
# Format: header "x1,...,xd[,y1,...,ye]", one point per row, decimal-point
# floats, UTF-8, LF line endings.


def _expected_header(d: int, e: int) -> list[str]:
    cols = [f"x{i + 1}" for i in range(d)]
    cols += [f"y{i + 1}" for i in range(e)]
    return cols


def _split_header(header: list[str]) -> tuple[int, int]:
    d = 0
    while d < len(header) and header[d] == f"x{d + 1}":
        d += 1
    e = 0
    while d + e < len(header) and header[d + e] == f"y{e + 1}":
        e += 1
    if d == 0 or d + e != len(header):
        raise InvalidInputError(
            f"bad CSV header {header!r}; expected x1,...,xd[,y1,...,ye]"
        )
    return d, e


def read_sample_csv(path) -> Union[Sample, LabeledSample]:
    """Read a sample CSV; returns LabeledSample when y columns are present."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(text.splitlines()))
    rows = [r for r in rows if r]
    if not rows:
        raise InvalidInputError(f"{path}: empty CSV")
    d, e = _split_header([c.strip() for c in rows[0]])
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != d + e:
            raise InvalidInputError(f"{path}:{lineno}: expected {d + e} fields, got {len(row)}")
        try:
            data.append([float(c) for c in row])
        except ValueError as exc:
            raise InvalidInputError(f"{path}:{lineno}: {exc}") from exc
    if not data:
        raise InvalidInputError(f"{path}: no data rows")
    arr = np.asarray(data, dtype=np.float64)
    if e == 0:
        return Sample(arr)
    return LabeledSample(Sample(arr[:, :d]), arr[:, d:])


def write_sample_csv(path, data: Union[Sample, LabeledSample]) -> None:
    """Write a sample (or labeled sample) in the CSV interchange format."""
    if isinstance(data, LabeledSample):
        d, e = data.inputs.dim, data.out_dim
        matrix = np.hstack([data.inputs.points, data.outputs])
    else:
        d, e = data.dim, 0
        matrix = data.points
    lines = [",".join(_expected_header(d, e))]
    for row in matrix:
        lines.append(",".join(f"{x:.17g}" for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
