"""Discretized domains, distance metrics and observation containers.

A Grid is the quadrature rule everything integrates against: vertices plus
positive weights. Distances between locations go through the grid's metric
(plain Euclidean, or chordal distance on a sphere for lon-lat meshes), while
interaction functions always work on raw coordinate displacements.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError

__all__ = [
    "Metric",
    "EUCLIDEAN",
    "chordal",
    "chordal_distance",
    "Grid",
    "regular_grid",
    "load_mesh",
    "save_mesh",
    "Observations",
    "load_observations",
    "save_observations",
    "FLOAT_FMT",
]

# all CSV output in the package uses 17 significant digits, which round-trips
# IEEE doubles exactly
FLOAT_FMT = "%.17g"


def _embed_lonlat(points: np.ndarray, radius: float) -> np.ndarray:
    """Map (lon, lat) degrees to 3-d points on a sphere of the given radius."""
    lon = np.radians(points[:, 0])
    lat = np.radians(points[:, 1])
    return radius * np.stack(
        [np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=1
    )


@dataclass(frozen=True)
class Metric:
    kind: str = "euclidean"
    radius: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("euclidean", "chordal"):
            raise ValidationError(f"unknown metric kind {self.kind!r}")
        if self.kind == "chordal":
            if self.radius is None or not np.isfinite(self.radius) or self.radius <= 0:
                raise ValidationError("chordal metric needs a positive radius")

    def pairwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Distance matrix between location arrays a (m, dim) and b (n, dim)."""
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.atleast_2d(np.asarray(b, dtype=float))
        if self.kind == "chordal":
            if a.shape[1] != 2 or b.shape[1] != 2:
                raise ValidationError("chordal metric expects (lon, lat) locations")
            a = _embed_lonlat(a, self.radius)
            b = _embed_lonlat(b, self.radius)
        diff = a[:, None, :] - b[None, :, :]
        return np.sqrt(np.einsum("mnd,mnd->mn", diff, diff))


EUCLIDEAN = Metric("euclidean")


def chordal(radius: float) -> Metric:
    return Metric("chordal", float(radius))


def chordal_distance(a, b, radius: float) -> float:
    """Chordal (straight line through the sphere) distance between two
    (lon, lat) points in degrees: 2 R sin(angle / 2)."""
    m = chordal(radius)
    return float(m.pairwise(np.atleast_1d(a)[None, :], np.atleast_1d(b)[None, :])[0, 0])


class Grid:
    """Integration mesh: vertices (n, dim), positive quadrature weights (n,)."""

    def __init__(self, vertices, weights, metric: Metric = EUCLIDEAN):
        vertices = np.array(vertices, dtype=float)
        weights = np.array(weights, dtype=float)
        if vertices.ndim != 2:
            raise ValidationError(f"vertices must be (n, dim), got shape {vertices.shape}")
        if weights.shape != (vertices.shape[0],):
            raise ValidationError(
                f"weights shape {weights.shape} does not match {vertices.shape[0]} vertices"
            )
        if not np.all(np.isfinite(vertices)):
            raise ValidationError("vertices must be finite")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise ValidationError("quadrature weights must be finite and positive")
        vertices.setflags(write=False)
        weights.setflags(write=False)
        self.vertices = vertices
        self.weights = weights
        self.metric = metric

    @property
    def n(self) -> int:
        return self.vertices.shape[0]

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def distance_matrix(self, a=None, b=None) -> np.ndarray:
        a = self.vertices if a is None else a
        b = self.vertices if b is None else b
        return self.metric.pairwise(a, b)

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.weights, other.weights)
            and self.metric == other.metric
        )

    def __repr__(self):
        return f"Grid(n={self.n}, dim={self.dim}, metric={self.metric.kind})"


def regular_grid(bounds: Sequence, counts: Sequence[int], metric: Metric = EUCLIDEAN) -> Grid:
    """Cell-center grid over an axis-aligned box; weight = cell volume."""
    bounds = [(float(lo), float(hi)) for lo, hi in bounds]
    counts = [int(c) for c in counts]
    if len(bounds) != len(counts):
        raise ValidationError("bounds and counts must have the same length")
    if any(c < 1 for c in counts):
        raise ValidationError(f"counts must be >= 1, got {counts}")
    axes = []
    vol = 1.0
    for (lo, hi), c in zip(bounds, counts):
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
            raise ValidationError(f"degenerate interval [{lo}, {hi}]")
        h = (hi - lo) / c
        axes.append(lo + h * (np.arange(c) + 0.5))
        vol *= h
    mesh = np.meshgrid(*axes, indexing="ij")
    vertices = np.stack([m.ravel() for m in mesh], axis=1)
    weights = np.full(vertices.shape[0], vol)
    return Grid(vertices, weights, metric)


_COORD_NAMES = ("x", "y", "z")


def _coord_columns(fieldnames, trailing: str, path) -> list:
    names = [c.strip() for c in fieldnames or []]
    if len(names) < 2 or names[-1] != trailing:
        raise ValidationError(
            f"{path}: expected coordinate columns followed by {trailing!r}, got {names}"
        )
    coords = names[:-1]
    if tuple(coords) != _COORD_NAMES[: len(coords)]:
        raise ValidationError(
            f"{path}: coordinate columns must be {_COORD_NAMES[:len(coords)]}, got {coords}"
        )
    return coords


def load_mesh(path, metric: Metric = EUCLIDEAN) -> Grid:
    """Read a mesh CSV with header ``x[,y[,z]],weight``."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        coords = _coord_columns(reader.fieldnames, "weight", path)
        verts, weights = [], []
        for i, row in enumerate(reader):
            try:
                verts.append([float(row[c]) for c in coords])
                weights.append(float(row["weight"]))
            except (TypeError, KeyError, ValueError) as exc:
                raise ValidationError(f"{path}: bad row {i + 2}: {row}") from exc
    if not verts:
        raise ValidationError(f"{path}: empty mesh")
    return Grid(np.array(verts), np.array(weights), metric)


def save_mesh(grid: Grid, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(_COORD_NAMES[: grid.dim]) + ["weight"])
        for v, w in zip(grid.vertices, grid.weights):
            writer.writerow([FLOAT_FMT % c for c in v] + [FLOAT_FMT % w])


@dataclass(frozen=True)
class Observations:
    """Observations of one variable: a location per row plus the value."""

    variable: int
    locations: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        locations = np.atleast_2d(np.asarray(self.locations, dtype=float))
        values = np.asarray(self.values, dtype=float).ravel()
        if locations.shape[0] != values.shape[0]:
            raise ValidationError(
                f"{locations.shape[0]} locations but {values.shape[0]} values"
            )
        if not (np.all(np.isfinite(locations)) and np.all(np.isfinite(values))):
            raise ValidationError("observation locations and values must be finite")
        if self.variable < 0:
            raise ValidationError(f"variable index must be >= 0, got {self.variable}")
        locations.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "locations", locations)
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Observations):
            return NotImplemented
        return (
            self.variable == other.variable
            and np.array_equal(self.locations, other.locations)
            and np.array_equal(self.values, other.values)
        )


def load_observations(path, names: Sequence[str]) -> list:
    """Read observations CSV (header ``variable,x[,y[,z]],value``).

    The variable column holds a node name from ``names`` or a 1-based index.
    Returns one Observations per name, in order, possibly with zero rows.
    """
    path = Path(path)
    names = list(names)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = [c.strip() for c in reader.fieldnames or []]
        if len(cols) < 3 or cols[0] != "variable" or cols[-1] != "value":
            raise ValidationError(
                f"{path}: expected header 'variable,<coords>,value', got {cols}"
            )
        coords = _coord_columns(cols[1:], "value", path)
        locs = [[] for _ in names]
        vals = [[] for _ in names]
        for i, row in enumerate(reader):
            label = row["variable"].strip()
            if label in names:
                q = names.index(label)
            else:
                try:
                    q = int(label) - 1
                except ValueError:
                    q = -1
                if not 0 <= q < len(names):
                    raise ValidationError(
                        f"{path}: row {i + 2}: unknown variable {label!r}; "
                        f"expected one of {names} or a 1-based index"
                    )
            try:
                locs[q].append([float(row[c]) for c in coords])
                vals[q].append(float(row["value"]))
            except (TypeError, KeyError, ValueError) as exc:
                raise ValidationError(f"{path}: bad row {i + 2}: {row}") from exc
    dim = len(coords)
    return [
        Observations(q, np.array(locs[q]).reshape(-1, dim), np.array(vals[q]))
        for q in range(len(names))
    ]


def save_observations(obs_list: Sequence[Observations], names: Sequence[str], path) -> None:
    dim = max((o.locations.shape[1] for o in obs_list if o.m), default=1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variable"] + list(_COORD_NAMES[:dim]) + ["value"])
        for obs in obs_list:
            for loc, val in zip(obs.locations, obs.values):
                writer.writerow(
                    [names[obs.variable]]
                    + [FLOAT_FMT % c for c in loc]
                    + [FLOAT_FMT % val]
                )
