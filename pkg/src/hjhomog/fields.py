"""Periodic scalar fields on the unit torus.

Fields live on uniform cell-corner grids (nodes at i/res along each axis) and
are evaluated off-node by multilinear interpolation with periodic wrap.  The
module also provides the quantitative ergodic estimate for 1D periodic
averages that the homogenization error analysis leans on: for f >= 0 periodic,

    |int_0^L f - L * int_0^1 f|  <=  int_0^1 f        for every L > 0.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the unit torus T^dim, nodes at i/res."""

    dim: int
    res: int

    @property
    def spacing(self) -> float:
        return 1.0 / self.res

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.res,) * self.dim

    def axis(self) -> np.ndarray:
        """Node coordinates along one axis (identical for all axes)."""
        return np.arange(self.res) / self.res

    def meshes(self) -> tuple[np.ndarray, ...]:
        """Component coordinate arrays of shape grid.shape ('ij' indexing)."""
        return tuple(np.meshgrid(*(self.axis(),) * self.dim, indexing="ij"))


def make_grid(dim: int, res: int) -> Grid:
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2, or 3, got {dim}")
    if res < 2:
        raise ValueError(f"res must be >= 2, got {res}")
    return Grid(dim, res)


@dataclass(frozen=True)
class PeriodicField:
    """Node values of a periodic function on a Grid.  Immutable once built."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.shape != self.grid.shape:
            raise ValueError(
                f"values shape {vals.shape} does not match grid shape {self.grid.shape}"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def res(self) -> int:
        return self.grid.res


def sample(fn, grid: Grid) -> PeriodicField:
    """Sample fn at the grid nodes.  fn takes one coordinate array per axis."""
    vals = np.asarray(fn(*grid.meshes()), dtype=np.float64)
    if vals.shape != grid.shape:
        vals = np.broadcast_to(vals, grid.shape).copy()
    return PeriodicField(grid, vals)


def interp(field: PeriodicField, x) -> np.ndarray | float:
    """Multilinear periodic interpolation at x.

    x has shape (dim,) for a single point or (m, dim) for a batch; in 1D a
    bare scalar or a shape-(m,) array is also accepted.  Node values are
    reproduced exactly and interp(x + k) == interp(x) for integer k.
    """
    dim, res = field.grid.dim, field.grid.res
    pts = np.asarray(x, dtype=np.float64)
    scalar_in = pts.ndim == 0 if dim == 1 else pts.ndim == 1
    pts = np.atleast_1d(pts)
    if dim == 1:
        pts = pts.reshape(-1, 1)
    else:
        pts = pts.reshape(-1, dim)

    scaled = np.mod(pts, 1.0) * res
    base = np.floor(scaled).astype(np.int64)
    frac = scaled - base
    base %= res  # mod(x,1)*res can round up to res

    out = np.zeros(len(pts))
    # Accumulate the 2^dim cell corners with product weights.
    for corner in range(1 << dim):
        w = np.ones(len(pts))
        idx = []
        for ax in range(dim):
            if corner >> ax & 1:
                idx.append((base[:, ax] + 1) % res)
                w *= frac[:, ax]
            else:
                idx.append(base[:, ax])
                w *= 1.0 - frac[:, ax]
        out += w * field.values[tuple(idx)]
    return float(out[0]) if scalar_in else out


def ergodic_defect(field: PeriodicField, L: float) -> float:
    """|int_0^L f - L * int_0^1 f| for a 1D periodic field, by trapezoid rule.

    For f >= 0 the defect is bounded by int_0^1 f independently of L.
    """
    if field.dim != 1:
        raise ValueError("ergodic_defect requires a 1D field")
    if L <= 0:
        raise ValueError(f"L must be positive, got {L}")
    vals = field.values
    res = field.res
    h = 1.0 / res
    # Periodic trapezoid over one period is the plain node mean.
    full = float(vals.mean())
    r = L - np.floor(L)
    # Trapezoid over [0, r]: whole cells below r, then the partial cell.
    k = int(np.floor(r * res))
    ext = np.append(vals, vals[0])
    part = float(np.trapezoid(ext[: k + 1], dx=h)) if k > 0 else 0.0
    xk = k * h
    if r > xk:
        part += (r - xk) * (ext[k] + interp(field, r)) / 2.0
    return abs(part - r * full)


def save_field(field: PeriodicField, basepath: str | Path) -> None:
    """Write node values as columnar CSV plus a JSON header next to it."""
    base = Path(basepath)
    header = {"schema": SCHEMA_VERSION, "dim": field.dim, "res": field.res}
    base.with_suffix(".json").write_text(json.dumps(header, sort_keys=True))
    cols = ["i", "j", "k"][: field.dim]
    with open(base.with_suffix(".csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols + ["value"])
        for idx in np.ndindex(field.grid.shape):
            writer.writerow(list(idx) + [repr(float(field.values[idx]))])


def load_field(basepath: str | Path) -> PeriodicField:
    base = Path(basepath)
    header = json.loads(base.with_suffix(".json").read_text())
    grid = make_grid(header["dim"], header["res"])
    vals = np.zeros(grid.shape)
    with open(base.with_suffix(".csv"), newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            idx = tuple(int(c) for c in row[:-1])
            vals[idx] = float(row[-1])
    return PeriodicField(grid, vals)
