"""Numerical laboratory for periodic homogenization of convex Hamilton-Jacobi equations."""

from hjhomog.fields import (
    Grid,
    PeriodicField,
    ergodic_defect,
    interp,
    load_field,
    make_grid,
    sample,
    save_field,
)

__all__ = [
    "Grid",
    "PeriodicField",
    "ergodic_defect",
    "interp",
    "load_field",
    "make_grid",
    "sample",
    "save_field",
]

__version__ = "0.1.0"
