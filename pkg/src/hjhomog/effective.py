"""Hopf-Lax solver for the constant-coefficient effective equation.

u(x, t) = min over y of g(y) + t * Lbar((x - y) / t), searched on the
reachable ball |x - y| <= t * q_max by a coarse grid with two local
3x refinements.  Works off an EffectiveTable or closed-form Hbar/Lbar;
infinite Lagrangian values mark unreachable velocities and are excluded
from the search rather than penalized.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .hamiltonians import EffectiveTable
from .hj_solver import SchemeConfig, SpaceTimeSolution

_COARSE_NODES = {1: 301, 2: 81, 3: 25}


@dataclass(frozen=True)
class EffectiveProblem:
    """Effective Hamiltonian data plus initial condition.

    lbar maps a batch (m, dim) of velocities to values (possibly +inf);
    g maps one coordinate array per axis to values.  q_max bounds the
    speed of propagation, i.e. the radius of the Hopf-Lax search ball.
    """

    dim: int
    g: callable
    lip_g: float
    lbar: callable
    q_max: float
    hbar: callable = None
    table: EffectiveTable = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError("dim must be 1, 2, or 3")
        if self.lip_g < 0 or self.q_max <= 0:
            raise ValueError("lip_g must be >= 0 and q_max > 0")

    def with_data(self, g, lip_g=None):
        return replace(self, g=g, lip_g=self.lip_g if lip_g is None else lip_g)


def problem_from_table(table, g, lip_g, *, q_max=None):
    if len(table.q_axes) == 0:
        raise ValueError("table carries no conjugate; attach one first")
    if q_max is None:
        q_max = table.q_sup() + 1e-9
    return EffectiveProblem(
        dim=table.dim, g=g, lip_g=float(lip_g),
        lbar=table.lbar_at, q_max=float(q_max),
        hbar=table.hbar_at, table=table,
        meta={"source": "table", "method": table.method},
    )


def problem_closed_form(dim, g, lip_g, lbar, q_max, *, hbar=None):
    return EffectiveProblem(
        dim=dim, g=g, lip_g=float(lip_g), lbar=lbar, q_max=float(q_max),
        hbar=hbar, meta={"source": "closed_form"},
    )


def _eval_objective(problem, x, t, centers, half_widths, n):
    """Minimize g(y) + t*lbar((x-y)/t) over the axis-aligned box around
    centers; returns (value, argmin)."""
    axes = [np.linspace(c - w, c + w, n) for c, w in zip(centers, half_widths)]
    meshes = np.meshgrid(*axes, indexing="ij")
    ys = np.stack([m.ravel() for m in meshes], axis=-1)
    q = (x[None, :] - ys) / t
    lvals = np.asarray(problem.lbar(q), dtype=float)
    gvals = np.asarray(problem.g(*[ys[:, i] for i in range(problem.dim)]), dtype=float).ravel()
    total = gvals + t * lvals
    finite = np.isfinite(total)
    if not finite.any():
        return np.inf, None
    i = int(np.argmin(np.where(finite, total, np.inf)))
    return float(total[i]), ys[i]


def _hopf_lax_full(problem, x, t, *, n_coarse=None, refinements=2):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (problem.dim,):
        raise ValueError(f"x must have shape ({problem.dim},)")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        val = float(np.asarray(problem.g(*[np.asarray(c) for c in x])))
        return val, x.copy()
    n = n_coarse or _COARSE_NODES[problem.dim]
    radius = t * problem.q_max
    centers = x.copy()
    half = np.full(problem.dim, radius)
    best_val, best_y = _eval_objective(problem, x, t, centers, half, n)
    if best_y is None:
        raise ValueError(
            "effective Lagrangian is infinite on the entire search ball; "
            "q_max does not reach the finite domain"
        )
    spacing = 2.0 * half / (n - 1)
    for _ in range(refinements):
        # 10 nodes across the three bracketing cells: spacing drops by 3
        half = 1.5 * spacing
        val, y = _eval_objective(problem, x, t, best_y, half, 10)
        if y is not None and val < best_val:
            best_val, best_y = val, y
        spacing = spacing / 3.0
    return best_val, best_y


def hopf_lax(problem, x, t, *, n_coarse=None, refinements=2):
    """Value of the Hopf-Lax minimization at one space-time point."""
    return _hopf_lax_full(problem, x, t, n_coarse=n_coarse, refinements=refinements)[0]


def concave_pwl_value(pieces, hbar_fn, x, t):
    """Exact effective solution for concave piecewise-linear data
    g = min_k (a_k . x + b_k):  u = min_k (a_k . x + b_k - t * hbar(a_k)).

    Each affine piece propagates rigidly; the min of the shifted planes is
    the viscosity solution for any convex effective Hamiltonian.  x may be
    a single point (dim,) or a batch (m, dim).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    vals = np.full(pts.shape[0], np.inf)
    for a, b in pieces:
        a = np.asarray(a, dtype=float)
        plane = pts @ a + b - t * float(hbar_fn(a))
        vals = np.minimum(vals, plane)
    return float(vals[0]) if single else vals


def solve_effective(problem, axes, times, *, n_coarse=None, refinements=2):
    """Hopf-Lax on a tensor grid for each requested time.

    Returns a SpaceTimeSolution whose meta carries the per-sample
    minimizer locations ("minimizers": array (n_times,) + shape + (dim,))
    and whose lipschitz_record holds the discrete Lipschitz constant of
    each layer (the formula never increases it beyond Lip(g)).
    """
    axes = tuple(np.asarray(a, dtype=float) for a in axes)
    if len(axes) != problem.dim:
        raise ValueError("one axis per dimension required")
    steps = [np.diff(a) for a in axes]
    h = float(steps[0][0]) if len(steps[0]) else 1.0
    for s in steps:
        if len(s) and (s.max() - s.min() > 1e-12 * max(1.0, abs(h)) or abs(s[0] - h) > 1e-12):
            raise ValueError("axes must share one uniform spacing")
    times = sorted(float(t) for t in np.atleast_1d(times))
    if times[0] < 0:
        raise ValueError("times must be nonnegative")
    shape = tuple(len(a) for a in axes)
    meshes = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in meshes], axis=-1)
    layers, minimizers, lips = [], [], []
    for t in times:
        vals = np.empty(pts.shape[0])
        ys = np.empty_like(pts)
        for i in range(pts.shape[0]):
            vals[i], ys[i] = _hopf_lax_full(
                problem, pts[i], t, n_coarse=n_coarse, refinements=refinements
            )
        layer = vals.reshape(shape)
        layers.append(layer)
        minimizers.append(ys.reshape(shape + (problem.dim,)))
        lips.append(_discrete_lipschitz(layer, h))
    config = SchemeConfig(
        h=h, dt=0.0, cfl=0.0, sigma=(0.0,) * problem.dim,
        grad_range=problem.lip_g, periodic=False,
        lo=tuple(float(a[0]) for a in axes), shape=shape,
    )
    return SpaceTimeSolution(
        config=config,
        times=np.asarray(times),
        layers=np.stack(layers),
        lipschitz_record=np.asarray(lips),
        meta={"minimizers": np.stack(minimizers), "solver": "hopf_lax"},
    )


def _discrete_lipschitz(layer, h):
    worst = 0.0
    for ax in range(layer.ndim):
        if layer.shape[ax] < 2:
            continue
        d = np.abs(np.diff(layer, axis=ax)) / h
        worst = max(worst, float(d.max()))
    return worst
