"""Backward characteristics and action audits.

Exact 1D characteristics for mechanical Hamiltonians above the flat part,
the three-piece approximate curves for the fast-tube metric, calibration
audits of the action against the momentum pairing, and circle-map
rotation numbers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid, solve_ivp

from .cell import effective_H_1d_mechanical, _potential_nodes
from .fields import PeriodicField, interp
from .hamiltonians import Clamped, HomogeneousK, Mechanical

# Gauss-Legendre 3-point rule mapped to [0, 1]
_G3_NODES = 0.5 + np.array([-0.5, 0.0, 0.5]) * np.sqrt(3.0 / 5.0)
_G3_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0


@dataclass
class Curve:
    """Piecewise-linear curve in R^n, stored lifted (never wrapped)."""

    timestamps: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        self.points = pts
        if self.timestamps.ndim != 1 or len(self.timestamps) < 2:
            raise ValueError("need at least two samples")
        if len(self.timestamps) != len(self.points):
            raise ValueError("timestamps and points disagree in length")
        if not np.all(np.diff(self.timestamps) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if not (np.isfinite(self.timestamps).all() and np.isfinite(self.points).all()):
            raise ValueError("curve data must be finite")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.timestamps[0], self.timestamps[-1]
        if np.any(t < lo - 1e-12) or np.any(t > hi + 1e-12):
            raise ValueError(f"t outside [{lo}, {hi}]")
        cols = [np.interp(t, self.timestamps, self.points[:, i]) for i in range(self.dim)]
        return np.stack(cols, axis=-1)

    def velocities(self) -> np.ndarray:
        dt = np.diff(self.timestamps)[:, None]
        return np.diff(self.points, axis=0) / dt

    def save_csv(self, path) -> None:
        header = "t," + ",".join(f"x{i + 1}" for i in range(self.dim))
        data = np.column_stack([self.timestamps, self.points])
        np.savetxt(path, data, delimiter=",", header=header, comments="")


@dataclass(frozen=True)
class ActionAudit:
    """Accumulated Lagrangian action versus the momentum pairing.

    defect = action - pairing with
    action = integral of L(curve, velocity) + hbar over the curve's span
    and pairing = p . (endpoint - startpoint).  For calibrated curves the
    defect equals a corrector increment, so its magnitude never exceeds
    the corrector oscillation (plus quadrature error); for arbitrary
    curves it is bounded below by the same margin.
    """

    action: float
    pairing: float
    defect: float
    horizon: float
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "action": self.action,
                "pairing": self.pairing,
                "defect": self.defect,
                "horizon": self.horizon,
            },
            indent=2,
        )

    def save_json(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")


# ---------------------------------------------------------------------------
# Lagrangians (convex conjugates in the momentum slot)


def lagrangian(spec, y_comps, q_comps):
    """L(y, q) = sup_p (p . q - H(y, p)) for the specs with a usable
    closed form; +inf marks velocities outside the finite domain.

    Mechanical:        |q|^2/2 - V(y)
    HomogeneousK k=1:  0 on |q| <= 1/a(y), +inf beyond (speed limit)
    HomogeneousK k>1:  (1 - 1/k) |q| (|q| a(y)/k)^(1/(k-1))
    Clamped:           radial piecewise form of the clamped profile
    """
    y_comps = tuple(np.asarray(c, dtype=float) for c in y_comps)
    q_comps = tuple(np.asarray(c, dtype=float) for c in q_comps)
    s = np.sqrt(sum(c**2 for c in q_comps))
    if isinstance(spec, Clamped):
        coef = spec.base.node_coef(y_comps)
        return _clamped_conjugate(spec, coef, s)
    coef = spec.node_coef(y_comps)
    if isinstance(spec, Mechanical):
        return 0.5 * s**2 - coef
    if isinstance(spec, HomogeneousK):
        if spec.k == 1.0:
            return np.where(s <= coef * (1.0 + 1e-12), 0.0, np.inf)
        k = spec.k
        r = (s / (coef * k)) ** (1.0 / (k - 1.0))
        return (1.0 - 1.0 / k) * s * r
    raise ValueError(f"no closed-form Lagrangian for spec kind {spec.kind!r}")


def _clamped_conjugate(spec, coef, s):
    C0, K0 = spec.C0, spec.K0
    if isinstance(spec.base, Mechanical):
        # profile r^2/2 + V up to C0, slope C0 linear, then r^2/2 - K0
        rstar = C0 + np.sqrt(2.0 * np.maximum(K0 + coef, 0.0))
        mid = rstar * s - (0.5 * C0**2 + coef + C0 * (rstar - C0))
        out = np.where(s <= C0, 0.5 * s**2 - coef, mid)
        return np.where(s > rstar, 0.5 * s**2 + K0, out)
    if isinstance(spec.base, HomogeneousK) and spec.base.k == 1.0:
        # profile c r up to C0, slope m linear, then r^2/2 - K0
        m = spec.m
        disc = m * m + 2.0 * K0 + 2.0 * C0 * (coef - m)
        rstar = m + np.sqrt(np.maximum(disc, 0.0))
        kinked = np.where(s <= m, C0 * (s - coef), rstar * s - (coef * C0 + m * (rstar - C0)))
        out = np.where(s <= coef, 0.0, kinked)
        return np.where(s > rstar, 0.5 * s**2 + K0, out)
    raise ValueError("clamped conjugate implemented for mechanical and degree-1 bases only")


# ---------------------------------------------------------------------------
# Exact 1D characteristics (mechanical, above the flat part)


def _potential_eval(V):
    if isinstance(V, PeriodicField):
        if V.dim != 1:
            raise ValueError("1D potential required")
        return lambda x: interp(V, np.mod(np.asarray(x, dtype=float), 1.0))
    return lambda x: np.asarray(V(np.asarray(x, dtype=float)), dtype=float)


def corrector_1d(V, p, *, quad_n=8192):
    """Periodic corrector derivative and level for a 1D mechanical spec.

    Returns (v_prime, hbar) with v_prime(x) = -p + sign(p) sqrt(2 (hbar - V(x))),
    valid only above the flat part (hbar > max V); the level hbar is chosen
    so that v_prime has zero mean, which is exactly the quadrature
    definition of the effective Hamiltonian.
    """
    p = float(p)
    hbar = effective_H_1d_mechanical(V, p, quad_n=quad_n)
    vmax = float(_potential_nodes(V, quad_n).max())
    if hbar <= vmax + 1e-12:
        raise ValueError(f"p={p} lies in the flat part (hbar = max V); no smooth corrector")
    veval = _potential_eval(V)
    sgn = 1.0 if p > 0 else -1.0

    def v_prime(x):
        return -p + sgn * np.sqrt(np.maximum(2.0 * (hbar - veval(x)), 0.0))

    return v_prime, hbar


def corrector_osc(V, p, *, quad_n=8192) -> float:
    """Oscillation (max - min) of the corrector over one period."""
    v_prime, _ = corrector_1d(V, p, quad_n=quad_n)
    x = np.linspace(0.0, 1.0, quad_n + 1)
    v = cumulative_trapezoid(v_prime(x), x, initial=0.0)
    return float(v.max() - v.min())


def backward_characteristic_1d(V, p, t_min, *, dt_out=1e-3, rtol=1e-8, atol=1e-10) -> Curve:
    """Integrate the characteristic ODE xi' = p + v'(xi) backward from
    xi(0) = 0 to t_min < 0, sampled every dt_out.

    The speed p + v'(xi) = sign(p) sqrt(2 (hbar - V)) is bounded away from
    zero above the flat part, so the ODE is well posed for all times.
    """
    if t_min >= 0:
        raise ValueError("t_min must be negative")
    v_prime, _ = corrector_1d(V, p)
    sol = solve_ivp(
        lambda t, x: p + v_prime(x),
        (0.0, float(t_min)),
        [0.0],
        method="RK45",
        rtol=rtol,
        atol=atol,
        dense_output=True,
    )
    if not sol.success:
        raise RuntimeError(f"characteristic integration failed: {sol.message}")
    n = int(np.ceil(-t_min / dt_out)) + 1
    ts = np.linspace(float(t_min), 0.0, n)
    xs = sol.sol(ts)[0]
    return Curve(ts, xs[:, None])


def stationary_curve(x0, t_min) -> Curve:
    """Constant curve parked at x0: the backward characteristic of the
    flat part, where the minimizing trajectory does not move."""
    if t_min >= 0:
        raise ValueError("t_min must be negative")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    return Curve(np.array([float(t_min), 0.0]), np.stack([x0, x0]))


# ---------------------------------------------------------------------------
# Hedlund-type approximate backward characteristics


def hedlund_xi_tau(tau, horizon, delta) -> Curve:
    """Three-piece curve: ride the first fast line for roughly tau of the
    horizon, take a unit-time transverse jump (speed 1/2), then ride the
    lattice-translated second line for the rest.

    tau = 1 degenerates to the pure first-line ray.  The jump lands on the
    translated line {(-k, t, 1/2)}; k is the number of whole periods
    covered by the first piece.
    """
    tau = float(tau)
    horizon = float(horizon)
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if horizon < 2.0:
        raise ValueError(f"horizon {horizon} too short to fit the unit-time jump")
    if tau == 1.0:
        pts = np.array([[-horizon / delta, 0.0, 0.0], [0.0, 0.0, 0.0]])
        return Curve(np.array([-horizon, 0.0]), pts)
    k = int(np.floor(tau * horizon / delta))
    k = min(k, int(np.floor((horizon - 1.0) / delta)))
    t_ride1 = k * delta
    rest = horizon - t_ride1 - 1.0
    stamps = [0.0, -t_ride1, -t_ride1 - 1.0, -horizon]
    pts = [
        np.array([0.0, 0.0, 0.0]),
        np.array([-float(k), 0.0, 0.0]),
        np.array([-float(k), 0.0, 0.5]),
        np.array([-float(k), -rest / delta, 0.5]),
    ]
    if rest < 1e-12:  # jump lands exactly at the horizon
        stamps, pts = stamps[:3], pts[:3]
        stamps[2] = -horizon
    if k == 0:  # first piece degenerates
        stamps, pts = stamps[1:], pts[1:]
        stamps[0] = 0.0
    return Curve(np.asarray(stamps[::-1]), np.stack(pts[::-1]))


# ---------------------------------------------------------------------------
# Action audits


def action_audit(curve, spec, p, hbar, *, target_sublen=0.05, max_subs=64) -> ActionAudit:
    """Composite Gauss quadrature of L(xi, xi') + hbar along the curve,
    compared against the momentum pairing p . (xi(end) - xi(start)).

    Velocities are exact on each linear segment, so only the position
    dependence is quadratured: each segment is subdivided to roughly
    target_sublen of arc length (capped at max_subs) with 3-point Gauss
    per piece.  Raises if the Lagrangian is infinite anywhere sampled.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.shape != (curve.dim,):
        raise ValueError(f"p must have shape ({curve.dim},)")
    ts, xs = curve.timestamps, curve.points
    qs = curve.velocities()
    seg_dt = np.diff(ts)
    seg_len = np.linalg.norm(np.diff(xs, axis=0), axis=1)
    nsub = np.minimum(np.maximum(np.ceil(seg_len / target_sublen), 1), max_subs).astype(int)

    y_parts, q_parts, w_parts, seg_ids = [], [], [], []
    for i in range(len(qs)):
        ns = nsub[i]
        # Gauss nodes of every subinterval, as fractions of the segment
        frac = ((np.arange(ns)[:, None] + _G3_NODES[None, :]) / ns).ravel()
        y_parts.append(xs[i][None, :] + frac[:, None] * (xs[i + 1] - xs[i])[None, :])
        q_parts.append(np.broadcast_to(qs[i], (len(frac), curve.dim)))
        w_parts.append(np.tile(_G3_WEIGHTS, ns) * (seg_dt[i] / ns))
        seg_ids.append(np.full(len(frac), i))
    Y = np.concatenate(y_parts)
    Q = np.concatenate(q_parts)
    W = np.concatenate(w_parts)
    ids = np.concatenate(seg_ids)

    L = np.asarray(lagrangian(spec, tuple(Y.T), tuple(Q.T)), dtype=float)
    bad = ~np.isfinite(L)
    if bad.any():
        i = int(ids[bad][0])
        raise ValueError(
            f"Lagrangian infinite on segment {i} "
            f"(t in [{ts[i]:.6g}, {ts[i + 1]:.6g}], speed {np.linalg.norm(qs[i]):.6g})"
        )
    action = float(np.sum(W * (L + hbar)))
    pairing = float(p @ (xs[-1] - xs[0]))
    return ActionAudit(
        action=action,
        pairing=pairing,
        defect=action - pairing,
        horizon=float(ts[-1] - ts[0]),
        meta={"segments": len(qs), "quad_nodes": len(W)},
    )


# ---------------------------------------------------------------------------
# Circle maps


def _check_circle_map(f, samples):
    xs = np.linspace(0.0, 1.0, samples)
    fx = np.array([float(f(x)) for x in xs])
    if not np.all(np.diff(fx) > 0):
        raise ValueError("map is not strictly increasing on [0, 1]")
    shifted = np.array([float(f(x + 1.0)) for x in xs[: max(samples // 4, 2)]])
    if np.max(np.abs(shifted - fx[: len(shifted)] - 1.0)) > 1e-9:
        raise ValueError("map does not commute with the unit shift")


def rotation_number(f, iterations=1000, *, x0=0.0, check_samples=33) -> float:
    """(f^N(x0) - x0) / N for a lift of a monotone circle map; the
    estimate is within 2/N of the true rotation number."""
    if iterations < 100:
        raise ValueError("need at least 100 iterations")
    _check_circle_map(f, check_samples)
    x = float(x0)
    for _ in range(iterations):
        x = float(f(x))
    return (x - float(x0)) / iterations


def rotation_defect(f, beta, *, x0=0.0, iterations=1000) -> float:
    """max over 1 <= i <= N of |f^i(x0) - f(x0) - (i-1) beta|; stays
    at most 1 when beta is the rotation number."""
    orbit = np.empty(iterations)
    x = float(x0)
    for i in range(iterations):
        x = float(f(x))
        orbit[i] = x
    steps = np.arange(iterations)
    return float(np.max(np.abs(orbit - orbit[0] - steps * beta)))
