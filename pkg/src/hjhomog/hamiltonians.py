"""Hamiltonian catalog: convex, coercive H(y, p), periodic in y.

Four kinds cover the experiments:

  * Mechanical        H = |p|^2/2 + V(y)
  * HomogeneousK      H = |p|^k / a(y),  k >= 1 (positively homogeneous)
  * HedlundMetric     degree-1 metric Hamiltonian |p|/a(y) whose fast lines
                      realize a prescribed effective Hamiltonian max_i|p_i|/delta
  * Custom            arbitrary vectorized evaluator

`clamp_quadratic` replaces a spec outside |p| <= C0 by a convex splice that is
pinched between |p|^2/2 - K0 and |p|^2/2 + K0, so growth-sensitive machinery
(Lagrangian conjugates, action audits) sees uniform quadratic behaviour while
values on the working gradient range are untouched.

Lagrangians are exposed through `LagrangianView`/`eval_L`: closed forms where
the kind admits one, otherwise a numeric Legendre transform (radial 1D scan
for radial kinds, full p-grid search for Custom).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from hjhomog.fields import Grid, PeriodicField, interp, make_grid, sample

_TIE = 1e-12


def _eval_coeff(data, comps):
    """Evaluate a PeriodicField or a callable at component coordinate arrays."""
    if isinstance(data, PeriodicField):
        pts = np.stack([np.asarray(c, dtype=float).ravel() for c in comps], axis=-1)
        out = interp(data, pts if data.dim > 1 else pts[:, 0])
        return np.asarray(out).reshape(np.shape(comps[0]))
    return np.asarray(data(*comps), dtype=float)


def _coeff_range(data, dim):
    """(min, max) of a coefficient over the torus; exact at nodes for fields."""
    if isinstance(data, PeriodicField):
        return float(data.values.min()), float(data.values.max())
    res = {1: 4096, 2: 512, 3: 128}[dim]
    g = make_grid(dim, res)
    vals = _eval_coeff(data, g.meshes())
    return float(vals.min()), float(vals.max())


class Hamiltonian:
    """Base class; subclasses fill in the vectorized evaluation protocol."""

    dim: int
    kind: str

    def node_coef(self, comps) -> np.ndarray:
        """Per-point scalar data (V or 1/a) precomputed once by solvers."""
        raise NotImplementedError

    def h_from_coef(self, coef, p_comps) -> np.ndarray:
        """Vectorized H given node_coef output and gradient components."""
        raise NotImplementedError

    def h(self, y, p) -> float:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        p = np.atleast_1d(np.asarray(p, dtype=float))
        coef = self.node_coef(tuple(y[i] for i in range(self.dim)))
        return float(self.h_from_coef(coef, tuple(p[i] for i in range(self.dim))))

    def grad_p_sup(self, box: float) -> np.ndarray:
        """Per-axis sup of |dH/dp_i| over y and |p_j| <= box (componentwise)."""
        raise NotImplementedError

    def lipschitz_radius(self, lip_g: float) -> float:
        """A priori gradient bound for the evolution with Lip(g) = lip_g.

        u_t is transported along characteristics, so it never falls below
        its initial minimum and H(y, Du) = -u_t stays below
        M := sup{H(y,p) : |p| <= lip_g}; coercivity then confines |Du| to
        {min_y H(y, .) <= M}.  One-sided: only the sup of H enters, not
        sup |H|.
        """
        raise NotImplementedError


class Mechanical(Hamiltonian):
    """H(y, p) = |p|^2/2 + V(y) with V periodic (field or callable)."""

    kind = "mechanical"

    def __init__(self, V, dim: int | None = None):
        if isinstance(V, PeriodicField):
            self.dim = V.dim
        else:
            if dim is None:
                raise ValueError("dim is required when V is a callable")
            self.dim = dim
        self.V = V

    @cached_property
    def v_range(self) -> tuple[float, float]:
        return _coeff_range(self.V, self.dim)

    def node_coef(self, comps):
        return _eval_coeff(self.V, comps)

    def h_from_coef(self, coef, p_comps):
        sq = sum(np.asarray(c) ** 2 for c in p_comps)
        return 0.5 * sq + coef

    def grad_p_sup(self, box):
        return np.full(self.dim, float(box))

    def lipschitz_radius(self, lip_g):
        vmin, vmax = self.v_range
        M = 0.5 * lip_g**2 + vmax
        return max(lip_g, np.sqrt(2.0 * (M - vmin)))


class HomogeneousK(Hamiltonian):
    """H(y, p) = |p|^k / a(y) with a periodic and bounded away from zero."""

    kind = "homogeneous"

    def __init__(self, a, k: float = 1.0, dim: int | None = None):
        if k < 1:
            raise ValueError(f"degree k must be >= 1, got {k}")
        if isinstance(a, PeriodicField):
            self.dim = a.dim
        else:
            if dim is None:
                raise ValueError("dim is required when a is a callable")
            self.dim = dim
        self.a = a
        self.k = float(k)
        amin, amax = _coeff_range(a, self.dim)
        if amin <= 0:
            raise ValueError(f"a must be positive, found min {amin}")
        self.a_range = (amin, amax)

    def node_coef(self, comps):
        return 1.0 / _eval_coeff(self.a, comps)

    def h_from_coef(self, coef, p_comps):
        sq = sum(np.asarray(c) ** 2 for c in p_comps)
        if self.k == 1.0:
            return np.sqrt(sq) * coef
        return sq ** (self.k / 2.0) * coef

    def grad_p_sup(self, box):
        amin = self.a_range[0]
        if self.k == 1.0:
            return np.full(self.dim, 1.0 / amin)
        r = box * np.sqrt(self.dim)
        return np.full(self.dim, self.k * r ** (self.k - 1.0) / amin)

    def lipschitz_radius(self, lip_g):
        amin, amax = self.a_range
        M = lip_g**self.k / amin
        return max(lip_g, (M * amax) ** (1.0 / self.k))


class HedlundMetric(HomogeneousK):
    """Degree-1 metric Hamiltonian |p|/a with fast tubes of speed 1/delta."""

    kind = "hedlund"

    def __init__(self, a, delta: float):
        super().__init__(a, k=1.0, dim=3)
        self.delta = float(delta)


class Custom(Hamiltonian):
    """Arbitrary H via evaluator(Y, P) on stacked (..., dim) arrays."""

    kind = "custom"

    def __init__(self, dim: int, evaluator, grad_bound=None):
        self.dim = dim
        self.evaluator = evaluator
        self._grad_bound = grad_bound  # optional callable box -> per-axis sup

    def node_coef(self, comps):
        return np.stack([np.asarray(c, dtype=float) for c in comps], axis=-1)

    def h_from_coef(self, coef, p_comps):
        shape = np.broadcast_shapes(coef.shape[:-1], *[np.shape(c) for c in p_comps])
        Y = np.broadcast_to(coef, shape + (self.dim,))
        P = np.stack([np.broadcast_to(np.asarray(c, dtype=float), shape)
                      for c in p_comps], axis=-1)
        return np.asarray(self.evaluator(Y, P), dtype=float)

    def _y_samples(self, n=None):
        if n is None:
            n = {1: 65, 2: 17, 3: 9}[self.dim]
        g = make_grid(self.dim, n)
        return np.stack([m.ravel() for m in g.meshes()], axis=-1)

    def grad_p_sup(self, box):
        if self._grad_bound is not None:
            return np.asarray(self._grad_bound(box), dtype=float) * np.ones(self.dim)
        # sampled central differences over a (y, p) product cloud
        Y = self._y_samples()[:, None, :]
        axes = [np.linspace(-box, box, 9)] * self.dim
        P = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)[None, :, :]
        dp = 1e-4 * max(box, 1.0)
        out = np.zeros(self.dim)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = dp
            d = (self.evaluator(Y, P + e) - self.evaluator(Y, P - e)) / (2 * dp)
            out[i] = float(np.max(np.abs(d)))
        return out * 1.05

    def lipschitz_radius(self, lip_g):
        Y = self._y_samples()
        dirs = _unit_directions(self.dim)
        M = 0.0
        for u in dirs:
            P = np.outer(np.linspace(0, lip_g, 17), u)
            vals = self.evaluator(Y[:, None, :], P[None, :, :])
            M = max(M, float(np.max(vals)))
        # bisect the coercivity radius per direction; the sampled min over y
        # can overshoot the true one, so pad the result
        radius = lip_g
        for u in dirs:
            lo, hi = lip_g, max(2.0 * lip_g, 2.0)
            for _ in range(60):
                vals = self.evaluator(Y, np.broadcast_to(hi * u, Y.shape))
                if float(vals.min()) > M:
                    break
                hi *= 2.0
            else:
                raise ValueError("could not bracket the coercivity radius")
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                vals = self.evaluator(Y, np.broadcast_to(mid * u, Y.shape))
                if float(vals.min()) > M:
                    hi = mid
                else:
                    lo = mid
            radius = max(radius, hi)
        return 1.1 * radius


def _unit_directions(dim):
    if dim == 1:
        return [np.array([1.0]), np.array([-1.0])]
    dirs = []
    for i in range(dim):
        for s in (1.0, -1.0):
            e = np.zeros(dim)
            e[i] = s
            dirs.append(e)
    diag = np.ones(dim) / np.sqrt(dim)
    dirs += [diag, -diag]
    return dirs


class Clamped(Hamiltonian):
    """Quadratic clamp of a base spec outside |p| <= C0.

    For |p| > C0:  H = max(H(y, C0 p/|p|) + m (|p| - C0), |p|^2/2 - K0)
    with m the sup over y (and directions) of the radial slope at |p| = C0.
    Values inside the ball are untouched; the result satisfies
    |p|^2/2 - K0 <= H <= |p|^2/2 + K0 everywhere.
    """

    kind = "clamped"

    def __init__(self, base: Hamiltonian, C0: float, K0: float):
        if K0 <= 1.0:
            raise ValueError(f"K0 must exceed 1, got {K0}")
        if C0 <= 0:
            raise ValueError(f"C0 must be positive, got {C0}")
        self.base = base
        self.dim = base.dim
        self.C0 = float(C0)
        self.K0 = float(K0)
        self.m = self._radial_slope_sup()
        self._check_sandwich()

    def _radial_slope_sup(self) -> float:
        if isinstance(self.base, Mechanical):
            return self.C0
        if isinstance(self.base, HomogeneousK):
            return self.base.k * self.C0 ** (self.base.k - 1.0) / self.base.a_range[0]
        dr = 1e-5 * self.C0
        m = 0.0
        Y = self.base._y_samples() if isinstance(self.base, Custom) else None
        for u in _unit_directions(self.dim):
            hi = self.base.evaluator(Y, np.broadcast_to(self.C0 * u, Y.shape))
            lo = self.base.evaluator(Y, np.broadcast_to((self.C0 - dr) * u, Y.shape))
            m = max(m, float(np.max((hi - lo) / dr)))
        return m

    def _sample_pairs(self):
        """(coef, |p| radii) grids covering y x {|p| <= C0} densely enough."""
        if isinstance(self.base, Mechanical):
            vmin, vmax = self.base.v_range
            coef = np.array([vmin, vmax])
        elif isinstance(self.base, HomogeneousK):
            coef = 1.0 / np.array(self.base.a_range)
        else:
            coef = None
        radii = np.linspace(0.0, self.C0, 257)
        return coef, radii

    def _check_sandwich(self):
        coef, radii = self._sample_pairs()
        if coef is not None:
            H = self.base.h_from_coef(coef[:, None], _radial_p(radii, self.dim, coef[:, None]))
            gap_hi = H - (0.5 * radii**2 + self.K0)
            gap_lo = (0.5 * radii**2 - self.K0) - H
        else:
            Y = self.base._y_samples()
            worst_hi, worst_lo = -np.inf, -np.inf
            for u in _unit_directions(self.dim):
                P = radii[:, None] * u
                for y in Y:
                    H = self.base.evaluator(np.broadcast_to(y, P.shape), P)
                    worst_hi = max(worst_hi, float(np.max(H - (0.5 * radii**2 + self.K0))))
                    worst_lo = max(worst_lo, float(np.max((0.5 * radii**2 - self.K0) - H)))
            gap_hi, gap_lo = np.array([worst_hi]), np.array([worst_lo])
        if float(np.max(gap_hi)) > 1e-9 or float(np.max(gap_lo)) > 1e-9:
            raise ValueError(
                f"K0={self.K0} too small to bracket H between |p|^2/2 -+ K0 on |p| <= C0={self.C0}"
            )

    def node_coef(self, comps):
        return self.base.node_coef(comps)

    def phi_radial(self, coef, r):
        """H as a function of |p| = r for radial-over-coef base kinds."""
        base = self.base
        if isinstance(base, Mechanical):
            inner = 0.5 * r**2 + coef
            edge = 0.5 * self.C0**2 + coef
        elif isinstance(base, HomogeneousK):
            inner = r**base.k * coef
            edge = self.C0**base.k * coef
        else:
            raise TypeError("phi_radial needs a radial base kind")
        outer = np.maximum(edge + self.m * (r - self.C0), 0.5 * r**2 - self.K0)
        return np.where(r <= self.C0, inner, outer)

    def h_from_coef(self, coef, p_comps):
        r = np.sqrt(sum(np.asarray(c) ** 2 for c in p_comps))
        if isinstance(self.base, (Mechanical, HomogeneousK)):
            return self.phi_radial(coef, r)
        inner = self.base.h_from_coef(coef, p_comps)
        scale = np.where(r > self.C0, self.C0 / np.maximum(r, 1e-300), 1.0)
        edge = self.base.h_from_coef(coef, tuple(np.asarray(c) * scale for c in p_comps))
        outer = np.maximum(edge + self.m * (r - self.C0), 0.5 * r**2 - self.K0)
        return np.where(r <= self.C0, inner, outer)

    def grad_p_sup(self, box):
        inner = self.base.grad_p_sup(min(box, self.C0))
        if box <= self.C0:
            return inner
        return np.maximum(inner, max(self.m, box * np.sqrt(self.dim)))

    def lipschitz_radius(self, lip_g):
        return self.base.lipschitz_radius(lip_g)


def _radial_p(radii, dim, like):
    """Components of radii * e_1 broadcast against a coef array."""
    shape = np.broadcast_shapes(np.shape(like), np.shape(radii))
    comps = [np.broadcast_to(radii, shape)]
    comps += [np.zeros(shape)] * (dim - 1)
    return tuple(comps)


def eval_H(spec: Hamiltonian, y, p) -> float:
    return spec.h(y, p)


def clamp_quadratic(spec: Hamiltonian, C0: float, K0: float) -> Clamped:
    if isinstance(spec, Clamped):
        raise ValueError("spec is already clamped")
    return Clamped(spec, C0, K0)


# ---------------------------------------------------------------------------
# Lagrangians

@dataclass(frozen=True)
class LagrangianView:
    """Conjugate access L(y, q) = sup_p (p.q - H(y, p)) for one spec.

    p_max bounds the search radius of numeric conjugates; +inf is returned
    when the sup is attained on the search boundary (slope out of range) or
    when the kind's true Lagrangian is infinite there.
    """

    spec: Hamiltonian
    p_max: float
    n_radial: int = 1537

    def eval_many(self, y_comps, q_comps) -> np.ndarray:
        return _lagrangian_many(self, y_comps, q_comps)


def lagrangian_view(spec: Hamiltonian, p_max: float) -> LagrangianView:
    if p_max <= 0:
        raise ValueError(f"p_max must be positive, got {p_max}")
    return LagrangianView(spec, float(p_max))


def eval_L(view: LagrangianView, y, q) -> float:
    y = np.atleast_1d(np.asarray(y, dtype=float))
    q = np.atleast_1d(np.asarray(q, dtype=float))
    out = _lagrangian_many(view, tuple(y[i] for i in range(view.spec.dim)),
                           tuple(q[i] for i in range(view.spec.dim)))
    return float(out)


def _lagrangian_many(view, y_comps, q_comps):
    spec = view.spec
    qn = np.sqrt(sum(np.asarray(c, dtype=float) ** 2 for c in q_comps))
    if isinstance(spec, Mechanical):
        V = _eval_coeff(spec.V, y_comps)
        return 0.5 * qn**2 - V
    if isinstance(spec, HomogeneousK):
        a = _eval_coeff(spec.a, y_comps)
        k = spec.k
        if k == 1.0:
            return np.where(qn <= 1.0 / a + _TIE, 0.0, np.inf)
        ck = (k - 1.0) * k ** (-k / (k - 1.0))
        return ck * a ** (1.0 / (k - 1.0)) * qn ** (k / (k - 1.0))
    if isinstance(spec, Clamped) and isinstance(spec.base, (Mechanical, HomogeneousK)):
        coef = spec.node_coef(y_comps)
        return _radial_conjugate(spec, coef, qn)
    return _grid_conjugate(spec, y_comps, q_comps, view.p_max)


def _radial_conjugate(spec: Clamped, coef, qn):
    """sup_r (r s - phi(r)) for radial clamped kinds, vectorized and chunked."""
    shape = np.broadcast_shapes(np.shape(coef), np.shape(qn))
    coef = np.broadcast_to(np.asarray(coef, dtype=float), shape).ravel()
    s = np.broadcast_to(np.asarray(qn, dtype=float), shape).ravel()
    # beyond r* = s + sqrt(2 K0 + s^2) the quadratic branch decreases r s - phi
    rmax = max(2.0 * spec.C0, float(s.max(initial=0.0)) + np.sqrt(2.0 * spec.K0) + 2.0)
    r = np.linspace(0.0, rmax, 1537)
    out = np.empty(s.shape)
    for lo in range(0, s.size, 2048):
        hi = min(lo + 2048, s.size)
        sv = s[lo:hi, None]
        cv = coef[lo:hi, None]
        vals = r[None, :] * sv - spec.phi_radial(cv, r[None, :])
        best = np.argmax(vals, axis=1)
        cur = vals[np.arange(hi - lo), best]
        # refine around the argmax: the profile has corners, where a fixed
        # grid is only first-order accurate
        center = r[best]
        width = rmax / 1536.0
        for _ in range(3):
            loc = center[:, None] + np.linspace(-width, width, 41)[None, :]
            np.clip(loc, 0.0, rmax, out=loc)
            lv = loc * sv - spec.phi_radial(cv, loc)
            j = np.argmax(lv, axis=1)
            center = loc[np.arange(hi - lo), j]
            cur = np.maximum(cur, lv[np.arange(hi - lo), j])
            width /= 18.0
        out[lo:hi] = cur
    return out.reshape(shape) if shape else float(out[0])


def _grid_conjugate(spec, y_comps, q_comps, p_max):
    """Full p-grid conjugate for Custom kinds; boundary-attained -> +inf."""
    dim = spec.dim
    n = {1: 513, 2: 65, 3: 25}[dim]
    axes = [np.linspace(-p_max, p_max, n)] * dim
    P = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
    interior = np.ones(len(P), dtype=bool).reshape((n,) * dim)
    for ax in range(dim):
        sl = [slice(None)] * dim
        sl[ax] = 0
        interior[tuple(sl)] = False
        sl[ax] = n - 1
        interior[tuple(sl)] = False
    interior = interior.ravel()

    shape = np.broadcast_shapes(*[np.shape(c) for c in q_comps],
                                *[np.shape(c) for c in y_comps])
    Q = np.stack([np.broadcast_to(np.asarray(c, dtype=float), shape).ravel()
                  for c in q_comps], axis=-1)
    Y = np.stack([np.broadcast_to(np.asarray(c, dtype=float), shape).ravel()
                  for c in y_comps], axis=-1)
    out = np.empty(len(Q))
    for j in range(len(Q)):
        Yb = np.broadcast_to(Y[j], P.shape)
        vals = P @ Q[j] - np.asarray(spec.h_from_coef(spec.node_coef(tuple(Yb.T)), tuple(P.T)))
        best_all = float(vals.max())
        best_int = float(vals[interior].max())
        out[j] = best_int if best_all <= best_int + _TIE * max(1.0, abs(best_int)) else np.inf
    return out.reshape(shape) if shape else float(out[0])


# ---------------------------------------------------------------------------
# Concrete coefficient constructors

def _smoothstep(x):
    """C^2 ramp: 0 below 0, 1 above 1, 6x^5 - 15x^4 + 10x^3 between."""
    t = np.clip(x, 0.0, 1.0)
    return t**3 * (t * (6.0 * t - 15.0) + 10.0)


def _circle_dist(t, c):
    return np.abs(np.mod(t - c + 0.5, 1.0) - 0.5)


def hedlund_metric_fn(delta: float, tube_radius: float = 0.2):
    """Callable a(y1,y2,y3): delta exactly on the three disjoint fast lines
    (R,0,0), (0,R,1/2), (1/2,1/2,R) mod Z^3, rising to 1 + delta outside
    tubes of the given radius.  Pairwise line distance is 1/2, so radii
    up to 0.2 keep the tubes disjoint."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if not delta < tube_radius <= 0.2:
        raise ValueError(f"need delta < tube_radius <= 0.2, got {tube_radius}")

    def a(y1, y2, y3):
        r1 = np.sqrt(_circle_dist(y2, 0.0) ** 2 + _circle_dist(y3, 0.0) ** 2)
        r2 = np.sqrt(_circle_dist(y1, 0.0) ** 2 + _circle_dist(y3, 0.5) ** 2)
        r3 = np.sqrt(_circle_dist(y1, 0.5) ** 2 + _circle_dist(y2, 0.5) ** 2)
        prod = (_smoothstep(r1 / tube_radius)
                * _smoothstep(r2 / tube_radius)
                * _smoothstep(r3 / tube_radius))
        return delta + prod

    return a


def build_hedlund_metric(delta: float, tube_radius: float = 0.2, res: int = 64) -> PeriodicField:
    return sample(hedlund_metric_fn(delta, tube_radius), make_grid(3, res))


HEDLUND_LINES = (
    ((1, 2), (0.0, 0.0)),   # (t, 0, 0): transverse axes 1,2 at (0, 0)
    ((0, 2), (0.0, 0.5)),   # (0, t, 1/2)
    ((0, 1), (0.5, 0.5)),   # (1/2, 1/2, t)
)


def line_potential_fn(beta: float):
    """Callable V <= 0 on T^3 vanishing exactly on the three pairwise
    disjoint lines (t,1/2,0), (0,t,1/2), (1/2,0,t) mod Z^3:
    V = -beta * d1 * d2 * d3 with sin^2 transverse profiles."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")

    def V(y1, y2, y3):
        d1 = np.sin(np.pi * (y2 - 0.5)) ** 2 + np.sin(np.pi * y3) ** 2
        d2 = np.sin(np.pi * y1) ** 2 + np.sin(np.pi * (y3 - 0.5)) ** 2
        d3 = np.sin(np.pi * (y1 - 0.5)) ** 2 + np.sin(np.pi * y2) ** 2
        return -beta * d1 * d2 * d3

    return V


def build_line_potential(beta: float, res: int = 64) -> PeriodicField:
    return sample(line_potential_fn(beta), make_grid(3, res))


POTENTIAL_LINES = (
    ((1, 2), (0.5, 0.0)),   # (t, 1/2, 0): transverse axes 1,2 at (1/2, 0)
    ((0, 2), (0.0, 0.5)),   # (0, t, 1/2)
    ((0, 1), (0.5, 0.0)),   # (1/2, 0, t)
)


# ---------------------------------------------------------------------------
# Effective tables and the Legendre transform on grids

@dataclass
class EffectiveTable:
    """Sampled effective Hamiltonian with per-node error bounds and its
    numeric conjugate (lbar has +inf where the max was boundary-attained)."""

    p_axes: tuple
    hbar: np.ndarray
    err: np.ndarray
    q_axes: tuple = ()
    lbar: np.ndarray = field(default_factory=lambda: np.zeros(0))
    method: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.p_axes)

    def hbar_at(self, p) -> np.ndarray | float:
        return _table_interp(self.p_axes, self.hbar, p)

    def lbar_at(self, q) -> np.ndarray | float:
        if len(self.q_axes) == 0:
            raise ValueError("table has no conjugate; run legendre_table first")
        return _table_interp(self.q_axes, self.lbar, q)

    def q_sup(self) -> float:
        """Largest |q| with finite lbar, i.e. the attained slope range."""
        finite = np.isfinite(self.lbar)
        if not finite.any():
            return 0.0
        meshes = np.meshgrid(*self.q_axes, indexing="ij")
        r = np.sqrt(sum(m**2 for m in meshes))
        return float(r[finite].max())


def _table_interp(axes, values, x):
    x = np.asarray(x, dtype=float)
    dim = len(axes)
    scalar_in = x.ndim == 0 if dim == 1 else x.ndim == 1
    pts = np.atleast_1d(x).reshape(-1, 1) if dim == 1 else x.reshape(-1, dim)
    idx, frac = [], []
    for ax in range(dim):
        a = axes[ax]
        t = np.clip(pts[:, ax], a[0], a[-1])
        i = np.clip(np.searchsorted(a, t, side="right") - 1, 0, len(a) - 2)
        idx.append(i)
        frac.append((t - a[i]) / (a[i + 1] - a[i]))
    out = np.zeros(len(pts))
    for corner in range(1 << dim):
        w = np.ones(len(pts))
        sel = []
        for ax in range(dim):
            if corner >> ax & 1:
                sel.append(idx[ax] + 1)
                w *= frac[ax]
            else:
                sel.append(idx[ax])
                w *= 1.0 - frac[ax]
        v = values[tuple(sel)]
        # any infinite corner with positive weight poisons the cell
        out = out + np.where((w > 0) & ~np.isfinite(v), np.inf, w * np.where(np.isfinite(v), v, 0.0))
    return float(out[0]) if scalar_in else out


def legendre_table(p_axes, hbar, q_axes=None):
    """Discrete Legendre transform: Lbar(q) = max_p (p.q - Hbar(p)).

    Returns (q_axes, lbar).  Entries whose maximum is attained strictly on
    the p-grid boundary are +inf (true conjugate lies outside the table).
    """
    p_axes = tuple(np.asarray(a, dtype=float) for a in p_axes)
    hbar = np.asarray(hbar, dtype=float)
    dim = len(p_axes)
    if hbar.shape != tuple(len(a) for a in p_axes):
        raise ValueError("hbar shape does not match p_axes")
    if q_axes is None:
        q_axes = []
        for ax in range(dim):
            sl = np.abs(np.diff(hbar, axis=ax) / _axis_steps(p_axes[ax], hbar.ndim, ax))
            qmax = float(sl.max()) if sl.size else 1.0
            qmax = max(qmax * 1.1, 1e-6)
            q_axes.append(np.linspace(-qmax, qmax, 2 * len(p_axes[ax]) + 1))
    q_axes = tuple(np.asarray(a, dtype=float) for a in q_axes)

    meshes = np.meshgrid(*p_axes, indexing="ij")
    P = np.stack([m.ravel() for m in meshes], axis=-1)
    hflat = hbar.ravel()
    interior = np.ones(hbar.shape, dtype=bool)
    for ax in range(dim):
        sl = [slice(None)] * dim
        sl[ax] = 0
        interior[tuple(sl)] = False
        sl[ax] = -1
        interior[tuple(sl)] = False
    interior = interior.ravel()
    has_interior = bool(interior.any())

    qmeshes = np.meshgrid(*q_axes, indexing="ij")
    Q = np.stack([m.ravel() for m in qmeshes], axis=-1)
    lbar = np.empty(len(Q))
    scale = max(1.0, float(np.abs(hflat).max()))
    for lo in range(0, len(Q), 256):
        hi = min(lo + 256, len(Q))
        vals = Q[lo:hi] @ P.T - hflat[None, :]
        best_all = vals.max(axis=1)
        if has_interior:
            best_int = vals[:, interior].max(axis=1)
        else:
            best_int = np.full(hi - lo, -np.inf)
        lbar[lo:hi] = np.where(best_all > best_int + _TIE * scale, np.inf, best_int)
    return q_axes, lbar.reshape(tuple(len(a) for a in q_axes))


def _axis_steps(axis, ndim, ax):
    steps = np.diff(axis)
    shape = [1] * ndim
    shape[ax] = len(steps)
    return steps.reshape(shape)


def attach_conjugate(table: EffectiveTable, q_axes=None) -> EffectiveTable:
    qa, lbar = legendre_table(table.p_axes, table.hbar, q_axes)
    table.q_axes = qa
    table.lbar = lbar
    return table
