"""Hamiltonian kinds, quadratic clamping, Lagrangian conjugates, tables."""

import numpy as np
import pytest

from hjhomog.fields import make_grid, sample
from hjhomog.hamiltonians import (
    Clamped,
    Custom,
    EffectiveTable,
    HedlundMetric,
    HomogeneousK,
    Mechanical,
    attach_conjugate,
    build_hedlund_metric,
    build_line_potential,
    clamp_quadratic,
    eval_H,
    eval_L,
    hedlund_metric_fn,
    lagrangian_view,
    legendre_table,
    line_potential_fn,
)

RNG = np.random.default_rng(7)


def vsin(y):
    return -np.sin(np.pi * y) ** 2


# ---------------------------------------------------------------------------
# evaluation


def test_eval_H_mechanical():
    spec = Mechanical(vsin, dim=1)
    assert eval_H(spec, [0.0], [1.0]) == pytest.approx(0.5)
    assert eval_H(spec, [0.5], [0.0]) == pytest.approx(-1.0)


def test_eval_H_homogeneous():
    spec = HomogeneousK(lambda y1, y2: 2.0 + 0.0 * y1, k=1.0, dim=2)
    assert eval_H(spec, [0.3, 0.7], [3.0, 4.0]) == pytest.approx(2.5)


def test_eval_H_hedlund_on_line():
    a = hedlund_metric_fn(0.1)
    spec = HedlundMetric(a, delta=0.1)
    assert eval_H(spec, [0.37, 0.0, 0.0], [1.0, 1.0, 0.0]) == pytest.approx(
        np.sqrt(2.0) / 0.1
    )


def test_eval_H_custom_matches_mechanical():
    mech = Mechanical(vsin, dim=1)
    cust = Custom(1, lambda Y, P: 0.5 * np.sum(P**2, axis=-1) + vsin(Y[..., 0]))
    for _ in range(20):
        y, p = RNG.random(1), RNG.standard_normal(1)
        assert eval_H(cust, y, p) == pytest.approx(eval_H(mech, y, p), abs=1e-12)


def test_eval_L_closed_forms():
    mech = Mechanical(lambda y: -1.0 + 0.0 * y, dim=1)
    view = lagrangian_view(mech, p_max=5.0)
    assert eval_L(view, [0.2], [1.0]) == pytest.approx(1.5)

    metric = HomogeneousK(lambda y1, y2: 2.0 + 0.0 * y1, k=1.0, dim=2)
    view = lagrangian_view(metric, p_max=5.0)
    assert eval_L(view, [0.0, 0.0], [0.3, 0.0]) == pytest.approx(0.0)
    assert eval_L(view, [0.0, 0.0], [0.6, 0.0]) == np.inf


def test_eval_L_power_law():
    # H = |p|^2 / a: conjugate is a |q|^2 / 4
    spec = HomogeneousK(lambda y: 3.0 + 0.0 * y, k=2.0, dim=1)
    view = lagrangian_view(spec, p_max=10.0)
    for q in (0.5, 1.0, 2.0):
        assert eval_L(view, [0.1], [q]) == pytest.approx(3.0 * q**2 / 4.0, rel=1e-12)


# ---------------------------------------------------------------------------
# clamping


def test_clamp_preserves_values_inside():
    spec = Mechanical(vsin, dim=1)
    cl = clamp_quadratic(spec, C0=2.0, K0=2.0)
    for p in np.linspace(-2.0, 2.0, 21):
        y = RNG.random(1)
        assert eval_H(cl, y, [p]) == pytest.approx(eval_H(spec, y, [p]), abs=1e-14)


def test_clamp_sandwich_dense_sample():
    a_fn = lambda y1, y2: 1.25 + 0.75 * np.sin(2 * np.pi * y1) * np.cos(2 * np.pi * y2)
    spec = HomogeneousK(a_fn, k=1.0, dim=2)  # a in [1/2, 2]
    cl = clamp_quadratic(spec, C0=4.0, K0=10.0)
    ys = RNG.random((40, 2))
    for r in np.linspace(0.0, 12.0, 49):
        for th in np.linspace(0.0, 2 * np.pi, 9):
            p = r * np.array([np.cos(th), np.sin(th)])
            for y in ys[:5]:
                H = eval_H(cl, y, p)
                assert 0.5 * r**2 - 10.0 - 1e-9 <= H <= 0.5 * r**2 + 10.0 + 1e-9


def test_clamp_quadratic_tail():
    spec = HomogeneousK(lambda y1, y2: 1.25 + 0.75 * np.sin(2 * np.pi * y1), k=1.0, dim=2)
    cl = clamp_quadratic(spec, C0=4.0, K0=10.0)
    # far out the |p|^2/2 - K0 branch wins
    assert eval_H(cl, [0.1, 0.2], [20.0, 0.0]) == pytest.approx(200.0 - 10.0)


def test_clamp_midpoint_convexity_on_segments():
    spec = Mechanical(vsin, dim=1)
    cl = clamp_quadratic(spec, C0=2.0, K0=2.0)
    y = np.array([0.3])
    for _ in range(200):
        p1, p2 = RNG.uniform(-8, 8, size=2)
        mid = 0.5 * (p1 + p2)
        Hm = eval_H(cl, y, [mid])
        assert Hm <= 0.5 * (eval_H(cl, y, [p1]) + eval_H(cl, y, [p2])) + 1e-10


def test_clamp_K0_too_small_raises():
    spec = Mechanical(lambda y: -5.0 + 0.0 * y, dim=1)  # needs K0 >= 5
    with pytest.raises(ValueError):
        clamp_quadratic(spec, C0=2.0, K0=2.0)
    with pytest.raises(ValueError):
        clamp_quadratic(Mechanical(vsin, dim=1), C0=2.0, K0=0.5)  # K0 <= 1


def test_clamped_radial_conjugate_vs_dense_search():
    spec = Mechanical(vsin, dim=1)
    cl = clamp_quadratic(spec, C0=2.0, K0=2.0)
    view = lagrangian_view(cl, p_max=6.0)
    p_dense = np.linspace(-8.0, 8.0, 40001)
    for _ in range(10):
        y = RNG.random(1)
        q = RNG.uniform(-3, 3)
        H_dense = np.array([eval_H(cl, y, [p]) for p in p_dense])
        # the dense search maximizes over a subset, so it lower-bounds the
        # true conjugate; its own corner error is O(grid step)
        oracle = float(np.max(p_dense * q - H_dense))
        got = eval_L(view, y, [q])
        assert oracle - 1e-9 <= got <= oracle + 5e-4


def test_fenchel_young_all_kinds():
    specs = [
        Mechanical(vsin, dim=1),
        HomogeneousK(lambda y: 1.5 + 0.5 * np.cos(2 * np.pi * y), k=2.0, dim=1),
        clamp_quadratic(Mechanical(vsin, dim=1), C0=2.0, K0=2.0),
        clamp_quadratic(
            HomogeneousK(lambda y: 1.5 + 0.5 * np.cos(2 * np.pi * y), k=1.0, dim=1),
            C0=3.0,
            K0=4.0,
        ),
        Custom(1, lambda Y, P: 0.5 * np.sum(P**2, axis=-1) + 0.3 * np.sin(2 * np.pi * Y[..., 0])),
    ]
    for spec in specs:
        view = lagrangian_view(spec, p_max=6.0)
        for _ in range(40):
            y = RNG.random(1)
            p = RNG.uniform(-2, 2, size=1)
            q = RNG.uniform(-2, 2, size=1)
            L = eval_L(view, y, q)
            if not np.isfinite(L):
                continue
            assert eval_H(spec, y, p) + L >= float(p @ q) - 1e-9


# ---------------------------------------------------------------------------
# coefficient constructors


def test_hedlund_metric_range_and_lines():
    a = hedlund_metric_fn(0.1, 0.2)
    # exactly delta on each line
    for pt in [(0.37, 0.0, 0.0), (0.0, 0.11, 0.5), (0.5, 0.5, 0.93)]:
        assert a(*pt) == pytest.approx(0.1, abs=1e-15)
    # exactly 1 + delta once all tubes are cleared
    assert a(0.25, 0.25, 0.25) == pytest.approx(1.1, abs=1e-15)
    pts = RNG.random((2000, 3))
    vals = a(pts[:, 0], pts[:, 1], pts[:, 2])
    assert np.all(vals >= 0.1 - 1e-15) and np.all(vals <= 1.1 + 1e-15)


def test_hedlund_metric_validation():
    with pytest.raises(ValueError):
        hedlund_metric_fn(0.0)
    with pytest.raises(ValueError):
        hedlund_metric_fn(0.1, 0.3)  # tubes would overlap
    f = build_hedlund_metric(0.1, 0.2, res=16)
    assert f.grid.shape == (16, 16, 16)


def test_line_potential_zero_set():
    V = line_potential_fn(1.0)
    ts = np.linspace(0, 1, 13)
    assert np.allclose(V(ts, 0.5 + 0 * ts, 0 * ts), 0.0, atol=1e-14)
    assert np.allclose(V(0 * ts, ts, 0.5 + 0 * ts), 0.0, atol=1e-14)
    assert np.allclose(V(0.5 + 0 * ts, 0 * ts, ts), 0.0, atol=1e-14)
    pts = RNG.random((2000, 3))
    vals = V(pts[:, 0], pts[:, 1], pts[:, 2])
    assert np.all(vals <= 0.0)


def test_line_potential_cyclic_symmetry():
    V = line_potential_fn(2.0)
    pts = RNG.random((200, 3))
    a = V(pts[:, 0], pts[:, 1], pts[:, 2])
    b = V(pts[:, 2], pts[:, 0], pts[:, 1])
    assert a == pytest.approx(b, abs=1e-13)


def test_line_potential_grid_min_matches_fine_search():
    # deepest well of the product form, located independently on a fine grid
    # and polished by local optimization
    from scipy.optimize import minimize

    V = line_potential_fn(1.0)
    f64 = build_line_potential(1.0, res=64)
    coarse_min = float(f64.values.min())

    g = make_grid(3, 96)
    vals = sample(V, g).values
    i0 = np.unravel_index(np.argmin(vals), vals.shape)
    x0 = np.array(i0) / 96.0
    res = minimize(lambda x: V(*x), x0, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-14})
    assert coarse_min == pytest.approx(float(res.fun), abs=2e-3)
    assert coarse_min >= float(res.fun) - 1e-12


# ---------------------------------------------------------------------------
# Legendre tables


def test_legendre_table_quadratic_self_conjugate():
    p = np.linspace(-3, 3, 301)
    q_axes, lbar = legendre_table((p,), 0.5 * p**2)
    q = q_axes[0]
    inside = np.abs(q) <= 2.0
    assert lbar[inside] == pytest.approx(0.5 * q[inside] ** 2, abs=1e-3)


def test_legendre_table_abs_indicator():
    p = np.linspace(-4, 4, 401)
    q_axes, lbar = legendre_table((p,), np.abs(p))
    q = q_axes[0]
    assert np.all(lbar[np.abs(q) <= 0.9] == pytest.approx(0.0, abs=1e-12))
    assert np.all(np.isinf(lbar[np.abs(q) >= 1.1]))


def test_legendre_table_max_norm_dual_3d():
    # Hbar = max_i |p_i| / delta has conjugate 0 on {delta * sum|q_i| <= 1}
    delta = 0.5
    ax = np.linspace(-2, 2, 21)
    P = np.meshgrid(ax, ax, ax, indexing="ij")
    hbar = np.maximum(np.maximum(np.abs(P[0]), np.abs(P[1])), np.abs(P[2])) / delta
    q_axes, lbar = legendre_table((ax, ax, ax), hbar)

    def lbar_at(q):
        tab = EffectiveTable(p_axes=(ax, ax, ax), hbar=hbar, err=np.zeros_like(hbar),
                             q_axes=q_axes, lbar=lbar)
        return tab.lbar_at(np.array(q))

    assert lbar_at([0.4, 0.4, 0.4]) == pytest.approx(0.0, abs=1e-9)   # sum = 0.6/delta
    assert lbar_at([1.9, 0.0, 0.0]) == pytest.approx(0.0, abs=1e-9)   # sum = 0.95/delta
    assert np.isinf(lbar_at([2.6, 0.0, 0.0]))
    assert np.isinf(lbar_at([1.2, 1.2, 0.0]))


def test_table_fenchel_young_and_biconjugate():
    p = np.linspace(-3, 3, 241)
    hbar = 0.5 * p**2
    q_axes, lbar = legendre_table((p,), hbar)
    tab = EffectiveTable(p_axes=(p,), hbar=hbar, err=np.zeros_like(hbar),
                         q_axes=q_axes, lbar=lbar)
    for _ in range(100):
        pp, qq = RNG.uniform(-2, 2), RNG.uniform(-1.5, 1.5)
        L = tab.lbar_at(qq)
        if np.isfinite(L):
            assert tab.hbar_at(pp) + L >= pp * qq - 1e-9
    # conjugating back recovers hbar inside the attained-slope range
    finite = np.isfinite(lbar)
    p_back, h_back = legendre_table((q_axes[0][finite],), lbar[finite])
    tab2 = EffectiveTable(p_axes=p_back, hbar=h_back, err=np.zeros_like(h_back))
    for pp in np.linspace(-1.5, 1.5, 11):
        assert tab2.hbar_at(pp) == pytest.approx(0.5 * pp**2, abs=5e-2)


def test_table_interp_poisons_infinite_cells():
    p = np.linspace(-1, 1, 11)
    tab = EffectiveTable(p_axes=(p,), hbar=np.abs(p), err=np.zeros_like(p))
    attach_conjugate(tab)
    assert np.isfinite(tab.lbar_at(0.0))
    assert np.isinf(tab.lbar_at(tab.q_axes[0][-1]))


# ---------------------------------------------------------------------------
# a priori bounds


def test_lipschitz_radius_mechanical():
    spec = Mechanical(vsin, dim=1)  # V in [-1, 0]
    C0 = spec.lipschitz_radius(1.0)
    # sup H over the data ball is 1/2 + max V = 1/2, and the confinement
    # p^2/2 + min V <= 1/2 gives radius sqrt(3)
    assert C0 == pytest.approx(np.sqrt(3.0))


def test_grad_p_sup():
    assert Mechanical(vsin, dim=1).grad_p_sup(2.0) == pytest.approx([2.0])
    spec = HomogeneousK(lambda y1, y2: 0.5 + 0.0 * y1, k=1.0, dim=2)
    assert spec.grad_p_sup(3.0) == pytest.approx([2.0, 2.0])


def test_custom_lipschitz_radius_is_valid_bound():
    # the sampled route must land on the same sqrt(3) confinement the
    # closed form gives, modulo its deliberate safety padding
    cust = Custom(1, lambda Y, P: 0.5 * np.sum(P**2, axis=-1) + vsin(Y[..., 0]))
    r = cust.lipschitz_radius(1.0)
    exact = Mechanical(vsin, dim=1).lipschitz_radius(1.0)
    assert exact * 0.99 <= r <= exact * 1.15
