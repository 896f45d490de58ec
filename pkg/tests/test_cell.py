"""Effective-Hamiltonian estimators against independent oracles: scipy
quadrature + root finding for the exact 1D route, closed forms for flat
Hamiltonians, separable splitting in 2D, and cross-method agreement."""

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from hjhomog.cell import (
    CellEstimate,
    build_effective_table,
    effective_H_1d_mechanical,
    effective_H_discounted,
    effective_H_large_time,
    effective_gradient_1d,
    flat_part_radius_1d,
    load_table,
    save_table,
)
from hjhomog.hamiltonians import Mechanical, clamp_quadratic

RNG = np.random.default_rng(20260816)


def vwell(y):
    return -np.sin(np.pi * np.asarray(y)) ** 2


def _random_potential(rng):
    a1, a2 = rng.uniform(0.2, 0.8), rng.uniform(0.0, 0.4)
    ph1, ph2 = rng.uniform(0, 1, 2)

    def V(y):
        y = np.asarray(y)
        return a1 * np.sin(2 * np.pi * (y + ph1)) + a2 * np.cos(4 * np.pi * (y + ph2))

    return V


def test_quadrature_flat_part_radius_closed_form():
    # int_0^1 sqrt(2) |sin(pi y)| dy = 2 sqrt(2) / pi; the integrand has a
    # corner at the max, so the trapezoid rule is second order here
    assert flat_part_radius_1d(vwell) == pytest.approx(2.0 * np.sqrt(2.0) / np.pi, abs=1e-7)
    assert flat_part_radius_1d(vwell, quad_n=1 << 16) == pytest.approx(
        2.0 * np.sqrt(2.0) / np.pi, abs=2e-9)


def test_quadrature_flat_part_value():
    assert effective_H_1d_mechanical(vwell, 0.0) == 0.0
    assert effective_H_1d_mechanical(vwell, 0.5) == 0.0
    assert effective_H_1d_mechanical(vwell, -0.9) == 0.0


def test_quadrature_against_scipy_oracle():
    # independent route: adaptive quadrature + Brent root finding
    for p in (1.2, 1.5, -2.0):
        def g_root(lam, pn=abs(p)):
            val = quad(lambda y: np.sqrt(2.0 * (lam + np.sin(np.pi * y) ** 2)),
                       0.0, 1.0, limit=200)[0]
            return val - pn

        oracle = brentq(g_root, 1e-12, 0.5 * (abs(p) + 1) ** 2 + 1, xtol=1e-13)
        got = effective_H_1d_mechanical(vwell, p)
        assert got == pytest.approx(oracle, abs=5e-9)


def test_quadrature_flat_hamiltonian_trivial():
    assert effective_H_1d_mechanical(lambda y: np.zeros(np.shape(y)), 1.0) == pytest.approx(0.5, abs=1e-10)


def test_large_time_flat_hamiltonian_exact():
    spec = Mechanical(lambda y: np.zeros(np.shape(y)), dim=1)
    est = effective_H_large_time(spec, (1.0,), T=10.0, res=32)
    assert est.hbar == pytest.approx(0.5, abs=1e-12)
    assert est.error_bound <= 1e-12
    assert est.method == "large_time"


def test_large_time_requires_minimum_horizon():
    spec = Mechanical(vwell, dim=1)
    with pytest.raises(ValueError):
        effective_H_large_time(spec, (1.0,), T=4.0, res=32)


def test_large_time_agrees_with_quadrature_within_bound():
    # six draws from the randomized family used by the acceptance suite
    rng = np.random.default_rng(20260816)
    for _ in range(6):
        V = _random_potential(rng)
        p = rng.uniform(-2.2, 2.2)
        exact = effective_H_1d_mechanical(V, p)
        est = effective_H_large_time(Mechanical(V, dim=1), (p,), T=16.0, res=4096)
        assert abs(est.hbar - exact) <= est.error_bound


def test_large_time_adaptive_horizon_tightens():
    spec = Mechanical(vwell, dim=1)
    loose = effective_H_large_time(spec, (1.5,), T=10.0, res=64)
    tight = effective_H_large_time(spec, (1.5,), T=10.0, res=64,
                                   tol=loose.error_bound / 4, max_doublings=6)
    assert tight.error_bound <= loose.error_bound / 4
    assert tight.meta["T"] > loose.meta["T"]


def test_discounted_flat_hamiltonian_exact():
    spec = Mechanical(lambda y: np.zeros(np.shape(y)), dim=1)
    est = effective_H_discounted(spec, (1.0,), lam=0.01, res=32)
    assert est.hbar == pytest.approx(0.5, abs=1e-9)
    assert est.error_bound <= 1e-9


def test_discounted_refines_with_discount():
    spec = Mechanical(vwell, dim=1)
    exact = effective_H_1d_mechanical(vwell, 1.5)
    bounds = []
    for lam in (0.1, 0.03, 0.01):
        est = effective_H_discounted(spec, (1.5,), lam=lam, res=64)
        assert abs(est.hbar - exact) <= est.error_bound + 5e-3
        bounds.append(est.error_bound)
    assert bounds[2] < bounds[1] < bounds[0]


def test_discounted_validates_rate_and_budget():
    spec = Mechanical(vwell, dim=1)
    with pytest.raises(ValueError):
        effective_H_discounted(spec, (1.0,), lam=0.0, res=32)
    with pytest.raises(RuntimeError):
        effective_H_discounted(spec, (1.0,), lam=0.01, res=32, max_steps=5)


def test_methods_agree_on_shared_grid():
    # both PDE routes see the same discrete operator, so their difference
    # is covered by the summed bounds even where the scheme is biased
    rng = np.random.default_rng(4)
    for _ in range(5):
        V = _random_potential(rng)
        p = rng.uniform(-2.0, 2.0)
        spec = Mechanical(V, dim=1)
        lt = effective_H_large_time(spec, (p,), T=32.0, res=64)
        dc = effective_H_discounted(spec, (p,), lam=0.01, res=64)
        assert abs(lt.hbar - dc.hbar) <= lt.error_bound + dc.error_bound + 1e-3


def test_separable_two_dimensional_splitting():
    # V(y1, y2) = V1(y1) + V2(y2) splits the cell problem coordinate-wise
    V1 = lambda y: -0.4 * np.sin(np.pi * y) ** 2
    V2 = lambda y: 0.3 * np.cos(2 * np.pi * y)

    def V(y1, y2):
        return V1(np.asarray(y1)) + V2(np.asarray(y2))

    p = (1.6, 1.3)
    expected = effective_H_1d_mechanical(V1, p[0]) + effective_H_1d_mechanical(V2, p[1])
    est = effective_H_large_time(Mechanical(V, dim=2), p, T=32.0, res=64)
    assert abs(est.hbar - expected) <= est.error_bound + 5e-3


def test_minmax_bracket_at_zero_slope():
    # min_p Hbar = Hbar(0) = max V for mechanical specs
    V = _random_potential(np.random.default_rng(11))
    vmax = float(np.max(V(np.linspace(0, 1, 1 << 16, endpoint=False))))
    assert effective_H_1d_mechanical(V, 0.0) == pytest.approx(vmax, abs=1e-7)
    est = effective_H_large_time(Mechanical(V, dim=1), (0.0,), T=16.0, res=2048)
    assert est.hbar <= vmax + est.error_bound
    assert est.hbar >= vmax - est.error_bound - 2e-2  # scheme bias is one-sided here


def test_clamped_estimate_stays_in_quadratic_window():
    base = Mechanical(vwell, dim=1)
    spec = clamp_quadratic(base, C0=3.0, K0=6.0)
    est = effective_H_large_time(spec, (1.5,), T=16.0, res=64)
    half = 0.5 * 1.5**2
    assert half - 6.0 <= est.hbar <= half + 6.0
    # clamp is inactive at this slope, so the value matches the raw spec
    raw = effective_H_large_time(base, (1.5,), T=16.0, res=64)
    assert est.hbar == pytest.approx(raw.hbar, abs=1e-10)


def test_effective_gradient_match_finite_differences():
    for p in (1.2, 1.7, -1.4):
        grad = effective_gradient_1d(vwell, p)
        d = 1e-4
        fd = (effective_H_1d_mechanical(vwell, p + d)
              - effective_H_1d_mechanical(vwell, p - d)) / (2 * d)
        assert abs(grad - fd) <= 1e-5


def test_effective_gradient_trivial_and_signed():
    assert effective_gradient_1d(lambda y: np.zeros(np.shape(y)), 1.0) == pytest.approx(1.0, abs=1e-9)
    assert effective_gradient_1d(vwell, -1.5) == pytest.approx(-effective_gradient_1d(vwell, 1.5), abs=1e-12)


def test_effective_gradient_rejects_flat_part():
    with pytest.raises(ValueError):
        effective_gradient_1d(vwell, 0.5)


def test_estimate_validates_inputs():
    spec = Mechanical(vwell, dim=1)
    with pytest.raises(ValueError):
        effective_H_large_time(spec, (1.0, 2.0), T=16.0, res=32)
    with pytest.raises(ValueError):
        CellEstimate(p=(1.0,), hbar=0.5, error_bound=-1.0, method="large_time")


def test_table_exact_quadratic_and_conjugate():
    spec = Mechanical(lambda y: np.zeros(np.shape(y)), dim=1)
    axes = (np.linspace(-2.0, 2.0, 17),)
    table = build_effective_table(spec, axes, method="exact_1d")
    assert np.allclose(table.hbar, 0.5 * axes[0] ** 2, atol=1e-9)
    assert table.meta["convexity_margin"] >= -1e-12
    # conjugate of p^2/2 is q^2/2
    assert table.lbar_at(np.array([0.5])) == pytest.approx(0.125, abs=5e-2)


def test_table_workers_deterministic():
    spec = Mechanical(vwell, dim=1)
    axes = (np.linspace(-1.5, 1.5, 7),)
    t1 = build_effective_table(spec, axes, method="exact_1d", workers=1)
    t2 = build_effective_table(spec, axes, method="exact_1d", workers=3)
    assert np.array_equal(t1.hbar, t2.hbar)
    assert np.array_equal(t1.lbar, t2.lbar)


def test_table_failure_names_the_node():
    spec = Mechanical(vwell, dim=1)
    axes = (np.linspace(-1.0, 1.0, 3),)
    with pytest.raises(RuntimeError, match=r"p=\("):
        build_effective_table(spec, axes, method="large_time", T=4.0)


def test_table_roundtrip(tmp_path):
    spec = Mechanical(vwell, dim=1)
    axes = (np.linspace(-1.5, 1.5, 9),)
    table = build_effective_table(spec, axes, method="exact_1d")
    save_table(table, tmp_path / "tab")
    back = load_table(tmp_path / "tab")
    assert np.allclose(back.hbar, table.hbar, atol=0)
    assert np.allclose(back.err, table.err, atol=0)
    assert back.method == table.method
    mask = np.isfinite(table.lbar)
    assert np.array_equal(np.isfinite(back.lbar), mask)
    assert np.allclose(back.lbar[mask], table.lbar[mask], atol=0)


def test_line_potential_small_slope_within_twenty_percent():
    # desk-scale sanity for the 3D line-concentration value |p|^2/2; the
    # full acceptance run lives in the acceptance suite
    from hjhomog.hamiltonians import line_potential_fn

    spec = Mechanical(line_potential_fn(0.001), dim=3)
    est = effective_H_large_time(spec, (0.1, 0.0, 0.0), T=10.0, res=48)
    assert 0.004 <= est.hbar <= 0.006
