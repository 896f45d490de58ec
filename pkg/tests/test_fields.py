"""Grid construction, periodic interpolation, and the ergodic defect bound."""

import numpy as np
import pytest

from hjhomog.fields import (
    PeriodicField,
    ergodic_defect,
    interp,
    load_field,
    make_grid,
    sample,
    save_field,
)

RNG = np.random.default_rng(20260816)


def test_make_grid_validation():
    g = make_grid(2, 8)
    assert g.spacing == pytest.approx(0.125)
    assert g.shape == (8, 8)
    with pytest.raises(ValueError):
        make_grid(4, 8)
    with pytest.raises(ValueError):
        make_grid(1, 1)


def test_sample_sin_quarter_points():
    g = make_grid(1, 4)
    f = sample(lambda y: np.sin(2 * np.pi * y), g)
    assert f.values == pytest.approx([0.0, 1.0, 0.0, -1.0], abs=1e-15)


def test_field_shape_mismatch_rejected():
    g = make_grid(2, 4)
    with pytest.raises(ValueError):
        PeriodicField(g, np.zeros(4))


def test_field_values_read_only():
    f = sample(lambda y: y, make_grid(1, 8))
    with pytest.raises(ValueError):
        f.values[0] = 1.0


def test_interp_reproduces_nodes_and_wraps():
    for dim in (1, 2, 3):
        g = make_grid(dim, 6)
        f = PeriodicField(g, RNG.standard_normal(g.shape))
        nodes = np.stack([m.ravel() for m in g.meshes()], axis=-1)
        vals = interp(f, nodes if dim > 1 else nodes[:, 0])
        assert vals == pytest.approx(f.values.ravel(), abs=1e-13)
        # integer shifts land on the same torus point
        shift = RNG.integers(-3, 4, size=dim).astype(float)
        pts = RNG.random((20, dim))
        a = interp(f, pts if dim > 1 else pts[:, 0])
        b = interp(f, pts + shift if dim > 1 else pts[:, 0] + shift[0])
        assert a == pytest.approx(b, abs=1e-12)


def test_interp_midpoint_1d():
    g = make_grid(1, 4)
    f = PeriodicField(g, np.array([0.0, 1.0, 0.0, -1.0]))
    assert interp(f, 0.125) == pytest.approx(0.5)
    # wrap through the seam: between nodes 3 (-1.0) and 0 (0.0)
    assert interp(f, 0.875) == pytest.approx(-0.5)


def test_interp_matches_explicit_corner_weights():
    # independent multilinear oracle with explicit loops
    g = make_grid(3, 5)
    f = PeriodicField(g, RNG.standard_normal(g.shape))
    pts = RNG.random((10, 3)) * 2.0 - 0.5
    for x in pts:
        sc = np.mod(x, 1.0) * g.res
        i0 = np.floor(sc).astype(int) % g.res
        t = sc - np.floor(sc)
        expect = 0.0
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    w = ((1 - t[0]) if dx == 0 else t[0])
                    w *= ((1 - t[1]) if dy == 0 else t[1])
                    w *= ((1 - t[2]) if dz == 0 else t[2])
                    idx = ((i0[0] + dx) % g.res, (i0[1] + dy) % g.res, (i0[2] + dz) % g.res)
                    expect += w * f.values[idx]
        assert interp(f, x) == pytest.approx(expect, abs=1e-13)


def test_ergodic_defect_constant_is_zero():
    f = sample(lambda y: 3.0 + 0.0 * y, make_grid(1, 64))
    for L in (0.3, 1.0, 2.5, 17.2):
        assert ergodic_defect(f, L) == pytest.approx(0.0, abs=1e-12)


def test_ergodic_defect_sine_case():
    # f = 1 + sin(2 pi y), L = 2.5: defect = |int_0^{1/2} sin(2 pi y) dy| = 1/pi.
    # Frozen from the antiderivative (1 - cos(pi))/(2 pi) = 1/pi.
    f = sample(lambda y: 1.0 + np.sin(2 * np.pi * y), make_grid(1, 512))
    assert ergodic_defect(f, 2.5) == pytest.approx(0.3183098861837907, abs=1e-5)


def test_ergodic_defect_bound_random_trig():
    # nonnegative periodic f: defect <= int_0^1 f + 10 h^2, any L
    res = 256
    g = make_grid(1, res)
    tol = 10.0 / res**2
    for _ in range(200):
        n_modes = int(RNG.integers(1, 6))
        a = RNG.standard_normal(n_modes)
        b = RNG.standard_normal(n_modes)
        base = np.abs(a).sum() + np.abs(b).sum()

        def fn(y, a=a, b=b, base=base):
            out = np.full_like(y, base)
            for k in range(len(a)):
                out = out + a[k] * np.cos(2 * np.pi * (k + 1) * y)
                out = out + b[k] * np.sin(2 * np.pi * (k + 1) * y)
            return out

        f = sample(fn, g)
        full = f.values.mean()
        L = float(RNG.random() * 99.9 + 0.1)
        assert ergodic_defect(f, L) <= full + tol


def test_ergodic_defect_validation():
    f2 = sample(lambda y1, y2: y1 * 0, make_grid(2, 8))
    with pytest.raises(ValueError):
        ergodic_defect(f2, 1.0)
    f1 = sample(lambda y: y * 0, make_grid(1, 8))
    with pytest.raises(ValueError):
        ergodic_defect(f1, 0.0)


def test_field_io_roundtrip(tmp_path):
    g = make_grid(2, 6)
    f = PeriodicField(g, RNG.standard_normal(g.shape))
    save_field(f, tmp_path / "field")
    f2 = load_field(tmp_path / "field")
    assert f2.grid == f.grid
    assert np.array_equal(f2.values, f.values)
