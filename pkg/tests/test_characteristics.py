import numpy as np
import pytest

from hjhomog.cell import effective_gradient_1d
from hjhomog.characteristics import (
    ActionAudit,
    Curve,
    action_audit,
    backward_characteristic_1d,
    corrector_1d,
    corrector_osc,
    hedlund_xi_tau,
    lagrangian,
    rotation_defect,
    rotation_number,
    stationary_curve,
)
from hjhomog.hamiltonians import (
    Clamped,
    HedlundMetric,
    HomogeneousK,
    Mechanical,
    hedlund_metric_fn,
)

RNG = np.random.default_rng(20260816)

VSIN = lambda y: -np.sin(np.pi * y) ** 2
DELTA = 0.1


def hedlund_spec():
    return Clamped(HedlundMetric(hedlund_metric_fn(DELTA), DELTA), C0=4.0, K0=33.0)


class TestCurve:
    def test_validation(self):
        with pytest.raises(ValueError, match="increasing"):
            Curve([0.0, 0.0], [[0.0], [1.0]])
        with pytest.raises(ValueError, match="length"):
            Curve([0.0, 1.0], [[0.0], [1.0], [2.0]])
        with pytest.raises(ValueError, match="two samples"):
            Curve([0.0], [[0.0]])
        with pytest.raises(ValueError, match="finite"):
            Curve([0.0, 1.0], [[0.0], [np.inf]])

    def test_eval_and_velocities(self):
        c = Curve([-1.0, 0.0, 2.0], [[0.0, 0.0], [1.0, -1.0], [1.0, 3.0]])
        assert np.allclose(c.eval(-0.5), [0.5, -0.5])
        assert np.allclose(c.velocities(), [[1.0, -1.0], [0.0, 2.0]])
        with pytest.raises(ValueError, match="outside"):
            c.eval(3.0)

    def test_csv_export(self, tmp_path):
        c = Curve([0.0, 1.0], [[0.25, 0.5], [1.0, 2.0]])
        f = tmp_path / "curve.csv"
        c.save_csv(f)
        body = np.loadtxt(f, delimiter=",", skiprows=1)
        assert np.array_equal(body, [[0.0, 0.25, 0.5], [1.0, 1.0, 2.0]])


class TestCorrector:
    def test_free_case(self):
        v_prime, hbar = corrector_1d(lambda y: np.zeros(np.shape(y)), 1.0)
        assert hbar == pytest.approx(0.5, abs=1e-8)
        assert np.max(np.abs(v_prime(np.linspace(0, 1, 50)))) < 1e-8

    def test_mean_zero(self):
        v_prime, _ = corrector_1d(VSIN, 1.5)
        x = np.linspace(0.0, 1.0, 8193)
        assert np.trapezoid(v_prime(x), x) == pytest.approx(0.0, abs=1e-8)

    def test_pointwise_level_identity(self):
        for p in (1.2, 1.5, -2.0):
            v_prime, hbar = corrector_1d(VSIN, p)
            x = np.linspace(-3.0, 3.0, 700)
            level = 0.5 * (p + v_prime(x)) ** 2 + VSIN(x)
            assert np.max(np.abs(level - hbar)) < 1e-8

    def test_flat_part_rejected(self):
        # the flat part of VSIN reaches |p| = 2 sqrt(2) / pi ~ 0.9
        with pytest.raises(ValueError, match="flat part"):
            corrector_1d(VSIN, 0.3)

    def test_negative_momentum_moves_left(self):
        v_prime, _ = corrector_1d(VSIN, -1.5)
        speeds = -1.5 + v_prime(np.linspace(0, 1, 64))
        assert np.all(speeds < 0)


class TestBackwardCharacteristic:
    def test_free_case_is_straight(self):
        c = backward_characteristic_1d(lambda y: np.zeros(np.shape(y)), 1.0, -5.0)
        ts = np.linspace(-5.0, 0.0, 11)
        assert np.max(np.abs(c.eval(ts)[:, 0] - ts)) < 1e-7

    def test_slope_decay(self):
        # |xi(t)/t - hbar'(p)| decays like 1/|t|
        c = backward_characteristic_1d(VSIN, 1.5, -200.0, dt_out=1e-2)
        hp = effective_gradient_1d(VSIN, 1.5)
        ts = np.linspace(-200.0, -10.0, 96)
        dev = np.abs(c.eval(ts)[:, 0] / ts - hp)
        assert np.max(np.abs(ts) * dev) < 0.5
        slope = np.polyfit(np.log(-ts), np.log(dev + 1e-30), 1)[0]
        assert slope == pytest.approx(-1.0, abs=0.1)

    def test_calibration_identity(self):
        p = 1.5
        _, hbar = corrector_1d(VSIN, p)
        c = backward_characteristic_1d(VSIN, p, -20.0, dt_out=1e-3)
        audit = action_audit(c, Mechanical(VSIN, dim=1), [p], hbar)
        osc = corrector_osc(VSIN, p)
        # the defect is a corrector increment between the endpoints
        assert audit.defect <= osc + 1e-6
        assert abs(audit.defect) <= osc + 1e-4
        assert audit.horizon == pytest.approx(20.0)

    def test_requires_negative_time(self):
        with pytest.raises(ValueError, match="negative"):
            backward_characteristic_1d(VSIN, 1.5, 1.0)


class TestStationaryCurve:
    def test_flat_part_calibration(self):
        # parked at the potential maximum, action and pairing both vanish
        c = stationary_curve([0.0], -7.0)
        audit = action_audit(c, Mechanical(VSIN, dim=1), [0.0], 0.0)
        assert audit.action == pytest.approx(0.0, abs=1e-12)
        assert audit.pairing == 0.0
        assert audit.defect == pytest.approx(0.0, abs=1e-12)

    def test_off_maximum_pays_rent(self):
        c = stationary_curve([0.25], -4.0)
        audit = action_audit(c, Mechanical(VSIN, dim=1), [0.0], 0.0)
        # L(x0, 0) = -V(x0) = sin^2(pi/4) = 1/2 per unit time
        assert audit.defect == pytest.approx(2.0, abs=1e-10)


class TestHedlundCurves:
    def test_pure_line_at_tau_one(self):
        c = hedlund_xi_tau(1.0, 10.0, DELTA)
        for s in (-10.0, -4.0, 0.0):
            assert np.allclose(c.eval(s), [s / DELTA, 0.0, 0.0])

    def test_piece_structure(self):
        c = hedlund_xi_tau(0.5, 10.0, DELTA)
        assert len(c.timestamps) == 4
        # first piece covers k = 50 whole periods of the first line
        assert np.allclose(c.eval(0.0), [0.0, 0.0, 0.0])
        assert np.allclose(c.eval(-5.0), [-50.0, 0.0, 0.0])
        assert np.allclose(c.eval(-6.0), [-50.0, 0.0, 0.5])
        assert np.allclose(c.eval(-10.0), [-50.0, -40.0, 0.5])

    def test_jump_speed_and_duration(self):
        for tau in (0.0, 0.3, 0.5, 0.9):
            c = hedlund_xi_tau(tau, 50.0, DELTA)
            vels = np.linalg.norm(c.velocities(), axis=1)
            dts = np.diff(c.timestamps)
            jump = np.argmin(np.abs(dts - 1.0))
            assert dts[jump] == pytest.approx(1.0)
            assert vels[jump] <= 2.0

    def test_endpoint_rotation_vector(self):
        q_tau = np.array([0.5, 0.5, 0.0]) / DELTA
        for hor in (10.0, 100.0, 1000.0):
            c = hedlund_xi_tau(0.5, hor, DELTA)
            xi = c.eval(-hor)
            assert np.linalg.norm(xi / (-hor) - q_tau) <= 12.0 / hor

    def test_validation(self):
        with pytest.raises(ValueError, match="too short"):
            hedlund_xi_tau(0.5, 1.5, DELTA)
        with pytest.raises(ValueError, match="tau"):
            hedlund_xi_tau(1.2, 10.0, DELTA)


class TestLagrangian:
    def _sup_oracle(self, spec, y, q, pmax, n=60001):
        # dense radial search: the conjugate of a radial H is radial.
        # One zoom pass localizes kink maxima the coarse grid straddles.
        y = tuple(np.asarray(c) for c in y)
        base = spec.base if isinstance(spec, Clamped) else spec
        coef = base.node_coef(y)
        s = float(np.sqrt(sum(np.asarray(c) ** 2 for c in q)))
        u = np.array(q, dtype=float)
        u = u / s if s > 0 else np.eye(len(q))[0]
        lo, hi = 0.0, pmax
        best = -np.inf
        for _ in range(2):
            rs = np.linspace(lo, hi, n)
            H = spec.h_from_coef(coef, tuple(rs * ui for ui in u))
            vals = rs * s - H
            i = int(np.argmax(vals))
            best = max(best, float(vals[i]))
            h = rs[1] - rs[0]
            lo, hi = max(rs[i] - 2 * h, 0.0), rs[i] + 2 * h
        return best

    def test_mechanical_closed_form(self):
        spec = Mechanical(VSIN, dim=1)
        got = lagrangian(spec, (np.array([0.25]),), (np.array([1.3]),))
        assert got[0] == pytest.approx(0.5 * 1.3**2 + 0.5, abs=1e-12)

    def test_speed_limit_indicator(self):
        spec = HomogeneousK(lambda y1: 1.0 + 0.5 * np.cos(2 * np.pi * y1), k=1.0, dim=1)
        y = (np.array([0.0]),)  # a = 1.5, limit 1/1.5
        assert lagrangian(spec, y, (np.array([0.6]),))[0] == 0.0
        assert np.isinf(lagrangian(spec, y, (np.array([0.7]),))[0])

    def test_power_law_against_dense_sup(self):
        spec = HomogeneousK(lambda y1: 1.2 + 0.3 * np.sin(2 * np.pi * y1), k=2.5, dim=1)
        for qv in (0.4, 1.7):
            y = (np.array([0.37]),)
            got = lagrangian(spec, y, (np.array([qv]),))[0]
            want = self._sup_oracle(spec, y, (qv,), pmax=10.0)
            assert got == pytest.approx(want, abs=1e-6)

    def test_clamped_mechanical_against_dense_sup(self):
        spec = Clamped(Mechanical(VSIN, dim=1), C0=2.0, K0=4.0)
        for qv in (0.5, 1.9, 2.0, 2.7, 5.0, 8.0):
            y = (np.array([0.31]),)
            got = lagrangian(spec, y, (np.array([qv]),))[0]
            want = self._sup_oracle(spec, y, (qv,), pmax=40.0)
            assert got == pytest.approx(want, abs=1e-5)

    def test_clamped_hedlund_against_dense_sup(self):
        spec = hedlund_spec()
        for y in (np.array([0.0, 0.0, 0.0]), np.array([0.1, 0.33, 0.47])):
            for qvec in ([0.5, 0.0, 0.0], [1.4, 1.1, 0.0], [8.0, 3.0, 1.0], [20.0, 0.0, 5.0]):
                got = lagrangian(spec, tuple(y), tuple(np.asarray(qvec)))
                want = self._sup_oracle(spec, tuple(y), qvec, pmax=80.0, n=160001)
                assert float(got) == pytest.approx(want, abs=2e-4)

    def test_zero_velocity(self):
        spec = hedlund_spec()
        assert float(lagrangian(spec, (0.2, 0.2, 0.2), (0.0, 0.0, 0.0))) == 0.0


class TestActionAudit:
    def test_hedlund_defect_uniform_in_horizon(self):
        spec = hedlund_spec()
        p, hbar = np.array([1.0, 1.0, 0.0]), 1.0 / DELTA
        defects = {}
        for hor in (10.0, 100.0, 1000.0):
            audit = action_audit(hedlund_xi_tau(0.5, hor, DELTA), spec, p, hbar)
            defects[hor] = audit.defect
            assert audit.defect <= 3.0 / DELTA + 4.0
        vals = np.array(list(defects.values()))
        assert vals.max() / vals.min() <= 1.2

    def test_pure_line_calibrates_exactly(self):
        spec = hedlund_spec()
        audit = action_audit(hedlund_xi_tau(1.0, 100.0, DELTA), spec, [1.0, 0.0, 0.0], 1.0 / DELTA)
        assert abs(audit.defect) <= 1e-8

    def test_subsolution_direction_random_curves(self):
        # any curve's defect is bounded below by -osc(v), mechanical case
        p = 1.5
        _, hbar = corrector_1d(VSIN, p)
        osc = corrector_osc(VSIN, p)
        spec = Mechanical(VSIN, dim=1)
        for _ in range(30):
            n = int(RNG.integers(3, 20))
            ts = np.sort(RNG.uniform(-3.0, 0.0, n))
            ts[0], ts[-1] = -3.0, 0.0
            xs = np.cumsum(RNG.normal(0.0, 0.4, n))
            audit = action_audit(Curve(ts, xs[:, None]), spec, [p], hbar)
            assert audit.defect >= -osc - 1e-6

    def test_infinite_lagrangian_raises(self):
        spec = HomogeneousK(lambda y1, y2, y3: np.full(np.shape(y1), 2.0), k=1.0, dim=3)
        c = Curve([0.0, 1.0], [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])  # speed 2 > 1/2
        with pytest.raises(ValueError, match="infinite"):
            action_audit(c, spec, [1.0, 0.0, 0.0], 0.5)

    def test_momentum_shape_checked(self):
        c = Curve([0.0, 1.0], [[0.0], [1.0]])
        with pytest.raises(ValueError, match="shape"):
            action_audit(c, Mechanical(VSIN, dim=1), [1.0, 0.0], 0.0)

    def test_json_export(self, tmp_path):
        audit = ActionAudit(action=2.0, pairing=1.5, defect=0.5, horizon=10.0)
        f = tmp_path / "audit.json"
        audit.save_json(f)
        import json

        loaded = json.loads(f.read_text())
        assert loaded == {"action": 2.0, "pairing": 1.5, "defect": 0.5, "horizon": 10.0}


class TestRotationNumber:
    def test_rigid_rotation(self):
        f = lambda x: x + 0.3
        beta = rotation_number(f, 1000)
        assert beta == pytest.approx(0.3, abs=1e-9)
        assert rotation_defect(f, beta) < 1e-9

    def test_control_inequality_on_wobbly_map(self):
        f = lambda x: x + 0.25 + 0.1 * np.sin(2 * np.pi * x)
        beta = rotation_number(f, 1000)
        assert rotation_defect(f, beta, iterations=1000) <= 1.0

    def test_fixed_point_map(self):
        f = lambda x: x - 0.1 * np.sin(np.pi * x) ** 2
        assert rotation_number(f, 1000) == pytest.approx(0.0, abs=1e-12)

    def test_rejects_bad_maps(self):
        with pytest.raises(ValueError, match="increasing"):
            rotation_number(lambda x: x + 0.2 * np.sin(4 * np.pi * x) * 2, 1000)
        with pytest.raises(ValueError, match="commute"):
            rotation_number(lambda x: 1.1 * x, 1000)
        with pytest.raises(ValueError, match="100"):
            rotation_number(lambda x: x + 0.3, 50)
