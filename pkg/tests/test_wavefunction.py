import math

import numpy as np
import pytest

from pilotwave.wavefunction import (
    FIVE_MODES,
    Mode,
    NodeProximityError,
    UnsupportedOrderError,
    WaveFunctionSpec,
    _compile,
    _Compiled,
    _flow_terms,
    born_density,
    born_density_grid,
    eigenstate,
    eigenstate_derivative,
    eigenstate_ladder,
    flow_batch,
    grad_psi,
    hermite,
    marginal_density,
    psi,
    velocity,
    TWO_PI,
)

from conftest import FN3_PHASES, FN5_PHASES


def random_spec(rng) -> WaveFunctionSpec:
    pool = [Mode(m, n) for m in range(3) for n in range(3) if (m, n) != (0, 0)]
    picks = rng.choice(len(pool), size=rng.integers(1, 5), replace=False)
    eps = {pool[i]: float(rng.uniform(0.05, 1.0)) for i in picks}
    phases = {mode: float(rng.uniform(0.0, TWO_PI)) for mode in eps}
    phases[Mode(0, 0)] = float(rng.uniform(0.0, TWO_PI))
    return WaveFunctionSpec.from_amplitudes(eps, phases)


class TestHermite:
    def test_low_orders(self):
        assert hermite(0, 0.7) == 1.0
        assert hermite(1, 0.5) == 1.0
        assert hermite(2, 0.5) == pytest.approx(-1.0, abs=1e-15)

    def test_against_explicit_polynomials(self):
        for x in (-2.1, -0.3, 0.0, 0.9, 1.7):
            assert hermite(3, x) == pytest.approx(8 * x**3 - 12 * x, rel=1e-13, abs=1e-13)
            assert hermite(4, x) == pytest.approx(
                16 * x**4 - 48 * x**2 + 12, rel=1e-13, abs=1e-13
            )

    def test_order_guard(self):
        with pytest.raises(UnsupportedOrderError):
            hermite(61, 0.0)
        with pytest.raises(ValueError):
            hermite(-1, 0.0)


class TestEigenstate:
    def test_ground_peak(self):
        assert eigenstate(0, 0.0) == pytest.approx(math.pi ** -0.25, rel=1e-15)

    def test_odd_node(self):
        assert eigenstate(1, 0.0) == 0.0

    def test_second_state_frozen_value(self):
        # direct Eq.-style evaluation in 50-digit arithmetic
        assert eigenstate(2, 1.3) == pytest.approx(0.54299477907426906628, rel=1e-14)

    def test_matches_textbook_formula(self):
        for m in range(9):
            for q in (-2.5, -1.0, 0.3, 2.2):
                direct = (
                    math.pi ** -0.25
                    / math.sqrt(2**m * math.factorial(m))
                    * hermite(m, q)
                    * math.exp(-0.5 * q * q)
                )
                assert eigenstate(m, q) == pytest.approx(direct, rel=1e-12, abs=1e-15)


class TestEigenstateDerivative:
    def test_gaussian_maximum(self):
        assert eigenstate_derivative(0, 0.0) == 0.0

    def test_closed_forms(self):
        assert eigenstate_derivative(0, 1.0) == pytest.approx(
            -0.45558067201133253483, rel=1e-14
        )
        assert eigenstate_derivative(1, 0.0) == pytest.approx(
            1.0622519320271969145, rel=1e-14
        )

    def test_against_central_differences(self):
        h = 1e-6
        for m in range(6):
            for q in (-1.7, -0.4, 0.0, 0.8, 2.3):
                fd = (eigenstate(m, q + h) - eigenstate(m, q - h)) / (2 * h)
                assert eigenstate_derivative(m, q) == pytest.approx(fd, rel=1e-8, abs=1e-9)


class TestPsi:
    def test_ground_at_origin(self):
        spec = WaveFunctionSpec.ground()
        value = psi(spec, 0.0, 0.0, 0.0)
        assert value.real == pytest.approx(0.56418958354775628695, rel=1e-14)
        assert value.imag == pytest.approx(0.0, abs=1e-15)

    def test_four_mode_normalization(self, fn3_spec):
        assert fn3_spec.normalization == pytest.approx(0.5, rel=1e-15)

    def test_periodicity(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            spec = random_spec(rng)
            q1, q2 = rng.uniform(-3, 3, size=2)
            t = rng.uniform(0.0, 10 * TWO_PI)
            a = psi(spec, q1, q2, t)
            b = psi(spec, q1, q2, t + TWO_PI)
            assert abs(a - b) < 1e-12


class TestGradPsi:
    def test_ground_extremum(self):
        spec = WaveFunctionSpec.ground()
        d1, d2 = grad_psi(spec, 0.0, 0.0, 0.0)
        assert d1 == 0 and d2 == 0

    def test_ground_gaussian_slope(self):
        spec = WaveFunctionSpec.ground()
        d1, d2 = grad_psi(spec, 1.0, 0.0, 0.0)
        assert d1.real == pytest.approx(-psi(spec, 1.0, 0.0, 0.0).real, rel=1e-14)
        assert d1.imag == pytest.approx(0.0, abs=1e-16)
        assert abs(d2) == pytest.approx(0.0, abs=1e-16)

    def test_finite_difference_consistency(self, fn3_spec, fn5_spec):
        rng = np.random.default_rng(5)
        step = 1e-5
        for spec in (fn3_spec, fn5_spec):
            checked = 0
            while checked < 200:
                q1, q2 = rng.uniform(-3, 3, size=2)
                t = rng.uniform(0, TWO_PI)
                if born_density(spec, q1, q2, t) <= 1e-4:
                    continue
                checked += 1
                d1, d2 = grad_psi(spec, q1, q2, t)
                fd1 = (psi(spec, q1 + step, q2, t) - psi(spec, q1 - step, q2, t)) / (2 * step)
                fd2 = (psi(spec, q1, q2 + step, t) - psi(spec, q1, q2 - step, t)) / (2 * step)
                assert abs(d1 - fd1) <= 1e-6 * max(abs(d1), 1e-12)
                assert abs(d2 - fd2) <= 1e-6 * max(abs(d2), 1e-12)

    def test_four_mode_point_against_oracle(self, fn3_spec):
        step = 1e-5
        d1, d2 = grad_psi(fn3_spec, 0.5, -0.3, 1.7)
        fd1 = (psi(fn3_spec, 0.5 + step, -0.3, 1.7) - psi(fn3_spec, 0.5 - step, -0.3, 1.7)) / (2 * step)
        fd2 = (psi(fn3_spec, 0.5, -0.3 + step, 1.7) - psi(fn3_spec, 0.5, -0.3 - step, 1.7)) / (2 * step)
        assert abs(d1 - fd1) < 1e-6 * abs(fd1)
        assert abs(d2 - fd2) < 1e-6 * abs(fd2)


class TestVelocity:
    def test_single_eigenstates_are_stationary(self):
        rng = np.random.default_rng(3)
        for m, n in ((0, 0), (1, 0), (0, 1), (2, 1)):
            spec = WaveFunctionSpec.single_eigenstate(m, n, theta=1.234)
            for _ in range(250):
                q1, q2 = rng.uniform(-2, 2, size=2)
                t = rng.uniform(0, 4 * TWO_PI)
                if born_density(spec, q1, q2, t) < 1e-8:
                    continue
                assert velocity(spec, q1, q2, t) == (0.0, 0.0)

    def test_matches_gradient_definition(self, fn3_spec, fn5_spec):
        rng = np.random.default_rng(17)
        for spec in (fn3_spec, fn5_spec):
            for _ in range(100):
                q1, q2 = rng.uniform(-2.5, 2.5, size=2)
                t = rng.uniform(0, TWO_PI)
                if born_density(spec, q1, q2, t) < 1e-6:
                    continue
                v1, v2 = velocity(spec, q1, q2, t)
                value = psi(spec, q1, q2, t)
                d1, d2 = grad_psi(spec, q1, q2, t)
                assert v1 == pytest.approx((d1 / value).imag, rel=1e-10, abs=1e-12)
                assert v2 == pytest.approx((d2 / value).imag, rel=1e-10, abs=1e-12)

    def test_oracle_point(self, fn3_spec):
        step = 1e-6
        v1, v2 = velocity(fn3_spec, -1.5, 1.5, 0.0)
        value = psi(fn3_spec, -1.5, 1.5, 0.0)
        fd1 = (psi(fn3_spec, -1.5 + step, 1.5, 0.0) - psi(fn3_spec, -1.5 - step, 1.5, 0.0)) / (2 * step)
        fd2 = (psi(fn3_spec, -1.5, 1.5 + step, 0.0) - psi(fn3_spec, -1.5, 1.5 - step, 0.0)) / (2 * step)
        assert v1 == pytest.approx((fd1 / value).imag, rel=1e-7)
        assert v2 == pytest.approx((fd2 / value).imag, rel=1e-7)

    def test_global_phase_gauge_invariance(self, fn3_spec):
        shifted = WaveFunctionSpec(
            tuple((mode, amp, theta + 1.77) for mode, amp, theta in fn3_spec.terms)
        )
        rng = np.random.default_rng(23)
        for _ in range(100):
            q1, q2 = rng.uniform(-2, 2, size=2)
            t = rng.uniform(0, TWO_PI)
            if born_density(fn3_spec, q1, q2, t) < 1e-6:
                continue
            a = velocity(fn3_spec, q1, q2, t)
            b = velocity(shifted, q1, q2, t)
            assert abs(a[0] - b[0]) < 1e-12
            assert abs(a[1] - b[1]) < 1e-12

    def test_amplitude_scaling_cancels(self, fn3_spec):
        comp = _compile(fn3_spec)
        lam = 0.37
        scaled = _Compiled(
            comp.ms,
            comp.ns,
            tuple(a * lam for a in comp.amps),
            tuple((j, k, a * lam * lam, de, s, c) for j, k, a, de, s, c in comp.pairs),
            comp.kmax1,
            comp.kmax2,
            comp.max_de,
            comp.norm2 / lam**2,
        )
        rng = np.random.default_rng(29)
        for _ in range(50):
            q1, q2 = rng.uniform(-2, 2, size=2)
            t = rng.uniform(0, TWO_PI)
            n1, n2, rho = _flow_terms(comp, q1, q2, t)
            m1, m2, rho_s = _flow_terms(scaled, q1, q2, t)
            if rho < 1e-6:
                continue
            assert m1 / rho_s == pytest.approx(n1 / rho, rel=1e-12, abs=1e-15)
            assert m2 / rho_s == pytest.approx(n2 / rho, rel=1e-12, abs=1e-15)

    def test_node_guard(self):
        spec = WaveFunctionSpec.single_eigenstate(1, 0)
        with pytest.raises(NodeProximityError) as err:
            velocity(spec, 0.0, 0.4, 0.0)
        assert err.value.q1 == 0.0
        assert err.value.density == 0.0


class TestBornDensity:
    def test_ground_peak(self):
        spec = WaveFunctionSpec.ground()
        assert born_density(spec, 0.0, 0.0, 0.0) == pytest.approx(1 / math.pi, rel=1e-14)

    def test_equals_abs_psi_squared(self, fn3_spec):
        rng = np.random.default_rng(7)
        for _ in range(100):
            q1, q2 = rng.uniform(-3, 3, size=2)
            t = rng.uniform(0, TWO_PI)
            direct = abs(psi(fn3_spec, q1, q2, t)) ** 2
            assert born_density(fn3_spec, q1, q2, t) == pytest.approx(
                direct, rel=1e-11, abs=1e-15
            )

    def test_normalization_integral(self):
        rng = np.random.default_rng(41)
        edges = np.linspace(-6.0, 6.0, 601)
        centers = 0.5 * (edges[:-1] + edges[1:])
        cell = (edges[1] - edges[0]) ** 2
        for _ in range(3):
            spec = random_spec(rng)
            total = born_density_grid(spec, centers, centers, rng.uniform(0, TWO_PI)).sum() * cell
            assert total == pytest.approx(1.0, abs=1e-4)


class TestVectorizedEvaluation:
    def test_ladder_matches_scalar(self):
        q = np.array([-2.0, -0.5, 0.0, 0.7, 1.9])
        phi, dphi = eigenstate_ladder(2, q)
        for k in range(3):
            for i, x in enumerate(q):
                assert phi[k, i] == pytest.approx(eigenstate(k, x), rel=1e-14, abs=1e-15)
                assert dphi[k, i] == pytest.approx(
                    eigenstate_derivative(k, x), rel=1e-14, abs=1e-15
                )

    def test_flow_batch_matches_scalar(self, fn3_spec, fn5_spec):
        rng = np.random.default_rng(13)
        for spec in (fn3_spec, fn5_spec):
            q1 = rng.uniform(-2.5, 2.5, size=200)
            q2 = rng.uniform(-2.5, 2.5, size=200)
            t = rng.uniform(0, TWO_PI, size=200)
            v1, v2, rho = flow_batch(spec, q1, q2, t)
            for i in range(0, 200, 7):
                if rho[i] < 1e-6:
                    continue
                s1, s2 = velocity(spec, q1[i], q2[i], t[i])
                assert v1[i] == pytest.approx(s1, rel=1e-12, abs=1e-14)
                assert v2[i] == pytest.approx(s2, rel=1e-12, abs=1e-14)
                assert rho[i] == pytest.approx(
                    born_density(spec, q1[i], q2[i], t[i]), rel=1e-12
                )

    def test_density_grid_matches_scalar(self, fn5_spec):
        x = np.linspace(-2, 2, 7)
        y = np.linspace(-1, 3, 5)
        grid = born_density_grid(fn5_spec, x, y, 0.9)
        assert grid.shape == (5, 7)
        for j in (0, 2, 4):
            for i in (0, 3, 6):
                assert grid[j, i] == pytest.approx(
                    born_density(fn5_spec, x[i], y[j], 0.9), rel=1e-12
                )

    def test_marginal_density(self, fn3_spec):
        x = np.linspace(-6, 6, 2401)
        marg = marginal_density(fn3_spec, x, 0.4, axis=0)
        assert np.trapezoid(marg, x) == pytest.approx(1.0, abs=1e-6)
        # direct quadrature over the other axis at a few fixed x
        y = np.linspace(-6, 6, 2401)
        for xi in (-1.2, 0.3, 1.8):
            column = born_density_grid(fn3_spec, np.array([xi]), y, 0.4)[:, 0]
            assert marginal_density(fn3_spec, np.array([xi]), 0.4, axis=0)[0] == pytest.approx(
                float(np.trapezoid(column, y)), rel=1e-6
            )


class TestSpecValidation:
    def test_rejects_duplicate_modes(self):
        with pytest.raises(ValueError, match="duplicate"):
            WaveFunctionSpec(
                ((Mode(0, 0), 1.0, 0.0), (Mode(0, 1), 0.5, 0.0), (Mode(0, 1), 0.5, 1.0))
            )

    def test_rejects_missing_ground(self):
        with pytest.raises(ValueError, match="ground"):
            WaveFunctionSpec(((Mode(0, 1), 1.0, 0.0), (Mode(1, 0), 1.0, 0.0)))

    def test_rejects_free_ground_amplitude(self):
        with pytest.raises(ValueError, match="exactly 1"):
            WaveFunctionSpec(((Mode(0, 0), 0.9, 0.0), (Mode(0, 1), 0.5, 0.0)))

    def test_rejects_amplitude_out_of_range(self):
        with pytest.raises(ValueError, match="outside"):
            WaveFunctionSpec(((Mode(0, 0), 1.0, 0.0), (Mode(0, 1), 1.5, 0.0)))

    def test_phases_reduced(self):
        spec = WaveFunctionSpec(((Mode(0, 0), 1.0, -1.0),))
        assert 0.0 <= spec.terms[0][2] < TWO_PI
        assert spec.terms[0][2] == pytest.approx(TWO_PI - 1.0, rel=1e-15)

    def test_epsilon_zero_collapses_to_ground(self):
        spec = WaveFunctionSpec.homogeneous(0.0, FN3_PHASES)
        assert spec.modes == (Mode(0, 0),)

    def test_mode_energy(self):
        assert Mode(0, 0).energy == 1
        assert Mode(2, 1).energy == 4


class TestSerialization:
    def test_roundtrip(self, fn5_spec):
        text = fn5_spec.to_text()
        back = WaveFunctionSpec.from_text(text)
        assert back.modes == fn5_spec.modes
        for (_, a1, t1), (_, a2, t2) in zip(back.terms, fn5_spec.terms):
            assert a1 == pytest.approx(a2, rel=1e-11)
            assert t1 == pytest.approx(t2, rel=1e-11)

    def test_roundtrip_through_comment_block(self, fn3_spec):
        commented = "".join(f"# {line}\n" for line in fn3_spec.to_text().splitlines())
        assert WaveFunctionSpec.from_text(commented).modes == fn3_spec.modes

    def test_fingerprint_distinguishes_specs(self, fn3_spec, fn5_spec):
        assert fn3_spec.fingerprint() != fn5_spec.fingerprint()
        assert fn3_spec.fingerprint() == WaveFunctionSpec.from_text(fn3_spec.to_text()).fingerprint()

    def test_malformed_text(self):
        with pytest.raises(ValueError):
            WaveFunctionSpec.from_text("modes = 0,0\nepsilon = 1\n")

    def test_five_mode_catalog_order(self):
        spec = WaveFunctionSpec.homogeneous(0.1, FN5_PHASES, modes=FIVE_MODES)
        assert spec.modes == FIVE_MODES
