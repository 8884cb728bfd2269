import math

import numpy as np
import pytest

from pilotwave.ensemble import (
    EnsembleState,
    HGrid,
    coarse_grained_H,
    evolve_ensemble,
    ks_distance,
    ks_threshold,
    relative_entropy,
    sample_initial,
    write_h_series_csv,
    write_snapshot_csv,
)
from pilotwave.ensemble import HRecord
from pilotwave.integrator import IntegratorConfig
from pilotwave.wavefunction import TWO_PI, WaveFunctionSpec

T = TWO_PI
FAST = IntegratorConfig(abstol=1e-6)


class TestSampling:
    def test_deterministic_per_seed(self, fn3_spec):
        a = sample_initial(fn3_spec, "disk", 4, seed=99)
        b = sample_initial(fn3_spec, "disk", 4, seed=99)
        assert np.array_equal(a.q1, b.q1) and np.array_equal(a.q2, b.q2)
        c = sample_initial(fn3_spec, "disk", 4, seed=100)
        assert not np.array_equal(a.q1, c.q1)

    def test_disk_support(self, fn3_spec):
        state = sample_initial(fn3_spec, "disk", 2000, seed=1, radius=1.0)
        assert np.hypot(state.q1, state.q2).max() <= 1.0
        assert len(state) == 2000
        assert state.t == 0.0

    def test_ground_born_moments(self, fn3_spec):
        state = sample_initial(fn3_spec, "ground-born", 100_000, seed=5)
        bound = 3.0 * math.sqrt(0.5) / math.sqrt(len(state))
        assert abs(state.q1.mean()) < bound
        assert abs(state.q2.mean()) < bound
        assert state.q1.var() == pytest.approx(0.5, rel=0.05)

    def test_gaussian_covariance(self, fn3_spec):
        state = sample_initial(
            fn3_spec, "gaussian", 20_000, seed=8, center=(0.4, -0.2), sigma=0.1
        )
        assert state.q1.mean() == pytest.approx(0.4, abs=0.01)
        assert state.q2.mean() == pytest.approx(-0.2, abs=0.01)
        assert state.q1.var() == pytest.approx(0.01, rel=0.05)
        assert state.q2.var() == pytest.approx(0.01, rel=0.05)
        assert np.cov(state.q1, state.q2)[0, 1] == pytest.approx(0.0, abs=5e-4)

    def test_born_sampling_matches_marginals(self, fn3_spec):
        state = sample_initial(fn3_spec, "born", 20_000, seed=12)
        assert ks_distance(state.q1, fn3_spec, 0.0, 0) < ks_threshold(len(state))
        assert ks_distance(state.q2, fn3_spec, 0.0, 1) < ks_threshold(len(state))

    def test_unknown_kind(self, fn3_spec):
        with pytest.raises(ValueError, match="unknown"):
            sample_initial(fn3_spec, "ring", 10, seed=0)
        with pytest.raises(ValueError, match="at least 1"):
            sample_initial(fn3_spec, "disk", 0, seed=0)


class TestEvolution:
    def test_zero_field_leaves_state_unchanged(self, ground_spec):
        state = sample_initial(ground_spec, "disk", 50, seed=4)
        evolved = evolve_ensemble(ground_spec, state, 3 * T)
        assert np.array_equal(evolved.q1, state.q1)
        assert np.array_equal(evolved.q2, state.q2)
        assert evolved.t == pytest.approx(3 * T)
        assert evolved.n_failed == 0

    def test_spec_mismatch_rejected(self, ground_spec, fn3_spec):
        state = sample_initial(ground_spec, "disk", 10, seed=4)
        with pytest.raises(ValueError, match="different wave function"):
            evolve_ensemble(fn3_spec, state, T)

    def test_failed_lanes_are_dropped_and_counted(self):
        spec = WaveFunctionSpec.single_eigenstate(1, 0)
        state = EnsembleState(
            spec_fingerprint=spec.fingerprint(),
            t=0.0,
            q1=np.array([0.0, 1.0]),  # first sits on the q1 = 0 nodal line
            q2=np.array([0.4, 1.0]),
            seed=0,
            initial_density_tag="manual",
        )
        evolved = evolve_ensemble(spec, state, T)
        assert evolved.n_failed == 1
        assert len(evolved) == 1

    def test_preserves_order_of_survivors(self, fn3_spec):
        state = sample_initial(fn3_spec, "disk", 64, seed=21)
        evolved = evolve_ensemble(fn3_spec, state, T, FAST)
        # no failures expected here, so order is the original sampling order
        assert evolved.n_failed == 0
        again = evolve_ensemble(fn3_spec, state, T, FAST)
        assert np.array_equal(evolved.q1, again.q1)

    def test_equivariance_smoke(self, fn3_spec):
        state = sample_initial(fn3_spec, "born", 20_000, seed=31)
        evolved = evolve_ensemble(fn3_spec, state, T, FAST)
        n = len(evolved)
        assert ks_distance(evolved.q1, fn3_spec, evolved.t, 0) < ks_threshold(n)
        assert ks_distance(evolved.q2, fn3_spec, evolved.t, 1) < ks_threshold(n)


class TestCoarseGrainedH:
    def test_single_cell_closed_form(self):
        grid = HGrid(bounds=4.0, resolution=30)
        rho = np.zeros((30, 30))
        rho[7, 11] = 1.0 / grid.cell_area
        born = np.full((30, 30), 0.05)
        hbar, used, clamped = relative_entropy(rho, born, grid.cell_area)
        assert used == 1
        assert clamped == 0
        assert hbar == pytest.approx(math.log(1.0 / (0.05 * grid.cell_area)), rel=1e-12)

    def test_underflow_cells_clamped(self):
        grid = HGrid(bounds=4.0, resolution=30)
        rho = np.zeros((30, 30))
        rho[0, 0] = 1.0 / grid.cell_area
        born = np.zeros((30, 30))
        hbar, used, clamped = relative_entropy(rho, born, grid.cell_area)
        assert clamped == 1
        assert math.isfinite(hbar)

    def test_born_sample_near_zero(self, fn3_spec):
        state = sample_initial(fn3_spec, "born", 20_000, seed=44)
        record = coarse_grained_H(state, fn3_spec)
        assert record.hbar < 0.05
        assert record.hbar > -1e-3
        assert record.cells_used > 100

    def test_empty_ensemble(self, fn3_spec):
        state = EnsembleState(fn3_spec.fingerprint(), 0.0, np.array([]), np.array([]), 0, "x")
        with pytest.raises(ValueError, match="empty"):
            coarse_grained_H(state, fn3_spec)

    def test_deterministic_to_the_bit(self, fn3_spec):
        a = coarse_grained_H(sample_initial(fn3_spec, "disk", 5000, seed=3), fn3_spec)
        b = coarse_grained_H(sample_initial(fn3_spec, "disk", 5000, seed=3), fn3_spec)
        assert a.hbar == b.hbar

    def test_relaxation_direction_smoke(self, fn3_spec):
        state = sample_initial(fn3_spec, "disk", 20_000, seed=7)
        h0 = coarse_grained_H(state, fn3_spec)
        evolved = evolve_ensemble(fn3_spec, state, 2 * T, FAST)
        h2 = coarse_grained_H(evolved, fn3_spec)
        assert h2.hbar < h0.hbar


class TestFileFormats:
    def test_snapshot_csv(self, tmp_path, fn3_spec):
        state = sample_initial(fn3_spec, "disk", 20, seed=6)
        path = tmp_path / "snap.csv"
        write_snapshot_csv(path, state, fn3_spec)
        text = path.read_text()
        assert "# seed = 6" in text
        assert "# t = 0" in text
        assert "modes = 0,0 0,1 1,0 1,1" in text
        assert text.count("\n") == 20 + 10
        rows = [l for l in text.splitlines() if not l.startswith("#") and l != "q1,q2"]
        assert len(rows) == 20

    def test_h_series_csv(self, tmp_path):
        records = [HRecord(0.0, 30, 1.25, 400), HRecord(TWO_PI, 30, 0.75, 380)]
        path = tmp_path / "h.csv"
        write_h_series_csv(path, records)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,hbar,cells"
        assert lines[1].startswith("0,1.25,400")

    def test_snapshot_bytes_deterministic(self, tmp_path, fn3_spec):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_snapshot_csv(p1, sample_initial(fn3_spec, "disk", 100, seed=9), fn3_spec)
        write_snapshot_csv(p2, sample_initial(fn3_spec, "disk", 100, seed=9), fn3_spec)
        assert p1.read_bytes() == p2.read_bytes()
