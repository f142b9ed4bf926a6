import numpy as np
import pytest

from wavekit.debroglie import (
    PacketParams,
    default_grid,
    evaluate_packet,
    fitted_velocity,
    make_packet,
    peak_position,
    peak_trajectory,
    sample_packet,
    schrodinger_residual,
    spherical_j0,
)
from wavekit.errors import ConfigurationError, ResolutionError, UntrackedPeakError
from wavekit.grid import SampledField, make_grid

GRID = default_grid()


class TestMakePacket:
    @pytest.mark.parametrize(
        "s, v, omega",
        [(1.0, (1, 0, 0), 1.0), (2.0, (0, 0, 0), 2.0), (1.0, (3, 4, 0), 13.0)],
    )
    def test_dispersion(self, s, v, omega):
        assert make_packet(s, v).omega == omega

    @pytest.mark.parametrize("s", [0.0, -1.0])
    def test_rejects_nonpositive_width(self, s):
        with pytest.raises(ConfigurationError):
            make_packet(s, (1, 0, 0))

    def test_construction_enforces_dispersion(self):
        with pytest.raises(ConfigurationError):
            PacketParams(1.0, (1.0, 0.0, 0.0), 0.5)


class TestEvaluate:
    def test_j0_series_branch(self):
        x = np.array([0.99e-4, 1.01e-4, 2.0])
        assert spherical_j0(0.0) == 1.0
        np.testing.assert_allclose(spherical_j0(x), np.sin(x) / x, rtol=1e-15)

    def test_peak_modulus_one(self):
        p = make_packet(1.3, (0.4, -0.2, 0.9))
        t = 2.5
        assert abs(evaluate_packet(p, p.velocity * t, t)) == pytest.approx(1.0, abs=1e-15)

    def test_first_zero(self):
        p = make_packet(2.0, (1, 0, 0))
        r = np.array([0.0, np.pi / 2, 0.0])
        assert abs(evaluate_packet(p, r, 0.0)) < 1e-15

    def test_origin_at_t0(self):
        assert evaluate_packet(make_packet(1.0, (1, 0, 0)), (0, 0, 0), 0.0) == 1 + 0j

    def test_modulus_bounded(self):
        p = make_packet(0.7, (1, 2, 0))
        f = sample_packet(p, make_grid(3, 16, 12.0), 0.8)
        assert np.abs(f.values).max() <= 1.0 + 1e-15


class TestSample:
    def test_peak_node_value(self):
        p = make_packet(1.0, (0.3, 0, 0))
        f = sample_packet(p, GRID, 1.0)  # v t = 0.3 lies on a node
        assert np.abs(f.values).max() == pytest.approx(1.0, abs=1e-15)

    def test_radial_symmetry(self):
        p = make_packet(1.0, (0.3, -0.5, 0.2))
        t = 1.7
        rng = np.random.default_rng(0)
        for radius in (0.4, 1.3, 5.0):
            dirs = rng.normal(size=(6, 3))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            mods = [abs(evaluate_packet(p, p.velocity * t + radius * d, t)) for d in dirs]
            assert np.ptp(mods) <= 1e-12

    def test_time_shift_translates_modulus(self):
        p = make_packet(1.0, (0.6, 0, 0))
        a = np.abs(sample_packet(p, GRID, 0.0).values)
        b = np.abs(sample_packet(p, GRID, 0.5).values)  # shift by one node
        np.testing.assert_allclose(b[1:], a[:-1], atol=1e-12)


class TestResidual:
    def test_exact_packet_small(self):
        p = make_packet(1.0, (1, 0, 0))
        assert schrodinger_residual(p, GRID, 0.3, 1e-4) <= 1e-4

    def test_dt_halving_quarters_residual(self):
        p = make_packet(1.0, (1, 0, 0))
        r1 = schrodinger_residual(p, GRID, 0.3, 1e-4)
        r2 = schrodinger_residual(p, GRID, 0.3, 5e-5)
        assert 3.5 <= r1 / r2 <= 4.5

    def test_wrong_dispersion_leaves_half(self):
        p = make_packet(1.0, (1, 0, 0))
        r = schrodinger_residual(p, GRID, 0.3, 1e-4, omega=0.5)
        assert r == pytest.approx(0.5, abs=1e-3)

    def test_wrong_dispersion_independent_of_resolution(self):
        p = make_packet(1.0, (1, 0, 0))
        fine = make_grid(3, 64, 64 * 0.2)
        assert schrodinger_residual(p, fine, 0.3, 1e-4, omega=0.5) == pytest.approx(0.5, abs=1e-3)

    def test_stationary_packet(self):
        p = make_packet(1.0, (0, 0, 0))
        assert schrodinger_residual(p, GRID, 0.3, 1e-4) <= 1e-4

    def test_under_resolved(self):
        p = make_packet(1.0, (1, 0, 0))
        with pytest.raises(ResolutionError):
            schrodinger_residual(p, make_grid(3, 16, 16.0), 0.0, 1e-4)


class TestPeak:
    def test_tracks_vt(self):
        p = make_packet(1.0, (0.83, -0.41, 0.27))
        h = GRID.spacing[0]
        for t in (0.0, 0.7, 1.9):
            pos = peak_position(sample_packet(p, GRID, t))
            assert np.max(np.abs(pos - p.velocity * t)) <= 0.05 * h

    def test_t0_at_origin(self):
        pos = peak_position(sample_packet(make_packet(1.0, (2, 1, 0)), GRID, 0.0))
        np.testing.assert_allclose(pos, 0.0, atol=1e-12)

    def test_translation_equivariance(self):
        p = make_packet(1.0, (0.5, 0, 0))
        f = sample_packet(p, GRID, 0.37)
        shifted = SampledField(GRID, np.roll(f.values, (2, -1, 3), axis=(0, 1, 2)))
        np.testing.assert_allclose(
            peak_position(shifted) - peak_position(f), np.array([2, -1, 3]) * GRID.spacing[0], atol=1e-12
        )

    def test_boundary_peak_rejected(self):
        p = make_packet(1.0, (0, 0, 0))
        g = make_grid(3, 16, 4.8, 2.4)  # origin is the first node
        with pytest.raises(UntrackedPeakError):
            peak_position(sample_packet(p, g, 0.0))


class TestTrajectory:
    TIMES = np.linspace(0.0, 1.0, 11)

    def test_fitted_speed(self):
        p = make_packet(1.0, (1, 0, 0))
        slope = fitted_velocity(peak_trajectory(p, self.TIMES))
        assert np.linalg.norm(slope - p.velocity) <= 1e-3

    def test_stationary(self):
        for _, pos in peak_trajectory(make_packet(1.0, (0, 0, 0)), self.TIMES):
            np.testing.assert_allclose(pos, 0.0, atol=1e-12)

    def test_doubling_velocity(self):
        a = fitted_velocity(peak_trajectory(make_packet(1.0, (0.7, 0.2, 0)), self.TIMES))
        b = fitted_velocity(peak_trajectory(make_packet(1.0, (1.4, 0.4, 0)), self.TIMES))
        np.testing.assert_allclose(b, 2 * a, rtol=2e-3, atol=2e-3)
