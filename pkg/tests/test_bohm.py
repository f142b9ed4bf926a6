import math

import numpy as np
import pytest

from wavekit.bohm import (
    MASK_THRESHOLD,
    continuity_residual,
    crossing_histogram,
    decompose,
    equivariance_check,
    hj_residual,
    integrate_trajectories,
    integrate_trajectory,
    ks_distance,
    newton_consistency,
    quantum_potential,
    sample_positions,
    velocity_field,
)
from wavekit.errors import InvalidEnsembleError, UsageError
from wavekit.grid import SampledField, make_grid, sample
from wavekit.schrodinger2d import find_maxima

from conftest import BOHM_COUNT

GRID = make_grid(1, 1024, 40.0)
X = GRID.axis(0)
PERIODIC = make_grid(1, 256, 10 * np.pi)  # k = 2 fits ten periods
CORE = 1e-4  # residual floors are scored where R > 1e-4 max R


def free(t, sigma=1.0, grid=GRID):
    x = grid.axis(0)
    tau = 1 + 1j * t / (2 * sigma**2)
    return SampledField(grid, (2 * np.pi * sigma**2) ** -0.25 / np.sqrt(tau) * np.exp(-(x**2) / (4 * sigma**2 * tau)))


def ground(t):
    return SampledField(GRID, np.pi**-0.25 * np.exp(-(X**2) / 2 - 0.5j * t))


def harmonic(x):
    return 0.5 * x**2


def series(func, t_end, dt):
    return [(t, func(t)) for t in np.arange(0.0, t_end + dt / 2, dt)]


def sigma_ratio(t, sigma=1.0):
    return math.sqrt(1 + (t / (2 * sigma**2)) ** 2)


class TestDecompose:
    def test_plane_wave(self):
        f = decompose(sample(PERIODIC, lambda x: np.exp(2j * x)))
        np.testing.assert_allclose(f.R, 1.0, atol=1e-15)
        S = f.S - f.S[0]
        np.testing.assert_allclose(S, 2 * (PERIODIC.axis(0) - PERIODIC.axis(0)[0]), atol=1e-10)

    def test_real_gaussian_has_flat_phase(self):
        f = decompose(ground(0.0))
        assert np.nanmax(np.abs(f.S)) == 0.0

    def test_round_trip(self):
        psi = free(1.3)
        f = decompose(psi)
        err = np.abs(f.reconstruct() - psi.values)[f.mask]
        assert err.max() <= 1e-10

    def test_mask_threshold(self):
        f = decompose(ground(0.0))
        R = np.abs(ground(0.0).values)
        np.testing.assert_array_equal(f.mask, R > MASK_THRESHOLD * R.max())
        assert np.all(np.isnan(f.S[~f.mask]))

    def test_disconnected_region_warns(self):
        psi = sample(GRID, lambda x: np.exp(-((x - 8) ** 2)) + np.exp(-((x + 8) ** 2) + 1j * x))
        with pytest.warns(RuntimeWarning, match="components"):
            f = decompose(psi)
        assert np.abs(f.reconstruct() - psi.values)[f.mask].max() <= 1e-10

    def test_two_dimensional_unwrap_is_continuous(self):
        g = make_grid(2, 64, 2 * np.pi * 4)
        psi = sample(g, lambda x, y: np.exp(-(x**2 + y**2) / 20 + 1j * (3 * x + 2 * y)))
        f = decompose(psi)
        inner = f.mask
        jumps = np.abs(np.diff(np.where(inner, f.S, np.nan), axis=1))
        assert np.nanmax(jumps) < np.pi
        assert np.abs(f.reconstruct() - psi.values)[inner].max() <= 1e-10


class TestQuantumPotential:
    def test_ground_state_total_potential_flat(self):
        f = decompose(ground(0.0))
        Q = quantum_potential(f)
        core = np.abs(X) < 5
        np.testing.assert_allclose(Q[core], (1 - X[core] ** 2) / 2, atol=1e-8)
        np.testing.assert_allclose((Q + harmonic(X))[core], 0.5, atol=1e-8)

    def test_plane_wave_zero(self):
        Q = quantum_potential(decompose(sample(PERIODIC, lambda x: np.exp(2j * x))))
        assert np.abs(Q).max() <= 1e-12

    @pytest.mark.parametrize("sigma", [0.7, 1.0, 1.6])
    def test_gaussian_centre(self, sigma):
        Q = quantum_potential(decompose(free(0.0, sigma)))
        assert Q[GRID.points[0] // 2] == pytest.approx(1 / (4 * sigma**2), rel=1e-9)

    def test_masked_region_undefined(self):
        f = decompose(ground(0.0))
        assert np.all(np.isnan(quantum_potential(f)[~f.mask]))


class TestVelocity:
    def test_plane_wave(self):
        v = velocity_field(decompose(sample(PERIODIC, lambda x: np.exp(2j * x))))
        np.testing.assert_allclose(v[0], 2.0, atol=1e-10)

    def test_real_field_at_rest(self):
        # round-off in the spectral gradient is divided by R, so the mask edge is noisier
        v = velocity_field(decompose(ground(0.0)))[0]
        assert np.nanmax(np.abs(v[np.abs(X) < 5])) <= 1e-9
        assert np.nanmax(np.abs(v)) <= 1e-6

    def test_galilean_boost(self):
        psi = free(0.8)
        boosted = psi.with_values(psi.values * np.exp(1.5j * X))
        v0 = velocity_field(decompose(psi), psi)[0]
        v1 = velocity_field(decompose(boosted), boosted)[0]
        core = np.abs(X) < 6
        np.testing.assert_allclose(v1[core] - v0[core], 1.5, atol=1e-9)

    def test_free_gaussian_closed_form(self):
        t = 1.0
        v = velocity_field(decompose(free(t)), free(t))[0]
        core = np.abs(X) < 6
        np.testing.assert_allclose(v[core], X[core] * t / (4 + t**2), atol=1e-9)


class TestResiduals:
    T0 = 0.5

    def pair(self, func, dt):
        return func(self.T0 - dt / 2), func(self.T0 + dt / 2)

    def test_continuity_free_gaussian(self):
        # spreading time tau = 2 sigma^2 = 2, max R^2 = 1/sqrt(2 pi)
        scale = (2 * np.pi) ** -0.5 / 2
        assert continuity_residual(*self.pair(free, 1e-3), 1e-3) <= 1e-4 * scale

    def test_continuity_halving(self):
        r1 = continuity_residual(*self.pair(free, 1e-3), 1e-3)
        r2 = continuity_residual(*self.pair(free, 5e-4), 5e-4)
        assert 3.5 <= r1 / r2 <= 4.5

    def test_hj_halving_in_core(self):
        r1 = hj_residual(*self.pair(free, 1e-3), 1e-3, threshold=CORE)
        r2 = hj_residual(*self.pair(free, 5e-4), 5e-4, threshold=CORE)
        assert 3.5 <= r1 / r2 <= 4.5

    def test_hj_free_gaussian_small_on_full_mask(self):
        assert hj_residual(*self.pair(free, 1e-3), 1e-3) <= 1e-4

    def test_stationary_state(self):
        a, b = ground(0.0), ground(1e-3)
        assert continuity_residual(a, b, 1e-3) <= 1e-12
        assert hj_residual(a, b, 1e-3, harmonic, threshold=CORE) <= 1e-9
        assert hj_residual(a, b, 1e-3, harmonic) <= 1e-4

    def test_wrong_sign_quantum_potential(self):
        a, b = ground(0.0), ground(1e-3)
        Q = quantum_potential(decompose(a))
        mask = decompose(a).mask
        r = hj_residual(a, b, 1e-3, harmonic, q_sign=-1.0)
        assert r == pytest.approx(2 * np.nanmax(np.abs(Q[mask])), rel=1e-3)

    def test_unrelated_pair_is_large(self):
        a, b = free(0.5), free(0.5, sigma=1.3)
        with pytest.warns(RuntimeWarning, match="masks"):
            assert continuity_residual(a, b, 1e-3) > 10 * continuity_residual(*self.pair(free, 1e-3), 1e-3)
        with pytest.warns(RuntimeWarning, match="masks"):
            assert hj_residual(a, b, 1e-3) > 10 * hj_residual(*self.pair(free, 1e-3), 1e-3)

    def test_grid_mismatch(self):
        with pytest.raises(UsageError):
            continuity_residual(free(0.0), free(0.0, grid=PERIODIC), 1e-3)


class TestTrajectories:
    def test_plane_wave_uniform_motion(self):
        psi = sample(PERIODIC, lambda x: np.exp(2j * x))
        traj = integrate_trajectory(series(lambda t: psi, 1.0, 0.05), 0.0)
        np.testing.assert_allclose(traj.positions[:, 0], 2 * traj.times, atol=1e-8)
        assert not traj.truncated

    def test_free_gaussian_scaling(self):
        x0s = np.array([-2.0, -1.0, -0.3, 0.5, 1.5, 2.5])[:, None]
        for traj, x0 in zip(integrate_trajectories(series(free, 2.0, 0.01), x0s), x0s[:, 0]):
            exact = x0 * np.array([sigma_ratio(t) for t in traj.times])
            assert np.max(np.abs(traj.positions[:, 0] - exact) / abs(exact)) <= 1e-3

    def test_ground_state_static(self):
        for traj in integrate_trajectories(series(ground, 10.0, 0.05), np.linspace(-2, 2, 5)[:, None]):
            assert np.abs(traj.positions[:, 0] - traj.positions[0, 0]).max() <= 1e-6
            assert traj.times[-1] == pytest.approx(10.0)

    def test_velocity_matches_field(self):
        traj = integrate_trajectory(series(free, 1.0, 0.01), 1.0)
        for t, x, v in traj.samples:
            assert v[0] == pytest.approx(x[0] * t / (4 + t**2), abs=1e-9)

    def test_exit_flags_truncation(self):
        psi = sample(PERIODIC, lambda x: np.exp(2j * x))
        lower = PERIODIC.lower[0]
        traj = integrate_trajectory(series(lambda t: psi, 20.0, 0.05), lower + 1.0)
        assert traj.truncated
        assert np.all(np.diff(traj.times) > 0)

    def test_start_in_mask_flagged(self):
        traj = integrate_trajectory(series(ground, 0.2, 0.1), 15.0)
        assert traj.truncated and not traj.samples

    def test_no_crossing(self):
        x0s = np.sort(sample_positions(free(0.0), 100, 7)[:, 0])[:, None]
        trajs = integrate_trajectories(series(free, 1.0, 0.02), x0s)
        pos = np.array([t.positions[:, 0] for t in trajs])
        assert np.all(np.diff(pos, axis=0) > 0)

    def test_nonuniform_series_rejected(self):
        with pytest.raises(UsageError):
            integrate_trajectory([(0.0, free(0.0)), (0.1, free(0.1)), (0.3, free(0.3))], 0.0)


class TestNewton:
    def test_free_gaussian(self):
        s = series(free, 1.0, 0.01)
        for x0 in (-1.5, 0.4, 2.0):
            assert newton_consistency(integrate_trajectory(s, x0), s) <= 1e-3

    def test_plane_wave(self):
        psi = sample(PERIODIC, lambda x: np.exp(2j * x))
        s = series(lambda t: psi, 0.5, 0.05)
        assert newton_consistency(integrate_trajectory(s, 0.0), s) <= 1e-9

    def test_ground_state(self):
        s = series(ground, 1.0, 0.05)
        assert newton_consistency(integrate_trajectory(s, 0.7), s, harmonic) <= 1e-8

    def test_masked_samples_skipped(self):
        s = series(ground, 0.5, 0.05)
        traj = integrate_trajectory(s, 0.0)
        far = [(t, np.array([19.9]), v) for t, _, v in traj.samples]
        traj.samples = far
        with pytest.warns(RuntimeWarning, match="skipped"):
            assert newton_consistency(traj, s, harmonic) == 0.0


class TestEnsembles:
    def test_sampling_is_seeded(self):
        a = sample_positions(free(0.0), 50, 3)
        np.testing.assert_array_equal(a, sample_positions(free(0.0), 50, 3))
        assert not np.array_equal(a, sample_positions(free(0.0), 50, 4))

    def test_sampling_follows_density(self):
        assert ks_distance(sample_positions(free(0.0), 10000, 1), free(0.0)) <= 0.02

    def test_two_dimensional_sampling(self):
        g = make_grid(2, 64, 20.0)
        psi = sample(g, lambda x, y: np.exp(-((x - 1) ** 2 + y**2) / 4))
        pts = sample_positions(psi, 20000, 0)
        np.testing.assert_allclose(pts.mean(axis=0), [1.0, 0.0], atol=0.05)
        np.testing.assert_allclose(pts.std(axis=0), [1.0, 1.0], atol=0.05)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_free_gaussian_equivariance(self, seed):
        assert equivariance_check(series(free, 1.0, 0.01), 10000, seed) <= 0.02

    def test_stationary_equivariance(self):
        assert equivariance_check(series(ground, 1.0, 0.05), 10000, 0) <= 0.02

    def test_endpoints_follow_final_not_initial_density(self):
        s = series(free, 2.0, 0.02)
        trajs = integrate_trajectories(s, sample_positions(free(0.0), 10000, 0))
        ends = np.array([t.positions[-1, 0] for t in trajs])
        assert ks_distance(ends, free(2.0)) <= 0.02
        assert ks_distance(ends, free(0.0)) > 0.05

    def test_truncated_ensemble_invalid(self):
        # a packet moving at speed 4 leaves the small grid
        g = make_grid(1, 256, 20.0)
        x = g.axis(0)
        s = [(t, SampledField(g, free(t, grid=g).values * np.exp(4j * x))) for t in np.arange(0, 3.0, 0.01)]
        with pytest.raises(InvalidEnsembleError):
            equivariance_check(s, 2000, 0)

    def test_2d_rejected(self):
        g = make_grid(2, 16, 10.0)
        psi = sample(g, lambda x, y: np.exp(-(x**2 + y**2)))
        with pytest.raises(UsageError):
            equivariance_check([(0.0, psi), (0.1, psi)], 10, 0)


def histogram_peak_near(hist, target, window):
    centres = np.array([h[0] for h in hist])
    counts = np.array([h[1] for h in hist])
    near = np.abs(centres - target) <= window
    return centres[near][np.argmax(counts[near])]


@pytest.mark.slow
def test_two_slit_trajectories_reproduce_fringes(two_slit_open):
    result, stream, _ = two_slit_open
    crossings = stream.crossings()
    assert crossings.size > 0.1 * BOHM_COUNT
    width = 1.0
    edges = np.arange(-20.5, 20.5 + width / 2, width)
    hist = crossing_histogram(crossings, edges)
    maxima = [m for m in find_maxima(result.profile) if abs(m) < 15]
    assert len(maxima) >= 3
    for m in maxima:
        assert abs(histogram_peak_near(hist, m, 3.0) - m) <= width
