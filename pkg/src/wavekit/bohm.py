"""Madelung decomposition and Bohmian trajectories of sampled wave functions.

``psi = R exp(iS)`` with hbar = m = 1.  The quantum potential is
``Q = -Lap(R) / (2R)``, the sign that makes the Hamilton-Jacobi equation
``dS/dt + |grad S|^2/2 + V + Q = 0`` hold for exact solutions.

Nothing here solves the Schrodinger equation; wave functions come from the
split-step propagator or from closed forms.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage, stats

from .errors import InvalidEnsembleError, UsageError
from .grid import Grid, SampledField, gradient, laplacian, spectral_derivative

MASK_THRESHOLD = 1e-8
TRUNCATION_LIMIT = 0.2


@dataclass(frozen=True, eq=False)
class MadelungFields:
    """Amplitude ``R`` and unwrapped phase ``S``; ``S`` is NaN where masked."""

    grid: Grid
    R: np.ndarray
    S: np.ndarray
    mask: np.ndarray  # True where R is large enough to carry a phase

    def reconstruct(self) -> np.ndarray:
        # masked nodes keep their amplitude with zero phase
        return self.R * np.exp(1j * np.where(self.mask, self.S, 0.0))


def density_mask(R: np.ndarray, threshold: float = MASK_THRESHOLD) -> np.ndarray:
    return R > threshold * R.max()


def _unwrap_component(phase: np.ndarray, comp: np.ndarray, R: np.ndarray) -> np.ndarray:
    # Unwrap along axis 0 through the densest node, then along the last axis
    # from that line; 1-D is the first pass alone.
    out = np.full(phase.shape, np.nan)
    ref = np.unravel_index(np.argmax(np.where(comp, R, -1.0)), R.shape)
    if phase.ndim == 1:
        idx = np.flatnonzero(comp)
        out[idx] = np.unwrap(phase[idx])
        return out - out[ref] + phase[ref]
    if phase.ndim != 2:
        raise UsageError("phase unwrapping is implemented for 1-D and 2-D fields")
    j = ref[1]
    col_rows = np.flatnonzero(comp[:, j])
    spine = np.full(phase.shape[0], np.nan)
    spine[col_rows] = np.unwrap(phase[col_rows, j])
    for i in range(phase.shape[0]):
        cols = np.flatnonzero(comp[i])
        if cols.size == 0:
            continue
        row = np.unwrap(phase[i, cols])
        if not np.isnan(spine[i]):
            anchor = int(np.searchsorted(cols, j))
            row += spine[i] - row[anchor]
        out[i, cols] = row
    return out


def decompose(psi: SampledField, threshold: float = MASK_THRESHOLD) -> MadelungFields:
    if psi.space != "position":
        raise UsageError("decompose needs a position-space wave function")
    R = np.abs(psi.values)
    if not R.max() > 0:
        raise UsageError("wave function vanishes identically")
    mask = density_mask(R, threshold)
    phase = np.angle(psi.values)
    labels, n = ndimage.label(mask)
    if n > 1:
        warnings.warn(
            f"high-density region has {n} components; each carries an arbitrary phase offset",
            RuntimeWarning,
            stacklevel=2,
        )
    S = np.full(R.shape, np.nan)
    for c in range(1, n + 1):
        comp = labels == c
        S = np.where(comp, _unwrap_component(phase, comp, R), S)
    return MadelungFields(psi.grid, R, S, mask)


def _quantum_potential(grid: Grid, R: np.ndarray, mask: np.ndarray) -> np.ndarray:
    lap = laplacian(SampledField(grid, R)).values.real
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(mask, -0.5 * lap / R, np.nan)


def quantum_potential(fields: MadelungFields) -> np.ndarray:
    """``-Lap(R) / (2R)``, NaN where masked."""
    return _quantum_potential(fields.grid, fields.R, fields.mask)


def _current_velocity(psi: SampledField, mask: np.ndarray) -> np.ndarray:
    # grad S = Im(conj(psi) grad psi) / |psi|^2, which needs no unwrapped phase
    dens = np.abs(psi.values) ** 2
    grads = gradient(psi)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = [np.where(mask, np.imag(np.conj(psi.values) * g) / dens, np.nan) for g in grads]
    return np.stack(v)


def velocity_field(fields: MadelungFields, psi: SampledField | None = None) -> np.ndarray:
    """``grad S`` as an array of shape ``(dimension, *grid.shape)``, NaN where masked.

    The gradient is taken spectrally from ``psi`` (rebuilt from ``R`` and
    ``S`` when not given), so phase jumps of 2 pi never enter.
    """
    if psi is None:
        psi = SampledField(fields.grid, fields.reconstruct())
    return _current_velocity(psi, fields.mask)


def _pair_masks(psi0: SampledField, psi1: SampledField, threshold: float) -> np.ndarray:
    if psi0.grid != psi1.grid:
        raise UsageError("the two slices live on different grids")
    m0 = density_mask(np.abs(psi0.values), threshold)
    m1 = density_mask(np.abs(psi1.values), threshold)
    disagree = np.count_nonzero(m0 ^ m1)
    if disagree > 0.1 * max(1, np.count_nonzero(m0 | m1)):
        warnings.warn(f"masks of the two slices differ at {disagree} nodes", RuntimeWarning, stacklevel=3)
    return m0 & m1


def _divergence(grid: Grid, components: Sequence[np.ndarray]) -> np.ndarray:
    return sum(spectral_derivative(SampledField(grid, c), a).values.real for a, c in enumerate(components))


def continuity_residual(
    psi_t0: SampledField, psi_t1: SampledField, dt: float, threshold: float = MASK_THRESHOLD
) -> float:
    """``max |d(R^2)/dt + div(R^2 grad S)|`` at the midpoint of the two slices."""
    mask = _pair_masks(psi_t0, psi_t1, threshold)
    grid = psi_t0.grid
    ddt = (np.abs(psi_t1.values) ** 2 - np.abs(psi_t0.values) ** 2) / dt
    div = 0.0
    for psi in (psi_t0, psi_t1):
        current = [np.imag(np.conj(psi.values) * g) for g in gradient(psi)]
        div = div + 0.5 * _divergence(grid, current)
    return float(np.max(np.abs(ddt + div)[mask]))


def _potential_array(V, grid: Grid) -> np.ndarray:
    if V is None:
        return np.zeros(grid.shape)
    if callable(V):
        return np.asarray(V(*grid.mesh()), dtype=float) * np.ones(grid.shape)
    V = np.asarray(V, dtype=float)
    if V.shape != grid.shape:
        raise UsageError("potential does not match the grid")
    return V


def hj_residual(
    psi_t0: SampledField,
    psi_t1: SampledField,
    dt: float,
    V=None,
    threshold: float = MASK_THRESHOLD,
    q_sign: float = 1.0,
) -> float:
    """``max |dS/dt + |grad S|^2/2 + V + Q|`` at the midpoint of the two slices.

    ``dS/dt`` is the phase of ``psi_t1 conj(psi_t0)`` over ``dt``, which is
    free of unwrapping ambiguity.  ``q_sign = -1`` flips the quantum
    potential (a negative control).
    """
    mask = _pair_masks(psi_t0, psi_t1, threshold)
    grid = psi_t0.grid
    Varr = _potential_array(V, grid)
    dSdt = np.angle(psi_t1.values * np.conj(psi_t0.values)) / dt
    spatial = 0.0
    for psi in (psi_t0, psi_t1):
        R = np.abs(psi.values)
        m = density_mask(R, threshold)
        v = _current_velocity(psi, m)
        Q = _quantum_potential(grid, R, m)
        spatial = spatial + 0.5 * (0.5 * np.sum(v**2, axis=0) + Varr + q_sign * Q)
    res = np.abs(dSdt + spatial)
    return float(np.max(res[mask]))


# --- trajectories -----------------------------------------------------------


@dataclass
class BohmTrajectory:
    samples: list[tuple[float, np.ndarray, np.ndarray]] = field(default_factory=list)
    truncated: bool = False
    reason: str = ""

    @property
    def times(self) -> np.ndarray:
        return np.array([s[0] for s in self.samples])

    @property
    def positions(self) -> np.ndarray:
        return np.array([s[1] for s in self.samples])

    @property
    def velocities(self) -> np.ndarray:
        return np.array([s[2] for s in self.samples])


def interpolate(grid: Grid, components: np.ndarray, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Multilinear interpolation of a vector field ``(d, *grid.shape)`` at ``(n, d)`` points.

    Points outside the node hull, or touching a NaN node, are invalid.
    """
    d = grid.dimension
    n = points.shape[0]
    u = (points - np.array(grid.lower)) / np.array(grid.spacing)
    finite = np.all(np.isfinite(u), axis=1)
    u = np.where(finite[:, None], u, 0.0)
    base = np.floor(u).astype(int)
    frac = u - base
    inside = finite & np.all((base >= 0) & (base <= np.array(grid.points) - 2), axis=1)
    base = np.where(inside[:, None], base, 0)
    out = np.zeros((n, d))
    for corner in range(2**d):
        offs = np.array([(corner >> a) & 1 for a in range(d)])
        w = np.prod(np.where(offs == 1, frac, 1 - frac), axis=1)
        idx = tuple((base + offs).T)
        for a in range(d):
            out[:, a] += w * components[a][idx]
    valid = inside & np.all(np.isfinite(out), axis=1)
    return np.where(valid[:, None], out, np.nan), valid


class VelocityFrame:
    """Velocity field of one time slice with (bi)linear interpolation."""

    def __init__(self, psi: SampledField, threshold: float = MASK_THRESHOLD):
        if psi.space != "position":
            raise UsageError("velocity frames need position-space wave functions")
        self.grid = psi.grid
        R = np.abs(psi.values)
        self.v = _current_velocity(psi, density_mask(R, threshold))

    @classmethod
    def from_values(cls, grid: Grid, values: np.ndarray, threshold: float = MASK_THRESHOLD):
        return cls(SampledField(grid, values), threshold)

    def __call__(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Velocities at ``points`` (shape ``(n, d)``) and a validity flag per point."""
        return interpolate(self.grid, self.v, points)


def _rk4_step(x, h, f0: VelocityFrame, f1: VelocityFrame):
    def vel(p, s):
        a, ok_a = f0(p)
        b, ok_b = f1(p)
        return (1 - s) * a + s * b, ok_a & ok_b

    k1, ok1 = vel(x, 0.0)
    k2, ok2 = vel(x + 0.5 * h * k1, 0.5)
    k3, ok3 = vel(x + 0.5 * h * k2, 0.5)
    k4, ok4 = vel(x + h * k3, 1.0)
    x_new = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x_new, ok1 & ok2 & ok3 & ok4


class Ensemble:
    """Bohmian trajectories advanced together, frame pair by frame pair.

    Dead trajectories (left the grid or entered the mask) keep their last
    position and are flagged.
    """

    def __init__(self, positions, frame: VelocityFrame, t0: float):
        self.x = np.array(positions, dtype=float).reshape(len(positions), -1)
        self.t = t0
        self.frame = frame
        v, ok = frame(self.x)
        self.alive = ok
        self.v = v

    def advance(self, frame: VelocityFrame, t1: float) -> None:
        h = t1 - self.t
        x_new, ok = _rk4_step(self.x[self.alive], h, self.frame, frame)
        v_new, ok_v = frame(x_new)
        good = ok & ok_v
        idx = np.flatnonzero(self.alive)
        self.x[idx[good]] = x_new[good]
        self.v[idx[good]] = v_new[good]
        self.alive[idx[~good]] = False
        self.t = t1
        self.frame = frame


def require_intact(ens: Ensemble, limit: float = TRUNCATION_LIMIT) -> None:
    """Reject an ensemble in which more than ``limit`` of the trajectories were truncated."""
    n = ens.alive.size
    lost = int(np.count_nonzero(~ens.alive))
    if lost > limit * n:
        raise InvalidEnsembleError(f"{lost} of {n} trajectories truncated")


def _series(psi_series) -> list[tuple[float, SampledField]]:
    items = [(float(t), f) for t, f in psi_series]
    if len(items) < 2:
        raise UsageError("a series needs at least two slices")
    t = np.array([s[0] for s in items])
    steps = np.diff(t)
    if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * abs(steps[0]):
        raise UsageError("slices must be uniformly spaced in increasing time")
    return items


def integrate_trajectories(psi_series, x0s, threshold: float = MASK_THRESHOLD) -> list[BohmTrajectory]:
    """RK4 trajectories through a sequence of ``(t, psi)`` slices, one step per slice."""
    items = _series(psi_series)
    frames = (VelocityFrame(f, threshold) for _, f in items)
    first = next(frames)
    ens = Ensemble(x0s, first, items[0][0])
    trajs = [BohmTrajectory() for _ in range(ens.x.shape[0])]
    for k in np.flatnonzero(ens.alive):
        trajs[k].samples.append((ens.t, ens.x[k].copy(), ens.v[k].copy()))
    for k in np.flatnonzero(~ens.alive):
        trajs[k].truncated, trajs[k].reason = True, "starts outside the unmasked region"
    for (t, _), frame in zip(items[1:], frames):
        was = ens.alive.copy()
        ens.advance(frame, t)
        for k in np.flatnonzero(ens.alive):
            trajs[k].samples.append((t, ens.x[k].copy(), ens.v[k].copy()))
        for k in np.flatnonzero(was & ~ens.alive):
            trajs[k].truncated, trajs[k].reason = True, f"left the grid or entered the mask at t={t:g}"
    return trajs


def integrate_trajectory(psi_series, x0, threshold: float = MASK_THRESHOLD) -> BohmTrajectory:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    return integrate_trajectories(psi_series, x0[None, :], threshold)[0]


def newton_consistency(trajectory: BohmTrajectory, psi_series, V=None, threshold: float = MASK_THRESHOLD) -> float:
    """``max |dv/dt + grad(V + Q)|`` over interior trajectory samples.

    ``dv/dt`` is a centred difference along the trajectory; ``grad(V + Q)``
    is a second-order finite difference on each slice, interpolated to the
    sample.  Samples touching the mask are skipped with a warning.
    """
    items = dict((round(t, 12), f) for t, f in _series(psi_series))
    s = trajectory.samples
    if len(s) < 3:
        raise UsageError("trajectory too short for a centred difference")
    worst = 0.0
    skipped = 0
    for k in range(1, len(s) - 1):
        t, x, _ = s[k]
        psi = items.get(round(t, 12))
        if psi is None:
            raise UsageError(f"no slice at t={t}")
        dvdt = (s[k + 1][2] - s[k - 1][2]) / (s[k + 1][0] - s[k - 1][0])
        grid = psi.grid
        R = np.abs(psi.values)
        total = _quantum_potential(grid, R, density_mask(R, threshold)) + _potential_array(V, grid)
        force = np.gradient(total, *grid.spacing)
        if grid.dimension == 1:
            force = [force]
        f, ok = interpolate(grid, -np.stack(force), np.asarray(x, dtype=float)[None, :])
        if not ok[0]:
            skipped += 1
            continue
        worst = max(worst, float(np.max(np.abs(dvdt - f[0]))))
    if skipped:
        warnings.warn(f"{skipped} samples skipped in the masked region", RuntimeWarning, stacklevel=2)
    return worst


# --- ensembles ----------------------------------------------------------------


def _cdf_1d(psi: SampledField):
    x = psi.grid.axis(0)
    dens = psi.density
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(x))])
    cum /= cum[-1]
    return x, cum


def sample_positions(psi: SampledField, n: int, seed: int) -> np.ndarray:
    """``n`` positions drawn from ``|psi|^2``, shape ``(n, d)``.

    1-D uses the inverse of the piecewise-linear grid CDF.  Higher
    dimensions pick a cell with probability proportional to ``|psi|^2``
    and place the point uniformly within the cell around the node.
    """
    rng = np.random.default_rng(seed)
    grid = psi.grid
    if grid.dimension == 1:
        x, cum = _cdf_1d(psi)
        keep = np.concatenate([[True], np.diff(cum) > 0])
        return np.interp(rng.random(n), cum[keep], x[keep])[:, None]
    p = psi.density.ravel()
    cells = rng.choice(p.size, size=n, p=p / p.sum())
    idx = np.array(np.unravel_index(cells, grid.shape)).T
    jitter = rng.random((n, grid.dimension)) - 0.5
    return np.array(grid.lower) + (idx + jitter) * np.array(grid.spacing)


def ks_distance(samples: np.ndarray, psi: SampledField) -> float:
    """Kolmogorov-Smirnov distance between 1-D samples and the ``|psi|^2`` CDF."""
    x, cum = _cdf_1d(psi)
    return float(stats.kstest(np.ravel(samples), lambda s: np.interp(s, x, cum)).statistic)


def equivariance_check(psi_series, n_trajectories: int, seed: int, threshold: float = MASK_THRESHOLD) -> float:
    """KS distance between Bohmian endpoints and ``|psi_T|^2`` (1-D series)."""
    items = _series(psi_series)
    psi0 = items[0][1]
    if psi0.grid.dimension != 1:
        raise UsageError("equivariance_check compares 1-D marginals; use crossing_histogram in 2-D")
    x0 = sample_positions(psi0, n_trajectories, seed)
    frames = iter(VelocityFrame(f, threshold) for _, f in items)
    ens = Ensemble(x0, next(frames), items[0][0])
    for (t, _), frame in zip(items[1:], frames):
        ens.advance(frame, t)
    require_intact(ens)
    return ks_distance(ens.x[ens.alive, 0], items[-1][1])


class StreamingEnsemble:
    """Trajectory ensemble driven by a propagator callback.

    Every ``stride`` propagator steps the ensemble takes one RK4 step.  When
    ``plane_x`` is given, the transverse coordinate at which each trajectory
    first crosses ``x = plane_x`` is recorded (linear interpolation).
    """

    def __init__(self, psi0: SampledField, positions, dt: float, stride: int = 5, plane_x: float | None = None,
                 threshold: float = MASK_THRESHOLD):
        self.grid = psi0.grid
        self.dt = dt
        self.stride = stride
        self.threshold = threshold
        self.ensemble = Ensemble(positions, VelocityFrame(psi0, threshold), 0.0)
        self.plane_x = plane_x
        self.crossing = np.full(self.ensemble.x.shape[0], np.nan)
        self._count = 0

    def __call__(self, t: float, vals: np.ndarray) -> None:
        self._count += 1
        if self._count % self.stride:
            return
        ens = self.ensemble
        before = ens.x.copy()
        ens.advance(VelocityFrame.from_values(self.grid, vals, self.threshold), t)
        if self.plane_x is not None:
            fresh = np.isnan(self.crossing) & (before[:, 0] < self.plane_x) & (ens.x[:, 0] >= self.plane_x)
            s = (self.plane_x - before[fresh, 0]) / (ens.x[fresh, 0] - before[fresh, 0])
            self.crossing[fresh] = before[fresh, 1] + s * (ens.x[fresh, 1] - before[fresh, 1])

    def crossings(self) -> np.ndarray:
        return self.crossing[np.isfinite(self.crossing)]


def crossing_histogram(crossings: np.ndarray, edges: np.ndarray) -> list[tuple[float, float]]:
    """Normalised histogram of crossing coordinates as ``(bin centre, density)`` pairs."""
    counts, edges = np.histogram(crossings, bins=edges, density=True)
    centres = 0.5 * (edges[1:] + edges[:-1])
    return list(zip(centres.tolist(), counts.tolist()))
