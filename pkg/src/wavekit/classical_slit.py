"""A point charge passing a grounded, infinitely thin conducting screen with slits.

Two-dimensional cross-section in Gaussian units: a line charge ``q`` has
potential ``-2 q ln r``.  The screen lies on ``x = 0``; each conductor
segment ``[y0, y1]`` carries an induced density expanded as

    lambda(u) = sum_n a_n T_n(u) / sqrt(1 - u^2),   y = c + h u,

which builds in the inverse square-root edge singularity.  The potential
and field of each mode are closed-form, so the boundary solve needs no
quadrature.  Collocation points are the Chebyshev roots, which are the
midpoints (in angle) of cosine-graded panels.

The charge feels only the induced field; the motion is quasi-static (the
density is re-solved at every force evaluation) and the magnetic force is
dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import (
    ConfigurationError,
    DomainError,
    ProximityError,
    SingularEvaluationError,
)

MIN_PANELS = 16


@dataclass(frozen=True)
class ScreenGeometry2D:
    segments: tuple[tuple[float, float], ...]
    outer_extent: float = 20.0

    def __post_init__(self):
        segs = tuple((float(a), float(b)) for a, b in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ConfigurationError("the screen needs at least one conductor segment")
        for a, b in segs:
            if not b > a:
                raise ConfigurationError(f"degenerate segment ({a}, {b})")
        for (_, b), (c, _) in zip(segs, segs[1:]):
            if not c > b:
                raise ConfigurationError("segments must be sorted and disjoint")

    @property
    def gaps(self) -> list[tuple[float, float]]:
        return [(b, c) for (_, b), (c, _) in zip(self.segments, self.segments[1:])]

    def distance(self, point) -> float:
        x, y = point
        best = math.inf
        for a, b in self.segments:
            dy = 0.0 if a <= y <= b else min(abs(y - a), abs(y - b))
            best = min(best, math.hypot(x, dy))
        return best


def two_slit_geometry(
    separation: float = 4.0,
    slit_width: float = 1.0,
    outer_extent: float = 20.0,
    shutter_closed: bool = False,
    closed_slit: str = "lower",
) -> ScreenGeometry2D:
    """Symmetric two-slit screen; the shutter fills the lower (or upper) gap."""
    lo = separation / 2 - slit_width / 2
    hi = separation / 2 + slit_width / 2
    if lo <= 0:
        raise ConfigurationError("slits overlap at the centre")
    segs = [(-outer_extent, -hi), (-lo, lo), (hi, outer_extent)]
    if shutter_closed:
        if closed_slit == "lower":
            segs = [(-outer_extent, lo), (hi, outer_extent)]
        elif closed_slit == "upper":
            segs = [(-outer_extent, -hi), (-lo, outer_extent)]
        else:
            raise ConfigurationError(f"closed_slit must be 'lower' or 'upper', got {closed_slit!r}")
    return ScreenGeometry2D(tuple(segs), outer_extent)


def plain_screen(outer_extent: float) -> ScreenGeometry2D:
    return ScreenGeometry2D(((-outer_extent, outer_extent),), outer_extent)


@dataclass(frozen=True)
class ChargeState:
    position: tuple[float, float]
    velocity: tuple[float, float]
    q: float = 1.0
    m: float = 1.0

    def __post_init__(self):
        if not self.m > 0:
            raise ConfigurationError("mass must be positive")

    @property
    def r(self) -> np.ndarray:
        return np.asarray(self.position, dtype=float)

    @property
    def v(self) -> np.ndarray:
        return np.asarray(self.velocity, dtype=float)


# --- closed forms --------------------------------------------------------------


def _w(z: np.ndarray) -> np.ndarray:
    # inverse Joukowski map onto the unit disc: |w| <= 1, w ~ 1/(2z) far away
    return z - np.sqrt(z - 1) * np.sqrt(z + 1)


def _powers(w: np.ndarray, n: int) -> np.ndarray:
    if w.size < 64:
        return w[..., None] ** np.arange(n)
    out = np.empty(w.shape + (n,), dtype=complex)
    out[..., 0] = 1.0
    for k in range(1, n):
        out[..., k] = out[..., k - 1] * w
    return out


def _local(points: np.ndarray, c: float, h: float) -> np.ndarray:
    # z = (y - c)/h - i x/h
    return (points[..., 1] - c) / h - 1j * points[..., 0] / h


def _log_moments(z: np.ndarray, n: int) -> np.ndarray:
    """``int_{-1}^{1} ln|z - u| T_k(u) / sqrt(1 - u^2) du`` for k < n."""
    w = _w(z)
    p = _powers(w, n)
    out = np.empty(z.shape + (n,))
    out[..., 0] = -np.pi * np.log(np.abs(2 * w))
    k = np.arange(1, n)
    out[..., 1:] = -np.pi / k * p[..., 1:].real
    return out


def _cauchy_moments(z: np.ndarray, n: int) -> np.ndarray:
    """``int_{-1}^{1} T_k(u) / ((z - u) sqrt(1 - u^2)) du`` for k < n."""
    w = _w(z)
    return np.pi * _powers(w, n) / (z - w)[..., None]


# --- panels and the boundary solve ----------------------------------------------


@dataclass
class PanelSet:
    """Cosine-graded panels and the Chebyshev density on each segment.

    ``coefficients[k]`` holds the mode amplitudes of segment ``k``;
    ``densities`` are the resulting panel-averaged line densities.
    """

    geometry: ScreenGeometry2D
    n_per_segment: int
    panels: list[tuple[float, float]]
    coefficients: np.ndarray
    _lu: tuple | None = field(default=None, repr=False)

    @property
    def centres(self) -> np.ndarray:
        return np.array([(a + b) / 2 for a, b in self.geometry.segments])

    @property
    def half_lengths(self) -> np.ndarray:
        return np.array([(b - a) / 2 for a, b in self.geometry.segments])

    @property
    def collocation(self) -> np.ndarray:
        """Collocation points ``(0, y)``, segment by segment."""
        return np.array([(0.0, m) for m, _ in self.panels])

    @property
    def densities(self) -> np.ndarray:
        n = self.n_per_segment
        edges = np.arange(n + 1) * np.pi / n
        k = np.arange(1, n)
        # int over a panel of cos(k theta) d theta
        weights = np.empty((n, n))
        weights[:, 0] = np.diff(edges)
        weights[:, 1:] = (np.sin(np.outer(edges[1:], k)) - np.sin(np.outer(edges[:-1], k))) / k
        out = []
        for a, h, (s0, s1) in zip(self.coefficients, self.half_lengths, _slices(len(self.panels), n)):
            charge = (h * weights @ a)[::-1]  # panels run upwards, theta runs downwards
            lengths = np.array([p[1] for p in self.panels[s0:s1]])
            out.append(charge / lengths)
        return np.concatenate(out)

    @property
    def panel_charges(self) -> np.ndarray:
        lengths = np.array([p[1] for p in self.panels])
        return self.densities * lengths

    @property
    def total_charge(self) -> float:
        return float(np.sum(np.pi * self.half_lengths * self.coefficients[:, 0]))

    def nearest_panel_length(self, point) -> float:
        """Length of the panel closest to ``point``."""
        x, y = point
        mids, lengths = np.asarray(self.panels).T
        d = np.hypot(x, np.maximum(0.0, np.abs(y - mids) - lengths / 2))
        return float(lengths[np.argmin(d)])

    def with_coefficients(self, coefficients: np.ndarray) -> "PanelSet":
        return replace(self, coefficients=coefficients)


def _slices(total: int, n: int):
    return [(s, s + n) for s in range(0, total, n)]


def build_panels(geometry: ScreenGeometry2D, n_per_segment: int) -> PanelSet:
    """``n_per_segment`` cosine-graded panels per segment; the edge panels are shortest."""
    if n_per_segment < MIN_PANELS:
        raise ConfigurationError(f"need at least {MIN_PANELS} panels per segment")
    n = n_per_segment
    theta = np.arange(n + 1) * np.pi / n
    panels = []
    for a, b in geometry.segments:
        c, h = (a + b) / 2, (b - a) / 2
        edges = c + h * np.cos(theta)[::-1]
        mids = c + h * np.cos((np.arange(n) + 0.5) * np.pi / n)[::-1]
        panels.extend(zip(mids.tolist(), np.diff(edges).tolist()))
    ps = PanelSet(geometry, n, panels, np.zeros((len(geometry.segments), n)))
    edge = max(min(ps.panels[i][1], ps.panels[i + n - 1][1]) for i in range(0, len(panels), n))
    for lo, hi in geometry.gaps:
        if edge > (hi - lo) / 8:
            raise ConfigurationError("edge panels are coarser than 1/8 of a slit width")
    return ps


def _system_matrix(panels: PanelSet) -> np.ndarray:
    n = panels.n_per_segment
    pts = panels.collocation
    blocks = []
    for c, h in zip(panels.centres, panels.half_lengths):
        z = _local(pts, c, h)
        on = np.abs(pts[:, 1] - c) <= h
        z = np.where(on, z.real + 0j, z)
        mom = _log_moments(z, n)
        mom[:, 0] += np.pi * math.log(h)
        blocks.append(-2 * h * mom)
    return np.hstack(blocks)


def factorize(panels: PanelSet) -> PanelSet:
    """LU factors of the collocation matrix; it depends on the geometry only."""
    if panels._lu is None:
        panels = replace(panels, _lu=scipy.linalg.lu_factor(_system_matrix(panels)))
    return panels


def bare_potential(q: float, source, points) -> np.ndarray:
    d = np.linalg.norm(np.asarray(points, dtype=float) - np.asarray(source, dtype=float), axis=-1)
    return -2 * q * np.log(d)


def solve_induced_density(panels: PanelSet, geometry: ScreenGeometry2D, charge: ChargeState) -> PanelSet:
    """Densities that make the total potential vanish on the conductor."""
    if geometry != panels.geometry:
        raise ConfigurationError("panels were built for another geometry")
    dist = geometry.distance(charge.position)
    if dist < panels.nearest_panel_length(charge.position):
        raise ProximityError(f"charge at distance {dist:g} is within one panel length of the conductor")
    panels = factorize(panels)
    rhs = -bare_potential(charge.q, charge.position, panels.collocation)
    a = scipy.linalg.lu_solve(panels._lu, rhs)
    return panels.with_coefficients(a.reshape(len(geometry.segments), panels.n_per_segment))


def induced_potential(panels: PanelSet, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = panels.n_per_segment
    total = np.zeros(pts.shape[0])
    for a, c, h in zip(panels.coefficients, panels.centres, panels.half_lengths):
        z = _local(pts, c, h)
        on = (pts[:, 0] == 0) & (np.abs(pts[:, 1] - c) <= h)
        z = np.where(on, z.real + 0j, z)
        mom = _log_moments(z, n)
        total += -2 * h * (np.pi * a[0] * math.log(h) + mom @ a)
    return total


def induced_field_at(panels: PanelSet, point) -> np.ndarray:
    """Field of the induced charge at ``point`` (off the conductor)."""
    x, y = map(float, point)
    n = panels.n_per_segment
    conj_e = 0j  # E_x - i E_y
    for (lo, hi), a, c, h in zip(panels.geometry.segments, panels.coefficients, panels.centres, panels.half_lengths):
        if x == 0 and lo <= y <= hi:
            raise SingularEvaluationError(f"point {point} lies on the conductor")
        z = np.array([(y - c) / h - 1j * x / h])
        conj_e += (2 / 1j) * (_cauchy_moments(z, n)[0] @ a)
    return np.array([conj_e.real, -conj_e.imag])


def boundary_residual(panels: PanelSet, charge: ChargeState, n_points: int = 100, seed: int = 0) -> float:
    """Worst ``|phi_total| / |phi_bare|`` at random conductor points."""
    rng = np.random.default_rng(seed)
    segs = panels.geometry.segments
    lengths = np.array([b - a for a, b in segs])
    k = rng.choice(len(segs), size=n_points, p=lengths / lengths.sum())
    y = np.array([segs[i][0] for i in k]) + rng.random(n_points) * lengths[k]
    pts = np.column_stack([np.zeros(n_points), y])
    bare = bare_potential(charge.q, charge.position, pts)
    return float(np.max(np.abs(induced_potential(panels, pts) + bare) / np.abs(bare)))


# --- dynamics ---------------------------------------------------------------------


@dataclass
class ClassicalTrajectory:
    times: list[float]
    states: list[ChargeState]
    energies: list[float]
    collided: bool = False
    transmitted: bool = False

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.states])

    @property
    def velocities(self) -> np.ndarray:
        return np.array([s.velocity for s in self.states])

    @property
    def energy_drift(self) -> float:
        e = np.asarray(self.energies)
        return float(np.max(np.abs(e - e[0])) / abs(e[0]))

    def resample(self, dt: float) -> np.ndarray:
        """Rows ``(t, x, y, vx, vy, energy)`` linearly interpolated to a uniform time grid."""
        t = np.asarray(self.times)
        grid = np.arange(t[0], t[-1] + 0.5 * dt, dt)
        grid = grid[grid <= t[-1]]
        cols = [self.positions[:, 0], self.positions[:, 1], self.velocities[:, 0], self.velocities[:, 1],
                np.asarray(self.energies)]
        return np.column_stack([grid] + [np.interp(grid, t, c) for c in cols])


class _Force:
    def __init__(self, geometry: ScreenGeometry2D, n_per_segment: int, q: float):
        self.geometry = geometry
        self.panels = factorize(build_panels(geometry, n_per_segment))
        self.q = q

    def __call__(self, r: np.ndarray):
        state = ChargeState(tuple(r), (0.0, 0.0), self.q)
        solved = solve_induced_density(self.panels, self.geometry, state)
        E = induced_field_at(solved, r)
        phi = float(induced_potential(solved, r)[0])
        return self.q * E, 0.5 * self.q * phi

    def too_close(self, r: np.ndarray) -> bool:
        return self.geometry.distance(r) < self.panels.nearest_panel_length(r)


def advance_trajectory(
    state: ChargeState,
    geometry: ScreenGeometry2D,
    dt: float,
    n_steps: int,
    n_per_segment: int = 64,
    safety: float = 0.002,
    stop_x: float | None = None,
) -> ClassicalTrajectory:
    """Velocity-Verlet integration with the density re-solved at every step.

    ``dt`` caps the step; near the screen the step is reduced to
    ``safety * min(distance / |v|, sqrt(distance / |a|))``.  Integration
    stops after ``n_steps`` steps, when ``x`` exceeds ``stop_x``, or when
    the charge comes within one panel length of the conductor (collision).
    """
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    if n_steps < 1:
        raise ConfigurationError("n_steps must be positive")
    force = _Force(geometry, n_per_segment, state.q)
    r, v, m = state.r.copy(), state.v.copy(), state.m
    if force.too_close(r):
        raise ProximityError("initial position is within one panel length of the conductor")
    F, U = force(r)
    t = 0.0
    traj = ClassicalTrajectory([t], [state], [0.5 * m * v @ v + U])
    for _ in range(n_steps):
        dist = geometry.distance(r)
        h = dt
        speed = math.sqrt(v @ v)
        acc = math.sqrt(F @ F) / m
        if speed > 0:
            h = min(h, safety * dist / speed)
        if acc > 0:
            h = min(h, safety * math.sqrt(dist / acc))
        v_half = v + 0.5 * h / m * F
        r_new = r + h * v_half
        if force.too_close(r_new) or _crosses_conductor(geometry, r, r_new):
            traj.collided = True
            break
        F, U = force(r_new)
        v = v_half + 0.5 * h / m * F
        r = r_new
        t += h
        traj.times.append(t)
        traj.states.append(ChargeState((float(r[0]), float(r[1])), (float(v[0]), float(v[1])), state.q, m))
        traj.energies.append(0.5 * m * v @ v + U)
        if stop_x is not None and r[0] >= stop_x:
            traj.transmitted = True
            break
    return traj


def _crosses_conductor(geometry: ScreenGeometry2D, a: np.ndarray, b: np.ndarray) -> bool:
    if (a[0] < 0) == (b[0] < 0) or a[0] == b[0]:
        return False
    s = -a[0] / (b[0] - a[0])
    y = a[1] + s * (b[1] - a[1])
    return any(lo <= y <= hi for lo, hi in geometry.segments)


@dataclass
class DeflectionResult:
    """``angle`` is NaN when the charge was not transmitted (see ``transmitted``)."""

    angle: float
    trajectory: ClassicalTrajectory
    n_per_segment: int
    dt: float

    @property
    def transmitted(self) -> bool:
        return self.trajectory.transmitted


def deflection_experiment(
    geometry: ScreenGeometry2D,
    shutter_closed: bool,
    initial: ChargeState,
    dt: float,
    n_steps: int,
    n_per_segment: int = 64,
    safety: float = 0.002,
    exit_x: float | None = None,
) -> DeflectionResult:
    """Exit angle ``atan2(vy, vx)`` at the plane ``x = exit_x``.

    ``geometry`` is the open two-slit screen; with ``shutter_closed`` the
    slit not containing the initial height is filled.  ``exit_x`` defaults
    to five slit spacings behind the screen.
    """
    gaps = geometry.gaps
    if len(gaps) != 2:
        raise ConfigurationError("the deflection experiment needs exactly two slits")
    centres = [(a + b) / 2 for a, b in gaps]
    spacing = centres[1] - centres[0]
    exit_x = 5 * spacing if exit_x is None else exit_x
    if shutter_closed:
        y0 = initial.position[1]
        shut = 0 if abs(y0 - centres[1]) <= abs(y0 - centres[0]) else 1
        segs = list(geometry.segments)
        merged = (segs[shut][0], segs[shut + 1][1])
        geometry = ScreenGeometry2D(tuple(segs[:shut] + [merged] + segs[shut + 2:]), geometry.outer_extent)
    traj = advance_trajectory(initial, geometry, dt, n_steps, n_per_segment, safety, stop_x=exit_x)
    if not traj.transmitted:
        return DeflectionResult(math.nan, traj, n_per_segment, dt)
    # read the velocity at the exit plane, not at the overshooting step
    a, b = traj.states[-2], traj.states[-1]
    s = (exit_x - a.position[0]) / (b.position[0] - a.position[0])
    vx, vy = (1 - s) * a.v + s * b.v
    return DeflectionResult(math.atan2(vy, vx), traj, n_per_segment, dt)


def quantization_length(momentum: float) -> float:
    """``l = h / p = 2 pi / p`` with hbar = 1."""
    if not momentum > 0:
        raise DomainError(f"momentum must be positive, got {momentum}")
    return 2 * math.pi / momentum
