"""Two-slit diffraction of a 2-D wave packet by split-step Fourier propagation.

Axis 0 is the longitudinal coordinate ``x`` (the packet travels towards
+x), axis 1 the transverse coordinate ``y``.  Units are hbar = m = 1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
import scipy.fft

from .errors import ConfigurationError, InsufficientFringesError, UsageError
from .grid import Grid, SampledField, check_boundary_decay, fft_workers, make_grid, norm_squared

Wavefunction2D = SampledField


@dataclass(frozen=True)
class SlitScreen:
    """Opaque screen of finite thickness centred on ``x = screen_x``.

    ``open_flags[i]`` is the shutter of slit ``i``; a closed slit is filled
    with barrier material.
    """

    screen_x: float = 0.0
    slit_centers: tuple[float, ...] = (-2.0, 2.0)
    slit_width: float = 1.0
    open_flags: tuple[bool, ...] = (True, True)
    thickness: float = 1.0
    barrier_height: float = 250.0

    def __post_init__(self):
        if len(self.open_flags) != len(self.slit_centers):
            raise ConfigurationError("one shutter flag per slit is required")
        if not (self.slit_width > 0 and self.thickness > 0 and self.barrier_height > 0):
            raise ConfigurationError("slit width, thickness and barrier height must be positive")
        c = sorted(self.slit_centers)
        if any(b - a <= self.slit_width for a, b in zip(c, c[1:])):
            raise ConfigurationError("slits overlap")

    def leakage(self, energy: float) -> float:
        """Tunnelling suppression ``exp(-2 kappa thickness)`` at kinetic energy ``energy``."""
        if energy >= self.barrier_height:
            return 1.0
        kappa = math.sqrt(2 * (self.barrier_height - energy))
        return math.exp(-2 * kappa * self.thickness)


@dataclass
class TwoSlitSetup:
    """Defaults of the reference experiment: v = 10, d = 4, slit width 1, D = 40."""

    points: tuple[int, int] = (1024, 512)
    extent: tuple[float, float] = (80.0, 64.0)
    center: tuple[float, float] = (6.0, 0.0)
    packet_center: tuple[float, float] = (-17.0, 0.0)
    packet_velocity: tuple[float, float] = (10.0, 0.0)
    packet_width: float = 1.5
    screen: SlitScreen = field(default_factory=SlitScreen)
    observe_x: float = 40.0
    dt: float = 2e-3
    duration: float = 7.0
    absorber_width: float = 4.0

    def grid(self) -> Grid:
        return make_grid(2, self.points, self.extent, self.center)

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def distance(self) -> float:
        return self.observe_x - self.screen.screen_x

    @property
    def separation(self) -> float:
        c = sorted(self.screen.slit_centers)
        return c[-1] - c[0] if len(c) > 1 else float("nan")

    def fraunhofer_spacing(self) -> float:
        speed = math.hypot(*self.packet_velocity)
        return 2 * math.pi / speed * self.distance / self.separation


def _require_2d(psi: SampledField) -> None:
    if psi.grid.dimension != 2 or psi.space != "position":
        raise UsageError("expected a 2-D position-space wave function")


def initial_packet_2d(
    grid: Grid,
    center,
    velocity,
    width: float,
    screen: SlitScreen | None = None,
    tail_tol: float = 1e-12,
) -> Wavefunction2D:
    """Normalised ``exp(-|r - c|^2 / (4 w^2) + i v.r)``; ``|psi|^2`` has std ``w`` per axis."""
    if grid.dimension != 2:
        raise ConfigurationError("the two-slit packet needs a 2-D grid")
    if not width > 0:
        raise ConfigurationError("packet width must be positive")
    cx, cy = center
    vx, vy = velocity
    X, Y = grid.mesh()
    vals = np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (4 * width**2) + 1j * (vx * X + vy * Y))
    psi = SampledField(grid, vals)
    psi = psi.with_values(vals / math.sqrt(norm_squared(psi)))
    check_boundary_decay(psi, tail_tol)
    if screen is not None:
        front = screen.screen_x - screen.thickness / 2
        reach = 2 * width * math.sqrt(-math.log(tail_tol))
        if cx + reach > front:
            raise ConfigurationError(
                f"packet tail reaches the screen: amplitude above {tail_tol:g} at x={front}"
            )
    return psi


def screen_potential(screen: SlitScreen | None, grid: Grid) -> np.ndarray:
    """Barrier of height ``screen.barrier_height`` on screen material, zero elsewhere."""
    if screen is None:
        return np.zeros(grid.shape)
    dx, dy = grid.spacing
    if screen.slit_width <= 2 * dy:
        raise ConfigurationError(f"slit width {screen.slit_width} must exceed two spacings ({2 * dy})")
    if screen.thickness < 2 * dx:
        raise ConfigurationError(f"thickness {screen.thickness} must be at least two spacings ({2 * dx})")
    X, Y = grid.mesh()
    material = np.abs(X - screen.screen_x) <= screen.thickness / 2
    for c, is_open in zip(screen.slit_centers, screen.open_flags):
        if is_open:
            material &= ~(np.abs(Y - c) < screen.slit_width / 2)
    return np.where(material, screen.barrier_height, 0.0)


def absorber_mask(grid: Grid, width: float, dt: float, rate: float = 20.0) -> np.ndarray | None:
    """Per-step amplitude mask; ``cos^2`` ramp over ``width`` at every edge.

    The mask is ``ramp ** (rate * dt)`` so the absorption per unit time is
    independent of the step size.
    """
    if width <= 0:
        return None
    mask = np.ones(grid.shape)
    for a in range(2):
        x = grid.axis(a)
        lo, hi = grid.lower[a], grid.lower[a] + grid.extent[a]
        d = np.minimum(x - lo, hi - x)
        r = np.clip((width - d) / width, 0.0, 1.0)
        ramp = np.cos(0.5 * np.pi * r) ** 2
        shape = [1, 1]
        shape[a] = x.size
        mask = mask * ramp.reshape(shape)
    return mask ** (rate * dt)


def _k_squared(grid: Grid) -> np.ndarray:
    kx = grid.wavenumbers(0)[:, None]
    ky = grid.wavenumbers(1)[None, :]
    return kx**2 + ky**2


def check_stability(grid: Grid, potential: np.ndarray, dt: float) -> None:
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    vmax = float(np.max(np.abs(potential))) if potential.size else 0.0
    if dt * vmax > 0.5:
        raise ConfigurationError(f"dt * max|V| = {dt * vmax:g} exceeds 0.5 (potential phase wrap)")
    pmax2 = sum((math.pi / h) ** 2 for h in grid.spacing)
    if dt * pmax2 / 2 > math.pi:
        raise ConfigurationError(f"dt * p_max^2 / 2 = {dt * pmax2 / 2:g} exceeds pi")


def split_step_evolve(
    psi: Wavefunction2D,
    potential: np.ndarray | None,
    dt: float,
    n_steps: int,
    absorber_width: float = 0.0,
    callback: Callable[[float, np.ndarray], None] | None = None,
    t0: float = 0.0,
) -> Wavefunction2D:
    """Strang-split propagation ``V/2 - T - V/2`` for ``n_steps`` steps.

    ``callback(t, values)`` runs after every step with the current samples
    (do not modify them).  Without an absorber the evolution is unitary.
    """
    _require_2d(psi)
    grid = psi.grid
    V = np.zeros(grid.shape) if potential is None else np.asarray(potential, dtype=float)
    if V.shape != grid.shape:
        raise ConfigurationError("potential does not match the grid")
    check_stability(grid, V, dt)
    half_v = np.exp(-0.5j * dt * V)
    kinetic = np.exp(-0.5j * dt * _k_squared(grid))
    mask = absorber_mask(grid, absorber_width, dt)
    if mask is not None:
        # the trailing half potential step and the mask commute
        half_v_out = half_v * mask
    else:
        half_v_out = half_v
    has_potential = bool(np.any(V))
    vals = psi.values.copy()
    workers = fft_workers()
    for step in range(1, n_steps + 1):
        if has_potential:
            vals *= half_v
        vals = scipy.fft.fft2(vals, overwrite_x=True, workers=workers)
        vals *= kinetic
        vals = scipy.fft.ifft2(vals, overwrite_x=True, workers=workers)
        if has_potential or mask is not None:
            vals *= half_v_out
        if callback is not None:
            callback(t0 + step * dt, vals)
    return psi.with_values(vals)


def free_gaussian_2d(grid: Grid, center, velocity, width: float, t: float) -> np.ndarray:
    """Closed-form free evolution of :func:`initial_packet_2d` (unbounded domain)."""
    X, Y = grid.mesh()
    out = np.ones(grid.shape, dtype=complex)
    for x, c, k in ((X, center[0], velocity[0]), (Y, center[1], velocity[1])):
        tau = 1 + 1j * t / (2 * width**2)
        out = out * (
            (2 * np.pi * width**2) ** -0.25
            / np.sqrt(tau)
            * np.exp(-((x - c - k * t) ** 2) / (4 * width**2 * tau) + 1j * k * (x - k * t / 2))
        )
    return out


def _observation_weights(grid: Grid, observe_x: float) -> tuple[int, int, float]:
    x = grid.axis(0)
    h = grid.spacing[0]
    if not x[0] <= observe_x <= x[-1]:
        raise ConfigurationError(f"observation plane x={observe_x} lies outside the grid")
    i = min(int((observe_x - x[0]) // h), x.size - 2)
    frac = (observe_x - x[i]) / h
    return i, i + 1, frac


def _slice_density(vals: np.ndarray, weights) -> np.ndarray:
    i, j, frac = weights
    row = (1 - frac) * vals[i] + frac * vals[j]
    return np.abs(row) ** 2


class PatternDetector:
    """Accumulates ``|psi|^2`` on the plane ``x = observe_x`` over time.

    Pass an instance as the ``callback`` of :func:`split_step_evolve`.
    """

    def __init__(self, grid: Grid, observe_x: float, dt: float):
        self.grid = grid
        self.observe_x = observe_x
        self.dt = dt
        self._weights = _observation_weights(grid, observe_x)
        self.intensity = np.zeros(grid.points[1])

    def __call__(self, t: float, vals: np.ndarray) -> None:
        self.intensity += _slice_density(vals, self._weights) * self.dt

    def profile(self) -> list[tuple[float, float]]:
        return _as_profile(self.grid, self.intensity)


def _as_profile(grid: Grid, intensity: np.ndarray) -> list[tuple[float, float]]:
    if not np.any(intensity > 0) or intensity.max() < 1e-30:
        warnings.warn(
            "observation profile is empty; the packet has not reached the plane",
            RuntimeWarning,
            stacklevel=3,
        )
    return list(zip(grid.axis(1).tolist(), intensity.tolist()))


def detect_pattern(psi, observe_x: float, dt: float | None = None) -> list[tuple[float, float]]:
    """Transverse ``|psi|^2`` profile at ``x = observe_x``.

    ``psi`` is a single wave function (snapshot) or an iterable of
    successive wave functions ``dt`` apart, which are time-integrated.
    """
    if isinstance(psi, SampledField):
        _require_2d(psi)
        return _as_profile(psi.grid, _slice_density(psi.values, _observation_weights(psi.grid, observe_x)))
    frames: Iterable[SampledField] = psi
    total = None
    grid = None
    for frame in frames:
        _require_2d(frame)
        if total is None:
            grid = frame.grid
            weights = _observation_weights(grid, observe_x)
            total = np.zeros(grid.points[1])
        total += _slice_density(frame.values, weights) * (1.0 if dt is None else dt)
    if total is None:
        raise UsageError("no wave functions supplied")
    return _as_profile(grid, total)


def find_maxima(profile, rel_height: float = 0.05) -> list[float]:
    """Interior local maxima above ``rel_height`` of the peak, parabola-refined."""
    y = np.array([p[0] for p in profile])
    inten = np.array([p[1] for p in profile])
    if inten.size < 3 or inten.max() <= 0:
        return []
    h = y[1] - y[0]
    peak = inten.max()
    out = []
    for i in range(1, inten.size - 1):
        if inten[i] > inten[i - 1] and inten[i] >= inten[i + 1] and inten[i] >= rel_height * peak:
            curv = inten[i - 1] - 2 * inten[i] + inten[i + 1]
            off = 0.5 * (inten[i - 1] - inten[i + 1]) / curv if curv < 0 else 0.0
            out.append(float(y[i] + off * h))
    return out


def fringe_spacing(profile, rel_height: float = 0.05, neighbours: int = 1) -> float:
    """Mean spacing of the central maximum and ``neighbours`` maxima on each side."""
    maxima = find_maxima(profile, rel_height)
    if len(maxima) < 3:
        raise InsufficientFringesError(f"found {len(maxima)} maxima, need at least 3")
    # central maximum: the strongest one
    heights = [np.interp(m, [p[0] for p in profile], [p[1] for p in profile]) for m in maxima]
    c = int(np.argmax(heights))
    lo = max(0, c - neighbours)
    hi = min(len(maxima) - 1, c + neighbours)
    if hi - lo < 2:
        raise InsufficientFringesError("central maximum lacks neighbours on both sides")
    return float((maxima[hi] - maxima[lo]) / (hi - lo))


def fringes_at_spacing(profile, spacing: float, tol: float = 0.25, rel_height: float = 0.05) -> int:
    """Length of the longest run of adjacent maxima spaced within ``tol`` of ``spacing``."""
    maxima = find_maxima(profile, rel_height)
    best = 1 if maxima else 0
    run = 1
    for a, b in zip(maxima, maxima[1:]):
        if abs((b - a) - spacing) <= tol * spacing:
            run += 1
            best = max(best, run)
        else:
            run = 1
    return best


@dataclass
class TwoSlitResult:
    setup: TwoSlitSetup
    profile: list[tuple[float, float]]
    final: Wavefunction2D
    norm_history: list[tuple[float, float]]


def run_two_slit(
    setup: TwoSlitSetup | None = None,
    extra_callbacks: Iterable[Callable[[float, np.ndarray], None]] = (),
) -> TwoSlitResult:
    """Propagate the incident packet through the screen and record the pattern."""
    setup = TwoSlitSetup() if setup is None else setup
    grid = setup.grid()
    psi = initial_packet_2d(grid, setup.packet_center, setup.packet_velocity, setup.packet_width, setup.screen)
    V = screen_potential(setup.screen, grid)
    detector = PatternDetector(grid, setup.observe_x, setup.dt)
    norms: list[tuple[float, float]] = [(0.0, 1.0)]
    extra = list(extra_callbacks)
    cell = grid.cell_volume
    every = max(1, int(round(0.1 / setup.dt)))
    counter = {"n": 0}

    def observe(t, vals):
        detector(t, vals)
        counter["n"] += 1
        if counter["n"] % every == 0:
            norms.append((t, float(np.sum(np.abs(vals) ** 2) * cell)))
        for cb in extra:
            cb(t, vals)

    final = split_step_evolve(psi, V, setup.dt, setup.n_steps, setup.absorber_width, observe)
    return TwoSlitResult(setup, detector.profile(), final, norms)
