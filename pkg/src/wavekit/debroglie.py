"""Nonsingular de Broglie wave packet ``j0(s|r - v t|) exp(i v.r - i omega t)``.

Units are hbar = m = 1, so the velocity ``v`` doubles as the wave vector.
The packet solves the free Schrodinger equation exactly when
``omega = (|v|^2 + s^2) / 2``.  It is not square integrable in 3-D
(``|j0(s r)|^2 r^2`` does not decay), so no moment report is defined for it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ResolutionError, UntrackedPeakError, UsageError
from .grid import Grid, SampledField, make_grid, stencil_laplacian


@dataclass(frozen=True)
class PacketParams:
    s: float
    v: tuple[float, float, float]
    omega: float

    def __post_init__(self):
        if not self.s > 0:
            raise ConfigurationError(f"width parameter s must be positive, got {self.s}")
        if len(self.v) != 3:
            raise ConfigurationError("velocity must have three components")
        if self.omega != dispersion(self.s, self.v):
            raise ConfigurationError(
                f"omega={self.omega} violates omega = (|v|^2 + s^2)/2 = {dispersion(self.s, self.v)}"
            )

    @property
    def velocity(self) -> np.ndarray:
        return np.asarray(self.v, dtype=float)


def dispersion(s: float, v) -> float:
    v = np.asarray(v, dtype=float)
    return float((v @ v + s * s) / 2)


def make_packet(s: float, v) -> PacketParams:
    v = tuple(float(c) for c in np.broadcast_to(np.asarray(v, dtype=float), (3,)))
    if not s > 0:
        raise ConfigurationError(f"width parameter s must be positive, got {s}")
    return PacketParams(float(s), v, dispersion(s, v))


def spherical_j0(x):
    """``sin(x)/x`` with the series ``1 - x^2/6 + x^4/120`` near zero."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    safe = np.where(small, 1.0, x)
    return np.where(small, 1 - x * x / 6 + x**4 / 120, np.sin(safe) / safe)


def _evaluate(params: PacketParams, X, Y, Z, t, omega):
    vx, vy, vz = params.v
    r = np.sqrt((X - vx * t) ** 2 + (Y - vy * t) ** 2 + (Z - vz * t) ** 2)
    return spherical_j0(params.s * r) * np.exp(1j * (vx * X + vy * Y + vz * Z - omega * t))


def evaluate_packet(params: PacketParams, position, t: float, omega: float | None = None) -> complex:
    """Packet value at one point.  ``omega`` overrides the dispersion relation."""
    x, y, z = np.asarray(position, dtype=float)
    w = params.omega if omega is None else omega
    return complex(_evaluate(params, x, y, z, t, w))


def sample_packet(params: PacketParams, grid: Grid, t: float, omega: float | None = None) -> SampledField:
    if grid.dimension != 3:
        raise UsageError("the de Broglie packet is sampled on a 3-D grid")
    w = params.omega if omega is None else omega
    return SampledField(grid, _evaluate(params, *grid.mesh(), t, w))


def default_grid(n: int = 64, spacing: float = 0.3) -> Grid:
    return make_grid(3, n, n * spacing, 0.0)


def check_resolution(params: PacketParams, grid: Grid, points: int = 8) -> None:
    speed = float(np.linalg.norm(params.velocity))
    scales = [np.pi / params.s]
    if speed > 0:
        scales.append(2 * np.pi / speed)
    h = max(grid.spacing)
    if h > min(scales) / points:
        raise ResolutionError(
            f"spacing {h:g} exceeds 1/{points} of the smallest packet scale {min(scales):g}"
        )


def schrodinger_residual(
    params: PacketParams,
    grid: Grid,
    t: float,
    dt: float,
    omega: float | None = None,
    half_width: int = 16,
) -> float:
    """``max |(i d/dt + Lap/2) psi| / max |psi|`` over interior nodes.

    The time derivative is a centred difference with step ``dt``.  The
    Laplacian uses wide centred stencils rather than FFTs because the
    packet decays only like ``1/r`` and is not periodic on any finite grid;
    only nodes whose stencil fits inside the grid are scored.
    """
    check_resolution(params, grid)
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    ahead = sample_packet(params, grid, t + dt, omega).values
    behind = sample_packet(params, grid, t - dt, omega).values
    now = sample_packet(params, grid, t, omega)
    lap, inner = stencil_laplacian(now, half_width)
    res = 1j * (ahead - behind) / (2 * dt) + 0.5 * lap
    return float(np.abs(res[inner]).max() / np.abs(now.values).max())


def peak_position(field: SampledField) -> np.ndarray:
    """Location of the ``|psi|^2`` maximum, refined by a 3-point parabola per axis."""
    dens = field.density
    idx = np.unravel_index(np.argmax(dens), dens.shape)
    for a, i in enumerate(idx):
        if i == 0 or i == dens.shape[a] - 1:
            raise UntrackedPeakError(f"maximum sits on the boundary along axis {a}")
    pos = np.empty(field.grid.dimension)
    for a, i in enumerate(idx):
        lo = list(idx)
        hi = list(idx)
        lo[a] -= 1
        hi[a] += 1
        fm, f0, fp = dens[tuple(lo)], dens[idx], dens[tuple(hi)]
        curv = fm - 2 * f0 + fp
        offset = 0.5 * (fm - fp) / curv if curv < 0 else 0.0
        pos[a] = field.grid.axis(a)[i] + offset * field.grid.spacing[a]
    return pos


def peak_trajectory(params: PacketParams, t_list, grid: Grid | None = None) -> list[tuple[float, np.ndarray]]:
    grid = default_grid() if grid is None else grid
    return [(float(t), peak_position(sample_packet(params, grid, t))) for t in t_list]


def fitted_velocity(trajectory) -> np.ndarray:
    """Least-squares slope of peak position against time, per axis."""
    t = np.array([s[0] for s in trajectory])
    pos = np.array([s[1] for s in trajectory])
    if t.size < 2:
        raise UsageError("need at least two samples to fit a velocity")
    return np.polyfit(t, pos, 1)[0]
