"""Uniform periodic grids, unitary Fourier transforms and spectral calculus.

Fourier convention
------------------
Transforms are *unitary*::

    F(p) = (2 pi)^(-1/2) * integral f(x) exp(-i p x) dx
    f(x) = (2 pi)^(-1/2) * integral F(p) exp(+i p x) dp

so that ``integral |f|^2 dx == integral |F|^2 dp`` holds exactly on the
discrete grid (Parseval).  With this sign the derivative ``d/dx`` maps to
multiplication by ``i p`` and ``-i d/dx`` is the momentum operator.

Momentum-space fields live on the conjugate grid: same point count, spacing
``2 pi / extent`` and nodes in ascending order centred on zero.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
import scipy.fft

from .errors import BoundaryDecayWarning, ConfigurationError, UsageError

Space = Literal["position", "momentum"]

_POSITION_LABELS = ("x", "y", "z")
_MOMENTUM_LABELS = ("px", "py", "pz")

# Worker count handed to scipy.fft; results are deterministic for a fixed value.
_fft_workers = 1


def set_fft_workers(n: int) -> None:
    global _fft_workers
    if n < 1:
        raise ConfigurationError(f"thread count must be >= 1, got {n}")
    _fft_workers = int(n)


def fft_workers() -> int:
    return _fft_workers


@dataclass(frozen=True)
class Grid:
    """Uniform tensor-product grid with ``points[a]`` nodes on axis ``a``.

    Node ``k`` of axis ``a`` sits at ``center[a] - extent[a]/2 + k*spacing[a]``.
    """

    points: tuple[int, ...]
    extent: tuple[float, ...]
    center: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.points) == len(self.extent) == len(self.center)):
            raise ConfigurationError("points, extent and center need one entry per axis")
        if self.dimension not in (1, 2, 3):
            raise ConfigurationError(f"dimension must be 1, 2 or 3, got {self.dimension}")
        for n in self.points:
            if n < 8 or n & (n - 1):
                raise ConfigurationError(f"points per axis must be a power of two >= 8, got {n}")
        for L in self.extent:
            if not (L > 0 and math.isfinite(L)):
                raise ConfigurationError(f"extent must be positive and finite, got {L}")

    @property
    def dimension(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.extent, self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def lower(self) -> tuple[float, ...]:
        return tuple(c - L / 2 for c, L in zip(self.center, self.extent))

    def axis(self, a: int = 0) -> np.ndarray:
        return self.lower[a] + self.spacing[a] * np.arange(self.points[a])

    def axes(self) -> list[np.ndarray]:
        return [self.axis(a) for a in range(self.dimension)]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def wavenumbers(self, a: int = 0) -> np.ndarray:
        """Angular wavenumbers in raw FFT order for axis ``a``."""
        return 2 * np.pi * np.fft.fftfreq(self.points[a], self.spacing[a])


def make_grid(dimension: int, points_per_axis, extent, center=0.0) -> Grid:
    """Build a grid; scalar arguments are broadcast to every axis."""

    def per_axis(value, cast):
        if np.ndim(value) == 0:
            return (cast(value),) * dimension
        value = tuple(cast(v) for v in value)
        if len(value) != dimension:
            raise ConfigurationError(f"expected {dimension} per-axis values, got {len(value)}")
        return value

    if dimension not in (1, 2, 3):
        raise ConfigurationError(f"dimension must be 1, 2 or 3, got {dimension}")
    return Grid(per_axis(points_per_axis, int), per_axis(extent, float), per_axis(center, float))


def conjugate_grid(grid: Grid) -> Grid:
    """Momentum grid paired with a position grid (or vice versa), centred on 0."""
    return Grid(grid.points, tuple(2 * np.pi / d for d in grid.spacing), (0.0,) * grid.dimension)


@dataclass(frozen=True, eq=False)
class SampledField:
    """Complex samples of a function on ``grid``.

    ``dual`` remembers the grid of the other space so that a round trip
    through momentum space lands back on the original position nodes.
    """

    grid: Grid
    values: np.ndarray
    space: Space = "position"
    dual: Grid | None = dc_field(default=None, repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.size != self.grid.size:
            raise ConfigurationError(
                f"{values.size} values do not fit a grid of {self.grid.size} nodes"
            )
        values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("field values must be finite")
        if self.space not in ("position", "momentum"):
            raise ConfigurationError(f"unknown space tag {self.space!r}")
        object.__setattr__(self, "values", values)

    def with_values(self, values) -> "SampledField":
        return SampledField(self.grid, values, self.space, self.dual)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2


def sample(grid: Grid, func) -> SampledField:
    """Evaluate ``func(*coordinates)`` on every node of a position grid."""
    return SampledField(grid, func(*grid.mesh()))


def _require_space(f: SampledField, space: Space, op: str) -> None:
    if f.space != space:
        raise UsageError(f"{op} expects a {space}-space field, got {f.space}")


def forward_transform(f: SampledField) -> SampledField:
    """Unitary transform of a position-space field to momentum space."""
    _require_space(f, "position", "forward_transform")
    pgrid = f.dual if f.dual is not None else conjugate_grid(f.grid)
    axes = tuple(range(f.grid.dimension))
    spec = scipy.fft.fftshift(scipy.fft.fftn(f.values, axes=axes, workers=_fft_workers), axes=axes)
    phase = np.ones(1)
    for a in axes:
        p = pgrid.axis(a)
        factor = f.grid.spacing[a] / np.sqrt(2 * np.pi) * np.exp(-1j * p * f.grid.lower[a])
        phase = np.multiply.outer(phase, factor) if a else factor
    return SampledField(pgrid, spec * phase, "momentum", f.grid)


def inverse_transform(F: SampledField) -> SampledField:
    """Inverse of :func:`forward_transform`."""
    _require_space(F, "momentum", "inverse_transform")
    xgrid = F.dual if F.dual is not None else conjugate_grid(F.grid)
    axes = tuple(range(F.grid.dimension))
    phase = np.ones(1)
    for a in axes:
        p = F.grid.axis(a)
        factor = np.sqrt(2 * np.pi) / xgrid.spacing[a] * np.exp(1j * p * xgrid.lower[a])
        phase = np.multiply.outer(phase, factor) if a else factor
    spec = scipy.fft.ifftshift(F.values * phase, axes=axes)
    vals = scipy.fft.ifftn(spec, axes=axes, workers=_fft_workers)
    return SampledField(xgrid, vals, "position", F.grid)


def norm_squared(f: SampledField) -> float:
    """Rectangle-rule integral of ``|f|^2`` (spectrally accurate on a periodic grid)."""
    return float(np.sum(f.density) * f.grid.cell_volume)


def spectral_derivative(f: SampledField, axis: int = 0, order: int = 1) -> SampledField:
    """``d^order f / dx_axis^order`` by multiplication with ``(i p)^order``.

    The Nyquist mode is dropped for odd orders, where it has no real
    derivative.
    """
    _require_space(f, "position", "spectral_derivative")
    if order < 1:
        raise UsageError(f"derivative order must be >= 1, got {order}")
    if not 0 <= axis < f.grid.dimension:
        raise UsageError(f"axis {axis} out of range for a {f.grid.dimension}-D grid")
    n = f.grid.points[axis]
    k = f.grid.wavenumbers(axis)
    mult = (1j * k) ** order
    if order % 2:
        mult[n // 2] = 0.0
    shape = [1] * f.grid.dimension
    shape[axis] = n
    spec = scipy.fft.fft(f.values, axis=axis, workers=_fft_workers)
    out = scipy.fft.ifft(spec * mult.reshape(shape), axis=axis, workers=_fft_workers)
    return f.with_values(out)


def gradient(f: SampledField) -> list[np.ndarray]:
    return [spectral_derivative(f, a, 1).values for a in range(f.grid.dimension)]


def laplacian(f: SampledField) -> SampledField:
    """Spectral Laplacian, one FFT pair for all axes."""
    _require_space(f, "position", "laplacian")
    axes = tuple(range(f.grid.dimension))
    k2 = np.zeros(f.grid.shape)
    for a in axes:
        shape = [1] * f.grid.dimension
        shape[a] = f.grid.points[a]
        k2 = k2 + (f.grid.wavenumbers(a) ** 2).reshape(shape)
    spec = scipy.fft.fftn(f.values, axes=axes, workers=_fft_workers)
    return f.with_values(scipy.fft.ifftn(-k2 * spec, axes=axes, workers=_fft_workers))


def _stencil_weights(half_width: int) -> np.ndarray:
    # Centred second-derivative weights of order 2*half_width; w[0] is the centre.
    m = half_width
    w = np.zeros(m + 1)
    for k in range(1, m + 1):
        w[k] = 2.0 * (-1) ** (k + 1) * math.exp(
            2 * math.lgamma(m + 1) - math.lgamma(m - k + 1) - math.lgamma(m + k + 1)
        ) / k**2
    w[0] = -2.0 * w[1:].sum()
    return w


def stencil_laplacian(f: SampledField, half_width: int = 16) -> tuple[np.ndarray, tuple[slice, ...]]:
    """Laplacian from wide centred stencils, valid away from the boundary.

    The weights converge to the band-limited (sinc) second derivative as the
    stencil widens, so band-limited fields are differentiated to spectral
    accuracy without assuming periodicity.  Returns the Laplacian together
    with the slices selecting the nodes whose stencil stays inside the grid.
    """
    w = _stencil_weights(half_width)
    vals = f.values
    out = np.zeros_like(vals)
    for a, h in enumerate(f.grid.spacing):
        acc = w[0] * vals
        for k in range(1, half_width + 1):
            acc = acc + w[k] * (np.roll(vals, k, axis=a) + np.roll(vals, -k, axis=a))
        out += acc / h**2
    interior = tuple(slice(half_width, n - half_width) for n in f.grid.points)
    if any(s.start >= s.stop for s in interior):
        raise ConfigurationError("grid too small for the stencil half-width")
    return out, interior


def boundary_decay(f: SampledField) -> float:
    """Largest modulus on the outermost node layer relative to the peak modulus."""
    mod = np.abs(f.values)
    peak = mod.max()
    if peak == 0:
        return 0.0
    edge = 0.0
    for a in range(f.grid.dimension):
        edge = max(edge, np.take(mod, 0, axis=a).max(), np.take(mod, -1, axis=a).max())
    return float(edge / peak)


def check_boundary_decay(f: SampledField, tol: float = 1e-14) -> bool:
    """Warn when the field has not decayed to ``tol`` of its peak at the edge."""
    ratio = boundary_decay(f)
    if ratio > tol:
        warnings.warn(
            f"field modulus at the grid edge is {ratio:.3e} of its peak (> {tol:g}); "
            "periodic wrap-around may contaminate results",
            BoundaryDecayWarning,
            stacklevel=2,
        )
        return False
    return True


FLOAT_FORMAT = "{:.11e}"


def fmt(x: float) -> str:
    """Fixed 12-significant-digit scientific notation used for every CSV."""
    return FLOAT_FORMAT.format(float(x))


def write_field_csv(f: SampledField, path) -> None:
    """Write ``coordinate..., re, im`` rows in row-major (C) node order."""
    labels = (_POSITION_LABELS if f.space == "position" else _MOMENTUM_LABELS)[: f.grid.dimension]
    coords = [c.ravel() for c in f.grid.mesh()]
    vals = f.values.ravel()
    with open(path, "w", newline="") as fh:
        fh.write(",".join((*labels, "re", "im")) + "\n")
        for i in range(vals.size):
            row = [fmt(c[i]) for c in coords] + [fmt(vals[i].real), fmt(vals[i].imag)]
            fh.write(",".join(row) + "\n")


def read_field_csv(path) -> SampledField:
    """Inverse of :func:`write_field_csv`; the grid is rebuilt from the coordinates."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
    if len(header) < 3 or header[-2:] != ["re", "im"]:
        raise ConfigurationError(f"{path}: header must end with re,im, got {header}")
    labels = header[:-2]
    if tuple(labels) == _POSITION_LABELS[: len(labels)]:
        space: Space = "position"
    elif tuple(labels) == _MOMENTUM_LABELS[: len(labels)]:
        space = "momentum"
    else:
        raise ConfigurationError(f"{path}: unrecognised coordinate columns {labels}")
    if rows.ndim != 2 or rows.shape[1] != len(header):
        raise ConfigurationError(f"{path}: expected {len(header)} columns per row")
    points, extent, center = [], [], []
    for a in range(len(labels)):
        nodes = np.unique(rows[:, a])
        n = nodes.size
        if n < 2:
            raise ConfigurationError(f"{path}: axis {labels[a]} has a single node")
        h = (nodes[-1] - nodes[0]) / (n - 1)
        points.append(n)
        extent.append(n * h)
        center.append(nodes[0] + n * h / 2)
    grid = Grid(tuple(points), tuple(extent), tuple(center))
    if rows.shape[0] != grid.size:
        raise ConfigurationError(f"{path}: {rows.shape[0]} rows for a grid of {grid.size} nodes")
    return SampledField(grid, rows[:, -2] + 1j * rows[:, -1], space)


def as_array(values: Sequence[float] | float, dimension: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.size == 1 and dimension > 1:
        arr = np.repeat(arr, dimension)
    if arr.size != dimension:
        raise ConfigurationError(f"expected {dimension} components, got {arr.size}")
    return arr
