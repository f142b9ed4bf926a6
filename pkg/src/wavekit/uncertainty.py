"""Position/momentum moments of an arbitrary function and the uncertainty bound.

Everything here works for any square-integrable sample, not only for wave
functions: the bound ``var_x * var_p >= 1/4`` is a property of the Fourier
pair, with ``p`` the angular wavenumber of the unitary transform in
:mod:`wavekit.grid`.
"""

from __future__ import annotations

from dataclasses import astuple, dataclass

import numpy as np

from .errors import DegenerateInputError, NumericalFailure, TruncationError, UsageError
from .grid import (
    SampledField,
    check_boundary_decay,
    fmt,
    forward_transform,
    norm_squared,
    spectral_derivative,
)

BOUND = 0.25
BOUND_TOL = 1e-9
TAIL_BAND = 0.05
TAIL_TOL = 1e-8

REPORT_COLUMNS = ("norm_N", "x0", "p0", "var_x", "var_p", "product")


@dataclass(frozen=True)
class MomentReport:
    norm_N: float
    x0: float
    p0: float
    var_x: float
    var_p: float
    product: float

    def csv_row(self) -> str:
        return ",".join(fmt(v) for v in astuple(self))


@dataclass(frozen=True)
class QuadraticFormSample:
    alpha: float
    value: float


def _norm(field: SampledField) -> float:
    N = norm_squared(field)
    if not N > 0:
        raise DegenerateInputError("field has zero norm; moments are undefined")
    return N


def _require_position(field: SampledField) -> None:
    if field.space != "position":
        raise UsageError("moments are taken from a position-space field")


def _marginals(density: np.ndarray, grid) -> list[np.ndarray]:
    out = []
    for a in range(grid.dimension):
        other = tuple(b for b in range(grid.dimension) if b != a)
        out.append(density.sum(axis=other) if other else density)
    return out


def _first_moments(grid, density, N):
    w = grid.cell_volume / N
    return np.array([np.sum(grid.axis(a) * m) * w for a, m in enumerate(_marginals(density, grid))])


def _second_moments(grid, density, N, centre):
    w = grid.cell_volume / N
    return np.array(
        [np.sum((grid.axis(a) - centre[a]) ** 2 * m) * w for a, m in enumerate(_marginals(density, grid))]
    )


def _scalar(v: np.ndarray):
    return float(v[0]) if v.size == 1 else v


def centroid_position(field: SampledField):
    """Mean position under ``|f|^2 / N``; a float in 1-D, one value per axis otherwise."""
    _require_position(field)
    check_boundary_decay(field)
    N = _norm(field)
    return _scalar(_first_moments(field.grid, field.density, N))


def centroid_momentum(field: SampledField):
    """Mean momentum under ``|F|^2 / N`` on the conjugate grid."""
    _require_position(field)
    check_boundary_decay(field)
    N = _norm(field)
    F = forward_transform(field)
    return _scalar(_first_moments(F.grid, F.density, N))


def variance_position(field: SampledField):
    _require_position(field)
    N = _norm(field)
    x0 = _first_moments(field.grid, field.density, N)
    return _scalar(_second_moments(field.grid, field.density, N, x0))


def variance_momentum(field: SampledField):
    _require_position(field)
    N = _norm(field)
    F = forward_transform(field)
    p0 = _first_moments(F.grid, F.density, N)
    return _scalar(_second_moments(F.grid, F.density, N, p0))


def tail_fraction(field: SampledField, band: float = TAIL_BAND) -> float:
    """Share of ``|f|^2`` lying within ``band * extent`` of either end of any axis."""
    N = _norm(field)
    worst = 0.0
    for a, m in enumerate(_marginals(field.density, field.grid)):
        x = field.grid.axis(a)
        lo, L = field.grid.lower[a], field.grid.extent[a]
        edge = (x < lo + band * L) | (x >= lo + (1 - band) * L)
        worst = max(worst, float(np.sum(m[edge]) * field.grid.cell_volume / N))
    return worst


def check_tails(field: SampledField, tol: float = TAIL_TOL) -> None:
    frac = tail_fraction(field)
    if frac > tol:
        raise TruncationError(
            f"{frac:.3e} of the norm lies in the outer {TAIL_BAND:.0%} of the domain "
            f"(limit {tol:g}); variances would be unreliable, enlarge the grid"
        )


def _require_1d(field: SampledField, op: str) -> None:
    _require_position(field)
    if field.grid.dimension != 1:
        raise UsageError(f"{op} is defined for one-dimensional fields")


def ur_product(field: SampledField) -> MomentReport:
    """Full moment report; raises if the computed product undercuts 1/4."""
    _require_1d(field, "ur_product")
    check_tails(field)
    check_boundary_decay(field)
    N = _norm(field)
    F = forward_transform(field)
    x0 = _first_moments(field.grid, field.density, N)
    p0 = _first_moments(F.grid, F.density, N)
    var_x = float(_second_moments(field.grid, field.density, N, x0)[0])
    var_p = float(_second_moments(F.grid, F.density, N, p0)[0])
    report = MomentReport(N, float(x0[0]), float(p0[0]), var_x, var_p, var_x * var_p)
    if report.product < BOUND - BOUND_TOL:
        raise NumericalFailure(
            f"uncertainty product {report.product!r} is below 1/4 - {BOUND_TOL:g}; "
            "this cannot happen for a resolved field"
        )
    return report


def _operator_parts(field: SampledField):
    # pieces of (alpha (x - x0) + d/dx - i p0) f
    N = _norm(field)
    report = ur_product(field)
    x = field.grid.axis(0)
    shifted = (x - report.x0) * field.values
    deriv = spectral_derivative(field, 0, 1).values - 1j * report.p0 * field.values
    return N, shifted, deriv


def quadratic_form(field: SampledField, alpha: float) -> QuadraticFormSample:
    """``(1/N) integral |(alpha (x - x0) + d/dx - i p0) f|^2 dx`` evaluated directly."""
    _require_1d(field, "quadratic_form")
    N, shifted, deriv = _operator_parts(field)
    value = float(np.sum(np.abs(alpha * shifted + deriv) ** 2) * field.grid.cell_volume / N)
    if value < -1e-10:
        raise NumericalFailure(f"quadratic form is negative ({value!r}) at alpha={alpha}")
    return QuadraticFormSample(float(alpha), value)


def cross_term(field: SampledField) -> float:
    """Coefficient ``c`` in ``quadratic_form = alpha^2 var_x - alpha c + var_p``.

    Integration by parts gives ``c = 1`` for every normalisable field; the
    ``-i p0`` shift contributes only an imaginary part that drops out.
    """
    _require_1d(field, "cross_term")
    N, shifted, deriv = _operator_parts(field)
    return float(-2 * np.sum(np.real(np.conj(shifted) * deriv)) * field.grid.cell_volume / N)


def random_smooth_field(grid, seed: int, n_min: int = 3, n_max: int = 10) -> SampledField:
    """Reproducible sum of Gaussians with complex amplitudes.

    Centres fall in the central half of the domain and widths in [0.2, 2].
    """
    if grid.dimension != 1:
        raise UsageError("random_smooth_field builds one-dimensional fields")
    rng = np.random.default_rng(seed)
    count = int(rng.integers(n_min, n_max + 1))
    c0, L = grid.center[0], grid.extent[0]
    centres = rng.uniform(c0 - L / 4, c0 + L / 4, count)
    widths = rng.uniform(0.2, 2.0, count)
    amps = rng.normal(size=count) + 1j * rng.normal(size=count)
    x = grid.axis(0)[:, None]
    values = np.sum(amps * np.exp(-((x - centres) ** 2) / (2 * widths**2)), axis=1)
    return SampledField(grid, values)
