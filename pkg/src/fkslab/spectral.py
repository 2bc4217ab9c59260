"""Spectral representation of real periodic fields on the 2*pi torus.

A field is stored either by its values at the n equispaced collocation
nodes x_j = 2*pi*j/n (``PhysicalField``) or by the coefficients of its
trigonometric interpolant (``SpectralField``),

    u(x) = sum_xi  uhat(xi) * exp(i*xi*x),   xi = -n/2+1, ..., n/2.

Coefficients are kept in standard FFT order (index j holds wavenumber
xi_j = j for j < n/2 and j-n otherwise; index n/2 is the shared Nyquist
slot), normalised so that uhat(xi) is the actual Fourier coefficient:
for u = cos(x), uhat(+-1) = 1/2.

Real fields make the coefficient array Hermitian, uhat(-xi) =
conj(uhat(xi)).  All transforms go through rfft/irfft on the
non-negative half spectrum and mirror the result, so the symmetry is
exact by construction, not merely up to roundoff.  ``to_physical``
rejects arrays whose symmetry has been broken by more than 1e-10
(relative), which catches accidental writes into the coefficient array.

The Nyquist mode n/2 is special: it is its own mirror image, so it must
stay real, and odd multipliers (signed powers of i*xi, the sign
function) are ill-defined on it.  Operators with odd symbols zero it;
operators with even symbols (|xi|^s and even derivatives) keep it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

TAU = 2.0 * np.pi

#: Relative tolerance for the Hermitian-symmetry check in ``to_physical``.
HERMITIAN_RTOL = 1e-10


@dataclass(frozen=True)
class Grid:
    """Equispaced collocation grid on [0, 2*pi) with n nodes.

    ``dealias_cutoff`` is the largest wavenumber kept by ``dealias``;
    the default floor(n/3) is the classical two-thirds rule, which makes
    quadratically nonlinear terms alias-free.
    """

    n: int
    dealias_cutoff: int = field(default=-1)

    def __post_init__(self) -> None:
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError(f"grid size must be even and >= 8, got n={self.n}")
        if self.dealias_cutoff == -1:
            object.__setattr__(self, "dealias_cutoff", self.n // 3)
        if not 0 < self.dealias_cutoff <= self.n // 2:
            raise ValueError(
                f"dealias cutoff must lie in (0, n/2], got {self.dealias_cutoff}"
            )

    @property
    def length(self) -> float:
        return TAU

    @cached_property
    def nodes(self) -> np.ndarray:
        """Collocation points x_j = 2*pi*j/n."""
        return TAU * np.arange(self.n) / self.n

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Signed integer wavenumbers in FFT order (Nyquist stored once)."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n).astype(np.int64)

    @cached_property
    def abs_wavenumbers(self) -> np.ndarray:
        return np.abs(self.wavenumbers)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        return self.abs_wavenumbers <= self.dealias_cutoff


def _require_finite(values: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(values)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise ValueError(f"non-finite {what} at index {idx}")


@dataclass(frozen=True, eq=False)
class PhysicalField:
    """Real field sampled at the collocation nodes."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.grid.n,):
            raise ValueError(
                f"expected {self.grid.n} node values, got shape {vals.shape}"
            )
        _require_finite(vals, "node value")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients of a real field, in FFT order."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape != (self.grid.n,):
            raise ValueError(
                f"expected {self.grid.n} coefficients, got shape {c.shape}"
            )
        _require_finite(c, "coefficient")
        object.__setattr__(self, "coeffs", c)

    @property
    def mean(self) -> float:
        return float(self.coeffs[0].real)


def full_from_half(half: np.ndarray, n: int) -> np.ndarray:
    """Mirror a non-negative half spectrum (length n/2+1) to FFT order.

    The result is Hermitian by construction.  The Nyquist entry is
    forced real, as required for a real field on an even grid.
    """
    if half.shape != (n // 2 + 1,):
        raise ValueError(f"half spectrum must have length {n // 2 + 1}")
    c = np.empty(n, dtype=np.complex128)
    c[: n // 2 + 1] = half
    c[n // 2] = half[n // 2].real
    c[n // 2 + 1 :] = np.conj(half[1 : n // 2][::-1])
    return c


def half_from_full(coeffs: np.ndarray) -> np.ndarray:
    """Non-negative half (xi = 0..n/2) of an FFT-ordered spectrum."""
    n = coeffs.shape[0]
    return coeffs[: n // 2 + 1]


def hermitian_violation(coeffs: np.ndarray) -> float:
    """Max |uhat(xi) - conj(uhat(-xi))| over all wavenumbers."""
    mirrored = np.roll(coeffs[::-1], 1)  # index j now holds coeffs[(n-j) % n]
    return float(np.max(np.abs(coeffs - np.conj(mirrored))))


def to_spectral(u: PhysicalField) -> SpectralField:
    """Forward transform; exact Hermitian symmetry by construction."""
    n = u.grid.n
    half = np.fft.rfft(u.values) / n
    return SpectralField(u.grid, full_from_half(half, n))


def to_physical(f: SpectralField) -> PhysicalField:
    """Inverse transform back to node values.

    Raises ``ValueError`` if the coefficients are not Hermitian to
    within ``HERMITIAN_RTOL`` (relative to the largest coefficient):
    such an array does not represent a real field.
    """
    n = f.grid.n
    scale = float(np.max(np.abs(f.coeffs)))
    violation = hermitian_violation(f.coeffs)
    if violation > HERMITIAN_RTOL * max(scale, 1e-300):
        raise ValueError(
            "coefficients are not Hermitian-symmetric "
            f"(violation {violation:.3e}, scale {scale:.3e}); "
            "cannot represent a real field"
        )
    values = np.fft.irfft(half_from_full(f.coeffs) * n, n=n)
    return PhysicalField(f.grid, values)


def frac_deriv(f: SpectralField, s: float) -> SpectralField:
    """Fractional derivative of order s: multiply by |xi|^s.

    For s = 0 this is the identity (0^0 = 1 keeps the mean); for s > 0
    the mean mode is annihilated.  The symbol is even, so the Nyquist
    mode is kept.  Negative s (a nonlocal antiderivative) is rejected.
    """
    if s < 0:
        raise ValueError(f"fractional order must be >= 0, got {s}")
    mult = np.float_power(f.grid.abs_wavenumbers.astype(np.float64), s)
    return SpectralField(f.grid, f.coeffs * mult)


def hilbert(f: SpectralField) -> SpectralField:
    """Hilbert transform: multiply by -i*sgn(xi); odd symbol, Nyquist zeroed."""
    xi = f.grid.wavenumbers
    mult = -1j * np.sign(xi).astype(np.float64)
    out = f.coeffs * mult
    out[f.grid.n // 2] = 0.0
    return SpectralField(f.grid, out)


def derivative(f: SpectralField, order: int = 1) -> SpectralField:
    """Spectral derivative d^order/dx^order: multiply by (i*xi)^order."""
    if order < 0 or int(order) != order:
        raise ValueError(f"derivative order must be a non-negative int, got {order}")
    xi = f.grid.wavenumbers.astype(np.float64)
    out = f.coeffs * (1j * xi) ** order
    if order % 2 == 1:
        out[f.grid.n // 2] = 0.0
    return SpectralField(f.grid, out)


def dealias(f: SpectralField) -> SpectralField:
    """Zero all modes above the grid's dealias cutoff."""
    return SpectralField(f.grid, np.where(f.grid.dealias_mask, f.coeffs, 0.0))


def sobolev_norm(f: SpectralField, s: float) -> float:
    """Homogeneous Sobolev norm sqrt(2*pi * sum |xi|^(2s) |uhat|^2).

    With s = 0 this is the L2 norm (the mean mode contributes via
    0^0 = 1); for s > 0 the mean mode drops out.
    """
    if s < 0:
        raise ValueError(f"Sobolev order must be >= 0, got {s}")
    weights = np.float_power(f.grid.abs_wavenumbers.astype(np.float64), 2.0 * s)
    # near-overflow states (aborted runs) legitimately report inf
    with np.errstate(over="ignore"):
        return float(np.sqrt(TAU * np.sum(weights * np.abs(f.coeffs) ** 2)))


def lp_norm(u: PhysicalField, p: float) -> float:
    """Lebesgue norm on the torus by node quadrature; p = inf gives max |u|."""
    if np.isinf(p):
        return float(np.max(np.abs(u.values)))
    if p < 1:
        raise ValueError(f"p must be >= 1 or inf, got {p}")
    with np.errstate(over="ignore"):
        return float(
            (TAU / u.grid.n * np.sum(np.abs(u.values) ** p)) ** (1.0 / p)
        )


def evaluate(f: SpectralField, x: np.ndarray | float) -> np.ndarray | float:
    """Evaluate the trigonometric interpolant at arbitrary points.

    The Nyquist mode contributes uhat(n/2)*cos(n*x/2), the real
    interpolant consistent with its shared +-n/2 coefficient.
    """
    n = f.grid.n
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    xi = f.grid.wavenumbers
    interior = xi != f.grid.wavenumbers[n // 2]  # drop the Nyquist slot
    phases = np.exp(1j * np.outer(xs, xi[interior].astype(np.float64)))
    vals = (phases @ f.coeffs[interior]).real
    vals += f.coeffs[n // 2].real * np.cos(0.5 * n * xs)
    return vals if np.ndim(x) else float(vals[0])
