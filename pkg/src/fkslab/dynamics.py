"""Right-hand sides for the fractional and classic KS flows.

The evolution solved here is, in Fourier variables,

    d/dt uhat(xi) = sigma(xi) * uhat(xi) + N(u)hat(xi),

with the antidissipative/dissipative symbol

    fractional:  sigma(xi) = |xi|^gamma - eps * |xi|^(1+delta),
    classic-ks:  sigma(xi) = xi^2 - eps * xi^4,

and the advective nonlinearity N(u) = -d/dx (u^2/2).  The fractional
variant admits 0 <= gamma < 1+delta and 0 < delta <= 1; gamma = 0 turns
the destabilising term into the identity (|xi|^0 = 1 on every mode), the
Burgers-Sivashinsky limit.

The nonlinearity is computed pseudo-spectrally with the two-thirds rule
applied on both sides: N(u) = -P dx (P u)^2 / 2 with P the projection
onto |xi| <= floor(n/3).  The square is evaluated alias-free (on the
collocation grid itself when aliased images of the product land
strictly above the cutoff, on a padded grid otherwise), so the operator
is an exact Galerkin truncation: <u, N(u)> = 0 holds to roundoff, and
the flow conserves the mean exactly (the xi = 0 component of a perfect
derivative vanishes).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .spectral import Grid, SpectralField, full_from_half

VARIANT_FRACTIONAL = "fractional"
VARIANT_CLASSIC = "classic-ks"


@dataclass(frozen=True)
class ModelParams:
    """Model selection and coefficients.

    For the fractional variant, eps > 0, 0 < delta <= 1 and
    0 <= gamma < 1 + delta.  The classic variant uses only eps; gamma
    and delta are carried along unused (delta still sets the exponent of
    the dissipation-scale diagnostic norm, (1+delta)/2).
    """

    eps: float
    gamma: float = 1.0
    delta: float = 1.0
    variant: str = VARIANT_FRACTIONAL

    def __post_init__(self) -> None:
        if self.variant not in (VARIANT_FRACTIONAL, VARIANT_CLASSIC):
            raise ValueError(f"unknown variant {self.variant!r}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        if self.variant == VARIANT_FRACTIONAL:
            if not 0.0 <= self.gamma < 1.0 + self.delta:
                raise ValueError(
                    f"gamma must lie in [0, 1+delta) = [0, {1.0 + self.delta}), "
                    f"got {self.gamma}"
                )


def linear_symbol(p: ModelParams, xi: np.ndarray) -> np.ndarray:
    """Growth rate sigma(xi) of each Fourier mode under the linear flow."""
    xi = np.asarray(xi, dtype=np.float64)
    if p.variant == VARIANT_CLASSIC:
        return xi**2 - p.eps * xi**4
    a = np.abs(xi)
    # float_power gives 0^0 = 1, so gamma = 0 correctly forces sigma(0) = 1.
    return np.float_power(a, p.gamma) - p.eps * np.float_power(a, 1.0 + p.delta)


def k_star(p: ModelParams) -> float:
    """Marginal wavenumber where forcing and dissipation balance.

    Solves |k|^gamma = eps * |k|^(1+delta) (resp. k^2 = eps*k^4), i.e.
    k* = eps^(-1/(1+delta-gamma)); modes below k* can grow, modes above
    are damped.
    """
    if p.variant == VARIANT_CLASSIC:
        return float(p.eps ** (-0.5))
    return float(p.eps ** (-1.0 / (1.0 + p.delta - p.gamma)))


class ModelOperator:
    """Precompiled right-hand side acting on raw coefficient arrays.

    The public ``rhs``/``nonlinear_term`` wrappers below construct one
    of these per (params, grid) pair; steppers reuse it across steps.
    ``include_nonlinear=False`` drops the advection term, leaving the
    diagonal linear flow (used for symbol-fidelity checks).
    """

    def __init__(
        self, p: ModelParams, grid: Grid, include_nonlinear: bool = True
    ) -> None:
        self.params = p
        self.grid = grid
        self.include_nonlinear = include_nonlinear
        n = grid.n
        self.sigma = linear_symbol(p, grid.wavenumbers)
        xi_half = np.arange(n // 2 + 1, dtype=np.float64)
        keep = xi_half <= grid.dealias_cutoff
        self._half_mask = keep.astype(np.float64)
        # -(1/2) * i*xi * (dealias mask), the derivative-and-scale factor
        # applied to the spectrum of u^2.
        self._half_flux = np.where(keep, -0.5j * xi_half, 0.0)
        # Squaring a band-limited field on the n-point grid is alias-free
        # inside the kept band only if n > 3*cutoff (images of k1+k2 fold
        # to |k1+k2-n| >= n-2*cutoff, which must exceed the cutoff).  When
        # the margin is not strict (e.g. n divisible by 3 at the default
        # cutoff), form the product on a padded grid instead so the
        # operator stays an exact Galerkin truncation.
        if n > 3 * grid.dealias_cutoff:
            self._pad_n = None
        else:
            self._pad_n = 2 * (3 * grid.dealias_cutoff // 2 + 1)

    def nonlinear(self, coeffs: np.ndarray) -> np.ndarray:
        """-P dx (P u)^2 / 2 on an FFT-ordered coefficient array."""
        n = self.grid.n
        half = coeffs[: n // 2 + 1] * self._half_mask
        if self._pad_n is None:
            w = np.fft.irfft(half * n, n=n)
            qhat = np.fft.rfft(w * w) / n
        else:
            m = self._pad_n
            half_m = np.zeros(m // 2 + 1, dtype=np.complex128)
            half_m[: n // 2 + 1] = half
            w = np.fft.irfft(half_m * m, n=m)
            qhat = np.fft.rfft(w * w)[: n // 2 + 1] / m
        return full_from_half(self._half_flux * qhat, n)

    def rhs(self, coeffs: np.ndarray) -> np.ndarray:
        out = self.sigma * coeffs
        if self.include_nonlinear:
            out += self.nonlinear(coeffs)
        return out


@lru_cache(maxsize=64)
def operator_for(
    p: ModelParams, grid: Grid, include_nonlinear: bool = True
) -> ModelOperator:
    return ModelOperator(p, grid, include_nonlinear)


def nonlinear_term(p: ModelParams, f: SpectralField) -> SpectralField:
    """Dealiased advection term -P dx (P u)^2/2 as a field."""
    op = operator_for(p, f.grid)
    return SpectralField(f.grid, op.nonlinear(f.coeffs))


def rhs(p: ModelParams, f: SpectralField) -> SpectralField:
    """Full semi-discrete right-hand side sigma*uhat + N(u)hat."""
    op = operator_for(p, f.grid)
    return SpectralField(f.grid, op.rhs(f.coeffs))
