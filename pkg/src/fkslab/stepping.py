"""Time integration of the spectral ODE system.

Two steppers share the same state/record plumbing:

``erk``     Dormand-Prince 5(4) embedded explicit pair with PI-free
            step control: the step is accepted when the RMS of the
            embedded error estimate over the coefficient vector is below
            rel_tol * RMS(u) + abs_tol, and the next step is
            dt * clip(safety * ratio^(-1/5), 0.2, 5).  The first-same-
            as-last property is used, so an accepted step costs six
            right-hand sides.

``etdrk4``  Fourth-order exponential time differencing (Cox-Matthews
            stages).  The stiff linear symbol is integrated exactly by
            e^(sigma*dt); the phi-like weights are evaluated by
            averaging over a unit circle of contour points around each
            sigma*dt (Kassam-Trefethen), which is uniformly stable even
            where the symbol passes near zero.  Steady states of the
            full nonlinear system are exact fixed points of the scheme,
            which is what makes it reliable for regime classification.

Both steppers re-zero the mean mode after every accepted step (the flow
conserves it exactly; this stops roundoff drift from being amplified
when sigma(0) > 0, e.g. gamma = 0) and abort with the last good state
when the solution leaves double-precision range.

``integrate`` drives a stepper from t0 to t_end, clamping steps so that
sample times, snapshot times and t_end are hit exactly, and assembles a
``RunRecord`` of diagnostics samples.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from . import diagnostics
from .diagnostics import RunRecord
from .dynamics import ModelOperator, ModelParams, linear_symbol, operator_for
from .spectral import Grid, SpectralField

METHOD_ERK = "erk"
METHOD_ETDRK4 = "etdrk4"

_EVENT_RTOL = 1e-9  # times within this of an event are snapped onto it


@dataclass(frozen=True)
class StepperConfig:
    """Integration method and its tolerances.

    rel_tol/abs_tol/dt_init/dt_min/safety drive the adaptive pair;
    dt_fixed and contour_points drive the exponential integrator.
    """

    method: str = METHOD_ERK
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    dt_init: float = 1e-3
    dt_min: float = 1e-12
    dt_fixed: float = 1e-3
    safety: float = 0.9
    contour_points: int = 32

    def __post_init__(self) -> None:
        if self.method not in (METHOD_ERK, METHOD_ETDRK4):
            raise ValueError(f"unknown stepping method {self.method!r}")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.dt_min <= self.dt_init:
            raise ValueError("need 0 < dt_min <= dt_init")
        if not self.dt_fixed > 0:
            raise ValueError("dt_fixed must be positive")
        if not 0 < self.safety < 1:
            raise ValueError(f"safety factor must lie in (0,1), got {self.safety}")
        if self.contour_points < 8:
            raise ValueError("need at least 8 contour points")


@dataclass(frozen=True)
class IntegrationState:
    """Snapshot of the integration: time, field, and step bookkeeping."""

    t: float
    field: SpectralField
    dt: float
    n_steps: int = 0
    n_rejected: int = 0


class IntegrationAbort(RuntimeError):
    """Step failure; carries the last state that was still finite."""

    def __init__(self, reason: str, t: float, coeffs: np.ndarray | None) -> None:
        super().__init__(reason)
        self.reason = reason
        self.t = t
        self.coeffs = coeffs


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4)

_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
# Difference between the fifth- and fourth-order weights (error estimator).
_DP_E = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)


def _rms(c: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.abs(c) ** 2)))


def _controller_factor(ratio: float, safety: float) -> float:
    if ratio == 0.0:
        return 5.0
    return float(min(5.0, max(0.2, safety * ratio ** (-0.2))))


def _advance_adaptive(
    c: np.ndarray,
    t: float,
    dt_prop: float,
    op: ModelOperator,
    cfg: StepperConfig,
    dt_max: float | None,
    k1: np.ndarray | None,
) -> tuple[np.ndarray, float, float, np.ndarray, int]:
    """One accepted Dormand-Prince step; returns (c, t, dt_next, k7, n_rejected)."""
    n_rejected = 0
    clamped = dt_max is not None and dt_max < dt_prop
    h = min(dt_prop, dt_max) if dt_max is not None else dt_prop
    if k1 is None:
        k1 = op.rhs(c)
    while True:
        if h < cfg.dt_min:
            raise IntegrationAbort(
                f"step size underflow ({h:.3e} < dt_min) at t={t:.6g}", t, c
            )
        with np.errstate(over="ignore", invalid="ignore"):
            ks = [k1]
            for i in range(1, 7):
                y = c + h * sum(a * k for a, k in zip(_DP_A[i], ks))
                if i == 6:
                    c_new = y  # row 7 of A holds the fifth-order weights
                ks.append(op.rhs(y))
            err = h * sum(e * k for e, k in zip(_DP_E, ks))
        err_rms = _rms(err)
        scale = cfg.rel_tol * _rms(c) + cfg.abs_tol
        ratio = err_rms / scale
        if math.isfinite(ratio) and ratio <= 1.0 and np.isfinite(c_new).all():
            break
        n_rejected += 1
        factor = 0.5 if not math.isfinite(ratio) else min(
            1.0, _controller_factor(ratio, cfg.safety)
        )
        h *= factor
        clamped = False
    c_new = c_new.copy()
    c_new[0] = 0.0
    dt_next = h * _controller_factor(ratio, cfg.safety)
    if clamped:
        # The step was event-limited, not accuracy-limited: keep the
        # larger standing proposal for after the event.
        dt_next = max(dt_next, dt_prop)
    k7 = op.rhs(c_new)
    return c_new, t + h, dt_next, k7, n_rejected


def step_adaptive(
    state: IntegrationState,
    p: ModelParams,
    cfg: StepperConfig,
    operator: ModelOperator | None = None,
) -> IntegrationState:
    """Advance one accepted adaptive step from ``state``.

    Rejected trials shrink the step inside this call; ``dt`` of the
    returned state is the controller's proposal for the next step.
    """
    op = operator if operator is not None else operator_for(p, state.field.grid)
    c, t, dt_next, _, n_rej = _advance_adaptive(
        state.field.coeffs, state.t, state.dt, op, cfg, None, None
    )
    return IntegrationState(
        t=t,
        field=SpectralField(state.field.grid, c),
        dt=dt_next,
        n_steps=state.n_steps + 1,
        n_rejected=state.n_rejected + n_rej,
    )


# ---------------------------------------------------------------------------
# ETDRK4

@dataclass(frozen=True, eq=False)
class EtdrkTables:
    """Per-mode exponential weights for one fixed step size."""

    dt: float
    e_full: np.ndarray
    e_half: np.ndarray
    q: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray


def etdrk4_coefficients(
    p: ModelParams, grid: Grid, dt: float, contour_points: int = 32
) -> EtdrkTables:
    """Tables e^(sigma dt), e^(sigma dt/2) and the three stage weights.

    The weights are analytic functions of z = sigma*dt with removable
    singularities at z = 0; averaging them over a unit circle of
    ``contour_points`` points centred at each z evaluates them stably
    (the half-offset angles keep the circle away from z's own location,
    so no denominator vanishes).  In the z -> 0 limit the weights reduce
    to q = dt/2 and f1 = f2 = f3 = dt/6, the classical RK4 pattern.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    sigma = linear_symbol(p, grid.wavenumbers)
    m = contour_points
    r = np.exp(2j * np.pi * (np.arange(m) + 0.5) / m)
    lr = dt * sigma[:, None] + r[None, :]
    with np.errstate(over="ignore"):
        elr = np.exp(lr)
        elr2 = np.exp(lr / 2)
        q = dt * np.mean((elr2 - 1.0) / lr, axis=1).real
        f1 = dt * np.mean((-4.0 - lr + elr * (4.0 - 3.0 * lr + lr**2)) / lr**3, axis=1).real
        f2 = dt * np.mean((2.0 + lr + elr * (-2.0 + lr)) / lr**3, axis=1).real
        f3 = dt * np.mean((-4.0 - 3.0 * lr - lr**2 + elr * (4.0 - lr)) / lr**3, axis=1).real
    return EtdrkTables(
        dt=dt,
        e_full=np.exp(dt * sigma),
        e_half=np.exp(0.5 * dt * sigma),
        q=q,
        f1=f1,
        f2=f2,
        f3=f3,
    )


@lru_cache(maxsize=32)
def _tables_for(
    p: ModelParams, grid: Grid, dt: float, contour_points: int
) -> EtdrkTables:
    return etdrk4_coefficients(p, grid, dt, contour_points)


def _etdrk4_advance(
    c: np.ndarray, t: float, tab: EtdrkTables, op: ModelOperator
) -> tuple[np.ndarray, float]:
    if not op.include_nonlinear:
        c_new = tab.e_full * c
    else:
        with np.errstate(over="ignore", invalid="ignore"):
            nv = op.nonlinear(c)
            a = tab.e_half * c + tab.q * nv
            na = op.nonlinear(a)
            b = tab.e_half * c + tab.q * na
            nb = op.nonlinear(b)
            cc = tab.e_half * a + tab.q * (2.0 * nb - nv)
            nc = op.nonlinear(cc)
            c_new = tab.e_full * c + tab.f1 * nv + 2.0 * tab.f2 * (na + nb) + tab.f3 * nc
    if not np.isfinite(c_new).all():
        raise IntegrationAbort(f"non-finite state after step at t={t:.6g}", t, c)
    c_new[0] = 0.0
    return c_new, t + tab.dt


def step_etdrk4(
    state: IntegrationState,
    p: ModelParams,
    cfg: StepperConfig,
    operator: ModelOperator | None = None,
) -> IntegrationState:
    """Advance one fixed step of size cfg.dt_fixed."""
    op = operator if operator is not None else operator_for(p, state.field.grid)
    tab = _tables_for(p, state.field.grid, cfg.dt_fixed, cfg.contour_points)
    c, t = _etdrk4_advance(state.field.coeffs, state.t, tab, op)
    return IntegrationState(
        t=t,
        field=SpectralField(state.field.grid, c),
        dt=cfg.dt_fixed,
        n_steps=state.n_steps + 1,
        n_rejected=state.n_rejected,
    )


# ---------------------------------------------------------------------------
# Driver

@dataclass(frozen=True)
class ObserverSet:
    """What to record along the run.

    ``persist_snapshot`` is called with (t, field) at each snapshot time
    and must return the path it wrote; without it snapshot times are
    ignored.  ``fit_range`` is forwarded to the spectral-decay fit.
    """

    sample_interval: float | None = None
    snapshot_times: tuple[float, ...] = ()
    persist_snapshot: Callable[[float, SpectralField], str] | None = None
    fit_range: tuple[int, int] | None = None


_KIND_SAMPLE = 1
_KIND_SNAPSHOT = 2


def _build_events(
    t0: float, t_end: float, obs: ObserverSet
) -> list[tuple[float, int]]:
    """Sorted event times in (t0, t_end], duplicates merged bitwise-ish."""
    tol = _EVENT_RTOL * max(1.0, abs(t_end))
    # A zero-length run keeps only the unconditional sample at t0.
    items: list[tuple[float, int]] = (
        [(t_end, _KIND_SAMPLE)] if t_end > t0 + tol else []
    )
    if obs.sample_interval is not None:
        if obs.sample_interval <= 0:
            raise ValueError("sample_interval must be positive")
        j = 1
        while t0 + j * obs.sample_interval < t_end - tol:
            items.append((t0 + j * obs.sample_interval, _KIND_SAMPLE))
            j += 1
    if obs.persist_snapshot is not None:
        for ts in obs.snapshot_times:
            if t0 + tol < ts <= t_end + tol:
                items.append((min(ts, t_end), _KIND_SNAPSHOT))
    items.sort(key=lambda it: it[0])
    merged: list[tuple[float, int]] = []
    for tv, kind in items:
        if merged and abs(tv - merged[-1][0]) <= tol:
            merged[-1] = (merged[-1][0], merged[-1][1] | kind)
        else:
            merged.append((tv, kind))
    return merged


def integrate(
    u0: SpectralField,
    p: ModelParams,
    cfg: StepperConfig,
    t_end: float,
    observers: ObserverSet | None = None,
    operator: ModelOperator | None = None,
    t0: float = 0.0,
) -> RunRecord:
    """Run the flow from t0 to t_end and collect diagnostics.

    The initial field is dealiased and mean-projected once up front.
    On a stepper abort the record is returned with status ``aborted``,
    the samples gathered so far, a final sample at the last good state,
    and that state attached for persistence by the caller.
    """
    if t_end < t0:
        raise ValueError(f"t_end={t_end} precedes t0={t0}")
    obs = observers if observers is not None else ObserverSet()
    grid = u0.grid
    op = operator if operator is not None else operator_for(p, grid)
    start = time.perf_counter()

    c = np.where(grid.dealias_mask, u0.coeffs, 0.0)
    c[0] = 0.0
    t = t0
    dt_prop = cfg.dt_init if cfg.method == METHOD_ERK else cfg.dt_fixed
    last_h = dt_prop
    n_steps = 0
    n_rejected = 0
    k_fsal: np.ndarray | None = None
    record = RunRecord(config=None, samples=[], snapshots=[], status="complete",
                       wall_time=0.0)

    def take_sample(tv: float, cv: np.ndarray) -> None:
        f = SpectralField(grid, cv)
        record.samples.append(
            diagnostics.sample(f, tv, p, dt=last_h, fit_range=obs.fit_range)
        )

    take_sample(t0, c)
    if obs.persist_snapshot is not None:
        tol = _EVENT_RTOL * max(1.0, abs(t_end))
        for ts in obs.snapshot_times:
            if abs(ts - t0) <= tol:
                record.snapshots.append((t0, obs.persist_snapshot(t0, SpectralField(grid, c))))

    etdrk_cache: dict[float, EtdrkTables] = {}

    def tables_for_step(h: float) -> EtdrkTables:
        tab = etdrk_cache.get(h)
        if tab is None:
            tab = etdrk4_coefficients(p, grid, h, cfg.contour_points)
            etdrk_cache[h] = tab
        return tab

    try:
        for ev_t, kind in _build_events(t0, t_end, obs):
            tol = _EVENT_RTOL * max(1.0, abs(ev_t))
            while t < ev_t - tol:
                remaining = ev_t - t
                t_prev = t
                if cfg.method == METHOD_ERK:
                    c, t, dt_prop, k_fsal, rej = _advance_adaptive(
                        c, t, dt_prop, op, cfg, remaining, k_fsal
                    )
                    n_rejected += rej
                else:
                    h = min(cfg.dt_fixed, remaining)
                    c, t = _etdrk4_advance(c, t, tables_for_step(h), op)
                last_h = t - t_prev
                n_steps += 1
            t = ev_t
            if kind & _KIND_SAMPLE:
                take_sample(t, c)
            if kind & _KIND_SNAPSHOT and obs.persist_snapshot is not None:
                record.snapshots.append(
                    (t, obs.persist_snapshot(t, SpectralField(grid, c)))
                )
    except IntegrationAbort as abort:
        record.status = "aborted"
        record.abort_reason = abort.reason
        if abort.coeffs is not None:
            c = abort.coeffs
        t = abort.t
        take_sample(t, c)

    record.final_state = SpectralField(grid, c)
    record.final_t = t
    record.n_steps = n_steps
    record.n_rejected = n_rejected
    record.wall_time = time.perf_counter() - start
    return record


__all__ = [
    "StepperConfig",
    "IntegrationState",
    "IntegrationAbort",
    "EtdrkTables",
    "ObserverSet",
    "step_adaptive",
    "step_etdrk4",
    "etdrk4_coefficients",
    "integrate",
    "METHOD_ERK",
    "METHOD_ETDRK4",
]
