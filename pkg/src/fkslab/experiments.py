"""Run orchestration: initial data, persistence, and parameter sweeps.

A run is fully described by a ``RunConfig``; ``run_experiment`` executes
it and (when ``out_dir`` is set) leaves behind

    manifest.json        merged config echo, status, file index
    series.csv           one diagnostics row per sample time
    snapshot_NNNN.fks1   states at the requested snapshot times
    snapshot_abort.fks1  last good state, only when the run aborted

Runs are reproducible: the same config (same seed) produces the same
samples and byte-identical snapshot and CSV files.  Wall-clock time is
recorded but carries no information about the trajectory.

Snapshot format ``FKS1`` (little endian throughout):

    bytes 0..3    magic "FKS1"
    bytes 4..7    uint32 header length L
    bytes 8..8+L  UTF-8 JSON {"n", "t", "eps", "gamma", "delta", "variant"}
    then          n float64 node values

Sweeps vary one model coefficient over a monotone list of values, run
each point in its own subdirectory (optionally across a process pool
bounded by the FKS_THREADS environment variable), classify each settled
trajectory as steady or chaotic, and report the value bracket where the
classification flips.
"""

from __future__ import annotations

import json
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from ._version import __version__
from .diagnostics import DiagnosticsSample, RunRecord, classify_regime
from .dynamics import ModelParams, k_star
from .spectral import Grid, PhysicalField, SpectralField, to_physical, to_spectral
from .stepping import METHOD_ERK, ObserverSet, StepperConfig, integrate

SNAPSHOT_MAGIC = b"FKS1"
CSV_HEADER = "t,l2,linf,dx_linf,h_half,mean,n_critical,rho,dt"

IC_COS = "cos"
IC_COS_GAUSS_SIN = "cos-gauss-sin"
IC_RANDOM_H3 = "random-h3"
IC_SNAPSHOT = "snapshot"
_IC_KINDS = (IC_COS, IC_COS_GAUSS_SIN, IC_RANDOM_H3, IC_SNAPSHOT)

SWEEP_AXES = ("gamma", "delta", "eps")


@dataclass(frozen=True)
class InitialCondition:
    """Named initial state.

    cos             amplitude * cos(x)
    cos-gauss-sin   amplitude * (cos(x) + exp(-x^2) sin(x)) with x wrapped
                    to [-pi, pi); the (tiny) grid mean is projected out
                    and recorded in the manifest
    random-h3       seeded random phases on magnitudes |xi|^(-3.5) up to
                    the dealias cutoff, rescaled so max|u| = amplitude
    snapshot        resume from ``path`` (grid size must match)
    """

    kind: str = IC_COS
    amplitude: float = 1.0
    path: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in _IC_KINDS:
            raise ValueError(f"unknown initial condition {self.kind!r}")
        if not self.amplitude > 0:
            raise ValueError(f"amplitude must be positive, got {self.amplitude}")
        if self.kind == IC_SNAPSHOT and not self.path:
            raise ValueError("snapshot initial condition needs a path")


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    n: int = 1024
    t_end: float = 300.0
    ic: InitialCondition = InitialCondition()
    stepper: StepperConfig = StepperConfig()
    seed: int = 0
    sample_interval: float = 0.5
    snapshot_times: tuple[float, ...] = ()
    out_dir: str | None = None
    fit_range: tuple[int, int] | None = None


# ---------------------------------------------------------------------------
# Snapshots

def save_snapshot(path: str | Path, f: SpectralField, t: float, p: ModelParams) -> None:
    header = json.dumps(
        {
            "n": f.grid.n,
            "t": t,
            "eps": p.eps,
            "gamma": p.gamma,
            "delta": p.delta,
            "variant": p.variant,
        },
        separators=(",", ":"),
    ).encode("utf-8")
    values = to_physical(f).values.astype("<f8")
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(values.tobytes())


def load_snapshot(path: str | Path) -> tuple[SpectralField, float, ModelParams]:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a {SNAPSHOT_MAGIC.decode()} snapshot")
    (hlen,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + hlen:
        raise ValueError(f"{path}: truncated header")
    try:
        header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"{path}: malformed snapshot header: {exc}") from exc
    missing = {"n", "t", "eps", "gamma", "delta", "variant"} - header.keys()
    if missing:
        raise ValueError(f"{path}: header missing keys {sorted(missing)}")
    n = int(header["n"])
    payload = raw[8 + hlen :]
    if len(payload) != 8 * n:
        raise ValueError(
            f"{path}: expected {8 * n} payload bytes for n={n}, got {len(payload)}"
        )
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    p = ModelParams(
        eps=float(header["eps"]),
        gamma=float(header["gamma"]),
        delta=float(header["delta"]),
        variant=str(header["variant"]),
    )
    field = to_spectral(PhysicalField(Grid(n), values))
    return field, float(header["t"]), p


# ---------------------------------------------------------------------------
# Initial data

def _wrapped_nodes(grid: Grid) -> np.ndarray:
    return np.mod(grid.nodes + np.pi, 2.0 * np.pi) - np.pi


def _initial_with_meta(
    ic: InitialCondition, grid: Grid, seed: int
) -> tuple[SpectralField, float, float]:
    """Returns (field, mean_removed, t0)."""
    if ic.kind == IC_SNAPSHOT:
        field, t0, _ = load_snapshot(ic.path)
        if field.grid.n != grid.n:
            raise ValueError(
                f"snapshot has n={field.grid.n}, run is configured for n={grid.n}"
            )
        return SpectralField(grid, field.coeffs), 0.0, t0
    if ic.kind == IC_COS:
        values = ic.amplitude * np.cos(grid.nodes)
    elif ic.kind == IC_COS_GAUSS_SIN:
        x = _wrapped_nodes(grid)
        values = ic.amplitude * (np.cos(x) + np.exp(-(x**2)) * np.sin(x))
    else:  # random-h3
        rng = np.random.default_rng(seed)
        xi = np.arange(1, grid.dealias_cutoff + 1, dtype=np.float64)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=xi.shape[0])
        half = np.zeros(grid.n // 2 + 1, dtype=np.complex128)
        half[1 : grid.dealias_cutoff + 1] = xi ** (-3.5) * np.exp(1j * phases)
        from .spectral import full_from_half

        rough = to_physical(SpectralField(grid, full_from_half(half, grid.n)))
        scale = ic.amplitude / np.max(np.abs(rough.values))
        # rescale the coefficients, not the node values: the band limit
        # then stays exact instead of picking up transform roundoff
        return SpectralField(grid, full_from_half(scale * half, grid.n)), 0.0, 0.0
    field = to_spectral(PhysicalField(grid, values))
    mean_removed = float(field.coeffs[0].real)
    coeffs = field.coeffs.copy()
    coeffs[0] = 0.0
    return SpectralField(grid, coeffs), mean_removed, 0.0


def make_initial(ic: InitialCondition, grid: Grid, seed: int = 0) -> SpectralField:
    """Mean-free initial state for a run."""
    field, _, _ = _initial_with_meta(ic, grid, seed)
    return field


# ---------------------------------------------------------------------------
# Series / manifest writers

def _fmt(x: float) -> str:
    return format(x, ".17g")


def write_series_csv(path: str | Path, samples: list[DiagnosticsSample]) -> None:
    lines = [CSV_HEADER]
    for s in samples:
        lines.append(
            ",".join(
                [
                    _fmt(s.t),
                    _fmt(s.l2),
                    _fmt(s.linf),
                    _fmt(s.dx_linf),
                    _fmt(s.h_half),
                    _fmt(s.mean),
                    str(s.n_critical),
                    _fmt(s.rho),
                    _fmt(s.dt),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_series_csv(path: str | Path) -> list[DiagnosticsSample]:
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not text or text[0] != CSV_HEADER:
        raise ValueError(f"{path}: unexpected series header")
    out = []
    for line in text[1:]:
        parts = line.split(",")
        out.append(
            DiagnosticsSample(
                t=float(parts[0]),
                l2=float(parts[1]),
                linf=float(parts[2]),
                dx_linf=float(parts[3]),
                h_half=float(parts[4]),
                mean=float(parts[5]),
                n_critical=int(parts[6]),
                rho=float(parts[7]),
                dt=float(parts[8]),
            )
        )
    return out


def _config_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)


def _write_manifest(out: Path, cfg: RunConfig, record: RunRecord,
                    mean_removed: float) -> None:
    manifest = {
        "format": "fks-run",
        "version": __version__,
        "config": _config_dict(cfg),
        "grid": {"n": cfg.n, "dealias_cutoff": Grid(cfg.n).dealias_cutoff},
        "ic_mean_removed": mean_removed,
        "status": record.status,
        "abort_reason": record.abort_reason,
        "final_t": record.final_t,
        "n_steps": record.n_steps,
        "n_rejected": record.n_rejected,
        "wall_time": record.wall_time,
        "files": {
            "series": "series.csv",
            "snapshots": [
                {"t": t, "path": Path(pth).name} for t, pth in record.snapshots
            ],
        },
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# Run / sweep drivers

def run_experiment(cfg: RunConfig) -> RunRecord:
    """Integrate one configuration and persist its artifacts."""
    grid = Grid(cfg.n)
    field, mean_removed, t0 = _initial_with_meta(cfg.ic, grid, cfg.seed)

    out: Path | None = None
    persist = None
    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        counter = iter(range(10**9))

        def persist(t: float, f: SpectralField) -> str:
            path = out / f"snapshot_{next(counter):04d}.fks1"
            save_snapshot(path, f, t, cfg.params)
            return str(path)

    obs = ObserverSet(
        sample_interval=cfg.sample_interval,
        snapshot_times=tuple(cfg.snapshot_times),
        persist_snapshot=persist,
        fit_range=cfg.fit_range,
    )
    record = integrate(field, cfg.params, cfg.stepper, cfg.t_end, obs, t0=t0)
    record.config = _config_dict(cfg)
    if out is not None:
        if record.status == "aborted" and record.final_state is not None:
            path = out / "snapshot_abort.fks1"
            save_snapshot(path, record.final_state, record.final_t, cfg.params)
            record.snapshots.append((record.final_t, str(path)))
        write_series_csv(out / "series.csv", record.samples)
        _write_manifest(out, cfg, record, mean_removed)
    return record


@dataclass(frozen=True)
class SweepPoint:
    value: float
    status: str
    regime: str | None
    k_star: float
    final_l2: float
    final_linf: float
    dt_used: float
    out_dir: str | None


@dataclass(frozen=True)
class SweepRecord:
    axis: str
    values: tuple[float, ...]
    base_params: ModelParams
    points: tuple[SweepPoint, ...]
    transition_bracket: tuple[float, float] | None
    k_star_at_transition: float | None


def _point_config(base: RunConfig, axis: str, value: float) -> RunConfig:
    params = replace(base.params, **{axis: value})
    out_dir = None
    if base.out_dir is not None:
        out_dir = str(Path(base.out_dir) / f"{axis}={value:g}")
    return replace(base, params=params, out_dir=out_dir)


def _run_sweep_point(args: tuple[RunConfig, str, float]) -> SweepPoint:
    base, axis, value = args
    cfg = _point_config(base, axis, value)
    # A blown step usually means the fixed step outran the advective CFL
    # at this point's amplitude; retry with a halved step before giving up.
    for _ in range(3):
        record = run_experiment(cfg)
        dt_attempted = cfg.stepper.dt_fixed
        if record.status != "aborted":
            break
        stepper = cfg.stepper
        stepper = replace(
            stepper,
            dt_fixed=0.5 * stepper.dt_fixed,
            dt_init=0.5 * stepper.dt_init,
            dt_min=min(stepper.dt_min, 0.5 * stepper.dt_init),
        )
        cfg = replace(cfg, stepper=stepper)
    regime: str | None = None
    if record.status == "complete":
        regime = classify_regime(record).value
    last = record.samples[-1]
    # the step the point actually ran with (for a failed point: its
    # final attempt), not the post-halving proposal that never ran
    dt_used = dt_attempted if cfg.stepper.method != METHOD_ERK else last.dt
    return SweepPoint(
        value=value,
        status=record.status,
        regime=regime,
        k_star=k_star(cfg.params),
        final_l2=last.l2,
        final_linf=last.linf,
        dt_used=dt_used,
        out_dir=cfg.out_dir,
    )


def worker_count() -> int:
    env = os.environ.get("FKS_THREADS")
    if env:
        count = int(env)
        if count < 1:
            raise ValueError(f"FKS_THREADS must be >= 1, got {env}")
        return count
    return os.cpu_count() or 1


def sweep(base: RunConfig, axis: str, values: list[float]) -> SweepRecord:
    """Run one point per value and bracket the steady/chaotic transition.

    Points are independent; with FKS_THREADS > 1 they run in a process
    pool, which changes nothing about any individual result.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    vals = [float(v) for v in values]
    if len(vals) < 2:
        raise ValueError("a sweep needs at least two values")
    diffs = np.diff(vals)
    if not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ValueError("sweep values must be strictly monotone")

    jobs = [(base, axis, v) for v in vals]
    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_run_sweep_point, jobs))
    else:
        points = [_run_sweep_point(job) for job in jobs]

    record = SweepRecord(
        axis=axis,
        values=tuple(vals),
        base_params=base.params,
        points=tuple(points),
        transition_bracket=None,
        k_star_at_transition=None,
    )
    bracket, k_mid = detect_transition(record)
    record = replace(
        record, transition_bracket=bracket, k_star_at_transition=k_mid
    )
    if base.out_dir is not None:
        out = Path(base.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        payload = asdict(record)
        (out / "sweep.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return record


def detect_transition(
    rec: SweepRecord,
) -> tuple[tuple[float, float] | None, float | None]:
    """Bracket of the single regime flip, or (None, None).

    Returns the two classified sweep values straddling the flip,
    together with the marginal wavenumber k* evaluated at the bracket
    midpoint.  Failed points are skipped: they carry no classification,
    so the flip is sought along the classified subsequence (the bracket
    then widens across any failed gap).  Zero flips or more than one
    flip yields (None, None).
    """
    classified = [
        (pt.value, pt.regime) for pt in rec.points if pt.regime is not None
    ]
    if len(classified) < 2:
        return None, None
    flips = [
        i
        for i in range(len(classified) - 1)
        if classified[i][1] != classified[i + 1][1]
    ]
    if len(flips) != 1:
        return None, None
    i = flips[0]
    lo, hi = classified[i][0], classified[i + 1][0]
    mid_params = replace(rec.base_params, **{rec.axis: 0.5 * (lo + hi)})
    return (lo, hi), k_star(mid_params)
