"""Grid studies: fidelity vs (T, dt) and robustness vs (dB_i, dB_f).

The time grid re-runs the designer per cell and exposes the characteristic
high-fidelity plateau with sharp drop-offs where T is too short or where
T/dt leaves too few phases.  Under-parameterized cells are still designed
(they demonstrate the drop-off) but flagged.  The field grid re-evaluates
fixed waveforms under linear bias-field ramps parameterized by their
endpoints; no re-optimization happens there.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericalError
from .grape import DesignConfig, design, required_phase_count
from .objectives import TargetMap, fidelity
from .propagation import ControlWaveform, FieldTrajectory, total_unitary
from .spin_model import PhysicalParams


@dataclass(frozen=True, eq=False)
class TimeGridSpec:
    """Design-bearing sweep over control time and step duration."""

    t_values: tuple[float, ...]
    dt_values: tuple[float, ...]
    targets: tuple[TargetMap, ...]
    base_config: DesignConfig

    def __post_init__(self):
        if not self.t_values or not self.dt_values:
            raise ValueError("t_values and dt_values must be nonempty")
        if not self.targets:
            raise ValueError("targets must be nonempty")
        object.__setattr__(self, "t_values", tuple(float(t) for t in self.t_values))
        object.__setattr__(self, "dt_values", tuple(float(t) for t in self.dt_values))
        object.__setattr__(self, "targets", tuple(self.targets))


@dataclass(frozen=True, eq=False)
class FieldGridSpec:
    """Evaluation-only sweep over linear-ramp endpoints (dB_i, dB_f)."""

    dbi_values: tuple[float, ...]
    dbf_values: tuple[float, ...]
    maps: tuple[tuple[TargetMap, ControlWaveform], ...]
    params: PhysicalParams

    def __post_init__(self):
        for name in ("dbi_values", "dbf_values"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ValueError(f"{name} must be nonempty")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, vals)
        if not self.maps:
            raise ValueError("maps must be nonempty")
        object.__setattr__(self, "maps", tuple(self.maps))


@dataclass(frozen=True, eq=False)
class GridResult:
    """Mean/std fidelity per cell plus per-cell metadata."""

    x_name: str
    y_name: str
    x_values: np.ndarray
    y_values: np.ndarray
    mean: np.ndarray  # (nx, ny)
    std: np.ndarray   # (nx, ny)
    meta: tuple[tuple[dict, ...], ...]  # [ix][iy]

    def __post_init__(self):
        nx, ny = len(self.x_values), len(self.y_values)
        if self.mean.shape != (nx, ny) or self.std.shape != (nx, ny):
            raise ValueError("grid value shapes do not match the axes")


def _design_cell(args):
    """One (cell, target) design job; returns placement plus outcome."""
    ix, iy, t, dt, target, base_config = args
    config = replace(base_config, total_time=t, dt=dt)
    try:
        report = design(target, config, enforce_phase_count=False)
    except NumericalError as exc:
        return ix, iy, {"error": str(exc)}
    return ix, iy, {
        "fidelity": report.best_fidelity,
        "seed": report.best_seed,
        "iterations": sum(r.iterations for r in report.per_seed),
    }


def sweep_time_grid(spec: TimeGridSpec, *, workers: int = 1) -> GridResult:
    """Design every target at every integral (T, dt) cell.

    Non-integral T/dt cells are skipped (NaN) and flagged; cells with fewer
    phases than the hardest target class requires are run anyway and
    flagged ``underparameterized``.
    """
    nx, ny = len(spec.t_values), len(spec.dt_values)
    mean = np.full((nx, ny), np.nan)
    std = np.full((nx, ny), np.nan)
    meta = [[{} for _ in range(ny)] for _ in range(nx)]

    jobs = []
    for ix, t in enumerate(spec.t_values):
        for iy, dt in enumerate(spec.dt_values):
            ratio = t / dt
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, abs(ratio)) or round(ratio) < 1:
                meta[ix][iy] = {"skipped": "non_integral_steps", "ratio": ratio}
                continue
            n_phases = 3 * round(ratio)
            required = max(required_phase_count(tg) for tg in spec.targets)
            meta[ix][iy] = {
                "n_steps": round(ratio),
                "underparameterized": n_phases < required,
                "targets": [],
            }
            for target in spec.targets:
                jobs.append((ix, iy, t, dt, target, spec.base_config))

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_design_cell, jobs))
    else:
        outcomes = [_design_cell(job) for job in jobs]

    per_cell: dict[tuple[int, int], list[dict]] = {}
    for ix, iy, outcome in outcomes:
        per_cell.setdefault((ix, iy), []).append(outcome)
    for (ix, iy), entries in per_cell.items():
        meta[ix][iy]["targets"] = entries
        fids = [e["fidelity"] for e in entries if "fidelity" in e]
        if fids:
            mean[ix, iy] = float(np.mean(fids))
            std[ix, iy] = float(np.std(fids))

    return GridResult(
        "total_time", "dt",
        np.array(spec.t_values), np.array(spec.dt_values),
        mean, std, tuple(tuple(row) for row in meta),
    )


def sweep_field_grid(spec: FieldGridSpec) -> GridResult:
    """Evaluate each waveform under every (dB_i, dB_f) linear ramp.

    A diagonal cell (x, x) is a degenerate ramp and therefore identical to
    a static offset x.
    """
    nx, ny = len(spec.dbi_values), len(spec.dbf_values)
    mean = np.empty((nx, ny))
    std = np.empty((nx, ny))
    meta = [[{} for _ in range(ny)] for _ in range(nx)]
    for ix, dbi in enumerate(spec.dbi_values):
        for iy, dbf in enumerate(spec.dbf_values):
            trajectory = FieldTrajectory.linear_ramp(dbi, dbf)
            fids = [
                fidelity(target, total_unitary(wf, spec.params, trajectory))
                for target, wf in spec.maps
            ]
            mean[ix, iy] = float(np.mean(fids))
            std[ix, iy] = float(np.std(fids))
            meta[ix][iy] = {"n_maps": len(fids)}
    return GridResult(
        "db_initial", "db_final",
        np.array(spec.dbi_values), np.array(spec.dbf_values),
        mean, std, tuple(tuple(row) for row in meta),
    )


def contour_area(grid: GridResult, level: float, *, subdivisions: int = 32) -> float:
    """Area (in grid-cell units) of the region where fidelity >= level.

    The grid is bilinearly interpolated inside each cell; each cell
    contributes the fraction of ``subdivisions^2`` interior samples at or
    above the level.  NaN cells count as below the level.  A level above
    every grid value returns zero (with a warning); a level below every
    value returns the full domain area (with a warning).
    """
    if not (0.0 < level < 1.0):
        raise ValueError("level must lie in (0, 1)")
    vals = np.array(grid.mean, dtype=float)
    finite = vals[np.isfinite(vals)]
    if finite.size == 0:
        warnings.warn("contour_area: grid has no finite values", stacklevel=2)
        return 0.0
    if level > finite.max():
        warnings.warn("contour_area: level above all grid values", stacklevel=2)
        return 0.0
    if level < finite.min():
        warnings.warn("contour_area: level below all grid values", stacklevel=2)
    vals = np.where(np.isfinite(vals), vals, -np.inf)

    f00 = vals[:-1, :-1][..., None, None]
    f10 = vals[1:, :-1][..., None, None]
    f01 = vals[:-1, 1:][..., None, None]
    f11 = vals[1:, 1:][..., None, None]
    s = subdivisions
    u = ((np.arange(s) + 0.5) / s)[:, None]
    v = ((np.arange(s) + 0.5) / s)[None, :]
    samples = (
        f00 * (1 - u) * (1 - v)
        + f10 * u * (1 - v)
        + f01 * (1 - u) * v
        + f11 * u * v
    )
    return float(np.count_nonzero(samples >= level) / s**2)


def symmetric_field_grid(
    radius: float,
    *,
    multiples: float = 4.0,
    points: int = 17,
) -> tuple[float, ...]:
    """Symmetric axis values spanning +/- multiples * radius."""
    if points < 2:
        raise ValueError("points must be >= 2")
    return tuple(np.linspace(-multiples * radius, multiples * radius, points))
