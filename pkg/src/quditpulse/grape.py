"""Multi-start gradient ascent on the robust average fidelity.

Each seed starts from uniformly random phases and climbs the fidelity with
a monotone line-search ascent: every accepted step must satisfy an Armijo
increase condition, so the accepted-iterate fidelity sequence is
non-decreasing by construction.  Internally the search minimizes
log(1 - F), a monotone reparameterization that keeps step scales uniform
as the infidelity shrinks by orders of magnitude; termination tests
(target fidelity, gradient inf-norm) are still expressed in F itself.
Two search directions are available behind the same interface:

* ``"lbfgs"`` (default): limited-memory quasi-Newton curvature accumulation
  (two-loop recursion), typically converging in a few hundred iterations;
* ``"gradient"``: plain steepest ascent with an adaptive step, the simple
  provably-monotone baseline.

Phases are unconstrained reals during optimization (wrapping would create
gradient discontinuities); wrap on export only.

Before any optimization starts, the phase count is checked against the
dimension counting of the target class: a full d-dimensional unitary needs
at least d^2 - 1 independent phases, a p-dimensional subspace map p^2 - 1,
and a state map 2d - 2.  Under-parameterized designs are refused unless
explicitly allowed (grid sweeps exploring the drop-off do so).
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DesignError, NumericalError, UnderparameterizedError
from .objectives import (
    ObjectiveValue,
    PerturbationEnsemble,
    TargetMap,
    ensemble_fidelity,
    objective_with_gradient,
)
from .propagation import ControlWaveform
from .spin_model import PhysicalParams

ARMIJO_C1 = 1e-4
MAX_BACKTRACKS = 40
CURVATURE_SKIP = 1e-12
INFIDELITY_FLOOR = 1e-18  # log(1 - F) clamp; far below any target tolerance

TERMINATION_REASONS = ("target_reached", "gradient_small", "max_iterations", "numerical_error")


@dataclass(frozen=True)
class DesignConfig:
    """Geometry, physics, and optimizer settings for a design run."""

    total_time: float
    dt: float
    params: PhysicalParams = field(default_factory=PhysicalParams)
    ensemble: PerturbationEnsemble = field(default_factory=PerturbationEnsemble.nominal)
    target_fidelity: float = 0.999
    max_iterations: int = 2000
    gradient_tolerance: float = 1e-7
    n_seeds: int = 10
    rng_seed: int = 0
    method: str = "lbfgs"
    lbfgs_memory: int = 12
    stop_on_success: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError("dt must be finite and > 0")
        ratio = self.total_time / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, abs(ratio)) or round(ratio) < 1:
            raise ValueError(
                f"total_time must be a positive integer multiple of dt "
                f"(T/dt = {ratio!r})"
            )
        if not (0.0 < self.target_fidelity <= 1.0):
            raise ValueError("target_fidelity must lie in (0, 1]")
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.method not in ("lbfgs", "gradient"):
            raise ValueError(f"method must be 'lbfgs' or 'gradient', got {self.method!r}")
        if not isinstance(self.rng_seed, int) or self.rng_seed < 0:
            raise ValueError("rng_seed must be a nonnegative integer")

    @property
    def n_steps(self) -> int:
        return round(self.total_time / self.dt)

    @property
    def n_phases(self) -> int:
        return 3 * self.n_steps


@dataclass(frozen=True)
class SeedRecord:
    """Outcome of one seed's ascent."""

    seed: int
    fidelity: float
    iterations: int
    reason: str
    fidelity_history: tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class OptimizationReport:
    """All per-seed records plus the best waveform found."""

    best_waveform: ControlWaveform
    best_fidelity: float
    best_seed: int
    per_seed: tuple[SeedRecord, ...]
    wall_time: float


def required_phase_count(target: TargetMap) -> int:
    """Minimum number of independent phases for a target class."""
    if target.kind == "full_unitary":
        return target.dim**2 - 1
    if target.kind == "subspace_map":
        return target.p**2 - 1
    return 2 * target.dim - 2


def random_initial_waveform(config: DesignConfig, seed: int) -> ControlWaveform:
    """3N phases drawn i.i.d. uniform on [0, 2*pi); deterministic in seed."""
    ss = np.random.SeedSequence(entropy=[config.rng_seed, seed])
    gen = np.random.Generator(np.random.PCG64(ss))
    vec = gen.uniform(0.0, 2.0 * math.pi, size=config.n_phases)
    return ControlWaveform.from_vector(config.dt, vec, label=f"seed-{seed}")


class _LbfgsMemory:
    """Two-loop recursion for the minimization of f = -F."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.s: list[np.ndarray] = []
        self.y: list[np.ndarray] = []
        self.rho: list[float] = []

    def clear(self):
        self.s.clear()
        self.y.clear()
        self.rho.clear()

    def update(self, s: np.ndarray, y: np.ndarray):
        sy = float(s @ y)
        if sy <= CURVATURE_SKIP * np.linalg.norm(s) * np.linalg.norm(y):
            return
        self.s.append(s)
        self.y.append(y)
        self.rho.append(1.0 / sy)
        if len(self.s) > self.capacity:
            self.s.pop(0)
            self.y.pop(0)
            self.rho.pop(0)

    def direction(self, grad_f: np.ndarray) -> np.ndarray:
        """Approximate -H grad_f (a descent direction for f)."""
        q = grad_f.copy()
        alphas = []
        for s, y, rho in zip(reversed(self.s), reversed(self.y), reversed(self.rho)):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if self.s:
            s, y = self.s[-1], self.y[-1]
            q *= (s @ y) / (y @ y)
        for (s, y, rho), a in zip(zip(self.s, self.y, self.rho), reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        return -q


def ascend(
    start: ControlWaveform,
    target: TargetMap,
    config: DesignConfig,
    seed_id: int = 0,
) -> tuple[ControlWaveform, SeedRecord]:
    """Climb the robust fidelity from one starting waveform.

    Stops when the fidelity reaches ``target_fidelity``, the gradient
    inf-norm falls below ``gradient_tolerance``, or ``max_iterations`` is
    exhausted.  A fully stalled line search (no step of any length improves
    the fidelity) terminates as ``gradient_small``: the iterate is
    stationary to working precision.
    """
    dt = config.dt
    x = start.to_vector()

    def full_eval(vec: np.ndarray) -> ObjectiveValue:
        wf = ControlWaveform.from_vector(dt, vec)
        return objective_with_gradient(wf, target, config.params, config.ensemble)

    def fid_eval(vec: np.ndarray) -> float:
        wf = ControlWaveform.from_vector(dt, vec)
        return ensemble_fidelity(wf, target, config.params, config.ensemble)

    def loss_of(fid: float) -> float:
        return math.log(max(1.0 - fid, INFIDELITY_FLOOR))

    def loss_gradient(value: ObjectiveValue) -> np.ndarray:
        return -value.gradient / max(1.0 - value.fidelity, INFIDELITY_FLOOR)

    label = f"{target.kind}-seed-{seed_id}"

    try:
        current = full_eval(x)
    except NumericalError:
        return start, SeedRecord(seed_id, 0.0, 0, "numerical_error", ())

    history = [current.fidelity]
    memory = _LbfgsMemory(config.lbfgs_memory) if config.method == "lbfgs" else None
    step_scale = None  # adaptive initial step for steepest descent
    reason = "max_iterations"
    iterations = 0

    if current.fidelity >= config.target_fidelity:
        reason = "target_reached"
    else:
        try:
            grad_loss = loss_gradient(current)
            for it in range(1, config.max_iterations + 1):
                iterations = it
                if np.abs(current.gradient).max() < config.gradient_tolerance:
                    reason = "gradient_small"
                    iterations = it - 1
                    break

                use_steepest = memory is None or not memory.s
                if memory is not None and memory.s:
                    d = memory.direction(grad_loss)
                    if d @ grad_loss >= 0:
                        memory.clear()
                        use_steepest = True
                if use_steepest:
                    d = -grad_loss

                loss_cur = loss_of(current.fidelity)

                def try_steps(d, alpha):
                    """Backtrack; the first trial carries the full gradient so an
                    immediately accepted step costs no extra propagation."""
                    slope = float(d @ grad_loss)
                    trial_value = full_eval(x + alpha * d)
                    for i in range(MAX_BACKTRACKS):
                        f_trial = trial_value.fidelity if i == 0 else fid_eval(x + alpha * d)
                        if loss_of(f_trial) <= loss_cur + ARMIJO_C1 * alpha * slope:
                            return alpha, trial_value if i == 0 else None
                        alpha *= 0.5
                    return None, None

                def steepest_alpha(d):
                    return step_scale if step_scale is not None else 0.2 / max(
                        np.abs(d).max(), 1e-12
                    )

                alpha0 = steepest_alpha(d) if use_steepest else 1.0
                alpha, new = try_steps(d, alpha0)
                if alpha is None and memory is not None and memory.s:
                    # quasi-Newton direction stalled: retry along the gradient
                    memory.clear()
                    d = -grad_loss
                    alpha, new = try_steps(d, steepest_alpha(d))
                    use_steepest = True
                if alpha is None:
                    reason = "gradient_small"
                    iterations = it - 1
                    break

                x_new = x + alpha * d
                if new is None:
                    new = full_eval(x_new)
                new_grad_loss = loss_gradient(new)
                if memory is not None:
                    memory.update(x_new - x, new_grad_loss - grad_loss)
                if use_steepest:
                    step_scale = 2.0 * alpha
                x = x_new
                current = new
                grad_loss = new_grad_loss
                history.append(current.fidelity)
                if current.fidelity >= config.target_fidelity:
                    reason = "target_reached"
                    break
        except NumericalError:
            reason = "numerical_error"

    waveform = ControlWaveform.from_vector(dt, x, label=label)
    record = SeedRecord(seed_id, history[-1], iterations, reason, tuple(history))
    return waveform, record


def _run_seed(args) -> tuple[int, ControlWaveform, SeedRecord]:
    target, config, seed = args
    start = random_initial_waveform(config, seed)
    waveform, record = ascend(start, target, config, seed_id=seed)
    return seed, waveform, record


def design(
    target: TargetMap,
    config: DesignConfig,
    *,
    workers: int = 1,
    enforce_phase_count: bool = True,
) -> OptimizationReport:
    """Run ``n_seeds`` independent ascents and return the best waveform.

    With ``stop_on_success`` (the default) seeds are consumed in seed order
    and the run stops at the first seed that reaches the target fidelity;
    later seeds are not reported.  This is deterministic regardless of the
    worker count.  Set ``config.stop_on_success=False`` to always run and
    report every seed.
    """
    if enforce_phase_count:
        required = required_phase_count(target)
        if config.n_phases < required:
            raise UnderparameterizedError(target.kind, config.n_phases, required)
    if target.dim != config.params.manifold.dim:
        raise ValueError(
            f"target dimension {target.dim} does not match manifold dimension "
            f"{config.params.manifold.dim}"
        )

    t0 = time.perf_counter()
    results: list[tuple[int, ControlWaveform, SeedRecord]] = []
    seeds = list(range(config.n_seeds))

    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_seed, (target, config, s)) for s in seeds]
            for fut in futures:  # seed order
                results.append(fut.result())
                if config.stop_on_success and results[-1][2].reason == "target_reached":
                    for other in futures:
                        other.cancel()
                    break
    else:
        for s in seeds:
            results.append(_run_seed((target, config, s)))
            if config.stop_on_success and results[-1][2].reason == "target_reached":
                break

    records = tuple(rec for _, _, rec in results)
    ok = [(seed, wf, rec) for seed, wf, rec in results if rec.reason != "numerical_error"]
    if not ok:
        raise DesignError(
            "all seeds failed numerically: "
            + "; ".join(f"seed {r.seed}: {r.reason}" for r in records),
            per_seed=records,
        )
    best_seed, best_wf, best_rec = max(ok, key=lambda item: (item[2].fidelity, -item[0]))
    return OptimizationReport(
        best_waveform=best_wf,
        best_fidelity=best_rec.fidelity,
        best_seed=best_seed,
        per_seed=records,
        wall_time=time.perf_counter() - t0,
    )


def scaled_config(config: DesignConfig, total_time: float, dt: float) -> DesignConfig:
    """Copy of ``config`` with a new time geometry."""
    return replace(config, total_time=total_time, dt=dt)
