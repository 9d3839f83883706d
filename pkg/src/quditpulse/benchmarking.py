"""Simulated randomized benchmarking and survival-decay fitting.

A benchmark sequence of length l starts from the fiducial state
|F+, m=F+> (basis index 0), applies a designed prep map to a random input
state, then l maps drawn with replacement from the map set under test, and
finally a readout map from the ideal composed output back to the fiducial
state.  The survival probability is the fiducial population at the end,
with combined state-preparation-and-measurement (SPAM) error folded in as a
depolarizing-style admixture

    survival -> (1 - eps_0) * survival + eps_0 / d.

Mean survivals versus l are fit to

    F(l) = 1/d + (d-1)/d * (1 - d/(d-1) eps_0) * (1 - d/(d-1) eps_b)^l

by weighted nonlinear least squares, yielding the SPAM error eps_0 and the
average error per map eps_b.

Maps can be carried either by designed waveforms (propagated under the
sampled error realization) or as exact unitaries (waveform ``None``).
Exact maps are idealized operations and are never perturbed; mixing exact
prep/readout with waveform-backed steps isolates the step-map error from
preparation error.  One error realization (field trajectory plus
Rabi-scale factors) is drawn per sequence and held fixed across it,
mirroring a quasi-static inhomogeneity; the realization is resampled
between sequences so sequence averaging smooths accidental echo effects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.optimize

from .errors import FitError, SequenceConstructionError
from .grape import DesignConfig, design
from .objectives import PerturbationEnsemble, TargetMap, fidelity
from .propagation import ControlWaveform, FieldTrajectory, total_unitary
from .spin_model import PhysicalParams
from .targets import RngStream, as_generator, sample_random_state

FIDUCIAL_INDEX = 0


@dataclass(frozen=True)
class ErrorModel:
    """Stochastic imperfections applied when simulating sequences.

    ``field_ensemble`` members are sampled (by weight) once per sequence;
    ``rabi_scale_sigma`` are the widths of per-sequence Gaussian fractional
    errors on (Omega_x, Omega_y, Omega_uw), clipped at -1 so rates stay
    nonnegative; ``spam_error`` is the eps_0 admixture.
    """

    field_ensemble: PerturbationEnsemble = field(
        default_factory=PerturbationEnsemble.nominal
    )
    rabi_scale_sigma: tuple[float, float, float] = (0.0, 0.0, 0.0)
    spam_error: float = 0.0

    def __post_init__(self):
        if len(self.rabi_scale_sigma) != 3 or any(
            not (math.isfinite(s) and s >= 0) for s in self.rabi_scale_sigma
        ):
            raise ValueError("rabi_scale_sigma must be three nonnegative floats")
        if not (0.0 <= self.spam_error < 1.0):
            raise ValueError("spam_error must lie in [0, 1)")
        object.__setattr__(
            self, "rabi_scale_sigma", tuple(float(s) for s in self.rabi_scale_sigma)
        )

    @classmethod
    def none(cls) -> "ErrorModel":
        return cls()


@dataclass(frozen=True, eq=False)
class MapImplementation:
    """A target together with the waveform implementing it.

    ``waveform=None`` means the map is applied as its exact unitary, an
    idealized operation unaffected by the error realization.
    """

    target: TargetMap
    waveform: ControlWaveform | None = None


@dataclass(frozen=True, eq=False)
class BenchmarkSequence:
    """One randomized sequence: prep, l step maps, readout."""

    length: int
    psi_initial: np.ndarray
    prep: MapImplementation
    steps: tuple[MapImplementation, ...]
    readout: MapImplementation
    psi_final_ideal: np.ndarray


@dataclass(frozen=True)
class DecayFit:
    """(eps_0, eps_b) estimates with covariance from the fit Jacobian."""

    epsilon_0: float
    epsilon_b: float
    covariance: np.ndarray
    residual_norm: float


@dataclass(frozen=True)
class BenchmarkConfig:
    """End-to-end benchmark settings."""

    rng: RngStream
    params: PhysicalParams = field(default_factory=PhysicalParams)
    lengths: tuple[int, ...] = (1, 2, 3, 4, 6, 8)
    n_per_length: int = 10
    state_map_config: DesignConfig | None = None
    atom_number: int | None = None
    eps_s_samples: int = 20

    def __post_init__(self):
        if not self.lengths or any(l < 0 for l in self.lengths):
            raise ValueError("lengths must be nonempty with l >= 0")
        if self.n_per_length < 1:
            raise ValueError("n_per_length must be >= 1")
        if self.atom_number is not None and self.atom_number < 1:
            raise ValueError("atom_number must be >= 1 when given")
        object.__setattr__(self, "lengths", tuple(int(l) for l in self.lengths))


@dataclass(frozen=True, eq=False)
class BenchmarkResult:
    """Raw samples, per-length aggregates, decay fit, and the error report."""

    rows: tuple[tuple[int, int, float], ...]  # (l, sequence_id, survival)
    summary: tuple[tuple[int, float, float], ...]  # (l, mean, stderr)
    fit: DecayFit
    eps_s: float
    eps_b: float
    ratio: float | None


def _fiducial(dim: int) -> np.ndarray:
    psi = np.zeros(dim, dtype=complex)
    psi[FIDUCIAL_INDEX] = 1.0
    return psi


def _design_state_map(
    psi_in: np.ndarray,
    psi_out: np.ndarray,
    config: DesignConfig,
    context: str,
) -> ControlWaveform:
    target = TargetMap.state(psi_in, psi_out)
    try:
        report = design(target, config)
    except Exception as exc:
        raise SequenceConstructionError(f"{context}: design failed ({exc})") from exc
    if report.best_fidelity < config.target_fidelity:
        raise SequenceConstructionError(
            f"{context}: best design fidelity {report.best_fidelity:.6f} below "
            f"target {config.target_fidelity}"
        )
    return report.best_waveform


def build_sequences(
    map_set: list[MapImplementation],
    lengths: list[int],
    n_per_length: int,
    rng: RngStream | np.random.Generator,
    *,
    state_map_config: DesignConfig | None = None,
) -> list[BenchmarkSequence]:
    """Assemble random sequences with designed (or exact) prep/readout maps.

    For each length, ``n_per_length`` sequences are built with a fresh
    random input state and step maps drawn uniformly with replacement.
    With ``state_map_config=None`` the prep and readout maps are exact
    unitaries instead of designed waveforms.  Draw order per sequence:
    input state, then the l step indices.
    """
    if not map_set:
        raise ValueError("map_set must be nonempty")
    if any(l < 0 for l in lengths):
        raise ValueError("sequence lengths must be >= 0")
    dim = map_set[0].target.dim
    if any(m.target.dim != dim for m in map_set):
        raise ValueError("all maps in map_set must share one dimension")
    gen = as_generator(rng)
    fid = _fiducial(dim)
    sequences = []
    for length in lengths:
        for i in range(n_per_length):
            psi0 = sample_random_state(dim, gen)
            idx = gen.integers(0, len(map_set), size=length)
            steps = tuple(map_set[int(j)] for j in idx)
            psi = psi0
            for step in steps:
                psi = step.target.exact_unitary() @ psi
            prep_target = TargetMap.state(fid, psi0)
            readout_target = TargetMap.state(psi, fid)
            if state_map_config is None:
                prep = MapImplementation(prep_target, None)
                readout = MapImplementation(readout_target, None)
            else:
                context = f"sequence {i} at length {length}"
                prep = MapImplementation(
                    prep_target,
                    _design_state_map(fid, psi0, state_map_config, context + " (prep)"),
                )
                readout = MapImplementation(
                    readout_target,
                    _design_state_map(psi, fid, state_map_config, context + " (readout)"),
                )
            sequences.append(
                BenchmarkSequence(length, psi0, prep, steps, readout, psi)
            )
    return sequences


def _draw_realization(
    model: ErrorModel, gen: np.random.Generator
) -> tuple[FieldTrajectory, np.ndarray]:
    members = model.field_ensemble.members
    weights = np.array([w for w, _ in members])
    choice = int(gen.choice(len(members), p=weights / weights.sum()))
    fracs = gen.standard_normal(3) * np.asarray(model.rabi_scale_sigma)
    return members[choice][1], np.maximum(fracs, -1.0)


def _perturbed_params(params: PhysicalParams, fracs: np.ndarray) -> PhysicalParams:
    return replace(
        params,
        rf_rabi_x=params.rf_rabi_x * (1.0 + fracs[0]),
        rf_rabi_y=params.rf_rabi_y * (1.0 + fracs[1]),
        uw_rabi=params.uw_rabi * (1.0 + fracs[2]),
    )


def simulate_sequence(
    seq: BenchmarkSequence,
    model: ErrorModel,
    params: PhysicalParams,
    rng: RngStream | np.random.Generator,
    *,
    atom_number: int | None = None,
) -> float:
    """Survival probability for one sequence under one error realization.

    Waveform-backed maps are propagated under the drawn field trajectory
    and Rabi scales (the trajectory applies to each waveform application);
    exact-unitary maps are idealized and applied unperturbed.  The SPAM
    admixture is applied to the final fiducial population; optional
    binomial shot noise models a finite atom number.
    """
    gen = as_generator(rng)
    trajectory, fracs = _draw_realization(model, gen)
    params_err = _perturbed_params(params, fracs)

    dim = seq.psi_initial.size
    psi = _fiducial(dim)
    for step in (seq.prep, *seq.steps, seq.readout):
        if step.waveform is None:
            psi = step.target.exact_unitary() @ psi
        else:
            psi = total_unitary(step.waveform, params_err, trajectory) @ psi
    survival = float(abs(psi[FIDUCIAL_INDEX]) ** 2)
    survival = (1.0 - model.spam_error) * survival + model.spam_error / dim
    if atom_number is not None:
        survival = gen.binomial(atom_number, min(1.0, survival)) / atom_number
    return survival


def decay_model(l, eps0: float, epsb: float, dim: int):
    """The survival model F(l); vectorized over l."""
    l = np.asarray(l, dtype=float)
    a = dim / (dim - 1)
    return 1.0 / dim + (dim - 1) / dim * (1.0 - a * eps0) * (1.0 - a * epsb) ** l


def fit_decay(data, dim: int) -> DecayFit:
    """Weighted nonlinear least squares of the survival decay.

    ``data`` is an iterable of (l, mean survival, std error); std errors of
    zero (or None) fall back to unit weights.  Parameters are bounded to
    [0, (d-1)/d] so the model never dips below the 1/d floor regardless of
    the data.  Covariance comes from the Jacobian at the optimum (absolute
    sigma when std errors are supplied).
    """
    rows = [(int(l), float(m), None if s is None else float(s)) for l, m, s in data]
    if len({l for l, _, _ in rows}) < 3:
        raise ValueError("fit needs at least 3 distinct sequence lengths")
    ls = np.array([r[0] for r in rows], dtype=float)
    ys = np.array([r[1] for r in rows])
    sigmas = np.array([r[2] if (r[2] is not None and r[2] > 0) else np.nan for r in rows])
    have_sigma = not np.any(np.isnan(sigmas))
    w = 1.0 / sigmas if have_sigma else np.ones_like(ys)

    a = dim / (dim - 1)
    upper = 1.0 / a  # (d-1)/d

    # log-linear starting point from y - 1/d ~ A * B^l
    excess = np.clip(ys - 1.0 / dim, 1e-9, None)
    slope, intercept = np.polyfit(ls, np.log(excess), 1)
    b0 = float(np.clip(np.exp(slope), 1e-6, 1.0 - 1e-9))
    a0 = float(np.clip(np.exp(intercept) / ((dim - 1) / dim), 1e-9, 1.0))
    x0 = np.clip(
        [(1.0 - a0) / a, (1.0 - b0) / a],
        0.0,
        upper * (1.0 - 1e-12),
    )

    def residuals(x):
        return (decay_model(ls, x[0], x[1], dim) - ys) * w

    result = scipy.optimize.least_squares(
        residuals, x0, bounds=([0.0, 0.0], [upper, upper]), method="trf", xtol=1e-15,
        ftol=1e-15, gtol=1e-15,
    )
    if not result.success:
        raise FitError(
            f"decay fit did not converge: {result.message} "
            f"(residual norm {np.linalg.norm(result.fun):.3e})"
        )
    jtj = result.jac.T @ result.jac
    try:
        cov = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(jtj)
    if not have_sigma:
        dof = max(1, len(rows) - 2)
        cov = cov * (2.0 * result.cost / dof)
    return DecayFit(
        epsilon_0=float(result.x[0]),
        epsilon_b=float(result.x[1]),
        covariance=cov,
        residual_norm=float(np.linalg.norm(result.fun)),
    )


def average_standard_error(
    map_set: list[MapImplementation],
    model: ErrorModel,
    params: PhysicalParams,
    rng: RngStream | np.random.Generator,
    *,
    n_samples: int = 20,
) -> float:
    """eps_S = 1 - mean over maps of the error-averaged fidelity.

    The field ensemble is averaged exactly (it is a finite weighted set);
    Rabi-scale noise, when present, is averaged over ``n_samples``
    Monte-Carlo draws per map.
    """
    gen = as_generator(rng)
    use_mc = any(s > 0 for s in model.rabi_scale_sigma)
    fbar_values = []
    for m in map_set:
        if m.waveform is None:
            u = m.target.exact_unitary()
            fbar_values.append(fidelity(m.target, u))
            continue
        if use_mc:
            samples = []
            for _ in range(n_samples):
                trajectory, fracs = _draw_realization(model, gen)
                p_err = _perturbed_params(params, fracs)
                samples.append(
                    fidelity(m.target, total_unitary(m.waveform, p_err, trajectory))
                )
            fbar_values.append(float(np.mean(samples)))
        else:
            acc = [
                weight * fidelity(m.target, total_unitary(m.waveform, params, traj))
                for weight, traj in model.field_ensemble.members
            ]
            fbar_values.append(math.fsum(acc))
    return 1.0 - float(np.mean(fbar_values))


def run_benchmark(
    map_set: list[MapImplementation],
    model: ErrorModel,
    config: BenchmarkConfig,
) -> BenchmarkResult:
    """Build, simulate, aggregate, and fit a full benchmark run."""
    gen = config.rng.generator()
    sequences = build_sequences(
        map_set,
        list(config.lengths),
        config.n_per_length,
        gen,
        state_map_config=config.state_map_config,
    )
    dim = map_set[0].target.dim
    rows = []
    for seq_id, seq in enumerate(sequences):
        survival = simulate_sequence(
            seq, model, config.params, gen, atom_number=config.atom_number
        )
        rows.append((seq.length, seq_id, survival))

    summary = []
    for length in sorted(set(config.lengths)):
        vals = np.array([s for l, _, s in rows if l == length])
        mean = float(vals.mean())
        stderr = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        summary.append((length, mean, stderr))

    usable_sigma = all(s > 0 for _, _, s in summary)
    fit = fit_decay(
        [(l, m, s if usable_sigma else None) for l, m, s in summary], dim
    )
    eps_s = average_standard_error(
        map_set, model, config.params, gen, n_samples=config.eps_s_samples
    )
    eps_b = fit.epsilon_b
    ratio = eps_s / eps_b if eps_b > 0 else None
    return BenchmarkResult(tuple(rows), tuple(summary), fit, eps_s, eps_b, ratio)
