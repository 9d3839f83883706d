"""Exact propagation of piecewise-constant dynamics and step derivatives.

Each step Hamiltonian is exponentiated through its eigendecomposition
H = V diag(lam) V^dag, U = V exp(-i lam dt) V^dag.  The eigenpairs are the
expensive part and are reused for the exact derivative of the step
propagator with respect to a control phase: in the eigenbasis,

    (dU)_ab = (dH)_ab * Gamma_ab,
    Gamma_ab = (e^{-i lam_a dt} - e^{-i lam_b dt}) / (lam_a - lam_b),

with the diagonal limit Gamma_aa = -i dt e^{-i lam_a dt} used whenever
|lam_a - lam_b| * dt < 1e-9 to avoid catastrophic cancellation.

Linear field ramps are sampled at step midpoints, which is second-order
accurate in the (slow) ramp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .spin_model import PhysicalParams, StepPhases, control_operators

DEGENERACY_THRESHOLD = 1e-9

FIELD_KINDS = ("static", "linear_ramp")


@dataclass(frozen=True, eq=False)
class ControlWaveform:
    """Piecewise-constant phase waveform: three channels on N steps of dt.

    Phases are stored unwrapped; wrap only for export.  The flat-vector
    layout used by the optimizer and for gradients is fixed package-wide:
    all phi_x (time ordered), then all phi_y, then all phi_uw.
    """

    dt: float
    phi_x: np.ndarray
    phi_y: np.ndarray
    phi_uw: np.ndarray
    label: str = ""

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be finite and > 0, got {self.dt!r}")
        for name in ("phi_x", "phi_y", "phi_uw"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=float))
            if arr.ndim != 1:
                raise ValueError(f"{name} must be one-dimensional")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite phases")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = len(self.phi_x)
        if n < 1:
            raise ValueError("waveform needs at least one step")
        if len(self.phi_y) != n or len(self.phi_uw) != n:
            raise ValueError("phase channels must have equal length")

    @property
    def n_steps(self) -> int:
        return len(self.phi_x)

    @property
    def n_phases(self) -> int:
        return 3 * self.n_steps

    @property
    def total_time(self) -> float:
        return self.n_steps * self.dt

    @property
    def phases(self) -> tuple[StepPhases, ...]:
        return tuple(
            StepPhases(float(x), float(y), float(u))
            for x, y, u in zip(self.phi_x, self.phi_y, self.phi_uw)
        )

    def step(self, k: int) -> StepPhases:
        return StepPhases(float(self.phi_x[k]), float(self.phi_y[k]), float(self.phi_uw[k]))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.phi_x, self.phi_y, self.phi_uw])

    @classmethod
    def from_vector(cls, dt: float, vec: np.ndarray, label: str = "") -> "ControlWaveform":
        vec = np.asarray(vec, dtype=float)
        if vec.ndim != 1 or vec.size % 3 != 0:
            raise ValueError("phase vector length must be a multiple of 3")
        n = vec.size // 3
        return cls(dt, vec[:n], vec[n:2 * n], vec[2 * n:], label)

    def wrapped(self) -> "ControlWaveform":
        """Copy with all phases wrapped to [0, 2*pi)."""
        two_pi = 2.0 * math.pi
        return ControlWaveform(
            self.dt,
            np.mod(self.phi_x, two_pi),
            np.mod(self.phi_y, two_pi),
            np.mod(self.phi_uw, two_pi),
            self.label,
        )


@dataclass(frozen=True)
class FieldTrajectory:
    """Bias-field offset dOmega(t) over one waveform: static or linear ramp.

    The value at step k of N (midpoint sampling) is
    offset_start + (offset_end - offset_start) * (k + 1/2) / N.
    """

    kind: str
    offset_start: float
    offset_end: float

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"kind must be one of {FIELD_KINDS}, got {self.kind!r}")
        if not (math.isfinite(self.offset_start) and math.isfinite(self.offset_end)):
            raise ValueError("field offsets must be finite")
        if self.kind == "static" and self.offset_start != self.offset_end:
            raise ValueError("static trajectory requires offset_start == offset_end")

    @classmethod
    def static(cls, offset: float = 0.0) -> "FieldTrajectory":
        return cls("static", offset, offset)

    @classmethod
    def linear_ramp(cls, offset_start: float, offset_end: float) -> "FieldTrajectory":
        return cls("linear_ramp", offset_start, offset_end)

    @property
    def is_zero(self) -> bool:
        return self.offset_start == 0.0 and self.offset_end == 0.0

    def offsets(self, n_steps: int) -> np.ndarray:
        """Per-step offsets, midpoint-sampled."""
        frac = (np.arange(n_steps) + 0.5) / n_steps
        return self.offset_start + (self.offset_end - self.offset_start) * frac


@dataclass(frozen=True, eq=False)
class PropagationRecord:
    """Per-step propagators and their ordered partial products.

    ``forward_partials[k]`` is U_{k+1} ... U_1 (0-based k), so
    ``forward_partials[-1]`` equals ``total``.  When built with
    ``keep_eigensystems=True`` the per-step eigenpairs are retained for
    gradient evaluation.
    """

    step_unitaries: np.ndarray       # (N, d, d)
    forward_partials: np.ndarray     # (N, d, d)
    total: np.ndarray                # (d, d)
    eigenvalues: np.ndarray | None = None   # (N, d)
    eigenvectors: np.ndarray | None = None  # (N, d, d)

    @property
    def n_steps(self) -> int:
        return self.step_unitaries.shape[0]


def _eigh(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    try:
        return np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigendecomposition failed (matrix max-norm {np.abs(h).max():.6e})"
        ) from exc


def step_propagator(h: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i h dt) for Hermitian h, via eigendecomposition."""
    if not math.isfinite(dt):
        raise ValueError("dt must be finite")
    lam, v = _eigh(h)
    return (v * np.exp(-1j * lam * dt)) @ v.conj().T


def _phase_divided_difference(lam: np.ndarray, dt: float) -> np.ndarray:
    """Gamma matrix of the spectral derivative formula (batched over leading axes)."""
    phase = np.exp(-1j * lam * dt)
    lam_a = lam[..., :, None]
    lam_b = lam[..., None, :]
    ph_a = phase[..., :, None]
    ph_b = phase[..., None, :]
    diff = lam_a - lam_b
    near = np.abs(diff) * abs(dt) < DEGENERACY_THRESHOLD
    denom = np.where(near, 1.0, diff)
    return np.where(near, -1j * dt * ph_a, (ph_a - ph_b) / denom)


def step_propagator_with_derivatives(
    h: np.ndarray,
    dhs: list[np.ndarray],
    dt: float,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Step propagator plus exact derivatives dU/dphi for each dH/dphi."""
    if not math.isfinite(dt):
        raise ValueError("dt must be finite")
    lam, v = _eigh(h)
    u = (v * np.exp(-1j * lam * dt)) @ v.conj().T
    gamma = _phase_divided_difference(lam, dt)
    vh = v.conj().T
    dus = [v @ (gamma * (vh @ dh @ v)) @ vh for dh in dhs]
    return u, dus


def _hamiltonian_stack(
    waveform: ControlWaveform,
    params: PhysicalParams,
    field: FieldTrajectory,
) -> np.ndarray:
    """All N step Hamiltonians as one (N, d, d) array."""
    ops = control_operators(params)
    n = waveform.n_steps
    coeffs = np.empty((n, 8))
    coeffs[:, 0] = np.cos(waveform.phi_x)
    coeffs[:, 1] = np.cos(waveform.phi_y)
    coeffs[:, 2] = np.cos(waveform.phi_uw)
    coeffs[:, 3] = np.sin(waveform.phi_x)
    coeffs[:, 4] = np.sin(waveform.phi_y)
    coeffs[:, 5] = np.sin(waveform.phi_uw)
    coeffs[:, 6] = 1.0
    coeffs[:, 7] = field.offsets(n)
    return np.tensordot(coeffs, ops.stacked, axes=([1], [0]))


def _eigh_stack(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    try:
        return np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigendecomposition failed (stack max-norm {np.abs(h).max():.6e})"
        ) from exc


def propagate(
    waveform: ControlWaveform,
    params: PhysicalParams,
    field: FieldTrajectory | None = None,
    *,
    keep_eigensystems: bool = False,
) -> PropagationRecord:
    """Propagate a waveform, returning all step and partial-product unitaries."""
    if field is None:
        field = FieldTrajectory.static(0.0)
    lam, v = _eigh_stack(_hamiltonian_stack(waveform, params, field))
    n, d = lam.shape
    phases = np.exp(-1j * lam * waveform.dt)
    u = np.empty((n, d, d), dtype=complex)
    partials = np.empty((n, d, d), dtype=complex)
    acc = np.eye(d, dtype=complex)
    for k in range(n):
        uk = (v[k] * phases[k]) @ v[k].conj().T
        u[k] = uk
        acc = uk @ acc
        partials[k] = acc
    return PropagationRecord(
        step_unitaries=u,
        forward_partials=partials,
        total=partials[-1].copy(),
        eigenvalues=lam if keep_eigensystems else None,
        eigenvectors=v if keep_eigensystems else None,
    )


def total_unitary(
    waveform: ControlWaveform,
    params: PhysicalParams,
    field: FieldTrajectory | None = None,
) -> np.ndarray:
    """U(T) only; cheaper than :func:`propagate` when partials are not needed.

    Accumulates the ordered product in the same order as :func:`propagate`,
    so both paths give bit-identical totals.
    """
    if field is None:
        field = FieldTrajectory.static(0.0)
    lam, v = _eigh_stack(_hamiltonian_stack(waveform, params, field))
    n, d = lam.shape
    phases = np.exp(-1j * lam * waveform.dt)
    acc = np.eye(d, dtype=complex)
    for k in range(n):
        acc = ((v[k] * phases[k]) @ v[k].conj().T) @ acc
    return acc


def unitarity_defect(u: np.ndarray) -> float:
    """max-norm of U^dag U - 1."""
    d = u.shape[0]
    return float(np.abs(u.conj().T @ u - np.eye(d)).max())
