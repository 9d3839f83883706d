"""Fidelity objectives, their exact phase gradients, and robust averages.

All three target classes share one functional form.  A target is stored as
a pair of d x p isometries (v_in, v_out) and a p x p unitary w; the
embedded d x d matrix is W = v_out w v_in^dag and the phase-invariant
fidelity is

    F = |Tr(W^dag U)|^2 / p^2

which reduces to |Tr(w^dag U)|^2 / d^2 for full-space maps and to
|<psi_out| U |psi_in>|^2 for state maps (p = 1).

The gradient with respect to the control phase phi of step k uses the
product rule over the ordered step propagators,

    dF/dphi = 2 Re[ conj(Tr(W^dag U)) * Tr(W^dag B_k (dU_k/dphi) P_{k-1}) ] / p^2,

with P the forward and B the backward partial products; the per-step
eigensystems cached by the propagation layer supply dU_k/dphi exactly.

Robustness is an expectation over a discrete weighted ensemble of
bias-field trajectories.  Two standard presets are provided: a two-point
average over +/- static offsets and a four-point average adding the two
opposite-sign linear ramps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .propagation import (
    ControlWaveform,
    FieldTrajectory,
    _phase_divided_difference,
    propagate,
    total_unitary,
)
from .spin_model import PhysicalParams, control_operators

TARGET_KINDS = ("full_unitary", "subspace_map", "state_map")

UNITARITY_TOL = 1e-12

#: Default robustness radius dOmega_r (rad/s): 1e-4 of the nominal 2*pi*1 MHz
#: Larmor frequency, ten times a 10 ppm field-stability floor.  This is a
#: tunable configuration value, not a physically mandated one.
DEFAULT_FIELD_RADIUS = 2.0 * math.pi * 100.0


def _as_unit_vector(psi, name: str) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"{name} must be unit-norm to 1e-12 (|psi| = {norm!r})")
    psi = psi.copy()
    psi.setflags(write=False)
    return psi


def _check_unitary(w: np.ndarray, name: str) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"{name} must be square, got shape {w.shape}")
    p = w.shape[0]
    defect = np.abs(w.conj().T @ w - np.eye(p)).max()
    if defect > UNITARITY_TOL * max(1, p):
        raise ValueError(f"{name} is not unitary (defect {defect:.3e})")
    w = w.copy()
    w.setflags(write=False)
    return w


def _check_isometry(v: np.ndarray, dim: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if v.ndim != 2 or v.shape[0] != dim:
        raise ValueError(f"{name} must have shape ({dim}, p), got {v.shape}")
    p = v.shape[1]
    defect = np.abs(v.conj().T @ v - np.eye(p)).max()
    if defect > 1e-12 * max(1, p):
        raise ValueError(f"{name} is not an isometry (defect {defect:.3e})")
    v = v.copy()
    v.setflags(write=False)
    return v


@dataclass(frozen=True, eq=False)
class TargetMap:
    """A goal transformation: full unitary, subspace isometry, or state map.

    ``indices_in``/``indices_out`` are set for basis-aligned subspace maps
    (and index the rows of the identity that form the isometries); they are
    ``None`` for general (rotated-subspace) targets.
    """

    kind: str
    dim: int
    w: np.ndarray        # (p, p) unitary
    v_in: np.ndarray     # (dim, p) isometry
    v_out: np.ndarray    # (dim, p) isometry
    indices_in: tuple[int, ...] | None = None
    indices_out: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ValueError(f"kind must be one of {TARGET_KINDS}, got {self.kind!r}")

    @property
    def p(self) -> int:
        return self.w.shape[0]

    @classmethod
    def full(cls, w) -> "TargetMap":
        w = _check_unitary(w, "w")
        d = w.shape[0]
        eye = np.eye(d, dtype=complex)
        return cls("full_unitary", d, w, eye, eye,
                   tuple(range(d)), tuple(range(d)))

    @classmethod
    def subspace(cls, w, indices_in, indices_out, dim: int) -> "TargetMap":
        w = _check_unitary(w, "w")
        p = w.shape[0]
        idx_in = _check_indices(indices_in, p, dim, "indices_in")
        idx_out = _check_indices(indices_out, p, dim, "indices_out")
        eye = np.eye(dim, dtype=complex)
        return cls("subspace_map", dim, w, eye[:, list(idx_in)], eye[:, list(idx_out)],
                   idx_in, idx_out)

    @classmethod
    def subspace_isometries(cls, w, v_in, v_out, dim: int) -> "TargetMap":
        """General subspace map between rotated (non-basis-aligned) subspaces."""
        w = _check_unitary(w, "w")
        v_in = _check_isometry(v_in, dim, "v_in")
        v_out = _check_isometry(v_out, dim, "v_out")
        if v_in.shape[1] != w.shape[0] or v_out.shape[1] != w.shape[0]:
            raise ValueError("isometry ranks must match w")
        return cls("subspace_map", dim, w, v_in, v_out, None, None)

    @classmethod
    def state(cls, psi_in, psi_out) -> "TargetMap":
        psi_in = _as_unit_vector(psi_in, "psi_in")
        psi_out = _as_unit_vector(psi_out, "psi_out")
        if psi_in.shape != psi_out.shape:
            raise ValueError("state vectors must have equal dimension")
        d = psi_in.size
        w = np.array([[1.0 + 0.0j]])
        return cls("state_map", d, w, psi_in.reshape(d, 1), psi_out.reshape(d, 1))

    @property
    def psi_in(self) -> np.ndarray:
        if self.kind != "state_map":
            raise ValueError("psi_in is defined for state maps only")
        return self.v_in[:, 0]

    @property
    def psi_out(self) -> np.ndarray:
        if self.kind != "state_map":
            raise ValueError("psi_out is defined for state maps only")
        return self.v_out[:, 0]

    def embedded(self) -> np.ndarray:
        """The d x d matrix W = v_out w v_in^dag entering the trace overlap."""
        return self.v_out @ self.w @ self.v_in.conj().T

    def exact_unitary(self) -> np.ndarray:
        """A d x d unitary implementing the target exactly.

        Full maps return w itself.  Otherwise the isometries are completed
        to unitaries deterministically and the complement of the input
        subspace is mapped to the complement of the output subspace.
        """
        if self.kind == "full_unitary":
            return np.array(self.w)
        vin_full = _complete_isometry(self.v_in)
        vout_full = _complete_isometry(self.v_out)
        p, d = self.p, self.dim
        core = np.eye(d, dtype=complex)
        core[:p, :p] = self.w
        return vout_full @ core @ vin_full.conj().T


def _check_indices(indices, p: int, dim: int, name: str) -> tuple[int, ...]:
    idx = tuple(int(i) for i in indices)
    if len(idx) != p:
        raise ValueError(f"{name} must have length {p}, got {len(idx)}")
    if len(set(idx)) != len(idx):
        raise ValueError(f"{name} must not repeat indices")
    if any(i < 0 or i >= dim for i in idx):
        raise ValueError(f"{name} out of range for dimension {dim}")
    return idx


def _complete_isometry(v: np.ndarray) -> np.ndarray:
    """Complete a d x p isometry to a d x d unitary (deterministic)."""
    d, p = v.shape
    cols = [v[:, j].copy() for j in range(p)]
    for i in range(d):
        if len(cols) == d:
            break
        w = np.zeros(d, dtype=complex)
        w[i] = 1.0
        for _ in range(2):  # re-orthogonalize for stability
            for c in cols:
                w -= (c.conj() @ w) * c
        norm = np.linalg.norm(w)
        if norm > 1e-8:
            cols.append(w / norm)
    if len(cols) != d:
        raise ValueError("isometry completion failed")
    return np.stack(cols, axis=1)


@dataclass(frozen=True)
class PerturbationEnsemble:
    """Discrete weighted set of field trajectories defining a robust average."""

    members: tuple[tuple[float, FieldTrajectory], ...]

    def __post_init__(self):
        if not self.members:
            raise ValueError("ensemble must have at least one member")
        weights = [w for w, _ in self.members]
        if any(not (math.isfinite(w) and w > 0) for w in weights):
            raise ValueError("ensemble weights must be positive and finite")
        total = math.fsum(weights)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"ensemble weights must sum to 1 (got {total!r})")
        object.__setattr__(
            self,
            "members",
            tuple((float(w), traj) for w, traj in self.members),
        )

    @classmethod
    def nominal(cls) -> "PerturbationEnsemble":
        """Single member at zero offset (no robustness)."""
        return cls(((1.0, FieldTrajectory.static(0.0)),))

    @classmethod
    def two_point(cls, radius: float = DEFAULT_FIELD_RADIUS) -> "PerturbationEnsemble":
        """Equal-weight average over static offsets +/- radius."""
        return cls((
            (0.5, FieldTrajectory.static(+radius)),
            (0.5, FieldTrajectory.static(-radius)),
        ))

    @classmethod
    def four_point(cls, radius: float = DEFAULT_FIELD_RADIUS) -> "PerturbationEnsemble":
        """Static +/- radius plus the two opposite-sign linear ramps."""
        return cls((
            (0.25, FieldTrajectory.static(+radius)),
            (0.25, FieldTrajectory.static(-radius)),
            (0.25, FieldTrajectory.linear_ramp(-radius, +radius)),
            (0.25, FieldTrajectory.linear_ramp(+radius, -radius)),
        ))


@dataclass(frozen=True, eq=False)
class ObjectiveValue:
    """Robust average fidelity and its gradient over all 3N phases.

    Gradient layout matches :meth:`ControlWaveform.to_vector`: all phi_x,
    then all phi_y, then all phi_uw, each time ordered.
    """

    fidelity: float
    gradient: np.ndarray


def _clamp_fidelity(f: float) -> float:
    return float(min(1.0, max(0.0, f)))


def fidelity_full(w: np.ndarray, u: np.ndarray) -> float:
    """|Tr(w^dag u)|^2 / d^2 (invariant under a global phase of u)."""
    w = np.asarray(w)
    u = np.asarray(u)
    if w.shape != u.shape or w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"dimension mismatch: {w.shape} vs {u.shape}")
    d = w.shape[0]
    t = np.trace(w.conj().T @ u)
    return _clamp_fidelity(abs(t) ** 2 / d**2)


def _overlap_trace(target: TargetMap, u: np.ndarray) -> complex:
    """Tr(W^dag U) with W the embedded target."""
    if target.indices_in is not None:
        sub = u[np.ix_(target.indices_out, target.indices_in)]
    else:
        sub = target.v_out.conj().T @ u @ target.v_in
    return complex(np.sum(target.w.conj() * sub))


def fidelity_subspace(target: TargetMap, u: np.ndarray) -> float:
    """|Tr(W_if^dag P_f U P_i)|^2 / p^2; for state maps |<psi_f|U|psi_i>|^2."""
    if target.kind not in ("subspace_map", "state_map"):
        raise ValueError(f"expected a subspace or state map, got {target.kind}")
    if u.shape != (target.dim, target.dim):
        raise ValueError(f"unitary shape {u.shape} does not match dim {target.dim}")
    t = _overlap_trace(target, u)
    return _clamp_fidelity(abs(t) ** 2 / target.p**2)


def fidelity(target: TargetMap, u: np.ndarray) -> float:
    """Phase-invariant fidelity of u against any target kind.

    Uses the same trace-overlap evaluation as the gradient path, so values
    agree bit-for-bit between fidelity-only and gradient evaluations.
    """
    if u.shape != (target.dim, target.dim):
        raise ValueError(f"unitary shape {u.shape} does not match dim {target.dim}")
    t = _overlap_trace(target, u)
    return _clamp_fidelity(abs(t) ** 2 / target.p**2)


def hilbert_schmidt_distance(w: np.ndarray, u: np.ndarray) -> float:
    """Frobenius-norm distance ||w - u||; phase-sensitive, diagnostic only."""
    if w.shape != u.shape:
        raise ValueError(f"dimension mismatch: {w.shape} vs {u.shape}")
    return float(np.linalg.norm(w - u))


def ensemble_fidelity(
    waveform: ControlWaveform,
    target: TargetMap,
    params: PhysicalParams,
    ensemble: PerturbationEnsemble | None = None,
) -> float:
    """Weighted average fidelity over the ensemble (no gradient)."""
    if ensemble is None:
        ensemble = PerturbationEnsemble.nominal()
    values = [
        weight * fidelity(target, total_unitary(waveform, params, traj))
        for weight, traj in ensemble.members
    ]
    return _clamp_fidelity(math.fsum(values))


def _member_objective(
    waveform: ControlWaveform,
    target: TargetMap,
    params: PhysicalParams,
    trajectory: FieldTrajectory,
) -> tuple[float, np.ndarray]:
    """Fidelity and full gradient for a single field trajectory."""
    n, d, p = waveform.n_steps, target.dim, target.p
    rec = propagate(waveform, params, trajectory, keep_eigensystems=True)
    w_emb = target.embedded()
    o = _overlap_trace(target, rec.total)

    v = rec.eigenvectors
    gamma = _phase_divided_difference(rec.eigenvalues, waveform.dt)

    # Backward sweep: X_k = W^dag B_k with B_k = U_N ... U_{k+1}, then
    # Lambda_k = P_{k-1} X_k.  Tr(Lambda dU) = sum_ce (dH)_ce K_ce with
    # K_k = conj(V) (Lambda~^T * Gamma) V^T rotated back to the lab basis,
    # so dH = -sin(phi) C + cos(phi) S contracts against the static C, S.
    kernel = np.empty((n, d, d), dtype=complex)
    x = w_emb.conj().T
    for k in range(n - 1, -1, -1):
        lam_mat = x if k == 0 else rec.forward_partials[k - 1] @ x
        vk = v[k]
        lam_tilde = vk.conj().T @ lam_mat @ vk
        kernel[k] = vk.conj() @ (lam_tilde.T * gamma[k]) @ vk.T
        if k > 0:
            x = x @ rec.step_unitaries[k]

    ops = control_operators(params)
    grad = np.empty(3 * n)
    phase_arrays = (waveform.phi_x, waveform.phi_y, waveform.phi_uw)
    for j, phi in enumerate(phase_arrays):
        c_term = np.einsum("ab,kab->k", ops.drive_cos[j], kernel)
        s_term = np.einsum("ab,kab->k", ops.drive_sin[j], kernel)
        traces = -np.sin(phi) * c_term + np.cos(phi) * s_term
        grad[j * n:(j + 1) * n] = 2.0 * np.real(np.conj(o) * traces) / p**2
    return _clamp_fidelity(abs(o) ** 2 / p**2), grad


def objective_with_gradient(
    waveform: ControlWaveform,
    target: TargetMap,
    params: PhysicalParams,
    ensemble: PerturbationEnsemble | None = None,
) -> ObjectiveValue:
    """Robust average fidelity and its exact gradient.

    The ensemble average is linear in the weights; member contributions are
    computed independently and merged with compensated summation.
    """
    if ensemble is None:
        ensemble = PerturbationEnsemble.nominal()
    if target.dim != params.manifold.dim:
        raise ValueError(
            f"target dimension {target.dim} does not match manifold dimension "
            f"{params.manifold.dim}"
        )
    fids = []
    grads = []
    weights = []
    for weight, traj in ensemble.members:
        f, g = _member_objective(waveform, target, params, traj)
        fids.append(weight * f)
        grads.append(g)
        weights.append(weight)
    fbar = _clamp_fidelity(math.fsum(fids))
    gbar = np.asarray(weights) @ np.stack(grads)
    return ObjectiveValue(fbar, gbar)
