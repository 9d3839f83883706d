"""Hyperfine manifold structure and the rotating-frame control Hamiltonian.

The controlled system is the electronic ground manifold of an alkali atom:
two hyperfine spin manifolds F+ = I + 1/2 and F- = I - 1/2 of total
dimension d = 4I + 2 (d = 16 for cesium, I = 7/2).  Basis ordering is fixed
throughout the package: the F+ block first with m descending from +F+ to
-F+, then the F- block with m descending from +F- to -F-.  Index 0 is the
stretched state |F+, m = F+> and index 2*F+ + 1 is |F-, m = F->.

Drives and conventions (all rates are angular frequencies in rad/s, hbar = 1):

* Two rf quadratures with phases phi_x, phi_y rotate the F+ spin through

      (Omega_x/2) [cos(phi_x) Fx + sin(phi_x) Fy]
    + (Omega_y/2) [cos(phi_y) Fy - sin(phi_y) Fx]  -  Delta_rf * Fz,

  and the F- spin through the same expression with an overall sign flip on
  both the drive and detuning terms.  The flip encodes the opposite sign of
  the g-factors of the two manifolds: the rf field drives SU(2) rotations
  of opposite sense on F+ and F-.  This sign convention is frozen here;
  any fixed choice with opposite rotation sense is equivalent up to a frame
  rotation.

* A microwave drive with phase phi_uw couples the two stretched states as a
  pseudospin: (Omega_uw/2) [cos(phi_uw) sx + sin(phi_uw) sy] - Delta_uw sz/2,
  with sx, sy, sz the Pauli operators on span{|F+,F+>, |F-,F->}.

* A bias-field offset dOmega (the Larmor-frequency equivalent of a magnetic
  field deviation) enters through the linear-Zeeman generator
  G = Fz(+) (+) (-Fz(-)), i.e. H += dOmega * G.  Note the stretched-state
  microwave transition shifts by (F+ + F-) * dOmega (7 dOmega for cesium).

At nominal (zero) detunings the drift term vanishes: second-order Zeeman
structure is deliberately not modeled.  The bare Larmor frequency Omega_0
never enters the rotating-frame matrix at zero detuning; it is kept in
:class:`PhysicalParams` as the scale against which field offsets are quoted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ManifoldStructure:
    """Two hyperfine spin manifolds F+/F- built from a nuclear spin I.

    ``nuclear_spin_doubled`` is 2I (7 for cesium).  Dimension is
    d = 4I + 2 = 2*(2I) + 2.
    """

    nuclear_spin_doubled: int = 7

    def __post_init__(self):
        n = self.nuclear_spin_doubled
        if not isinstance(n, int) or n < 1:
            raise ValueError(f"nuclear_spin_doubled must be a positive integer, got {n!r}")

    @property
    def f_plus(self) -> float:
        return (self.nuclear_spin_doubled + 1) / 2

    @property
    def f_minus(self) -> float:
        return (self.nuclear_spin_doubled - 1) / 2

    @property
    def n_plus(self) -> int:
        """Dimension of the F+ block, 2*F+ + 1."""
        return self.nuclear_spin_doubled + 2

    @property
    def n_minus(self) -> int:
        return self.nuclear_spin_doubled

    @property
    def dim(self) -> int:
        return 2 * self.nuclear_spin_doubled + 2

    @property
    def basis(self) -> tuple[tuple[float, float], ...]:
        """Ordered (F, m) labels: F+ block m descending, then F- block."""
        labels = [(self.f_plus, self.f_plus - k) for k in range(self.n_plus)]
        labels += [(self.f_minus, self.f_minus - k) for k in range(self.n_minus)]
        return tuple(labels)

    @property
    def stretched_indices(self) -> tuple[int, int]:
        """Basis indices of |F+, m=F+> and |F-, m=F->."""
        return 0, self.n_plus


def cesium() -> ManifoldStructure:
    """The d = 16 cesium ground manifold (2I = 7)."""
    return ManifoldStructure(7)


@dataclass(frozen=True)
class PhysicalParams:
    """Rotating-frame rates (rad/s) defining the control Hamiltonian.

    ``larmor`` (Omega_0) documents the bias-field scale; it does not appear
    in the rotating-frame matrix at zero detuning.
    """

    larmor: float = TWO_PI * 1.0e6
    rf_rabi_x: float = TWO_PI * 25.0e3
    rf_rabi_y: float = TWO_PI * 25.0e3
    uw_rabi: float = TWO_PI * 27.5e3
    rf_detuning: float = 0.0
    uw_detuning: float = 0.0
    manifold: ManifoldStructure = field(default_factory=cesium)

    def __post_init__(self):
        for name in ("larmor", "rf_rabi_x", "rf_rabi_y", "uw_rabi"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")
        for name in ("rf_detuning", "uw_detuning"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def dim(self) -> int:
        return self.manifold.dim


@dataclass(frozen=True)
class StepPhases:
    """Control phases (radians, unwrapped) for one waveform step."""

    phi_x: float
    phi_y: float
    phi_uw: float

    def __post_init__(self):
        for name in ("phi_x", "phi_y", "phi_uw"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def angular_momentum_ops(f: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spin matrices (Fx, Fy, Fz) for spin quantum number f, hbar = 1.

    Basis is |f, m> with m descending from +f to -f, so Fz = diag(f, ..., -f).
    Ladder convention: <f, m+1| F+ |f, m> = sqrt(f(f+1) - m(m+1)), with
    Fx = (F+ + F-)/2 and Fy = (F+ - F-)/(2i).
    """
    two_f = round(2 * f)
    if two_f < 0 or abs(2 * f - two_f) > 1e-12:
        raise ValueError(f"spin must be a nonnegative half-integer, got {f!r}")
    dim = two_f + 1
    m = f - np.arange(dim)
    # raising operator in the descending-m basis: <i|F+|i+1> with m_{i+1} = m_i - 1
    c = np.sqrt(f * (f + 1) - m[1:] * (m[1:] + 1))
    fp = np.zeros((dim, dim), dtype=complex)
    fp[np.arange(dim - 1), np.arange(1, dim)] = c
    fm = fp.conj().T
    fx = (fp + fm) / 2
    fy = (fp - fm) / 2j
    fz = np.diag(m).astype(complex)
    return fx, fy, fz


@dataclass(frozen=True)
class ControlOperators:
    """Static operator table for a parameter set.

    The step Hamiltonian is assembled as

        H = sum_j [cos(phi_j) * drive_cos[j] + sin(phi_j) * drive_sin[j]]
            + drift + field_offset * generator

    with j running over (x, y, uw).  ``stacked`` packs the eight operators
    (three cosine drives, three sine drives, drift, generator) so a whole
    waveform's Hamiltonians reduce to one coefficient contraction.  All
    arrays are read-only.
    """

    drive_cos: np.ndarray  # (3, d, d)
    drive_sin: np.ndarray  # (3, d, d)
    drift: np.ndarray      # (d, d); detuning terms
    generator: np.ndarray  # (d, d); linear-Zeeman response G
    stacked: np.ndarray    # (8, d, d)

    @property
    def dim(self) -> int:
        return self.drift.shape[0]


def _embed(block: np.ndarray, dim: int, start: int) -> np.ndarray:
    out = np.zeros((dim, dim), dtype=complex)
    n = block.shape[0]
    out[start:start + n, start:start + n] = block
    return out


@lru_cache(maxsize=32)
def control_operators(params: PhysicalParams) -> ControlOperators:
    """Build (and cache) the static operator table for ``params``."""
    man = params.manifold
    d, npl = man.dim, man.n_plus
    fxp, fyp, _ = angular_momentum_ops(man.f_plus)
    fxm, fym, _ = angular_momentum_ops(man.f_minus)

    # opposite rotation sense on F-: drive operators enter with flipped sign
    fx_pm = _embed(fxp, d, 0) - _embed(fxm, d, npl)
    fy_pm = _embed(fyp, d, 0) - _embed(fym, d, npl)

    a, b = man.stretched_indices
    sx = np.zeros((d, d), dtype=complex)
    sx[a, b] = sx[b, a] = 1.0
    sy = np.zeros((d, d), dtype=complex)
    sy[a, b] = -1j
    sy[b, a] = 1j
    sz = np.zeros((d, d), dtype=complex)
    sz[a, a] = 1.0
    sz[b, b] = -1.0

    g = perturbation_generator(man)
    drive_cos = np.stack([
        0.5 * params.rf_rabi_x * fx_pm,
        0.5 * params.rf_rabi_y * fy_pm,
        0.5 * params.uw_rabi * sx,
    ])
    drive_sin = np.stack([
        0.5 * params.rf_rabi_x * fy_pm,
        -0.5 * params.rf_rabi_y * fx_pm,
        0.5 * params.uw_rabi * sy,
    ])
    drift = -params.rf_detuning * g - 0.5 * params.uw_detuning * sz
    stacked = np.concatenate([drive_cos, drive_sin, drift[None], g[None]])
    for arr in (drive_cos, drive_sin, drift, g, stacked):
        arr.setflags(write=False)
    return ControlOperators(drive_cos, drive_sin, drift, g, stacked)


def perturbation_generator(manifold: ManifoldStructure) -> np.ndarray:
    """Linear-Zeeman response operator G = Fz(+) (+) (-Fz(-)).

    A bias-field offset dOmega adds dOmega * G to the step Hamiltonian.
    G is diagonal and traceless (the two blocks carry opposite g-factor
    signs), with eigenvalues {F+ ... -F+} on the F+ block and
    {-F- ... F-} on the F- block.
    """
    d, npl = manifold.dim, manifold.n_plus
    _, _, fzp = angular_momentum_ops(manifold.f_plus)
    _, _, fzm = angular_momentum_ops(manifold.f_minus)
    g = _embed(fzp, d, 0) - _embed(fzm, d, npl)
    return g


def build_step_hamiltonian(
    params: PhysicalParams,
    phases: StepPhases,
    field_offset: float = 0.0,
) -> np.ndarray:
    """Rotating-frame control Hamiltonian for one step (d x d, Hermitian).

    ``field_offset`` is the bias-field deviation dOmega in rad/s.
    """
    if not math.isfinite(field_offset):
        raise ValueError("field_offset must be finite")
    ops = control_operators(params)
    cos = np.cos([phases.phi_x, phases.phi_y, phases.phi_uw])
    sin = np.sin([phases.phi_x, phases.phi_y, phases.phi_uw])
    h = np.einsum("j,jab->ab", cos, ops.drive_cos)
    h += np.einsum("j,jab->ab", sin, ops.drive_sin)
    h += ops.drift
    h += field_offset * ops.generator
    return h


def hermiticity_defect(h: np.ndarray) -> float:
    """max|H - H^dag| / max|H| (0 for the zero matrix)."""
    scale = np.abs(h).max()
    if scale == 0.0:
        return 0.0
    return float(np.abs(h - h.conj().T).max() / scale)
