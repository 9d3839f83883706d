"""Random target maps: Haar unitaries, random states, random subspace maps.

Haar sampling uses QR of a complex Ginibre matrix with the R-diagonal phase
correction (diagonal normalized to positive reals), which yields the exact
Haar measure.  All samplers are pure functions of their arguments: passing
an :class:`RngStream` always produces the same output, while passing a live
``numpy.random.Generator`` consumes it sequentially.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .objectives import TargetMap


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream.

    Identical (seed, stream) always yield the identical draw sequence.
    The generator is numpy's PCG64 keyed by SeedSequence((seed, stream)),
    which is platform independent.
    """

    seed: int
    stream: int = 0
    algorithm: str = "pcg64"

    def __post_init__(self):
        if self.algorithm != "pcg64":
            raise ValueError(f"unsupported rng algorithm {self.algorithm!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        if not isinstance(self.stream, int) or self.stream < 0:
            raise ValueError("stream must be a nonnegative integer")

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the stream origin."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng: RngStream | np.random.Generator) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


def sample_haar_unitary(dim: int, rng: RngStream | np.random.Generator) -> np.ndarray:
    """A Haar-distributed dim x dim unitary."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    gen = as_generator(rng)
    z = (gen.standard_normal((dim, dim)) + 1j * gen.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    mags = np.abs(diag)
    phases = np.where(mags > 0, diag / np.where(mags > 0, mags, 1.0), 1.0)
    return q * phases


def sample_random_state(dim: int, rng: RngStream | np.random.Generator) -> np.ndarray:
    """A Haar-random unit vector (normalized complex Gaussian)."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    gen = as_generator(rng)
    z = gen.standard_normal(dim) + 1j * gen.standard_normal(dim)
    return z / np.linalg.norm(z)


def sample_subspace_target(
    dim: int,
    p: int,
    rng: RngStream | np.random.Generator,
    *,
    haar_subspaces: bool = False,
) -> TargetMap:
    """A random p-dimensional subspace map inside a dim-dimensional space.

    Default mode draws the input and output subspaces uniformly among
    basis-aligned p-subsets (matching population readout in the |F, m>
    basis) and a Haar p x p map between them.  With ``haar_subspaces`` the
    subspaces themselves are Haar-random (isometries from independent Haar
    unitaries).  Draw order: input subspace, output subspace, then the map.
    """
    if not (1 <= p <= dim):
        raise ValueError(f"p must satisfy 1 <= p <= dim, got p={p}, dim={dim}")
    gen = as_generator(rng)
    if haar_subspaces:
        v_in = sample_haar_unitary(dim, gen)[:, :p]
        v_out = sample_haar_unitary(dim, gen)[:, :p]
        w = sample_haar_unitary(p, gen)
        return TargetMap.subspace_isometries(w, v_in, v_out, dim)
    idx_in = tuple(sorted(int(i) for i in gen.choice(dim, size=p, replace=False)))
    idx_out = tuple(sorted(int(i) for i in gen.choice(dim, size=p, replace=False)))
    w = sample_haar_unitary(p, gen)
    return TargetMap.subspace(w, idx_in, idx_out, dim)


def sample_target(
    kind: str,
    dim: int,
    rng: RngStream | np.random.Generator,
    *,
    p: int | None = None,
    indices: tuple[int, ...] | None = None,
) -> TargetMap:
    """Sample a target of any kind; convenience dispatcher for the CLI.

    ``indices``, when given for a subspace map, pins both subspaces to that
    index set (e.g. a unitary on the F+ manifold) and only the map is drawn.
    """
    gen = as_generator(rng)
    if kind == "full_unitary":
        return TargetMap.full(sample_haar_unitary(dim, gen))
    if kind == "subspace_map":
        if indices is not None:
            idx = tuple(int(i) for i in indices)
            w = sample_haar_unitary(len(idx), gen)
            return TargetMap.subspace(w, idx, idx, dim)
        if p is None:
            raise ValueError("subspace_map sampling requires p")
        return sample_subspace_target(dim, p, gen)
    if kind == "state_map":
        psi_in = sample_random_state(dim, gen)
        psi_out = sample_random_state(dim, gen)
        return TargetMap.state(psi_in, psi_out)
    raise ValueError(f"unknown target kind {kind!r}")
