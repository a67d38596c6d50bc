"""Hilbert-Schmidt noise operators, cylindrical Wiener increments, and exact
sampling of the stochastic convolution.

The orthonormal basis of L^2 on the box is fixed to the Fourier exponentials
e_k(x) = exp(ik.x)/sqrt(V), so a multiplier-type operator is diagonal:
phi e_k = phihat(k) e_k.  A Wiener increment phi dW then has spectral
coefficient phihat(k) z_k with z_k complex Gaussian of total variance dt
(real and imaginary parts i.i.d. with variance dt/2 each).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import lattice
from .errors import UsageError
from .lattice import ComplexField, GridSpec

_MASK64 = (1 << 64) - 1
NOISE_MAGIC = b"SNLSNSE1"


@dataclass(frozen=True)
class NoiseSpec:
    """The operator phi: spectral multiplier profile, finite rank list, or zero."""

    grid: GridSpec
    kind: str = "zero"  # {"multiplier", "rank_list", "zero"}
    amplitude: float = 0.0
    sigma: float = 0.0
    cutoff: Optional[float] = None  # hard spectral cutoff on |k|
    rank_list: Optional[tuple] = None  # tuple of ComplexField columns phi e_n

    def __post_init__(self):
        if self.kind not in ("multiplier", "rank_list", "zero"):
            raise UsageError(f"unknown noise kind {self.kind!r}")
        if self.kind == "multiplier" and self.amplitude < 0:
            raise UsageError("multiplier amplitude must be nonnegative")
        if self.kind == "rank_list" and not self.rank_list:
            raise UsageError("rank_list noise requires at least one column")

    def multiplier_profile(self) -> np.ndarray:
        """phihat(k) = amplitude * (1+|k|^2)^(-sigma/2) on the lattice, with cutoff."""
        ksq = self.grid.ksq()
        if self.kind == "zero":
            return np.zeros_like(ksq)
        if self.kind != "multiplier":
            raise UsageError("multiplier_profile only defined for multiplier kind")
        prof = self.amplitude * (1.0 + ksq) ** (-self.sigma / 2.0)
        if self.cutoff is not None:
            prof = np.where(ksq <= self.cutoff**2, prof, 0.0)
        return prof


def zero_noise(grid: GridSpec) -> NoiseSpec:
    return NoiseSpec(grid=grid, kind="zero")


def multiplier_noise(
    grid: GridSpec, amplitude: float, sigma: float, cutoff: Optional[float] = None
) -> NoiseSpec:
    return NoiseSpec(grid=grid, kind="multiplier", amplitude=amplitude, sigma=sigma, cutoff=cutoff)


def hs_norm(spec: NoiseSpec, s: float, homogeneous: bool = False) -> float:
    """Hilbert-Schmidt norm of phi from L^2 into H^s (or homogeneous H^s)."""
    if spec.kind == "rank_list":
        return float(
            np.sqrt(sum(lattice.sobolev_norm(col, s, homogeneous) ** 2 for col in spec.rank_list))
        )
    prof = spec.multiplier_profile()
    ksq = spec.grid.ksq()
    if homogeneous:
        if s < 0:
            # zero mode is excluded from the homogeneous sum for s < 0
            safe = np.where(ksq > 0, ksq, 1.0)
            w = np.where(ksq > 0, safe**s, 0.0)
        elif s == 0:
            w = np.ones_like(ksq)
        else:
            w = ksq**s
    else:
        w = (1.0 + ksq) ** s
    return float(np.sqrt(np.sum(w * prof**2)))


# --- counter-based RNG ----------------------------------------------------


def step_rng(master_seed: int, stream_id: int, step: int) -> np.random.Generator:
    """Generator keyed by (seed, stream) with a disjoint counter block per step.

    Reproducible independently of thread scheduling: the draw for a given
    (stream, step) never depends on what other streams or steps consumed.
    """
    key = np.array([master_seed & _MASK64, stream_id & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, step & _MASK64, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def _complex_normals(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return np.sqrt(variance / 2.0) * (re + 1j * im)


def sample_wiener_increment(
    spec: NoiseSpec, dt: float, rng_state: np.random.Generator
) -> ComplexField:
    """One increment phi*DeltaW over a step of length dt (physical space)."""
    if dt <= 0:
        raise UsageError(f"dt must be positive, got {dt}")
    g = spec.grid
    if spec.kind == "zero":
        return lattice.zero_field(g)
    if spec.kind == "rank_list":
        z = _complex_normals(rng_state, len(spec.rank_list), dt)
        vals = np.zeros(g.total_points, dtype=np.complex128)
        for zn, col in zip(z, spec.rank_list):
            vals += zn * col.values
        return ComplexField(g, vals)
    z = _complex_normals(rng_state, g.shape, dt)
    coeffs = spec.multiplier_profile() * z
    return lattice.field_from_spectral(g, coeffs)


def step_stochastic_convolution(
    psi: ComplexField,
    spec: NoiseSpec,
    dt: float,
    rng_state: Optional[np.random.Generator] = None,
    increment: Optional[ComplexField] = None,
) -> tuple:
    """Advance Psi by one step: Psi(t+dt) = S(dt) Psi(t) - i * (phi DeltaW).

    Exact in law because |e^{-i|k|^2 tau}| = 1 makes the Ito-integral variance
    of each mode exactly dt * phihat(k)^2.  Returns (psi_next, increment) so
    the same Gaussians can drive the direct solver.
    """
    if increment is None:
        if rng_state is None:
            raise UsageError("step_stochastic_convolution needs an rng_state or an increment")
        increment = sample_wiener_increment(spec, dt, rng_state)
    if increment.grid != psi.grid:
        raise UsageError("increment grid does not match psi grid")
    moved = lattice.apply_schrodinger_group(psi, dt)
    return ComplexField(psi.grid, moved.values - 1j * increment.values), increment


# --- noise paths ----------------------------------------------------------


@dataclass
class NoisePath:
    """The sequence of phi*DeltaW fields consumed by one trajectory."""

    grid: GridSpec
    dt: float
    increments: List[ComplexField] = field(default_factory=list)
    rng_seed: int = 0
    stream_id: int = 0

    @property
    def n_steps(self) -> int:
        return len(self.increments)


def generate_noise_path(
    spec: NoiseSpec, dt: float, n_steps: int, master_seed: int, stream_id: int = 0
) -> NoisePath:
    path = NoisePath(grid=spec.grid, dt=dt, rng_seed=master_seed, stream_id=stream_id)
    for j in range(n_steps):
        rng = step_rng(master_seed, stream_id, j)
        path.increments.append(sample_wiener_increment(spec, dt, rng))
    return path


def coarsen_noise_path(path: NoisePath, factor: int) -> NoisePath:
    """Sum consecutive fine increments into coarse ones (Brownian-consistent)."""
    if factor < 1 or path.n_steps % factor != 0:
        raise UsageError(f"coarsening factor {factor} does not divide {path.n_steps} steps")
    coarse = NoisePath(
        grid=path.grid, dt=path.dt * factor, rng_seed=path.rng_seed, stream_id=path.stream_id
    )
    for j in range(0, path.n_steps, factor):
        vals = np.zeros(path.grid.total_points, dtype=np.complex128)
        for f in path.increments[j : j + factor]:
            vals += f.values
        coarse.increments.append(ComplexField(path.grid, vals))
    return coarse


def write_noise_path(path: NoisePath, filename: str) -> None:
    """Binary export: magic, dim/n/steps as u64 LE, dt as LE double, then
    increments as interleaved (re, im) doubles, snapshot-major, row-major."""
    with open(filename, "wb") as fh:
        fh.write(NOISE_MAGIC)
        fh.write(
            struct.pack(
                "<QQQd", path.grid.dim, path.grid.points_per_axis, path.n_steps, path.dt
            )
        )
        for inc in path.increments:
            inter = np.empty(2 * inc.values.size)
            inter[0::2] = inc.values.real
            inter[1::2] = inc.values.imag
            fh.write(inter.astype("<f8").tobytes())


def read_noise_path(filename: str, box_length: float) -> NoisePath:
    with open(filename, "rb") as fh:
        magic = fh.read(8)
        if magic != NOISE_MAGIC:
            raise UsageError(f"{filename}: bad magic {magic!r}")
        dim, n, steps, dt = struct.unpack("<QQQd", fh.read(32))
        grid = lattice.make_grid(int(dim), int(n), box_length)
        path = NoisePath(grid=grid, dt=dt)
        npts = grid.total_points
        for _ in range(steps):
            raw = np.frombuffer(fh.read(16 * npts), dtype="<f8")
            path.increments.append(ComplexField(grid, raw[0::2] + 1j * raw[1::2]))
    return path


# --- statistics over Psi ensembles ---------------------------------------


def psi_moment_estimate(
    ensembles: Sequence[Sequence[ComplexField]],
    times: Sequence[float],
    t: float,
    s: float,
    p: float,
) -> tuple:
    """Monte Carlo estimate of E[ sup_{tau <= t} ||Psi(tau)||_{H^s}^p ].

    Each element of `ensembles` is one Psi trajectory sampled on `times`.
    Returns (estimate, standard_error).
    """
    if len(ensembles) == 0:
        raise UsageError("empty ensemble")
    if p < 2:
        raise UsageError(f"moment order p must be >= 2, got {p}")
    times = np.asarray(times, dtype=float)
    upto = np.searchsorted(times, t + 1e-12 * max(1.0, abs(t)), side="right")
    sups = []
    for traj in ensembles:
        norms = [lattice.sobolev_norm(f, s) for f in traj[:upto]]
        sups.append(max(norms) ** p)
    sups = np.asarray(sups)
    est = float(sups.mean())
    se = float(sups.std(ddof=1) / np.sqrt(len(sups))) if len(sups) > 1 else 0.0
    return est, se
