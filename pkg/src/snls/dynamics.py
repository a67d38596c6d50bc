"""Time integration of the stochastic Gross-Pitaevskii equation.

Two stochastic routes share the same noise realization:
    * direct -- Strang split-step on u = 1 + v with the additive increment
      applied after the splitting sandwich each step;
    * dpd    -- the decomposition u = 1 + v + Psi, where Psi is advanced by
      the exact-in-law stochastic-convolution sampler and v solves the
      remainder equation with the fully expanded nonlinearity.

Deterministic schemes: deterministic_gp (same equation, zero noise) and
deterministic_cubic (i u_t + Lap u = |u|^2 u, the gauge image of GP).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import lattice, noise as noise_mod
from .errors import BlowUpError, ConfigurationError, UsageError
from .lattice import ComplexField, GridSpec
from .noise import NoisePath, NoiseSpec

SCHEMES = ("direct", "dpd", "deterministic_gp", "deterministic_cubic")
_SCHEME_TAGS = {name: i for i, name in enumerate(SCHEMES)}
TRAJ_MAGIC = b"SNLSTRJ1"


@dataclass(frozen=True)
class SolverConfig:
    grid: GridSpec
    t_final: float
    dt: float
    scheme: str
    noise: NoiseSpec
    initial_v: ComplexField
    snapshot_stride: int = 1
    master_seed: int = 0
    stream_id: int = 0
    disable_nonlinearity: bool = False  # debug switch: pure linear evolution
    prescribed_path: Optional[NoisePath] = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if self.dt <= 0 or self.t_final <= 0 or self.dt > self.t_final:
            raise ConfigurationError("need 0 < dt <= t_final")
        steps = self.t_final / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigurationError(f"t_final/dt = {steps} is not an integer")
        if self.snapshot_stride < 1 or round(steps) % self.snapshot_stride != 0:
            raise ConfigurationError("snapshot_stride must divide the step count")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass
class Trajectory:
    config: SolverConfig
    times: np.ndarray
    v_snapshots: List[ComplexField]
    psi_snapshots: List[ComplexField]
    noise_path: Optional[NoisePath] = None
    frame: str = "gp"  # "gp" or "cubic" (gauge-transformed)

    @property
    def grid(self) -> GridSpec:
        return self.config.grid

    @property
    def n_snapshots(self) -> int:
        return len(self.times)

    def u_snapshot(self, i: int) -> ComplexField:
        """Reconstruct u = 1 + v (+ Psi for the dpd scheme)."""
        vals = 1.0 + self.v_snapshots[i].values + self.psi_snapshots[i].values
        return ComplexField(self.grid, vals)

    def v_star_snapshot(self, i: int) -> ComplexField:
        """u - 1 = v + Psi (equals v for non-dpd schemes)."""
        vals = self.v_snapshots[i].values + self.psi_snapshots[i].values
        return ComplexField(self.grid, vals)


# --- nonlinearities -------------------------------------------------------


def gp_nonlinearity(u_field: ComplexField) -> ComplexField:
    """(|u|^2 - 1) u pointwise."""
    u = u_field.values
    return ComplexField(u_field.grid, (np.abs(u) ** 2 - 1.0) * u)


def dpd_nonlinearity(v_field: ComplexField, psi_field: ComplexField) -> ComplexField:
    """|v|^2 v plus the expanded remainder nonlinearity, summand by summand.

    Algebraically identical to (|v + 1 + psi|^2 - 1)(v + 1 + psi).
    """
    if v_field.grid != psi_field.grid:
        raise UsageError("v and psi live on different grids")
    v = v_field.values
    p = psi_field.values
    re_v = v.real
    re_p = p.real
    re_vbar_p = (np.conj(v) * p).real
    abs_v2 = np.abs(v) ** 2
    abs_p2 = np.abs(p) ** 2
    out = abs_v2 * v
    out += 2.0 * re_v * v + 2.0 * re_p * v + 2.0 * re_vbar_p * v + abs_p2 * v
    out += abs_v2 + 2.0 * re_v + 2.0 * re_p + 2.0 * re_vbar_p + abs_p2
    out += abs_v2 * p + 2.0 * re_v * p + 2.0 * re_p * p + 2.0 * re_vbar_p * p + abs_p2 * p
    return ComplexField(v_field.grid, out)


def nonlinear_phase_substep(u_field: ComplexField, dt: float) -> ComplexField:
    """Exact integrator of i u_t = (|u|^2 - 1) u: u * exp(-i(|u|^2 - 1) dt)."""
    u = u_field.values
    return ComplexField(u_field.grid, u * np.exp(-1j * (np.abs(u) ** 2 - 1.0) * dt))


def _cubic_phase_substep(u_field: ComplexField, dt: float) -> ComplexField:
    u = u_field.values
    return ComplexField(u_field.grid, u * np.exp(-1j * np.abs(u) ** 2 * dt))


# --- single steps ---------------------------------------------------------


def _strang_u_step(v: ComplexField, dt: float, cubic: bool, skip_nl: bool) -> ComplexField:
    """Strang sandwich on u = 1 + v; returns updated v = u - 1."""
    g = v.grid
    u = ComplexField(g, 1.0 + v.values)
    u = lattice.apply_schrodinger_group(u, dt / 2.0)
    if not skip_nl:
        u = _cubic_phase_substep(u, dt) if cubic else nonlinear_phase_substep(u, dt)
    u = lattice.apply_schrodinger_group(u, dt / 2.0)
    return ComplexField(g, u.values - 1.0)


def strang_step_direct(
    v_field: ComplexField,
    noise_spec: NoiseSpec,
    dt: float,
    rng_state: Optional[np.random.Generator] = None,
    increment: Optional[ComplexField] = None,
) -> tuple:
    """One direct split step; returns (v_next, increment_used)."""
    if dt <= 0:
        raise UsageError("dt must be positive")
    v = _strang_u_step(v_field, dt, cubic=False, skip_nl=False)
    if increment is None:
        if noise_spec.kind == "zero":
            return v, lattice.zero_field(v.grid)
        increment = noise_mod.sample_wiener_increment(noise_spec, dt, rng_state)
    return ComplexField(v.grid, v.values - 1j * increment.values), increment


def strang_step_dpd(v_field: ComplexField, psi_field: ComplexField, dt: float) -> ComplexField:
    """Strang step for the remainder v with Psi frozen over the step.

    Half linear step, one classical RK4 substep of the pointwise ODE
    v' = -i (|v|^2 v + g(v, Psi)), half linear step.  The caller passes the
    midpoint-consistent Psi (step-start value freely propagated by dt/2).
    """
    if v_field.grid != psi_field.grid:
        raise UsageError("v and psi live on different grids")
    g = v_field.grid
    v = lattice.apply_schrodinger_group(v_field, dt / 2.0)

    def rhs(vals: np.ndarray) -> np.ndarray:
        return -1j * dpd_nonlinearity(ComplexField(g, vals), psi_field).values

    y = v.values
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * dt * k1)
    k3 = rhs(y + 0.5 * dt * k2)
    k4 = rhs(y + dt * k3)
    y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return lattice.apply_schrodinger_group(ComplexField(g, y), dt / 2.0)


# --- full solve -----------------------------------------------------------


def solve(config: SolverConfig) -> Trajectory:
    g = config.grid
    n_steps = config.n_steps
    stride = config.snapshot_stride
    stochastic = config.scheme in ("direct", "dpd") and config.noise.kind != "zero"
    path = config.prescribed_path
    if path is not None and path.n_steps != n_steps:
        raise ConfigurationError(
            f"prescribed path has {path.n_steps} steps, solver needs {n_steps}"
        )

    v = ComplexField(g, config.initial_v.values.copy())
    psi = lattice.zero_field(g)
    zero = lattice.zero_field(g)
    record = NoisePath(
        grid=g, dt=config.dt, rng_seed=config.master_seed, stream_id=config.stream_id
    )

    times = [0.0]
    v_snaps = [v]
    psi_snaps = [psi if config.scheme == "dpd" else zero]

    for j in range(n_steps):
        if path is not None:
            inc = path.increments[j]
        elif stochastic:
            rng = noise_mod.step_rng(config.master_seed, config.stream_id, j)
            inc = noise_mod.sample_wiener_increment(config.noise, config.dt, rng)
        else:
            inc = None

        if config.scheme in ("direct", "deterministic_gp"):
            v = _strang_u_step(v, config.dt, cubic=False, skip_nl=config.disable_nonlinearity)
            if inc is not None:
                v = ComplexField(g, v.values - 1j * inc.values)
        elif config.scheme == "deterministic_cubic":
            v = _strang_u_step(v, config.dt, cubic=True, skip_nl=config.disable_nonlinearity)
        else:  # dpd
            if config.disable_nonlinearity:
                v = lattice.apply_schrodinger_group(v, config.dt)
            else:
                # midpoint-consistent convention: the step-start Psi is freely
                # propagated to the step midpoint before entering the frozen-
                # Psi nonlinear substep (adapted: uses no new increment)
                psi_mid = lattice.apply_schrodinger_group(psi, config.dt / 2.0)
                v = strang_step_dpd(v, psi_mid, config.dt)
            if inc is not None:
                psi, inc = noise_mod.step_stochastic_convolution(
                    psi, config.noise, config.dt, increment=inc
                )
            else:
                psi = lattice.apply_schrodinger_group(psi, config.dt)

        if inc is not None:
            record.increments.append(inc)

        if not v.is_finite() or (config.scheme == "dpd" and not psi.is_finite()):
            raise BlowUpError(j + 1, (j + 1) * config.dt)

        if (j + 1) % stride == 0:
            times.append((j + 1) * config.dt)
            v_snaps.append(v)
            psi_snaps.append(psi if config.scheme == "dpd" else zero)

    return Trajectory(
        config=config,
        times=np.asarray(times),
        v_snapshots=v_snaps,
        psi_snapshots=psi_snaps,
        noise_path=record if record.n_steps else None,
    )


# --- oracles and transforms ------------------------------------------------


def duhamel_residual(traj: Trajectory, time_index: int) -> float:
    """L^2 norm of the defect of the Duhamel formulation at a snapshot time.

    u(t) - S(t) u0 + i int_0^t S(t-t') (|u|^2-1)u dt' + i * (noise convolution),
    with trapezoid quadrature for the drift term and the recorded increments
    for the convolution.  Expected O(dt), not zero.
    """
    if time_index < 0 or time_index >= traj.n_snapshots:
        raise UsageError("time_index out of range")
    g = traj.grid
    stochastic = traj.config.scheme in ("direct", "dpd") and traj.config.noise.kind != "zero"
    if stochastic and traj.noise_path is None:
        raise UsageError("duhamel_residual needs the recorded noise path")
    t = float(traj.times[time_index])
    u_t = traj.u_snapshot(time_index).values
    free = lattice.apply_schrodinger_group(traj.u_snapshot(0), t).values

    # trapezoid of S(t-t') N(u(t')) over the snapshots up to time_index
    drift = np.zeros(g.total_points, dtype=np.complex128)
    if time_index >= 1:
        ts = traj.times[: time_index + 1]
        integrands = []
        for m in range(time_index + 1):
            nl = gp_nonlinearity(traj.u_snapshot(m))
            integrands.append(lattice.apply_schrodinger_group(nl, t - float(ts[m])).values)
        for m in range(time_index):
            w = 0.5 * (float(ts[m + 1]) - float(ts[m]))
            drift += w * (integrands[m] + integrands[m + 1])

    conv = np.zeros(g.total_points, dtype=np.complex128)
    if stochastic:
        path = traj.noise_path
        stride = traj.config.snapshot_stride
        n_used = time_index * stride
        for j in range(n_used):
            t_end = (j + 1) * path.dt
            moved = lattice.apply_schrodinger_group(path.increments[j], t - t_end)
            conv += -1j * moved.values

    defect = u_t - free + 1j * drift - conv
    return lattice.lebesgue_norm(ComplexField(g, defect), 2.0)


def gauge_transform(traj: Trajectory) -> Trajectory:
    """Multiply every u-snapshot at time t by e^{-it} (cubic-NLS frame)."""
    g = traj.grid
    v_new, zero = [], lattice.zero_field(g)
    for i, t in enumerate(traj.times):
        u = traj.u_snapshot(i).values
        v_new.append(ComplexField(g, np.exp(-1j * float(t)) * u - 1.0))
    return Trajectory(
        config=traj.config,
        times=traj.times.copy(),
        v_snapshots=v_new,
        psi_snapshots=[zero] * traj.n_snapshots,
        noise_path=traj.noise_path,
        frame="cubic",
    )


# --- initial data ----------------------------------------------------------


def initial_constant(grid: GridSpec, alpha: complex = 1.0) -> ComplexField:
    """v0 for the constant state u0 = alpha."""
    return lattice.constant_field(grid, alpha - 1.0)


def initial_plane_wave(grid: GridSpec, mode: tuple) -> ComplexField:
    """v0 for u0 = exp(i k.x) with k = 2*pi*mode/L."""
    if len(mode) != grid.dim:
        raise ConfigurationError("plane-wave mode must have one integer per axis")
    xs = grid.coordinate_mesh()
    phase = np.zeros(grid.shape)
    for m, x in zip(mode, xs):
        phase = phase + (2.0 * np.pi * m / grid.box_length) * x
    return lattice.field_from_mesh(grid, np.exp(1j * phase) - 1.0)


def initial_gaussian_bump(grid: GridSpec, amplitude: float, width: float) -> ComplexField:
    """Real Gaussian bump centered mid-box: v0 = A exp(-|x-c|^2 / (2 w^2))."""
    xs = grid.coordinate_mesh()
    c = grid.box_length / 2.0
    r2 = np.zeros(grid.shape)
    for x in xs:
        r2 = r2 + (x - c) ** 2
    return lattice.field_from_mesh(grid, amplitude * np.exp(-r2 / (2.0 * width**2)))


def initial_random_band(
    grid: GridSpec, h1_norm: float, band_max: float, seed: int = 0
) -> ComplexField:
    """Band-limited random field rescaled to a prescribed homogeneous H^1 norm."""
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))
    ksq = grid.ksq()
    mask = (ksq > 0) & (ksq <= band_max**2)
    coeffs = np.zeros(grid.shape, dtype=np.complex128)
    z = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    coeffs[mask] = z[mask]
    f = lattice.field_from_spectral(grid, coeffs)
    cur = lattice.sobolev_norm(f, 1.0, homogeneous=True)
    if cur == 0:
        raise ConfigurationError("band_max excludes every nonzero mode")
    return ComplexField(grid, f.values * (h1_norm / cur))


# --- binary export ----------------------------------------------------------


def write_trajectory(traj: Trajectory, filename: str) -> None:
    """Binary export; the stored dt is the snapshot spacing (solver dt times
    the snapshot stride), so a reader can reconstruct snapshot times."""
    cfg = traj.config
    with open(filename, "wb") as fh:
        fh.write(TRAJ_MAGIC)
        fh.write(struct.pack("<QQQ", cfg.grid.dim, cfg.grid.points_per_axis, traj.n_snapshots))
        fh.write(struct.pack("<dd", cfg.grid.box_length, cfg.dt * cfg.snapshot_stride))
        fh.write(struct.pack("B", _SCHEME_TAGS[cfg.scheme]))
        fields = list(traj.v_snapshots)
        if cfg.scheme == "dpd":
            fields += list(traj.psi_snapshots)
        for f in fields:
            inter = np.empty(2 * f.values.size)
            inter[0::2] = f.values.real
            inter[1::2] = f.values.imag
            fh.write(inter.astype("<f8").tobytes())


@dataclass
class LoadedTrajectory:
    """Snapshot data reconstructed from a trajectory file (no solver config)."""

    grid: GridSpec
    times: np.ndarray
    v_snapshots: List[ComplexField]
    psi_snapshots: List[ComplexField]
    scheme: str

    @property
    def n_snapshots(self) -> int:
        return len(self.times)

    def u_snapshot(self, i: int) -> ComplexField:
        vals = 1.0 + self.v_snapshots[i].values + self.psi_snapshots[i].values
        return ComplexField(self.grid, vals)

    def v_star_snapshot(self, i: int) -> ComplexField:
        vals = self.v_snapshots[i].values + self.psi_snapshots[i].values
        return ComplexField(self.grid, vals)


def read_trajectory(filename: str) -> LoadedTrajectory:
    """Read back a file written by write_trajectory.  The stored dt is the
    snapshot spacing, so times are i * dt."""
    with open(filename, "rb") as fh:
        magic = fh.read(8)
        if magic != TRAJ_MAGIC:
            raise UsageError(f"{filename}: bad magic {magic!r}")
        dim, n, snaps = struct.unpack("<QQQ", fh.read(24))
        box_length, dt = struct.unpack("<dd", fh.read(16))
        (tag,) = struct.unpack("B", fh.read(1))
        grid = lattice.make_grid(int(dim), int(n), box_length)
        npts = grid.total_points

        def read_fields(count):
            out = []
            for _ in range(count):
                raw = np.frombuffer(fh.read(16 * npts), dtype="<f8")
                out.append(ComplexField(grid, raw[0::2] + 1j * raw[1::2]))
            return out

        v_snaps = read_fields(int(snaps))
        scheme = SCHEMES[tag]
        if scheme == "dpd":
            psi_snaps = read_fields(int(snaps))
        else:
            psi_snaps = [lattice.zero_field(grid)] * int(snaps)
    times = np.arange(int(snaps)) * dt
    return LoadedTrajectory(
        grid=grid, times=times, v_snapshots=v_snaps, psi_snapshots=psi_snaps, scheme=scheme
    )


def read_trajectory_header(filename: str) -> dict:
    with open(filename, "rb") as fh:
        magic = fh.read(8)
        if magic != TRAJ_MAGIC:
            raise UsageError(f"{filename}: bad magic {magic!r}")
        dim, n, snaps = struct.unpack("<QQQ", fh.read(24))
        box_length, dt = struct.unpack("<dd", fh.read(16))
        (tag,) = struct.unpack("B", fh.read(1))
    return {
        "dim": int(dim),
        "points_per_axis": int(n),
        "n_snapshots": int(snaps),
        "box_length": box_length,
        "dt": dt,
        "scheme": SCHEMES[tag],
    }
