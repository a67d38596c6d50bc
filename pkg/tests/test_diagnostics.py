import numpy as np
import pytest

from snls import diagnostics, dynamics, lattice, noise
from snls.errors import UsageError
from snls.lattice import ComplexField, SpacetimeInterval, make_grid

TWO_PI = 2.0 * np.pi


def grid2d(n=16):
    return make_grid(2, n, TWO_PI)


def stochastic_traj(scheme="direct", seed=0, n=16, t_final=0.1, dt=0.005, amp=0.2):
    g = grid2d(n)
    cfg = dynamics.SolverConfig(
        grid=g,
        t_final=t_final,
        dt=dt,
        scheme=scheme,
        noise=noise.multiplier_noise(g, amp, 3.0),
        initial_v=dynamics.initial_gaussian_bump(g, 0.2, 0.8),
        master_seed=seed,
    )
    return dynamics.solve(cfg)


class TestEnergy:
    def test_vacuum_zero(self):
        g = grid2d()
        assert diagnostics.energy(lattice.zero_field(g)) == 0.0

    def test_phase_constant_zero(self):
        # u = e^{i theta} keeps |u| = 1 and has no gradient, so E = 0
        g = grid2d(8)
        v = lattice.constant_field(g, np.exp(0.7j) - 1.0)
        assert diagnostics.energy(v) == pytest.approx(0.0, abs=1e-13)

    def test_cosine_oracle(self):
        # oracle: 4096-point quadrature of the integrand for v* = 0.1 cos(2x)
        # on the 1-d box, gradient taken analytically
        g = make_grid(1, 64, TWO_PI)
        x = g.coordinate_mesh()[0]
        v = lattice.field_from_mesh(g, (0.1 * np.cos(2.0 * x)).astype(complex))
        assert diagnostics.energy(v) == pytest.approx(0.09430668446994861, rel=1e-10)

    def test_nonnegative_random(self):
        g = grid2d(8)
        rng = np.random.default_rng(2)
        for _ in range(50):
            v = ComplexField(g, rng.standard_normal(g.total_points)
                             + 1j * rng.standard_normal(g.total_points))
            assert diagnostics.energy(v) >= 0.0

    def test_gauge_invariance(self):
        # E depends on u only through grad u and |u|, so a constant phase on u
        # leaves it unchanged
        g = grid2d(8)
        rng = np.random.default_rng(3)
        v = ComplexField(g, 0.3 * (rng.standard_normal(g.total_points)
                                   + 1j * rng.standard_normal(g.total_points)))
        u = 1.0 + v.values
        rotated = ComplexField(g, np.exp(1.1j) * u - 1.0)
        assert diagnostics.energy(rotated) == pytest.approx(diagnostics.energy(v), rel=1e-12)


class TestItoLedger:
    def test_deterministic_residual_small(self):
        g = grid2d(32)
        cfg = dynamics.SolverConfig(
            grid=g, t_final=0.2, dt=0.001, scheme="deterministic_gp",
            noise=noise.zero_noise(g),
            initial_v=dynamics.initial_gaussian_bump(g, 0.1, 1.0),
        )
        led = diagnostics.ito_ledger(dynamics.solve(cfg))
        assert np.all(led.ham1 == 0.0)
        assert np.all(led.ham2 == 0.0)
        assert np.all(led.ham3 == 0.0)
        rel = np.max(np.abs(led.residual)) / led.energy[0]
        assert rel < 1e-5

    def test_requires_noise_path(self):
        traj = stochastic_traj()
        traj.noise_path = None
        with pytest.raises(UsageError):
            diagnostics.ito_ledger(traj)

    def test_requires_unit_stride(self):
        g = grid2d(8)
        cfg = dynamics.SolverConfig(
            grid=g, t_final=0.1, dt=0.005, scheme="direct",
            noise=noise.multiplier_noise(g, 0.1, 3.0),
            initial_v=lattice.zero_field(g), snapshot_stride=2,
        )
        with pytest.raises(UsageError):
            diagnostics.ito_ledger(dynamics.solve(cfg))

    def test_ham1_is_linear_in_time(self):
        led = diagnostics.ito_ledger(stochastic_traj())
        slope = led.ham1[-1] / led.times[-1]
        assert np.allclose(led.ham1, slope * led.times, rtol=1e-12)
        assert np.allclose(led.ham1_balanced, 0.5 * led.ham1, rtol=1e-12)

    def test_ham1_slope_value(self):
        traj = stochastic_traj()
        led = diagnostics.ito_ledger(traj)
        spec = traj.config.noise
        expected = (noise.hs_norm(spec, 1.0, homogeneous=True) ** 2
                    + noise.hs_norm(spec, 0.0) ** 2)
        assert led.ham1[-1] / led.times[-1] == pytest.approx(expected, rel=1e-12)

    def test_balanced_residual_refines_to_zero(self):
        # the balanced drift closes the Ito identity: halving dt shrinks the
        # final residual; the literal drift leaves an O(1) gap
        g = grid2d(8)

        def run(dt):
            cfg = dynamics.SolverConfig(
                grid=g, t_final=0.1, dt=dt, scheme="direct",
                noise=noise.multiplier_noise(g, 0.2, 3.0),
                initial_v=dynamics.initial_gaussian_bump(g, 0.2, 0.8),
                master_seed=12,
            )
            return diagnostics.ito_ledger(dynamics.solve(cfg))

        bal = [abs(run(dt).residual_balanced[-1]) for dt in (0.01, 0.005, 0.0025)]
        assert bal[0] > bal[-1]

    def test_cumulative_norms_monotone(self):
        led = diagnostics.ito_ledger(stochastic_traj())
        assert np.all(np.diff(led.x1_cum) >= -1e-15)
        assert np.all(np.diff(led.l6_cum) >= -1e-15)
        assert led.x1_cum[0] == 0.0

    def test_csv_rows_shape(self):
        led = diagnostics.ito_ledger(stochastic_traj())
        rows = led.csv_rows()
        assert len(rows) == len(led.times)
        assert set(rows[0]) == {"time", "energy", "ham1", "ham2", "ham3",
                                "residual", "x1_cum", "l6_cum"}


class TestEnergyBoundReport:
    def test_rejects_empty(self):
        with pytest.raises(UsageError):
            diagnostics.energy_bound_report([])

    def test_single_member(self):
        traj = stochastic_traj()
        rep = diagnostics.energy_bound_report([traj])
        es = [diagnostics.energy(traj.v_star_snapshot(i)) for i in range(traj.n_snapshots)]
        assert rep["n_members"] == 1
        assert rep["sup_energy_mean"] == pytest.approx(max(es), rel=1e-13)
        assert rep["sup_energy_se"] == 0.0

    def test_quantiles_ordered(self):
        trajs = [stochastic_traj(seed=s) for s in range(4)]
        rep = diagnostics.energy_bound_report(trajs)
        qs = rep["sup_energy_quantiles"]
        assert qs[0] <= qs[25] <= qs[50] <= qs[75] <= qs[100]
        assert rep["n_members"] == 4


class TestPartition:
    def test_rejects_bad_eta(self):
        traj = stochastic_traj()
        with pytest.raises(UsageError):
            diagnostics.partition_intervals(traj, 0.0)

    def test_covers_without_gaps(self):
        traj = stochastic_traj()
        part = diagnostics.partition_intervals(traj, 0.05)
        assert part.intervals[0].start_index == 0
        assert part.intervals[-1].end_index == traj.n_snapshots - 1
        for a, b in zip(part.intervals, part.intervals[1:]):
            assert b.start_index == a.end_index

    def test_norms_below_eta_unless_irreducible(self):
        traj = stochastic_traj()
        for eta in (0.02, 0.1, 0.5):
            part = diagnostics.partition_intervals(traj, eta)
            for nrm, irr in zip(part.norms, part.irreducible):
                if not irr:
                    assert nrm <= eta

    def test_j_nonincreasing_in_eta(self):
        traj = stochastic_traj()
        etas = np.geomspace(0.01, 1.0, 6)
        js = [diagnostics.partition_intervals(traj, e).J for e in etas]
        assert all(a >= b for a, b in zip(js, js[1:]))

    def test_large_eta_single_interval(self):
        traj = stochastic_traj()
        part = diagnostics.partition_intervals(traj, 1e6)
        assert part.J == 1
        assert not part.irreducible[0]


class TestStrichartzReport:
    def test_free_flow_pair_constancy(self):
        # for the free group on v with no nonlinearity the Linf_t L2_x entry
        # equals ||grad u0||_L2 (an isometry in every Sobolev norm)
        g = grid2d()
        v0 = dynamics.initial_gaussian_bump(g, 0.2, 1.0)
        cfg = dynamics.SolverConfig(
            grid=g, t_final=0.2, dt=0.01, scheme="deterministic_gp",
            noise=noise.zero_noise(g), initial_v=v0, disable_nonlinearity=True,
        )
        traj = dynamics.solve(cfg)
        rep = diagnostics.strichartz_report(traj, SpacetimeInterval(0, traj.n_snapshots - 1))
        grad0 = lattice._lp_of_values(
            lattice.gradient_magnitude(traj.u_snapshot(0)), 2.0, g.cell_measure
        )
        assert rep["grad_Linft_L2x"] == pytest.approx(grad0, rel=1e-10)

    def test_s1_proxy_is_max(self):
        traj = stochastic_traj()
        rep = diagnostics.strichartz_report(traj, SpacetimeInterval(0, traj.n_snapshots - 1))
        assert rep["s1_proxy"] == max(
            rep["grad_L2t_L4x"], rep["grad_L6t_L12/5x"], rep["grad_Linft_L2x"]
        )

    def test_subinterval_smaller(self):
        traj = stochastic_traj()
        full = diagnostics.strichartz_report(traj, SpacetimeInterval(0, traj.n_snapshots - 1))
        half = diagnostics.strichartz_report(traj, SpacetimeInterval(0, traj.n_snapshots // 2))
        for key in ("grad_L2t_L4x", "grad_L6t_L12/5x", "L6_tx_u_minus_1", "x1"):
            assert half[key] <= full[key] * (1 + 1e-12)

    def test_interval_validated(self):
        traj = stochastic_traj()
        with pytest.raises(UsageError):
            diagnostics.strichartz_report(traj, SpacetimeInterval(0, traj.n_snapshots))
