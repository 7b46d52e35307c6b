import numpy as np
import pytest

from robdict import geometry as geo
from robdict import problems as pb


def _params(source, **kw):
    return pb.Heat1dParams(kw.pop("zeta", 0.3), kw.pop("eps", 0.2), source, **kw)


class TestGaussianProcess:
    def test_tiny_sigma_gives_near_zero(self):
        s = pb.sample_gp_source(200, sigma=1e-12, rng_seed=4)
        assert np.max(np.abs(s)) <= 1e-10

    def test_deterministic(self):
        a = pb.sample_gp_source(300, rng_seed=7)
        b = pb.sample_gp_source(300, rng_seed=7)
        assert np.array_equal(a, b)

    def test_marginal_variance(self):
        draws = pb.sample_gp_source(101, sigma=1.0, corr_len=0.1, rng_seed=0, size=10_000)
        var = draws[:, 50].var()
        assert 0.94 <= var <= 1.06

    @pytest.mark.parametrize("kw", [{"sigma": 0.0}, {"corr_len": -1.0}, {"n_nodes": 1}])
    def test_rejects_bad_arguments(self, kw):
        args = {"n_nodes": 10, **kw}
        with pytest.raises(ValueError):
            pb.sample_gp_source(**args)


class TestHeatSolver:
    def test_zero_source_gives_boundary_value(self):
        u = pb.solve_heat1d(_params(np.zeros(50), u0=3.5))
        assert np.allclose(u, 3.5, rtol=0, atol=1e-13)

    def test_homogeneous_parabola(self):
        n = 201
        p = pb.Heat1dParams(0.3, 0.2, np.ones(n), lambda1=2.0, contrast=1.0)
        assert np.all(p.element_conductivity(n) == 2.0)
        x = np.linspace(0, 1, n)
        u = pb.solve_heat1d(p)
        # P1 with trapezoidal load is nodally exact for a constant source
        assert np.max(np.abs(u - x * (1 - x) / 4.0)) <= 1e-12

    def test_second_order_convergence(self):
        errs = []
        for n in (41, 81, 161):
            x = np.linspace(0, 1, n)
            p = pb.Heat1dParams(0.3, 0.2, np.pi**2 * np.sin(np.pi * x), contrast=1.0)
            errs.append(np.max(np.abs(pb.solve_heat1d(p) - np.sin(np.pi * x))))
        assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5

    def test_flat_in_high_conductivity_region(self):
        n = 2000
        p = _params(pb.sample_gp_source(n, rng_seed=1), zeta=0.3, eps=0.4)
        du = np.abs(np.diff(pb.solve_heat1d(p)))
        lam = p.element_conductivity(n)
        assert du[lam > 1].mean() <= 0.01 * du[lam == 1].mean()

    def test_nonpositive_conductivity_rejected(self):
        with pytest.raises(ValueError, match="conductivity"):
            pb.solve_heat1d(_params(np.ones(20), lambda1=0.0))

    @pytest.mark.parametrize("zeta, eps", [(0.05, 0.0), (0.6, 0.0), (0.3, 0.8), (0.3, -0.1)])
    def test_parameter_support(self, zeta, eps):
        with pytest.raises(ValueError):
            pb.Heat1dParams(zeta, eps, np.ones(5))

    def test_source_length_checked(self):
        with pytest.raises(ValueError, match="source"):
            pb.solve_heat1d(_params(np.ones(20)), n_nodes=30)


class TestHeatDataset:
    def test_shapes_and_ranges(self):
        s = pb.generate_heat1d_dataset(40, 120, 5)
        assert s.values.shape == (120, 40)
        assert s.n_trajectories == 40
        for rec in s.params:
            assert 0.1 <= rec["zeta"] <= 0.5
            assert 0.0 <= rec["eps"] <= 1.0 - rec["zeta"]
            assert len(rec["source"]) == 120
        assert np.isclose(s.weights.sum(), 1.0)

    def test_desk_scale_shape(self, heat_split):
        train, test = heat_split
        assert train.values.shape == (2000, 500)
        assert test.values.shape == (2000, 500)

    def test_deterministic(self):
        a = pb.generate_heat1d_dataset(5, 50, 11)
        b = pb.generate_heat1d_dataset(5, 50, 11)
        assert np.array_equal(a.values, b.values)

    def test_record_round_trip(self):
        s = pb.generate_heat1d_dataset(3, 64, 2)
        p = pb.heat1d_params(s.params[1])
        assert np.array_equal(pb.solve_heat1d(p), s.values[:, 1])

    def test_split_is_partition(self):
        s = pb.generate_heat1d_dataset(10, 20, 0)
        a, b = pb.split_snapshot_set(s, 6, 1)
        cols = np.hstack([a.values, b.values])
        assert a.n_trajectories == 6 and b.n_trajectories == 4
        assert sorted(map(tuple, cols.T.round(14))) == sorted(map(tuple, s.values.T.round(14)))


class TestAdvection:
    def test_counts(self):
        s = pb.generate_advection2d_dataset()
        assert s.values.shape == (101 * 101, 600)
        assert s.n_trajectories == 6
        assert all(b - a == 100 for a, b in s.trajectories)
        assert np.allclose(s.weights, 1e-4)

    def test_initial_condition(self):
        g = np.linspace(0, 1, 11)
        x, y = np.meshgrid(g, g)
        p = pb.Advection2dParams(0.7, 0.5, l=0.2, t=0.0)
        expected = 0.7 * np.exp(-(x**2 + (y - 0.5) ** 2) / 0.2**2)
        assert np.array_equal(pb.advection2d_field(p, x, y), expected)

    def test_amplitudes_collinear(self):
        s = pb.generate_advection2d_dataset(n_timesteps=5, grid_n=21)
        lo, hi = s.trajectory(1), s.trajectory(4)  # same center, U0 = 0.1 and 1
        for j in range(5):
            assert geo.sine_dissimilarity(lo[:, j], hi[:, j], 1, s.weights) <= 1e-12

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            pb.Advection2dParams(1.0, 0.5, l=0.0)
        with pytest.raises(ValueError):
            pb.Advection2dParams(1.0, 0.5, t=-1.0)


class TestSnapshotSet:
    def test_rejects_zero_weight(self):
        with pytest.raises(ValueError, match="index 2"):
            pb.SnapshotSet(np.ones((4, 2)), [1, 1, 0, 1], [(0, 1), (1, 2)])

    def test_rejects_gap_in_trajectories(self):
        with pytest.raises(ValueError, match="trajectories"):
            pb.SnapshotSet(np.ones((3, 4)), np.ones(3), [(0, 2), (3, 4)])

    def test_values_are_read_only(self):
        s = pb.SnapshotSet(np.ones((3, 2)), np.ones(3), [(0, 2)])
        with pytest.raises(ValueError):
            s.values[0, 0] = 2.0

    def test_split_columns_times(self):
        s = pb.generate_advection2d_dataset(n_timesteps=3, grid_n=5)
        c = s.split_columns()
        assert c.n_trajectories == 18
        assert c.params[4]["times"] == [s.params[1]["times"][1]]

    def test_parameter_vectors_column_mode(self):
        s = pb.generate_advection2d_dataset(n_timesteps=3, grid_n=5)
        X = pb.parameter_vectors(s, "column")
        assert X.shape == (18, 5)
        assert np.allclose(X[:3, -1], [1 / 3, 2 / 3, 1.0])


class TestSnapshotFiles:
    def test_round_trip_bitwise(self, tmp_path):
        s = pb.generate_heat1d_dataset(6, 80, 1)
        pb.export_snapshots(s, tmp_path / "h.robsnap")
        r = pb.import_snapshots(tmp_path / "h.robsnap")
        assert np.array_equal(r.values, s.values)
        assert np.array_equal(r.weights, s.weights)
        assert r.trajectories == s.trajectories
        assert list(r.params) == list(s.params)
        assert (tmp_path / "h.meta.json").exists()

    def test_round_trip_trajectories(self, tmp_path):
        s = pb.generate_advection2d_dataset(n_timesteps=4, grid_n=6)
        pb.export_snapshots(s, tmp_path / "a.robsnap")
        r = pb.import_snapshots(tmp_path / "a.robsnap")
        assert r.trajectories == s.trajectories
        assert np.array_equal(r.values, s.values)

    def test_truncated_file(self, tmp_path):
        s = pb.generate_heat1d_dataset(3, 30, 1)
        p = tmp_path / "t.robsnap"
        pb.export_snapshots(s, p)
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(pb.SnapshotFormatError, match="values"):
            pb.import_snapshots(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "m.robsnap"
        p.write_bytes(b"NOTASNAP" + bytes(40))
        with pytest.raises(pb.SnapshotFormatError, match="header"):
            pb.import_snapshots(p)

    def test_zero_weight_in_file(self, tmp_path):
        s = pb.SnapshotSet(np.ones((3, 1)), np.ones(3), [(0, 1)])
        p = tmp_path / "w.robsnap"
        pb.export_snapshots(s, p)
        raw = bytearray(p.read_bytes())
        raw[32 + 8: 32 + 16] = np.zeros(1).tobytes()  # weight index 1
        p.write_bytes(bytes(raw))
        with pytest.raises(pb.SnapshotFormatError, match="index 1"):
            pb.import_snapshots(p)

    def test_csv_export(self, tmp_path):
        s = pb.generate_heat1d_dataset(3, 10, 1)
        pb.export_snapshots_csv(s, tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0].split(",")[0] == "weight"
        assert len(lines) == 11
