import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from robdict import geometry as geo
from robdict import problems as pb

seeds = st.integers(0, 2**32 - 1)


def _traj(rng, dim, cols):
    return rng.standard_normal((dim, cols))


def _weights(rng, dim):
    return rng.uniform(0.5, 2.0, dim)


class TestWeightedDot:
    def test_unit(self):
        e1 = np.eye(3)[0]
        assert geo.weighted_dot(e1, e1, np.ones(3)) == 1.0

    def test_hand_value(self):
        assert geo.weighted_dot([1, 2], [3, 4], [2, 1]) == 14.0

    def test_orthogonal(self, rng):
        u = rng.standard_normal(20)
        v = rng.standard_normal(20)
        v -= (u @ v) / (u @ u) * u
        assert abs(geo.weighted_dot(u, v, np.ones(20))) <= 1e-14 * np.linalg.norm(u) * np.linalg.norm(v)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            geo.weighted_dot([1, 2], [1, 2, 3], [1, 1])


class TestPod:
    def test_single_snapshot(self, rng):
        w = _weights(rng, 10)
        u = rng.standard_normal(10)
        b = geo.pod_basis(u, w, n_modes=1)
        expected = u / np.sqrt(u @ (w * u))
        expected *= np.sign(expected[np.argmax(np.abs(expected))])
        assert np.allclose(b.modes[:, 0], expected, atol=1e-14)

    def test_identical_columns_rank_one(self, rng):
        u = rng.standard_normal(8)
        for tol in (1e-1, 1e-6, 1e-12):
            assert geo.pod_basis(np.column_stack([u, u]), np.ones(8), tol=tol).n_modes == 1

    def test_identity_energy_fraction(self):
        b = geo.pod_basis(np.eye(3), np.ones(3), n_modes=2)
        total = b.singular_values @ b.singular_values + b.discarded_energy
        assert abs(b.singular_values @ b.singular_values / total - 2 / 3) <= 1e-14

    def test_orthonormal_and_sorted(self, rng):
        w = _weights(rng, 40)
        b = geo.pod_basis(_traj(rng, 40, 12), w, n_modes=6)
        assert np.max(np.abs(b.modes.T @ (w[:, None] * b.modes) - np.eye(6))) <= 1e-10
        assert np.all(np.diff(b.singular_values) <= 0)
        assert np.all(b.modes[np.argmax(np.abs(b.modes), axis=0), range(6)] > 0)

    def test_matches_method_of_snapshots(self, rng):
        w = _weights(rng, 30)
        Q = _traj(rng, 30, 8)
        b = geo.pod_basis(Q, w, n_modes=3)
        ref = oracles.snapshot_basis(Q, w, 3)
        # same subspaces, modes equal up to sign
        for k in range(3):
            assert abs(abs(b.modes[:, k] @ (w * ref[:, k])) - 1) <= 1e-10

    def test_tolerance_mode(self, rng):
        Q = _traj(rng, 30, 10)
        b = geo.pod_basis(Q, np.ones(30), tol=0.3)
        s = np.linalg.svd(Q, compute_uv=False)
        tail = lambda n: np.sqrt(np.sum(s[n:] ** 2) / np.sum(s**2))
        assert tail(b.n_modes) <= 0.3 < tail(b.n_modes - 1)

    def test_errors(self, rng):
        with pytest.raises(ValueError, match="all-zero"):
            geo.pod_basis(np.zeros((5, 2)), np.ones(5), n_modes=1)
        with pytest.raises(ValueError, match="tol"):
            geo.pod_basis(np.eye(3), np.ones(3), tol=0.0)
        with pytest.raises(ValueError, match="achievable rank is 2"):
            geo.pod_basis(np.eye(4)[:, :2], np.ones(4), n_modes=3)
        with pytest.raises(ValueError, match="exactly one"):
            geo.pod_basis(np.eye(3), np.ones(3))

    @given(seeds)
    @settings(max_examples=30, deadline=None)
    def test_projection_error_non_increasing_in_N(self, seed):
        rng = np.random.default_rng(seed)
        w = _weights(rng, 25)
        Q = _traj(rng, 25, 9)
        errs = [geo.projection_errors(Q, geo.pod_basis(Q, w, n_modes=n)) for n in range(1, 10)]
        assert np.all(np.diff(np.array(errs), axis=0) <= 1e-12)


class TestPrincipalAngles:
    def test_same_basis(self, rng):
        b = geo.pod_basis(_traj(rng, 20, 4), np.ones(20), n_modes=4)
        assert np.max(geo.principal_angles(b, b)) <= 1e-7

    def test_right_angle(self):
        I = np.eye(4)
        b1 = geo.pod_basis(I[:, [0, 1]], np.ones(4), n_modes=2)
        b2 = geo.pod_basis(I[:, [0, 2]], np.ones(4), n_modes=2)
        assert np.allclose(geo.principal_angles(b1, b2), [0, np.pi / 2], atol=1e-14)

    def test_quarter_pi(self):
        I = np.eye(3)
        b1 = geo.pod_basis(I[:, 0], np.ones(3), n_modes=1)
        b2 = geo.pod_basis((I[:, 0] + I[:, 1]) / np.sqrt(2), np.ones(3), n_modes=1)
        assert abs(geo.principal_angles(b1, b2)[0] - np.pi / 4) <= 1e-14

    def test_weight_mismatch(self):
        b1 = geo.pod_basis(np.eye(3)[:, 0], np.ones(3), n_modes=1)
        b2 = geo.pod_basis(np.eye(3)[:, 0], 2 * np.ones(3), n_modes=1)
        with pytest.raises(ValueError, match="weights"):
            geo.principal_angles(b1, b2)

    def test_tiny_angle_resolved(self):
        I = np.eye(3)
        b1 = geo.pod_basis(I[:, 0], np.ones(3), n_modes=1)
        b2 = geo.pod_basis(I[:, 0] + 1e-10 * I[:, 1], np.ones(3), n_modes=1)
        assert abs(geo.principal_angles(b1, b2)[0] - 1e-10) <= 1e-20


class TestSine:
    def test_hand_values(self):
        I = np.eye(3)
        assert geo.sine_dissimilarity(I[:, 0], I[:, 1]) == 1.0
        d = geo.sine_dissimilarity(I[:, 0], (I[:, 0] + I[:, 1]) / np.sqrt(2))
        assert abs(d - np.sin(np.pi / 4)) <= 1e-9

    def test_scale_invariance_closed_form(self, rng):
        u = rng.standard_normal(30)
        assert geo.sine_dissimilarity(u, u) == 0.0
        assert geo.sine_dissimilarity(u, 1e3 * u) <= 1e-15

    @given(seeds, st.sampled_from([1, 2, 3]), st.floats(1e-3, 1e3), st.floats(-1e3, -1e-3))
    @settings(max_examples=40, deadline=None)
    def test_scale_invariance(self, seed, n, alpha, beta):
        rng = np.random.default_rng(seed)
        w = _weights(rng, 20)
        u, v = _traj(rng, 20, 4), _traj(rng, 20, 4)
        d0 = geo.sine_dissimilarity(u, v, n, w)
        assert abs(geo.sine_dissimilarity(alpha * u, beta * v, n, w) - d0) <= 1e-10

    @given(seeds)
    @settings(max_examples=50, deadline=None)
    def test_closed_form_equals_projection_error(self, seed):
        rng = np.random.default_rng(seed)
        w = _weights(rng, 15)
        u, v = rng.standard_normal(15), rng.standard_normal(15)
        basis = geo.pod_basis(v, w, n_modes=1)
        assert abs(geo.sine_dissimilarity(u, v, 1, w) - geo.relative_projection_error(u, basis)) <= 1e-10

    @given(seeds, st.integers(1, 5))
    @settings(max_examples=40, deadline=None)
    def test_hilbert_schmidt_identity(self, seed, n):
        rng = np.random.default_rng(seed)
        w = _weights(rng, 30)
        u, v = _traj(rng, 30, 6), _traj(rng, 30, 6)
        ref = oracles.hilbert_schmidt_sine(u, v, w, n)
        assert abs(geo.sine_dissimilarity(u, v, n, w) - ref) <= 1e-8

    @given(seeds, st.integers(1, 5))
    @settings(max_examples=40, deadline=None)
    def test_projection_identity(self, seed, n):
        rng = np.random.default_rng(seed)
        w = _weights(rng, 30)
        u, v = _traj(rng, 30, 6), _traj(rng, 30, 6)
        ref = oracles.residual_sine(u, v, w, n)
        assert abs(geo.sine_dissimilarity(u, v, n, w) - ref) <= 1e-8

    @given(seeds, st.sampled_from([1, 2, 3, 5]))
    @settings(max_examples=60, deadline=None)
    def test_pseudometric(self, seed, n):
        rng = np.random.default_rng(seed)
        w = _weights(rng, 50)
        cols = n + 2
        u, v, z = (_traj(rng, 50, cols) for _ in range(3))
        duv = geo.sine_dissimilarity(u, v, n, w)
        assert duv == geo.sine_dissimilarity(v, u, n, w)
        assert geo.sine_dissimilarity(u, u, n, w) <= 1e-10
        assert duv <= geo.sine_dissimilarity(u, z, n, w) + geo.sine_dissimilarity(z, v, n, w) + 1e-9
        assert 0 <= duv <= np.sqrt(n) + 1e-12

    def test_rank_deficient_trajectory(self, rng):
        u = np.outer(rng.standard_normal(10), [1, 2, 3])
        with pytest.raises(ValueError, match="achievable rank is 1"):
            geo.sine_dissimilarity(u, rng.standard_normal((10, 3)), 2)

    def test_zero_trajectory(self):
        with pytest.raises(ValueError, match="zero-norm"):
            geo.sine_dissimilarity(np.zeros(4), np.ones(4))


class TestGrassmann:
    def test_values(self):
        I = np.eye(3)
        assert geo.grassmann_dissimilarity(I[:, 0], I[:, 0]) == 0.0
        assert abs(geo.grassmann_dissimilarity(I[:, 0], I[:, 1]) - np.pi / 2) <= 1e-14

    def test_small_angle(self):
        I = np.eye(3)
        v = I[:, 0] + 1e-4 * I[:, 1]
        g, s = geo.grassmann_dissimilarity(I[:, 0], v), geo.sine_dissimilarity(I[:, 0], v)
        assert abs(g - s) / s <= 1e-6

    @given(seeds, st.integers(1, 3), st.floats(1e-9, 1e-4))
    @settings(max_examples=30, deadline=None)
    def test_small_angle_ratio(self, seed, n, eps):
        rng = np.random.default_rng(seed)
        w = _weights(rng, 25)
        u = _traj(rng, 25, 4)
        v = u + eps * _traj(rng, 25, 4)
        s = geo.sine_dissimilarity(u, v, n, w)
        assert abs(geo.grassmann_dissimilarity(u, v, n, w) / s - 1) <= 1e-6


class TestEuclid:
    def test_solution_values(self):
        I = np.eye(3)
        assert geo.euclid_solution_dissimilarity(I[:, 0], I[:, 0]) == 0.0
        assert geo.euclid_solution_dissimilarity(np.zeros(3), I[:, 0]) == 1.0
        assert geo.euclid_solution_dissimilarity(I[:, 0], 3 * I[:, 0]) == 2.0

    def test_solution_trajectory_rss(self, rng):
        u, v = _traj(rng, 6, 3), _traj(rng, 6, 3)
        per_col = [geo.euclid_solution_dissimilarity(u[:, j], v[:, j]) for j in range(3)]
        assert abs(geo.euclid_solution_dissimilarity(u, v) - np.sqrt(np.sum(np.square(per_col)))) <= 1e-14

    def test_solution_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            geo.euclid_solution_dissimilarity(np.ones((3, 2)), np.ones((3, 3)))

    def test_parameter_values(self):
        assert geo.euclid_parameter_dissimilarity([1, 2], [1, 2]) == 0.0
        assert geo.euclid_parameter_dissimilarity([-1], [1]) == 2.0
        with pytest.raises(ValueError, match="dimension"):
            geo.euclid_parameter_dissimilarity([1, 2], [1])

    def test_heat_parameters_brute_force(self):
        s = pb.generate_heat1d_dataset(5, 40, 9)
        rows = [np.concatenate([r["source"], [r["zeta"], r["eps"]]]) for r in s.params]
        X = np.array(rows)
        Z = (X - X.mean(0)) / X.std(0)
        ref = np.sqrt(((Z[:, None, :] - Z[None, :, :]) ** 2).sum(-1))
        with pytest.warns(RuntimeWarning, match="zero-variance"):
            D = geo.dissimilarity_matrix(s, "euclid_parameter")
        assert np.allclose(D.d, ref, rtol=1e-12, atol=1e-12)

    def test_scaler_dimension_mismatch(self):
        sc = geo.ParameterScaler.fit(np.array([[0.0, 1.0], [1.0, 3.0]]))
        with pytest.raises(ValueError, match="dimension"):
            sc.transform(np.ones((1, 3)))


class TestProjectionError:
    def test_in_span_and_orthogonal(self, rng):
        w = _weights(rng, 12)
        Q = _traj(rng, 12, 3)
        b = geo.pod_basis(Q, w, n_modes=3)
        assert geo.relative_projection_error(Q @ [1.0, -2.0, 0.5], b) <= 1e-10
        # a W-orthogonal vector to span(Q)
        z = rng.standard_normal(12)
        z -= b.project(z)
        assert abs(geo.relative_projection_error(z, b) - 1) <= 1e-10

    def test_hand_value(self):
        I = np.eye(3)
        b = geo.pod_basis(I[:, 0], np.ones(3), n_modes=1)
        assert abs(geo.relative_projection_error(I[:, 0] + I[:, 1], b) - 1 / np.sqrt(2)) <= 1e-15

    def test_zero_vector(self):
        b = geo.pod_basis(np.eye(3)[:, 0], np.ones(3), n_modes=1)
        with pytest.raises(ValueError):
            geo.relative_projection_error(np.zeros(3), b)

    @given(seeds, st.integers(1, 5))
    @settings(max_examples=30, deadline=None)
    def test_normalized_kolmogorov_inequality(self, seed, N):
        rng = np.random.default_rng(seed)
        w = _weights(rng, 20)
        sample = _traj(rng, 20, 15) * rng.uniform(0.1, 10, 15)
        basis = geo.pod_basis(_traj(rng, 20, N), w, n_modes=N)
        abs_err = np.sqrt(np.sum(w[:, None] * (sample - basis.project(sample)) ** 2, axis=0))
        norms = np.sqrt(np.sum(w[:, None] * sample**2, axis=0))
        eta = geo.projection_errors(sample, basis)
        assert abs_err.max() <= norms.max() * eta.max() + 1e-9


class TestMatrices:
    def test_identical_trajectories(self, rng):
        u = rng.standard_normal(10)
        s = pb.SnapshotSet(np.column_stack([u, u, u]), np.ones(10), [(0, 1), (1, 2), (2, 3)])
        assert np.all(geo.dissimilarity_matrix(s).d == 0)

    @pytest.mark.parametrize("measure, n", [("sine", 1), ("sine", 2), ("grassmann", 2),
                                            ("euclid_solution", None)])
    def test_matches_pairwise(self, rng, measure, n):
        vals = rng.standard_normal((25, 30))
        w = _weights(rng, 25)
        s = pb.SnapshotSet(vals, w, [(3 * i, 3 * i + 3) for i in range(10)])
        D = geo.dissimilarity_matrix(s, measure, n or 1)
        fn = {"sine": lambda a, b: geo.sine_dissimilarity(a, b, n, w),
              "grassmann": lambda a, b: geo.grassmann_dissimilarity(a, b, n, w),
              "euclid_solution": lambda a, b: geo.euclid_solution_dissimilarity(a, b, w)}[measure]
        ref = np.array([[fn(s.trajectory(i), s.trajectory(j)) if i != j else 0.0
                         for j in range(10)] for i in range(10)])
        assert np.allclose(D.d, ref, rtol=1e-12, atol=1e-13)
        assert np.array_equal(D.d, D.d.T)
        assert np.all(np.diag(D.d) == 0)

    def test_single_column_matrix(self, heat_split):
        train, _ = heat_split
        sub = train.subset(range(40))
        D = geo.dissimilarity_matrix(sub, "sine")
        ref = np.array([[geo.sine_dissimilarity(sub.values[:, i], sub.values[:, j], 1, sub.weights)
                         for j in range(40)] for i in range(40)])
        np.fill_diagonal(ref, 0.0)
        assert np.allclose(D.d, ref, atol=1e-12)
        assert D.d.max() <= 1 + 1e-12

    def test_advection_collinear_entries(self):
        s = pb.generate_advection2d_dataset(n_timesteps=10, grid_n=31)
        D = geo.dissimilarity_matrix(s, "sine", by="column")
        idx = np.arange(30)
        assert np.max(D.d[idx, idx + 30]) <= 1e-12

    def test_cross_matches_square(self, rng):
        vals = rng.standard_normal((15, 8))
        s = pb.SnapshotSet(vals, np.ones(15), [(i, i + 1) for i in range(8)])
        D = geo.dissimilarity_matrix(s, "sine")
        C = geo.cross_dissimilarity(s.subset([1, 5]), s, "sine", b_indices=[0, 2, 7])
        assert np.allclose(C, D.d[np.ix_([1, 5], [0, 2, 7])], atol=1e-14)

    def test_file_round_trip(self, rng, tmp_path):
        vals = rng.standard_normal((12, 6))
        s = pb.SnapshotSet(vals, np.ones(12), [(i, i + 1) for i in range(6)])
        D = geo.dissimilarity_matrix(s)
        geo.save_dissimilarity(D, tmp_path / "d.csv")
        R = geo.load_dissimilarity(tmp_path / "d.csv")
        assert np.array_equal(R.d, D.d) and R.measure == "sine" and R.n == 1
        first = (tmp_path / "d.csv").read_text().splitlines()[0]
        assert first.startswith("# {")

    def test_invalid_measure(self, rng):
        s = pb.SnapshotSet(rng.standard_normal((4, 2)), np.ones(4), [(0, 1), (1, 2)])
        with pytest.raises(ValueError):
            geo.dissimilarity_matrix(s, "cosine")
