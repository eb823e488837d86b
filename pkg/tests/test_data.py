import os
import tempfile

import numpy as np
from unittest import TestCase

from data import (ParameterVector, ParameterDomain, TimeGrid, SnapshotMatrix,
                  NoiseSpec, GradientResult, SnapshotFormatError,
                  SnapshotConsistencyError, parameter_grid, inject_noise,
                  relative_param_error, write_matrix, read_matrix,
                  write_snapshot, read_snapshot, META_SUFFIX)


MU_STAR = [0.75, 1.05, 0.85, 0.95]


class TestParameters(TestCase):

    def test_vector_rejects_non_finite(self):
        with self.assertRaises(ValueError):
            ParameterVector([1.0, np.nan])

    def test_vector_is_read_only(self):
        mu = ParameterVector([1.0, 2.0])
        with self.assertRaises(ValueError):
            mu.values[0] = 3.0

    def test_domain_bounds(self):
        with self.assertRaises(ValueError):
            ParameterDomain([0.0, 1.0], [1.0, 1.0])
        with self.assertRaises(ValueError):
            ParameterDomain([0.0], [1.0, 2.0])

    def test_domain_contains_and_clamp(self):
        d = ParameterDomain([0.7, 0.9], [0.9, 1.1])
        self.assertTrue(d.contains([0.7, 1.1]))
        self.assertFalse(d.contains([0.69, 1.0]))
        self.assertEqual(d.clamp([0.5, 2.0]).tolist(), [0.7, 1.1])
        self.assertAlmostEqual(d.distance([0.5, 1.0]), 0.2)
        self.assertTrue(np.allclose(d.center().values, [0.8, 1.0]))
        with self.assertRaises(ValueError):
            d.contains([0.8])

    def test_domain_sample(self):
        d = ParameterDomain([0.7, 0.9], [0.9, 1.1])
        a = d.sample(10, 3)
        self.assertEqual(a.shape, (10, 2))
        self.assertTrue(all(d.contains(x) for x in a))
        self.assertTrue(np.array_equal(a, d.sample(10, 3)))

    def test_parameter_grid(self):
        grid = parameter_grid([[0.7, 0.9], [0.9, 1.1], [0.7, 0.9], [0.9, 1.1]])
        self.assertEqual(len(grid), 16)
        self.assertEqual(grid[0].tolist(), [0.7, 0.9, 0.7, 0.9])
        self.assertEqual(grid[1].tolist(), [0.7, 0.9, 0.7, 1.1])
        self.assertEqual(grid[-1].tolist(), [0.9, 1.1, 0.9, 1.1])


class TestRelativeError(TestCase):

    def test_identical(self):
        self.assertEqual(relative_param_error(MU_STAR, MU_STAR), 0.0)

    def test_scaling(self):
        self.assertAlmostEqual(
            relative_param_error(2 * np.array(MU_STAR), MU_STAR), 1.0)

    def test_small_offset(self):
        mu_hat = [0.76, 1.05, 0.85, 0.95]
        # 0.01 / sqrt(3.29)
        self.assertAlmostEqual(relative_param_error(mu_hat, MU_STAR),
                               0.0055132, places=6)

    def test_zero_reference(self):
        with self.assertRaises(ZeroDivisionError):
            relative_param_error([1.0], [0.0])

    def test_length_mismatch(self):
        with self.assertRaises(ValueError):
            relative_param_error([1.0, 2.0], [1.0])


class TestTimeGridAndSnapshots(TestCase):

    def test_grid(self):
        grid = TimeGrid(1.0, 1000)
        self.assertAlmostEqual(grid.dt, 0.001)
        self.assertEqual(grid.times.shape, (1001,))
        self.assertEqual(grid.times[0], 0.0)
        with self.assertRaises(ValueError):
            TimeGrid(1.0, 0)
        with self.assertRaises(ValueError):
            TimeGrid(0.0, 10)

    def test_rows_must_match_grid(self):
        with self.assertRaises(SnapshotConsistencyError):
            SnapshotMatrix(np.zeros((10, 3)), TimeGrid(1.0, 10))

    def test_non_finite(self):
        data = np.zeros((3, 2))
        data[1, 1] = np.inf
        with self.assertRaises(ValueError):
            SnapshotMatrix(data, TimeGrid(1.0, 2))

    def test_final(self):
        data = np.arange(6.0).reshape(3, 2)
        s = SnapshotMatrix(data, TimeGrid(1.0, 2), [1.0])
        self.assertEqual(s.final.tolist(), [4.0, 5.0])
        self.assertIsInstance(s.mu, ParameterVector)

    def test_gradient_result(self):
        with self.assertRaises(ValueError):
            GradientResult(1.0, [0.0], "newton")
        with self.assertRaises(ValueError):
            GradientResult(1.0, [np.nan], "finite_difference")


class TestNoise(TestCase):

    def test_zero_ratio_is_identity(self):
        s = SnapshotMatrix(np.arange(6.0).reshape(3, 2), TimeGrid(1.0, 2))
        noisy = inject_noise(s, NoiseSpec(0.0, seed=5))
        self.assertTrue(np.array_equal(noisy.data, s.data))

    def test_rms_scale(self):
        s = SnapshotMatrix(np.ones((100, 100)), TimeGrid(1.0, 99))
        noisy = inject_noise(s, NoiseSpec(0.2, seed=1))
        self.assertAlmostEqual(np.std(noisy.data - s.data), 0.2, delta=0.01)

    def test_frobenius_scale(self):
        s = SnapshotMatrix(np.ones((10, 10)), TimeGrid(1.0, 9))
        noisy = inject_noise(s, NoiseSpec(0.01, seed=1, scale="frobenius"))
        # sigma = 0.01 * ||U||_F = 0.1
        self.assertAlmostEqual(np.std(noisy.data - s.data), 0.1, delta=0.03)

    def test_deterministic(self):
        s = SnapshotMatrix(np.ones((5, 4)), TimeGrid(1.0, 4))
        a = inject_noise(s, NoiseSpec(0.4, seed=2))
        b = inject_noise(s, NoiseSpec(0.4, seed=2))
        c = inject_noise(s, NoiseSpec(0.4, seed=3))
        self.assertTrue(np.array_equal(a.data, b.data))
        self.assertFalse(np.array_equal(a.data, c.data))

    def test_invalid_spec(self):
        with self.assertRaises(ValueError):
            NoiseSpec(-0.1)
        with self.assertRaises(ValueError):
            NoiseSpec(0.1, scale="max")


class TestMatrixFiles(TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "m.bin")

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip(self):
        a = np.arange(6.0).reshape(2, 3)
        write_matrix(self.path, a, {"k": 1})
        b, meta = read_matrix(self.path)
        self.assertTrue(np.array_equal(a, b))
        self.assertEqual(meta, {"k": 1})
        # 24 byte header, then 6 little-endian doubles
        self.assertEqual(os.path.getsize(self.path), 24 + 48)

    def test_no_sidecar(self):
        write_matrix(self.path, np.zeros((1, 2)))
        self.assertIsNone(read_matrix(self.path)[1])

    def test_bad_magic(self):
        write_matrix(self.path, np.zeros((2, 2)))
        with open(self.path, "r+b") as f:
            f.write(b"XXXX")
        with self.assertRaises(SnapshotFormatError):
            read_matrix(self.path)

    def test_truncated(self):
        write_matrix(self.path, np.zeros((2, 2)))
        with open(self.path, "r+b") as f:
            f.truncate(24 + 8)
        with self.assertRaises(SnapshotFormatError):
            read_matrix(self.path)
        with open(self.path, "r+b") as f:
            f.truncate(10)
        with self.assertRaises(SnapshotFormatError):
            read_matrix(self.path)

    def test_snapshot_round_trip(self):
        s = SnapshotMatrix(np.arange(8.0).reshape(4, 2), TimeGrid(0.3, 3),
                           [0.7, 1.1])
        write_snapshot(s, self.path)
        r = read_snapshot(self.path)
        self.assertTrue(np.array_equal(r.data, s.data))
        self.assertEqual(r.grid, s.grid)
        self.assertEqual(r.mu.tolist(), [0.7, 1.1])

    def test_snapshot_sidecar_required(self):
        write_matrix(self.path, np.zeros((4, 2)))
        with self.assertRaises(SnapshotConsistencyError):
            read_snapshot(self.path)

    def test_snapshot_rows_checked(self):
        write_matrix(self.path, np.zeros((4, 2)),
                     {"t_final": 1.0, "steps": 5, "mu": None})
        with self.assertRaises(SnapshotConsistencyError):
            read_snapshot(self.path)
        self.assertTrue(os.path.exists(self.path + META_SUFFIX))
