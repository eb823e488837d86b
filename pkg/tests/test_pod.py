import os
import tempfile

import numpy as np
from unittest import TestCase

from data import SnapshotMatrix, TimeGrid
from pod import LinearReducer, pod_fit, energy_rank, stack_snapshots
from tests.mock_data import central_jacobian


class TestFit(TestCase):

    def test_rank_one(self):
        X = np.outer([1.0, 2.0, -1.0, 0.5, 3.0], [0.2, -1.0, 0.4, 2.0])
        reducer = pod_fit(X, {"energy": 0.9})
        self.assertEqual(reducer.latent_dim, 1)
        self.assertLess(np.linalg.norm(reducer.decode(reducer.encode(X)) - X),
                        1e-12)

    def test_logs_captured_energy(self):
        s = np.array([3.0, 2.0, 1.0])
        X = np.diag(s)
        with self.assertLogs("main.pod", "INFO") as logs:
            pod_fit(X, {"fixed": 2})
        # energies 9, 4, 1 of 14
        self.assertIn("N_z = 2, energy captured %.6f" % (13 / 14),
                      logs.output[0])

    def test_full_rank_reconstruction(self):
        X = np.random.default_rng(0).normal(size=(10, 4))
        reducer = pod_fit(X, {"fixed": 4})
        self.assertEqual(reducer.latent_dim, 4)
        self.assertLess(np.linalg.norm(reducer.decode(reducer.encode(X)) - X),
                        1e-12)

    def test_fixed_out_of_range(self):
        X = np.random.default_rng(0).normal(size=(10, 4))
        with self.assertRaises(ValueError):
            pod_fit(X, {"fixed": 5})
        with self.assertRaises(ValueError):
            pod_fit(X, {"fixed": 0})
        with self.assertRaises(ValueError):
            pod_fit(X, {"rank": 2})

    def test_sign_convention(self):
        X = np.random.default_rng(1).normal(size=(8, 6))
        for data in (X, -X):
            basis = pod_fit(data, {"fixed": 3}).basis
            idx = np.abs(basis).argmax(axis=0)
            self.assertTrue(np.all(basis[idx, np.arange(3)] > 0))
        self.assertTrue(np.allclose(pod_fit(X, {"fixed": 3}).basis,
                                    pod_fit(-X, {"fixed": 3}).basis))

    def test_energy_rank(self):
        s = np.array([3.0, 2.0, 1.0, 0.0])
        # energies 9, 4, 1 of 14
        self.assertEqual(energy_rank(s, 9 / 14), 1)
        self.assertEqual(energy_rank(s, 0.7), 2)
        self.assertEqual(energy_rank(s, 1.0), 3)
        with self.assertRaises(ValueError):
            energy_rank(s, 0.0)
        with self.assertRaises(ValueError):
            energy_rank(np.zeros(3), 0.5)

    def test_centered(self):
        X = np.random.default_rng(2).normal(size=(6, 5)) + 4.0
        reducer = pod_fit(X, {"fixed": 2}, center=True)
        self.assertTrue(reducer.centered)
        self.assertTrue(np.allclose(reducer.decode(np.zeros(2)),
                                    X.mean(axis=0)))

    def test_stacks_snapshot_lists(self):
        grid = TimeGrid(1.0, 2)
        a = SnapshotMatrix(np.ones((3, 4)), grid)
        b = SnapshotMatrix(2 * np.ones((3, 4)), grid)
        self.assertEqual(stack_snapshots([a, b]).shape, (6, 4))
        self.assertEqual(stack_snapshots(a).shape, (3, 4))
        with self.assertRaises(ValueError):
            stack_snapshots([])


class TestReducer(TestCase):

    def setUp(self):
        basis, _ = np.linalg.qr(np.random.default_rng(3).normal(size=(7, 3)))
        self.reducer = LinearReducer(basis)

    def test_not_orthonormal(self):
        with self.assertRaises(ValueError):
            LinearReducer(np.ones((4, 2)))
        with self.assertRaises(ValueError):
            LinearReducer(np.eye(3)[:, :2], mean=np.zeros(4))

    def test_left_inverse(self):
        z = np.array([0.3, -1.2, 2.0])
        self.assertLess(np.abs(self.reducer.encode(self.reducer.decode(z))
                               - z).max(), 1e-12)

    def test_decode_zero(self):
        self.assertEqual(np.abs(self.reducer.decode(np.zeros(3))).max(), 0.0)

    def test_projection_of_span(self):
        u = self.reducer.basis @ np.array([1.0, 2.0, -0.5])
        self.assertLess(np.abs(self.reducer.decode(self.reducer.encode(u))
                               - u).max(), 1e-12)

    def test_jacobians(self):
        V = self.reducer.decoder_jacobian()
        self.assertTrue(np.array_equal(self.reducer.encoder_jacobian().T, V))
        self.assertTrue(np.allclose(V @ self.reducer.encoder_jacobian() @ V[:, 0],
                                    V[:, 0]))
        fd = central_jacobian(self.reducer.decode, np.array([0.1, 0.2, 0.3]))
        self.assertTrue(np.allclose(fd, V, atol=1e-9))

    def test_dimension_checks(self):
        with self.assertRaises(ValueError):
            self.reducer.encode(np.zeros(6))
        with self.assertRaises(ValueError):
            self.reducer.decode(np.zeros(2))

    def test_save_load(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "reducer.bin")
            self.reducer.save(path)
            loaded = LinearReducer.load(path)
            self.assertTrue(np.array_equal(loaded.basis, self.reducer.basis))
            self.assertFalse(loaded.centered)

            centered = LinearReducer(self.reducer.basis, mean=np.arange(7.0))
            centered.save(path)
            loaded = LinearReducer.load(path)
            self.assertTrue(np.array_equal(loaded.mean, np.arange(7.0)))
