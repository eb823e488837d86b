import numpy as np
from unittest import TestCase

from latent import predict_full
from sensitivity import (TargetMismatch, decoder_rows, surrogate_value,
                         reduced_direct_gradient, reduced_adjoint_gradient,
                         fd_gradient)
from tests.mock_data import get_linear_model


def relative(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestObjective(TestCase):

    def test_target_mismatch(self):
        obj = TargetMismatch([1.0, 2.0])
        self.assertEqual(obj.value({3: np.array([1.0, 4.0])}), 4.0)
        self.assertEqual(obj.state_gradient(3, np.array([2.0, 2.0])).tolist(),
                         [2.0, 0.0])
        self.assertEqual(obj.steps(7), [7])
        self.assertEqual(obj.param_gradient([0.1, 0.2]).tolist(), [0.0, 0.0])

    def test_decoder_rows(self):
        model = get_linear_model(provider="Implicit")
        V = decoder_rows(model)
        self.assertEqual(V.shape, (6, 4))
        self.assertEqual(np.abs(V[:, 2:]).max(), 0.0)


class TestReducedGradients(TestCase):

    def setUp(self):
        self.models = {
            "RBF": get_linear_model(degree=2, t_final=0.5, provider="RBF"),
            "Implicit": get_linear_model(degree=2, t_final=0.5,
                                         provider="Implicit"),
            "Global": get_linear_model(provider="Global"),
            "Convex": get_linear_model(degree=2, t_final=0.5,
                                       provider="Convex"),
            "GP": get_linear_model(t_final=0.5, provider="GP"),
        }
        self.target = np.linspace(-0.5, 0.5, 6)
        self.objective = TargetMismatch(self.target)
        self.mus = np.random.default_rng(7).random((5, 2))

    def test_direct_matches_adjoint(self):
        for name, model in self.models.items():
            for mu in self.mus:
                direct = reduced_direct_gradient(model, mu, self.objective)
                adjoint = reduced_adjoint_gradient(model, mu, self.objective)
                self.assertLess(relative(direct.gradient, adjoint.gradient),
                                1e-10, name)
                self.assertAlmostEqual(direct.value, adjoint.value, places=14)

    def test_matches_finite_differences(self):
        for name, model in self.models.items():
            evaluator = lambda m: surrogate_value(model, m, self.objective)
            for mu in self.mus:
                adjoint = reduced_adjoint_gradient(model, mu, self.objective)
                fd = fd_gradient(evaluator, mu)
                self.assertLess(relative(adjoint.gradient, fd.gradient), 1e-5,
                                name)

    def test_value(self):
        model = self.models["RBF"]
        mu = self.mus[0]
        u_final = predict_full(model, mu).final
        expected = np.sum((u_final - self.target) ** 2)
        self.assertAlmostEqual(surrogate_value(model, mu, self.objective),
                               expected, places=12)

    def test_minimizer(self):
        model = self.models["RBF"]
        mu = self.mus[1]
        objective = TargetMismatch(predict_full(model, mu).final)
        for method in (reduced_direct_gradient, reduced_adjoint_gradient):
            result = method(model, mu, objective)
            self.assertLess(np.abs(result.gradient).max(), 1e-8)
            self.assertLess(result.value, 1e-20)

    def test_zero_mismatch_weight(self):
        # zero state gradient, so every multiplier vanishes
        model = self.models["Global"]

        class Flat(TargetMismatch):
            def state_gradient(self, n, u):
                return np.zeros_like(u)

        result = reduced_adjoint_gradient(model, self.mus[0],
                                          Flat(self.target))
        self.assertEqual(np.abs(result.gradient).max(), 0.0)

    def test_costs(self):
        model = self.models["RBF"]
        N = model.grid.steps
        direct = reduced_direct_gradient(model, self.mus[0], self.objective)
        adjoint = reduced_adjoint_gradient(model, self.mus[0], self.objective)
        self.assertEqual(direct.cost["linear_solves"], (N + 1) * 2)
        self.assertEqual(adjoint.cost["linear_solves"], N + 1)
        self.assertEqual(direct.method, "reduced_direct")
        self.assertEqual(adjoint.method, "reduced_adjoint")


class TestFiniteDifferences(TestCase):

    def test_quadratic(self):
        c = np.array([0.3, -0.2, 0.9])
        mu = np.array([0.5, 0.5, 0.5])
        result = fd_gradient(lambda m: np.sum((m - c) ** 2), mu)
        self.assertLess(np.abs(result.gradient - 2 * (mu - c)).max(), 1e-8)
        self.assertIsNone(result.value)
        self.assertEqual(result.cost["evaluations"], 6)

    def test_step(self):
        with self.assertRaises(ValueError):
            fd_gradient(np.sum, [1.0], h=0.0)
