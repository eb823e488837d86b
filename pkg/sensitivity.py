"""Gradients of the objective through the latent surrogate: reduced direct
(forward) and adjoint (backward) recursions, and a central finite
difference oracle.
"""

import logging

import numpy as np

from data import GradientResult, as_values
from latent import (integrate_latent, reduced_residual_partials,
                    initial_residual_partials)


LOGGER = logging.getLogger('main.sensitivity')


class TargetMismatch:
    """f = ||u_N - target||^2 on the decoded final state; depends on mu only
    through the state
    """

    def __init__(self, target):
        self.target = np.asarray(target, dtype=np.float64)

    def steps(self, N):
        """Time levels whose state enters the objective"""
        return [N]

    def value(self, states):
        """:param states: dict n -> decoded state u_n"""
        diff = states[max(states)] - self.target
        return float(diff @ diff)

    def state_gradient(self, n, u):
        return 2.0 * (u - self.target)

    def param_gradient(self, mu):
        return np.zeros(as_values(mu).size)


def decoder_rows(model):
    """Jacobian of the decoded state with respect to the latent state v
    """
    basis = model.reducer.decoder_jacobian()
    if not model.augmented:
        return basis
    return np.hstack([basis, np.zeros((basis.shape[0], model.library.n_params))])


def _decoded(model, Z, steps):
    nz = model.reducer.latent_dim
    return {n: model.reducer.decode(Z[n, :nz]) for n in steps}


def surrogate_value(model, mu, objective):
    Z = integrate_latent(model, mu)
    N = model.grid.steps
    return objective.value(_decoded(model, Z, objective.steps(N)))


def reduced_direct_gradient(model, mu, objective):
    """Forward recursion of dz_n/dmu; one (identity) solve per step and
    parameter
    """
    W = model.coefficients(mu)
    dW = model.provider.jacobian(mu)
    Z, stages = integrate_latent(model, mu, return_stages=True)
    N = model.grid.steps
    P = model.n_params
    steps = objective.steps(N)
    states = _decoded(model, Z, steps)
    V = decoder_rows(model)

    dr_dz, dr_dmu = initial_residual_partials(model, mu)
    S = -np.linalg.solve(dr_dz, dr_dmu)
    solves = P
    grad = objective.param_gradient(mu)
    for n in range(N + 1):
        if n > 0:
            dr_dz, dr_dprev, dr_dmu = reduced_residual_partials(
                model, W, dW, Z[n - 1], stages[n - 1])
            # dr_n/dz_n is the identity for explicit schemes
            S = -(dr_dmu + dr_dprev @ S)
            solves += P
        if n in states:
            grad = grad + objective.state_gradient(n, states[n]) @ V @ S
    f = objective.value(states)
    return GradientResult(f, grad, "reduced_direct",
                          {"residual_solves": N + 1, "linear_solves": solves})


def reduced_adjoint_gradient(model, mu, objective):
    """Backward recursion of the latent Lagrange multipliers; one (identity)
    solve per step independent of the number of parameters
    """
    W = model.coefficients(mu)
    dW = model.provider.jacobian(mu)
    Z, stages = integrate_latent(model, mu, return_stages=True)
    N = model.grid.steps
    steps = objective.steps(N)
    states = _decoded(model, Z, steps)
    V = decoder_rows(model)

    grad = objective.param_gradient(mu)
    lam = np.zeros(model.dim)
    solves = 0
    back = None
    for n in range(N, -1, -1):
        rhs = np.zeros(model.dim)
        if n in states:
            rhs += V.T @ objective.state_gradient(n, states[n])
        if back is not None:
            # -(dr_{n+1}/dz_n)^T lambda_{n+1}
            rhs -= back.T @ lam
        if n > 0:
            dr_dz, dr_dprev, dr_dmu = reduced_residual_partials(
                model, W, dW, Z[n - 1], stages[n - 1])
        else:
            dr_dz, dr_dmu = initial_residual_partials(model, mu)
            dr_dprev = None
        lam = np.linalg.solve(dr_dz.T, rhs)
        solves += 1
        grad = grad - lam @ dr_dmu
        back = dr_dprev
    f = objective.value(states)
    return GradientResult(f, grad, "reduced_adjoint",
                          {"residual_solves": N + 1, "linear_solves": solves})


def fd_gradient(evaluator, mu, h=1e-6):
    """Central differences, 2 N_D evaluations
    """
    if not h > 0:
        raise ValueError("finite difference step must be > 0")
    mu = as_values(mu)
    grad = np.empty(mu.size)
    for i in range(mu.size):
        step = np.zeros(mu.size)
        step[i] = h
        grad[i] = (evaluator(mu + step) - evaluator(mu - step)) / (2 * h)
    return GradientResult(None, grad, "finite_difference",
                          {"evaluations": 2 * mu.size})
