"""Full-order model of the periodic 1-D inviscid Burgers equation

    u_t + u u_x = 0,  x in [x_min, x_max),  u(x, 0) = g(x; mu)

discretized with a one-sided periodic difference in space and backward Euler
in time, plus direct and adjoint gradients of the final-state mismatch
f(mu) = ||u_N(mu) - target||^2.
"""

import logging

from dataclasses import dataclass, asdict
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from data import (NumericalError, TimeGrid, SnapshotMatrix, GradientResult,
                  as_values)


LOGGER = logging.getLogger('main.burgers')

# pulse centres of the two-gaussian initial condition
CENTERS = (5.0, -5.0)


class SolverError(NumericalError):

    def __init__(self, message, residual_norm):
        super().__init__(message)
        self.residual_norm = residual_norm


@dataclass(frozen=True)
class BurgersConfig:
    x_min: float = -10.0
    x_max: float = 10.0
    dx: float = 0.02
    t_final: float = 1.0
    steps: int = 1000
    upwind: str = "backward"
    newton_tol: float = 1e-10
    newton_max_iter: int = 50

    def __post_init__(self):
        if not self.x_max > self.x_min or not self.dx > 0:
            raise ValueError("burgers: need x_max > x_min and dx > 0")
        cells = (self.x_max - self.x_min) / self.dx
        if abs(cells - round(cells)) > 1e-9 * max(cells, 1.0):
            raise ValueError("burgers: (x_max - x_min)/dx = %g is not an integer"
                             % cells)
        if self.upwind not in ("forward", "backward"):
            raise ValueError("burgers: upwind must be 'forward' or 'backward'")
        if not self.newton_tol > 0:
            raise ValueError("burgers: newton_tol must be > 0")
        if int(self.newton_max_iter) < 1:
            raise ValueError("burgers: newton_max_iter must be >= 1")
        # validates t_final and steps
        TimeGrid(self.t_final, self.steps)

    @classmethod
    def from_dict(cls, adict):
        unknown = set(adict) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError("burgers: unknown keys %s" % sorted(unknown))
        return cls(**adict)

    def to_dict(self):
        return asdict(self)

    @property
    def grid(self):
        return TimeGrid(self.t_final, self.steps)

    @property
    def n_points(self):
        return int(round((self.x_max - self.x_min) / self.dx))

    @property
    def x(self):
        n = self.n_points
        return self.x_min + (self.x_max - self.x_min) * np.arange(n) / n


@lru_cache(maxsize=8)
def difference_operator(cfg):
    """Periodic first-order one-sided difference D, (Du)_j ~ u_x(x_j)
    """
    n = cfg.n_points
    eye = sp.identity(n, format="csr")
    if cfg.upwind == "forward":
        # (u_{j+1} - u_j)/dx
        shift = sp.eye(n, k=1) + sp.eye(n, k=-(n - 1))
        D = (shift - eye) / cfg.dx
    else:
        # (u_j - u_{j-1})/dx
        shift = sp.eye(n, k=-1) + sp.eye(n, k=n - 1)
        D = (eye - shift) / cfg.dx
    return D.tocsr()


def _check_widths(mu):
    values = as_values(mu)
    if values.shape != (4,):
        raise ValueError("burgers initial condition needs mu = [a1, w1, a2, w2]")
    if values[1] <= 0 or values[3] <= 0:
        raise ValueError("burgers initial condition needs positive widths")
    return values


def initial_condition(mu, cfg):
    a1, w1, a2, w2 = _check_widths(mu)
    x = cfg.x
    return (a1 * np.exp(-(x - CENTERS[0]) ** 2 / (2 * w1 ** 2))
            + a2 * np.exp(-(x - CENTERS[1]) ** 2 / (2 * w2 ** 2)))


def initial_condition_gradient(mu, i, cfg):
    """Analytic partial dg/dmu_i of the initial condition
    """
    if not 0 <= i < 4:
        raise IndexError("parameter index %d out of range [0, 4)" % i)
    values = _check_widths(mu)
    pulse, amplitude = divmod(i, 2)
    a, w = values[2 * pulse], values[2 * pulse + 1]
    d2 = (cfg.x - CENTERS[pulse]) ** 2
    bump = np.exp(-d2 / (2 * w ** 2))
    if amplitude == 0:
        return bump
    return a * d2 / w ** 3 * bump


def initial_condition_jacobian(mu, cfg):
    """dg/dmu as an N_u x 4 matrix
    """
    return np.column_stack([initial_condition_gradient(mu, i, cfg)
                            for i in range(4)])


class InitialCondition:
    """Callable wrapper of g(mu) and dg/dmu for the latent model
    """

    n_params = 4

    def __init__(self, cfg):
        self.cfg = cfg

    def __call__(self, mu):
        return initial_condition(mu, self.cfg)

    def jacobian(self, mu):
        return initial_condition_jacobian(mu, self.cfg)


def residual(u_next, u_prev, cfg):
    D = difference_operator(cfg)
    return u_next - u_prev + cfg.grid.dt * u_next * (D @ u_next)


def fom_step_jacobians(u_prev, u_next, cfg):
    """(dr_n/du_n, dr_n/du_{n-1}) as sparse matrices
    """
    D = difference_operator(cfg)
    dt = cfg.grid.dt
    n = cfg.n_points
    J_n = (sp.identity(n) + dt * (sp.diags(D @ u_next) + sp.diags(u_next) @ D))
    J_prev = -sp.identity(n)
    return J_n.tocsc(), J_prev.tocsc()


def fom_step(u_prev, cfg):
    """One backward Euler step solved by Newton iteration on ||r||_inf
    """
    u_prev = np.asarray(u_prev, dtype=np.float64)
    if not np.all(np.isfinite(u_prev)):
        raise ValueError("fom_step: previous state has non-finite entries")
    u = u_prev.copy()
    norm = np.inf
    for it in range(cfg.newton_max_iter + 1):
        r = residual(u, u_prev, cfg)
        norm = np.abs(r).max() if r.size else 0.0
        if not np.isfinite(norm):
            break
        if norm <= cfg.newton_tol:
            return u
        if it == cfg.newton_max_iter:
            break
        J_n, _ = fom_step_jacobians(u_prev, u, cfg)
        u = u - splu(J_n).solve(r)
        LOGGER.debug("Newton iteration %d: |r| = %.3e" % (it + 1, norm))
    raise SolverError("Newton did not converge in %d iterations (|r| = %.3e)"
                      % (cfg.newton_max_iter, norm), norm)


def fom_solve(mu, cfg):
    grid = cfg.grid
    U = np.empty((grid.steps + 1, cfg.n_points))
    U[0] = initial_condition(mu, cfg)
    for n in range(1, grid.steps + 1):
        U[n] = fom_step(U[n - 1], cfg)
    return SnapshotMatrix(U, grid, as_values(mu))


def final_mismatch(u_final, target):
    diff = np.asarray(u_final) - np.asarray(target)
    return float(diff @ diff)


def fom_objective(mu, cfg, target):
    return final_mismatch(fom_solve(mu, cfg).final, target)


def fom_gradient_adjoint(mu, cfg, target, snapshots=None):
    """Backward recursion of the Lagrange multipliers, one transposed solve
    per time step regardless of the number of parameters
    """
    if snapshots is None:
        snapshots = fom_solve(mu, cfg)
    U = snapshots.data
    N = cfg.grid.steps
    f = final_mismatch(U[N], target)
    lam = 2.0 * (U[N] - np.asarray(target))
    for n in range(N, 0, -1):
        J_n, J_prev = fom_step_jacobians(U[n - 1], U[n], cfg)
        lam = splu(J_n).solve(lam, trans="T")
        # lambda_{n-1} right hand side: -J_prev^T lambda_n = lambda_n
        lam = -(J_prev.T @ lam)
    # dr_0/du_0 = I and dr_0/dmu = -dg/dmu
    grad = initial_condition_jacobian(mu, cfg).T @ lam
    return GradientResult(f, grad, "fom_adjoint",
                          {"residual_solves": N, "linear_solves": N,
                           "factorizations": N})


def fom_gradient_direct(mu, cfg, target, snapshots=None):
    """Forward recursion of du_n/dmu, one solve per step and parameter
    """
    if snapshots is None:
        snapshots = fom_solve(mu, cfg)
    U = snapshots.data
    N = cfg.grid.steps
    f = final_mismatch(U[N], target)
    S = initial_condition_jacobian(mu, cfg)
    for n in range(1, N + 1):
        J_n, J_prev = fom_step_jacobians(U[n - 1], U[n], cfg)
        S = splu(J_n).solve(-(J_prev @ S))
    grad = 2.0 * (U[N] - np.asarray(target)) @ S
    return GradientResult(f, grad, "fom_direct",
                          {"residual_solves": N, "linear_solves": N * S.shape[1],
                           "factorizations": N})
