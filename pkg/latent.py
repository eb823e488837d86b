"""Latent reduced-order model: explicit Runge-Kutta integration of
dv/dt = W(mu)^T theta(v), decoding, reduced residuals and their partial
derivatives with respect to the previous state and the parameters.

The latent state v is z, or [z; mu] for the implicit (augmented) provider.
"""

import logging

from dataclasses import dataclass

import numpy as np

from data import NumericalError, SnapshotMatrix, TimeGrid, as_values


LOGGER = logging.getLogger('main.latent')

# abort when |v|_inf exceeds this multiple of max(|v_0|_inf, 1)
BLOWUP_FACTOR = 1e6


class IntegrationError(NumericalError):

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True, eq=False)
class ButcherTableau:
    a: np.ndarray
    b: np.ndarray
    name: str = ""

    def __post_init__(self):
        a = np.array(self.a, dtype=np.float64)
        b = np.array(self.b, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or b.shape != (a.shape[0],):
            raise ValueError("tableau needs an s x s matrix a and s weights b")
        if np.any(np.triu(a) != 0):
            raise ValueError("tableau is not explicit")
        if abs(b.sum() - 1) > 1e-14:
            raise ValueError("tableau weights do not sum to 1")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def stages(self):
        return self.b.shape[0]


TABLEAUS = {
    "euler": ButcherTableau([[0.0]], [1.0], "euler"),
    "heun": ButcherTableau([[0.0, 0.0],
                            [1.0, 0.0]], [0.5, 0.5], "heun"),
    "rk4": ButcherTableau([[0.0, 0.0, 0.0, 0.0],
                           [0.5, 0.0, 0.0, 0.0],
                           [0.0, 0.5, 0.0, 0.0],
                           [0.0, 0.0, 1.0, 0.0]],
                          [1 / 6, 1 / 3, 1 / 3, 1 / 6], "rk4"),
}


def get_tableau(name):
    try:
        return TABLEAUS[name]
    except KeyError:
        raise ValueError("unknown tableau %s, expected one of %s"
                         % (name, ", ".join(sorted(TABLEAUS))))


@dataclass(frozen=True, eq=False)
class LatentModel:
    """
    :param initial: callable g(mu) with a jacobian(mu) method (N_u x N_D)
    """
    reducer: object
    library: object
    provider: object
    tableau: ButcherTableau
    grid: TimeGrid
    initial: object

    def __post_init__(self):
        lib = self.library
        if lib.latent_dim != self.reducer.latent_dim:
            raise ValueError("library acts on %d latents, reducer has %d"
                             % (lib.latent_dim, self.reducer.latent_dim))
        if tuple(self.provider.shape) != (lib.n_features, lib.dim):
            raise ValueError("provider W has shape %s, library needs %s"
                             % (self.provider.shape, (lib.n_features, lib.dim)))
        if lib.augmented and lib.n_params != self.provider.n_params:
            raise ValueError("library augments %d parameters, provider takes %d"
                             % (lib.n_params, self.provider.n_params))

    @property
    def augmented(self):
        return self.library.augmented

    @property
    def dim(self):
        return self.library.dim

    @property
    def n_params(self):
        return self.provider.n_params

    def coefficients(self, mu):
        return self.provider.evaluate(mu)


def latent_initial(model, mu):
    """(v_0, dv_0/dmu) with v_0 = encode(g(mu)), augmented by mu
    """
    values = as_values(mu)
    z0 = model.reducer.encode(model.initial(values))
    dz0 = model.reducer.encoder_jacobian() @ model.initial.jacobian(values)
    if not model.augmented:
        return z0, dz0
    return (np.concatenate([z0, values]),
            np.vstack([dz0, np.eye(values.size)]))


def _stages(model, W, z_prev):
    lib = model.library
    tab = model.tableau
    dt = model.grid.dt
    Y = np.empty((tab.stages, z_prev.size))
    K = np.empty((tab.stages, z_prev.size))
    for j in range(tab.stages):
        Y[j] = z_prev + dt * (tab.a[j, :j] @ K[:j])
        K[j] = lib.evaluate(Y[j]) @ W
    return Y, K


def rk_step(model, W, z_prev, step=None):
    """One explicit Runge-Kutta step; returns (z_next, (stage args, stages))
    """
    Y, K = _stages(model, W, z_prev)
    if not np.all(np.isfinite(K)):
        raise IntegrationError("non-finite stage values at step %s" % step,
                               step)
    return z_prev + model.grid.dt * (model.tableau.b @ K), (Y, K)


def integrate_latent(model, mu, return_stages=False):
    """Latent trajectory (N+1) x d with W(mu) frozen over the horizon
    """
    W = model.coefficients(mu)
    z0, _ = latent_initial(model, mu)
    N = model.grid.steps
    Z = np.empty((N + 1, z0.size))
    Z[0] = z0
    bound = BLOWUP_FACTOR * max(np.abs(z0).max(initial=0), 1.0)
    stages = []
    for n in range(1, N + 1):
        Z[n], cache = rk_step(model, W, Z[n - 1], n)
        norm = np.abs(Z[n]).max()
        if not np.isfinite(norm) or norm > bound:
            raise IntegrationError("latent state blew up at step %d "
                                   "(|z| = %.3e)" % (n, norm), n)
        if return_stages:
            stages.append(cache)
    if return_stages:
        return Z, stages
    return Z


def predict_full(model, mu):
    Z = integrate_latent(model, mu)
    U = model.reducer.decode(Z[:, :model.reducer.latent_dim])
    return SnapshotMatrix(U, model.grid, as_values(mu))


def residual(model, W, z_prev, z_next):
    """Reduced residual z_n - z_{n-1} - dt sum_j b_j k_j
    """
    step, _ = rk_step(model, W, z_prev)
    return z_next - step


def initial_residual(model, mu, z0):
    v0, _ = latent_initial(model, mu)
    return z0 - v0


def stage_derivatives(model, W, dW, z_prev, stages=None):
    """Stage sensitivities (dk_j/dz_{n-1}, dk_j/dmu)

    :param dW: dW/dmu_i as J x d, or dW/dmu for all parameters as P x J x d
    :returns: arrays s x d x d and s x d (or s x d x P)
    """
    dW = np.asarray(dW, dtype=np.float64)
    single = dW.ndim == 2
    if single:
        dW = dW[None]
    lib = model.library
    tab = model.tableau
    dt = model.grid.dt
    d = z_prev.size
    Y, _ = stages if stages is not None else _stages(model, W, z_prev)
    dk_dz = np.zeros((tab.stages, d, d))
    dk_dmu = np.zeros((tab.stages, d, dW.shape[0]))
    eye = np.eye(d)
    for j in range(tab.stages):
        WtJ = W.T @ lib.jacobian(Y[j])
        dy_dz = eye + dt * np.tensordot(tab.a[j, :j], dk_dz[:j], axes=1)
        dy_dmu = dt * np.tensordot(tab.a[j, :j], dk_dmu[:j], axes=1)
        dk_dz[j] = WtJ @ dy_dz
        theta = lib.evaluate(Y[j])
        dk_dmu[j] = np.einsum("pjd,j->dp", dW, theta) + WtJ @ dy_dmu
    if single:
        return dk_dz, dk_dmu[:, :, 0]
    return dk_dz, dk_dmu


def reduced_residual_partials(model, W, dW, z_prev, stages=None):
    """(dr_n/dz_n, dr_n/dz_{n-1}, dr_n/dmu) for n >= 1
    """
    dk_dz, dk_dmu = stage_derivatives(model, W, dW, z_prev, stages)
    b = model.tableau.b
    dt = model.grid.dt
    d = z_prev.size
    dr_dprev = -np.eye(d) - dt * np.tensordot(b, dk_dz, axes=1)
    dr_dmu = -dt * np.tensordot(b, dk_dmu, axes=1)
    return np.eye(d), dr_dprev, dr_dmu


def initial_residual_partials(model, mu):
    """(dr_0/dz_0, dr_0/dmu) with dr_0/dmu = -dv_0/dmu
    """
    v0, dv0 = latent_initial(model, mu)
    return np.eye(v0.size), -dv0
