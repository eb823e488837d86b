"""Latent dynamics identification: polynomial feature library, compactly
supported test functions, weak-form (WENDy-OLS) and strong-form (SINDy)
least squares fits of dz/dt = W^T theta(z).
"""

import logging
import warnings

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg
from sklearn.preprocessing import PolynomialFeatures

from data import TimeGrid, write_matrix, read_matrix


LOGGER = logging.getLogger('main.dynamics')


class RankDeficiencyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FeatureLibrary:
    """Polynomial features of degree 1 or 2 of the acting state; the state is
    [z; mu] of length latent_dim + n_params when n_params > 0
    """
    latent_dim: int
    degree: int = 1
    n_params: int = 0

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise ValueError("feature library degree must be 1 or 2")
        if self.latent_dim < 1 or self.n_params < 0:
            raise ValueError("feature library needs latent_dim >= 1, "
                             "n_params >= 0")

    @property
    def augmented(self):
        return self.n_params > 0

    @property
    def dim(self):
        return self.latent_dim + self.n_params

    @cached_property
    def powers(self):
        """J x dim exponent table; constant, linear, then v_i v_j for i <= j
        """
        poly = PolynomialFeatures(self.degree).fit(np.zeros((1, self.dim)))
        return poly.powers_.astype(np.int64)

    @property
    def n_features(self):
        return self.powers.shape[0]

    def _check(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape[-1] != self.dim:
            raise ValueError("state has %d entries, library acts on %d"
                             % (v.shape[-1], self.dim))
        return v

    def evaluate(self, v):
        """theta(v); rows of a 2-d v are evaluated independently
        """
        v = self._check(v)
        return np.prod(v[..., None, :] ** self.powers, axis=-1)

    def jacobian(self, v):
        """J x dim matrix d theta / d v at a single state
        """
        v = self._check(v)
        if v.ndim != 1:
            raise ValueError("library jacobian takes a single state")
        jac = np.zeros((self.n_features, self.dim))
        for k in range(self.dim):
            p = self.powers[:, k]
            rows = p > 0
            lowered = self.powers[rows].copy()
            lowered[:, k] -= 1
            jac[rows, k] = p[rows] * np.prod(v ** lowered, axis=-1)
        return jac


@dataclass(frozen=True, eq=False)
class TestFunctionBasis:
    """Rows of phi and phi_dot are test functions and their time derivatives
    on the grid, multiplied by the trapezoidal weights
    """
    phi: np.ndarray
    phi_dot: np.ndarray
    support_radius: int
    degree: int
    centers: np.ndarray

    __test__ = False

    @property
    def count(self):
        return self.phi.shape[0]

    @property
    def n_times(self):
        return self.phi.shape[1]


def trapezoid_weights(grid):
    q = np.full(grid.steps + 1, grid.dt)
    q[0] = q[-1] = grid.dt / 2
    return q


def build_test_functions(grid, count=200, radius_frac=0.1, degree=3):
    """Piecewise polynomial bumps (1 - s^2)^p, s = (t - t_c)/(r dt), with
    centres spread uniformly so every support lies inside [0, T]
    """
    N = grid.steps
    r = max(2, int(round(radius_frac * N)))
    if count < 1:
        raise ValueError("test functions: count must be >= 1")
    if degree < 2:
        raise ValueError("test functions: degree must be >= 2")
    if 2 * r > N:
        raise ValueError("test functions: support of radius %d steps does not "
                         "fit into %d steps" % (r, N))
    centers = np.rint(np.linspace(r, N - r, count)).astype(np.int64)
    s = (np.arange(N + 1)[None, :] - centers[:, None]) / r
    inside = np.abs(s) < 1
    base = np.where(inside, 1 - s ** 2, 0.0)
    phi = base ** degree
    phi_dot = -2 * degree * s * base ** (degree - 1) / (r * grid.dt)
    phi_dot[~inside] = 0.0
    q = trapezoid_weights(grid)
    phi = phi * q
    phi_dot = phi_dot * q
    scale = np.linalg.norm(phi, axis=1, keepdims=True)
    return TestFunctionBasis(phi / scale, phi_dot / scale, r, degree, centers)


@dataclass(frozen=True, eq=False)
class IdentifiedDynamics:
    W: np.ndarray
    library: FeatureLibrary

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        if W.shape != (self.library.n_features, self.library.dim):
            raise ValueError("W has shape %s, library needs %s"
                             % (W.shape, (self.library.n_features,
                                          self.library.dim)))
        if not np.all(np.isfinite(W)):
            raise ValueError("identified coefficients are not finite")
        object.__setattr__(self, "W", W)

    def rhs(self, v):
        return self.library.evaluate(v) @ self.W

    def save(self, path):
        lib = self.library
        write_matrix(path, self.W, {"latent_dim": lib.latent_dim,
                                    "degree": lib.degree,
                                    "n_params": lib.n_params,
                                    "augmented": lib.augmented})

    @classmethod
    def load(cls, path):
        W, meta = read_matrix(path)
        lib = FeatureLibrary(meta["latent_dim"], meta["degree"],
                             meta["n_params"])
        return cls(W, lib)


def _least_squares(G, B):
    if G.shape[0] < G.shape[1]:
        LOGGER.warning("Underdetermined fit: %d rows for %d features"
                       % G.shape)
    # columns equal up to round-off count as dependent
    cond = max(G.shape) * np.finfo(np.float64).eps
    W, _, rank, _ = linalg.lstsq(G, B, cond=cond, lapack_driver="gelsy")
    if rank < G.shape[1]:
        msg = "feature matrix has rank %d < %d, minimum-norm solution used" % (
            rank, G.shape[1])
        LOGGER.warning(msg)
        warnings.warn(msg, RankDeficiencyWarning)
    return W


def _as_list(Z):
    if isinstance(Z, np.ndarray) and Z.ndim == 2:
        return [Z]
    return [np.asarray(z, dtype=np.float64) for z in Z]


def weak_system(Z, library, basis):
    """G = Phi theta(Z), B = -Phi_dot Z for one trajectory
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape[0] != basis.n_times:
        raise ValueError("trajectory has %d rows, test functions need %d"
                         % (Z.shape[0], basis.n_times))
    if not np.all(np.isfinite(Z)):
        raise ValueError("trajectory has non-finite entries")
    return basis.phi @ library.evaluate(Z), -basis.phi_dot @ Z


def wendy_fit(Z, library, basis):
    """Weak-form ordinary least squares; a list of trajectories shares one W
    """
    systems = [weak_system(z, library, basis) for z in _as_list(Z)]
    G = np.vstack([g for g, _ in systems])
    B = np.vstack([b for _, b in systems])
    W = _least_squares(G, B)
    LOGGER.debug("Weak fit: G %s, relative residual %.3e"
                 % (G.shape, np.linalg.norm(B - G @ W)
                    / max(np.linalg.norm(B), 1e-300)))
    return IdentifiedDynamics(W, library)


def sindy_fit(Z, library, grid):
    """Strong-form least squares against second order finite differences,
    without sparsity thresholding
    """
    if grid.steps < 2:
        raise ValueError("strong-form fit needs at least 2 time steps")
    thetas, derivatives = [], []
    for z in _as_list(Z):
        if z.shape[0] != grid.steps + 1:
            raise ValueError("trajectory has %d rows, grid needs %d"
                             % (z.shape[0], grid.steps + 1))
        thetas.append(library.evaluate(z))
        derivatives.append(np.gradient(z, grid.dt, axis=0, edge_order=2))
    return IdentifiedDynamics(_least_squares(np.vstack(thetas),
                                             np.vstack(derivatives)), library)


def identify(Z, library, fitter):
    """Weak form when fitter is a TestFunctionBasis, strong form for a
    TimeGrid
    """
    if isinstance(fitter, TestFunctionBasis):
        return wendy_fit(Z, library, fitter)
    if isinstance(fitter, TimeGrid):
        return sindy_fit(Z, library, fitter)
    raise TypeError("cannot identify dynamics with %r" % type(fitter))
