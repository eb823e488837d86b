"""Coefficient providers: W(mu) and dW/dmu_i for the latent ODE
dz/dt = W(mu)^T theta(z), built from weak- or strong-form fits on training
trajectories.

Providers are selected by name, e.g. ``get_provider_class("RBF")``.
"""

import os
import json
import logging
import importlib

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.spatial.distance import pdist, cdist
from sklearn.gaussian_process.kernels import ConstantKernel, RBF

from data import NumericalError, as_values, write_matrix, read_matrix
from dynamics import identify


LOGGER = logging.getLogger('main.coefficients')

PROVIDERS = ("Global", "Implicit", "RBF", "Convex", "GP")


class FitError(NumericalError):
    pass


@dataclass(frozen=True, eq=False)
class TrainingCoefficients:
    params: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        params = np.atleast_2d(np.asarray([as_values(p) for p in self.params]))
        coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if coeffs.ndim != 3 or params.shape[0] != coeffs.shape[0]:
            raise ValueError("need one J x d matrix per training parameter")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def size(self):
        return self.params.shape[0]

    @property
    def shape(self):
        return self.coeffs.shape[1:]

    @property
    def flat(self):
        return self.coeffs.reshape(self.size, -1)


class Provider:
    """Base class; subclasses implement evaluate and gradient
    """

    name = None

    def __init__(self, shape, n_params):
        self.shape = tuple(shape)
        self.n_params = n_params

    def _check_index(self, i):
        if not 0 <= i < self.n_params:
            raise IndexError("parameter index %d out of range [0, %d)"
                             % (i, self.n_params))

    def _mu(self, mu):
        values = as_values(mu)
        if values.shape != (self.n_params,):
            raise ValueError("parameter vector has length %d, provider needs %d"
                             % (values.size, self.n_params))
        return values

    def evaluate(self, mu):
        raise NotImplementedError

    def gradient(self, mu, i):
        raise NotImplementedError

    def jacobian(self, mu):
        """dW/dmu as an N_D x J x d array
        """
        if not self.n_params:
            return np.zeros((0,) + self.shape)
        return np.stack([self.gradient(mu, i) for i in range(self.n_params)])

    def hyperparameters(self):
        return {}

    def arrays(self):
        raise NotImplementedError

    def __str__(self):
        return "%s provider, W %dx%d" % ((self.name,) + self.shape)


class ProviderGlobal(Provider):
    """A single mu-independent W"""

    name = "Global"

    def __init__(self, W, n_params):
        W = np.asarray(W, dtype=np.float64)
        super().__init__(W.shape, n_params)
        self.W = W

    def evaluate(self, mu):
        self._mu(mu)
        return self.W.copy()

    def gradient(self, mu, i):
        self._check_index(i)
        return np.zeros(self.shape)

    def arrays(self):
        return {"W": self.W}

    @classmethod
    def from_state(cls, arrays, hyper):
        return cls(arrays["W"], hyper["n_params"])


class ProviderImplicit(ProviderGlobal):
    """A single W acting on the latent state augmented by mu"""

    name = "Implicit"


class ProviderRBF(Provider):

    name = "RBF"

    def __init__(self, params, alpha, shape, epsilon):
        super().__init__(shape, params.shape[1])
        self.params = params
        self.alpha = alpha
        self.epsilon = epsilon

    def _kernel(self, mu):
        r = cdist(mu[None, :], self.params)[0]
        return np.exp(-(self.epsilon * r) ** 2)

    def evaluate(self, mu):
        mu = self._mu(mu)
        return (self._kernel(mu) @ self.alpha).reshape(self.shape)

    def gradient(self, mu, i):
        self._check_index(i)
        mu = self._mu(mu)
        # phi'(r)/r = -2 eps^2 phi(r), finite at r = 0
        dphi = -2 * self.epsilon ** 2 * self._kernel(mu) \
            * (mu[i] - self.params[:, i])
        return (dphi @ self.alpha).reshape(self.shape)

    def hyperparameters(self):
        return {"epsilon": self.epsilon}

    def arrays(self):
        return {"params": self.params, "alpha": self.alpha}

    @classmethod
    def from_state(cls, arrays, hyper):
        return cls(arrays["params"], arrays["alpha"], hyper["shape"],
                   hyper["epsilon"])


class ProviderConvex(Provider):
    """Inverse squared Mahalanobis distance weighting of training W's
    """

    name = "Convex"

    def __init__(self, params, coeffs, covariance, fd_step=1e-6):
        super().__init__(coeffs.shape[1:], params.shape[1])
        self.params = params
        self.coeffs = coeffs
        self.covariance = covariance
        self.fd_step = fd_step
        try:
            self._factor = linalg.cho_factor(covariance)
        except linalg.LinAlgError as e:
            raise FitError("parameter covariance is not positive definite: %s"
                           % e)

    def _distances(self, mu):
        d = mu - self.params
        y = linalg.cho_solve(self._factor, d.T).T
        return np.einsum("kj,kj->k", d, y), y

    def _exact(self, r2):
        hits = np.flatnonzero(r2 == 0)
        return hits[0] if hits.size else None

    def weights(self, mu):
        mu = self._mu(mu)
        r2, _ = self._distances(mu)
        k = self._exact(r2)
        if k is not None:
            beta = np.zeros(len(r2))
            beta[k] = 1.0
            return beta
        inv = 1.0 / r2
        return inv / inv.sum()

    def evaluate(self, mu):
        return np.tensordot(self.weights(mu), self.coeffs, axes=1)

    def gradient(self, mu, i):
        self._check_index(i)
        mu = self._mu(mu)
        r2, y = self._distances(mu)
        if self._exact(r2) is not None:
            # closed form undefined at a training point: forward difference
            step = np.zeros_like(mu)
            step[i] = self.fd_step
            return (self.evaluate(mu + step) - self.evaluate(mu)) / self.fd_step
        inv = 1.0 / r2
        dinv = -2 * y[:, i] / r2 ** 2
        total = inv.sum()
        dbeta = (dinv * total - inv * dinv.sum()) / total ** 2
        return np.tensordot(dbeta, self.coeffs, axes=1)

    def hyperparameters(self):
        return {"fd_step": self.fd_step}

    def arrays(self):
        return {"params": self.params,
                "coeffs": self.coeffs.reshape(self.coeffs.shape[0], -1),
                "covariance": self.covariance}

    @classmethod
    def from_state(cls, arrays, hyper):
        coeffs = arrays["coeffs"].reshape((-1,) + tuple(hyper["shape"]))
        return cls(arrays["params"], coeffs, arrays["covariance"],
                   hyper["fd_step"])


class ProviderGP(Provider):
    """Independent zero-mean GP per coefficient entry, squared exponential
    kernel gamma exp(-|mu - mu'|^2 / (2 lambda^2)); predictive mean only
    """

    name = "GP"

    def __init__(self, params, alpha, amplitude, shape, lengthscale):
        super().__init__(shape, params.shape[1])
        self.params = params
        self.alpha = alpha
        self.amplitude = amplitude
        self.lengthscale = lengthscale
        self.kernel = ConstantKernel(1.0, "fixed") * RBF(lengthscale, "fixed")

    def _correlation(self, mu):
        return self.kernel(mu[None, :], self.params)[0]

    def evaluate(self, mu):
        mu = self._mu(mu)
        return (self.amplitude * (self._correlation(mu) @ self.alpha)
                ).reshape(self.shape)

    def gradient(self, mu, i):
        self._check_index(i)
        mu = self._mu(mu)
        dk = self._correlation(mu) * (self.params[:, i] - mu[i]) \
            / self.lengthscale ** 2
        return (self.amplitude * (dk @ self.alpha)).reshape(self.shape)

    def hyperparameters(self):
        return {"lengthscale": self.lengthscale}

    def arrays(self):
        return {"params": self.params, "alpha": self.alpha,
                "amplitude": self.amplitude}

    @classmethod
    def from_state(cls, arrays, hyper):
        return cls(arrays["params"], arrays["alpha"], arrays["amplitude"][0],
                   hyper["shape"], hyper["lengthscale"])


def get_provider_class(name):
    if name not in PROVIDERS:
        raise ValueError("unknown coefficient provider %s, expected one of %s"
                         % (name, ", ".join(PROVIDERS)))
    return getattr(importlib.import_module("coefficients"), "Provider%s" % name)


def fit_global(latents, library, fitter, n_params=0):
    """One W from the stacked fit of all trajectories
    """
    if not len(latents):
        raise ValueError("no training trajectories")
    dynamics = identify(list(latents), library, fitter)
    LOGGER.info("Fitted global W %s on %d trajectories"
                % (dynamics.W.shape, len(latents)))
    return ProviderGlobal(dynamics.W, n_params)


def augment(Z, mu):
    """Append the constant parameter vector to every latent row
    """
    Z = np.asarray(Z, dtype=np.float64)
    return np.hstack([Z, np.tile(as_values(mu), (Z.shape[0], 1))])


def fit_implicit(latents, params, library, fitter):
    params = np.atleast_2d(np.asarray([as_values(p) for p in params]))
    if len(latents) != params.shape[0]:
        raise ValueError("need one parameter vector per trajectory")
    n_params = params.shape[1] if params.size else 0
    if library.n_params != n_params:
        raise ValueError("library augments %d parameters, training has %d"
                         % (library.n_params, n_params))
    if n_params == 0:
        return fit_global(latents, library, fitter)
    data = [augment(Z, mu) for Z, mu in zip(latents, params)]
    dynamics = identify(data, library, fitter)
    LOGGER.info("Fitted implicit W %s on %d trajectories"
                % (dynamics.W.shape, len(latents)))
    return ProviderImplicit(dynamics.W, n_params)


def training_coefficients(latents, params, library, fitter):
    """One W per training trajectory
    """
    coeffs = [identify(Z, library, fitter).W for Z in latents]
    return TrainingCoefficients(params, np.stack(coeffs))


def _check_distinct(params):
    if params.shape[0] > 1 and pdist(params).min() == 0:
        raise FitError("duplicate training parameters")


def fit_rbf(tc, shape=None):
    """Gaussian RBF interpolation of the vectorized W's; the shape parameter
    defaults to the inverse median pairwise training distance
    """
    _check_distinct(tc.params)
    if shape is None:
        shape = 1.0 / np.median(pdist(tc.params)) if tc.size > 1 else 1.0
    if not shape > 0:
        raise ValueError("rbf shape parameter must be > 0")
    gram = np.exp(-(shape * cdist(tc.params, tc.params)) ** 2)
    try:
        alpha = linalg.solve(gram, tc.flat, assume_a="sym")
    except (linalg.LinAlgError, ValueError) as e:
        raise FitError("singular rbf kernel matrix: %s" % e)
    if not np.all(np.isfinite(alpha)):
        raise FitError("rbf weights are not finite")
    LOGGER.info("Fitted RBF provider on %d points, epsilon %.4g"
                % (tc.size, shape))
    return ProviderRBF(tc.params, alpha, tc.shape, float(shape))


def fit_convex(tc, fd_step=1e-6):
    if tc.size < 2:
        raise ValueError("convex interpolation needs at least 2 training points")
    _check_distinct(tc.params)
    n = tc.params.shape[1]
    S = np.atleast_2d(np.cov(tc.params.T))
    trace = np.trace(S)
    if not trace > 0:
        raise FitError("training parameters have zero spread")
    if np.linalg.cond(S) > 1e12:
        S = S + 1e-10 * trace / n * np.eye(n)
        LOGGER.warning("Parameter covariance near singular, jitter added")
    provider = ProviderConvex(tc.params, tc.coeffs, S, fd_step)
    LOGGER.info("Fitted convex provider on %d points" % tc.size)
    return provider


def fit_gp(tc, amplitude=None, lengthscale=None, jitter=1e-8):
    """GP predictive mean interpolation; the lengthscale defaults to the mean
    nearest-neighbour distance of the training parameters, the amplitude to
    the per-entry sample variance
    """
    _check_distinct(tc.params)
    if lengthscale is None:
        if tc.size > 1:
            dist = cdist(tc.params, tc.params)
            np.fill_diagonal(dist, np.inf)
            lengthscale = float(dist.min(axis=1).mean())
        else:
            lengthscale = 1.0
    if amplitude is None:
        amplitude = tc.flat.var(axis=0)
        amplitude[amplitude == 0] = 1.0
    amplitude = np.broadcast_to(np.asarray(amplitude, dtype=np.float64),
                                (tc.flat.shape[1],)).copy()
    if not lengthscale > 0 or not np.all(amplitude > 0):
        raise ValueError("gp needs lengthscale > 0 and amplitude > 0")
    kernel = ConstantKernel(1.0, "fixed") * RBF(lengthscale, "fixed")
    # per entry the gram matrix is gamma (R + jitter I); gamma cancels in
    # the solve up to the 1/gamma scaling of alpha
    R = kernel(tc.params) + jitter * np.eye(tc.size)
    if np.linalg.cond(R) > 1e15:
        raise FitError("gp kernel matrix is ill conditioned beyond jitter")
    try:
        factor = linalg.cho_factor(R)
    except linalg.LinAlgError as e:
        raise FitError("gp kernel matrix is not positive definite: %s" % e)
    alpha = linalg.cho_solve(factor, tc.flat) / amplitude
    LOGGER.info("Fitted GP provider on %d points, lengthscale %.4g"
                % (tc.size, lengthscale))
    return ProviderGP(tc.params, alpha, amplitude, tc.shape, lengthscale)


def fit_provider(name, latents, params, library, fitter, options=None):
    """Fit the named provider on training latents

    :param fitter: TestFunctionBasis (weak form) or TimeGrid (strong form)
    :param options: rbf_shape, gp_amplitude, gp_lengthscale, gp_jitter
    """
    options = options or {}
    get_provider_class(name)
    params = np.atleast_2d(np.asarray([as_values(p) for p in params]))
    if name == "Global":
        return fit_global(latents, library, fitter, params.shape[1])
    if name == "Implicit":
        return fit_implicit(latents, params, library, fitter)
    tc = training_coefficients(latents, params, library, fitter)
    if name == "RBF":
        return fit_rbf(tc, options.get("rbf_shape"))
    if name == "Convex":
        return fit_convex(tc)
    return fit_gp(tc, options.get("gp_amplitude"),
                  options.get("gp_lengthscale"),
                  options.get("gp_jitter", 1e-8))


def save_provider(provider, path):
    """Write the provider state into directory path
    """
    if not os.path.exists(path):
        os.makedirs(path)
    hyper = dict(provider.hyperparameters(), name=provider.name,
                 shape=list(provider.shape), n_params=provider.n_params)
    arrays = provider.arrays()
    for key, value in arrays.items():
        write_matrix(os.path.join(path, key + ".bin"), np.atleast_2d(value))
    hyper["arrays"] = sorted(arrays)
    with open(os.path.join(path, "provider.json"), "w") as out:
        json.dump(hyper, out, sort_keys=True)


def load_provider(path):
    with open(os.path.join(path, "provider.json")) as f:
        hyper = json.load(f)
    arrays = {key: read_matrix(os.path.join(path, key + ".bin"))[0]
              for key in hyper["arrays"]}
    return get_provider_class(hyper["name"]).from_state(arrays, hyper)
