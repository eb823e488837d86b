"""Box-constrained minimizers consuming objective / gradient callables:
BFGS with Armijo backtracking, Nelder-Mead, differential evolution, and the
RBF interpolant of the objective used as a data-fit baseline.

Optimizers are selected by name, e.g. ``get_optimizer("BFGS", settings)``.
"""

import time
import logging
import importlib

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RBFInterpolator
from scipy.spatial.distance import pdist

from data import ParameterDomain, ParameterVector, as_values


LOGGER = logging.getLogger('main.optimizers')

OPTIMIZERS = ("BFGS", "NelderMead", "DifferentialEvolution")


class CountingEvaluator:
    """Callable wrapper counting invocations of fn"""

    def __init__(self, fn):
        self.fn = fn
        self.count = 0

    def __call__(self, x):
        self.count += 1
        return self.fn(x)


@dataclass
class OptProblem:
    domain: ParameterDomain
    evaluate: Callable
    x0: ParameterVector
    gradient: Optional[Callable] = None

    def __post_init__(self):
        if not isinstance(self.x0, ParameterVector):
            self.x0 = ParameterVector(self.x0)
        if not self.domain.contains(self.x0):
            raise ValueError("starting point %s outside the domain" % self.x0)


@dataclass
class OptResult:
    mu_hat: ParameterVector
    f_hat: float
    n_func: int
    n_grad: int
    wall_seconds: float
    converged: bool
    trace: list = field(default_factory=list)
    message: str = ""

    def __str__(self):
        return ("mu = %s, f = %.6g, %d function and %d gradient evaluations, "
                "%.2f s%s" % (self.mu_hat, self.f_hat, self.n_func, self.n_grad,
                              self.wall_seconds,
                              "" if self.converged else " (not converged)"))


class _Penalized:
    """f(clamp(x)) + rho dist(x, D)^2 and its gradient"""

    def __init__(self, problem, fun, grad=None):
        self.domain = problem.domain
        self.fun = fun
        self.grad = grad
        self.rho = None

    def value(self, x):
        c = self.domain.clamp(x)
        f = self.fun(c)
        gap = x - c
        return f + (self.rho or 0.0) * (gap @ gap), f

    def gradient(self, x):
        c = self.domain.clamp(x)
        inside = (x >= self.domain.lower) & (x <= self.domain.upper)
        return np.asarray(self.grad(c)) * inside + 2 * (self.rho or 0.0) * (x - c)


def bfgs_minimize(problem, cfg):
    """BFGS on the inverse Hessian with backtracking Armijo line search;
    bounds by clamping plus a quadratic penalty on the distance to the box
    """
    if problem.gradient is None:
        raise ValueError("bfgs needs a gradient")
    start = time.perf_counter()
    fun = CountingEvaluator(problem.evaluate)
    grad = CountingEvaluator(problem.gradient)
    pen = _Penalized(problem, fun, grad)
    max_step = cfg.get("max_step") or float(problem.domain.width.max())

    x = problem.x0.values.copy()
    F, f = pen.value(x)
    pen.rho = 1e3 * abs(f) + 1.0
    g = pen.gradient(x)
    H = np.eye(x.size)
    trace = [(x.tolist(), f)]
    converged = bool(np.abs(g).max() <= cfg["grad_tol"])
    message = "gradient tolerance reached" if converged else ""
    it = 0
    while not converged and it < cfg["max_iter"]:
        it += 1
        p = -H @ g
        slope = g @ p
        if slope >= 0:
            H = np.eye(x.size)
            p = -g
            slope = g @ p
        norm = np.linalg.norm(p)
        if norm > max_step:
            p *= max_step / norm
            slope *= max_step / norm
        t = 1.0
        while True:
            F_new, f_new = pen.value(x + t * p)
            if F_new <= F + cfg["armijo"] * t * slope:
                break
            t *= cfg["backtrack"]
            if t < cfg["min_step"]:
                break
        if t < cfg["min_step"]:
            message = "line search failed"
            break
        s = t * p
        x = x + s
        g_new = pen.gradient(x)
        y = g_new - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if it == 1:
                H = (sy / (y @ y)) * np.eye(x.size)
            rho = 1.0 / sy
            V = np.eye(x.size) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        F, f, g = F_new, f_new, g_new
        trace.append((x.tolist(), f))
        LOGGER.debug("BFGS iteration %d: f = %.6e, |g| = %.3e, step %.3g"
                     % (it, f, np.abs(g).max(), t))
        if np.abs(g).max() <= cfg["grad_tol"]:
            converged = True
            message = "gradient tolerance reached"
    if not message:
        message = "iteration limit reached"
    mu_hat = problem.domain.clamp(x)
    return OptResult(ParameterVector(mu_hat), f, fun.count, grad.count,
                     time.perf_counter() - start, converged, trace, message)


def nelder_mead_minimize(problem, cfg):
    """Simplex search with reflection 1, expansion 2, contraction 0.5 and
    shrink 0.5; trial points are clamped into the domain
    """
    start = time.perf_counter()
    fun = CountingEvaluator(problem.evaluate)
    domain = problem.domain
    x0 = problem.x0.values
    n = x0.size
    simplex = [x0.copy()]
    for i in range(n):
        x = x0.copy()
        x[i] += cfg["initial_step"] * domain.width[i]
        if x[i] > domain.upper[i]:
            x[i] = x0[i] - cfg["initial_step"] * domain.width[i]
        simplex.append(domain.clamp(x))
    simplex = np.array(simplex)
    values = np.array([fun(x) for x in simplex])

    def evaluate(x):
        x = domain.clamp(x)
        return x, fun(x)

    converged = False
    trace = []
    it = 0
    while it < cfg["max_iter"]:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        trace.append((simplex[0].tolist(), float(values[0])))
        diameter = np.abs(simplex[1:] - simplex[0]).max()
        if diameter <= cfg["tol"]:
            converged = True
            break
        it += 1
        centroid = simplex[:-1].mean(axis=0)
        xr, fr = evaluate(centroid + (centroid - simplex[-1]))
        if values[0] <= fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[0]:
            xe, fe = evaluate(centroid + 2.0 * (xr - centroid))
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-1]:
            xc, fc = evaluate(centroid + 0.5 * (xr - centroid))
            accept = fc <= fr
        else:
            xc, fc = evaluate(centroid + 0.5 * (simplex[-1] - centroid))
            accept = fc < values[-1]
        if accept:
            simplex[-1], values[-1] = xc, fc
            continue
        for i in range(1, n + 1):
            simplex[i], values[i] = evaluate(
                simplex[0] + 0.5 * (simplex[i] - simplex[0]))
    best = int(np.argmin(values))
    LOGGER.debug("Nelder-Mead: %d iterations, %d evaluations" % (it, fun.count))
    return OptResult(ParameterVector(simplex[best]), float(values[best]),
                     fun.count, 0, time.perf_counter() - start, converged,
                     trace, "simplex tolerance reached" if converged
                     else "iteration limit reached")


def differential_evolution(problem, cfg):
    """DE/rand/1/bin; trial vectors of a generation are built from the
    previous generation and evaluated in index order
    """
    if cfg["pop"] < 4:
        raise ValueError("differential evolution needs pop >= 4")
    start = time.perf_counter()
    fun = CountingEvaluator(problem.evaluate)
    domain = problem.domain
    rng = np.random.default_rng(cfg["seed"])
    n = domain.n_params
    pop = domain.lower + rng.random((cfg["pop"], n)) * domain.width
    pop[0] = problem.x0.values
    fitness = np.array([fun(x) for x in pop])
    converged = False
    trace = []
    for gen in range(cfg["max_gen"]):
        trials = np.empty_like(pop)
        for i in range(cfg["pop"]):
            others = [k for k in range(cfg["pop"]) if k != i]
            a, b, c = rng.choice(others, 3, replace=False)
            mutant = np.clip(pop[a] + cfg["F"] * (pop[b] - pop[c]),
                             domain.lower, domain.upper)
            cross = rng.random(n) < cfg["CR"]
            cross[rng.integers(n)] = True
            trials[i] = np.where(cross, mutant, pop[i])
        trial_fitness = np.array([fun(x) for x in trials])
        better = trial_fitness < fitness
        pop[better] = trials[better]
        fitness[better] = trial_fitness[better]
        best = int(np.argmin(fitness))
        trace.append((pop[best].tolist(), float(fitness[best])))
        if fitness.max() - fitness.min() <= cfg["tol"]:
            converged = True
            break
    best = int(np.argmin(fitness))
    LOGGER.debug("Differential evolution: %d generations, %d evaluations"
                 % (len(trace), fun.count))
    return OptResult(ParameterVector(pop[best]), float(fitness[best]),
                     fun.count, 0, time.perf_counter() - start, converged,
                     trace, "population collapsed" if converged
                     else "generation limit reached")


class RBFObjective:
    """Scalar RBF interpolant of objective values over the domain
    """

    def __init__(self, params, values, kernel="gaussian", epsilon=None):
        params = np.atleast_2d(np.asarray([as_values(p) for p in params]))
        values = np.asarray(values, dtype=np.float64)
        if epsilon is None:
            epsilon = 1.0 / np.median(pdist(params)) if len(params) > 1 else 1.0
        self.kernel = kernel
        self.epsilon = float(epsilon)
        if len(params) > 1 and pdist(params).min() == 0:
            raise np.linalg.LinAlgError("duplicate rbf centres, singular system")
        self.interpolator = RBFInterpolator(params, values, kernel=kernel,
                                            epsilon=self.epsilon)

    def __call__(self, mu):
        return float(self.interpolator(as_values(mu)[None, :])[0])


def rbf_objective_surrogate(training_mus, training_fs, kernel="gaussian"):
    return RBFObjective(training_mus, training_fs, kernel)


class Optimizer:
    """Base class; settings dict keys become attributes"""

    name = None
    requires_gradient = False

    def __init__(self, adict):
        self.vals = dict(adict)
        for k, v in adict.items():
            setattr(self, k, v)

    def minimize(self, problem):
        raise NotImplementedError

    def __str__(self):
        return "%s %s" % (self.name, self.vals)


class OptimizerBFGS(Optimizer):

    name = "BFGS"
    requires_gradient = True

    def minimize(self, problem):
        return bfgs_minimize(problem, self.vals)


class OptimizerNelderMead(Optimizer):

    name = "NelderMead"

    def minimize(self, problem):
        return nelder_mead_minimize(problem, self.vals)


class OptimizerDifferentialEvolution(Optimizer):

    name = "DifferentialEvolution"

    def minimize(self, problem):
        return differential_evolution(problem, self.vals)


def get_optimizer(name, adict):
    if name not in OPTIMIZERS:
        raise ValueError("unknown optimizer %s, expected one of %s"
                         % (name, ", ".join(OPTIMIZERS)))
    Optimizer = getattr(importlib.import_module("optimizers"),
                        "Optimizer%s" % name)
    return Optimizer(adict)
