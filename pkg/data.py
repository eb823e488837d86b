"""Shared domain types, snapshot persistence, noise injection and error
metrics.
"""

import os
import json
import logging
import itertools

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


LOGGER = logging.getLogger('main.data')

MAGIC = b"WLSD"
VERSION = 1
HEADER_DTYPE = np.dtype([("magic", "S4"), ("version", "<u4"),
                         ("rows", "<u8"), ("cols", "<u8")])
META_SUFFIX = ".meta.json"

GRADIENT_METHODS = ("reduced_direct", "reduced_adjoint", "fom_direct",
                    "fom_adjoint", "finite_difference")


class NumericalError(ArithmeticError):
    """Base class for numerical failures (solver, integration, fitting)
    """


class SnapshotFormatError(ValueError):
    pass


class SnapshotConsistencyError(ValueError):
    pass


def as_values(mu):
    """Return the float64 values of a ParameterVector or any array-like
    """
    return np.asarray(getattr(mu, "values", mu), dtype=np.float64)


def _frozen_array(x, ndim):
    a = np.array(x, dtype=np.float64)
    if a.ndim != ndim:
        raise ValueError("expected a %d-d array, got shape %s" % (ndim, a.shape))
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ParameterVector:
    values: np.ndarray

    def __post_init__(self):
        values = _frozen_array(self.values, 1)
        if not np.all(np.isfinite(values)):
            raise ValueError("parameter vector has non-finite entries")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.shape[0]

    def __str__(self):
        return "[%s]" % ", ".join("%.6g" % x for x in self.values)

    def tolist(self):
        return self.values.tolist()


@dataclass(frozen=True, eq=False)
class ParameterDomain:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = _frozen_array(self.lower, 1)
        upper = _frozen_array(self.upper, 1)
        if lower.shape != upper.shape:
            raise ValueError("domain bounds have different lengths")
        if not np.all(lower < upper):
            raise ValueError("domain needs lower < upper componentwise")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def n_params(self):
        return self.lower.shape[0]

    @property
    def width(self):
        return self.upper - self.lower

    def center(self):
        return ParameterVector(0.5 * (self.lower + self.upper))

    def validate(self, mu):
        values = as_values(mu)
        if values.shape != (self.n_params,):
            raise ValueError("parameter vector has length %d, domain needs %d"
                             % (values.size, self.n_params))
        return values

    def contains(self, mu):
        values = self.validate(mu)
        return bool(np.all(values >= self.lower) and np.all(values <= self.upper))

    def clamp(self, mu):
        return np.clip(as_values(mu), self.lower, self.upper)

    def distance(self, mu):
        """Euclidean distance from mu to the box
        """
        values = as_values(mu)
        return float(np.linalg.norm(values - self.clamp(values)))

    def sample(self, n, seed):
        rng = np.random.default_rng(seed)
        return self.lower + rng.random((n, self.n_params)) * self.width


@dataclass(frozen=True)
class TimeGrid:
    t_final: float
    steps: int

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("time grid needs an integer number of steps >= 1")
        if not self.t_final > 0:
            raise ValueError("time grid needs t_final > 0")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "t_final", float(self.t_final))

    @property
    def dt(self):
        return self.t_final / self.steps

    @property
    def times(self):
        return np.arange(self.steps + 1) * self.dt


@dataclass(frozen=True, eq=False)
class SnapshotMatrix:
    data: np.ndarray
    grid: TimeGrid
    mu: Optional[ParameterVector] = None

    def __post_init__(self):
        data = _frozen_array(self.data, 2)
        if data.shape[0] != self.grid.steps + 1:
            raise SnapshotConsistencyError(
                "snapshot has %d rows, time grid needs %d"
                % (data.shape[0], self.grid.steps + 1))
        if not np.all(np.isfinite(data)):
            raise ValueError("snapshot has non-finite entries")
        object.__setattr__(self, "data", data)
        if self.mu is not None and not isinstance(self.mu, ParameterVector):
            object.__setattr__(self, "mu", ParameterVector(self.mu))

    @property
    def shape(self):
        return self.data.shape

    @property
    def final(self):
        return self.data[-1]


@dataclass(frozen=True)
class NoiseSpec:
    ratio: float
    seed: int = 0
    scale: str = "rms"

    def __post_init__(self):
        if not self.ratio >= 0:
            raise ValueError("noise ratio must be >= 0")
        if self.scale not in ("rms", "frobenius"):
            raise ValueError("noise scale must be 'rms' or 'frobenius'")


@dataclass(frozen=True, eq=False)
class GradientResult:
    value: Optional[float]
    gradient: np.ndarray
    method: str
    cost: dict = field(default_factory=dict)

    def __post_init__(self):
        gradient = _frozen_array(self.gradient, 1)
        if not np.all(np.isfinite(gradient)):
            raise ValueError("gradient has non-finite entries")
        if self.method not in GRADIENT_METHODS:
            raise ValueError("unknown gradient method %s" % self.method)
        object.__setattr__(self, "gradient", gradient)


def parameter_grid(levels):
    """All combinations of the per-parameter levels, first parameter slowest
    """
    return [ParameterVector(x) for x in itertools.product(*levels)]


def noise_std(data, spec):
    norm = np.linalg.norm(data)
    if spec.scale == "frobenius":
        return spec.ratio * norm
    return spec.ratio * norm / np.sqrt(data.size)


def inject_noise(snapshots, spec):
    """Return a copy with i.i.d. zero-mean Gaussian noise added entrywise
    """
    if spec.ratio == 0:
        return SnapshotMatrix(snapshots.data, snapshots.grid, snapshots.mu)
    rng = np.random.default_rng(spec.seed)
    sigma = noise_std(snapshots.data, spec)
    noisy = snapshots.data + rng.normal(0.0, sigma, size=snapshots.data.shape)
    LOGGER.debug("Injected noise ratio %.3f, sigma %.3e" % (spec.ratio, sigma))
    return SnapshotMatrix(noisy, snapshots.grid, snapshots.mu)


def relative_param_error(mu_hat, mu_star):
    mu_hat = as_values(mu_hat)
    mu_star = as_values(mu_star)
    if mu_hat.shape != mu_star.shape:
        raise ValueError("parameter vectors have different lengths")
    denom = np.linalg.norm(mu_star)
    if denom == 0:
        raise ZeroDivisionError("reference parameter vector is zero")
    return float(np.linalg.norm(mu_hat - mu_star) / denom)


def write_matrix(path, array, meta=None):
    """Write a float64 matrix in the WLSD binary layout, plus a json sidecar
    """
    array = np.asarray(array, dtype=np.float64)
    if array.ndim == 1:
        array = array.reshape(1, -1)
    if array.ndim != 2:
        raise ValueError("only matrices can be written, got shape %s"
                         % (array.shape,))
    header = np.array([(MAGIC, VERSION) + array.shape], dtype=HEADER_DTYPE)
    with open(path, "wb") as out:
        out.write(header.tobytes())
        out.write(np.ascontiguousarray(array, dtype="<f8").tobytes())
    if meta is not None:
        with open(path + META_SUFFIX, "w") as out:
            json.dump(meta, out, sort_keys=True)


def read_matrix(path):
    """Read a matrix written by write_matrix; returns (array, meta or None)
    """
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size < HEADER_DTYPE.itemsize:
        raise SnapshotFormatError("%s: truncated header" % path)
    header = np.frombuffer(raw[:HEADER_DTYPE.itemsize].tobytes(),
                           dtype=HEADER_DTYPE)[0]
    if header["magic"] != MAGIC:
        raise SnapshotFormatError("%s: bad magic %r" % (path, header["magic"]))
    if header["version"] != VERSION:
        raise SnapshotFormatError("%s: unsupported version %d"
                                  % (path, header["version"]))
    rows, cols = int(header["rows"]), int(header["cols"])
    body = raw[HEADER_DTYPE.itemsize:]
    if body.size != rows * cols * 8:
        raise SnapshotFormatError("%s: header says %dx%d, payload has %d bytes"
                                  % (path, rows, cols, body.size))
    array = np.frombuffer(body.tobytes(), dtype="<f8").reshape(rows, cols)
    meta = None
    if os.path.exists(path + META_SUFFIX):
        with open(path + META_SUFFIX) as f:
            meta = json.load(f)
    return array.astype(np.float64), meta


def write_snapshot(snapshots, path):
    meta = {"t_final": snapshots.grid.t_final,
            "steps": snapshots.grid.steps,
            "mu": None if snapshots.mu is None else snapshots.mu.tolist()}
    write_matrix(path, snapshots.data, meta)


def read_snapshot(path):
    array, meta = read_matrix(path)
    if meta is None:
        raise SnapshotConsistencyError("%s: missing %s sidecar"
                                       % (path, META_SUFFIX))
    try:
        grid = TimeGrid(meta["t_final"], meta["steps"])
    except KeyError as e:
        raise SnapshotFormatError("%s: sidecar lacks %s" % (path, e))
    if array.shape[0] != grid.steps + 1:
        raise SnapshotConsistencyError(
            "%s: %d rows but sidecar declares %d steps"
            % (path, array.shape[0], grid.steps))
    return SnapshotMatrix(array, grid, meta.get("mu"))
