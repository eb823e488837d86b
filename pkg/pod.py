"""Linear compression by proper orthogonal decomposition
"""

import logging

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from data import SnapshotMatrix, write_matrix, read_matrix


LOGGER = logging.getLogger('main.pod')


def stack_snapshots(training):
    """Stack a SnapshotMatrix, a list of them or a plain array row-wise
    """
    if isinstance(training, SnapshotMatrix):
        return training.data
    if isinstance(training, (list, tuple)):
        if not training:
            raise ValueError("no training snapshots")
        return np.vstack([getattr(s, "data", s) for s in training])
    return np.atleast_2d(np.asarray(training, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class LinearReducer:
    basis: np.ndarray
    mean: Optional[np.ndarray] = None

    def __post_init__(self):
        basis = np.array(self.basis, dtype=np.float64)
        if basis.ndim != 2 or basis.shape[1] > basis.shape[0]:
            raise ValueError("basis must be N_u x N_z with N_z <= N_u")
        err = np.abs(basis.T @ basis - np.eye(basis.shape[1])).max(initial=0)
        if err > 1e-10:
            raise ValueError("basis columns are not orthonormal (%.2e)" % err)
        basis.flags.writeable = False
        object.__setattr__(self, "basis", basis)
        if self.mean is not None:
            mean = np.array(self.mean, dtype=np.float64)
            if mean.shape != (basis.shape[0],):
                raise ValueError("mean has shape %s, basis needs (%d,)"
                                 % (mean.shape, basis.shape[0]))
            mean.flags.writeable = False
            object.__setattr__(self, "mean", mean)

    @property
    def full_dim(self):
        return self.basis.shape[0]

    @property
    def latent_dim(self):
        return self.basis.shape[1]

    @property
    def centered(self):
        return self.mean is not None

    def encode(self, u):
        u = np.asarray(u, dtype=np.float64)
        if u.shape[-1] != self.full_dim:
            raise ValueError("state has %d entries, reducer needs %d"
                             % (u.shape[-1], self.full_dim))
        if self.mean is not None:
            u = u - self.mean
        return u @ self.basis

    def decode(self, z):
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-1] != self.latent_dim:
            raise ValueError("latent state has %d entries, reducer needs %d"
                             % (z.shape[-1], self.latent_dim))
        u = z @ self.basis.T
        if self.mean is not None:
            u = u + self.mean
        return u

    def encoder_jacobian(self):
        return self.basis.T

    def decoder_jacobian(self):
        return self.basis

    def save(self, path):
        write_matrix(path, self.basis, {"latent_dim": self.latent_dim,
                                        "centered": self.centered})
        if self.centered:
            write_matrix(path + ".mean", self.mean)

    @classmethod
    def load(cls, path):
        basis, meta = read_matrix(path)
        mean = None
        if meta and meta.get("centered"):
            mean = read_matrix(path + ".mean")[0][0]
        return cls(basis, mean)


def energy_rank(singular_values, fraction):
    """Smallest k whose leading squared singular values reach the fraction
    """
    if not 0 < fraction <= 1:
        raise ValueError("energy fraction must lie in (0, 1]")
    energy = singular_values ** 2
    total = energy.sum()
    if total == 0:
        raise ValueError("training data have zero energy")
    cumulative = np.cumsum(energy) / total
    k = int(np.searchsorted(cumulative, fraction - 1e-14)) + 1
    return min(k, len(singular_values))


def pod_fit(training, criterion, center=False):
    """Fit a POD basis

    :param criterion: {"energy": fraction} or {"fixed": N_z}
    """
    X = stack_snapshots(training)
    if X.size == 0:
        raise ValueError("no training data")
    mean = X.mean(axis=0) if center else None
    if center:
        X = X - mean
    # right singular vectors of the stacked snapshots = left singular
    # vectors of the transposed snapshot matrix
    _, s, Vt = linalg.svd(X, full_matrices=False)
    if "fixed" in criterion:
        k = int(criterion["fixed"])
        if not 1 <= k <= len(s):
            raise ValueError("fixed latent dimension %d outside [1, %d]"
                             % (k, len(s)))
    elif "energy" in criterion:
        k = energy_rank(s, criterion["energy"])
    else:
        raise ValueError("pod criterion needs 'energy' or 'fixed'")
    basis = Vt[:k].T.copy()
    # largest-magnitude entry of every column positive
    idx = np.abs(basis).argmax(axis=0)
    signs = np.sign(basis[idx, np.arange(k)])
    signs[signs == 0] = 1.0
    basis *= signs
    energy = s ** 2
    captured = energy[:k].sum() / energy.sum() if energy.sum() > 0 else 1.0
    LOGGER.info("POD: %d snapshots, N_u = %d, N_z = %d, energy captured %.6f"
                % (X.shape[0], X.shape[1], k, captured))
    return LinearReducer(basis, mean)
