"""Blind subspace estimation from received symbols.

The maximum-likelihood channel subspace is spanned by the ``J`` dominant
eigenvectors of the receive sample covariance ``(1/N) Y Y^H``. Only the
projector ``V V^H`` is unique; individual eigenvectors are not.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ._linalg import hermitian_part
from .errors import InvalidArgumentError

__all__ = [
    "SubspaceBasis",
    "sample_covariance",
    "dominant_eigenbasis",
    "projector",
    "estimate_subspace",
]


@dataclass(frozen=True)
class SubspaceBasis:
    """``M x J`` orthonormal basis with its eigenvalues in descending order."""

    basis: np.ndarray
    eigenvalues: np.ndarray

    @property
    def antennas(self):
        return self.basis.shape[0]

    @property
    def dim(self):
        return self.basis.shape[1]

    def projector(self):
        return projector(self)


def sample_covariance(observations):
    """Return ``(1/N) Y Y^H`` for an ``M x N`` observation matrix."""
    y = np.asarray(observations, dtype=np.complex128)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[1] < 1:
        raise InvalidArgumentError("need at least one observation column")
    return hermitian_part(y @ y.conj().T / y.shape[1])


def _subspace_iteration(cov, j, tol, max_iter, oversample=None):
    m = cov.shape[0]
    p = min(m, j + (oversample if oversample is not None else max(2, j // 2)))
    # deterministic start: columns of the covariance with the largest norms
    order = np.argsort(-np.linalg.norm(cov, axis=0), kind="stable")[:p]
    q, _ = np.linalg.qr(cov[:, order] + np.eye(m, p))
    proj_old = None
    for _ in range(max_iter):
        q, _ = np.linalg.qr(cov @ q)
        h = hermitian_part(q.conj().T @ cov @ q)
        w, u = np.linalg.eigh(h)
        idx = np.argsort(w)[::-1]
        w, u = w[idx], u[:, idx]
        q = q @ u
        v = q[:, :j]
        proj = v @ v.conj().T
        if proj_old is not None and np.linalg.norm(proj - proj_old) < tol:
            break
        proj_old = proj
    return w[:j], v


def dominant_eigenbasis(covariance, j, method="full", tol=1e-12, max_iter=5000):
    """Orthonormal basis for the ``j`` largest eigenvalues of ``covariance``.

    ``method="full"`` uses a Hermitian eigensolver restricted to the top
    ``j`` eigenpairs; ``method="iteration"`` uses blocked subspace
    iteration with Rayleigh-Ritz, which costs ``O(j M^2)`` per sweep.
    """
    c = np.asarray(covariance, dtype=np.complex128)
    m = c.shape[0]
    if c.shape != (m, m):
        raise InvalidArgumentError(f"covariance must be square, got {c.shape}")
    if not 1 <= j <= m:
        raise InvalidArgumentError(f"subspace dimension must satisfy 1 <= J <= {m}, got {j}")
    scale = max(np.max(np.abs(c)), 1e-300)
    if np.max(np.abs(c - c.conj().T)) > 1e-10 * scale:
        raise InvalidArgumentError("covariance is not Hermitian")
    c = hermitian_part(c)

    if method == "full":
        w, v = linalg.eigh(c, subset_by_index=(m - j, m - 1), check_finite=False)
        w, v = w[::-1], v[:, ::-1]
    elif method == "iteration":
        w, v = _subspace_iteration(c, j, tol, max_iter)
        # re-orthonormalize to machine precision
        v, _ = np.linalg.qr(v)
    else:
        raise InvalidArgumentError(f"unknown method {method!r}")
    return SubspaceBasis(np.ascontiguousarray(v), np.clip(w, 0.0, None))


def projector(basis):
    """Orthogonal projector ``V V^H`` onto the span of ``basis``."""
    v = basis.basis if isinstance(basis, SubspaceBasis) else np.asarray(basis)
    return hermitian_part(v @ v.conj().T)


def estimate_subspace(pilot_obs, data_obs, j, include_pilots=False, method="full"):
    """Estimate the ``j``-dimensional channel subspace of one coherence block.

    Only the data observations enter the sample covariance unless
    ``include_pilots`` is set.
    """
    data_obs = np.asarray(data_obs, dtype=np.complex128)
    if data_obs.ndim != 2 or data_obs.shape[1] < 1:
        raise InvalidArgumentError("data observations must be an M x N matrix with N >= 1")
    y = data_obs
    if include_pilots and pilot_obs is not None:
        y = np.hstack([np.asarray(pilot_obs, dtype=np.complex128), data_obs])
    return dominant_eigenbasis(sample_covariance(y), j, method=method)
