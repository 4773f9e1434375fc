"""Pilot-based and data-aided channel estimators.

All estimators act on decorrelated per-user pilot observations
``y_p = h + n`` with ``n ~ CN(0, noise_var I)``. Observations may be a single
vector of length ``M`` or a ``(B, M)`` batch of row vectors; the estimate
has the same shape.

Data-aided variants additionally use a :class:`SubspaceBasis` estimated
from the data symbols of the current coherence block:

========== =================================================================
ls         ``y_p``
ml         ``V V^H y_p``
scov       ``C (C + s I)^-1 y_p`` with the training sample covariance ``C``
sub_scov   LMMSE solved inside ``range(V)``
proj_scov  LMMSE on ``V V^H y_p`` with noise ``s J / M``
gmm        mixture of per-component LMMSE estimates
sub_gmm    mixture estimator solved inside ``range(V)``
proj_gmm   mixture estimator on ``V V^H y_p`` with noise ``s J / M``
========== =================================================================

Filters of ``scov``, ``proj_scov``, ``gmm`` and ``proj_gmm`` depend only on
the noise level and can be built once; ``sub_scov`` and ``sub_gmm`` must be
rebuilt for every basis.
"""

from dataclasses import dataclass

import numpy as np

from ._linalg import (
    cholesky_stack,
    hermitian_part,
    logdet_from_cholesky,
    right_divide_hermitian,
)
from .cgmm import normalize_log_weights
from .errors import InvalidArgumentError, StaleFilterError
from .subspace import SubspaceBasis

__all__ = [
    "ESTIMATORS",
    "PILOT_ONLY",
    "COUNTERPART",
    "EstimatorInput",
    "ChannelEstimate",
    "LmmseFilter",
    "PrecomputedGmmFilters",
    "EstimatorBank",
    "build_lmmse_filter",
    "build_gmm_filters",
    "estimate_ls",
    "estimate_ml",
    "estimate_scov",
    "estimate_sub_scov",
    "estimate_proj_scov",
    "estimate_gmm",
    "estimate_sub_gmm",
    "estimate_proj_gmm",
]

ESTIMATORS = ("ls", "ml", "scov", "sub_scov", "proj_scov", "gmm", "sub_gmm", "proj_gmm")
PILOT_ONLY = ("ls", "scov", "gmm")
COUNTERPART = {
    "ml": "ls",
    "sub_scov": "scov",
    "proj_scov": "scov",
    "sub_gmm": "gmm",
    "proj_gmm": "gmm",
}

_LOG_PI = np.log(np.pi)


@dataclass(frozen=True)
class EstimatorInput:
    """Pilot observation(s) of one or more users in a coherence block.

    ``user_count`` defaults to the subspace dimension.
    """

    pilot: np.ndarray
    noise_var: float
    subspace: SubspaceBasis = None
    user_count: int = None

    def __post_init__(self):
        if not self.noise_var > 0:
            raise InvalidArgumentError(f"noise variance must be positive, got {self.noise_var}")
        object.__setattr__(self, "pilot", np.asarray(self.pilot, dtype=np.complex128))

    @property
    def users(self):
        if self.user_count is not None:
            return self.user_count
        if self.subspace is not None:
            return self.subspace.dim
        raise InvalidArgumentError("user count unknown without a subspace")

    def projected_noise_var(self):
        """Noise level ``s J / M`` seen after projecting onto the subspace."""
        return self.noise_var * self.users / self.pilot.shape[-1]


@dataclass(frozen=True)
class ChannelEstimate:
    estimate: np.ndarray
    responsibilities: np.ndarray = None
    component_estimates: np.ndarray = None


@dataclass(frozen=True)
class LmmseFilter:
    """``W = C (C + noise_var I)^-1`` for a fixed noise level."""

    matrix: np.ndarray
    noise_var: float


@dataclass(frozen=True)
class PrecomputedGmmFilters:
    """Per-component affine filters ``W_k y + b_k`` built for one noise level.

    ``whiteners`` holds the inverse Cholesky factors of ``C_k + noise_var I``
    so that responsibilities also cost ``O(K M^2)`` per observation.
    """

    filters: np.ndarray
    biases: np.ndarray
    whiteners: np.ndarray
    logdets: np.ndarray
    log_weights: np.ndarray
    means: np.ndarray
    noise_var: float


def _batch(y):
    y = np.asarray(y, dtype=np.complex128)
    return np.atleast_2d(y), y.ndim == 1


def _unbatch(est, single):
    if not single:
        return est
    return ChannelEstimate(
        est.estimate[0],
        None if est.responsibilities is None else est.responsibilities[0],
        None if est.component_estimates is None else est.component_estimates[0],
    )


def _require_subspace(inp):
    if inp.subspace is None:
        raise InvalidArgumentError("this estimator requires a subspace basis")
    if inp.subspace.antennas != inp.pilot.shape[-1]:
        raise InvalidArgumentError("subspace basis does not match the observation length")
    return inp.subspace.basis


def _project(v, y):
    """Rows of ``y`` projected onto ``range(v)``."""
    return (y @ v.conj()) @ v.T


def _check_fresh(filters, noise_var):
    if not np.isclose(filters.noise_var, noise_var, rtol=1e-12, atol=0.0):
        raise StaleFilterError(
            f"filters were built for noise variance {filters.noise_var!r}, "
            f"input requires {noise_var!r}"
        )


def _mixture(logp, comp):
    resp = normalize_log_weights(logp)[0]
    return np.einsum("bk,bkm->bm", resp, comp), resp


# -- classical baselines -----------------------------------------------------


def estimate_ls(inp):
    return ChannelEstimate(inp.pilot.copy())


def estimate_ml(inp):
    v = _require_subspace(inp)
    y, single = _batch(inp.pilot)
    return _unbatch(ChannelEstimate(_project(v, y)), single)


def build_lmmse_filter(covariance, noise_var):
    c = np.asarray(covariance, dtype=np.complex128)
    a = c + noise_var * np.eye(c.shape[0])
    return LmmseFilter(right_divide_hermitian(c, a), float(noise_var))


def estimate_scov(inp, covariance, lmmse=None):
    if lmmse is None:
        lmmse = build_lmmse_filter(covariance, inp.noise_var)
    _check_fresh(lmmse, inp.noise_var)
    y, single = _batch(inp.pilot)
    return _unbatch(ChannelEstimate(y @ lmmse.matrix.T), single)


def estimate_sub_scov(inp, covariance):
    v = _require_subspace(inp)
    y, single = _batch(inp.pilot)
    c_sub = hermitian_part(v.conj().T @ covariance @ v)
    w = right_divide_hermitian(c_sub, c_sub + inp.noise_var * np.eye(v.shape[1]))
    coeff = (y @ v.conj()) @ w.T
    return _unbatch(ChannelEstimate(coeff @ v.T), single)


def estimate_proj_scov(inp, covariance, lmmse=None):
    v = _require_subspace(inp)
    eff = inp.projected_noise_var()
    if lmmse is None:
        lmmse = build_lmmse_filter(covariance, eff)
    _check_fresh(lmmse, eff)
    y, single = _batch(inp.pilot)
    return _unbatch(ChannelEstimate(_project(v, y) @ lmmse.matrix.T), single)


# -- mixture estimators ------------------------------------------------------


def build_gmm_filters(model, noise_var):
    """Precompute ``W_k = C_k (C_k + s I)^-1`` and ``b_k = mu_k - W_k mu_k``."""
    if not noise_var > 0:
        raise InvalidArgumentError("effective noise variance must be positive")
    m = model.dim
    a = model.covariances + noise_var * np.eye(m)
    chols = cholesky_stack(a, what="component")
    eye = np.broadcast_to(np.eye(m), a.shape)
    whiteners = np.linalg.solve(chols, eye)
    # C_k A_k^-1 = (A_k^-1 C_k)^H since both are Hermitian
    x = np.linalg.solve(np.conj(np.swapaxes(chols, 1, 2)), np.linalg.solve(chols, model.covariances))
    filters = np.conj(np.swapaxes(x, 1, 2))
    biases = model.means - np.einsum("kij,kj->ki", filters, model.means)
    return PrecomputedGmmFilters(
        filters=filters,
        biases=biases,
        whiteners=whiteners,
        logdets=logdet_from_cholesky(chols),
        log_weights=np.log(model.weights),
        means=np.asarray(model.means),
        noise_var=float(noise_var),
    )


def _apply_gmm_filters(filters, y):
    diff = y[:, None, :] - filters.means[None]
    z = np.einsum("kij,bkj->bki", filters.whiteners, diff)
    quad = np.sum(z.real**2 + z.imag**2, axis=2)
    m = y.shape[1]
    logp = filters.log_weights - m * _LOG_PI - filters.logdets - quad
    comp = np.einsum("kij,bj->bki", filters.filters, y) + filters.biases[None]
    est, resp = _mixture(logp, comp)
    return ChannelEstimate(est, resp, comp)


def _direct_gmm(means, covs, log_weights, noise_var, y):
    """Mixture estimate with fresh factorizations on every call."""
    k, m = means.shape
    a = covs + noise_var * np.eye(m)
    chols = cholesky_stack(a, what="component")
    diff = (y[:, None, :] - means[None]).transpose(1, 2, 0)  # (K, M, B)
    z = np.linalg.solve(chols, diff)
    quad = np.sum(z.real**2 + z.imag**2, axis=1).T
    logp = log_weights - m * _LOG_PI - logdet_from_cholesky(chols) - quad
    x = np.linalg.solve(np.conj(np.swapaxes(chols, 1, 2)), z)  # A_k^-1 (y - mu_k)
    comp = (covs @ x).transpose(2, 0, 1) + means[None]
    return _mixture(logp, comp), comp


def estimate_gmm(inp, model, filters=None):
    """Mixture-of-LMMSE estimate from the pilot observation alone.

    With ``filters`` the precomputed path is used; otherwise every
    component is factorized on the fly.
    """
    y, single = _batch(inp.pilot)
    if filters is not None:
        _check_fresh(filters, inp.noise_var)
        return _unbatch(_apply_gmm_filters(filters, y), single)
    (est, resp), comp = _direct_gmm(
        model.means, model.covariances, np.log(model.weights), inp.noise_var, y
    )
    return _unbatch(ChannelEstimate(est, resp, comp), single)


def estimate_sub_gmm(inp, model):
    """Mixture estimator solved in the ``J``-dimensional estimated subspace.

    Responsibilities are evaluated at the projected observation ``V^H y_p``.
    """
    v = _require_subspace(inp)
    y, single = _batch(inp.pilot)
    means_sub = model.means @ v.conj()
    covs_sub = hermitian_part(v.conj().T @ model.covariances @ v)
    (coeff, resp), comp = _direct_gmm(
        means_sub, covs_sub, np.log(model.weights), inp.noise_var, y @ v.conj()
    )
    return _unbatch(ChannelEstimate(coeff @ v.T, resp, comp @ v.T), single)


def estimate_proj_gmm(inp, model, filters=None):
    """Mixture estimator applied to ``V V^H y_p`` with noise ``s J / M``."""
    v = _require_subspace(inp)
    eff = inp.projected_noise_var()
    y, single = _batch(inp.pilot)
    y_proj = _project(v, y)
    if filters is not None:
        _check_fresh(filters, eff)
        return _unbatch(_apply_gmm_filters(filters, y_proj), single)
    (est, resp), comp = _direct_gmm(
        model.means, model.covariances, np.log(model.weights), eff, y_proj
    )
    return _unbatch(ChannelEstimate(est, resp, comp), single)


class EstimatorBank:
    """Runs the estimator registry with cached noise-level filters.

    Holds the fitted mixture and the training covariance; the filters are
    immutable once built and are shared between calls.
    """

    def __init__(self, model=None, covariance=None):
        self.model = model
        self.covariance = covariance
        self._gmm_filters = {}
        self._lmmse = {}

    def gmm_filters(self, noise_var):
        key = float(noise_var)
        if key not in self._gmm_filters:
            self._gmm_filters[key] = build_gmm_filters(self.model, key)
        return self._gmm_filters[key]

    def lmmse(self, noise_var):
        key = float(noise_var)
        if key not in self._lmmse:
            self._lmmse[key] = build_lmmse_filter(self.covariance, key)
        return self._lmmse[key]

    def prepare(self, names, noise_var, users, antennas):
        """Build every filter the named estimators need at this operating point."""
        eff = noise_var * users / antennas
        if "scov" in names:
            self.lmmse(noise_var)
        if "proj_scov" in names:
            self.lmmse(eff)
        if "gmm" in names:
            self.gmm_filters(noise_var)
        if "proj_gmm" in names:
            self.gmm_filters(eff)

    def estimate(self, name, inp):
        if name == "ls":
            return estimate_ls(inp)
        if name == "ml":
            return estimate_ml(inp)
        if name == "scov":
            return estimate_scov(inp, self.covariance, self.lmmse(inp.noise_var))
        if name == "sub_scov":
            return estimate_sub_scov(inp, self.covariance)
        if name == "proj_scov":
            return estimate_proj_scov(
                inp, self.covariance, self.lmmse(inp.projected_noise_var())
            )
        if name == "gmm":
            return estimate_gmm(inp, self.model, self.gmm_filters(inp.noise_var))
        if name == "sub_gmm":
            return estimate_sub_gmm(inp, self.model)
        if name == "proj_gmm":
            return estimate_proj_gmm(
                inp, self.model, self.gmm_filters(inp.projected_noise_var())
            )
        raise InvalidArgumentError(f"unknown estimator {name!r}; choose from {ESTIMATORS}")
