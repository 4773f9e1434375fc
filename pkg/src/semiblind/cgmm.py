"""Circularly-symmetric complex Gaussian mixture models.

Densities are always evaluated in the log domain through Cholesky factors;
at 64 antennas the raw values underflow double precision.
"""

import csv
import logging
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.special import logsumexp
from sklearn.cluster import kmeans_plusplus

from ._linalg import cholesky_stack, hermitian_part, logdet_from_cholesky
from .errors import DatasetFormatError, InvalidArgumentError, NumericalError

__all__ = [
    "GmmModel",
    "EmConfig",
    "FitReport",
    "log_density_component",
    "component_log_densities",
    "responsibilities",
    "fit",
    "save_model",
    "load_model",
    "write_fit_report",
    "normalize_log_weights",
]

log = logging.getLogger(__name__)

MAGIC = b"GMM1"
_HEADER = struct.Struct("<4sII")


@dataclass(frozen=True)
class GmmModel:
    """Mixture weights ``(K,)``, means ``(K, M)`` and covariances ``(K, M, M)``."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.asarray(self.means, dtype=np.complex128)
        c = np.asarray(self.covariances, dtype=np.complex128)
        if w.ndim != 1 or mu.shape != (w.size, c.shape[-1]) or c.shape != (w.size,) + c.shape[-2:]:
            raise InvalidArgumentError(
                f"inconsistent shapes: weights {w.shape}, means {mu.shape}, covariances {c.shape}"
            )
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError("weights must be nonnegative and sum to one")
        for name, arr in (("weights", w), ("means", mu), ("covariances", c)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def components(self):
        return self.weights.size

    @property
    def dim(self):
        return self.means.shape[1]

    def log_density(self, x, noise_cov=None):
        """Log of the mixture density at the rows of ``x``.

        Terms are sorted before summation so the result does not depend on
        the component order.
        """
        logp = component_log_densities(self, x, noise_cov) + np.log(self.weights)
        return logsumexp(np.sort(logp, axis=-1), axis=-1)

    def permuted(self, order):
        order = np.asarray(order)
        return GmmModel(self.weights[order], self.means[order], self.covariances[order])


@dataclass(frozen=True)
class EmConfig:
    component_count: int = 64
    max_iterations: int = 300
    rel_tolerance: float = 1e-6
    covariance_floor: float = 1e-6
    init_strategy: str = "kmeans_plus_plus"
    seed: int = 0
    chunk_size: int = 8192

    def __post_init__(self):
        if self.component_count < 1:
            raise InvalidArgumentError("component_count must be >= 1")
        if self.max_iterations < 1:
            raise InvalidArgumentError("max_iterations must be >= 1")
        if self.rel_tolerance <= 0 or self.covariance_floor <= 0:
            raise InvalidArgumentError("tolerances must be positive")
        if self.init_strategy not in ("kmeans_plus_plus", "random_responsibility"):
            raise InvalidArgumentError(f"unknown init_strategy {self.init_strategy!r}")
        if self.chunk_size < 1:
            raise InvalidArgumentError("chunk_size must be >= 1")


@dataclass
class FitReport:
    log_likelihood: list = field(default_factory=list)
    events: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self):
        return len(self.log_likelihood)


def log_density_component(mean, covariance, x):
    """``log N_C(x; mean, covariance)`` for a vector or rows of ``x``."""
    mean = np.asarray(mean, dtype=np.complex128)
    covariance = np.asarray(covariance, dtype=np.complex128)
    x = np.asarray(x, dtype=np.complex128)
    chol = cholesky_stack(covariance[None], what="component")[0]
    return _log_gauss(chol, mean, x)


def _log_gauss(chol, mean, x):
    m = chol.shape[0]
    diff = x - mean
    z = linalg.solve_triangular(chol, diff.T, lower=True, check_finite=False)
    with np.errstate(over="ignore"):
        quad = np.sum(z.real**2 + z.imag**2, axis=0)
    out = -m * np.log(np.pi) - logdet_from_cholesky(chol) - quad
    return float(out) if diff.ndim == 1 else out


def component_log_densities(model, x, noise_cov=None):
    """``(T, K)`` array of ``log N_C(x_t; mu_k, C_k + noise_cov)``.

    A 1-D ``x`` gives a ``(K,)`` result.
    """
    x = np.asarray(x, dtype=np.complex128)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    covs = model.covariances
    if noise_cov is not None:
        covs = covs + np.asarray(noise_cov)
    chols = cholesky_stack(covs, what="component")
    out = np.empty((x2.shape[0], model.components))
    for k in range(model.components):
        out[:, k] = _log_gauss(chols[k], model.means[k], x2)
    return out[0] if single else out


def normalize_log_weights(logp):
    """Row-normalize log weights; all ``-inf`` rows become uniform."""
    logp = np.atleast_2d(logp)
    norm = logsumexp(logp, axis=1, keepdims=True)
    bad = ~np.isfinite(norm[:, 0])
    with np.errstate(invalid="ignore"):
        resp = np.exp(logp - norm)
    if np.any(bad):
        resp[bad] = 1.0 / logp.shape[1]
    resp /= resp.sum(axis=1, keepdims=True)
    return resp, norm[:, 0], int(bad.sum())


def responsibilities(model, observations, noise_cov=None):
    """Posterior component probabilities ``(T, K)`` for rows of ``observations``.

    Rows whose log-densities are all ``-inf`` are set uniform and a
    :class:`RuntimeWarning` is issued.
    """
    obs = np.asarray(observations, dtype=np.complex128)
    single = obs.ndim == 1
    logp = component_log_densities(model, np.atleast_2d(obs), noise_cov) + np.log(model.weights)
    resp, _, n_bad = normalize_log_weights(logp)
    if n_bad:
        warnings.warn(f"{n_bad} observation(s) underflowed in every component; "
                      "using uniform responsibilities", RuntimeWarning, stacklevel=2)
    return resp[0] if single else resp


def _kmeans_pp_labels(x, k, seed):
    stacked = np.hstack([x.real, x.imag])
    centers, _ = kmeans_plusplus(stacked, k, random_state=seed)
    d = (
        np.sum(stacked**2, axis=1)[:, None]
        - 2.0 * stacked @ centers.T
        + np.sum(centers**2, axis=1)[None, :]
    )
    return np.argmin(d, axis=1)


def _initial_resp(x, config):
    t, k = x.shape[0], config.component_count
    if config.init_strategy == "kmeans_plus_plus":
        labels = _kmeans_pp_labels(x, k, config.seed)
        resp = np.zeros((t, k))
        resp[np.arange(t), labels] = 1.0
        return resp
    rng = np.random.default_rng(config.seed)
    resp = rng.random((t, k))
    return resp / resp.sum(axis=1, keepdims=True)


def _m_step(x, resp, floor):
    nk = resp.sum(axis=0)
    weights = nk / nk.sum()
    means = (resp.T @ x) / nk[:, None]
    m = x.shape[1]
    covs = np.empty((resp.shape[1], m, m), dtype=np.complex128)
    for k in range(resp.shape[1]):
        d = x - means[k]
        covs[k] = (d.T * resp[:, k]) @ d.conj() / nk[k]
    covs = hermitian_part(covs) + floor * np.eye(m)
    return weights, means, covs


def _e_step(x, weights, means, covs, chunk):
    chols = cholesky_stack(covs, what="component")
    logw = np.log(weights)
    t, k = x.shape[0], weights.size
    logp = np.empty((t, k))
    for start in range(0, t, chunk):
        xs = x[start:start + chunk]
        for j in range(k):
            logp[start:start + chunk, j] = _log_gauss(chols[j], means[j], xs) + logw[j]
    resp, norm, _ = normalize_log_weights(logp)
    return resp, float(np.sum(norm)), logp


def fit(dataset, config=EmConfig()):
    """Fit a ``K``-component complex GMM by expectation-maximization.

    ``dataset`` is a :class:`~semiblind.scenarios.ChannelDataset` or a
    ``(T, M)`` array. Returns ``(model, report)``; ``report.log_likelihood``
    holds the total data log-likelihood after each M-step.
    """
    x = np.asarray(getattr(dataset, "samples", dataset), dtype=np.complex128)
    t, m = x.shape
    k = config.component_count
    if t < k:
        raise InvalidArgumentError(f"need at least K={k} samples, got {t}")

    floor = config.covariance_floor * float(np.mean(np.abs(x) ** 2))
    report = FitReport()
    resp = _initial_resp(x, config)
    prev = -np.inf
    for it in range(config.max_iterations):
        nk = resp.sum(axis=0)
        starving = np.flatnonzero(nk < 1e-12 * t)
        for j in starving:
            donor = int(np.argmin(resp.max(axis=1)))
            resp[donor] = 0.0
            resp[donor, j] = 1.0
            report.events.append(f"iteration {it}: component {j} reinitialized from sample {donor}")
            log.warning(report.events[-1])
        weights, means, covs = _m_step(x, resp, floor)
        try:
            resp, ll, _ = _e_step(x, weights, means, covs, config.chunk_size)
        except NumericalError as exc:
            raise NumericalError(f"EM iteration {it}: {exc}", exc.component) from None
        report.log_likelihood.append(ll)
        log.debug("EM iteration %d: log-likelihood %.10g", it, ll)
        if k == 1 or (np.isfinite(prev) and (ll - prev) < config.rel_tolerance * abs(prev)):
            report.converged = True
            break
        prev = ll
    return GmmModel(weights, means, covs), report


def save_model(model, path):
    """Write ``model`` in the ``GMM1`` format (column-major covariances)."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, model.dim, model.components))
        fh.write(np.ascontiguousarray(model.weights, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.means, dtype="<c16").tobytes())
        col_major = np.ascontiguousarray(np.swapaxes(model.covariances, 1, 2), dtype="<c16")
        fh.write(col_major.tobytes())


def load_model(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DatasetFormatError(f"{path}: file too short for GMM1 header")
    magic, m, k = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    expected = _HEADER.size + 8 * k + 16 * k * m + 16 * k * m * m
    if len(data) != expected:
        raise DatasetFormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    off = _HEADER.size
    w = np.frombuffer(data, "<f8", k, off).astype(float)
    off += 8 * k
    mu = np.frombuffer(data, "<c16", k * m, off).astype(np.complex128).reshape(k, m)
    off += 16 * k * m
    c = np.frombuffer(data, "<c16", k * m * m, off).astype(np.complex128).reshape(k, m, m)
    return GmmModel(w, mu, np.swapaxes(c, 1, 2).copy())


def write_fit_report(report, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "log_likelihood"])
        for i, ll in enumerate(report.log_likelihood):
            writer.writerow([i, repr(float(ll))])
