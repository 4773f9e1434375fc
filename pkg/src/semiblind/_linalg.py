"""Small Hermitian linear-algebra helpers used across modules."""

import numpy as np
from scipy import linalg

from .errors import NumericalError


def hermitian_part(a):
    """Return ``(a + a^H) / 2`` over the last two axes."""
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def cholesky_stack(mats, what="component"):
    """Lower Cholesky factors of a stack of Hermitian PD matrices.

    Raises :class:`NumericalError` naming the first index that fails.
    """
    mats = np.asarray(mats)
    try:
        return np.linalg.cholesky(mats)
    except np.linalg.LinAlgError:
        pass
    flat = mats.reshape((-1,) + mats.shape[-2:])
    for k, m in enumerate(flat):
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError:
            raise NumericalError(
                f"{what} {k}: matrix is not positive definite", component=k
            ) from None
    raise NumericalError(f"{what}: Cholesky factorization failed")


def logdet_from_cholesky(chol):
    d = np.diagonal(chol, axis1=-2, axis2=-1)
    return 2.0 * np.sum(np.log(d.real), axis=-1)


def hermitian_solve(a, b):
    """Solve ``a x = b`` for Hermitian PD ``a`` via Cholesky."""
    try:
        factor = linalg.cho_factor(a, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"matrix is not positive definite: {exc}") from None
    return linalg.cho_solve(factor, b, check_finite=False)


def right_divide_hermitian(c, a):
    """Return ``c a^{-1}`` for Hermitian ``c`` and Hermitian PD ``a``.

    Uses ``c a^{-1} = (a^{-1} c)^H`` so only one factorization is needed.
    """
    return np.conj(hermitian_solve(a, c)).T
