"""Cholesky helpers with the shared jitter escalation policy.

Every factorization in the package goes through :func:`chol_with_jitter` so
that the tolerance story is uniform: try the plain factorization, then add
``10^-10 * mean(diag)`` to the diagonal, escalating by factors of 10 up to
``jitter_max * mean(diag)`` (default ``10^-8``) before giving up.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy import linalg as sla

from .errors import InvalidModelError, NumericalError

logger = logging.getLogger(__name__)

DEFAULT_JITTER_MAX = 1e-8
_JITTER_START = 1e-10


def chol_with_jitter(mat: np.ndarray, jitter_max: float = DEFAULT_JITTER_MAX):
    """Lower Cholesky factor of a symmetric PSD matrix, jittering if needed.

    Returns
    -------
    (L, jitter) : the factor and the absolute jitter that was added to the
        diagonal (0.0 when none was required).

    Raises
    ------
    NumericalError : if the factorization still fails at the jitter cap.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {mat.shape}")
    diag_mean = float(np.mean(np.diag(mat))) if mat.size else 0.0
    if diag_mean == 0.0 and not mat.any():
        # degenerate zero-covariance model: factor is exactly zero
        return np.zeros_like(mat), 0.0
    try:
        return sla.cholesky(mat, lower=True), 0.0
    except sla.LinAlgError:
        pass
    jitter = _JITTER_START * diag_mean
    cap = jitter_max * diag_mean
    eye = np.eye(mat.shape[0])
    while jitter <= cap * (1 + 1e-12):
        try:
            L = sla.cholesky(mat + jitter * eye, lower=True)
            logger.debug("cholesky needed jitter %.3e (mean diag %.3e)", jitter, diag_mean)
            return L, jitter
        except sla.LinAlgError:
            jitter *= 10.0
    raise NumericalError(
        f"cholesky failed after jitter escalation to {cap:.3e} "
        f"({jitter_max:.1e} * mean diagonal {diag_mean:.3e})"
    )


def chol_model(mat: np.ndarray, jitter_max: float = DEFAULT_JITTER_MAX):
    """Like :func:`chol_with_jitter` but signals an invalid model on failure."""
    try:
        return chol_with_jitter(mat, jitter_max)
    except NumericalError as exc:
        raise InvalidModelError(str(exc)) from exc


def chol_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve (L L^T) x = b given the lower factor."""
    y = sla.solve_triangular(L, b, lower=True)
    return sla.solve_triangular(L.T, y, lower=False)


def chol_logdet(L: np.ndarray) -> float:
    """log det of the factored matrix."""
    return 2.0 * float(np.sum(np.log(np.diag(L))))
