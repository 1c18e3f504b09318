"""Dense symmetric positive definite factorization and solves.

One Cholesky factorization per E-step is reused for every unit; the
inverse is never formed explicitly.
"""

import numpy as np
import scipy.linalg

from .errors import NotPositiveDefiniteError

__all__ = ["spd_cholesky", "spd_solve", "spd_logdet"]


def spd_cholesky(mat: np.ndarray, jitter: float = 0.0, context: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    jitter, when nonzero, is added to the diagonal before factorizing;
    it is off by default so that a non-PD matrix fails loudly instead of
    being silently regularized.
    """
    m = np.asarray(mat, dtype=float)
    if jitter:
        m = m + jitter * np.eye(m.shape[0])
    try:
        return scipy.linalg.cholesky(m, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"{context}: {exc}") from exc


def spd_solve(chol_lower: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve A x = rhs given the lower Cholesky factor of A."""
    return scipy.linalg.cho_solve((chol_lower, True), rhs)


def spd_logdet(chol_lower: np.ndarray) -> float:
    """log det A from the lower Cholesky factor of A."""
    return 2.0 * float(np.sum(np.log(np.diag(chol_lower))))
