"""EM driver: initialization, the E->M loop, stopping rule, reporting.

Initialization regresses each block on its covariates, takes the first
principal component of the residuals as a starting factor (sign fixed so
the first variable loads nonnegatively), backs out starting loadings,
variances and structural coefficients by least squares, then applies two
corrections the likelihood itself cannot make later (see the inline
notes): the dependent score is moved to the scale implied by the
unit-variance structural disturbance, and each block's in-sample
factor/covariate overlap is reclaimed from the other blocks.

The stopping statistic is the sum over the canonical parameter vector of
|new - old| / max(|new|, floor); iteration ends when it drops below
epsilon or the iteration cap is hit (non-convergence is flagged, not
raised).
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, FactorEMError, SingularSystemError
from .estep import PosteriorMoments, conditional_law, posterior_moments
from .likelihood import observed_loglik
from .model import Dataset, Dimensions, Theta, flatten_theta
from .mstep import sufficient_stats, update_theta

__all__ = [
    "EMConfig",
    "FitResult",
    "initialize",
    "em_step",
    "relative_change",
    "fit",
    "canonicalize",
]


@dataclass(frozen=True)
class EMConfig:
    """Knobs of the EM iteration.

    epsilon : stopping threshold on the relative-change statistic
    max_iter : iteration cap
    seed : reserved for randomized initialization fallbacks (the default
        least-squares/PCA initialization is deterministic)
    jitter_enabled : add 1e-8 to the observation-covariance diagonal
        before factorizing (off by default; failures should be loud)
    denominator_floor : floor on |theta| in the stopping denominator
    """

    epsilon: float = 1e-2
    max_iter: int = 500
    seed: int = 0
    jitter_enabled: bool = False
    denominator_floor: float = 1e-8

    def __post_init__(self):
        if self.epsilon <= 0:
            raise DataError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_iter < 1:
            raise DataError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.denominator_floor <= 0:
            raise DataError("denominator_floor must be positive")


@dataclass
class FitResult:
    """Converged parameters, factor scores and the iteration history.

    moments holds the final E-step posterior moments; its g_tilde and
    f_tilde rows are the reported factor scores. trace is an
    (iterations, 2) array of (relative change, observed log-likelihood),
    one row per EM iteration.
    """

    theta: Theta
    moments: PosteriorMoments
    iterations: int
    converged: bool
    trace: np.ndarray


def _first_pc_scores(resid: np.ndarray, name: str) -> np.ndarray:
    """First principal component scores of a residual block, unit variance."""
    centered = resid - resid.mean(axis=0)
    u, s, _ = np.linalg.svd(centered, full_matrices=False)
    if s[0] <= 1e-12 * max(1.0, float(np.abs(resid).max())):
        raise DataError(f"residual block {name} has zero variance; PCA undefined")
    scores = u[:, 0] * s[0]
    return scores / scores.std()


def _covariate_coefficients(t: np.ndarray, block: np.ndarray, name: str) -> np.ndarray:
    gram = t.T @ t
    try:
        return np.linalg.solve(gram, t.T @ block)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(
            f"covariate block {name} is singular (collinear covariates)"
        ) from exc


def initialize(data: Dataset, dims: Dimensions, config: EMConfig) -> Theta:
    """Least-squares / principal-component starting point."""
    n = data.n
    if n < 2 or n <= max(dims.r_t, *dims.r_m):
        raise DataError(
            f"initialization needs more units than covariates, got n={n}"
        )

    def block_start(t, block, name):
        coef = _covariate_coefficients(t, block, name)
        # center the residuals so the loading regression carries an
        # implicit intercept (residual means are not the factor's job)
        resid = block - t @ coef
        resid = resid - resid.mean(axis=0)
        scores = _first_pc_scores(resid, name)
        loading = resid.T @ scores / (scores @ scores)
        if loading[0] < 0:
            loading, scores = -loading, -scores
        sigma2 = float(np.mean((resid - np.outer(scores, loading)) ** 2))
        return coef, loading, scores, sigma2

    d, b, g_scores, sigma2_y = block_start(data.t, data.y, "Y")
    d_m, a_m, sigma2_m, f_scores = [], [], [], []
    for m in range(dims.p):
        dm, am, fm, s2 = block_start(data.t_m[m], data.x[m], f"X{m + 1}")
        d_m.append(dm)
        a_m.append(am)
        sigma2_m.append(s2)
        f_scores.append(fm)

    f_mat = np.array(f_scores)                    # (p, n)
    c = np.linalg.lstsq(f_mat.T, g_scores, rcond=None)[0]

    # The structural disturbance has unit variance by identification, so
    # the dependent score is not free to have unit variance itself.
    # Rescale (g-score, b, c) jointly to put the starting point on the
    # identified scale; starting off-scale drops EM into a nearly flat
    # valley that takes thousands of iterations to cross.
    resid_var = float(np.mean((g_scores - c @ f_mat) ** 2))
    scale = 1.0 / np.sqrt(max(resid_var, 1e-12))
    b = b / scale
    c = c * scale
    g_scores = g_scores * scale

    # Plain least squares hands each covariate block the in-sample
    # projection of its factor (the likelihood is exactly flat in that
    # split, and EM preserves whatever the start chose). The projection
    # is partly visible through the *other* blocks, whose scores are not
    # orthogonal to this block's covariates, so reclaim it here: for the
    # dependent block through the structural prediction, for each
    # explanatory block through the structural residual, shrunk by its
    # signal fraction c^2/(c^2+1).
    g_cross = c @ f_mat
    kappa_g = _covariate_coefficients(data.t, g_cross, "T")
    d = d - np.outer(kappa_g, b)
    for m in range(dims.p):
        if abs(c[m]) < 1e-8:
            continue
        backed_out = (g_scores - g_cross + c[m] * f_mat[m]) / c[m]
        kappa_m = _covariate_coefficients(data.t_m[m], backed_out, f"T{m + 1}")
        weight = c[m] ** 2 / (c[m] ** 2 + 1.0)
        d_m[m] = d_m[m] - weight * np.outer(kappa_m, a_m[m])

    return Theta(
        d=d, d_m=tuple(d_m), b=b, a_m=tuple(a_m), c=c,
        sigma2_y=sigma2_y, sigma2_m=tuple(sigma2_m),
    )


def em_step(
    theta: Theta, data: Dataset, jitter: float = 0.0
) -> tuple[Theta, PosteriorMoments]:
    """One E-step followed by one closed-form M-step."""
    law = conditional_law(theta, data, jitter=jitter)
    moments = posterior_moments(law)
    stats = sufficient_stats(data, moments, law)
    theta_new = update_theta(stats, moments, data, data.dimensions())
    return theta_new, moments


def relative_change(theta_old: Theta, theta_new: Theta, floor: float) -> float:
    """Sum over coordinates of |new - old| / max(|new|, floor)."""
    old = flatten_theta(theta_old)
    new = flatten_theta(theta_new)
    return float(np.sum(np.abs(new - old) / np.maximum(np.abs(new), floor)))


def fit(data: Dataset, dims: Dimensions, config: EMConfig) -> FitResult:
    """Run EM from the deterministic initialization until the stopping
    rule fires or max_iter is reached."""
    jitter = 1e-8 if config.jitter_enabled else 0.0
    theta = initialize(data, dims, config)
    trace = []
    moments = None
    converged = False
    for iteration in range(1, config.max_iter + 1):
        try:
            theta_new, moments = em_step(theta, data, jitter=jitter)
        except FactorEMError as exc:
            raise type(exc)(f"EM iteration {iteration}: {exc}") from exc
        change = relative_change(theta, theta_new, config.denominator_floor)
        trace.append((change, observed_loglik(theta_new, data).value))
        theta = theta_new
        if change < config.epsilon:
            converged = True
            break
    return FitResult(
        theta=theta,
        moments=moments,
        iterations=len(trace),
        converged=converged,
        trace=np.array(trace),
    )


def canonicalize(result: FitResult) -> FitResult:
    """Resolve the factor sign symmetries for reporting.

    Jointly flipping a factor with its loadings (and the structural
    coefficients tied to it) leaves the observed likelihood unchanged;
    the reported solution fixes the first coordinate of b and of every
    a^m to be nonnegative. The iteration trace is left untouched.
    """
    theta, moments = result.theta, result.moments
    s_g = -1.0 if theta.b[0] < 0 else 1.0
    s_f = np.array([-1.0 if am[0] < 0 else 1.0 for am in theta.a_m])
    if s_g == 1.0 and np.all(s_f == 1.0):
        return result

    new_theta = Theta(
        d=theta.d,
        d_m=theta.d_m,
        b=s_g * theta.b,
        a_m=tuple(s * am for s, am in zip(s_f, theta.a_m)),
        c=s_g * s_f * theta.c,
        sigma2_y=theta.sigma2_y,
        sigma2_m=theta.sigma2_m,
    )
    new_moments = PosteriorMoments(
        g_tilde=s_g * moments.g_tilde,
        f_tilde=s_f[:, None] * moments.f_tilde,
        gamma_tilde=moments.gamma_tilde,
        phi_tilde=moments.phi_tilde,
        cross_fg=s_g * s_f[:, None] * moments.cross_fg,
        cross_ff=s_f[:, None, None] * s_f[None, :, None] * moments.cross_ff,
    )
    return replace(result, theta=new_theta, moments=new_moments)
