"""E-step: joint Gaussian blocks and the conditional law of the latents.

Stacking the latents h_i = (g_i, f_i^1, .., f_i^p) and the centered
observations, the model implies a joint Gaussian whose covariance splits
into three blocks:

    s1 : (p+1, p+1)       Cov(h)
    s2 : (p+1, q_total)   Cov(h, z)
    s3 : (q_total, q_total)  Cov(z)

Conditioning on the observations gives h_i | z_i ~ N(M_i, Sigma) with a
per-unit mean and a covariance shared by all units:

    M_i   = s2 s3^{-1} mu_i,   mu_i = z_i minus its covariate mean
    Sigma = s1 - s2 s3^{-1} s2'

s3 is factorized once and the factorization reused across all n units.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import spd_cholesky, spd_solve
from .model import Dataset, Dimensions, Theta
from .errors import DataError

__all__ = [
    "JointBlocks",
    "ConditionalLaw",
    "PosteriorMoments",
    "build_joint_blocks",
    "stacked_residuals",
    "conditional_law",
    "posterior_moments",
]


@dataclass
class JointBlocks:
    """Covariance blocks of the joint (latent, observed) distribution."""

    s1: np.ndarray
    s2: np.ndarray
    s3: np.ndarray


@dataclass
class ConditionalLaw:
    """Gaussian law of the latents given the observations.

    m : (n, p+1) conditional means, one row per unit
    sigma : (p+1, p+1) conditional covariance, identical for every unit
    """

    m: np.ndarray
    sigma: np.ndarray


@dataclass
class PosteriorMoments:
    """First and second conditional moments of the latents.

    g_tilde : (n,)       E[g_i | z_i]
    f_tilde : (p, n)     E[f_i^m | z_i]
    gamma_tilde : (n,)   E[g_i^2 | z_i]
    phi_tilde : (p, n)   E[(f_i^m)^2 | z_i]
    cross_fg : (p, n)    E[f_i^m g_i | z_i]
    cross_ff : (p, p, n) E[f_i^m f_i^l | z_i]
    """

    g_tilde: np.ndarray
    f_tilde: np.ndarray
    gamma_tilde: np.ndarray
    phi_tilde: np.ndarray
    cross_fg: np.ndarray
    cross_ff: np.ndarray


def build_joint_blocks(theta: Theta, dims: Dimensions) -> JointBlocks:
    """Assemble s1, s2, s3 from the model parameters.

    Cross-covariances between distinct explanatory blocks are exactly
    zero; the only couplings run through g.
    """
    if theta.sigma2_y <= 0 or any(s <= 0 for s in theta.sigma2_m):
        raise DataError(
            "joint covariance needs strictly positive noise variances, got "
            f"sigma2_y={theta.sigma2_y}, sigma2_m={theta.sigma2_m}"
        )
    p, q_y = dims.p, dims.q_y
    c, b = theta.c, theta.b
    g_var = float(c @ c) + 1.0

    s1 = np.eye(p + 1)
    s1[0, 0] = g_var
    s1[0, 1:] = c
    s1[1:, 0] = c

    offsets = np.cumsum([0, q_y, *dims.q_m])
    q_total = offsets[-1]

    s2 = np.zeros((p + 1, q_total))
    s2[0, :q_y] = g_var * b
    for m, am in enumerate(theta.a_m):
        lo, hi = offsets[m + 1], offsets[m + 2]
        s2[0, lo:hi] = c[m] * am
        s2[m + 1, :q_y] = c[m] * b
        s2[m + 1, lo:hi] = am

    s3 = np.zeros((q_total, q_total))
    s3[:q_y, :q_y] = g_var * np.outer(b, b) + theta.sigma2_y * np.eye(q_y)
    for m, am in enumerate(theta.a_m):
        lo, hi = offsets[m + 1], offsets[m + 2]
        s3[lo:hi, lo:hi] = np.outer(am, am) + theta.sigma2_m[m] * np.eye(hi - lo)
        cross = c[m] * np.outer(b, am)
        s3[:q_y, lo:hi] = cross
        s3[lo:hi, :q_y] = cross.T
    return JointBlocks(s1=s1, s2=s2, s3=s3)


def stacked_residuals(theta: Theta, data: Dataset) -> np.ndarray:
    """(n, q_total) matrix of observations minus their covariate means."""
    parts = [data.y - data.t @ theta.d]
    parts += [xm - tm @ dm for xm, tm, dm in zip(data.x, data.t_m, theta.d_m)]
    return np.concatenate(parts, axis=1)


def conditional_law(theta: Theta, data: Dataset, jitter: float = 0.0) -> ConditionalLaw:
    """Exact conditional distribution of the latents for every unit.

    Raises NotPositiveDefiniteError (annotated with the parameter state)
    if the observed-block covariance cannot be factorized; pass a small
    ``jitter`` to add to its diagonal only when explicitly configured.
    """
    dims = data.dimensions()
    blocks = build_joint_blocks(theta, dims)
    context = (
        "observed-block covariance not positive definite "
        f"(sigma2_y={theta.sigma2_y:.3e}, "
        f"sigma2_m={tuple(float(f'{s:.3e}') for s in theta.sigma2_m)}, "
        f"c={np.array2string(theta.c, precision=3)})"
    )
    chol = spd_cholesky(blocks.s3, jitter=jitter, context=context)
    w = spd_solve(chol, blocks.s2.T)            # (q_total, p+1)
    sigma = blocks.s1 - blocks.s2 @ w
    sigma = 0.5 * (sigma + sigma.T)
    m = stacked_residuals(theta, data) @ w      # (n, p+1)
    return ConditionalLaw(m=m, sigma=sigma)


def posterior_moments(law: ConditionalLaw) -> PosteriorMoments:
    """All conditional moments needed by the closed-form updates."""
    m, sigma = law.m, law.sigma
    g_tilde = m[:, 0]
    f_tilde = m[:, 1:].T
    gamma_tilde = g_tilde**2 + sigma[0, 0]
    phi_tilde = f_tilde**2 + np.diag(sigma)[1:, None]
    cross_fg = sigma[1:, 0][:, None] + f_tilde * g_tilde
    cross_ff = sigma[1:, 1:][:, :, None] + f_tilde[:, None, :] * f_tilde[None, :, :]
    return PosteriorMoments(
        g_tilde=g_tilde,
        f_tilde=f_tilde,
        gamma_tilde=gamma_tilde,
        phi_tilde=phi_tilde,
        cross_fg=cross_fg,
        cross_ff=cross_ff,
    )
