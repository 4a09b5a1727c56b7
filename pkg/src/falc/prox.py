"""Closed-form shrinkage (prox) operators and norm-ball projections.

All operators solve instances of

    argmin_x  delta * ||x||_p + 0.5 * ||x - y||_2^2     (optionally s.t. ||x||_p <= radius)

for p in {1, 2, inf}, on vectors or on singular values of matrices. Every
function is pure; ``radius=inf`` disables the ball constraint. Ties at a
threshold resolve to exactly zero (sign(0) = 0), so sparse outputs carry
exact zeros rather than epsilon noise.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import NormIndex, svd_full, vec_norm


def project_ball(y, gamma, radius):
    """Euclidean projection of y onto the gamma-norm ball of the given radius."""
    gamma = NormIndex.of(gamma)
    y = np.asarray(y, dtype=np.float64)
    if radius < 0:
        raise ValueError("ball radius must be >= 0")
    if y.size == 0 or np.isinf(radius):
        return y.copy()
    if radius == 0.0:
        return np.zeros_like(y)
    if gamma is NormIndex.TWO:
        nrm = np.linalg.norm(y)
        return y.copy() if nrm <= radius else (radius / nrm) * y
    if gamma is NormIndex.INF:
        return np.clip(y, -radius, radius)
    # ell_1: sort-based threshold shift
    a = np.abs(y)
    if a.sum() <= radius:
        return y.copy()
    srt = np.sort(a)[::-1]
    css = np.cumsum(srt)
    k = np.arange(1, a.size + 1)
    valid = srt > (css - radius) / k
    kk = int(np.max(np.nonzero(valid)[0])) + 1
    theta = (css[kk - 1] - radius) / kk
    return np.sign(y) * np.maximum(a - theta, 0.0)


def shrink_vec(y, delta, beta):
    """Unconstrained vector shrinkage: argmin 0.5||x-y||^2 + delta*||x||_beta."""
    beta = NormIndex.of(beta)
    y = np.asarray(y, dtype=np.float64)
    if delta < 0:
        raise ValueError("shrinkage weight must be >= 0")
    if y.size == 0 or delta == 0.0:
        return y.copy()
    if beta is NormIndex.ONE:
        return np.sign(y) * np.maximum(np.abs(y) - delta, 0.0)
    if beta is NormIndex.TWO:
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return np.zeros_like(y)
        return y * max(1.0 - delta / nrm, 0.0)
    # ell_inf via Moreau: prox = y - projection onto the dual (ell_1) ball
    return y - project_ball(y, NormIndex.ONE, delta)


def shrink_vec_ball(y, delta, beta, radius):
    """Vector shrinkage constrained to the beta-norm ball of the given radius.

    If the unconstrained shrinkage already satisfies the ball it is returned
    unchanged; otherwise the solution lies on the boundary and has the
    closed form of the corresponding norm.
    """
    beta = NormIndex.of(beta)
    y = np.asarray(y, dtype=np.float64)
    if radius < 0:
        raise ValueError("ball radius must be >= 0")
    u = shrink_vec(y, delta, beta)
    if np.isinf(radius) or vec_norm(u, beta) <= radius:
        return u
    if radius == 0.0:
        return np.zeros_like(y)
    if beta is NormIndex.TWO:
        return (radius / np.linalg.norm(y)) * y
    if beta is NormIndex.INF:
        return np.sign(y) * np.minimum(np.abs(y), radius)
    # ell_1: unique boundary threshold >= delta; identical waterline as the
    # ell_1-ball projection with the ball radius
    return project_ball(y, NormIndex.ONE, radius)


@dataclass
class ShrinkResult:
    """Matrix shrinkage output.

    `constrained` solves the ball-constrained problem, `unconstrained`
    ignores the ball (needed for subgradient certificates). Both come from a
    single SVD; the shrunk singular values are kept so callers can read
    Schatten norms without re-decomposing.
    """

    constrained: np.ndarray
    unconstrained: np.ndarray
    constrained_sv: np.ndarray | None = None
    unconstrained_sv: np.ndarray | None = None
    used_svd: bool = False


def _rebuild(u, sv, vt):
    nz = np.nonzero(sv)[0]
    if nz.size == 0:
        return np.zeros((u.shape[0], vt.shape[1]))
    return (u[:, nz] * sv[nz]) @ vt[nz, :]


def shrink_matrix(y, delta, alpha, radius):
    """Schatten-norm shrinkage: apply the vector operators to sigma(y).

    alpha=2 needs no SVD (Frobenius shrinkage acts on y directly). For
    alpha in {1, inf} one SVD produces both the constrained and the
    unconstrained solution.
    """
    alpha = NormIndex.of(alpha)
    y = np.asarray(y, dtype=np.float64)
    if delta < 0 or radius < 0:
        raise ValueError("delta and radius must be >= 0")
    if alpha is NormIndex.TWO:
        nrm = float(np.linalg.norm(y, "fro"))
        unc = y * max(1.0 - delta / nrm, 0.0) if (delta > 0 and nrm > 0) else y.copy()
        unc_nrm = float(np.linalg.norm(unc, "fro"))
        if np.isinf(radius) or unc_nrm <= radius:
            con = unc.copy()
        else:
            con = (radius / nrm) * y
        return ShrinkResult(con, unc)
    if delta == 0.0 and np.isinf(radius):
        return ShrinkResult(y.copy(), y.copy())
    f = svd_full(y)
    sv_unc = shrink_vec(f.singular_values, delta, alpha)
    sv_con = shrink_vec_ball(f.singular_values, delta, alpha, radius)
    return ShrinkResult(
        _rebuild(f.u, sv_con, f.vt),
        _rebuild(f.u, sv_unc, f.vt),
        constrained_sv=sv_con,
        unconstrained_sv=sv_unc,
        used_svd=True,
    )
