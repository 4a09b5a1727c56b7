"""Dense linear algebra: SVD, linear operators on matrices, norms.

Everything operates on plain float64 numpy arrays. Matrices are 2-d arrays,
vectors 1-d; ``vec``/``unvec`` use column-major (Fortran) stacking so that
vec(X) stacks the columns of X in order.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .rng import CounterRng

_POWER_SEED = 0x5EED0F_A105


class SvdError(RuntimeError):
    """SVD failed to converge; never return silent garbage."""


class ShapeError(ValueError):
    """Dimension mismatch between an operator and its argument."""


class NormIndex(Enum):
    """Vector norm selector: ell_1, ell_2 or ell_inf.

    Applied to singular values it selects the nuclear, Frobenius or
    2-operator norm of a matrix. ``dual`` pairs (1, inf) and fixes 2.
    """

    ONE = 1
    TWO = 2
    INF = 3

    @property
    def p(self):
        return {NormIndex.ONE: 1.0, NormIndex.TWO: 2.0, NormIndex.INF: np.inf}[self]

    @property
    def dual(self):
        return {NormIndex.ONE: NormIndex.INF,
                NormIndex.TWO: NormIndex.TWO,
                NormIndex.INF: NormIndex.ONE}[self]

    @classmethod
    def of(cls, value):
        """Coerce 1 / 2 / inf (or an existing NormIndex) to a NormIndex."""
        if isinstance(value, cls):
            return value
        if value == 1:
            return cls.ONE
        if value == 2:
            return cls.TWO
        if value in ("inf", np.inf):
            return cls.INF
        raise ValueError(f"norm index must be 1, 2 or inf, got {value!r}")


def require_finite(a, what="array"):
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} contains NaN or Inf")
    return a


def vec(x):
    """Column-major vectorization (stack the columns of x in order)."""
    return np.asarray(x, dtype=np.float64).ravel(order="F")


def unvec(v, shape):
    """Inverse of :func:`vec`."""
    m, n = shape
    v = np.asarray(v, dtype=np.float64)
    if v.size != m * n:
        raise ShapeError(f"cannot reshape length {v.size} into {shape}")
    return v.reshape((m, n), order="F")


def vec_norm(v, p):
    """Vector p-norm for p in {1, 2, inf}; empty vectors have norm 0."""
    p = NormIndex.of(p)
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        return 0.0
    if p is NormIndex.ONE:
        return float(np.sum(np.abs(v)))
    if p is NormIndex.TWO:
        return float(np.linalg.norm(v))
    return float(np.max(np.abs(v)))


@dataclass
class SvdResult:
    """Thin SVD: u (m x r), singular_values (r, nonincreasing), vt (r x n)."""

    u: np.ndarray
    singular_values: np.ndarray
    vt: np.ndarray

    def reconstruct(self):
        return (self.u * self.singular_values) @ self.vt


def svd_full(a):
    """Thin SVD of a dense matrix with r = min(m, n).

    Raises SvdError if the LAPACK driver fails to converge (a slower but
    more robust driver is tried first as a fallback).
    """
    a = require_finite(a, "svd input")
    if a.ndim != 2 or min(a.shape) < 1:
        raise ShapeError("svd_full needs a 2-d matrix with positive dims")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError:
        try:
            import scipy.linalg as sla

            u, s, vt = sla.svd(a, full_matrices=False, lapack_driver="gesvd")
        except Exception as exc:  # pragma: no cover - defensive path
            raise SvdError(f"SVD did not converge for shape {a.shape}") from exc
    return SvdResult(np.ascontiguousarray(u), np.ascontiguousarray(s),
                     np.ascontiguousarray(vt))


def svd_truncated(a, k):
    """Top-k singular triplets.

    Below min-dimension 500 this is full SVD plus truncation; above, a
    randomized block power iteration (oversampling 8, 4 subspace passes)
    with a deterministic test matrix.
    """
    a = require_finite(a, "svd input")
    r = min(a.shape)
    if not 1 <= k <= r:
        raise ShapeError(f"truncation rank {k} outside [1, {r}]")
    if r < 500:
        full = svd_full(a)
        return SvdResult(full.u[:, :k].copy(), full.singular_values[:k].copy(),
                         full.vt[:k, :].copy())
    rng = CounterRng(_POWER_SEED)
    width = min(k + 8, r)
    omega = rng.gaussian((a.shape[1], width))
    y = a @ omega
    for _ in range(4):
        y, _ = np.linalg.qr(y)
        y = a @ (a.T @ y)
    q, _ = np.linalg.qr(y)
    b = q.T @ a
    small = svd_full(b)
    return SvdResult(q @ small.u[:, :k], small.singular_values[:k].copy(),
                     small.vt[:k, :].copy())


def schatten_norm(x, alpha):
    """Norm of the singular-value vector: alpha=1 nuclear, 2 Frobenius, inf spectral.

    alpha=2 is computed without an SVD (it equals the Frobenius norm).
    """
    alpha = NormIndex.of(alpha)
    x = np.asarray(x, dtype=np.float64)
    if alpha is NormIndex.TWO:
        return float(np.linalg.norm(x, "fro"))
    return vec_norm(svd_full(x).singular_values, alpha)


def norm_factor_I(alpha, m, n):
    """Schatten-norm / Frobenius equivalence factor: sqrt(min(m,n)) for inf, else 1."""
    return float(np.sqrt(min(m, n))) if NormIndex.of(alpha) is NormIndex.INF else 1.0


def norm_factor_J(beta, p):
    """Vector-norm / ell_2 equivalence factor: sqrt(p) for inf, else 1."""
    return float(np.sqrt(p)) if NormIndex.of(beta) is NormIndex.INF else 1.0


# ---------------------------------------------------------------------------
# Linear operators R^{m x n} -> R^q (closed variant set)
# ---------------------------------------------------------------------------


class LinearMap:
    """Base for the closed set of operator variants used in constraint blocks."""

    in_shape = None
    out_dim = None

    def apply(self, x):
        raise NotImplementedError

    def adjoint(self, z):
        raise NotImplementedError

    def as_dense(self):
        """Explicit (out_dim x m*n) matrix acting on vec(X); for tests/small dims."""
        m, n = self.in_shape
        cols = []
        for j in range(m * n):
            e = np.zeros(m * n)
            e[j] = 1.0
            cols.append(self.apply(unvec(e, self.in_shape)))
        if self.out_dim == 0:
            return np.zeros((0, m * n))
        return np.stack(cols, axis=1)

    def _check_in(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.in_shape:
            raise ShapeError(f"operator expects {self.in_shape}, got {x.shape}")
        return x

    def _check_out(self, z):
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.out_dim,):
            raise ShapeError(f"adjoint expects ({self.out_dim},), got {z.shape}")
        return z


class ZeroMap(LinearMap):
    """Maps every matrix to the empty vector."""

    def __init__(self, in_shape):
        self.in_shape = tuple(in_shape)
        self.out_dim = 0

    def apply(self, x):
        self._check_in(x)
        return np.zeros(0)

    def adjoint(self, z):
        self._check_out(z)
        return np.zeros(self.in_shape)


class VectorizeMap(LinearMap):
    """X -> vec(X), column-major."""

    def __init__(self, in_shape):
        self.in_shape = tuple(in_shape)
        self.out_dim = in_shape[0] * in_shape[1]

    def apply(self, x):
        return vec(self._check_in(x))

    def adjoint(self, z):
        return unvec(self._check_out(z), self.in_shape)


class SamplingMap(LinearMap):
    """X -> (X[i, j] for (i, j) in indices), in the given order."""

    def __init__(self, in_shape, indices):
        self.in_shape = tuple(in_shape)
        idx = np.asarray(indices, dtype=np.intp)
        if idx.ndim != 2 or idx.shape[1] != 2 or idx.shape[0] == 0:
            raise ShapeError("indices must be a nonempty (k, 2) array")
        if (idx[:, 0].min() < 0 or idx[:, 0].max() >= in_shape[0]
                or idx[:, 1].min() < 0 or idx[:, 1].max() >= in_shape[1]):
            raise ShapeError("sampling index out of range")
        self.rows = idx[:, 0].copy()
        self.cols = idx[:, 1].copy()
        self.out_dim = idx.shape[0]

    def apply(self, x):
        return self._check_in(x)[self.rows, self.cols].astype(np.float64)

    def adjoint(self, z):
        z = self._check_out(z)
        out = np.zeros(self.in_shape)
        np.add.at(out, (self.rows, self.cols), z)
        return out


class DenseOperatorMap(LinearMap):
    """X -> A vec(X) for an explicit (q x m*n) matrix A."""

    def __init__(self, in_shape, matrix):
        self.in_shape = tuple(in_shape)
        a = require_finite(matrix, "operator matrix")
        if a.ndim != 2 or a.shape[1] != in_shape[0] * in_shape[1]:
            raise ShapeError(
                f"operator matrix must have {in_shape[0] * in_shape[1]} columns")
        self.matrix = a
        self.out_dim = a.shape[0]

    def apply(self, x):
        return self.matrix @ vec(self._check_in(x))

    def adjoint(self, z):
        return unvec(self.matrix.T @ self._check_out(z), self.in_shape)


class ScaledMap(LinearMap):
    """c * inner(X)."""

    def __init__(self, inner, scale):
        self.inner = inner
        self.scale = float(scale)
        self.in_shape = inner.in_shape
        self.out_dim = inner.out_dim

    def apply(self, x):
        return self.scale * self.inner.apply(x)

    def adjoint(self, z):
        return self.scale * self.inner.adjoint(z)


# ---------------------------------------------------------------------------
# Operator norms by power iteration (deterministic start vector)
# ---------------------------------------------------------------------------


def _power_iteration(mtm, dim, tol=1e-8, max_iter=20000):
    """Largest eigenvalue of the PSD operator `mtm` on R^dim."""
    if dim == 0:
        return 0.0
    v = CounterRng(_POWER_SEED).gaussian((dim,))
    v /= np.linalg.norm(v)
    lam = 0.0
    hits = 0
    for _ in range(max_iter):
        w = mtm(v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        lam_new = float(v @ w)
        v = w / nw
        # successive Rayleigh quotients can plateau before converging when the
        # top eigenvalues nearly coincide; require a few consecutive hits
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300):
            hits += 1
            if hits >= 3:
                return lam_new
        else:
            hits = 0
        lam = lam_new
    return lam


def matrix_two_norm(a, tol=1e-10):
    """Spectral norm sigma_max(a) by power iteration on a^T a."""
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        return 0.0
    lam = _power_iteration(lambda v: a.T @ (a @ v), a.shape[1], tol=tol)
    return float(np.sqrt(max(lam, 0.0)))


def sigma_max_stacked(rows, tol=1e-8):
    """sigma_max of the stacked constraint matrix M.

    Each entry of `rows` is (map, n_slacks): one block row of M consisting of
    n_slacks identity blocks (one per slack attached to the block) followed by
    the operator's matrix columns acting on vec(X). Computed by power
    iteration on M^T M; never materializes M.
    """
    if not rows:
        raise ValueError("at least one block row required")
    in_shape = rows[0][0].in_shape
    mn = in_shape[0] * in_shape[1]
    slack_dims = []
    for mp, n_slacks in rows:
        if mp.in_shape != in_shape:
            raise ShapeError("all block operators must share in_shape")
        slack_dims.append([mp.out_dim] * n_slacks)
    offsets = []
    pos = 0
    for dims in slack_dims:
        offsets.append([(pos + i * d, d) for i, d in enumerate(dims)] if dims else [])
        pos += sum(dims)
    total_slack = pos

    def mtm(v):
        x = unvec(v[total_slack:], in_shape)
        out = np.zeros_like(v)
        for (mp, _), offs in zip(rows, offsets):
            z = mp.apply(x)
            for start, d in offs:
                z = z + v[start:start + d]
            for start, d in offs:
                out[start:start + d] += z
            out[total_slack:] += vec(mp.adjoint(z))
        return out

    lam = _power_iteration(mtm, total_slack + mn, tol=tol)
    return float(np.sqrt(max(lam, 0.0)))
