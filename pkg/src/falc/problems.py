"""Problem specifications, presets, random instances and recovery metrics.

A problem minimizes  mu1*||sigma(X)||_alpha + mu2*||s||_beta  subject to a
list of constraint blocks  L_i(X) (+ s_i) (+ y_i) = r_i  where each block may
carry a penalized slack s (weighted by mu2, norm beta) and/or a bounded slack
y (||y||_gamma <= rho). Blocks with neither slack are hard equalities.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from . import matio
from .linalg import (DenseOperatorMap, NormIndex, SamplingMap, ShapeError,
                     VectorizeMap, matrix_two_norm, require_finite, svd_full,
                     unvec, vec, vec_norm)
from .rng import CounterRng


@dataclass
class ConstraintBlock:
    """One affine block L(X) (+s) (+y) = rhs with its running multiplier."""

    map: object
    rhs: np.ndarray
    has_beta_slack: bool = False
    has_gamma_slack: bool = False
    multiplier: np.ndarray | None = None

    def initial_multiplier(self):
        if self.multiplier is None:
            return np.zeros(self.map.out_dim)
        return np.array(self.multiplier, dtype=np.float64)


@dataclass
class ProblemSpec:
    m: int
    n: int
    alpha: NormIndex
    beta: NormIndex
    gamma: NormIndex
    mu1: float
    mu2: float
    rho: float
    blocks: list
    label: str = ""

    def validate(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("matrix shape must be positive")
        if self.mu1 < 0 or self.mu2 < 0:
            raise ValueError("norm weights must be >= 0")
        if self.mu1 == 0 and self.mu2 == 0:
            raise ValueError("at least one of mu1, mu2 must be positive")
        if self.rho < 0:
            raise ValueError("rho must be >= 0")
        if not self.blocks:
            raise ValueError("at least one constraint block required")
        for i, blk in enumerate(self.blocks):
            if blk.map.in_shape != (self.m, self.n):
                raise ShapeError(f"block {i}: operator shape {blk.map.in_shape} "
                                 f"!= ({self.m}, {self.n})")
            rhs = require_finite(blk.rhs, f"block {i} rhs")
            if rhs.shape != (blk.map.out_dim,):
                raise ShapeError(f"block {i}: rhs length {rhs.size} != "
                                 f"operator out_dim {blk.map.out_dim}")
            if blk.multiplier is not None:
                mult = require_finite(blk.multiplier, f"block {i} multiplier")
                if mult.shape != rhs.shape:
                    raise ShapeError(f"block {i}: multiplier/rhs length mismatch")
        return self

    def objective(self, x, s_by_block=None):
        """mu1*||sigma(X)||_alpha + mu2*||C(X)-d||_beta of a candidate X.

        The beta term measures the actual constraint residuals of the
        beta-slack blocks (their implied slack d - C(X)), independent of any
        solver-produced slack values.
        """
        from .linalg import schatten_norm

        obj = self.mu1 * schatten_norm(x, self.alpha) if self.mu1 > 0 else 0.0
        if self.mu2 > 0:
            parts = [blk.rhs - blk.map.apply(x)
                     for blk in self.blocks if blk.has_beta_slack]
            if parts:
                obj += self.mu2 * vec_norm(np.concatenate(parts), self.beta)
        return obj


def sign_scaled_multiplier(d, mu2):
    """Initial multiplier vec(sign(D)) / max(||sign(D)||_2, ||.||_inf / mu2)."""
    s = np.sign(np.asarray(d, dtype=np.float64))
    peak = float(np.max(np.abs(s))) if s.size else 0.0
    if peak == 0.0:
        return np.zeros(s.size)
    denom = max(matrix_two_norm(s), peak / mu2 if mu2 > 0 else 0.0)
    return vec(s) / denom


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------


def preset_robust_pca(d, mu2):
    """min ||X||_* + mu2*||vec(S)||_1  s.t.  X + S = D."""
    if mu2 <= 0:
        raise ValueError("mu2 must be positive")
    d = require_finite(d, "data matrix")
    m, n = d.shape
    block = ConstraintBlock(
        map=VectorizeMap((m, n)),
        rhs=vec(d),
        has_beta_slack=True,
        multiplier=sign_scaled_multiplier(d, mu2),
    )
    return ProblemSpec(m, n, NormIndex.ONE, NormIndex.ONE, NormIndex.TWO,
                       1.0, mu2, 0.0, [block], label="robust_pca").validate()


def preset_stable_pcp(d, mu2, rho):
    """min ||X||_* + mu2*||vec(S)||_1  s.t.  ||vec(X + S - D)||_inf <= rho."""
    if mu2 <= 0:
        raise ValueError("mu2 must be positive")
    if rho < 0:
        raise ValueError("rho must be >= 0")
    d = require_finite(d, "data matrix")
    m, n = d.shape
    block = ConstraintBlock(
        map=VectorizeMap((m, n)),
        rhs=vec(d),
        has_beta_slack=True,
        has_gamma_slack=rho > 0,
        multiplier=sign_scaled_multiplier(d, mu2),
    )
    return ProblemSpec(m, n, NormIndex.ONE, NormIndex.ONE, NormIndex.INF,
                       1.0, mu2, rho, [block], label="stable_pcp").validate()


def preset_matrix_completion(indices, values, m, n):
    """min ||X||_*  s.t.  X_ij = values for (i, j) in indices."""
    values = require_finite(values, "observed values")
    block = ConstraintBlock(map=SamplingMap((m, n), indices),
                            rhs=np.asarray(values, dtype=np.float64))
    return ProblemSpec(m, n, NormIndex.ONE, NormIndex.ONE, NormIndex.TWO,
                       1.0, 0.0, 0.0, [block],
                       label="matrix_completion").validate()


def preset_basis_pursuit(a, b):
    """min ||x||_1  s.t.  A x = b, with x as an n x 1 matrix variable.

    The ell_1 objective is carried by a penalized slack s = -x on an
    identity block (rhs 0), while A x = b is a hard equality block.
    """
    a = require_finite(a, "measurement matrix")
    b = require_finite(b, "measurements")
    q, n = a.shape
    if b.shape != (q,):
        raise ShapeError("b length must match the rows of A")
    objective_block = ConstraintBlock(map=VectorizeMap((n, 1)),
                                      rhs=np.zeros(n), has_beta_slack=True)
    equality_block = ConstraintBlock(map=DenseOperatorMap((n, 1), a), rhs=b)
    return ProblemSpec(n, 1, NormIndex.ONE, NormIndex.ONE, NormIndex.TWO,
                       0.0, 1.0, 0.0, [objective_block, equality_block],
                       label="basis_pursuit").validate()


# ---------------------------------------------------------------------------
# Random instances (low rank + sparse + noise)
# ---------------------------------------------------------------------------


@dataclass
class GroundTruth:
    x0: np.ndarray
    s0: np.ndarray
    y0: np.ndarray
    support: np.ndarray  # (k, 2) int array of planted sparse cells
    rank_true: int


def generate_instance(n, rank_frac=0.05, sparse_frac=0.05, rho_noise=0.0,
                      seed=0, noise_dist="uniform"):
    """D = X0 + S0 + Y0 with planted rank, sparsity pattern and noise.

    X0 = U V^T with iid standard Gaussian factors of rank round(rank_frac*n);
    S0 has floor(sparse_frac*n^2) uniform [-1, 1) entries on a uniformly
    sampled support; Y0 is dense rho_noise-scaled noise, uniform [-1, 1) by
    default or standard Gaussian with noise_dist="gaussian". Deterministic
    given the seed; draw order is U, V, support, S values, Y.
    """
    if not (0 < rank_frac < 1 and 0 < sparse_frac < 1):
        raise ValueError("rank_frac and sparse_frac must lie in (0, 1)")
    r = int(np.floor(n * rank_frac + 0.5))
    if r < 1:
        raise ValueError("n * rank_frac must be >= 1")
    k = int(np.floor(sparse_frac * n * n))
    rng = CounterRng(seed)
    u = rng.gaussian((n, r))
    v = rng.gaussian((n, r))
    x0 = u @ v.T
    cells = rng.index_sample(n * n, k)
    rows, cols = cells // n, cells % n
    s0 = np.zeros((n, n))
    s0[rows, cols] = rng.uniform_pm1((k,))
    if noise_dist == "uniform":
        y0 = rho_noise * rng.uniform_pm1((n, n))
    elif noise_dist == "gaussian":
        y0 = rho_noise * rng.gaussian((n, n))
    else:
        raise ValueError("noise_dist must be 'uniform' or 'gaussian'")
    if rho_noise == 0.0:
        y0 = np.zeros((n, n))
    truth = GroundTruth(x0, s0, y0, np.column_stack([rows, cols]), r)
    return truth, x0 + s0 + y0


def save_instance(path, truth, d, rho_noise, seed):
    os.makedirs(path, exist_ok=True)
    matio.write_matrix_fmat(os.path.join(path, "D.fmat"), d)
    matio.write_matrix_fmat(os.path.join(path, "X0.fmat"), truth.x0)
    matio.write_matrix_fmat(os.path.join(path, "S0.fmat"), truth.s0)
    matio.write_matrix_fmat(os.path.join(path, "Y0.fmat"), truth.y0)
    meta = {
        "n": int(d.shape[0]),
        "r": int(truth.rank_true),
        "support_size": int(truth.support.shape[0]),
        "rho_noise": float(rho_noise),
        "seed": int(seed),
        "support": [[int(i), int(j)] for i, j in truth.support],
    }
    with open(os.path.join(path, "meta.json"), "w") as fh:
        json.dump(meta, fh)


def load_instance(path):
    d = matio.read_matrix_fmat(os.path.join(path, "D.fmat"))
    x0 = matio.read_matrix_fmat(os.path.join(path, "X0.fmat"))
    s0 = matio.read_matrix_fmat(os.path.join(path, "S0.fmat"))
    y0 = matio.read_matrix_fmat(os.path.join(path, "Y0.fmat"))
    with open(os.path.join(path, "meta.json")) as fh:
        meta = json.load(fh)
    support = np.asarray(meta["support"], dtype=np.intp).reshape(-1, 2)
    truth = GroundTruth(x0, s0, y0, support, int(meta["r"]))
    return truth, d, meta


# ---------------------------------------------------------------------------
# Recovery metrics
# ---------------------------------------------------------------------------


@dataclass
class MetricsRow:
    svd_count: int
    rel_err_X: float
    rel_err_S: float
    rel_nuclear_gap: float
    max_sv_err_on_support: float
    max_sv_on_zero_svs: float
    rel_l1_gap: float
    max_S_err_on_support: float
    max_S_on_zero_set: float
    rank_est: int
    rel_infeasibility: float
    cpu_seconds: float

    FIELDS = ("svd_count", "rel_err_X", "rel_err_S", "rel_nuclear_gap",
              "max_sv_err_on_support", "max_sv_on_zero_svs", "rel_l1_gap",
              "max_S_err_on_support", "max_S_on_zero_set", "rank_est",
              "rel_infeasibility", "cpu_seconds")

    def as_dict(self):
        return {name: getattr(self, name) for name in self.FIELDS}


def estimate_rank(x):
    """Numerical rank: singular values above max(m,n)*eps*sigma_max, refined
    by truncating at the deepest relative gap (ratio < 1e-3) below that count.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0 or not np.any(x):
        return 0
    sv = svd_full(x).singular_values
    tol = max(x.shape) * np.finfo(np.float64).eps * sv[0]
    k0 = int(np.sum(sv > tol))
    if k0 == 0:
        return 0
    gaps = [i for i in range(k0 - 1) if sv[i + 1] < 1e-3 * sv[i]]
    if gaps:
        return max(gaps) + 1
    return k0


def sparse_part(report, spec):
    """Reshape the solved beta-slack back into the m x n sparse component."""
    for blk, slack in zip(spec.blocks, report.slacks_final):
        if blk.has_beta_slack:
            if blk.map.out_dim != spec.m * spec.n:
                raise ShapeError("sparse component metrics need a full "
                                 "vectorized beta block")
            return unvec(slack["s"], (spec.m, spec.n))
    raise ValueError("problem has no beta-slack block")


def compute_metrics(report, truth, spec):
    """All recovery-table fields for one solved instance."""
    x_sol = report.x_final
    s_sol = sparse_part(report, spec)
    d = truth.x0 + truth.s0 + truth.y0

    sv_sol = svd_full(x_sol).singular_values
    sv_true = svd_full(truth.x0).singular_values
    on = sv_true > 0
    nuc_sol, nuc_true = float(np.sum(sv_sol)), float(np.sum(sv_true))

    mask = np.zeros(truth.s0.shape, dtype=bool)
    mask[truth.support[:, 0], truth.support[:, 1]] = True

    l1_sol = float(np.sum(np.abs(s_sol)))
    l1_true = float(np.sum(np.abs(truth.s0)))

    return MetricsRow(
        svd_count=report.svd_count,
        rel_err_X=float(np.linalg.norm(x_sol - truth.x0, "fro")
                        / np.linalg.norm(truth.x0, "fro")),
        rel_err_S=float(np.linalg.norm(s_sol - truth.s0, "fro")
                        / np.linalg.norm(truth.s0, "fro")),
        rel_nuclear_gap=abs(nuc_sol - nuc_true) / nuc_true,
        max_sv_err_on_support=float(np.max(np.abs(sv_sol[on] - sv_true[on]))),
        max_sv_on_zero_svs=float(np.max(sv_sol[~on])) if np.any(~on) else 0.0,
        rel_l1_gap=abs(l1_sol - l1_true) / l1_true,
        max_S_err_on_support=float(np.max(np.abs(s_sol[mask] - truth.s0[mask]))),
        max_S_on_zero_set=float(np.max(np.abs(s_sol[~mask]))),
        rank_est=estimate_rank(x_sol),
        rel_infeasibility=float(np.linalg.norm(x_sol + s_sol - d, "fro")
                                / np.linalg.norm(d, "fro")),
        cpu_seconds=report.wall_time,
    )


# ---------------------------------------------------------------------------
# Dual certificate
# ---------------------------------------------------------------------------


@dataclass
class DualPoint:
    """One dual vector per constraint block.

    In the canonical two-block form these are (w, v): `w` concatenates the
    duals of gamma-ball/equality blocks, `v` those of beta-slack blocks. A
    block carrying both slacks contributes its single vector to both roles.
    """

    block_duals: list

    def w(self, spec):
        parts = [u for blk, u in zip(spec.blocks, self.block_duals)
                 if blk.has_gamma_slack or not blk.has_beta_slack]
        return np.concatenate(parts) if parts else np.zeros(0)

    def v(self, spec):
        parts = [u for blk, u in zip(spec.blocks, self.block_duals)
                 if blk.has_beta_slack]
        return np.concatenate(parts) if parts else np.zeros(0)


def _stacked_adjoint(spec, pt):
    out = np.zeros((spec.m, spec.n))
    for blk, u in zip(spec.blocks, pt.block_duals):
        out += blk.map.adjoint(np.asarray(u, dtype=np.float64))
    return out


def dual_objective(spec, pt):
    """sum_i rhs_i^T u_i - rho * ||u_gamma||_{gamma*}."""
    total = 0.0
    gamma_parts = []
    for blk, u in zip(spec.blocks, pt.block_duals):
        u = np.asarray(u, dtype=np.float64)
        total += float(blk.rhs @ u)
        if blk.has_gamma_slack:
            gamma_parts.append(u)
    if gamma_parts:
        total -= spec.rho * vec_norm(np.concatenate(gamma_parts),
                                     spec.gamma.dual)
    return total


def dual_feasible(spec, pt, tol=1e-10):
    """Check ||sigma(sum L_i*(u_i))||_{alpha*} <= mu1 and ||v||_{beta*} <= mu2."""
    from .linalg import schatten_norm

    if schatten_norm(_stacked_adjoint(spec, pt), spec.alpha.dual) > spec.mu1 + tol:
        return False
    v = pt.v(spec)
    if v.size and vec_norm(v, spec.beta.dual) > spec.mu2 + tol:
        return False
    return True


def dual_candidate_from_multipliers(spec, multipliers):
    """Turn the final Lagrange multipliers into a feasible dual point.

    Both feasibility constraints are positively homogeneous, so a single
    scalar shrink restores feasibility. When mu1 = 0 the stacked-adjoint
    constraint is an equality (it must vanish); if a full vectorized
    beta block is present its dual is adjusted to cancel the others.
    """
    from .linalg import schatten_norm

    duals = [np.array(t, dtype=np.float64) for t in multipliers]
    if spec.mu1 == 0:
        for i, blk in enumerate(spec.blocks):
            if blk.has_beta_slack and isinstance(blk.map, VectorizeMap):
                others = np.zeros((spec.m, spec.n))
                for j, other in enumerate(spec.blocks):
                    if j != i:
                        others += other.map.adjoint(duals[j])
                duals[i] = -vec(others)
                break
    pt = DualPoint(duals)
    scale = 1.0
    stack_norm = schatten_norm(_stacked_adjoint(spec, pt), spec.alpha.dual)
    if spec.mu1 > 0:
        if stack_norm > 0:
            scale = min(scale, spec.mu1 / stack_norm)
    else:
        ref = max([vec_norm(u, NormIndex.TWO) for u in duals] + [1.0])
        if stack_norm > 1e-10 * ref:  # could not cancel: only 0 is feasible
            scale = 0.0
    v = pt.v(spec)
    if v.size:
        vnorm = vec_norm(v, spec.beta.dual)
        if vnorm > 0:
            scale = min(scale, spec.mu2 / vnorm)
    return DualPoint([scale * u for u in pt.block_duals])
