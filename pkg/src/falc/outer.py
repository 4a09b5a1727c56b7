"""Outer augmented Lagrangian loop: multiplier updates, parameter schedules,
initialization, global stopping and diagnostic bound checks.

Each outer iteration k builds the penalty subproblem with multiplier-shifted
right-hand sides r_i + lam*theta_i, hands it to the inner accelerated solver
under the iterate bound eta_k, then updates every multiplier from the
unshifted residuals and advances the (lam, eps, tau, xi) schedule.
"""

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .inner import StopBranch, SubBlock, Subproblem, run_inner
from .linalg import (NormIndex, matrix_two_norm, norm_factor_I, norm_factor_J,
                     sigma_max_stacked, svd_full, vec_norm)


@dataclass
class SolverParams:
    """All schedule constants, thresholds and budgets."""

    c_lambda: float = 0.4
    c_tau: float = 0.4
    c_xi: float = 0.4
    cbar_lambda: float = 2.0
    cbar_tau: float = 0.999
    cbar_xi: float = 0.999
    stall_tol: float = 1e-5          # stagnation threshold on averaged iterates
    stop_grad_x: float | None = 5e-4  # global small-subgradient stop; None = off
    stop_grad_s: float | None = 1e-3
    stop_grad_y: float | None = 1e-3
    max_outer: int = 60
    max_inner: int = 5000
    eps_init_factor: float = 0.99
    schedule: str = "adaptive"        # "adaptive" or "geometric"
    nu: float = 0.4                   # geometric-mode ratio
    lambda_init: float | None = None
    eps_init: float | None = None
    b_x: float | None = None          # geometric-mode iterate-norm bound
    polish_streak: int = 4            # sparsity-pattern stability at a stall exit
    polish_cap: int = 300

    def validate(self):
        for name in ("c_lambda", "c_tau", "c_xi"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        for name in ("cbar_tau", "cbar_xi"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.cbar_lambda <= 0:
            raise ValueError("cbar_lambda must be positive")
        if self.schedule not in ("adaptive", "geometric"):
            raise ValueError("schedule must be 'adaptive' or 'geometric'")
        if not 0 < self.nu < 1:
            raise ValueError("nu must lie in (0, 1)")
        if self.stall_tol <= 0:
            raise ValueError("stall_tol must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration budgets must be >= 1")
        return self


def update_multiplier(theta, residual, lam):
    """theta - residual / lam."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    return theta - residual / lam


class AdaptiveSchedule:
    """Penalty/threshold schedule driven by one probe step per iteration.

    lam shrinks geometrically; the subgradient thresholds chase a fixed
    fraction of the first inner step's certificate norms, never rising.
    """

    def __init__(self, params, lam1, eps1):
        self.p = params
        self.lam = lam1
        self.eps = eps1
        self.tau_x = np.inf
        self.tau_s = np.inf
        self.xi = np.inf
        self.k = 1

    @staticmethod
    def _tighten(current, shrink, fresh):
        # A zero probe norm means that component is already exactly
        # stationary (e.g. an all-zero slack clipped by the prox); pinning
        # the threshold at 0 would block every later certificate exit, so a
        # zero probe leaves the threshold uninitialized or lets it keep its
        # geometric decay instead.
        if fresh <= 0.0:
            return current if np.isinf(current) else shrink * current
        if np.isinf(current):
            return fresh
        return min(shrink * current, fresh)

    def tune(self, g_matrix_norm, g_vec_norm, phi):
        p = self.p
        self.tau_x = self._tighten(self.tau_x, p.c_tau,
                                   p.cbar_tau * g_matrix_norm)
        self.tau_s = self._tighten(self.tau_s, p.c_tau,
                                   p.cbar_tau * g_vec_norm)
        if self.k == 1:
            self.xi = self._tighten(self.xi, p.c_xi, p.cbar_xi * phi)
        else:
            self.xi = self._tighten(self.xi, p.c_xi, phi)
        return self.tau_x, self.tau_s, self.xi

    def advance(self):
        self.lam *= self.p.c_lambda
        self.eps *= self.p.c_lambda ** 2
        self.k += 1


class GeometricSchedule:
    """A-priori schedule: lam and sqrt(eps) shrink with the same ratio nu,
    keeping eps/lam^2 constant; tau is tied to eps through the iterate bound.
    """

    def __init__(self, params, lam1, eps1, b_x, rho):
        self.p = params
        self.lam = lam1
        self.eps = eps1
        self.b_x = b_x
        self.rho = rho
        self.k = 1

    @property
    def tau(self):
        return self.eps / (4.0 * (self.b_x + self.rho))

    @property
    def xi(self):
        return 0.5 * self.eps

    def advance(self):
        self.lam *= self.p.nu
        self.eps *= self.p.nu ** 2
        self.k += 1


@dataclass
class BoundCheck:
    """Measured vs theorem feasibility/gradient bounds on a gap-certified exit."""

    beta_residual: float
    beta_bound: float
    grad_x_norm: float
    grad_x_bound: float

    @property
    def ok(self):
        slack = 1e-9
        return (self.beta_residual <= self.beta_bound * (1 + slack) + slack
                and self.grad_x_norm <= self.grad_x_bound * (1 + slack) + slack)


def diagnostic_bounds(sub, x, s, y, eps):
    """Evaluate the eps-optimality bounds on the smooth gradients.

    These are theorems for an eps-optimal subproblem iterate, so a violation
    flags an implementation bug rather than a data property.
    """
    from .inner import gradient

    gx, gs, _ = gradient(sub, x, s, y)
    sigma_m = np.sqrt(sub.lipschitz)
    m, n = sub.shape
    beta_bound = (norm_factor_J(sub.beta.dual, max(sub.p_dim, 1)) * sub.mu2
                  * sub.lam + sigma_m * np.sqrt(2.0 * eps))
    grad_x_bound = (np.sqrt(2.0 * sub.lipschitz * eps)
                    + norm_factor_I(sub.alpha.dual, m, n) * sub.lam * sub.mu1)
    return BoundCheck(
        beta_residual=float(np.linalg.norm(gs)),
        beta_bound=float(beta_bound),
        grad_x_norm=float(np.linalg.norm(gx, "fro")),
        grad_x_bound=float(grad_x_bound),
    )


class InitError(RuntimeError):
    """Least-norm initialization failed (rank-deficient equality stack)."""


def least_norm_init(entries, shape, tol=1e-12):
    """Minimum-Frobenius-norm solution of the stacked equalities L(X) = r.

    Solved by conjugate gradients on the normal equations L L* w = r with
    X = L*(w); an empty stack yields the zero matrix.
    """
    entries = [(mp, np.asarray(rhs, dtype=np.float64)) for mp, rhs in entries
               if mp.out_dim > 0]
    if not entries:
        return np.zeros(shape)
    dims = [mp.out_dim for mp, _ in entries]
    offsets = np.cumsum([0] + dims)
    total = offsets[-1]
    rhs = np.concatenate([r for _, r in entries])

    def apply_stack(x):
        return np.concatenate([mp.apply(x) for mp, _ in entries])

    def adjoint_stack(w):
        out = np.zeros(shape)
        for (mp, _), a, b in zip(entries, offsets[:-1], offsets[1:]):
            out += mp.adjoint(w[a:b])
        return out

    normal = spla.LinearOperator(
        (total, total), matvec=lambda w: apply_stack(adjoint_stack(w)))
    w, info = spla.cg(normal, rhs, rtol=tol, atol=0.0,
                      maxiter=max(2000, 10 * total))
    if info != 0:
        raise InitError(f"normal-equation CG failed (info={info}) on the "
                        f"{len(entries)}-block equality stack; is the stacked "
                        "operator full row rank?")
    x0 = adjoint_stack(w)
    res = np.linalg.norm(apply_stack(x0) - rhs)
    if res > 1e-8 * max(1.0, np.linalg.norm(rhs)):
        raise InitError(f"least-norm init residual {res:.3e} too large; "
                        "equality stack may be rank deficient")
    return x0


@dataclass
class HistoryRow:
    k: int
    lam: float
    eps: float
    tau_x: float
    tau_s: float
    xi: float
    residual_norms: tuple
    residual_total: float
    objective: float
    multiplier_norms: tuple
    inner_iterations: int
    svd_count: int
    branch: str
    tau_over_lambda: float
    bound_check: BoundCheck | None = None


@dataclass
class SolveReport:
    x_final: np.ndarray
    slacks_final: list
    objective: float
    residuals: list
    outer_iterations: int
    total_inner_iterations: int
    svd_count: int
    wall_time: float
    history: list
    termination: str


def _block_layout(spec):
    """Slack slices for the concatenated s and y vectors."""
    s_slices, y_slices = [], []
    p = q = 0
    for blk in spec.blocks:
        if blk.has_beta_slack:
            s_slices.append(slice(p, p + blk.map.out_dim))
            p += blk.map.out_dim
        else:
            s_slices.append(None)
        if blk.has_gamma_slack:
            y_slices.append(slice(q, q + blk.map.out_dim))
            q += blk.map.out_dim
        else:
            y_slices.append(None)
    return s_slices, y_slices, p, q


def build_subproblem(spec, thetas, lam, x_cap, lipschitz):
    s_slices, y_slices, p, q = _block_layout(spec)
    blocks = [
        SubBlock(map=blk.map, shifted_rhs=blk.rhs + lam * th,
                 s_slice=ss, y_slice=ys)
        for blk, th, ss, ys in zip(spec.blocks, thetas, s_slices, y_slices)
    ]
    return Subproblem(
        blocks=blocks, lam=lam, mu1=spec.mu1, mu2=spec.mu2,
        alpha=spec.alpha, beta=spec.beta, gamma=spec.gamma,
        x_cap=x_cap, rho=spec.rho, lipschitz=lipschitz,
        p_dim=p, q_dim=q, shape=(spec.m, spec.n),
    )


def _inner_budget(spec, sigma_m, eps, beta_k, x_nuc_prev, s_l1_prev):
    inv = 0.0
    if spec.mu1 > 0:
        inv += 1.0 / spec.mu1 ** 2
    if spec.mu2 > 0:
        inv += 1.0 / spec.mu2 ** 2
    scale = beta_k + spec.mu1 * x_nuc_prev + spec.mu2 * s_l1_prev
    n = np.floor(sigma_m * np.sqrt(inv) * scale * np.sqrt(2.0 / eps))
    if not np.isfinite(n):
        return None
    return max(int(n), 1)


def solve(spec, params=None, progress=None):
    """Run the full augmented Lagrangian solve on a validated problem."""
    t0 = time.perf_counter()
    params = (params or SolverParams()).validate()
    spec.validate()

    rows = [(blk.map, int(blk.has_beta_slack) + int(blk.has_gamma_slack))
            for blk in spec.blocks]
    sigma_m = sigma_max_stacked(rows)
    lipschitz = sigma_m ** 2
    if lipschitz <= 0:
        raise ValueError("degenerate problem: stacked operator norm is zero")

    eq_entries = [(blk.map, blk.rhs) for blk in spec.blocks
                  if not blk.has_beta_slack]
    if not eq_entries:
        # every block is slack-penalized: zeroed slacks pin the start point
        eq_entries = [(blk.map, blk.rhs) for blk in spec.blocks]
    x = least_norm_init(eq_entries, (spec.m, spec.n))

    s_slices, y_slices, p_dim, q_dim = _block_layout(spec)
    s = np.zeros(p_dim)
    for blk, ss in zip(spec.blocks, s_slices):
        if ss is not None:
            s[ss] = blk.rhs - blk.map.apply(x)
    y = np.zeros(q_dim)
    thetas = [blk.initial_multiplier() for blk in spec.blocks]

    svd_count = 0
    if spec.mu1 > 0 and spec.alpha is not NormIndex.TWO:
        sv0 = svd_full(x).singular_values
        svd_count += 1
        x_alpha = vec_norm(sv0, spec.alpha)
        x_nuc = vec_norm(sv0, NormIndex.ONE)
    else:
        x_alpha = float(np.linalg.norm(x, "fro"))
        x_nuc = np.sqrt(min(spec.m, spec.n)) * x_alpha
    s_l1 = vec_norm(s, NormIndex.ONE)
    eta_base = spec.mu1 * x_alpha + spec.mu2 * vec_norm(s, spec.beta)
    beta0 = spec.mu1 * x_nuc + spec.mu2 * s_l1  # frozen part of the budget scale

    lam1 = params.lambda_init
    if lam1 is None:
        lam1 = params.cbar_lambda * matrix_two_norm(x)
    if lam1 <= 0:
        raise ValueError("initial penalty is zero (X^(0) = 0); "
                         "pass lambda_init explicitly")
    theta_sq = sum(float(t @ t) for t in thetas)
    eta1 = eta_base + 0.5 * lam1 * theta_sq
    eps1 = params.eps_init
    if eps1 is None:
        eps1 = params.eps_init_factor * lam1 * eta1
    if eps1 <= 0:
        raise ValueError("initial gap target is zero; pass eps_init")

    if params.schedule == "adaptive":
        sched = AdaptiveSchedule(params, lam1, eps1)
    else:
        b_x = params.b_x or 2.0 * float(np.linalg.norm(x, "fro"))
        sched = GeometricSchedule(params, lam1, eps1, b_x, spec.rho)

    history = []
    termination = "max_outer"
    total_inner = 0
    x_nuc_prev, s_l1_prev, x_alpha_prev = x_nuc, s_l1, x_alpha
    pattern_carry = None

    for k in range(1, params.max_outer + 1):
        lam, eps = sched.lam, sched.eps
        theta_sq = sum(float(t @ t) for t in thetas)
        eta_k = eta_base + 0.5 * lam * theta_sq
        sub = build_subproblem(spec, thetas, lam, eta_k, lipschitz)

        beta_k = beta0 + 0.5 * lam * theta_sq
        budget = _inner_budget(spec, sigma_m, eps, beta_k, x_nuc_prev,
                               s_l1_prev)
        capped = budget is None or budget > params.max_inner
        budget = params.max_inner if capped else budget

        if params.schedule == "adaptive":
            tau_x, tau_s, xi = sched.tau_x, sched.tau_s, sched.xi
            tune = sched.tune
        else:
            tau_x = tau_s = sched.tau / np.sqrt(2.0)
            xi = sched.xi
            tune = None
        stop_grad = None
        if (params.stop_grad_x is not None and params.stop_grad_s is not None
                and params.stop_grad_y is not None):
            stop_grad = (params.stop_grad_x, params.stop_grad_s,
                         params.stop_grad_y)

        x, s, y, cert = run_inner(sub, (x, s, y), tau_x, tau_s, xi, budget,
                                  params.stall_tol, capped=capped, tune=tune,
                                  stop_grad=stop_grad,
                                  start_nuclear=x_nuc_prev,
                                  start_alpha=x_alpha_prev,
                                  pattern_carry=pattern_carry,
                                  polish=(params.polish_streak,
                                          params.polish_cap))
        svd_count += cert.svd_count
        total_inner += cert.iterations
        x_nuc_prev, s_l1_prev = cert.x_nuclear, cert.s_l1
        x_alpha_prev = cert.x_alpha
        pattern_carry = cert.pattern_carry

        residuals = []
        for blk, ss, ys in zip(spec.blocks, s_slices, y_slices):
            res = blk.map.apply(x) - blk.rhs
            if ss is not None:
                res = res + s[ss]
            if ys is not None:
                res = res + y[ys]
            residuals.append(res)
        thetas = [update_multiplier(t, r, lam) for t, r in zip(thetas,
                                                               residuals)]

        beta_parts = [blk.rhs - blk.map.apply(x)
                      for blk in spec.blocks if blk.has_beta_slack]
        beta_term = (spec.mu2 * vec_norm(np.concatenate(beta_parts), spec.beta)
                     if beta_parts else 0.0)
        objective = spec.mu1 * cert.x_alpha + beta_term

        bound_check = None
        if cert.branch is StopBranch.GAP_BOUND:
            bound_check = diagnostic_bounds(sub, x, s, y, eps)

        res_norms = tuple(float(np.linalg.norm(r)) for r in residuals)
        if params.schedule == "adaptive":
            tau_x_now = sched.tau_x
            tau_s_now, xi_now = sched.tau_s, sched.xi
        else:
            tau_x_now, tau_s_now, xi_now = tau_x, tau_s, xi
        history.append(HistoryRow(
            k=k, lam=lam, eps=eps, tau_x=tau_x_now, tau_s=tau_s_now,
            xi=xi_now,
            residual_norms=res_norms,
            residual_total=float(np.sqrt(sum(r ** 2 for r in res_norms))),
            objective=float(objective),
            multiplier_norms=tuple(float(np.linalg.norm(t)) for t in thetas),
            inner_iterations=cert.iterations,
            svd_count=svd_count,
            branch=cert.branch.value,
            tau_over_lambda=float(tau_x_now / lam),
            bound_check=bound_check,
        ))
        if progress is not None:
            progress(k, lam, res_norms, float(objective), svd_count)

        if cert.branch is StopBranch.STATIONARY_ITERATES:
            termination = "stagnation"
            break
        if cert.global_stop:
            termination = "subgradient"
            break

        if params.schedule == "geometric":
            sched.b_x = max(sched.b_x, 2.0 * float(np.linalg.norm(x, "fro")))
        sched.advance()

    slacks_final = []
    for blk, ss, ys in zip(spec.blocks, s_slices, y_slices):
        slacks_final.append({
            "s": s[ss].copy() if ss is not None else np.zeros(0),
            "y": y[ys].copy() if ys is not None else np.zeros(0),
        })
    return SolveReport(
        x_final=x,
        slacks_final=slacks_final,
        objective=float(spec.objective(x)),
        residuals=[float(np.linalg.norm(r)) for r in residuals],
        outer_iterations=history[-1].k if history else 0,
        total_inner_iterations=total_inner,
        svd_count=svd_count,
        wall_time=time.perf_counter() - t0,
        history=history,
        termination=termination,
    )
