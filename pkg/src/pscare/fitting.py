"""Per-segment maximum likelihood by projected gradient descent.

The feasible set {W' alpha = 0} is a linear subspace through the
origin, so projected gradient descent reduces to gradient descent with
the gradient's alpha block projected onto the subspace; iterates stay
feasible by induction and are re-projected once at the end to remove
floating-point drift.

The inner loop runs over per-pair sufficient statistics and is compiled
with numba; a batch entry point fits many spans sharing the same pair
design in one call (used heavily by the PELT search).  Backtracking
uses the Armijo rule; after the first iteration the trial step is
seeded with the Barzilai-Borwein spectral estimate, which cuts the
iteration count several-fold without affecting the accepted-step test.

A damped Newton solver (FitConfig(solver="newton")) minimizes the same
objective over the same subspace to the same tolerances in far fewer
iterations; probe_fit_config() selects it for the search's probe costs,
where millions of closely related spans are evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .exceptions import InputError
from .likelihood import constraint_basis, pair_stats
from .types import ComparisonDataset, ParamVector, SegmentSpan

DIVERGENCE_BOUND = 50.0
FALLBACK_RIDGE = 1e-6
# default stall_tol for the search's probe fits (detect / brute force);
# plain fit_segment keeps stall_tol=0 and runs to the gradient tolerance
PROBE_STALL_TOL = 1e-7

_STATUS_OK = 0
_STATUS_DIVERGED = 1
_STATUS_STALLED = 2


def probe_fit_config(max_iters: int = 2000,
                     grad_tol: float = 1e-7) -> "FitConfig":
    """Default fit configuration for the search's probe costs.

    Newton converges in a handful of iterations per span, and the stall
    stop bounds the iteration count on separated spans; plain
    fit_segment keeps the documented first-order defaults.
    """
    return FitConfig(max_iters=max_iters, grad_tol=grad_tol,
                     stall_tol=PROBE_STALL_TOL, solver="newton")


@dataclass(frozen=True)
class FitConfig:
    max_iters: int = 2000
    grad_tol: float = 1e-7
    step_rule: str = "backtracking"  # or "fixed"
    step_size: float = 1.0           # used when step_rule == "fixed"
    init_step: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4
    ridge: float = 0.0
    # extra stop: quit after three consecutive accepted decreases below
    # stall_tol * (1 + |f|).  0 disables it.  Separated (infinite-MLE)
    # directions never meet grad_tol, so bulk span evaluations (the
    # search's probe costs) enable this to bound their iteration count;
    # the objective value is unaffected at any cost-comparison scale.
    stall_tol: float = 0.0
    # "pgd" (projected gradient, the documented default) or "newton"
    # (damped Newton in the constrained subspace).  Both minimize the
    # same objective to the same gradient tolerance; Newton needs far
    # fewer iterations per span and is used for the search's probe
    # costs, where millions of closely related spans are evaluated.
    solver: str = "pgd"

    def __post_init__(self):
        if self.max_iters < 1:
            raise InputError("max_iters must be positive")
        if self.grad_tol <= 0:
            raise InputError("grad_tol must be positive")
        if self.step_rule not in ("backtracking", "fixed"):
            raise InputError(f"unknown step rule {self.step_rule!r}")
        if min(self.step_size, self.init_step) <= 0 or not 0 < self.shrink < 1:
            raise InputError("step parameters must be positive (shrink in (0,1))")
        if self.ridge < 0:
            raise InputError("ridge must be non-negative")
        if self.stall_tol < 0:
            raise InputError("stall_tol must be non-negative")
        if self.solver not in ("pgd", "newton"):
            raise InputError(f"unknown solver {self.solver!r}")


@dataclass(frozen=True)
class SegmentFit:
    xi_hat: ParamVector
    nll: float
    iters: int
    converged: bool
    grad_norm: float
    ridge_fallback: bool = False
    note: str = ""


@njit(cache=True)
def _eval_fg(Xp, m, w, xi, ridge, Q, n, g):
    """Penalized objective and projected gradient at xi; returns f."""
    q, p = Xp.shape
    f = 0.0
    for k in range(p):
        g[k] = ridge * xi[k]
    for a in range(q):
        if m[a] == 0.0:
            continue
        x = 0.0
        for k in range(p):
            x += Xp[a, k] * xi[k]
        if x > 0.0:
            e = np.exp(-x)
            sp = x + np.log1p(e)
            mu = 1.0 / (1.0 + e)
        else:
            e = np.exp(x)
            sp = np.log1p(e)
            mu = e / (1.0 + e)
        f += m[a] * sp - w[a] * x
        r = m[a] * mu - w[a]
        for k in range(p):
            g[k] += Xp[a, k] * r
    if ridge > 0.0:
        s = 0.0
        for k in range(p):
            s += xi[k] * xi[k]
        f += 0.5 * ridge * s
    # project the alpha block of g onto the constraint subspace
    for c in range(Q.shape[1]):
        dot = 0.0
        for k in range(n):
            dot += Q[k, c] * g[k]
        for k in range(n):
            g[k] -= Q[k, c] * dot
    return f


@njit(cache=True)
def _eval_f(Xp, m, w, xi, ridge):
    q, p = Xp.shape
    f = 0.0
    for a in range(q):
        if m[a] == 0.0:
            continue
        x = 0.0
        for k in range(p):
            x += Xp[a, k] * xi[k]
        if x > 0.0:
            sp = x + np.log1p(np.exp(-x))
        else:
            sp = np.log1p(np.exp(x))
        f += m[a] * sp - w[a] * x
    if ridge > 0.0:
        s = 0.0
        for k in range(p):
            s += xi[k] * xi[k]
        f += 0.5 * ridge * s
    return f


@njit(cache=True)
def _project_alpha(xi, Q, n):
    for c in range(Q.shape[1]):
        dot = 0.0
        for k in range(n):
            dot += Q[k, c] * xi[k]
        for k in range(n):
            xi[k] -= Q[k, c] * dot


@njit(cache=True)
def _pgd_single(Xp, m, w, xi, Q, n, ridge, grad_tol, max_iters,
                backtracking, step_size, init_step, shrink, armijo,
                stall_tol, trial0):
    """Serial PGD on one span; xi is updated in place.

    trial0 seeds the line search (pass init_step for a cold start; a
    previously accepted step when warm-starting).  Returns
    (nll_unpenalized, iters, converged, grad_norm, status, trial).
    """
    p = Xp.shape[1]
    g = np.empty(p)
    g_new = np.empty(p)
    xi_new = np.empty(p)
    _project_alpha(xi, Q, n)
    f = _eval_fg(Xp, m, w, xi, ridge, Q, n, g)
    trial = trial0
    eta = trial0
    it = 0
    converged = False
    status = _STATUS_OK
    stall = 0
    while it < max_iters:
        gn = 0.0
        for k in range(p):
            a = abs(g[k])
            if a > gn:
                gn = a
        if gn <= grad_tol:
            converged = True
            break
        if backtracking:
            gg = 0.0
            for k in range(p):
                gg += g[k] * g[k]
            eta = trial
            accepted = False
            for _bt in range(120):
                for k in range(p):
                    xi_new[k] = xi[k] - eta * g[k]
                fn = _eval_f(Xp, m, w, xi_new, ridge)
                if fn <= f - armijo * eta * gg:
                    accepted = True
                    break
                eta *= shrink
            if not accepted:
                status = _STATUS_STALLED
                break
        else:
            eta = step_size
            for k in range(p):
                xi_new[k] = xi[k] - eta * g[k]
        f_new = _eval_fg(Xp, m, w, xi_new, ridge, Q, n, g_new)
        if backtracking:
            sy = 0.0
            ss = 0.0
            for k in range(p):
                s = xi_new[k] - xi[k]
                yk = g_new[k] - g[k]
                sy += s * yk
                ss += s * s
            # spectral (Barzilai-Borwein) trial for the next iteration,
            # kept within two orders of magnitude of the accepted step so
            # a flat span cannot force long halving cascades
            if sy > 1e-300:
                trial = ss / sy
                lo = eta * 1e-2
                hi = eta * 1e2
                if trial < lo:
                    trial = lo
                elif trial > hi:
                    trial = hi
            else:
                trial = eta * 2.0
        # once accepted decreases fall this far below the objective's
        # scale the remaining improvement cannot affect any downstream
        # cost comparison; separated (infinite-MLE) directions otherwise
        # crawl forever without ever meeting the gradient tolerance
        if stall_tol > 0.0:
            if f - f_new <= stall_tol * (abs(f) + 1.0):
                stall += 1
                if stall >= 3:
                    for k in range(p):
                        xi[k] = xi_new[k]
                        g[k] = g_new[k]
                    it += 1
                    status = _STATUS_STALLED
                    break
            else:
                stall = 0
        for k in range(p):
            xi[k] = xi_new[k]
            g[k] = g_new[k]
        f = f_new
        it += 1
        mx = 0.0
        for k in range(p):
            a = abs(xi[k])
            if a > mx:
                mx = a
        if mx > DIVERGENCE_BOUND:
            status = _STATUS_DIVERGED
            break
    _project_alpha(xi, Q, n)
    gn = 0.0
    for k in range(p):
        a = abs(g[k])
        if a > gn:
            gn = a
    nll = _eval_f(Xp, m, w, xi, 0.0)
    return nll, it, converged, gn, status, trial


@njit(cache=True)
def _newton_single(Xp, m, w, xi, Q, B, n, ridge, grad_tol, max_iters,
                   shrink, armijo, stall_tol):
    """Damped Newton on one span in the constrained subspace.

    B is an orthonormal basis of the feasible subspace; the Newton
    system is solved in those coordinates, so iterates stay feasible.
    Same stopping semantics as _pgd_single; returns
    (nll_unpenalized, iters, converged, grad_norm, status).
    """
    q, p = Xp.shape
    r = B.shape[1]
    g = np.empty(p)
    g_new = np.empty(p)
    xi_new = np.empty(p)
    mu = np.empty(q)
    _project_alpha(xi, Q, n)
    f = _eval_fg(Xp, m, w, xi, ridge, Q, n, g)
    it = 0
    converged = False
    status = _STATUS_OK
    stall = 0
    while it < max_iters:
        gn = 0.0
        for k in range(p):
            a = abs(g[k])
            if a > gn:
                gn = a
        if gn <= grad_tol:
            converged = True
            break
        # weights mu_a (1 - mu_a) of the curvature at xi
        for a in range(q):
            if m[a] == 0.0:
                mu[a] = 0.0
                continue
            x = 0.0
            for k in range(p):
                x += Xp[a, k] * xi[k]
            if x > 0.0:
                e = np.exp(-x)
                s = 1.0 / (1.0 + e)
            else:
                e = np.exp(x)
                s = e / (1.0 + e)
            mu[a] = s * (1.0 - s)
        # reduced Hessian Hr = B' (X' D X + ridge I) B and gradient gr
        XB = np.dot(Xp, B)
        Hr = np.zeros((r, r))
        for a in range(q):
            c = m[a] * mu[a]
            if c == 0.0:
                continue
            for u in range(r):
                cu = c * XB[a, u]
                for v in range(u, r):
                    Hr[u, v] += cu * XB[a, v]
        tr = 0.0
        for u in range(r):
            tr += Hr[u, u]
        # Levenberg damping keeps the system solvable on saturated or
        # unseen-pair directions where the curvature vanishes
        lam = ridge + 1e-9 * (1.0 + tr / r)
        for u in range(r):
            Hr[u, u] += lam
            for v in range(u):
                Hr[u, v] = Hr[v, u]
        gr = np.dot(B.T, g)
        du = np.linalg.solve(Hr, gr)
        dxi = np.dot(B, du)
        dd = 0.0
        for k in range(p):
            dd += g[k] * dxi[k]
        if dd <= 0.0:
            status = _STATUS_STALLED
            break
        eta = 1.0
        accepted = False
        for _bt in range(120):
            for k in range(p):
                xi_new[k] = xi[k] - eta * dxi[k]
            fn = _eval_f(Xp, m, w, xi_new, ridge)
            if fn <= f - armijo * eta * dd:
                accepted = True
                break
            eta *= shrink
        if not accepted:
            status = _STATUS_STALLED
            break
        f_new = _eval_fg(Xp, m, w, xi_new, ridge, Q, n, g_new)
        if stall_tol > 0.0:
            if f - f_new <= stall_tol * (abs(f) + 1.0):
                stall += 1
                if stall >= 3:
                    for k in range(p):
                        xi[k] = xi_new[k]
                        g[k] = g_new[k]
                    it += 1
                    status = _STATUS_STALLED
                    break
            else:
                stall = 0
        for k in range(p):
            xi[k] = xi_new[k]
            g[k] = g_new[k]
        f = f_new
        it += 1
        mx = 0.0
        for k in range(p):
            a = abs(xi[k])
            if a > mx:
                mx = a
        if mx > DIVERGENCE_BOUND:
            status = _STATUS_DIVERGED
            break
    _project_alpha(xi, Q, n)
    gn = 0.0
    for k in range(p):
        a = abs(g[k])
        if a > gn:
            gn = a
    nll = _eval_f(Xp, m, w, xi, 0.0)
    return nll, it, converged, gn, status


@njit(cache=True, parallel=True)
def _newton_batch(Xp, M, W, Xi, Q, B, n, ridge, grad_tol, max_iters,
                  shrink, armijo, stall_tol):
    """Independent Newton solve per row of (M, W, Xi); Xi updated in place."""
    c = M.shape[0]
    nll = np.empty(c)
    iters = np.empty(c, dtype=np.int64)
    conv = np.empty(c, dtype=np.uint8)
    gnorm = np.empty(c)
    status = np.empty(c, dtype=np.uint8)
    for r in prange(c):
        res = _newton_single(Xp, M[r], W[r], Xi[r], Q, B, n, ridge, grad_tol,
                             max_iters, shrink, armijo, stall_tol)
        nll[r] = res[0]
        iters[r] = res[1]
        conv[r] = 1 if res[2] else 0
        gnorm[r] = res[3]
        status[r] = res[4]
    return nll, iters, conv, gnorm, status


@njit(cache=True, parallel=True)
def _pgd_batch(Xp, M, W, Xi, Q, n, ridge, grad_tol, max_iters,
               backtracking, step_size, init_step, shrink, armijo,
               stall_tol, trials):
    """Independent PGD per row of (M, W, Xi); Xi and trials updated in place."""
    c = M.shape[0]
    nll = np.empty(c)
    iters = np.empty(c, dtype=np.int64)
    conv = np.empty(c, dtype=np.uint8)
    gnorm = np.empty(c)
    status = np.empty(c, dtype=np.uint8)
    for r in prange(c):
        res = _pgd_single(Xp, M[r], W[r], Xi[r], Q, n, ridge, grad_tol,
                          max_iters, backtracking, step_size, init_step,
                          shrink, armijo, stall_tol, trials[r])
        nll[r] = res[0]
        iters[r] = res[1]
        conv[r] = 1 if res[2] else 0
        gnorm[r] = res[3]
        status[r] = res[4]
        trials[r] = res[5]
    return nll, iters, conv, gnorm, status


def _feasible_basis(Q: np.ndarray, p: int) -> np.ndarray:
    """Orthonormal basis of the constrained parameter subspace.

    The alpha block is the orthogonal complement of the constraint
    directions Q; the beta block is unconstrained.
    """
    n, c = Q.shape
    full, _ = np.linalg.qr(Q, mode="complete")
    B = np.zeros((p, p - c))
    B[:n, :n - c] = full[:, c:]
    B[n:, n - c:] = np.eye(p - n)
    return B


def fit_rows(Xp: np.ndarray, M: np.ndarray, W: np.ndarray, Xi: np.ndarray,
             Q: np.ndarray, n: int, config: FitConfig,
             trials: np.ndarray | None = None):
    """Batch fit with divergence fallback; Xi (and trials, when given)
    are modified in place.

    `trials` carries the accepted line-search step per row across calls
    when warm-starting; omit it for cold starts.  Rows that leave the
    divergence guard with ridge == 0 are refit once from the origin with
    a tiny ridge; returns (nll, iters, conv, gnorm, fallback) arrays.
    """
    bt = config.step_rule == "backtracking"
    if trials is None:
        trials = np.full(M.shape[0], config.init_step)
    newton = config.solver == "newton"
    if newton:
        B = _feasible_basis(Q, Xp.shape[1])
        nll, iters, conv, gnorm, status = _newton_batch(
            Xp, M, W, Xi, Q, B, n, config.ridge, config.grad_tol,
            config.max_iters, config.shrink, config.armijo, config.stall_tol)
    else:
        nll, iters, conv, gnorm, status = _pgd_batch(
            Xp, M, W, Xi, Q, n, config.ridge, config.grad_tol, config.max_iters,
            bt, config.step_size, config.init_step, config.shrink, config.armijo,
            config.stall_tol, trials)
    fallback = np.zeros(M.shape[0], dtype=bool)
    if config.ridge == 0.0:
        bad = status == _STATUS_DIVERGED
        if bad.any():
            idx = np.flatnonzero(bad)
            Xi2 = np.zeros((idx.size, Xp.shape[1]))
            tr2 = np.full(idx.size, config.init_step)
            Mi = np.ascontiguousarray(M[idx])
            Wi = np.ascontiguousarray(W[idx])
            if newton:
                nll2, it2, cv2, gn2, st2 = _newton_batch(
                    Xp, Mi, Wi, Xi2, Q, B, n, FALLBACK_RIDGE, config.grad_tol,
                    config.max_iters, config.shrink, config.armijo,
                    config.stall_tol)
            else:
                nll2, it2, cv2, gn2, st2 = _pgd_batch(
                    Xp, Mi, Wi, Xi2, Q, n, FALLBACK_RIDGE, config.grad_tol,
                    config.max_iters, bt, config.step_size, config.init_step,
                    config.shrink, config.armijo, config.stall_tol, tr2)
            Xi[idx] = Xi2
            trials[idx] = tr2
            nll[idx] = nll2
            iters[idx] += it2
            conv[idx] = np.where(st2 == _STATUS_DIVERGED, 0, cv2)
            gnorm[idx] = gn2
            fallback[idx] = True
    return nll, iters, conv, gnorm, fallback


def fit_segment(data: ComparisonDataset, span: SegmentSpan,
                config: FitConfig | None = None) -> SegmentFit:
    """Cold-start MLE of one segment; see module docstring for the method."""
    config = config or FitConfig()
    span.validate(data.T)
    st = pair_stats(data)
    Q = constraint_basis(data.covariates)
    m, w = st.span_counts(span)
    M = m[None, :]
    W = w[None, :]
    Xi = np.zeros((1, st.Xp.shape[1]))
    nll, iters, conv, gnorm, fallback = fit_rows(st.Xp, M, W, Xi, Q, data.n, config)
    note = ""
    if fallback[0]:
        note = "divergence guard triggered; refit with ridge=1e-6"
        if not conv[0]:
            note += "; still divergent (comparison graph likely disconnected)"
    xi = ParamVector.from_xi(Xi[0], data.n)
    return SegmentFit(xi_hat=xi, nll=float(nll[0]), iters=int(iters[0]),
                      converged=bool(conv[0]), grad_norm=float(gnorm[0]),
                      ridge_fallback=bool(fallback[0]), note=note)
