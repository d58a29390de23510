"""Exact FTRL step over the epsilon-truncated simplex.

The per-round problem is

    minimize    p . L + (1/eta) sum_i p_i log p_i - (1/nu) sum_i log p_i
    subject to  sum_i p_i = 1,  p_i >= epsilon.

The objective is separable, so for a fixed dual value ``lam`` each coordinate
solves a scalar monotone equation

    L_i + (1/eta)(1 + log p_i) - 1/(nu p_i) + lam = 0

whose root decreases in ``lam``.  ``solve_ftrl`` finds each root by Newton's
method in log space, clips at epsilon and searches ``lam`` until the clipped
coordinates sum to one.  ``oracle_solve`` is an independent primal method
(projected gradient plus a constrained quasi-Newton polish) used to verify it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import minimize

from .core import BanditLabError, ConfigError, InputError, SimplexPoint

_STATUS_OK = 0
_STATUS_ITER_CAP = 1
_STATUS_BRACKET = 2
_STATUS_NONFINITE = 3


class SolverError(BanditLabError, RuntimeError):
    """The FTRL solve did not reach the requested accuracy.

    Attributes:
        residual: best KKT residual reached (``inf`` if none was computed).
    """

    def __init__(self, message: str, residual: float = math.inf):
        super().__init__(f"{message} (best residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class SolverConfig:
    eta: float
    nu: float
    epsilon: float
    kkt_tol: float = 1e-8
    sum_tol: float = 1e-10
    max_outer_iters: int = 200
    max_inner_iters: int = 100

    def __post_init__(self) -> None:
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise ConfigError(f"eta must be > 0, got {self.eta}")
        if not (0 < self.nu <= 1):
            raise ConfigError(f"nu must lie in (0, 1], got {self.nu}")
        if not (self.epsilon > 0):
            raise ConfigError(f"epsilon must be > 0 (use 1e-15 for no truncation), got {self.epsilon}")
        if self.kkt_tol <= 0 or self.sum_tol <= 0:
            raise ConfigError("tolerances must be > 0")
        if self.max_outer_iters < 1 or self.max_inner_iters < 1:
            raise ConfigError("iteration caps must be >= 1")

    def check_dimension(self, n: int) -> None:
        if self.epsilon * n >= 1.0:
            raise ConfigError(f"epsilon * N must be < 1, got epsilon={self.epsilon}, N={n}")


@dataclass(frozen=True)
class SolveReport:
    point: SimplexPoint
    kkt_residual: float
    iterations: int
    objective_value: float
    dual_value: float


def ftrl_objective(p, cum_loss, eta: float, nu: float) -> float:
    """FTRL potential ``p.L + (1/eta) sum p log p - (1/nu) sum log p``."""
    p = np.asarray(p, dtype=np.float64)
    cum_loss = np.asarray(cum_loss, dtype=np.float64)
    if p.shape != cum_loss.shape:
        raise InputError("p and cum_loss must have the same shape")
    if np.any(p <= 0):
        raise InputError("log-barrier undefined: every coordinate of p must be > 0")
    logp = np.log(p)
    return float(p @ cum_loss + (p @ logp) / eta - logp.sum() / nu)


# --------------------------------------------------------------------------
# numba kernels
# --------------------------------------------------------------------------


@njit(cache=True)
def _coord_root(b, inv_eta, inv_nu, u_lo, u0, max_inner):
    # Solve phi(u) = u/eta - exp(-u)/nu = b for u in (u_lo, 0).
    # phi is increasing and concave, so Newton started left of the root climbs
    # monotonically; a start right of the root lands left of it after one step.
    u = u0
    if u < u_lo:
        u = u_lo
    if u > 0.0:
        u = 0.0
    e = math.exp(-u) * inv_nu
    f = u * inv_eta - e - b
    if f > 0.0:
        u = u - f / (inv_eta + e)
        if u < u_lo:
            u = u_lo
    it = 0
    while it < max_inner:
        it += 1
        e = math.exp(-u) * inv_nu
        f = u * inv_eta - e - b
        step = -f / (inv_eta + e)
        u += step
        if abs(step) <= 1e-15 * max(1.0, abs(u)):
            return u, it, True
    return u, it, False


@njit(cache=True)
def _clipped_sum(lam, L, inv_eta, inv_nu, eps, log_eps, phi_lo, u, p, max_inner):
    # Fills p with clip(p_i(lam), eps, 1), warm-starting from and updating u.
    # Returns (sum, d sum / d lam, inner iterations, ok).
    n = L.shape[0]
    s = 0.0
    ds = 0.0
    iters = 0
    ok = True
    phi_hi = -inv_nu
    for i in range(n):
        b = -lam - L[i] - inv_eta
        if b <= phi_lo:
            p[i] = eps
            u[i] = log_eps
        elif b >= phi_hi:
            p[i] = 1.0
            u[i] = 0.0
        else:
            ui, k, conv = _coord_root(b, inv_eta, inv_nu, log_eps, u[i], max_inner)
            iters += k
            if not conv:
                ok = False
            u[i] = ui
            pi = math.exp(ui)
            if pi < eps:
                pi = eps
            p[i] = pi
            # dp/dlam = -1 / g'(p) with g'(p) = 1/(eta p) + 1/(nu p^2)
            ds -= pi * pi / (pi * inv_eta + inv_nu)
        s += p[i]
    return s, ds, iters, ok


@njit(cache=True)
def _kkt_residual(p, L, inv_eta, inv_nu, eps):
    # Scaled stationarity violation.  The common multiplier is read off the
    # largest coordinate, which is always free because eps * N < 1.
    n = p.shape[0]
    j = 0
    for i in range(1, n):
        if p[i] > p[j]:
            j = i
    gj = L[j] + inv_eta * (1.0 + math.log(p[j])) - inv_nu / p[j]
    floor = eps * (1.0 + 1e-9)
    res = 0.0
    for i in range(n):
        lp = math.log(p[i])
        bar = inv_nu / p[i]
        gi = L[i] + inv_eta * (1.0 + lp) - bar
        scale = max(1.0, abs(L[i]), abs(gj), inv_eta * abs(1.0 + lp), bar)
        if p[i] <= floor:
            v = gj - gi
            if v < 0.0:
                v = 0.0
        else:
            v = abs(gi - gj)
        v /= scale
        if v > res:
            res = v
    return res


@njit(cache=True)
def _solve_kernel(L, eta, nu, eps, lam0, u, p, sum_tol, max_outer, max_inner):
    """Returns (lam, outer iterations, status); p and u are filled in place."""
    n = L.shape[0]
    inv_eta = 1.0 / eta
    inv_nu = 1.0 / nu
    log_eps = math.log(eps)
    phi_lo = log_eps * inv_eta - inv_nu / eps
    lmax = L[0]
    lmin = L[0]
    for i in range(n):
        if not math.isfinite(L[i]):
            return 0.0, 0, _STATUS_NONFINITE
        lmax = max(lmax, L[i])
        lmin = min(lmin, L[i])
    lo = -lmax - inv_eta - n * inv_nu
    hi = -lmin + inv_eta * abs(log_eps) + inv_nu / eps
    # At lo every root is >= 1/N (sum >= 1); at hi every coordinate clips to
    # eps (sum = N eps < 1).  Checked analytically so u keeps its warm start.
    phi_unif = -math.log(n) * inv_eta - n * inv_nu
    if not (-lo - lmax - inv_eta >= phi_unif and -hi - lmin - inv_eta <= phi_lo):
        return lo, 0, _STATUS_BRACKET
    lam = lam0
    if not (lo < lam < hi):
        lam = 0.5 * (lo + hi)
    target = 1e-3 * sum_tol
    it = 0
    while it < max_outer:
        it += 1
        s, ds, _, ok = _clipped_sum(lam, L, inv_eta, inv_nu, eps, log_eps, phi_lo, u, p, max_inner)
        if not ok:
            return lam, it, _STATUS_ITER_CAP
        r = s - 1.0
        if abs(r) <= target:
            return lam, it, _STATUS_OK
        if r > 0.0:
            lo = lam
        else:
            hi = lam
        if hi - lo <= 4e-16 * max(1.0, abs(lo), abs(hi)):
            # lam resolved to machine precision; the sum cannot get closer.
            return lam, it, _STATUS_OK
        nxt = lam - r / ds if ds < 0.0 else lo - 1.0
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        lam = nxt
    return lam, it, _STATUS_ITER_CAP


@njit(cache=True)
def _finish(p, eps):
    # Absorb the residual sum error into the largest coordinate, where the
    # stationarity condition is least sensitive to it.
    j = 0
    for i in range(1, p.shape[0]):
        if p[i] > p[j]:
            j = i
    s = 0.0
    for i in range(p.shape[0]):
        s += p[i]
    p[j] += 1.0 - s
    s = 0.0
    for i in range(p.shape[0]):
        s += p[i]
    return s


def _cold_lambda(cum_loss: np.ndarray, eta: float, nu: float) -> float:
    # Multiplier that makes the uniform point stationary when all losses equal the mean.
    n = cum_loss.size
    return -float(cum_loss.mean()) - (1.0 + math.log(1.0 / n)) / eta + n / nu


def solve_raw(cum_loss: np.ndarray, config: SolverConfig, lam0: float = math.nan, u0: np.ndarray | None = None):
    """Low-level solve used in the learner hot loop.

    Returns ``(p, lam, u, iterations, kkt_residual)`` without building a
    :class:`SolveReport`.  ``lam0``/``u0`` warm-start the dual value and the
    per-coordinate log-roots; they change only the path, not the answer.

    Raises:
        SolverError: on bracket failure, iteration cap or inaccurate result.
    """
    L = np.ascontiguousarray(cum_loss, dtype=np.float64)
    n = L.size
    if n < 1:
        raise InputError("cum_loss must be non-empty")
    config.check_dimension(n)
    eps = config.epsilon
    if n == 1:
        return np.ones(1), math.nan, np.zeros(1), 0, 0.0
    if math.isnan(lam0):
        lam0 = _cold_lambda(L, config.eta, config.nu)
    u = np.full(n, math.log(1.0 / n)) if u0 is None else np.array(u0, dtype=np.float64)
    p = np.empty(n)
    lam, iters, status = _solve_kernel(
        L, config.eta, config.nu, eps, lam0, u, p,
        config.sum_tol, config.max_outer_iters, config.max_inner_iters,
    )
    if status == _STATUS_NONFINITE:
        raise InputError("cum_loss entries must be finite")
    if status == _STATUS_BRACKET:
        raise SolverError("dual bracket does not straddle the simplex constraint")
    total = _finish(p, eps)
    res = _kkt_residual(p, L, 1.0 / config.eta, 1.0 / config.nu, eps)
    if status != _STATUS_OK:
        raise SolverError(f"iteration cap reached after {iters} outer iterations", res)
    if abs(total - 1.0) > config.sum_tol or p.min() < eps - 1e-12:
        raise SolverError(f"infeasible point (sum {total!r}, min {p.min()!r})", res)
    if not res <= config.kkt_tol:
        raise SolverError("KKT tolerance not met", res)
    return p, lam, u, iters, res


def solve_ftrl(cum_loss, config: SolverConfig) -> SolveReport:
    """Minimize the FTRL potential over the epsilon-truncated simplex.

    Args:
        cum_loss: cumulative (estimated) losses, one per policy.
        config: regularization weights, floor and tolerances.

    Returns:
        SolveReport with the minimizer, its KKT residual, the number of
        outer (dual) iterations and the objective value.

    Raises:
        SolverError: if the solve fails; an infeasible point is never returned.
    """
    L = np.asarray(cum_loss, dtype=np.float64)
    p, lam, _, iters, res = solve_raw(L, config)
    return SolveReport(
        point=SimplexPoint(p),
        kkt_residual=res,
        iterations=iters,
        objective_value=ftrl_objective(p, L, config.eta, config.nu),
        dual_value=lam,
    )


def kkt_residual(p, cum_loss, eta: float, nu: float, epsilon: float) -> float:
    """Largest scaled stationarity violation of ``p``.

    For every coordinate the gradient ``g_i = L_i + (1 + log p_i)/eta - 1/(nu p_i)``
    is compared to the common value ``c`` taken at the largest coordinate:
    free coordinates contribute ``|g_i - c|``, coordinates at the floor only
    ``max(0, c - g_i)``.  Each violation is divided by the magnitude of the
    terms entering ``g_i`` so that the measure is meaningful in floating
    point even when ``1/(nu p_i)`` is huge.

    Raises:
        InputError: if ``p`` is not a point of the truncated simplex.
    """
    p = np.asarray(p, dtype=np.float64)
    L = np.asarray(cum_loss, dtype=np.float64)
    if p.shape != L.shape or p.ndim != 1:
        raise InputError("p and cum_loss must be vectors of equal length")
    if abs(p.sum() - 1.0) > 1e-9 or p.min() < epsilon - 1e-12 or p.min() <= 0:
        raise InputError("p is not feasible for the truncated simplex")
    return float(_kkt_residual(p, L, 1.0 / eta, 1.0 / nu, epsilon))


# --------------------------------------------------------------------------
# verification oracle
# --------------------------------------------------------------------------


@njit(cache=True)
def _project_truncated_simplex(v, eps, out, srt):
    # Euclidean projection onto {p : sum p = 1, p >= eps} by sorting; srt is scratch.
    n = v.shape[0]
    mass = 1.0 - n * eps
    for i in range(n):
        x = v[i] - eps
        k = i
        while k > 0 and srt[k - 1] < x:
            srt[k] = srt[k - 1]
            k -= 1
        srt[k] = x
    css = 0.0
    theta = 0.0
    for k in range(n):
        css += srt[k]
        t = (css - mass) / (k + 1)
        if srt[k] - t > 0.0:
            theta = t
    for i in range(n):
        x = v[i] - eps - theta
        out[i] = eps + (x if x > 0.0 else 0.0)


@njit(cache=True)
def _pgd(L, eta, nu, eps, iters, step0):
    n = L.shape[0]
    p = np.full(n, 1.0 / n)
    best = p.copy()
    inv_eta = 1.0 / eta
    inv_nu = 1.0 / nu

    def obj(q):
        v = 0.0
        for i in range(n):
            lq = math.log(q[i])
            v += q[i] * L[i] + inv_eta * q[i] * lq - inv_nu * lq
        return v

    fbest = obj(p)
    g = np.empty(n)
    trial = np.empty(n)
    scratch = np.empty(n)
    for k in range(iters):
        for i in range(n):
            g[i] = L[i] + inv_eta * (1.0 + math.log(p[i])) - inv_nu / p[i]
        # Diminishing steps, additionally capped so that no coordinate moves
        # by more than a fraction of its own size (keeps the barrier finite).
        step = step0 / math.sqrt(1.0 + k)
        gmax = 0.0
        for i in range(n):
            r = abs(g[i]) / p[i]
            if r > gmax:
                gmax = r
        if gmax * step > 0.5:
            step = 0.5 / gmax
        for i in range(n):
            trial[i] = p[i] - step * g[i]
        _project_truncated_simplex(trial, eps, p, scratch)
        if (k & 63) == 0 or k == iters - 1:
            f = obj(p)
            if f < fbest:
                fbest = f
                best[:] = p
    return best


def oracle_solve(cum_loss, config: SolverConfig, iters: int = 1_000_000) -> SimplexPoint:
    """Reference minimizer for small instances (N <= 6).

    Runs ``iters`` steps of projected gradient descent with diminishing step
    sizes on the truncated simplex, then polishes the best iterate with
    SLSQP on the same objective.  Shares no code with :func:`solve_ftrl`.
    """
    L = np.asarray(cum_loss, dtype=np.float64)
    n = L.size
    if n < 1 or n > 6:
        raise InputError(f"oracle_solve supports 1 <= N <= 6, got N={n}")
    config.check_dimension(n)
    if n == 1:
        return SimplexPoint(np.ones(1))
    eta, nu, eps = config.eta, config.nu, config.epsilon
    p = _pgd(L, eta, nu, eps, int(iters), 1.0)

    # Polish in shifted coordinates x = p - eps >= 0 so the bound is exact.
    def f(x):
        q = x + eps
        lq = np.log(q)
        return float(q @ L + (q @ lq) / eta - lq.sum() / nu)

    def grad(x):
        q = x + eps
        return L + (1.0 + np.log(q)) / eta - 1.0 / (nu * q)

    x0 = p - eps
    res = minimize(
        f, x0, jac=grad, method="SLSQP",
        bounds=[(0.0, 1.0)] * n,
        constraints=[{"type": "eq", "fun": lambda x: x.sum() - (1.0 - n * eps), "jac": lambda x: np.ones(n)}],
        options={"ftol": 1e-15, "maxiter": 500},
    )
    cand = np.clip(res.x, 0.0, None) + eps
    cand /= cand.sum()
    cand = np.maximum(cand, eps)
    cand /= cand.sum()
    out = cand if f(cand - eps) <= f(p - eps) else p
    return SimplexPoint(out)
