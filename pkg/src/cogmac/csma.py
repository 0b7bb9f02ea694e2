"""Sensing/access policy optimization for CSMA/CA secondary users.

Objective throughout is the expected idle capacity nobody picks up,
sum_i w_i (1 - cov_i)^M with w_i = (1 - theta_i) C_i, plus detector-aware
variants.  All solvers work on the probability simplex over a group catalog.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, linprog, minimize_scalar

from .channels import ChannelSet, ValidationError
from .sensing import GroupCatalog, SensingScheme, make_scheme, singleton_catalog

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
INFEASIBLE = "infeasible"

BISECTION_TOL = 1e-10
PG_GRAD_TOL = 1e-8
PG_OBJ_TOL = 1e-12
PG_MAX_ITER = 100_000
F_MIN = 1e-6


@dataclass(frozen=True)
class DetectorModel:
    alpha: float = 0.0
    beta: float = 1.0
    f0: float = 1.0
    f1: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValidationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not (0.0 < self.beta <= 1.0):
            raise ValidationError(f"beta must lie in (0, 1], got {self.beta}")
        if not (0.0 < self.f0 <= 1.0):
            raise ValidationError(f"f0 must lie in (0, 1], got {self.f0}")
        if self.f1 != 0.0:
            raise ValidationError("f1 is fixed to 0 (no access on a busy detection)")

    def with_f0(self, f0: float) -> DetectorModel:
        return DetectorModel(self.alpha, self.beta, f0, 0.0)


PERFECT = DetectorModel()


@dataclass
class SolverReport:
    scheme: SensingScheme
    f0: float
    nu: float
    objective: float
    kkt_residual: float
    iterations: int
    status: str
    info: dict = field(default_factory=dict)


def _weights(cs: ChannelSet) -> np.ndarray:
    return cs.idle_rates


def _check_catalog(cs: ChannelSet, cat: GroupCatalog):
    if cat.n != cs.n:
        raise ValidationError(f"catalog has {cat.n} channels, channel set has {cs.n}")


def unutilized_capacity(cs: ChannelSet, scheme: SensingScheme, m: int) -> float:
    """Expected idle capacity left unsensed by all ``m`` users."""
    if m < 1:
        raise ValidationError(f"m must be >= 1, got {m}")
    _check_catalog(cs, scheme.catalog)
    cov = np.clip(scheme.coverage, 0.0, 1.0)
    return float(np.dot(_weights(cs), (1.0 - cov) ** m))


def csma_throughput(cs: ChannelSet, scheme: SensingScheme, m: int) -> float:
    """Error-free CSMA/CA throughput C_t minus the unutilized capacity."""
    return float(_weights(cs).sum()) - unutilized_capacity(cs, scheme, m)


def kkt_residual(cs: ChannelSet, scheme: SensingScheme, m: int) -> tuple[float, float]:
    """(residual, nu) of the error-free KKT system on the simplex.

    d_j = M sum_{i in G_j} w_i (1 - cov_i)^(M-1) must equal nu on the support
    and not exceed it elsewhere.
    """
    a = scheme.catalog.incidence
    p = scheme.probs
    cov = np.clip(a @ p, 0.0, 1.0)
    d = m * (a.T @ (_weights(cs) * (1.0 - cov) ** (m - 1)))
    nu = float(np.dot(p, d))
    res = max(float(np.max(np.maximum(d - nu, 0.0))),
              float(np.max(p * np.abs(nu - d))),
              abs(float(p.sum()) - 1.0))
    return res, nu


def _uniform_scheme(cat: GroupCatalog) -> SensingScheme:
    return make_scheme(cat, np.full(cat.kappa, 1.0 / cat.kappa))


# --- single channel: water-filling ----------------------------------------


def _fill(nu: float, c: np.ndarray, m: int) -> np.ndarray:
    p = np.zeros_like(c)
    pos = c > 0
    p[pos] = np.maximum(1.0 - (nu / (m * c[pos])) ** (1.0 / (m - 1)), 0.0)
    return p


def optimal_single(cs: ChannelSet, m: int) -> SolverReport:
    """Closed-form water-filling.

    With u = nu^(1/(M-1)) and k_j = (M c_j)^(1/(M-1)) the optimum is
    p_j = (1 - u/k_j)^+, which is piecewise linear in u; the active set is the
    largest prefix of k (sorted descending) with u < k_j, and on it
    u = (|A| - 1) / sum_A 1/k_j.  Working in u avoids the extreme dynamic
    range of nu at large M.
    """
    if m < 2:
        raise ValidationError(f"optimal_single needs m >= 2, got {m}")
    cat = singleton_catalog(cs.n)
    c = _weights(cs)
    if c.sum() <= 0.0:
        sch = _uniform_scheme(cat)
        return SolverReport(sch, 1.0, 0.0, 0.0, 0.0, 0, INFEASIBLE,
                            {"reason": "C_t = 0: every channel always busy"})
    pos = np.flatnonzero(c > 0)
    # k_j / k_max in log space so nothing over- or underflows
    logk = np.log(m * c[pos]) / (m - 1)
    order = np.argsort(-logk, kind="stable")
    kr = np.exp(logk[order] - logk[order[0]])
    inv = np.cumsum(1.0 / kr)
    size = np.arange(1, kr.size + 1)
    ur = (size - 1) / inv                    # candidate u / k_max for each prefix
    active = int(np.max(np.flatnonzero(ur < kr))) + 1
    u = ur[active - 1]
    p = np.zeros_like(c)
    p[pos[order[:active]]] = 1.0 - u / kr[:active]
    gap = abs(p.sum() - 1.0)
    if gap > BISECTION_TOL:
        raise ArithmeticError(f"water-filling left sum(p) - 1 = {gap:.3g}")
    nu = math.exp((m - 1) * (math.log(u) + logk[order[0]])) if u > 0 else 0.0
    sch = make_scheme(cat, p)
    res, _ = kkt_residual(cs, sch, m)
    obj = unutilized_capacity(cs, sch, m)
    return SolverReport(sch, 1.0, nu, obj, res, active, OPTIMAL,
                        {"active_channels": active, "sum_gap": gap})


# --- projected gradient machinery ------------------------------------------


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def _project(x: np.ndarray, kappa: int, f_box) -> np.ndarray:
    out = x.copy()
    out[:kappa] = project_simplex(x[:kappa])
    if f_box is not None:
        out[kappa:] = np.clip(x[kappa:], *f_box)
    return out


def _pg_minimize(fun, x0, kappa, f_box=None, grad_tol=PG_GRAD_TOL, obj_tol=PG_OBJ_TOL,
                 max_iter=PG_MAX_ITER, history=None):
    """Monotone spectral projected gradient with Armijo backtracking.

    ``fun(x)`` returns (value, gradient); value may be +inf outside the domain.
    Returns (x, value, iterations, converged, pg_norm).
    """
    x = _project(np.asarray(x0, dtype=float), kappa, f_box)
    f, g = fun(x)
    if not np.isfinite(f):
        raise ArithmeticError("starting point outside the objective's domain")
    step = 1.0 / max(np.linalg.norm(g), 1e-12)
    pg = np.inf
    for it in range(1, max_iter + 1):
        pg = float(np.max(np.abs(x - _project(x - g, kappa, f_box))))
        if pg <= grad_tol:
            return x, f, it - 1, True, pg
        t = step
        while True:
            xn = _project(x - t * g, kappa, f_box)
            d = xn - x
            fn, gn = fun(xn)
            if np.isfinite(fn) and fn <= f + 1e-4 * float(np.dot(g, d)):
                break
            t *= 0.5
            if t < 1e-20:
                return x, f, it, True, pg
        if history is not None:
            history.append(fn)
        s, y = xn - x, gn - g
        sy = float(np.dot(s, y))
        step = float(np.dot(s, s)) / sy if sy > 1e-300 else 10.0 * t
        step = min(max(step, 1e-12), 1e12)
        done = f - fn <= obj_tol
        x, f, g = xn, fn, gn
        if done:
            pg = float(np.max(np.abs(x - _project(x - g, kappa, f_box))))
            return x, f, it, True, pg
    return x, f, max_iter, False, pg


def optimal_multi(cs: ChannelSet, cat: GroupCatalog, m: int, max_iter: int = PG_MAX_ITER,
                  x0=None) -> SolverReport:
    """Minimize the unutilized capacity over the simplex on ``cat`` by projected gradient.

    The objective is normalized by C_t internally so the stopping tolerances
    are scale free.
    """
    if m < 2:
        raise ValidationError(f"optimal_multi needs m >= 2, got {m}")
    _check_catalog(cs, cat)
    w = _weights(cs)
    c_t = float(w.sum())
    if c_t <= 0.0:
        return SolverReport(_uniform_scheme(cat), 1.0, 0.0, 0.0, 0.0, 0, INFEASIBLE,
                            {"reason": "C_t = 0: every channel always busy"})
    a = cat.incidence
    wn = w / c_t

    def fun(p):
        base = np.clip(1.0 - a @ p, 0.0, 1.0)
        val = float(np.dot(wn, base**m))
        grad = -m * (a.T @ (wn * base ** (m - 1)))
        return val, grad

    if x0 is None:
        # start from the idle-rate weighted heuristic
        x0 = a.T @ w
        x0 = x0 / x0.sum()
    history = []
    p, _, it, ok, pg = _pg_minimize(fun, x0, cat.kappa, max_iter=max_iter, history=history)
    sch = make_scheme(cat, p / p.sum())
    res, nu = kkt_residual(cs, sch, m)
    return SolverReport(sch, 1.0, nu, unutilized_capacity(cs, sch, m), res, it,
                        OPTIMAL if ok else MAX_ITER,
                        {"pg_norm": pg, "grad_tol": PG_GRAD_TOL, "obj_tol": PG_OBJ_TOL,
                         "history": [h * c_t for h in history]})


# --- detector-aware program -------------------------------------------------


def collision_probability_exact(cs: ChannelSet, scheme: SensingScheme, m: int,
                                det: DetectorModel, i: int) -> float:
    """Binomial k-sum collision probability of channel i.

    theta_i sum_{k>=1} C(M,k) (cov_i alpha f0)^k (1 - cov_i)^(M-k): k users sense
    channel i, read it idle and access it while the other M - k do not sense
    it at all.  Users that sense it but stay off are not counted, so this is a
    lower bound on :func:`collision_probability_any_access`.
    """
    if not (0 <= i < cs.n):
        raise IndexError(f"channel index {i} out of range 0..{cs.n - 1}")
    cov = min(max(float(scheme.coverage[i]), 0.0), 1.0)
    af = det.alpha * det.f0
    return cs.thetas[i] * ((af * cov + 1.0 - cov) ** m - (1.0 - cov) ** m)


def collision_probability_any_access(cs: ChannelSet, scheme: SensingScheme, m: int,
                                     det: DetectorModel, i: int) -> float:
    """P(channel i busy and accessed by at least one user): theta_i (1 - (1 - alpha f0 cov_i)^M)."""
    if not (0 <= i < cs.n):
        raise IndexError(f"channel index {i} out of range 0..{cs.n - 1}")
    cov = min(max(float(scheme.coverage[i]), 0.0), 1.0)
    return cs.thetas[i] * -math.expm1(m * math.log1p(-det.alpha * det.f0 * cov))


def convexity_coverage_bound(m: int, beta: float) -> float | None:
    """Smallest coverage c with (1 - (1-beta) c)^M <= 2 (M-1) (1-beta) c, or None if no c <= 1 works."""
    b = 1.0 - beta
    if b <= 0.0:
        return None

    def h(c):
        return (1.0 - b * c) ** m - 2.0 * (m - 1) * b * c

    if h(1.0) > 0.0:
        return None
    return brentq(h, 0.0, 1.0, xtol=1e-15, rtol=1e-15)


def _error_objective(mode, w, a, m, beta):
    """Value, gradient and Hessian core in z = (P, f0) of the detector-aware objective.

    The Hessian is U core U^T with U = blockdiag(A^T, 1).
    """
    n = a.shape[0]

    def fun(z, hess=False):
        p, f0 = z[:-1], z[-1]
        cov = a @ p
        if mode == "three_case":
            k2 = 1.0 - beta * (1.0 - f0)
            b1 = np.clip(1.0 - beta * cov, 0.0, None)
            b2 = np.clip(1.0 - k2 * cov, 0.0, None)
            val = float(np.dot(w, b1**m + b2**m))
            gcov = -m * w * (beta * b1 ** (m - 1) + k2 * b2 ** (m - 1))
        else:
            b2 = np.clip(1.0 - beta * f0 * cov, 0.0, None)
            val = float(np.dot(w, b2**m))
            gcov = -m * w * b2 ** (m - 1) * beta * f0
        gf = float(np.dot(w, -m * b2 ** (m - 1) * beta * cov))
        grad = np.append(a.T @ gcov, gf)
        if not hess:
            return val, grad
        mm = m * (m - 1)
        if mode == "three_case":
            dcc = mm * w * (beta**2 * b1 ** (m - 2) + k2**2 * b2 ** (m - 2))
            dcf = -m * w * beta * (b2 ** (m - 1) - (m - 1) * k2 * cov * b2 ** (m - 2))
        else:
            dcc = mm * w * (beta * f0) ** 2 * b2 ** (m - 2)
            dcf = -m * w * beta * (b2 ** (m - 1) - (m - 1) * beta * f0 * cov * b2 ** (m - 2))
        core = np.zeros((n + 1, n + 1))
        core[np.diag_indices(n)] = dcc
        core[:n, n] = core[n, :n] = dcf
        core[n, n] = mm * beta**2 * float(np.dot(w, cov**2 * b2 ** (m - 2)))
        return val, grad, core

    return fun


def _fixed_f0(fun, f0):
    """Restrict a (P, f0) objective to P at fixed f0."""
    def inner(p, hess=False):
        out = fun(np.append(p, f0), hess)
        if not hess:
            return out[0], out[1][:-1]
        return out[0], out[1][:-1], out[2][:-1, :-1]

    return inner


BARRIER_GAP = 1e-9
NEWTON_TOL = 1e-9


def _interior_point(fun, u_obj, g_mat, h_vec, lo, hi, eq, z0, max_iter):
    """Log-barrier method for min fun(z) s.t. G z >= h, lo <= z <= hi, eq . z = 1.

    ``fun(z, hess=True)`` returns (value, gradient, core) with objective
    Hessian u_obj core u_obj^T.  Damped Newton steps on t*fun - sum log(slack)
    keep the equality through a KKT solve done with the Woodbury identity
    (diagonal bound barrier plus low rank); t grows tenfold until the duality
    gap bound n_ineq/t is below BARRIER_GAP.  A non-descent Newton direction
    (the objective need not be convex off the constrained region) is repaired
    with a diagonal shift.  Returns (z, iterations, converged, gap, history).
    """
    has_lo, has_hi = np.isfinite(lo), np.isfinite(hi)
    n_ineq = len(h_vec) + int(has_lo.sum()) + int(has_hi.sum())
    u = np.hstack([u_obj, g_mat.T])
    r_obj = u_obj.shape[1]
    r = u.shape[1]

    def slacks(z):
        return g_mat @ z - h_vec, (z - lo)[has_lo], (hi - z)[has_hi]

    def barrier(z):
        s_g, s_lo, s_hi = slacks(z)
        if np.any(s_g <= 0) or np.any(s_lo <= 0) or np.any(s_hi <= 0):
            return np.inf
        return -(np.sum(np.log(s_g)) + np.sum(np.log(s_lo)) + np.sum(np.log(s_hi)))

    def solve(diag, core, rhs):
        dinv_rhs = rhs / diag[:, None]
        dinv_u = u / diag[:, None]
        small = np.eye(r) + core @ (u.T @ dinv_u)
        return dinv_rhs - dinv_u @ np.linalg.solve(small, core @ (u.T @ dinv_rhs))

    z = z0.copy()
    t = 1.0
    it = 0
    history = []
    while True:
        while it < max_iter:
            it += 1
            val, grad, hcore = fun(z, hess=True)
            s_g, s_lo, s_hi = slacks(z)
            g = t * grad - g_mat.T @ (1.0 / s_g)
            diag = np.zeros(z.size)
            g[has_lo] -= 1.0 / s_lo
            g[has_hi] += 1.0 / s_hi
            diag[has_lo] += 1.0 / s_lo**2
            diag[has_hi] += 1.0 / s_hi**2
            core = np.zeros((r, r))
            core[:r_obj, :r_obj] = t * hcore
            core[np.arange(r_obj, r), np.arange(r_obj, r)] = 1.0 / s_g**2
            shift = 0.0
            while True:
                try:
                    x = solve(diag + shift, core, np.column_stack([g, eq]))
                    hg, he = x[:, 0], x[:, 1]
                    dz = -(hg - he * (eq @ hg) / (eq @ he))
                    ok = bool(np.all(np.isfinite(dz))) and float(np.dot(g, dz)) < 0
                except np.linalg.LinAlgError:
                    ok = False
                if ok:
                    break
                shift = max(10.0 * shift, 1e-10 * max(diag.max(), 1.0))
                if shift > 1e30:
                    return z, it, False, n_ineq / t, history
            dec = -float(np.dot(g, dz))
            if dec / 2.0 <= NEWTON_TOL:
                break
            f_cur = t * val + barrier(z)
            step = 1.0
            while step >= 1e-16:
                zn = z + step * dz
                f_new = barrier(zn)
                if np.isfinite(f_new):
                    f_new += t * fun(zn)[0]
                    if f_new <= f_cur - 0.25 * step * dec:
                        break
                step *= 0.5
            if step < 1e-16:
                break
            z = zn
            if f_cur - f_new <= 1e-15 * abs(f_cur):
                break
        else:
            return z, it, False, n_ineq / t, history
        history.append(fun(z)[0])
        if n_ineq / t <= BARRIER_GAP:
            return z, it, True, n_ineq / t, history
        t *= 10.0


def _strict_start(g_mat, h_vec, lo, hi, eq, centre):
    """Strictly feasible point: LP maximizing the smallest G-slack, blended towards ``centre``.

    Returns (z, max_min_slack) or (None, slack) when no strictly feasible point exists.
    """
    n_con, d = g_mat.shape
    if n_con == 0:
        return centre.copy(), float("inf")
    cvec = np.zeros(d + 1)
    cvec[-1] = -1.0
    a_ub = np.hstack([-g_mat, np.ones((n_con, 1))])
    a_eq = np.append(eq, 0.0)[None, :]
    bounds = [(None if not np.isfinite(l) else l, None if not np.isfinite(h) else h)
              for l, h in zip(lo, hi)] + [(None, 1.0)]
    lp = linprog(cvec, A_ub=a_ub, b_ub=-h_vec, A_eq=a_eq, b_eq=[1.0], bounds=bounds,
                 method="highs")
    if lp.status != 0:
        return None, None
    t_star = float(-lp.fun)
    if t_star <= 1e-12:
        return None, t_star
    worst = float(np.min(g_mat @ centre - h_vec))
    lam = 0.5 if worst >= t_star / 2 else min(0.5, 0.5 * t_star / (t_star - worst))
    return (1.0 - lam) * lp.x[:-1] + lam * centre, t_star


def optimal_with_errors(cs: ChannelSet, cat: GroupCatalog, m: int, det: DetectorModel,
                        xi: float, objective: str = "three_case", convexity: str = "auto",
                        collision: str = "restricted", f_min: float = F_MIN,
                        max_iter: int = 2000, f0_fixed: float | None = None) -> SolverReport:
    """Jointly choose the sensing scheme and the access probability f0 under detection errors.

    Constraints, per channel i:
      * convexity region  (1 - (1-beta) cov_i)^M <= 2 (M-1) (1-beta) cov_i, i.e. cov_i >= c_conv;
        with ``convexity="auto"`` it is dropped when beta = 1 (no c satisfies it there);
      * ``collision="restricted"``: theta_i (1 - cov_i + alpha f0)^M <= xi, i.e.
        cov_i - alpha f0 >= 1 - (xi/theta_i)^(1/M);
        ``collision="any_access"``: theta_i (1 - (1 - alpha f0 cov_i)^M) <= xi, i.e.
        alpha f0 cov_i <= 1 - (1 - xi/theta_i)^(1/M).
      Collision rows are dropped where the collision probability cannot exceed
      xi for any policy (theta_i <= xi or alpha = 0).

    Every constraint is linear in P for fixed f0, and the restricted family
    is linear in (P, f0) jointly.  The restricted program is solved in (P, f0)
    by a log-barrier interior point method started from an LP that maximizes
    the smallest slack.  The any-access family is bilinear, so f0 is chosen
    by a bounded scalar search over its feasible interval with the convex
    program in P solved at each trial f0.  ``objective="exact"`` replaces
    the three-case objective by sum_i w_i (1 - beta f0 cov_i)^M.
    With ``f0_fixed`` the access probability is held at that value and only
    P is optimized.
    """
    if m < 2:
        raise ValidationError(f"optimal_with_errors needs m >= 2, got {m}")
    if objective not in ("three_case", "exact"):
        raise ValueError(f"unknown objective {objective!r}")
    if convexity not in ("auto", "on", "off"):
        raise ValueError(f"unknown convexity mode {convexity!r}")
    if collision not in ("restricted", "any_access"):
        raise ValueError(f"unknown collision mode {collision!r}")
    if not (0.0 <= xi <= 1.0):
        raise ValidationError(f"xi must lie in [0, 1], got {xi}")
    if not (0.0 < f_min < 1.0):
        raise ValidationError(f"f_min must lie in (0, 1), got {f_min}")
    _check_catalog(cs, cat)
    w = _weights(cs)
    c_t = float(w.sum())
    a = cat.incidence
    n, kappa = a.shape
    info = {"objective_mode": objective, "collision_mode": collision, "f_min": f_min}

    def fail(reason):
        info["reason"] = reason
        return SolverReport(_uniform_scheme(cat), f_min, 0.0, float("nan"), float("inf"), 0,
                            INFEASIBLE, info)

    if c_t <= 0.0:
        return fail("C_t = 0: every channel always busy")

    conv_rows = []
    use_conv = convexity == "on" or (convexity == "auto" and det.beta < 1.0)
    info["convexity_constraint"] = use_conv
    if use_conv:
        c_conv = convexity_coverage_bound(m, det.beta)
        info["c_conv"] = c_conv
        if c_conv is None:
            return fail(f"convexity region empty for M={m}, beta={det.beta}")
        conv_rows = [(i, c_conv) for i in range(n)]
    coll_idx = [i for i, th in enumerate(cs.thetas) if th > xi and det.alpha > 0.0]
    info["collision_skipped"] = [i for i in range(n) if i not in coll_idx]
    fun = _error_objective(objective, w / c_t, a, m, det.beta)

    if f0_fixed is not None and not (0.0 < f0_fixed <= 1.0):
        raise ValidationError(f"f0_fixed must lie in (0, 1], got {f0_fixed}")

    if collision == "restricted" and f0_fixed is None:
        rows, rhs, labels = [], [], []
        for i, c in conv_rows:
            rows.append(np.append(a[i], 0.0)), rhs.append(c), labels.append(("convexity", i))
        for i in coll_idx:
            rows.append(np.append(a[i], -det.alpha))
            rhs.append(1.0 - (xi / cs.thetas[i]) ** (1.0 / m))
            labels.append(("collision", i))
        g_mat = np.array(rows).reshape(-1, kappa + 1)
        h_vec = np.array(rhs)
        lo = np.append(np.zeros(kappa), f_min)
        hi = np.append(np.full(kappa, np.inf), 1.0)
        eq = np.append(np.ones(kappa), 0.0)
        centre = np.append(np.full(kappa, 1.0 / kappa), 0.5 * (1.0 + f_min))
        z0, t_star = _strict_start(g_mat, h_vec, lo, hi, eq, centre)
        info["max_min_slack"] = t_star
        if z0 is None:
            return fail("no strictly feasible (P, f0)")
        u_obj = np.zeros((kappa + 1, n + 1))
        u_obj[:kappa, :n] = a.T
        u_obj[kappa, n] = 1.0
        z, it, ok, gap, history = _interior_point(fun, u_obj, g_mat, h_vec, lo, hi, eq, z0,
                                                  max_iter)
        p, f0 = z[:-1], float(z[-1])
    else:
        def program(f0):
            rows, rhs, labels = [], [], []
            for i, c in conv_rows:
                rows.append(a[i]), rhs.append(c), labels.append(("convexity", i))
            for i in coll_idx:
                if collision == "restricted":
                    rows.append(a[i]), labels.append(("collision", i))
                    rhs.append(1.0 - (xi / cs.thetas[i]) ** (1.0 / m) + det.alpha * f0)
                    continue
                cap = (1.0 - (1.0 - xi / cs.thetas[i]) ** (1.0 / m)) / (det.alpha * f0)
                if cap < 1.0:
                    rows.append(-a[i]), rhs.append(-cap), labels.append(("collision", i))
            return np.array(rows).reshape(-1, kappa), np.array(rhs), labels

        lo, hi, eq = np.zeros(kappa), np.full(kappa, np.inf), np.ones(kappa)
        centre = np.full(kappa, 1.0 / kappa)

        def feasible(f0):
            g_mat, h_vec, _ = program(f0)
            return _strict_start(g_mat, h_vec, lo, hi, eq, centre)[0] is not None

        if f0_fixed is not None:
            if not feasible(f0_fixed):
                return fail(f"no strictly feasible P at f0 = {f0_fixed}")
            f_min = f_lo = f0_fixed
        elif not feasible(f_min):
            return fail("no strictly feasible P even at f0 = f_min")
        else:
            f_lo = f_min
        f_hi = 1.0
        if f0_fixed is not None:
            pass
        elif feasible(1.0):
            f_lo = 1.0
        else:
            for _ in range(60):
                mid = 0.5 * (f_lo + f_hi)
                f_lo, f_hi = (mid, f_hi) if feasible(mid) else (f_lo, mid)
        f_max = f_lo
        info["f0_feasible_max"] = f_max
        runs = {}

        def solve_at(f0):
            if f0 not in runs:
                g_mat, h_vec, labels = program(f0)
                z0, _ = _strict_start(g_mat, h_vec, lo, hi, eq, centre)
                inner = _fixed_f0(fun, f0)
                out = _interior_point(inner, a.T, g_mat, h_vec, lo, hi, eq, z0, max_iter)
                runs[f0] = (out, g_mat, h_vec, labels)
            return runs[f0]

        def value(f0):
            return fun(np.append(solve_at(f0)[0][0], f0))[0]

        best = f_max
        if f_max > f_min:
            res = minimize_scalar(value, bounds=(f_min, f_max), method="bounded",
                                  options={"xatol": 1e-9})
            if value(res.x) < value(best):
                best = float(res.x)
        (z, it, ok, gap, history), g_mat, h_vec, labels = solve_at(best)
        it = sum(r[0][1] for r in runs.values())
        ok = all(r[0][2] for r in runs.values())
        p, f0 = z, best
        info["f0_trials"] = len(runs)

    p = p / p.sum()
    sch = make_scheme(cat, p)
    val, grad = fun(np.append(p, f0))
    if collision == "restricted" and f0_fixed is None:
        slack = g_mat @ np.append(p, f0) - h_vec if len(h_vec) else np.zeros(0)
    else:
        cov = a @ p
        slack = [cov[i] - c for i, c in conv_rows]
        if collision == "restricted":
            slack += [cov[i] - det.alpha * f0 - 1.0 + (xi / cs.thetas[i]) ** (1.0 / m)
                      for i in coll_idx]
        else:
            slack += [1.0 - (1.0 - xi / cs.thetas[i]) ** (1.0 / m) - det.alpha * f0 * cov[i]
                      for i in coll_idx]
        labels = [("convexity", i) for i, _ in conv_rows] + [("collision", i) for i in coll_idx]
        slack = np.array(slack)
    info.update({
        "barrier_gap": gap,
        "barrier_history": [h * c_t for h in history],
        "constraint_labels": labels,
        "constraint_slacks": np.asarray(slack).tolist(),
    })
    return SolverReport(sch, float(f0), float(-np.dot(p, grad[:-1])) * c_t, val * c_t, gap * c_t,
                        it, OPTIMAL if ok else MAX_ITER, info)


def utilized_with_errors(cs: ChannelSet, scheme: SensingScheme, m: int, det: DetectorModel) -> float:
    """Exact expected secondary throughput with an imperfect detector.

    Channel i is picked up iff it is idle and some user senses it, detects it
    idle and accesses it: probability 1 - (1 - beta f0 cov_i)^M.
    """
    cov = np.clip(scheme.coverage, 0.0, 1.0)
    return float(np.dot(_weights(cs), 1.0 - (1.0 - det.beta * det.f0 * cov) ** m))


def loss_percentage(cs: ChannelSet, cat: GroupCatalog, m: int, heuristic: SensingScheme,
                    report: SolverReport) -> float:
    """Percentage of the optimal throughput lost by using ``heuristic``; nan if the optimum is 0."""
    if heuristic.catalog.groups != cat.groups or report.scheme.catalog.groups != cat.groups:
        raise ValidationError("heuristic and optimal schemes must share the catalog")
    c_opt = csma_throughput(cs, report.scheme, m)
    if c_opt <= 0.0:
        return float("nan")
    return 100.0 * (c_opt - csma_throughput(cs, heuristic, m)) / c_opt
