"""Cell-based (finite radius) analysis: collision chain, detection radius and success probability.

Radii follow the usual naming: ``r_r_*`` transmission ranges, ``r_i_*``
interference ranges, ``*_p`` primary and ``*_s`` secondary, ``r_d`` the
secondary detection radius.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import astuple, dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.stats import binom

from .aloha import AlohaParams, _singleton_probs, binomial_weights
from .channels import ChannelSet, ValidationError
from .geometry import disc_minus_union_area_batch, lens_area
from .sensing import SensingScheme

ANNULUS_TOL = 1e-8
QUAD_TOL = 1e-6
DETECTION_RADIUS_TOL = 1e-6

# Counts of probability clamps and degenerate evaluations, keyed by quantity name.
CLAMP_EVENTS: Counter = Counter()


class NumericalError(RuntimeError):
    """Quadrature or root finding failed to reach its tolerance."""


def _clamp_prob(x: float, label: str) -> float:
    if x > 1.0:
        CLAMP_EVENTS[label + ">1"] += 1
        return 1.0
    if x < 0.0:
        CLAMP_EVENTS[label + "<0"] += 1
        return 0.0
    return x


def reset_clamp_events():
    CLAMP_EVENTS.clear()


@dataclass(frozen=True)
class SpatialConfig:
    lam: float
    r_r_p: float
    r_r_s: float
    r_i_p: float
    r_i_s: float
    r_d: float
    cell_area: float
    xi: float

    def __post_init__(self):
        for name in ("lam", "r_r_p", "r_r_s", "r_i_p", "r_i_s", "cell_area"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be positive, got {v}")
        if self.r_d < 0:
            raise ValidationError(f"r_d must be nonnegative, got {self.r_d}")
        if not (0.0 <= self.xi <= 1.0):
            raise ValidationError(f"xi must lie in [0, 1], got {self.xi}")
        if not (0.0 < self.gamma < 1.0):
            raise ValidationError(f"gamma = pi r_i_s^2 / cell_area must lie in (0, 1), got {self.gamma}")

    @property
    def gamma(self) -> float:
        return math.pi * self.r_i_s**2 / self.cell_area

    @property
    def r_d_max(self) -> float:
        """Detection radius at which a collision becomes impossible."""
        return self.r_i_s + self.r_r_p

    def with_r_d(self, r_d: float) -> SpatialConfig:
        return spatial_config(self.lam, self.r_r_p, self.r_r_s, self.r_i_p, self.r_i_s,
                              r_d=r_d, cell_area=self.cell_area, xi=self.xi)


def spatial_config(lam, r_r_p, r_r_s, r_i_p, r_i_s, r_d=0.0, cell_area=None, gamma=None,
                   xi=0.0) -> SpatialConfig:
    """Build a config from either the cell area or gamma (or both, if consistent).

    A detection radius beyond ``r_i_s + r_r_p`` is clamped to that bound.
    """
    if cell_area is None and gamma is None:
        raise ValidationError("one of cell_area or gamma is required")
    if gamma is not None:
        if not (0.0 < gamma < 1.0):
            raise ValidationError(f"gamma must lie in (0, 1), got {gamma}")
        derived = math.pi * r_i_s**2 / gamma
        if cell_area is not None and abs(cell_area - derived) > 1e-9 * derived:
            raise ValidationError(
                f"cell_area {cell_area} is inconsistent with gamma {gamma} (expects {derived})"
            )
        cell_area = derived
    r_max = r_i_s + r_r_p
    if r_d > r_max:
        CLAMP_EVENTS["r_d>r_i_s+r_r_p"] += 1
        r_d = r_max
    return SpatialConfig(float(lam), float(r_r_p), float(r_r_s), float(r_i_p), float(r_i_s),
                         float(r_d), float(cell_area), float(xi))


def symmetric_config(radius: float, lam: float, gamma: float, xi: float = 0.0,
                     r_d: float | None = None) -> SpatialConfig:
    """All ranges equal to ``radius``; detection radius defaults to the collision-free 2R."""
    return spatial_config(lam, radius, radius, radius, radius,
                          r_d=2.0 * radius if r_d is None else r_d, gamma=gamma, xi=xi)


@dataclass(frozen=True)
class AnnulusWeight:
    s_tilde: float
    s_bar: float


@lru_cache(maxsize=4096)
def _annulus(r_r_p: float, r_i_s: float, r_d: float) -> AnnulusWeight:
    r_max = r_i_s + r_r_p
    s_tilde = max(r_max**2 - r_d**2, 0.0)
    if s_tilde <= 0.0:
        return AnnulusWeight(0.0, 1.0)
    disc = math.pi * r_r_p**2

    def integrand(r):
        return (disc - lens_area(r_r_p, r_i_s, r)) / disc * r

    pts = [p for p in (abs(r_r_p - r_i_s),) if r_d < p < r_max]
    val, err = integrate.quad(integrand, r_d, r_max, points=pts or None,
                              epsabs=ANNULUS_TOL * 1e-2, epsrel=1e-12, limit=200)
    if err > ANNULUS_TOL:
        raise NumericalError(f"annulus weight quadrature error {err:.3g} > {ANNULUS_TOL} "
                             f"(r_r_p={r_r_p}, r_i_s={r_i_s}, r_d={r_d})")
    s_bar = min(max(2.0 * val / s_tilde, 0.0), 1.0)
    return AnnulusWeight(s_tilde, s_bar)


def annulus_weight(cfg: SpatialConfig) -> AnnulusWeight:
    """Annulus area term and the averaged fraction of a primary receiver disc outside r_i_s."""
    return _annulus(cfg.r_r_p, cfg.r_i_s, cfg.r_d)


def _p_cc_vec(cfg: SpatialConfig, thetas: np.ndarray) -> np.ndarray:
    aw = annulus_weight(cfg)
    a = cfg.lam * np.asarray(thetas, dtype=float) * math.pi
    out = np.zeros_like(a)
    pos = a > 0
    a = a[pos]
    num = np.exp(-a * cfg.r_d**2) * -np.expm1(-a * aw.s_tilde * (1.0 - aw.s_bar))
    den = -np.expm1(-a * cfg.r_i_s**2)
    out[pos] = num / den
    return out


def p_cc(cfg: SpatialConfig, theta_j: float) -> float:
    """P(no primary transmitter within r_d | a primary receiver within r_i_s), channel busy prob theta_j."""
    if theta_j <= 0.0:
        CLAMP_EVENTS["p_cc:theta=0"] += 1
        return 0.0
    return _clamp_prob(float(_p_cc_vec(cfg, np.array([theta_j]))[0]), "p_cc")


def p_collision_channel(cfg: SpatialConfig, cs: ChannelSet, scheme: SensingScheme,
                        params: AlohaParams, j: int) -> float:
    """Linearized per-channel collision probability M q P_j P_cc|j (clamped to 1)."""
    p = _singleton_probs(cs, scheme)
    raw = params.m * params.q * p[j] * p_cc(cfg, cs.thetas[j]) if p[j] > 0 else 0.0
    return _clamp_prob(raw, "p_collision")


def collision_load(cfg: SpatialConfig, cs: ChannelSet, scheme: SensingScheme) -> float:
    """sum_j P_j P_cc|j at the config's detection radius."""
    p = _singleton_probs(cs, scheme)
    return float(np.dot(p, np.clip(_p_cc_vec(cfg, cs.theta), 0.0, 1.0)))


def solve_detection_radius(cfg: SpatialConfig, cs: ChannelSet, scheme: SensingScheme,
                           params: AlohaParams, tol: float = DETECTION_RADIUS_TOL) -> float:
    """Smallest r_d meeting the average collision budget (1/N) sum_j P_c|j <= xi.

    ``cfg.r_d`` is ignored.  Uses bisection on the monotone collision load.
    """
    if params.q == 0.0:
        return 0.0
    bound = cs.n * cfg.xi / (params.m * params.q)
    if collision_load(cfg.with_r_d(0.0), cs, scheme) <= bound:
        return 0.0
    lo, hi = 0.0, cfg.r_d_max
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if collision_load(cfg.with_r_d(mid), cs, scheme) <= bound:
            hi = mid
        else:
            lo = mid
    return hi


# --- success probability -------------------------------------------------


def _first_term(cfg: SpatialConfig, theta: float) -> float:
    area = math.pi * (cfg.r_d**2 + cfg.r_i_p**2) - lens_area(cfg.r_d, cfg.r_i_p, cfg.r_r_s)
    return math.exp(-cfg.lam * theta * area)


def _quad_check(val, err, label):
    if not np.isfinite(val) or err > QUAD_TOL:
        raise NumericalError(f"{label}: quadrature error estimate {err:.3g} exceeds {QUAD_TOL}")
    return val


def _p_iii_1(cfg: SpatialConfig, lt: float) -> float:
    a, rd, rs = cfg.r_i_p, cfg.r_d, cfg.r_i_s
    disc = math.pi * a * a

    def f(r):
        return r * math.exp(-lt * (disc - lens_area(a, rd, r)))

    pts = [p for p in (abs(rd - a), rd + a) if 0.0 < p < rs]
    val, err = integrate.quad(f, 0.0, rs, points=pts or None, epsabs=QUAD_TOL * 1e-3,
                              epsrel=1e-10, limit=200)
    return _quad_check(2.0 / rs**2 * val, 2.0 / rs**2 * err, "P_III(m=1)")


# Tensor-product Gauss-Legendre on panels split at the tangency / triple-point
# kinks of the integrand.  A smoothstep substitution on each panel flattens the
# (x - x0)^(3/2) behaviour at panel ends.  Two orders are compared as an error
# estimate.
PANEL_ORDERS = (10, 14)


@lru_cache(maxsize=None)
def _panel_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (x + 1.0)
    u = t * t * (3.0 - 2.0 * t)
    du = 6.0 * t * (1.0 - t)
    return u, 0.5 * w * du


def _panel_nodes(breaks, order: int) -> tuple[np.ndarray, np.ndarray]:
    u, w = _panel_rule(order)
    b = np.unique(np.asarray(breaks, dtype=float))
    lo, hi = b[:-1], b[1:]
    keep = hi - lo > 1e-14
    lo, hi = lo[keep], hi[keep]
    nodes = (lo[:, None] + (hi - lo)[:, None] * u[None, :]).ravel()
    weights = ((hi - lo)[:, None] * w[None, :]).ravel()
    return nodes, weights


def _circle_intersections(c1, c2):
    (x1, y1, r1), (x2, y2, r2) = c1, c2
    d = math.hypot(x2 - x1, y2 - y1)
    if d == 0.0 or d >= r1 + r2 or d <= abs(r1 - r2):
        return []
    a = (d * d + r1 * r1 - r2 * r2) / (2.0 * d)
    h = math.sqrt(max(r1 * r1 - a * a, 0.0))
    ux, uy = (x2 - x1) / d, (y2 - y1) / d
    mx, my = x1 + a * ux, y1 + a * uy
    return [(mx - h * uy, my + h * ux), (mx + h * uy, my - h * ux)]


def _ring_breaks(r: float, rad: float, fixed) -> list[float]:
    """Angles in [0, pi] where a circle of radius ``rad`` centred at r e^{i phi}
    touches a fixed circle or passes through a crossing point of two fixed circles.
    Fixed circles must be symmetric about the x axis.
    """
    out = [0.0, math.pi]
    if r == 0.0:
        return out
    feats = []
    for x, y, rho in fixed:
        feats += [(x, y, rad + rho), (x, y, abs(rad - rho))]
    for i in range(len(fixed)):
        for k in range(i + 1, len(fixed)):
            feats += [(px, py, rad) for px, py in _circle_intersections(fixed[i], fixed[k])]
    for x, y, t in feats:
        dc = math.hypot(x, y)
        if dc == 0.0:
            continue
        v = (r * r + dc * dc - t * t) / (2.0 * r * dc)
        if -1.0 < v < 1.0:
            psi, h = math.atan2(y, x), math.acos(v)
            for phi in (psi + h, psi - h):
                phi = phi % (2.0 * math.pi)
                out.append(2.0 * math.pi - phi if phi > math.pi else phi)
    return out


def _ring_average(fixed, rad, r_nodes, order, lts):
    """For each ring radius r, int_0^pi exp(-lt * area) dphi, with the moving
    circle appended as the last hole.  Returns (len(lts), len(r_nodes))."""
    circles, owner, wts = [], [], []
    for idx, r in enumerate(r_nodes):
        phi, w = _panel_nodes(_ring_breaks(r, rad, fixed), order)
        moving = np.column_stack([r * np.cos(phi), r * np.sin(phi), np.full(phi.size, rad)])
        block = np.empty((phi.size, len(fixed) + 1, 3))
        block[:, :len(fixed)] = fixed
        block[:, -1] = moving
        circles.append(block)
        owner.append(np.full(phi.size, idx))
        wts.append(w)
    area = disc_minus_union_area_batch(np.concatenate(circles))
    owner = np.concatenate(owner)
    wts = np.concatenate(wts)
    vals = np.exp(-np.outer(lts, area)) * wts
    out = np.zeros((len(lts), len(r_nodes)))
    for t in range(len(lts)):
        out[t] = np.bincount(owner, weights=vals[t], minlength=len(r_nodes))
    return out


def _inside(lo, hi, pts):
    return [lo, hi] + [p for p in pts if lo < p < hi]


def _p_iii_2_order(cfg: SpatialConfig, lts: np.ndarray, order: int) -> np.ndarray:
    a, rd, rs = cfg.r_i_p, cfg.r_d, cfg.r_i_s
    outer = (0.0, 0.0, a)
    r1s, w1 = _panel_nodes(_inside(0.0, rs, (abs(rd - a), rd + a, rd, 2.0 * rd)), order)
    total = np.zeros(len(lts))
    for r1, wr1 in zip(r1s, w1):
        # symmetric in (r1, r2): integrate r2 <= r1 and double
        r2s, w2 = _panel_nodes(_inside(0.0, r1, (abs(rd - a), rd + a, abs(r1 - 2.0 * rd))), order)
        inner = _ring_average([outer, (r1, 0.0, rd)], rd, r2s, order, lts)
        total += wr1 * r1 * (inner @ (w2 * r2s))
    return 8.0 / (math.pi * rs**4) * total


def _p_iii_2(cfg: SpatialConfig, lts) -> np.ndarray:
    lts = np.atleast_1d(np.asarray(lts, dtype=float))
    if cfg.r_d >= cfg.r_i_s + cfg.r_i_p:
        return np.ones(len(lts))
    lo, hi = (_p_iii_2_order(cfg, lts, o) for o in PANEL_ORDERS)
    return _order_check(lo, hi, "P_III(m=2)")


def _p_iv_1_order(cfg: SpatialConfig, lts: np.ndarray, order: int) -> np.ndarray:
    rd, rs, rrs, a = cfg.r_d, cfg.r_i_s, cfg.r_r_s, cfg.r_i_p
    fixed = [(-rrs, 0.0, rd), (0.0, 0.0, a)]
    pts = [abs(rd - a), rd + a, abs(rrs - 2.0 * rd), rrs + 2.0 * rd, rrs]
    for px, py in _circle_intersections(*fixed):
        dx = math.hypot(px, py)
        pts += [abs(dx - rd), dx + rd]
    rs_nodes, w = _panel_nodes(_inside(0.0, rs, pts), order)
    inner = _ring_average(fixed, rd, rs_nodes, order, lts)
    return 2.0 / (math.pi * rs**2) * (inner @ (w * rs_nodes))


def _p_iv_1(cfg: SpatialConfig, lts) -> np.ndarray:
    lts = np.atleast_1d(np.asarray(lts, dtype=float))
    if cfg.r_d == 0.0:
        return np.ones(len(lts))
    lo, hi = (_p_iv_1_order(cfg, lts, o) for o in PANEL_ORDERS)
    return _order_check(lo, hi, "P_IV(m=1)")


def _order_check(lo, hi, label):
    err = float(np.max(np.abs(hi - lo)))
    if not np.all(np.isfinite(hi)) or err > QUAD_TOL:
        raise NumericalError(f"{label}: quadrature error estimate {err:.3g} exceeds {QUAD_TOL}")
    return hi


def _p_iv_shifted(cfg: SpatialConfig, lt: float, offset: float) -> float:
    rd = cfg.r_d
    area = math.pi * rd * rd - lens_area(rd, rd, abs(offset))
    return math.exp(-lt * area)


_TERMS_CACHE: dict = {}


def _interference_table(cfg: SpatialConfig, thetas) -> dict:
    """(P_III, P_IV) triples for each theta, computed in one batch and memoized."""
    key = astuple(cfg)
    missing = sorted({float(t) for t in thetas if (key, float(t)) not in _TERMS_CACHE})
    if missing:
        lts = cfg.lam * np.asarray(missing)
        p3_2 = _p_iii_2(cfg, lts)
        p4_1 = _p_iv_1(cfg, lts)
        for k, th in enumerate(missing):
            lt = lts[k]
            p3 = (_p_iii_1(cfg, lt), float(p3_2[k]), 1.0)
            p4 = (float(p4_1[k]),
                  _p_iv_shifted(cfg, lt, -cfg.r_r_s + cfg.r_i_s / 2.0),
                  _p_iv_shifted(cfg, lt, -cfg.r_r_s + cfg.r_i_s))
            _TERMS_CACHE[(key, th)] = (p3, p4)
    return {float(t): _TERMS_CACHE[(key, float(t))] for t in thetas}


def interference_terms(cfg: SpatialConfig, theta_j: float) -> dict:
    """P_III and P_IV surrogates for m = 1, 2 and m >= 3 interfering secondaries."""
    p3, p4 = _interference_table(cfg, [theta_j])[float(theta_j)]
    return {"p_iii": p3, "p_iv": p4}


def p_success_curve(cfg: SpatialConfig, theta_j: float, k_max: int) -> np.ndarray:
    """P_s|(j,K) for K = 1..k_max (index K-1), clamped to [0, 1]."""
    p3, p4 = _interference_table(cfg, [theta_j])[float(theta_j)]
    v = [p3[i] * p4[i] for i in range(3)]
    g = cfg.gamma
    km1 = np.arange(k_max, dtype=float)  # K - 1
    b0 = (1.0 - g) ** km1
    b1 = km1 * g * (1.0 - g) ** np.maximum(km1 - 1, 0)
    b2 = km1 * (km1 - 1) / 2.0 * g * g * (1.0 - g) ** np.maximum(km1 - 2, 0)
    b3 = np.clip(1.0 - b0 - b1 - b2, 0.0, 1.0)
    raw = _first_term(cfg, theta_j) - (v[0] * b1 + v[1] * b2 + v[2] * b3)
    low = raw < 0.0
    high = raw > 1.0
    if low.any():
        CLAMP_EVENTS["p_success<0"] += int(low.sum())
    if high.any():
        CLAMP_EVENTS["p_success>1"] += int(high.sum())
    return np.clip(raw, 0.0, 1.0)


def p_success(cfg: SpatialConfig, theta_j: float, k: int) -> float:
    """Success probability of a secondary pair on channel j when K = ``k`` secondaries chose it."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    return float(p_success_curve(cfg, theta_j, k)[k - 1])


# --- throughput ------------------------------------------------------------


def conditional_user_throughput(cfg: SpatialConfig, cs: ChannelSet, scheme: SensingScheme,
                                l_max: int, weighting: str = "printed") -> np.ndarray:
    """C_{s1|l} for l = 1..l_max.

    ``"printed"`` weights P_s|(j,K) by C(l,K) P_j^K (1-P_j)^(l-K).
    ``"per_user"`` conditions on the tagged user choosing channel j, i.e.
    P_j C(l-1,K-1) P_j^(K-1) (1-P_j)^(l-K).
    """
    p = _singleton_probs(cs, scheme)
    rates = cs.rates
    out = np.zeros(l_max)
    _interference_table(cfg, [cs.thetas[j] for j in range(cs.n) if p[j] > 0])
    curves = {}
    for j in range(cs.n):
        if p[j] == 0.0:
            continue
        th = cs.thetas[j]
        if th not in curves:
            curves[th] = p_success_curve(cfg, th, l_max)
        ps = curves[th]
        for l in range(1, l_max + 1):
            k = np.arange(1, l + 1)
            if weighting == "printed":
                w = binom.pmf(k, l, p[j])
            elif weighting == "per_user":
                w = p[j] * binom.pmf(k - 1, l - 1, p[j])
            else:
                raise ValueError(f"unknown weighting {weighting!r}")
            out[l - 1] += rates[j] * float(np.dot(w, ps[:l]))
    return out


def cell_network_throughput(cfg: SpatialConfig, cs: ChannelSet, scheme: SensingScheme,
                            params: AlohaParams, weighting: str = "printed") -> float:
    if params.q == 0.0:
        return 0.0
    cond = conditional_user_throughput(cfg, cs, scheme, params.m, weighting)
    w = binomial_weights(params.m, params.q)[1:]
    return float(np.sum(w * np.arange(1, params.m + 1) * cond))


def cell_throughput_sweep(cfg: SpatialConfig, cs: ChannelSet, scheme: SensingScheme, q: float,
                          m_values, weighting: str = "printed") -> list[tuple[int, float]]:
    """Fixed-r_d sweep over M; reuses the conditional throughput across M."""
    m_values = [int(m) for m in m_values if m >= 1]
    if not m_values:
        return []
    cond = conditional_user_throughput(cfg, cs, scheme, max(m_values), weighting)
    out = []
    for m in m_values:
        w = binomial_weights(m, q)[1:]
        out.append((m, float(np.sum(w * np.arange(1, m + 1) * cond[:m]))))
    return out


def simplified_cell_throughput(radius, lam, theta, n, m, q, gamma, c) -> float:
    """Closed form for equal channels, all ranges ``radius`` and r_d = 2 * radius."""
    if not (0.0 < gamma < 1.0):
        raise ValidationError(f"gamma must lie in (0, 1), got {gamma}")
    lead = math.exp(-3.0 * math.pi * lam * theta * radius**2) * c * q / (1.0 - gamma) * n * m
    return lead * ((1.0 - gamma / n) * (1.0 - q * gamma / n) ** (m - 1)
                   - (1.0 - 1.0 / n) * (1.0 - q / n) ** (m - 1))


def cell_optimal_m(n: int, q: float, gamma: float) -> float:
    """Stationary point -1/ln(1 - q gamma / N) of the dominant simplified term."""
    x = q * gamma / n
    if not (0.0 < x < 1.0):
        raise ValidationError(f"need 0 < q gamma / n < 1, got {x}")
    return -1.0 / math.log1p(-x)
