"""Acceptance gate: ten end-to-end criteria, each printing one PASS/FAIL line.

Criteria are checked at their stated tolerances.  Where a criterion does not
hold for the model as specified, the test fails and the failure detail is
printed; see the decisions ledger for the analysis.
"""
import math
import time

import numpy as np
import pytest

from cogmac import aloha, spatial
from cogmac.aloha import AlohaParams
from cogmac.channels import channels_for_rho, new_channel_set, summarize
from cogmac.csma import (DetectorModel, collision_probability_exact, csma_throughput,
                         kkt_residual, loss_percentage, optimal_multi, optimal_single,
                         optimal_with_errors, unutilized_capacity)
from cogmac.montecarlo import (SpatialScenario, simulate_aloha_datalink, simulate_csma,
                               simulate_spatial)
from cogmac.sensing import (enumerate_groups, heuristic_multi, heuristic_single, make_scheme,
                            singleton_catalog)

# caption values of the cell figures
CAP_LAM = 1.0 / 1.5**2
CAP_Q = 0.3
CAP_XI = 0.2
CAP_GAMMA = 0.1
CAP_RHO = 0.15


@pytest.fixture
def verdict(capsys):
    """Print 'ACCEPTANCE <n>: PASS|FAIL <detail>' past pytest's capture, then assert."""
    def _report(num, checks, detail=""):
        failed = [name for name, ok in checks if not ok]
        status = "PASS" if not failed else "FAIL"
        line = f"ACCEPTANCE {num}: {status} {detail}"
        if failed:
            line += f" | failed: {'; '.join(failed)}"
        with capsys.disabled():
            print("\n" + line)
        assert not failed, line
    return _report


# 1 ----------------------------------------------------------------------------


def test_acceptance_1_enumeration_equivalence(verdict):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(200):
        n = int(rng.integers(1, 4))
        m = int(rng.integers(1, 5))
        q = (0.3, 0.7, 1.0)[k % 3]
        cs = new_channel_set(rng.uniform(0.2, 3.0, n), rng.uniform(0.0, 0.95, n))
        scheme = make_scheme(singleton_catalog(n), rng.dirichlet(np.ones(n)))
        p = AlohaParams(m, q)
        a = aloha.network_throughput(cs, scheme, p)
        b = aloha.brute_force_throughput(cs, scheme, p)
        worst = max(worst, abs(a - b) / max(abs(b), 1e-300))
    elapsed = time.perf_counter() - t0
    verdict(1, [("relative error <= 1e-12", worst <= 1e-12), ("runtime < 5 s", elapsed < 5.0)],
            f"max rel err {worst:.2e}, {elapsed:.2f} s")


# 2 ----------------------------------------------------------------------------


def test_acceptance_2_symmetric_optimum(verdict):
    t0 = time.perf_counter()
    checks = []
    picks = []
    for n in (10, 50, 100):
        cs = new_channel_set([1.0] * n, [0.3] * n)
        sch = heuristic_single(cs)
        for q in (0.2, 0.4, 0.8):
            m_star = aloha.symmetric_optimal_m(n, q)
            sweep = aloha.throughput_sweep(cs, sch, q, range(1, int(3 * m_star) + 2))
            best = max(sweep, key=lambda mv: mv[1])[0]
            ok = best in (math.floor(m_star), math.ceil(m_star))
            checks.append((f"N={n} q={q}: argmax {best} vs M*={m_star:.2f}", ok))
            picks.append(f"({n},{q})->{best}")
    elapsed = time.perf_counter() - t0
    m_ref = aloha.symmetric_optimal_m(100, 0.4)
    checks.append((f"M*(100,0.4)={m_ref:.3f} ~ 249.5", abs(m_ref - 249.5) < 0.05))
    checks.append(("sweep runtime < 10 s", elapsed < 10.0))
    verdict(2, checks, f"M*(100,0.4)={m_ref:.4f}; argmax {' '.join(picks)}; {elapsed:.2f} s")


# 3 ----------------------------------------------------------------------------


def test_acceptance_3_aloha_monte_carlo(verdict):
    cs = channels_for_rho(5, 0.5, np.random.default_rng(3))
    sch = heuristic_single(cs)
    p = AlohaParams(10, 0.4)
    t0 = time.perf_counter()
    est = simulate_aloha_datalink(cs, sch, p, 100_000, seed=2024, shards=4)
    elapsed = time.perf_counter() - t0
    exact = aloha.network_throughput(cs, sch, p)
    z = (est.mean - exact) / est.std_error
    verdict(3, [("within 3 standard errors", est.within(exact)),
                ("std error < 1% of mean", est.std_error < 0.01 * est.mean),
                ("runtime < 30 s", elapsed < 30.0)],
            f"sim {est.mean:.5f} +- {est.std_error:.5f}, analytic {exact:.5f}, z={z:+.2f}, "
            f"{elapsed:.2f} s")


# 4 ----------------------------------------------------------------------------


def _grid_simplex(n, step):
    k = int(round(1 / step))
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        a = np.arange(k + 1) / k
        return np.column_stack([a, 1 - a])
    i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
    keep = i + j <= k
    i, j = i[keep], j[keep]
    return np.column_stack([i, j, k - i - j]) / k


def test_acceptance_4_water_filling(verdict):
    checks = []
    r = optimal_single(new_channel_set([2.0, 1.0], [0.0, 0.0]), 2)
    e1 = max(np.max(np.abs(r.scheme.probs - [2 / 3, 1 / 3])), abs(r.nu - 4 / 3))
    checks.append(("hand example (2,1), M=2", e1 <= 1e-8))
    r = optimal_single(new_channel_set([3.0, 3.0, 1 / 3], [0.0, 0.0, 0.0]), 3)
    e2 = max(np.max(np.abs(r.scheme.probs - [0.5, 0.5, 0.0])), abs(r.nu - 2.25))
    checks.append(("hand example (3,3,1/3), M=3", e2 <= 1e-8))

    rng = np.random.default_rng(404)
    worst_kkt = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 16))
        m = int(rng.integers(2, 200))
        cs = new_channel_set(rng.uniform(0.1, 3.0, n), rng.uniform(0.0, 0.95, n))
        rep = optimal_single(cs, m)
        worst_kkt = max(worst_kkt, kkt_residual(cs, rep.scheme, m)[0])
    checks.append(("KKT residual <= 1e-8 on 100 instances", worst_kkt <= 1e-8))

    worst_gap = -math.inf
    for n in (1, 2, 3):
        grid = _grid_simplex(n, 1e-3)
        for m in (2, 3, 5, 10, 25):
            for _ in range(4):
                cs = new_channel_set(rng.uniform(0.1, 3.0, n), rng.uniform(0.0, 0.95, n))
                best = float(np.min(((1.0 - grid) ** m) @ cs.idle_rates))
                gap = optimal_single(cs, m).objective - best
                worst_gap = max(worst_gap, gap)
    checks.append(("objective <= grid minimum + 1e-6 (N<=3)", worst_gap <= 1e-6))
    verdict(4, checks, f"hand errs {e1:.1e}/{e2:.1e}, max KKT {worst_kkt:.1e}, "
                       f"max (solver - grid) {worst_gap:.1e}")


# 5 ----------------------------------------------------------------------------


def test_acceptance_5_full_utilization(verdict):
    cs = channels_for_rho(12, 0.8, np.random.default_rng(5))
    c_t = summarize(cs).c_residual
    rep = optimal_single(cs, 200)
    unused = unutilized_capacity(cs, rep.scheme, 200)
    sim = simulate_csma(cs, rep.scheme, 200, DetectorModel(), 100_000, seed=55, shards=4)
    frac = sim.utilized_fraction
    verdict(5, [("unutilized < 1e-3 C_t", unused < 1e-3 * c_t),
                ("simulated utilized fraction > 0.99 within 3 sigma",
                 frac.mean + 3 * frac.std_error > 0.99)],
            f"unutilized/C_t={unused / c_t:.2e}, simulated fraction {frac.mean:.5f} +- "
            f"{frac.std_error:.5f}, analytic {csma_throughput(cs, rep.scheme, 200) / c_t:.5f}")


# 6 ----------------------------------------------------------------------------


def test_acceptance_6_heuristic_loss(verdict):
    cs = channels_for_rho(12, 0.8, np.random.default_rng(5))
    cat = singleton_catalog(12)
    heur = heuristic_single(cs)
    ms = list(range(12, 97))
    loss = np.array([loss_percentage(cs, cat, m, heur, optimal_single(cs, m)) for m in ms])
    rises = [(ms[k], ms[k + 1]) for k in range(len(ms) - 1) if loss[k + 1] > loss[k] + 1e-9]
    peak = ms[int(np.argmax(loss))]

    cs10 = channels_for_rho(10, 0.8, np.random.default_rng(6))
    ms10 = list(range(2, 61, 2))
    by_s = {}
    for s in (2, 5):
        cat_s = enumerate_groups(10, s)
        h = heuristic_multi(cs10, cat_s)
        by_s[s] = np.array([loss_percentage(cs10, cat_s, m, h, optimal_multi(cs10, cat_s, m))
                            for m in ms10])
    s_bad = [m for m, a, b in zip(ms10, by_s[5], by_s[2]) if a > b + 1e-9]
    verdict(6, [("loss nonnegative", bool(np.all(loss >= -1e-9))),
                (f"loss non-increasing in M (rises at {len(rises)} steps, max at M={peak})",
                 not rises),
                ("loss < 5% for M >= N", bool(np.all(loss < 5.0))),
                ("N=10: loss(S=5) <= loss(S=2) for each M", not s_bad)],
            f"N=12 loss M=12:{loss[0]:.3f}% peak M={peak}:{loss.max():.3f}% M=96:{loss[-1]:.3f}%; "
            f"N=10 S=5 max {by_s[5].max():.3f}% vs S=2 max {by_s[2].max():.3f}%")


# 7 ----------------------------------------------------------------------------


def test_acceptance_7_error_aware_constraints(verdict):
    xi = 0.1
    cs = channels_for_rho(12, 0.2, np.random.default_rng(1))
    cat = enumerate_groups(12, 5)
    det = DetectorModel(0.2, 0.8)
    checks = []
    lines = []
    for m in (8, 16):
        rep = optimal_with_errors(cs, cat, m, det, xi=xi)
        d = det.with_f0(rep.f0)
        pc = [collision_probability_exact(cs, rep.scheme, m, d, i) for i in range(cs.n)]
        checks.append((f"M={m}: analytic collision <= xi", max(pc) <= xi + 1e-12))
        sim = simulate_csma(cs, rep.scheme, m, d, 100_000, seed=70 + m, shards=4)
        over = [(i, c.mean, c.std_error) for i, c in enumerate(sim.collision)
                if c.mean > xi + 3 * c.std_error]
        checks.append((f"M={m}: simulated collision <= xi + 3 sigma on every channel "
                       f"({len(over)} channels over)", not over))
        worst = max(sim.collision, key=lambda c: c.mean)
        lines.append(f"M={m}: f0={rep.f0:.4f} analytic max {max(pc):.4f}, simulated max "
                     f"{worst.mean:.4f} +- {worst.std_error:.4f}")

    gaps = []
    for m in (4, 8, 16):
        ref = optimal_multi(cs, cat, m)
        rep = optimal_with_errors(cs, cat, m, DetectorModel(0.0, 1.0), xi=xi)
        gaps.append(abs(unutilized_capacity(cs, rep.scheme, m) - ref.objective))
    checks.append(("alpha=0, beta=1 reduces to error-free optimum within 1e-6", max(gaps) <= 1e-6))
    verdict(7, checks, "; ".join(lines) + f"; reduction gap {max(gaps):.1e}")


# 8 ----------------------------------------------------------------------------


def test_acceptance_8_spatial_boundary(verdict):
    cfg = spatial.spatial_config(CAP_LAM, 1.0, 1.0, 1.0, 1.0, r_d=2.0, gamma=0.05)
    checks = [("p_cc exactly 0 at R_D = R_I^s + R_r^p",
               all(spatial.p_cc(cfg, th) == 0.0 for th in (0.1, 0.5, 0.9)))]
    cs = new_channel_set([1.0, 1.0], [0.3, 0.6])
    sc = SpatialScenario(cfg, cs, heuristic_single(cs), AlohaParams(6, 0.5))
    res = simulate_spatial(sc, 10_000, seed=88, shards=2)
    checks.append((f"zero simulated collisions ({res.collision_count})", res.collision_count == 0))
    lines = []
    for lam, theta, r_d in ((0.2, 0.5, 1.0), (CAP_LAM, 0.3, 1.5), (1.0, 0.8, 0.6)):
        c = spatial.spatial_config(lam, 1.0, 1.0, 1.0, 1.0, r_d=r_d, gamma=0.05)
        one = new_channel_set([1.0], [theta])
        r = simulate_spatial(SpatialScenario(c, one, heuristic_single(one), AlohaParams(3, 0.5)),
                             10_000, seed=int(100 * lam + 10 * theta))
        exact = math.exp(-lam * theta * math.pi * r_d**2)
        checks.append((f"void ({lam:.3f},{theta},{r_d}) within 3 sigma", r.void[0].within(exact)))
        lines.append(f"{r.void[0].mean:.4f}+-{r.void[0].std_error:.4f} vs {exact:.4f}")
    verdict(8, checks, f"collisions {res.collision_count}; void " + ", ".join(lines))


# 9 ----------------------------------------------------------------------------


def test_acceptance_9_detection_radius(verdict):
    cfg = spatial.symmetric_config(1.0, CAP_LAM, CAP_GAMMA, CAP_XI, r_d=0.0)
    ns = (5, 10, 20)
    ms = list(range(1, 61))
    tol = spatial.DETECTION_RADIUS_TOL
    table = {}
    for n in ns:
        cs = channels_for_rho(n, CAP_RHO, np.random.default_rng([0, n, round(CAP_RHO * 1e6)]))
        sch = heuristic_single(cs)
        table[n] = np.array([spatial.solve_detection_radius(cfg, cs, sch, AlohaParams(m, CAP_Q))
                             for m in ms])
    checks = []
    for n in ns:
        checks.append((f"N={n} non-decreasing in M", bool(np.all(np.diff(table[n]) >= -tol))))
    for a, b in zip(ns, ns[1:]):
        checks.append((f"N={a} >= N={b} at every M", bool(np.all(table[a] >= table[b] - tol))))
    zero = np.nonzero(table[20] == 0.0)[0]
    has_zero = zero.size > 0 and zero[0] == 0
    transition = ms[int(zero[-1])] if has_zero else None
    checks.append(("N=20 has R_D=0 at small M", has_zero))
    checks.append(("N=20 leaves R_D=0 at a finite M", has_zero and transition < ms[-1]))
    verdict(9, checks, f"N=20 R_D=0 for M <= {transition}; R_D(M=60) = "
                       + ", ".join(f"N={n}:{table[n][-1]:.4f}" for n in ns))


# 10 ---------------------------------------------------------------------------


def test_acceptance_10_cell_peak(verdict):
    checks = []
    lines = []
    cfg = spatial.symmetric_config(1.0, CAP_LAM, CAP_GAMMA)  # r_d = 2R
    drift = []
    for n in (2, 4, 6, 10, 20, 50, 100):
        m_star = spatial.cell_optimal_m(n, CAP_Q, CAP_GAMMA)
        ms = range(1, int(2 * m_star) + 2)
        vals = [spatial.simplified_cell_throughput(1.0, CAP_LAM, CAP_RHO, n, m, CAP_Q, CAP_GAMMA, 1.0)
                for m in ms]
        best = ms[int(np.argmax(vals))]
        drift.append(f"N={n}:{best - m_star:+.2f}")
        # the neglected second term shifts the argmax by about 0.033 N, so the +-1 band is
        # checked on the figure's channel counts; larger N is reported only
        if n <= 20:
            checks.append((f"simplified N={n}: peak {best} vs {m_star:.2f}",
                           abs(best - m_star) <= 1.0))

    for n in (2, 4, 6):
        target = n / (CAP_Q * CAP_GAMMA)
        cs = new_channel_set([1.0] * n, [CAP_RHO] * n)
        sch = heuristic_single(cs)
        ms = list(range(1, int(2 * target) + 2))
        peaks = {}
        for w in ("printed", "per_user"):
            sweep = spatial.cell_throughput_sweep(cfg, cs, sch, CAP_Q, ms, weighting=w)
            peaks[w] = max(sweep, key=lambda mv: mv[1])[0]
        ok = target / 2.0 <= peaks["printed"] <= 2.0 * target
        checks.append((f"full N={n}: peak {peaks['printed']} within factor 2 of {target:.1f}", ok))
        lines.append(f"N={n}: printed {peaks['printed']}, per_user {peaks['per_user']}, "
                     f"N/(q gamma)={target:.1f}")
    verdict(10, checks, "theta=0.15, R_D=2R; simplified argmax - M* " + " ".join(drift)
            + "; full peak " + "; ".join(lines))
