import math

import numpy as np
import pytest

from cogmac.aloha import AlohaParams
from cogmac.channels import ValidationError, channels_for_rho, new_channel_set
from cogmac.geometry import lens_area
from cogmac.sensing import heuristic_single
from cogmac.spatial import (CLAMP_EVENTS, _p_iii_1, _p_iii_2, _p_iv_1, annulus_weight,
                            cell_network_throughput, cell_optimal_m, collision_load,
                            conditional_user_throughput, p_cc, p_collision_channel,
                            p_success_curve, reset_clamp_events, simplified_cell_throughput,
                            solve_detection_radius, spatial_config, symmetric_config)

LAM = 1 / 1.5**2


def unit(r_d, gamma=0.1, xi=0.2):
    return spatial_config(LAM, 1, 1, 1, 1, r_d=r_d, gamma=gamma, xi=xi)


def test_gamma_cell_area_consistency():
    cfg = spatial_config(1, 1, 1, 1, 1, gamma=0.1)
    assert cfg.cell_area == pytest.approx(10 * math.pi)
    assert spatial_config(1, 1, 1, 1, 1, cell_area=10 * math.pi, gamma=0.1).gamma == pytest.approx(0.1)
    with pytest.raises(ValidationError, match="inconsistent"):
        spatial_config(1, 1, 1, 1, 1, cell_area=5.0, gamma=0.1)
    with pytest.raises(ValidationError):
        spatial_config(1, 1, 1, 1, 1)


def test_r_d_clamped_to_collision_free_bound():
    assert unit(5.0).r_d == 2.0


def test_annulus_empty_and_bounds():
    aw = annulus_weight(unit(2.0))
    assert aw.s_tilde == 0.0 and aw.s_bar == 1.0
    for r_d in (0.0, 0.5, 1.0, 1.9):
        aw = annulus_weight(unit(r_d))
        assert aw.s_tilde == pytest.approx(4 - r_d**2)
        assert 0.0 <= aw.s_bar <= 1.0


@pytest.mark.parametrize("r_r_p,r_i_s,r_d", [(1, 1, 1), (1, 1, 0), (0.7, 1.3, 0.4)])
def test_annulus_weight_geometric_oracle(r_r_p, r_i_s, r_d, rng):
    # transmitter uniform in the annulus r_d < r < r_i_s + r_r_p, receiver uniform in its
    # r_r_p disc; s_bar is the chance the receiver lands outside the r_i_s disc
    n = 1_000_000
    r_max = r_i_s + r_r_p
    r = np.sqrt(rng.uniform(r_d**2, r_max**2, n))
    rho = r_r_p * np.sqrt(rng.uniform(size=n))
    phi = rng.uniform(0, 2 * np.pi, n)
    out = np.hypot(r + rho * np.cos(phi), rho * np.sin(phi)) > r_i_s
    est, se = out.mean(), out.std() / math.sqrt(n)
    cfg = spatial_config(1, r_r_p, 1, 1, r_i_s, r_d=r_d, gamma=0.05)
    assert abs(annulus_weight(cfg).s_bar - est) <= 3 * se


def test_p_cc_exact_zero_at_bound():
    assert p_cc(unit(2.0), 0.5) == 0.0


def test_p_cc_no_detection_substitution():
    cfg = unit(0.0)
    aw = annulus_weight(cfg)
    a = LAM * 0.5 * math.pi
    want = (1 - math.exp(-a * aw.s_tilde * (1 - aw.s_bar))) / (1 - math.exp(-a))
    assert p_cc(cfg, 0.5) == pytest.approx(want, rel=1e-14)


def test_p_cc_theta_zero():
    reset_clamp_events()
    assert p_cc(unit(1.0), 0.0) == 0.0
    assert CLAMP_EVENTS["p_cc:theta=0"] == 1


def test_p_cc_decreasing_in_r_d():
    vals = [p_cc(unit(r), 0.4) for r in np.linspace(0, 2, 21)]
    assert all(0 <= v <= 1 for v in vals)
    assert np.all(np.diff(vals) <= 1e-15)


def test_collision_channel_is_linearized_product():
    cs = new_channel_set([1, 1, 1], [0.2, 0.5, 0.7])
    s = heuristic_single(cs)
    cfg = unit(1.0)
    p = AlohaParams(4, 0.3)
    for j in range(3):
        want = 4 * 0.3 * s.probs[j] * p_cc(cfg, cs.thetas[j])
        assert p_collision_channel(cfg, cs, s, p, j) == pytest.approx(min(want, 1.0), rel=1e-14)


def test_detection_radius_meets_budget_and_is_minimal():
    cs = channels_for_rho(10, 0.15, np.random.default_rng(2))
    s = heuristic_single(cs)
    cfg = unit(0.0)
    for m in (5, 20, 40, 80):
        p = AlohaParams(m, 0.3)
        r = solve_detection_radius(cfg, cs, s, p)
        bound = cs.n * cfg.xi / (m * p.q)
        assert collision_load(cfg.with_r_d(r), cs, s) <= bound
        if r > 0:
            assert collision_load(cfg.with_r_d(max(r - 1e-5, 0)), cs, s) > bound


def test_detection_radius_zero_when_q_zero():
    cs = channels_for_rho(4, 0.15, np.random.default_rng(2))
    assert solve_detection_radius(unit(0.0), cs, heuristic_single(cs), AlohaParams(50, 0.0)) == 0.0


def _discs(x, y, r):
    shapely = pytest.importorskip("shapely")
    return shapely.buffer(shapely.points(x, y), r, quad_segs=64)


def _uniform_disc(rng, n, radius):
    r = radius * np.sqrt(rng.uniform(size=n))
    t = rng.uniform(0, 2 * np.pi, n)
    return r * np.cos(t), r * np.sin(t)


LTS = np.array([0.2, 0.8, 3.0])


@pytest.mark.parametrize("r_d", [0.6, 1.3])
def test_two_interferer_term_polygon_oracle(r_d, rng):
    shapely = pytest.importorskip("shapely")
    cfg = unit(r_d)
    n = 10_000
    x1, y1 = _uniform_disc(rng, n, cfg.r_i_s)
    x2, y2 = _uniform_disc(rng, n, cfg.r_i_s)
    base = _discs(np.zeros(n), np.zeros(n), cfg.r_i_p)
    holes = shapely.union(_discs(x1, y1, r_d), _discs(x2, y2, r_d))
    area = shapely.area(shapely.difference(base, holes))
    for lt, v in zip(LTS, _p_iii_2(cfg, LTS)):
        s = np.exp(-lt * area)
        assert abs(v - s.mean()) <= 3 * s.std() / math.sqrt(n) + 1e-3


@pytest.mark.parametrize("r_d", [0.6, 1.3])
def test_shifted_receiver_term_polygon_oracle(r_d, rng):
    shapely = pytest.importorskip("shapely")
    cfg = unit(r_d)
    n = 10_000
    x, y = _uniform_disc(rng, n, cfg.r_i_s)
    outer = _discs(np.full(n, -cfg.r_r_s), np.zeros(n), r_d)
    holes = shapely.union(_discs(np.zeros(n), np.zeros(n), cfg.r_i_p), _discs(x, y, r_d))
    area = shapely.area(shapely.difference(outer, holes))
    for lt, v in zip(LTS, _p_iv_1(cfg, LTS)):
        s = np.exp(-lt * area)
        assert abs(v - s.mean()) <= 3 * s.std() / math.sqrt(n) + 1e-3


def test_one_interferer_term_radial_oracle(rng):
    cfg = unit(0.9)
    n = 400_000
    r = cfg.r_i_s * np.sqrt(rng.uniform(size=n))
    area = math.pi - lens_area(1.0, 0.9, r)
    for lt in LTS:
        s = np.exp(-lt * area)
        assert abs(_p_iii_1(cfg, lt) - s.mean()) <= 3 * s.std() / math.sqrt(n)


def test_interference_terms_trivial_limits():
    # no detection disc: P_IV(1) is 1; detection covers the whole receiver disc: P_III(2) is 1
    np.testing.assert_array_equal(_p_iv_1(unit(0.0), LTS), 1.0)
    np.testing.assert_array_equal(_p_iii_2(unit(2.0), LTS), 1.0)


def test_success_curve_is_probability():
    reset_clamp_events()
    curve = p_success_curve(unit(1.2), 0.3, 200)
    assert np.all((curve >= 0) & (curve <= 1))


def test_conditional_weightings_single_channel():
    # with one channel P_j = 1: the printed weighting puts all mass on K = l,
    # the per-user weighting as well
    cs = new_channel_set([1], [0.3])
    s = heuristic_single(cs)
    cfg = unit(2.0)
    a = conditional_user_throughput(cfg, cs, s, 6, "printed")
    b = conditional_user_throughput(cfg, cs, s, 6, "per_user")
    np.testing.assert_allclose(a, b, rtol=1e-14)
    np.testing.assert_allclose(a, p_success_curve(cfg, 0.3, 6), rtol=1e-14)


def test_per_user_cell_throughput_below_residual_capacity_at_small_m():
    cs = channels_for_rho(4, 0.15, np.random.default_rng(3))
    s = heuristic_single(cs)
    cfg = unit(2.0)
    v = cell_network_throughput(cfg, cs, s, AlohaParams(3, 0.3), "per_user")
    assert 0 < v <= cs.idle_rates.sum()


def test_simplified_peak_matches_stationary_point():
    n, q, g = 5, 0.3, 0.1
    m_star = cell_optimal_m(n, q, g)
    ms = np.arange(1, int(3 * m_star))
    vals = [simplified_cell_throughput(1.0, LAM, 0.2, n, m, q, g, 1.0) for m in ms]
    assert abs(ms[int(np.argmax(vals))] - m_star) <= 1
