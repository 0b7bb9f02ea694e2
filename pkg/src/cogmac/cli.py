"""Command-line front end: scenario runs, sweeps and figure recipes."""
from __future__ import annotations

import argparse
import math
import sys
import time

import numpy as np

from . import aloha, csma, montecarlo, spatial
from .aloha import AlohaParams
from .channels import ChannelSet, ValidationError, channels_for_rho, summarize
from .config import ConfigError, ScenarioConfig, config_hash, load_config, parse_range
from .results import ResultRow, emit_results, output_paths, write_manifest
from .sensing import (NoOpportunityError, enumerate_groups, heuristic_multi, heuristic_single,
                      make_scheme, scheme_from_records, scheme_to_records, singleton_catalog)
from .spatial import NumericalError

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2
SWEEP_KEYS = ("M",)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# --- scheme construction -------------------------------------------------------


def _catalog(cs: ChannelSet, s: int):
    return singleton_catalog(cs.n) if s == 1 else enumerate_groups(cs.n, s)


def heuristic_for(cs: ChannelSet, s: int):
    return heuristic_single(cs) if s == 1 else heuristic_multi(cs, enumerate_groups(cs.n, s))


def solve_policy(cfg: ScenarioConfig, m: int) -> csma.SolverReport:
    """Optimal CSMA sensing scheme at population ``m`` for the config's group size and detector."""
    cs, det = cfg.channels, cfg.detector
    if det is None:
        if cfg.s == 1:
            return csma.optimal_single(cs, m)
        return csma.optimal_multi(cs, enumerate_groups(cs.n, cfg.s), m)
    o = cfg.detector_opts
    return csma.optimal_with_errors(cs, _catalog(cs, cfg.s), m, det, o["xi"],
                                    objective=o["objective"], collision=o["collision"],
                                    f0_fixed=det.f0 if o["f0_policy"] == "fixed" else None)


def scheme_for(cfg: ScenarioConfig, m: int | None = None):
    """Return (scheme, solver report or None)."""
    cs = cfg.channels
    if cfg.scheme_kind == "heuristic_single":
        return heuristic_single(cs), None
    if cfg.scheme_kind == "heuristic_multi":
        return heuristic_multi(cs, enumerate_groups(cs.n, cfg.s)), None
    if cfg.scheme_kind == "explicit":
        ex = cfg.explicit
        if ex and isinstance(ex[0], dict):
            return scheme_from_records(ex, cs.n), None
        return make_scheme(singleton_catalog(cs.n), ex), None
    if m is None:
        raise ValidationError("scheme.kind 'optimal' needs a population size")
    rep = solve_policy(cfg, m)
    if rep.status == csma.INFEASIBLE:
        raise ValidationError(f"no feasible policy at M={m}: {rep.info.get('reason')}")
    return rep.scheme, rep


def _nonzero_records(scheme, tol=1e-12):
    return [r for r in scheme_to_records(scheme) if r["probability"] > tol]


# --- subcommands -----------------------------------------------------------------


class Run:
    """Accumulates rows and manifest entries for one invocation."""

    def __init__(self, args, cfg: ScenarioConfig | None):
        self.args = args
        self.cfg = cfg
        self.rows: list[ResultRow] = []
        self.choices: dict = {}
        self.solver: list = []
        self.thetas: dict = {}

    def add(self, coords, metric, value, provenance="analytic", se=None, seed=None):
        self.rows.append(ResultRow(dict(coords), metric, value, se, provenance, seed))

    def m_values(self, default):
        sweep = self.args.sweep_map
        if "M" in sweep:
            return sweep["M"]
        return list(default)

    def record_solver(self, coords, rep: csma.SolverReport, scheme=True):
        entry = {"coords": dict(coords), "status": rep.status, "iterations": rep.iterations,
                 "kkt_residual": rep.kkt_residual, "f0": rep.f0}
        for k in ("reason", "c_conv", "collision_skipped", "convexity_constraint"):
            if k in rep.info:
                entry[k] = rep.info[k]
        if scheme and rep.status != csma.INFEASIBLE:
            entry["scheme"] = _nonzero_records(rep.scheme)
        self.solver.append(entry)


def cmd_analyze_aloha(run: Run):
    cfg = run.cfg
    cs = cfg.channels
    scheme, _ = scheme_for(cfg)
    c_t = summarize(cs).c_residual
    for m in run.m_values(cfg.m_values):
        p = AlohaParams(m, cfg.q)
        val = aloha.network_throughput(cs, scheme, p)
        run.add({"M": m}, "throughput", val)
        run.add({"M": m}, "throughput_normalized", val / c_t if c_t > 0 else 0.0)
        run.add({"M": m}, "closed_form_printed",
                aloha.closed_form_throughput(cs, scheme, p, variant="printed"))
    if 0.0 < cfg.q < 1.0 and cfg.q < cs.n:
        run.choices["symmetric_m_star"] = aloha.symmetric_optimal_m(cs.n, cfg.q)


def _require_spatial(cfg):
    if cfg.spatial is None:
        raise ConfigError("spatial: section is required for this command")
    return cfg.spatial


def cmd_cell(run: Run):
    cfg = run.cfg
    sp = _require_spatial(cfg)
    cs = cfg.channels
    scheme, _ = scheme_for(cfg)
    c_t = summarize(cs).c_residual
    weightings = ("printed", "per_user") if run.args.weighting == "both" else (run.args.weighting,)
    for m in run.m_values(cfg.m_values):
        p = AlohaParams(m, cfg.q)
        r_d = sp.r_d if cfg.r_d_fixed else spatial.solve_detection_radius(sp, cs, scheme, p)
        at = sp.with_r_d(r_d)
        c = {"M": m}
        run.add(c, "detection_radius", r_d)
        run.add(c, "collision_probability_avg",
                float(np.mean([spatial.p_collision_channel(at, cs, scheme, p, j)
                               for j in range(cs.n)])))
        for w in weightings:
            val = spatial.cell_network_throughput(at, cs, scheme, p, weighting=w)
            run.add(c, f"cell_throughput_{w}", val)
            run.add(c, f"cell_throughput_{w}_normalized", val / c_t if c_t > 0 else 0.0)
    run.choices["weightings"] = list(weightings)
    run.choices["r_d"] = "fixed" if cfg.r_d_fixed else "solved per M from the collision budget"


def _per_channel(fn, cs, scheme, m, det):
    return np.array([fn(cs, scheme, m, det, i) for i in range(cs.n)])


def _policy_rows(run: Run, coords, cfg, m, rep):
    cs = cfg.channels
    c_t = summarize(cs).c_residual
    feasible = rep.status != csma.INFEASIBLE
    run.add(coords, "feasible", int(feasible), "optimized")
    run.record_solver(coords, rep)
    if not feasible:
        return
    if cfg.detector is None:
        thr = csma.csma_throughput(cs, rep.scheme, m)
        run.add(coords, "unutilized_capacity", rep.objective, "optimized")
    else:
        det = cfg.detector.with_f0(rep.f0)
        thr = csma.utilized_with_errors(cs, rep.scheme, m, det)
        run.add(coords, "objective", rep.objective, "optimized")
        run.add(coords, "f0", rep.f0, "optimized")
        pc = _per_channel(csma.collision_probability_exact, cs, rep.scheme, m, det)
        run.add(coords, "collision_probability_max", float(np.max(pc)), "optimized")
        pa = _per_channel(csma.collision_probability_any_access, cs, rep.scheme, m, det)
        run.add(coords, "collision_any_access_max", float(np.max(pa)), "optimized")
    run.add(coords, "throughput", thr, "optimized")
    run.add(coords, "throughput_normalized", thr / c_t if c_t > 0 else 0.0, "optimized")
    run.add(coords, "kkt_residual", rep.kkt_residual, "optimized")


def cmd_optimize(run: Run):
    cfg = run.cfg
    for m in run.m_values(cfg.m_values):
        _policy_rows(run, {"M": m}, cfg, m, solve_policy(cfg, m))


def cmd_compare(run: Run):
    cfg = run.cfg
    cs = cfg.channels
    cat = _catalog(cs, cfg.s)
    heur = heuristic_for(cs, cfg.s)
    c_t = summarize(cs).c_residual
    for m in run.m_values(cfg.m_values):
        rep = csma.optimal_single(cs, m) if cfg.s == 1 else csma.optimal_multi(cs, cat, m)
        run.record_solver({"M": m}, rep, scheme=False)
        c = {"M": m}
        run.add(c, "throughput_optimal_normalized", csma.csma_throughput(cs, rep.scheme, m) / c_t,
                "optimized")
        run.add(c, "throughput_heuristic_normalized", csma.csma_throughput(cs, heur, m) / c_t)
        loss = csma.loss_percentage(cs, cat, m, heur, rep)
        if math.isfinite(loss):
            run.add(c, "loss_percentage", loss, "optimized")
    run.choices["comparison"] = "error-free optimum against the heuristic scheme of the same group size"


def _protocol(run: Run):
    proto = run.args.protocol
    if proto != "auto":
        return proto
    if run.cfg.spatial is not None:
        return "spatial"
    if run.cfg.detector is not None or run.cfg.scheme_kind == "optimal" or run.cfg.s > 1:
        return "csma"
    return "aloha"


def cmd_simulate(run: Run):
    cfg = run.cfg
    cs = cfg.channels
    proto = _protocol(run)
    run.choices["protocol"] = proto
    seed, slots, shards = cfg.seed, cfg.slots, cfg.shards
    workers = run.args.workers
    for m in run.m_values(cfg.m_values):
        c = {"M": m}
        if proto == "aloha":
            scheme, _ = scheme_for(cfg)
            p = AlohaParams(m, cfg.q)
            est = montecarlo.simulate_aloha_datalink(cs, scheme, p, slots, seed, shards, workers)
            run.add(c, "throughput", est.mean, "simulated", est.std_error, seed)
            run.add(c, "throughput", aloha.network_throughput(cs, scheme, p))
        elif proto == "csma":
            scheme, rep = scheme_for(cfg, m)
            det = cfg.detector or csma.PERFECT
            if rep is not None:
                det = det.with_f0(rep.f0)
                run.record_solver(c, rep)
            res = montecarlo.simulate_csma(cs, scheme, m, det, slots, seed, shards, workers)
            for name, est in (("throughput", res.throughput),
                              ("utilized_fraction", res.utilized_fraction)):
                run.add(c, name, est.mean, "simulated", est.std_error, seed)
            thr = csma.utilized_with_errors(cs, scheme, m, det)
            run.add(c, "throughput", thr)
            c_t = summarize(cs).c_residual
            run.add(c, "utilized_fraction", thr / c_t if c_t > 0 else 0.0)
            pa = _per_channel(csma.collision_probability_any_access, cs, scheme, m, det)
            for j, est in enumerate(res.collision):
                cj = {"M": m, "channel": j}
                run.add(cj, "collision_rate", est.mean, "simulated", est.std_error, seed)
                run.add(cj, "collision_rate", float(pa[j]))
        elif proto == "spatial":
            sp = _require_spatial(cfg)
            scheme, _ = scheme_for(cfg)
            p = AlohaParams(m, cfg.q)
            r_d = sp.r_d if cfg.r_d_fixed else spatial.solve_detection_radius(sp, cs, scheme, p)
            at = sp.with_r_d(r_d)
            run.add(c, "detection_radius", r_d)
            res = montecarlo.simulate_spatial(montecarlo.SpatialScenario(at, cs, scheme, p), slots,
                                              seed, shards, workers)
            run.add(c, "cell_throughput", res.throughput.mean, "simulated",
                    res.throughput.std_error, seed)
            run.add(c, "success_rate", res.success.mean, "simulated", res.success.std_error, seed)
            run.add(c, "collision_count", res.collision_count, "simulated", None, seed)
            for j in range(cs.n):
                cj = {"M": m, "channel": j}
                th = cs.thetas[j]
                for name, est in (("collision_rate", res.collision_rate[j]), ("void", res.void[j]),
                                  ("p_cc", res.p_cc[j])):
                    if math.isfinite(est.mean):
                        run.add(cj, name, est.mean, "simulated", est.std_error, seed)
                run.add(cj, "void", math.exp(-at.lam * th * math.pi * at.r_d**2))
                if th > 0:
                    run.add(cj, "p_cc", spatial.p_cc(at, th))
        else:
            raise ValidationError(f"unknown protocol {proto!r}")
    run.choices.update({"slots": slots, "shards": shards, "seed": seed})


# --- figure recipes ------------------------------------------------------------------


def _rho_channels(run: Run, n: int, rho: float) -> ChannelSet:
    """Caption-unspecified busy probabilities for (N, rho), seeded from the run seed."""
    rng = np.random.default_rng([run.args.seed_value, n, int(round(rho * 1_000_000))])
    cs = channels_for_rho(n, rho, rng)
    run.thetas[f"N={n},rho={rho}"] = list(cs.thetas)
    return cs


def fig_aloha_msweep(run: Run):
    q, n = 0.4, 100
    ms = run.m_values(range(1, 401))
    run.choices.update(M=_span(ms))
    for rho in (0.2, 0.5, 0.8):
        cs = _rho_channels(run, n, rho)
        for m, v in aloha.throughput_sweep(cs, heuristic_single(cs), q, ms, normalize=True):
            run.add({"rho": rho, "M": m}, "throughput_normalized", v)
    run.choices["symmetric_m_star"] = aloha.symmetric_optimal_m(n, q)


CELL_CAPTION = {"radius": 1.0, "xi": 0.2, "q": 0.3, "lam": 1.0 / 1.5**2}


def fig_detection_radius(run: Run):
    cap = CELL_CAPTION
    gamma, rho, ns = 0.1, 0.15, (5, 10, 20)
    ms = run.m_values(range(1, 61))
    run.choices.update(N=list(ns), gamma=gamma, rho=rho, M=_span(ms),
                       note="gamma does not enter the detection radius")
    cfg = spatial.symmetric_config(cap["radius"], cap["lam"], gamma, cap["xi"], r_d=0.0)
    for n in ns:
        cs = _rho_channels(run, n, rho)
        sch = heuristic_single(cs)
        for m in ms:
            r_d = spatial.solve_detection_radius(cfg, cs, sch, AlohaParams(m, cap["q"]))
            run.add({"N": n, "M": m}, "detection_radius", r_d)


def fig_cell_throughput(run: Run):
    cap = CELL_CAPTION
    gamma, rho, ns = 0.1, 0.15, (2, 4, 6)
    ms = run.m_values(range(1, 401, 10))
    run.choices.update(N=list(ns), M=_span(ms), weightings=["printed", "per_user"],
                       r_d="solved per M from the collision budget")
    cfg = spatial.symmetric_config(cap["radius"], cap["lam"], gamma, cap["xi"], r_d=0.0)
    for n in ns:
        cs = _rho_channels(run, n, rho)
        sch = heuristic_single(cs)
        c_t = summarize(cs).c_residual
        for m in ms:
            p = AlohaParams(m, cap["q"])
            r_d = spatial.solve_detection_radius(cfg, cs, sch, p)
            at = cfg.with_r_d(r_d)
            run.add({"N": n, "M": m}, "detection_radius", r_d)
            for w in ("printed", "per_user"):
                v = spatial.cell_network_throughput(at, cs, sch, p, weighting=w)
                run.add({"N": n, "M": m}, f"cell_throughput_{w}_normalized", v / c_t)
        run.add({"N": n}, "conjectured_peak_m", n / (cap["q"] * gamma))


def _csma_series(run: Run, coords, cs, s, ms, loss_only=False):
    cat = _catalog(cs, s)
    heur = heuristic_for(cs, s)
    c_t = summarize(cs).c_residual
    for m in ms:
        rep = csma.optimal_single(cs, m) if s == 1 else csma.optimal_multi(cs, cat, m)
        c = dict(coords, M=m)
        run.record_solver(c, rep, scheme=False)
        if not loss_only:
            run.add(c, "throughput_optimal_normalized",
                    csma.csma_throughput(cs, rep.scheme, m) / c_t, "optimized")
            run.add(c, "throughput_heuristic_normalized", csma.csma_throughput(cs, heur, m) / c_t)
        loss = csma.loss_percentage(cs, cat, m, heur, rep)
        if math.isfinite(loss):
            run.add(c, "loss_percentage", loss, "optimized")


def fig_csma_optimal(run: Run):
    rho, ns = 0.8, (4, 8, 12)
    ms = run.m_values(range(2, 101))
    run.choices.update(N=list(ns), M=_span(ms), s=1)
    for n in ns:
        _csma_series(run, {"N": n}, _rho_channels(run, n, rho), 1, ms)


def fig_loss_single(run: Run):
    rho, ns = 0.8, (4, 8, 12)
    ms = run.m_values(range(2, 101))
    run.choices.update(N=list(ns), M=_span(ms), s=1)
    for n in ns:
        _csma_series(run, {"N": n}, _rho_channels(run, n, rho), 1, ms, loss_only=True)


def fig_loss_rho(run: Run):
    n = 12
    ms = run.m_values(range(2, 101))
    run.choices.update(M=_span(ms), s=1)
    for rho in (0.2, 0.5, 0.8):
        _csma_series(run, {"rho": rho}, _rho_channels(run, n, rho), 1, ms, loss_only=True)


def fig_multi_s(run: Run):
    rho, n, ss = 0.2, 20, (1, 2, 5)
    ms = run.m_values(range(2, 61))
    run.choices.update(S=list(ss), M=_span(ms))
    cs = _rho_channels(run, n, rho)
    for s in ss:
        _csma_series(run, {"S": s}, cs, s, ms)


def fig_loss_multi(run: Run):
    n = 10
    ms = run.m_values(range(2, 61))
    run.choices.update(M=_span(ms))
    for rho in (0.8, 0.4):
        cs = _rho_channels(run, n, rho)
        for s in (2, 5, 7):
            _csma_series(run, {"rho": rho, "S": s}, cs, s, ms)


ERROR_DETECTOR = {"alpha": 0.2, "beta": 0.8}
ERROR_XI = 0.1


def _error_series(run: Run, coords, cs, s, ms, with_free=False):
    det = csma.DetectorModel(ERROR_DETECTOR["alpha"], ERROR_DETECTOR["beta"])
    cat = _catalog(cs, s)
    c_t = summarize(cs).c_residual
    for m in ms:
        c = dict(coords, M=m)
        if m >= 2:
            rep = csma.optimal_with_errors(cs, cat, m, det, ERROR_XI)
            run.record_solver(c, rep, scheme=False)
            ok = rep.status != csma.INFEASIBLE
            run.add(c, "feasible", int(ok), "optimized")
            if ok:
                thr = csma.utilized_with_errors(cs, rep.scheme, m, det.with_f0(rep.f0))
                run.add(c, "throughput_errors_normalized", thr / c_t, "optimized")
                run.add(c, "f0", rep.f0, "optimized")
        if with_free:
            rep = csma.optimal_single(cs, m) if s == 1 else csma.optimal_multi(cs, cat, m)
            run.add(c, "throughput_error_free_normalized",
                    csma.csma_throughput(cs, rep.scheme, m) / c_t, "optimized")


def fig_error_ns(run: Run):
    rho = 0.2
    ms = run.m_values(range(2, 41))
    ns_a, ss_b = (6, 8, 10, 12), (1, 3, 5)
    run.choices.update(M=_span(ms), panel_a={"S": 5, "N": list(ns_a)},
                       panel_b={"N": 12, "S": list(ss_b)}, xi=ERROR_XI, **ERROR_DETECTOR)
    for n in ns_a:
        _error_series(run, {"panel": "a", "N": n, "S": 5}, _rho_channels(run, n, rho), 5, ms)
    cs = _rho_channels(run, 12, rho)
    for s in ss_b:
        _error_series(run, {"panel": "b", "N": 12, "S": s}, cs, s, ms)


def fig_error_vs_free(run: Run):
    rho = 0.2
    ms = run.m_values(range(2, 41))
    ns_a, ss_b = (4, 7, 10), (1, 2, 3)
    run.choices.update(M=_span(ms), panel_a={"S": 3, "N": list(ns_a)},
                       panel_b={"N": 7, "S": list(ss_b)}, xi=ERROR_XI, **ERROR_DETECTOR,
                       detector_note="alpha, beta taken from the error-ns recipe")
    for n in ns_a:
        _error_series(run, {"panel": "a", "N": n, "S": 3}, _rho_channels(run, n, rho), 3, ms, True)
    cs = _rho_channels(run, 7, rho)
    for s in ss_b:
        _error_series(run, {"panel": "b", "N": 7, "S": s}, cs, s, ms, True)


RECIPES = {
    "aloha-msweep": fig_aloha_msweep,
    "detection-radius": fig_detection_radius,
    "cell-throughput": fig_cell_throughput,
    "csma-optimal": fig_csma_optimal,
    "loss-single": fig_loss_single,
    "loss-rho": fig_loss_rho,
    "multi-s": fig_multi_s,
    "loss-multi": fig_loss_multi,
    "error-ns": fig_error_ns,
    "error-vs-free": fig_error_vs_free,
}


def _span(ms):
    ms = list(ms)
    return {"first": ms[0], "last": ms[-1], "count": len(ms)} if ms else {}


# --- plumbing ----------------------------------------------------------------------------


COMMANDS = {
    "analyze-aloha": cmd_analyze_aloha,
    "cell": cmd_cell,
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario file (YAML)")
    common.add_argument("--out", help="output file or directory (default: $COGMAC_OUT_DIR, else stdout)")
    common.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    common.add_argument("--seed", type=int, help="override simulation.seed")
    common.add_argument("--slots", type=int, help="override simulation.slots")
    common.add_argument("--shards", type=int, help="override simulation.shards")
    common.add_argument("--workers", type=int, default=0, help="processes for simulation shards")
    common.add_argument("--sweep", action="append", default=[], metavar="KEY=RANGE",
                        help="e.g. M=1..400, M=1..400:5 or M=2,4,8")
    parser = _Parser(prog="cogmac", description="Cognitive radio MAC analysis and simulation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("analyze-aloha", parents=[common], help="analytic slotted-ALOHA M-sweep")
    p = sub.add_parser("cell", parents=[common], help="cell-based spatial analytics")
    p.add_argument("--weighting", choices=("printed", "per_user", "both"), default="both")
    sub.add_parser("optimize", parents=[common], help="optimal CSMA sensing policies")
    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo simulation")
    p.add_argument("--protocol", choices=("auto", "aloha", "csma", "spatial"), default="auto")
    sub.add_parser("compare", parents=[common], help="optimal vs heuristic loss table")
    p = sub.add_parser("figures", parents=[common], help="figure reproduction recipes")
    p.add_argument("recipe", choices=sorted(RECIPES))
    return parser


def _parse_sweeps(items) -> dict:
    out = {}
    for item in items:
        key, sep, val = item.partition("=")
        key = key.strip()
        if not sep:
            raise UsageError(f"--sweep expects KEY=RANGE, got {item!r}")
        if key not in SWEEP_KEYS:
            raise UsageError(f"--sweep: unsupported key {key!r} (supported: {', '.join(SWEEP_KEYS)})")
        try:
            vals = parse_range(val)
        except (ValueError, TypeError) as exc:
            raise UsageError(f"--sweep {item!r}: {exc}") from exc
        if min(vals) < 1:
            raise UsageError(f"--sweep {item!r}: values must be >= 1")
        out[key] = vals
    return out


def _tolerances() -> dict:
    return {
        "annulus_quad": spatial.ANNULUS_TOL,
        "spatial_quad": spatial.QUAD_TOL,
        "detection_radius": spatial.DETECTION_RADIUS_TOL,
        "water_filling_bisection": csma.BISECTION_TOL,
        "projected_gradient": csma.PG_GRAD_TOL,
        "barrier_gap": csma.BARRIER_GAP,
        "newton": csma.NEWTON_TOL,
    }


def execute(args) -> Run:
    overrides = {"simulation": {"seed": args.seed, "slots": args.slots, "shards": args.shards}}
    cfg = None
    if args.command == "figures":
        if args.config:
            raise UsageError("figures recipes take their parameters from the recipe, not --config")
    else:
        if not args.config:
            raise UsageError(f"{args.command}: --config is required")
        cfg = load_config(args.config, overrides)
    args.sweep_map = _parse_sweeps(args.sweep)
    args.seed_value = cfg.seed if cfg is not None else (args.seed or 0)
    run = Run(args, cfg)
    spatial.reset_clamp_events()
    if args.command == "figures":
        RECIPES[args.recipe](run)
    else:
        COMMANDS[args.command](run)
    return run


def manifest_for(run: Run, argv, elapsed: float) -> dict:
    args = run.args
    man = {
        "argv": list(argv),
        "command": args.command,
        "seed": args.seed_value,
        "choices": run.choices,
        "thetas": run.thetas,
        "tolerances": _tolerances(),
        "clamp_events": dict(spatial.CLAMP_EVENTS),
        "solver": run.solver,
        "rows": len(run.rows),
        "elapsed_s": elapsed,
    }
    if args.command == "figures":
        man["recipe"] = args.recipe
        man["config_sha256"] = config_hash({"recipe": args.recipe, "choices": run.choices,
                                            "thetas": run.thetas})
    else:
        man["config"] = run.cfg.echo()
        man["config_sha256"] = run.cfg.digest()
        if run.cfg.generated:
            man["thetas"]["config"] = run.cfg.generated["thetas"]
    return man


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        t0 = time.perf_counter()
        result = execute(args)
        stem = args.recipe if args.command == "figures" else args.command
        path, man_path = output_paths(args.out, args.format, stem)
        emit_results(result.rows, args.format, path)
        if man_path is not None:
            write_manifest(man_path, manifest_for(result, argv, time.perf_counter() - t0))
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except (ValidationError, NoOpportunityError, ValueError) as exc:
        print(f"cogmac: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, ArithmeticError) as exc:
        print(f"cogmac: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
