"""Scenario configuration files (YAML) and their validation."""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .channels import ChannelSet, ValidationError, channels_for_rho, new_channel_set
from .csma import DetectorModel
from .spatial import SpatialConfig, spatial_config


class ConfigError(ValidationError):
    """Malformed or semantically invalid scenario file."""


SCHEME_KINDS = ("heuristic_single", "heuristic_multi", "optimal", "explicit")

DEFAULTS = {
    "channels": {"rate_factor": 1.0},
    "scheme": {"kind": "heuristic_single", "s": 1},
    "population": {"q": 1.0},
    "simulation": {"slots": 10_000, "seed": 0, "shards": 1},
}

_ALLOWED = {
    "name": None,
    "channels": {"widths", "thetas", "rate_factor", "n", "rho"},
    "scheme": {"kind", "s", "probs", "groups"},
    "population": {"m", "m_range", "q"},
    "spatial": {"lam", "r_r_p", "r_r_s", "r_i_p", "r_i_s", "radius", "r_d", "cell_area", "gamma",
                "xi"},
    "detector": {"alpha", "beta", "f0", "f0_policy", "xi", "objective", "collision"},
    "simulation": {"slots", "seed", "shards"},
}


@dataclass
class ScenarioConfig:
    raw: dict
    channels: ChannelSet
    scheme_kind: str
    s: int
    explicit: list | None
    m_values: list[int]
    q: float
    spatial: SpatialConfig | None
    r_d_fixed: bool
    detector: DetectorModel | None
    detector_opts: dict = field(default_factory=dict)
    slots: int = 10_000
    seed: int = 0
    shards: int = 1
    generated: dict = field(default_factory=dict)

    def echo(self) -> dict:
        """Effective configuration with defaults applied (JSON-serializable)."""
        out = copy.deepcopy(self.raw)
        out.setdefault("channels", {})
        out["channels"]["widths"] = list(self.channels.widths)
        out["channels"]["thetas"] = list(self.channels.thetas)
        out["channels"]["rate_factor"] = self.channels.rate_factor
        return out

    def digest(self) -> str:
        return config_hash(self.echo())


def config_hash(obj) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def parse_range(text) -> list[int]:
    """'1..400', '1..400:5', '2,4,8' or a list of ints."""
    if isinstance(text, (list, tuple)):
        vals = [int(v) for v in text]
    elif isinstance(text, int):
        vals = [text]
    else:
        text = str(text).strip()
        if ".." in text:
            body, _, step = text.partition(":")
            lo, hi = body.split("..")
            vals = list(range(int(lo), int(hi) + 1, int(step) if step else 1))
        else:
            vals = [int(v) for v in text.split(",") if v.strip()]
    if not vals:
        raise ConfigError(f"empty range {text!r}")
    return vals


def _number(block, key, where, lo=-math.inf, hi=math.inf, integer=False):
    v = block[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{where}.{key}: expected an integer, got {v!r}")
    if not (lo <= v <= hi):
        raise ConfigError(f"{where}.{key}: {v} outside [{lo}, {hi}]")
    return int(v) if integer else float(v)


def _wrap(where):
    """Re-raise a component ValidationError with the config path in front."""
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, et, ev, tb):
            if et is not None and issubclass(et, ValidationError) and not issubclass(et, ConfigError):
                raise ConfigError(f"{where}: {ev}") from ev
            return False

    return _Ctx()


def apply_overrides(raw: dict, overrides: dict | None) -> dict:
    """Merge {section: {field: value}} into a raw config; None values are ignored."""
    raw = copy.deepcopy(raw)
    for sec, vals in (overrides or {}).items():
        for k, v in vals.items():
            if v is not None:
                if not isinstance(raw.get(sec, {}), dict):
                    raise ConfigError(f"{sec}: expected a mapping")
                raw.setdefault(sec, {})[k] = v
    return raw


def load_config(path, overrides: dict | None = None) -> ScenarioConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    return parse_config(text, source=str(path), overrides=overrides)


def parse_config(text: str, source: str = "<string>", overrides: dict | None = None) -> ScenarioConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ConfigError(f"{where}: parse error: {exc.problem}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: parse error: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    return build_config(apply_overrides(raw, overrides))


def build_config(raw: dict) -> ScenarioConfig:
    raw = copy.deepcopy(raw)
    for key, val in raw.items():
        if key not in _ALLOWED:
            raise ConfigError(f"unknown section {key!r}")
        if _ALLOWED[key] is None:
            continue
        if not isinstance(val, dict):
            raise ConfigError(f"{key}: expected a mapping")
        extra = set(val) - _ALLOWED[key]
        if extra:
            raise ConfigError(f"{key}.{sorted(extra)[0]}: unknown field")
    if "channels" not in raw:
        raise ConfigError("channels: section is required")
    for sec, defs in DEFAULTS.items():
        raw.setdefault(sec, {})
        for k, v in defs.items():
            raw[sec].setdefault(k, v)

    sim = raw["simulation"]
    slots = _number(sim, "slots", "simulation", 1, integer=True)
    seed = _number(sim, "seed", "simulation", 0, 2**64 - 1, integer=True)
    shards = _number(sim, "shards", "simulation", 1, integer=True)

    ch = raw["channels"]
    generated = {}
    rate = _number(ch, "rate_factor", "channels", 0.0)
    if rate <= 0:
        raise ConfigError("channels.rate_factor: must be positive")
    if "thetas" in ch:
        if "rho" in ch or "n" in ch:
            raise ConfigError("channels: give either thetas or (n, rho), not both")
        thetas = ch["thetas"]
        if not isinstance(thetas, list) or not thetas:
            raise ConfigError("channels.thetas: expected a non-empty list")
        widths = ch.get("widths", [1.0] * len(thetas))
        if not isinstance(widths, list):
            raise ConfigError("channels.widths: expected a list")
        with _wrap("channels"):
            cs = new_channel_set(widths, thetas, rate)
    elif "rho" in ch and "n" in ch:
        n = _number(ch, "n", "channels", 1, integer=True)
        rho = _number(ch, "rho", "channels", 0.0, 1.0)
        widths = ch.get("widths")
        with _wrap("channels"):
            cs = channels_for_rho(n, rho, np.random.default_rng(seed), widths, rate)
        generated["thetas"] = list(cs.thetas)
    else:
        raise ConfigError("channels: need thetas (and optional widths) or both n and rho")

    sc = raw["scheme"]
    kind = sc["kind"]
    if kind not in SCHEME_KINDS:
        raise ConfigError(f"scheme.kind: must be one of {', '.join(SCHEME_KINDS)}, got {kind!r}")
    s = _number(sc, "s", "scheme", 1, cs.n, integer=True)
    explicit = None
    if kind == "explicit":
        if "probs" not in sc:
            raise ConfigError("scheme.probs: required for an explicit scheme")
        explicit = sc["probs"]
        if not isinstance(explicit, list):
            raise ConfigError("scheme.probs: expected a list")
        if "groups" in sc:
            explicit = [{"group": g, "probability": p} for g, p in zip(sc["groups"], sc["probs"])]
            if len(sc["groups"]) != len(sc["probs"]):
                raise ConfigError("scheme.groups: length differs from scheme.probs")
    elif "probs" in sc or "groups" in sc:
        raise ConfigError(f"scheme.probs: only allowed with kind 'explicit' (got {kind!r})")
    if kind == "heuristic_single" and s != 1:
        raise ConfigError("scheme.s: heuristic_single requires s = 1")

    pop = raw["population"]
    q = _number(pop, "q", "population", 0.0, 1.0)
    if "m" in pop and "m_range" in pop:
        raise ConfigError("population: give m or m_range, not both")
    if "m_range" in pop:
        try:
            m_values = parse_range(pop["m_range"])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"population.m_range: {exc}") from exc
    elif "m" in pop:
        m_values = [_number(pop, "m", "population", 1, integer=True)]
    else:
        m_values = [1]
    if min(m_values) < 1:
        raise ConfigError("population.m_range: values must be >= 1")

    spatial = None
    r_d_fixed = False
    if "spatial" in raw:
        sp = raw["spatial"]
        if "radius" in sp:
            for k in ("r_r_p", "r_r_s", "r_i_p", "r_i_s"):
                sp.setdefault(k, sp["radius"])
        for k in ("lam", "r_r_p", "r_r_s", "r_i_p", "r_i_s"):
            if k not in sp:
                raise ConfigError(f"spatial.{k}: required")
            _number(sp, k, "spatial", 0.0)
        sp.setdefault("xi", 0.0)
        _number(sp, "xi", "spatial", 0.0, 1.0)
        r_d_fixed = "r_d" in sp
        for k in ("r_d", "cell_area", "gamma"):
            if k in sp:
                _number(sp, k, "spatial", 0.0)
        with _wrap("spatial"):
            spatial = spatial_config(sp["lam"], sp["r_r_p"], sp["r_r_s"], sp["r_i_p"], sp["r_i_s"],
                                     r_d=sp.get("r_d", 0.0), cell_area=sp.get("cell_area"),
                                     gamma=sp.get("gamma"), xi=sp["xi"])

    detector = None
    opts = {}
    if "detector" in raw:
        dt = raw["detector"]
        dt.setdefault("alpha", 0.0)
        dt.setdefault("beta", 1.0)
        dt.setdefault("f0", 1.0)
        dt.setdefault("f0_policy", "optimize")
        dt.setdefault("xi", 1.0)
        dt.setdefault("objective", "three_case")
        dt.setdefault("collision", "restricted")
        if dt["f0_policy"] not in ("optimize", "fixed"):
            raise ConfigError("detector.f0_policy: must be 'optimize' or 'fixed'")
        if dt["objective"] not in ("three_case", "exact"):
            raise ConfigError("detector.objective: must be 'three_case' or 'exact'")
        if dt["collision"] not in ("restricted", "any_access"):
            raise ConfigError("detector.collision: must be 'restricted' or 'any_access'")
        with _wrap("detector"):
            detector = DetectorModel(_number(dt, "alpha", "detector"), _number(dt, "beta", "detector"),
                                     _number(dt, "f0", "detector"))
        opts = {"f0_policy": dt["f0_policy"], "xi": _number(dt, "xi", "detector", 0.0, 1.0),
                "objective": dt["objective"], "collision": dt["collision"]}

    return ScenarioConfig(raw=raw, channels=cs, scheme_kind=kind, s=s, explicit=explicit,
                          m_values=m_values, q=q, spatial=spatial, r_d_fixed=r_d_fixed,
                          detector=detector, detector_opts=opts, slots=slots, seed=seed,
                          shards=shards, generated=generated)
