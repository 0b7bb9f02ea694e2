"""Sensing action catalogs and randomized sensing schemes over them.

Channel indices are 0-based throughout the package.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from math import comb

import numpy as np

from .channels import ChannelSet, ValidationError

DEFAULT_CATALOG_CAP = 10**6


class NoOpportunityError(ValueError):
    """Every channel is always busy, so no secondary opportunity exists."""


@dataclass(frozen=True)
class GroupCatalog:
    n: int
    s: int
    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if not (1 <= self.s <= self.n):
            raise ValidationError(f"group size must satisfy 1 <= s <= n, got s={self.s}, n={self.n}")
        seen = set()
        for g in self.groups:
            if len(g) != self.s:
                raise ValidationError(f"group {g} does not have size {self.s}")
            if any(b <= a for a, b in zip(g, g[1:])):
                raise ValidationError(f"group {g} is not strictly increasing")
            if g[0] < 0 or g[-1] >= self.n:
                raise ValidationError(f"group {g} has a channel index outside 0..{self.n - 1}")
            if g in seen:
                raise ValidationError(f"duplicate group {g}")
            seen.add(g)
        if not self.groups:
            raise ValidationError("catalog must contain at least one group")

    @property
    def kappa(self) -> int:
        return len(self.groups)

    @property
    def is_full(self) -> bool:
        return self.kappa == comb(self.n, self.s)

    @cached_property
    def incidence(self) -> np.ndarray:
        """(n, kappa) 0/1 matrix; entry (i, j) is 1 iff channel i belongs to group j."""
        a = np.zeros((self.n, self.kappa))
        for j, g in enumerate(self.groups):
            a[list(g), j] = 1.0
        return a


@dataclass(frozen=True)
class SensingScheme:
    catalog: GroupCatalog
    probs: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def coverage(self) -> np.ndarray:
        """Probability that a single user senses each channel."""
        return self.catalog.incidence @ self.probs

    def pairs(self) -> list[tuple[tuple[int, ...], float]]:
        return [(g, float(p)) for g, p in zip(self.catalog.groups, self.probs)]


def enumerate_groups(n: int, s: int, cap: int = DEFAULT_CATALOG_CAP) -> GroupCatalog:
    if not (1 <= s <= n):
        raise ValidationError(f"group size must satisfy 1 <= s <= n, got s={s}, n={n}")
    size = comb(n, s)
    if size > cap:
        raise ValidationError(
            f"C({n},{s}) = {size} groups exceeds the catalog cap {cap}; "
            "build a restricted GroupCatalog explicitly instead"
        )
    return GroupCatalog(n, s, tuple(itertools.combinations(range(n), s)))


def singleton_catalog(n: int) -> GroupCatalog:
    return enumerate_groups(n, 1)


def make_scheme(catalog: GroupCatalog, probs, tol: float = 1e-9, meta=None) -> SensingScheme:
    """Validate a probability vector over ``catalog`` and renormalize it exactly."""
    p = np.asarray(probs, dtype=float).reshape(-1)
    if p.shape != (catalog.kappa,):
        raise ValidationError(f"expected {catalog.kappa} probabilities, got {p.size}")
    if not np.all(np.isfinite(p)):
        raise ValidationError("probabilities must be finite")
    bad = np.flatnonzero(p < 0)
    if bad.size:
        raise ValidationError(f"negative probability at index {bad[0]}: {p[bad[0]]}")
    total = p.sum()
    if abs(total - 1.0) > tol:
        raise ValidationError(f"probabilities sum to {total!r}, not 1")
    if abs(total - 1.0) > 8 * np.finfo(float).eps:
        p = p / total
    return SensingScheme(catalog, p, dict(meta or {}))


def _require_opportunity(cs: ChannelSet) -> np.ndarray:
    w = cs.idle_rates
    if w.sum() <= 0:
        raise NoOpportunityError("every channel is always busy (C_t = 0)")
    return w


def heuristic_single(cs: ChannelSet) -> SensingScheme:
    """Sense channel j with probability proportional to its idle rate."""
    w = _require_opportunity(cs)
    return make_scheme(singleton_catalog(cs.n), w / w.sum())


def heuristic_multi(cs: ChannelSet, cat: GroupCatalog) -> SensingScheme:
    """Group scheme: each group weighted by its summed idle rate, divided by ``s``.

    On a full catalog the raw weights sum to C(n-1, s-1)/s, which is 1 only
    for s = 1 or s = n - 1; the result is renormalized and the raw sum is kept
    in ``meta["raw_sum"]``.
    """
    if cat.n != cs.n:
        raise ValidationError(f"catalog has {cat.n} channels, channel set has {cs.n}")
    w = _require_opportunity(cs)
    raw = (cat.incidence.T @ w) / (cat.s * w.sum())
    raw_sum = float(raw.sum())
    return make_scheme(cat, raw / raw_sum, tol=np.inf,
                       meta={"raw_sum": raw_sum, "raw_sum_deviation": raw_sum - 1.0})


def channel_coverage(scheme: SensingScheme, i: int) -> float:
    if not (0 <= i < scheme.catalog.n):
        raise IndexError(f"channel index {i} out of range 0..{scheme.catalog.n - 1}")
    return float(sum(p for g, p in zip(scheme.catalog.groups, scheme.probs) if i in g))


def scheme_to_records(scheme: SensingScheme) -> list[dict]:
    return [{"group": list(g), "probability": p} for g, p in scheme.pairs()]


def scheme_from_records(records, n: int) -> SensingScheme:
    groups = tuple(tuple(int(c) for c in r["group"]) for r in records)
    if not groups:
        raise ValidationError("empty scheme")
    cat = GroupCatalog(n, len(groups[0]), groups)
    return make_scheme(cat, [float(r["probability"]) for r in records])
