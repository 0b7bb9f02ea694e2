"""Slotted-ALOHA secondary throughput in the infinite-radius (data-link) scenario."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .channels import ChannelSet, ValidationError
from .sensing import SensingScheme

BRUTE_FORCE_CAP = 10**7


@dataclass(frozen=True)
class AlohaParams:
    m: int
    q: float

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValidationError(f"population m must be a positive integer, got {self.m}")
        if not (0.0 <= self.q <= 1.0):
            raise ValidationError(f"transmit probability q must lie in [0, 1], got {self.q}")


def _singleton_probs(cs: ChannelSet, scheme: SensingScheme) -> np.ndarray:
    if scheme.catalog.s != 1:
        raise ValidationError("ALOHA analysis requires a single-channel (s = 1) sensing scheme")
    if scheme.catalog.n != cs.n:
        raise ValidationError(f"scheme covers {scheme.catalog.n} channels, channel set has {cs.n}")
    p = np.zeros(cs.n)
    for (j,), pj in zip(scheme.catalog.groups, scheme.probs):
        p[j] = pj
    return p


def binomial_weights(m: int, q: float) -> np.ndarray:
    """P(i of m users active), i = 0..m."""
    if q == 0.0 or q == 1.0:
        w = np.zeros(m + 1)
        w[0 if q == 0.0 else m] = 1.0
        return w
    return binom.pmf(np.arange(m + 1), m, q)


def single_user_throughput(cs: ChannelSet, scheme: SensingScheme, k: int) -> float:
    """Throughput of one active user when ``k`` users are active in total."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    p = _singleton_probs(cs, scheme)
    return float(np.sum(cs.idle_rates * p * (1.0 - p) ** (k - 1)))


def network_throughput(cs: ChannelSet, scheme: SensingScheme, params: AlohaParams) -> float:
    """Expected secondary throughput, evaluated as the binomial mixture over active users."""
    p = _singleton_probs(cs, scheme)
    m = params.m
    weights = binomial_weights(m, params.q)[1:]
    i = np.arange(1, m + 1)
    per_user = ((1.0 - p)[None, :] ** (i - 1)[:, None]) @ (cs.idle_rates * p)
    return float(np.sum(weights * i * per_user))


def closed_form_throughput(cs: ChannelSet, scheme: SensingScheme, params: AlohaParams,
                           variant: str = "corrected") -> float:
    """Single-line closed forms of the mixture, for side-by-side comparison.

    ``"corrected"`` is ``qM sum_j w_j P_j (1 - qP_j)^(M-1)``, which equals the
    mixture for every q and N.  ``"printed"`` carries an extra ``(1 - P_j)``
    factor and does not.
    """
    p = _singleton_probs(cs, scheme)
    m, q = params.m, params.q
    terms = cs.idle_rates * p * (1.0 - q * p) ** (m - 1)
    if variant == "printed":
        terms = terms * (1.0 - p)
    elif variant != "corrected":
        raise ValueError(f"unknown variant {variant!r}")
    return float(q * m * terms.sum())


def brute_force_throughput(cs: ChannelSet, scheme: SensingScheme, params: AlohaParams,
                           cap: int = BRUTE_FORCE_CAP) -> float:
    """Exact expectation by enumerating every activity pattern and channel choice."""
    p = _singleton_probs(cs, scheme)
    n, m, q = cs.n, params.m, params.q
    if n**m * 2**m > cap:
        raise ValidationError(f"enumeration size {n**m * 2**m} exceeds cap {cap}")
    w = cs.idle_rates
    total = 0.0
    for active in itertools.product((False, True), repeat=m):
        n_active = sum(active)
        pa = q**n_active * (1.0 - q) ** (m - n_active)
        if pa == 0.0 or n_active == 0:
            continue
        for picks in itertools.product(range(n), repeat=n_active):
            pc = math.prod(p[j] for j in picks)
            if pc == 0.0:
                continue
            counts = [0] * n
            for j in picks:
                counts[j] += 1
            reward = sum(w[j] for j in picks if counts[j] == 1)
            total += pa * pc * reward
    return total


def symmetric_optimal_m(n: int, q: float) -> float:
    """Real stationary point -1/ln(1 - q/n) of the symmetric-channel throughput."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if not (0.0 < q < 1.0) or q >= n:
        raise ValidationError(f"need 0 < q < 1 and q < n, got q={q}, n={n}")
    return -1.0 / math.log1p(-q / n)


def best_integer_m(m_star: float, throughput) -> int:
    """Pick the better of floor/ceil of a real stationary point."""
    lo = max(1, math.floor(m_star))
    hi = max(1, math.ceil(m_star))
    return lo if throughput(lo) >= throughput(hi) else hi


def throughput_sweep(cs: ChannelSet, scheme: SensingScheme, q: float, m_range,
                     normalize: bool = False) -> list[tuple[int, float]]:
    scale = 1.0
    if normalize:
        c_t = float(cs.idle_rates.sum())
        scale = 1.0 / c_t if c_t > 0 else 0.0
    out = []
    for m in m_range:
        if m < 1:
            continue
        out.append((int(m), network_throughput(cs, scheme, AlohaParams(int(m), q)) * scale))
    return out
