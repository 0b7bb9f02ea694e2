"""Discrete-slot Monte Carlo oracles for the analytic models.

Every run is split into shards.  Shard ``k`` of a run with master seed ``s``
draws from its own Philox stream keyed by ``SeedSequence(s, spawn_key=(k,))``
and consumes its slots in fixed-size blocks, so a result depends only on
(scenario, slots, shards, seed) and not on how shards are scheduled.
Per-shard moments are pooled in shard order with the parallel-variance
(Chan et al.) update.  Standard errors are sample standard deviations of the
per-slot values over sqrt(slots).
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .aloha import AlohaParams, _singleton_probs
from .channels import ChannelSet, ValidationError
from .csma import DetectorModel
from .sensing import SensingScheme
from .spatial import SpatialConfig

BLOCK_CELLS = 2_000_000  # upper bound on random draws held in memory per block


@dataclass(frozen=True)
class SimEstimate:
    mean: float
    std_error: float
    samples: int
    seed: int
    label: str

    def __post_init__(self):
        if self.samples < 1:
            raise ValidationError("an estimate needs at least one sample")
        if not self.std_error >= 0:
            raise ValidationError(f"std_error must be nonnegative, got {self.std_error}")

    def within(self, value: float, k: float = 3.0) -> bool:
        """|mean - value| <= k standard errors (exact match required when the error is 0)."""
        return abs(self.mean - value) <= k * self.std_error + 1e-12 * max(1.0, abs(value))


@dataclass(frozen=True)
class SpatialScenario:
    cfg: SpatialConfig
    cs: ChannelSet
    scheme: SensingScheme
    params: AlohaParams

    def __post_init__(self):
        _singleton_probs(self.cs, self.scheme)

    @property
    def m(self) -> int:
        return self.params.m


# --- moment pooling ----------------------------------------------------------


class Moments:
    """Running count, mean and sum of squared deviations of per-slot values (any shape)."""

    def __init__(self, shape=()):
        self.n = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    def add_block(self, x):
        x = np.asarray(x, dtype=float)
        b = Moments(x.shape[1:])
        b.n = x.shape[0]
        if b.n:
            b.mean = x.mean(axis=0)
            b.m2 = ((x - b.mean) ** 2).sum(axis=0)
            self.merge(b)

    def merge(self, other: Moments):
        if other.n == 0:
            return
        if self.n == 0:
            self.n, self.mean, self.m2 = other.n, other.mean.copy(), other.m2.copy()
            return
        n = self.n + other.n
        delta = other.mean - self.mean
        self.mean = self.mean + delta * (other.n / n)
        self.m2 = self.m2 + other.m2 + delta**2 * (self.n * other.n / n)
        self.n = n

    def std_error(self):
        if self.n < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(np.maximum(self.m2, 0.0) / (self.n - 1) / self.n)


def pool(parts) -> Moments:
    """Pool shard moments in the given (fixed) order."""
    parts = list(parts)
    out = Moments(parts[0].mean.shape if parts else ())
    for p in parts:
        out.merge(p)
    return out


def shard_rng(seed: int, shard: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(shard),))))


def shard_sizes(slots: int, shards: int) -> list[int]:
    if slots < 1:
        raise ValidationError(f"slots must be >= 1, got {slots}")
    if shards < 1:
        raise ValidationError(f"shards must be >= 1, got {shards}")
    shards = min(shards, slots)
    base, extra = divmod(slots, shards)
    return [base + (k < extra) for k in range(shards)]


def _run_shards(worker, args, slots, shards, seed, workers):
    sizes = shard_sizes(slots, shards)
    jobs = [(args, size, seed, k) for k, size in enumerate(sizes)]
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(worker, jobs))
    else:
        results = [worker(j) for j in jobs]
    return results


def _estimate(mom: Moments, seed: int, label: str, index=None) -> SimEstimate:
    mean, se = mom.mean, mom.std_error()
    if index is not None:
        mean, se = mean[index], se[index]
    return SimEstimate(float(mean), float(se), int(mom.n), int(seed), label)


def slots_for_relative_error(pilot: SimEstimate, target: float, minimum: int = 1000) -> int:
    """Slots needed for std_error / |mean| <= ``target``, extrapolated from a pilot run."""
    if target <= 0:
        raise ValidationError("target relative error must be positive")
    if pilot.mean == 0.0:
        return max(minimum, pilot.samples)
    rel = pilot.std_error / abs(pilot.mean)
    return max(minimum, math.ceil(pilot.samples * (rel / target) ** 2))


def _blocks(total: int, per_slot_cells: int):
    size = max(1, BLOCK_CELLS // max(per_slot_cells, 1))
    done = 0
    while done < total:
        b = min(size, total - done)
        yield b
        done += b


def _channel_counts(choice, mask, n):
    """Per-slot number of masked users on each channel; choice/mask have shape (B, M)."""
    b = choice.shape[0]
    idx = (choice + n * np.arange(b)[:, None])[mask]
    return np.bincount(idx, minlength=b * n).reshape(b, n)


# --- data-link slotted ALOHA -------------------------------------------------


def _aloha_shard(job):
    (rates, theta, probs, m, q), slots, seed, shard = job
    rng = shard_rng(seed, shard)
    n = rates.size
    mom = Moments()
    for b in _blocks(slots, m + n):
        busy = rng.random((b, n)) < theta
        active = rng.random((b, m)) < q
        choice = rng.choice(n, size=(b, m), p=probs)
        counts = _channel_counts(choice, active, n)
        mom.add_block(((counts == 1) & ~busy) @ rates)
    return mom


def simulate_aloha_datalink(cs: ChannelSet, scheme: SensingScheme, p: AlohaParams, slots: int,
                            seed: int, shards: int = 1, workers: int = 0) -> SimEstimate:
    """Per slot: busy states ~ Bernoulli(theta), users active w.p. q pick a channel from the
    scheme; a user earns C_j iff channel j is idle and nobody else picked it."""
    probs = _singleton_probs(cs, scheme)
    args = (cs.rates, cs.theta, probs / probs.sum(), p.m, p.q)
    parts = _run_shards(_aloha_shard, args, slots, shards, seed, workers)
    return _estimate(pool(parts), seed, "aloha_throughput")


# --- CSMA/CA -----------------------------------------------------------------


@dataclass(frozen=True)
class CsmaResult:
    throughput: SimEstimate
    utilized_fraction: SimEstimate
    collision: tuple[SimEstimate, ...]


def _csma_shard(job):
    (rates, theta, incidence, probs, m, det), slots, seed, shard = job
    rng = shard_rng(seed, shard)
    n, kappa = incidence.shape
    members = incidence.T.astype(bool)  # (kappa, n)
    c_t = float(np.dot(1.0 - theta, rates))
    mom = Moments((2 + n,))
    for b in _blocks(slots, m * n + n):
        busy = rng.random((b, n)) < theta
        group = rng.choice(kappa, size=(b, m), p=probs)
        sensed = members[group]  # (b, m, n)
        u = rng.random((b, m, n))
        p_idle = np.where(busy, det.alpha, det.beta)[:, None, :]
        access = sensed & (u < p_idle)
        if det.f0 < 1.0:
            access &= rng.random((b, m, n)) < det.f0
        # one uniform winner among the accessors seizes the channel and earns C_j iff it is
        # idle; which user wins does not change any channel-level metric, so it is not drawn
        seized = access.any(axis=1)
        thr = (seized & ~busy) @ rates
        coll = (busy & seized).astype(float)
        frac = thr / c_t if c_t > 0 else np.zeros(b)
        mom.add_block(np.column_stack([thr, frac, coll]))
    return mom


def simulate_csma(cs: ChannelSet, scheme: SensingScheme, m: int, det: DetectorModel, slots: int,
                  seed: int, shards: int = 1, workers: int = 0) -> CsmaResult:
    """Slotted CSMA/CA contention with an imperfect detector.

    Users draw a group from the scheme and sense its channels; an idle channel
    reads idle w.p. beta, a busy one w.p. alpha.  A user accesses each
    channel read idle w.p. f0; among the accessors of a channel one uniform
    winner seizes it.  A busy channel with at least one accessor counts one
    collision for that channel in that slot.
    """
    if m < 1:
        raise ValidationError(f"m must be >= 1, got {m}")
    if scheme.catalog.n != cs.n:
        raise ValidationError(f"scheme covers {scheme.catalog.n} channels, channel set has {cs.n}")
    probs = scheme.probs / scheme.probs.sum()
    args = (cs.rates, cs.theta, scheme.catalog.incidence, probs, int(m), det)
    mom = pool(_run_shards(_csma_shard, args, slots, shards, seed, workers))
    return CsmaResult(
        _estimate(mom, seed, "csma_throughput", 0),
        _estimate(mom, seed, "csma_utilized_fraction", 1),
        tuple(_estimate(mom, seed, f"collision_rate[{j}]", 2 + j) for j in range(cs.n)),
    )


# --- spatial cell on a torus -------------------------------------------------


@dataclass(frozen=True)
class SpatialResult:
    throughput: SimEstimate
    collision_rate: tuple[SimEstimate, ...]   # P(at least one secondary-caused collision on j) per slot
    collision_events: tuple[SimEstimate, ...]  # mean colliding transmissions on j per slot
    collision_count: int
    p_cc: tuple[SimEstimate, ...]             # ratio estimator of P(no tx within r_d | rx within r_i_s)
    void: tuple[SimEstimate, ...]             # P(no primary tx of channel j within r_d)
    success: SimEstimate                      # unconditional success rate of transmissions
    success_by_k: dict                        # K -> SimEstimate, K = active users that picked the channel


def _torus_dist(a, b, side):
    d = np.abs(a[:, None, :] - b[None, :, :])
    d = np.minimum(d, side - d)
    return np.hypot(d[..., 0], d[..., 1])


def _spatial_shard(job):
    (cfg, rates, theta, probs, m, q), slots, seed, shard = job
    rng = shard_rng(seed, shard)
    n = rates.size
    side = math.sqrt(cfg.cell_area)
    mean_counts = cfg.lam * theta * cfg.cell_area
    k_max = m
    # per slot columns: throughput, coll_any[n], coll_events[n], void[n], pcc_num[n], pcc_den[n],
    # n_tx, n_success, success_by_k numerators[k_max], denominators[k_max]
    width = 1 + 5 * n + 2 + 2 * k_max
    rows = np.zeros((slots, width))
    coll_total = 0
    for t in range(slots):
        counts = rng.poisson(mean_counts)
        lab = np.repeat(np.arange(n), counts)
        n_p = lab.size
        p_tx = rng.random((n_p, 2)) * side
        r = cfg.r_r_p * np.sqrt(rng.random(n_p))
        ang = rng.random(n_p) * 2.0 * math.pi
        p_rx = (p_tx + np.column_stack([r * np.cos(ang), r * np.sin(ang)])) % side
        s_tx = rng.random((m, 2)) * side
        ang = rng.random(m) * 2.0 * math.pi
        s_rx = (s_tx + cfg.r_r_s * np.column_stack([np.cos(ang), np.sin(ang)])) % side
        choice = rng.choice(n, size=m, p=probs)
        active = rng.random(m) < q

        onehot = np.zeros((n_p, n))
        onehot[np.arange(n_p), lab] = 1.0
        d_tt = _torus_dist(s_tx, p_tx, side)
        d_tr = _torus_dist(s_tx, p_rx, side)
        d_rt = _torus_dist(s_rx, p_tx, side)
        void = (d_tt <= cfg.r_d) @ onehot == 0          # (m, n)
        rx_near = (d_tr < cfg.r_i_s) @ onehot > 0       # (m, n)
        own = np.arange(m), choice
        opp = void[own]
        tx = active & opp
        coll = tx & rx_near[own]
        # success: no primary tx within r_i_p and no other secondary tx within r_i_s of the receiver
        prim_ok = ((d_rt < cfg.r_i_p) @ onehot == 0)[own]
        d_ss = _torus_dist(s_rx, s_tx, side)
        same = (choice[:, None] == choice[None, :]) & tx[None, :]
        np.fill_diagonal(same, False)
        sec_ok = ~np.any(same & (d_ss < cfg.r_i_s), axis=1)
        succ = tx & prim_ok & sec_ok
        k_of = np.bincount(choice[active], minlength=n)[choice]

        row = rows[t]
        row[0] = np.dot(succ, rates[choice])
        ce = np.bincount(choice[coll], minlength=n)
        row[1:1 + n] = ce > 0
        row[1 + n:1 + 2 * n] = ce
        row[1 + 2 * n:1 + 3 * n] = void.mean(axis=0)
        row[1 + 3 * n:1 + 4 * n] = (rx_near & void).sum(axis=0)
        row[1 + 4 * n:1 + 5 * n] = rx_near.sum(axis=0)
        row[1 + 5 * n] = tx.sum()
        row[2 + 5 * n] = succ.sum()
        base = 3 + 5 * n
        row[base:base + k_max] = np.bincount(k_of[tx] - 1, weights=succ[tx], minlength=k_max)[:k_max]
        row[base + k_max:base + 2 * k_max] = np.bincount(k_of[tx] - 1, minlength=k_max)[:k_max]
        coll_total += int(coll.sum())
    mom = Moments((width,))
    mom.add_block(rows)
    sums = rows.sum(axis=0)
    cross = {
        "xx": (rows**2).sum(axis=0),
    }
    # second moments needed for ratio estimators
    num = rows[:, 1 + 3 * n:1 + 4 * n]
    den = rows[:, 1 + 4 * n:1 + 5 * n]
    cross["xy_pcc"] = (num * den).sum(axis=0)
    sn = rows[:, 2 + 5 * n]
    st = rows[:, 1 + 5 * n]
    cross["xy_succ"] = float((sn * st).sum())
    kn = rows[:, base_k(n):base_k(n) + k_max]
    kd = rows[:, base_k(n) + k_max:base_k(n) + 2 * k_max]
    cross["xy_k"] = (kn * kd).sum(axis=0)
    return mom, sums, cross, coll_total, slots


def base_k(n):
    return 3 + 5 * n


def _ratio(sum_x, sum_y, sum_xx, sum_yy, sum_xy, n, seed, label):
    """Ratio estimator sum x / sum y over slots with a delta-method standard error."""
    if sum_y <= 0:
        return SimEstimate(float("nan"), 0.0, max(n, 1), seed, label)
    r = sum_x / sum_y
    ybar = sum_y / n
    # sample variance of z_t = x_t - r y_t
    szz = sum_xx - 2.0 * r * sum_xy + r * r * sum_yy
    var = max(szz / max(n - 1, 1), 0.0)
    return SimEstimate(float(r), float(math.sqrt(var / n) / ybar), n, seed, label)


def simulate_spatial(sc: SpatialScenario, slots: int, seed: int, shards: int = 1,
                     workers: int = 0) -> SpatialResult:
    """Poisson primaries and uniform secondaries on a square torus of area |Omega|.

    Per slot and channel j the primary transmitters form a Poisson process of
    intensity lam theta_j, each with a receiver uniform in its r_r_p disc.
    Each of the M secondaries picks a channel from the scheme, is active
    w.p. q and transmits iff no primary transmitter of its channel lies within
    r_d (distance <= r_d).  A transmission collides iff a primary receiver of
    the channel lies within r_i_s of the transmitter, and succeeds iff no
    primary transmitter lies within r_i_p and no other secondary transmitter
    on the channel lies within r_i_s of its receiver.
    """
    cfg, cs = sc.cfg, sc.cs
    side = math.sqrt(cfg.cell_area)
    biggest = max(cfg.r_d, cfg.r_i_s, cfg.r_i_p, cfg.r_r_p, cfg.r_r_s)
    if biggest > side / 2.0:
        raise ValidationError(f"radius {biggest} exceeds half the torus side {side / 2.0}; "
                              "distances would wrap ambiguously")
    probs = _singleton_probs(cs, sc.scheme)
    args = (cfg, cs.rates, cs.theta, probs / probs.sum(), sc.params.m, sc.params.q)
    parts = _run_shards(_spatial_shard, args, slots, shards, seed, workers)
    mom = pool(p[0] for p in parts)
    sums = sum(p[1] for p in parts)
    xx = sum(p[2]["xx"] for p in parts)
    xy_pcc = sum(p[2]["xy_pcc"] for p in parts)
    xy_succ = sum(p[2]["xy_succ"] for p in parts)
    xy_k = sum(p[2]["xy_k"] for p in parts)
    coll_total = sum(p[3] for p in parts)
    total = mom.n
    n = cs.n
    k_max = sc.params.m
    kb = base_k(n)

    p_cc = tuple(_ratio(sums[1 + 3 * n + j], sums[1 + 4 * n + j], xx[1 + 3 * n + j],
                        xx[1 + 4 * n + j], xy_pcc[j], total, seed, f"p_cc[{j}]") for j in range(n))
    success = _ratio(sums[2 + 5 * n], sums[1 + 5 * n], xx[2 + 5 * n], xx[1 + 5 * n], xy_succ,
                     total, seed, "success_rate")
    by_k = {}
    for k in range(k_max):
        if sums[kb + k_max + k] > 0:
            by_k[k + 1] = _ratio(sums[kb + k], sums[kb + k_max + k], xx[kb + k],
                                 xx[kb + k_max + k], xy_k[k], total, seed, f"success[K={k + 1}]")
    return SpatialResult(
        throughput=_estimate(mom, seed, "cell_throughput", 0),
        collision_rate=tuple(_estimate(mom, seed, f"collision_rate[{j}]", 1 + j) for j in range(n)),
        collision_events=tuple(_estimate(mom, seed, f"collision_events[{j}]", 1 + n + j)
                               for j in range(n)),
        collision_count=int(coll_total),
        p_cc=p_cc,
        void=tuple(_estimate(mom, seed, f"void[{j}]", 1 + 2 * n + j) for j in range(n)),
        success=success,
        success_by_k=by_k,
    )
