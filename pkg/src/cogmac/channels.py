"""Licensed spectrum model: channel widths, busy probabilities and derived rates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ValidationError(ValueError):
    """Raised when user supplied parameters are outside their valid range."""


@dataclass(frozen=True)
class ChannelSet:
    widths: tuple[float, ...]
    thetas: tuple[float, ...]
    rate_factor: float = 1.0

    def __post_init__(self):
        if len(self.widths) == 0:
            raise ValidationError("channel set must contain at least one channel")
        if len(self.widths) != len(self.thetas):
            raise ValidationError(
                f"dimension mismatch: {len(self.widths)} widths vs {len(self.thetas)} thetas"
            )
        for j, w in enumerate(self.widths):
            if not np.isfinite(w) or w <= 0:
                raise ValidationError(f"width at index {j} must be positive, got {w}")
        for j, t in enumerate(self.thetas):
            if not (0.0 <= t <= 1.0):
                raise ValidationError(f"theta at index {j} must lie in [0, 1], got {t}")
        if not np.isfinite(self.rate_factor) or self.rate_factor <= 0:
            raise ValidationError(f"rate_factor must be positive, got {self.rate_factor}")

    @property
    def n(self) -> int:
        return len(self.widths)

    @property
    def rates(self) -> np.ndarray:
        return self.rate_factor * np.asarray(self.widths, dtype=float)

    @property
    def theta(self) -> np.ndarray:
        return np.asarray(self.thetas, dtype=float)

    @property
    def idle_rates(self) -> np.ndarray:
        """Expected rate left over by the primary network, (1 - theta_j) * C_j."""
        return (1.0 - self.theta) * self.rates

    def permuted(self, order) -> ChannelSet:
        order = list(order)
        return ChannelSet(
            tuple(self.widths[k] for k in order),
            tuple(self.thetas[k] for k in order),
            self.rate_factor,
        )


@dataclass(frozen=True)
class CapacitySummary:
    rates: np.ndarray
    c_primary: float
    c_max: float
    rho: float
    normalized: np.ndarray
    c_residual: float


def new_channel_set(widths, thetas, rate_factor: float = 1.0) -> ChannelSet:
    return ChannelSet(
        tuple(float(w) for w in widths),
        tuple(float(t) for t in thetas),
        float(rate_factor),
    )


def summarize(cs: ChannelSet) -> CapacitySummary:
    rates = cs.rates
    c_max = float(rates.sum())
    c_primary = float(np.dot(cs.theta, rates))
    c_residual = float(cs.idle_rates.sum())
    normalized = rates / c_max
    rho = min(max(c_primary / c_max, 0.0), 1.0)
    return CapacitySummary(rates, c_primary, c_max, rho, normalized, c_residual)


def channels_for_rho(n: int, rho: float, rng: np.random.Generator, widths=None,
                     rate_factor: float = 1.0) -> ChannelSet:
    """Random channel set whose utilization efficiency equals ``rho`` exactly.

    Busy probabilities are drawn i.i.d. uniform on [0, 1] and then affinely
    shrunk towards ``rho`` around their capacity-weighted mean, using the
    largest spread that keeps every value inside [0, 1].
    """
    if not (0.0 <= rho <= 1.0):
        raise ValidationError(f"rho must lie in [0, 1], got {rho}")
    widths = np.ones(n) if widths is None else np.asarray(widths, dtype=float)
    if widths.shape != (n,):
        raise ValidationError("widths must have one entry per channel")
    weights = widths / widths.sum()
    raw = rng.uniform(0.0, 1.0, size=n)
    centered = raw - np.dot(weights, raw)
    scale = 1.0
    if centered.max() > 0:
        scale = min(scale, (1.0 - rho) / centered.max())
    if centered.min() < 0:
        scale = min(scale, rho / -centered.min())
    thetas = np.clip(rho + scale * centered, 0.0, 1.0)
    return new_channel_set(widths, thetas, rate_factor)
