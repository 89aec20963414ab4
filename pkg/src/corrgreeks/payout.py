"""n-th-to-default basket default swap payout.

The protection leg pays (1 - R) discounted at the n-th default time if it
falls before maturity; the premium leg pays the scheduled spreads at every
payment date strictly before that default (accrued premium is ignored).
Discounting is flat and continuously compounded, independent of defaults.

For pathwise differentiation the two indicator functions are smoothed with
a standard normal CDF of width ``smoothing_width``; the smoothed payout is
C^1 in the default times away from order-statistic ties, and its derivative
is concentrated on the single name realizing the n-th default (the sort
permutation is locally constant almost everywhere).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .stochastics import normal_cdf, normal_pdf

# Default smoothing width as a fraction of the payment spacing.
SMOOTHING_SPACING_FRACTION = 0.05


@dataclass(frozen=True)
class BasketDefaultSwap:
    """Contract terms of an n-th-to-default basket default swap.

    Times are in years, rates per year (continuously compounded), spreads
    and recoveries per unit notional.
    """

    seniority: int
    maturity: float
    payment_times: np.ndarray
    spreads: np.ndarray
    recoveries: np.ndarray
    discount_rate: float
    smoothing_width: float | None = None

    def __post_init__(self) -> None:
        pay = np.asarray(self.payment_times, dtype=np.float64)
        if pay.ndim != 1 or pay.size == 0:
            raise ConfigError("payment_times must be a non-empty 1-d array")
        if np.any(np.diff(pay) <= 0.0):
            raise ConfigError("payment_times must be strictly increasing")
        if pay[0] <= 0.0:
            raise ConfigError("payment_times must be positive")
        if pay[-1] > self.maturity + 1e-12:
            raise ConfigError(
                f"last payment {pay[-1]} exceeds maturity {self.maturity}"
            )
        spreads = np.broadcast_to(
            np.asarray(self.spreads, dtype=np.float64), pay.shape
        ).copy()
        recov = np.asarray(self.recoveries, dtype=np.float64)
        if recov.ndim != 1 or recov.size == 0:
            raise ConfigError("recoveries must be a non-empty 1-d array")
        if np.any((recov < 0.0) | (recov > 1.0)):
            raise ConfigError("recoveries must lie in [0, 1]")
        if not 1 <= self.seniority <= recov.size:
            raise ConfigError(
                f"seniority must be in [1, {recov.size}], got {self.seniority}"
            )
        eps = self.smoothing_width
        if eps is None:
            spacing = float(np.min(np.diff(pay))) if pay.size > 1 else float(pay[0])
            eps = SMOOTHING_SPACING_FRACTION * spacing
        if not eps > 0.0:
            raise ConfigError(f"smoothing_width must be > 0, got {eps}")
        for name, arr in (("payment_times", pay), ("spreads", spreads), ("recoveries", recov)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "smoothing_width", float(eps))

    @property
    def n_names(self) -> int:
        return int(self.recoveries.size)

    def coupon_discounts(self) -> np.ndarray:
        """Discounted spread payments s_k * D(T_k)."""
        return self.spreads * np.exp(-self.discount_rate * self.payment_times)

    def cumulative_premium(self) -> np.ndarray:
        """cum[k] = sum of discounted spreads with payment index < k."""
        return np.concatenate(([0.0], np.cumsum(self.coupon_discounts())))


def regular_schedule(maturity: float, frequency: int) -> np.ndarray:
    """Evenly spaced payment times at ``frequency`` per year up to maturity."""
    if frequency < 1:
        raise ConfigError(f"frequency must be >= 1, got {frequency}")
    n = int(round(maturity * frequency))
    if n < 1 or abs(n / frequency - maturity) > 1e-9:
        raise ConfigError(
            f"maturity {maturity} is not a whole number of periods at frequency {frequency}"
        )
    return np.arange(1, n + 1) / frequency


@dataclass(frozen=True)
class PayoutResult:
    """Smoothed payout value and its derivative vector w.r.t. the default times."""

    value: float
    x_bar: np.ndarray = field(repr=False)


def _nth_default(contract: BasketDefaultSwap, tau: np.ndarray) -> tuple[float, int]:
    tau = np.asarray(tau, dtype=np.float64)
    if tau.shape != (contract.n_names,):
        raise ConfigError(
            f"tau must have shape ({contract.n_names},), got {tau.shape}"
        )
    if np.any(tau < 0.0):
        raise ConfigError("default times must be >= 0")
    order = np.argsort(tau, kind="stable")  # ties resolved to the lowest index
    k = int(order[contract.seniority - 1])
    return float(tau[k]), k


def evaluate_sharp(contract: BasketDefaultSwap, tau) -> float:
    """Discounted payout on one realization of the default times."""
    t, k = _nth_default(contract, tau)
    n_paid = int(np.searchsorted(contract.payment_times, t, side="left"))
    value = -float(contract.cumulative_premium()[n_paid])
    if t <= contract.maturity:
        value += (1.0 - contract.recoveries[k]) * math.exp(-contract.discount_rate * t)
    return value


def evaluate_smoothed(contract: BasketDefaultSwap, tau) -> PayoutResult:
    """Smoothed payout and its pathwise derivative.

    The derivative has a single nonzero entry at the name realizing the
    n-th default.
    """
    t, k = _nth_default(contract, tau)
    eps = contract.smoothing_width
    r = contract.discount_rate
    lgd = 1.0 - contract.recoveries[k]
    disc = math.exp(-r * t)
    prot_cdf = float(normal_cdf((contract.maturity - t) / eps))
    prot_pdf = float(normal_pdf((contract.maturity - t) / eps))
    coupon_disc = contract.coupon_discounts()
    args = (t - contract.payment_times) / eps
    value = lgd * disc * prot_cdf - float(coupon_disc @ normal_cdf(args))
    deriv = lgd * disc * (-r * prot_cdf - prot_pdf / eps) - float(
        coupon_disc @ normal_pdf(args)
    ) / eps
    x_bar = np.zeros(contract.n_names)
    x_bar[k] = deriv
    return PayoutResult(value, x_bar)
