"""Closed-form utilities and double-spend profitability thresholds.

Discounting is anchored at round 1: a reward won in round ``i`` is paid in
round ``i + k`` and weighted by ``discount ** (i + k - 1)``.
"""

from __future__ import annotations

import math

from .params import ProtocolParams


def _geometric(ratio: float, n: float) -> float:
    """1 + ratio + ... + ratio**(n-1), for real n >= 0 and 0 < ratio < 1."""
    if n <= 0:
        return 0.0
    return -math.expm1(n * math.log(ratio)) / -math.expm1(math.log(ratio))


def stake_decay(params: ProtocolParams) -> float:
    """Payout factor exp(-gamma * dt * k) of a reward held for the full lock."""
    return math.exp(-params.gamma0 * params.delta_t * params.k)


def _block_value(params: ProtocolParams, p_v: float) -> float:
    return params.alpha * stake_decay(params) * p_v * params.lam


def per_round_utility(params: ProtocolParams, p_v: float, c_v: float | None = None,
                      t: int = 0) -> float:
    """Expected utility of one round starting at ``t``.

    discount**k * dt * (alpha(t) * exp(-gamma*dt*k) * p_v * lambda - c_v)
    """
    c = params.mining_cost if c_v is None else c_v
    gross = params.alpha_at(t) * stake_decay(params) * p_v * params.lam
    return params.discount**params.k * params.delta_t * (gross - c)


def honest_cumulative(params: ProtocolParams, p_v: float, l: int) -> float:
    """Discounted payoff of ``l`` honest rounds, sum_{i=1..l} discount**(k+i-1) * value."""
    if l < 1:
        raise ValueError("l must be >= 1")
    d = params.discount
    return d**params.k * _geometric(d, l) * _block_value(params, p_v)


def value_at_risk(params: ProtocolParams, p_v: float, l: int) -> float:
    """Expected discounted value of the ``k`` payouts slashed after an attack in round ``l``.

    An attack with prize ``eps`` pays off iff ``eps >= value_at_risk(...)``.
    """
    return value_at_risk_with_startup(params, p_v, l, 0)


def value_at_risk_with_startup(params: ProtocolParams, p_v: float, l: int,
                               r: float) -> float:
    """Forfeited value when the attacker also needs ``r`` rounds to restart.

    sum over i = l-k+1 .. l+r of discount**(k+i-1) * value. ``r`` may be
    fractional (an expected round count); the closed form interpolates.
    """
    k = params.k
    if l <= k:
        raise ValueError(f"attack round l={l} must exceed the timelock k={k}")
    if r < 0:
        raise ValueError("startup rounds must be >= 0")
    d = params.discount
    return d**l * _geometric(d, k + r) * _block_value(params, p_v)


def attack_cost_magnitude(params: ProtocolParams, r: float = 0) -> float:
    """Order-of-magnitude envelope (k + r) * alpha * discount**k * exp(-gamma*dt*k) * lambda.

    A heuristic, not a threshold; the power fraction is left out on purpose.
    """
    return ((params.k + r) * params.alpha * params.discount**params.k
            * stake_decay(params) * params.lam)


def expected_startup_rounds(d: float, q_v: float) -> float:
    """Mean rounds to collect ceil(d) successes with per-round probability ``q_v``."""
    if not 0 < q_v <= 1:
        raise ValueError("per-round success probability must lie in (0, 1]")
    return math.ceil(d) / q_v


def startup_success_rate(params: ProtocolParams, p_v: float) -> float:
    return min(1.0, p_v * params.lam * params.delta_t)


def is_attack_profitable(epsilon: float, threshold: float) -> bool:
    # break-even counts as profitable
    return epsilon >= threshold


def break_even_epsilon(params: ProtocolParams, p_v: float, l: int) -> float:
    """Smallest profitable prize, with the restart time set to its expectation."""
    r = 0.0
    if params.d > 0:
        r = expected_startup_rounds(params.d, startup_success_rate(params, p_v))
    return value_at_risk_with_startup(params, p_v, l, r)
