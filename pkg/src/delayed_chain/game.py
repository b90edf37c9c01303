"""The n-player coordination game and its repeated-play discount threshold.

Everyone playing 0 pays ``alpha`` each; exactly two players on 1 pay those
two ``beta`` each; anything else pays nothing.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

MAX_NASH_PLAYERS = 20
MAX_RESILIENCE_PLAYERS = 12


@dataclass(frozen=True)
class CoordinationGame:
    n: int
    alpha: float = 1.0
    beta: float = 2.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("the game needs at least two players")
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("payoffs must be positive")


def _check(game: CoordinationGame, profile: Sequence[int]) -> tuple[int, ...]:
    profile = tuple(profile)
    if len(profile) != game.n or any(a not in (0, 1) for a in profile):
        raise ValueError(f"profile must be {game.n} actions in {{0, 1}}")
    return profile


def payoff(game: CoordinationGame, profile: Sequence[int]) -> tuple[float, ...]:
    profile = _check(game, profile)
    ones = sum(profile)
    if ones == 0:
        return (game.alpha,) * game.n
    if ones == 2:
        return tuple(game.beta if a else 0.0 for a in profile)
    return (0.0,) * game.n


def is_nash(game: CoordinationGame, profile: Sequence[int]) -> bool:
    profile = _check(game, profile)
    if game.n > MAX_NASH_PLAYERS:
        raise ValueError(f"exhaustive check limited to n <= {MAX_NASH_PLAYERS}")
    base = payoff(game, profile)
    for i in range(game.n):
        dev = list(profile)
        dev[i] ^= 1
        if payoff(game, dev)[i] > base[i]:
            return False
    return True


def is_k_resilient(game: CoordinationGame, profile: Sequence[int], k: int) -> bool:
    """No coalition of size <= k has a joint deviation that strictly helps one of its members."""
    profile = _check(game, profile)
    if not 1 <= k <= game.n:
        raise ValueError(f"coalition bound k must lie in [1, {game.n}]")
    if game.n > MAX_RESILIENCE_PLAYERS:
        raise ValueError(f"exhaustive check limited to n <= {MAX_RESILIENCE_PLAYERS}")
    base = payoff(game, profile)
    for size in range(1, k + 1):
        for coalition in itertools.combinations(range(game.n), size):
            for joint in itertools.product((0, 1), repeat=size):
                dev = list(profile)
                for i, a in zip(coalition, joint):
                    dev[i] = a
                u = payoff(game, dev)
                if any(u[i] > base[i] for i in coalition):
                    return False
    return True


def paper_resilience_condition(alpha: float, beta: float, k: int) -> bool:
    """True when 2*beta/k > alpha, i.e. k-resilience is ruled out by the closed-form rule."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return 2 * beta / k > alpha


def repeated_lhs(delta: float, t: int) -> float:
    """(1 - delta**(t+1)) / (1 - delta): value of cooperating over a t-round punishment."""
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    if t < 0:
        raise ValueError("t must be >= 0")
    if 1 - delta < 1e-6:
        return math.fsum(delta**j for j in range(t + 1))
    return (1 - delta ** (t + 1)) / (1 - delta)


def cooperation_target(alpha: float, beta: float, k: int) -> float:
    return 2 * beta / (alpha * k)


def min_discount(alpha: float, beta: float, k: int, t: int,
                 tol: float = 1e-9) -> float | None:
    """Smallest discount factor making cooperation worth it, or None when none below 1 does."""
    if not (alpha > 0 and beta > 0) or k < 1 or t < 0:
        raise ValueError("need alpha, beta > 0, k >= 1, t >= 0")
    target = cooperation_target(alpha, beta, k)
    if target <= 1:
        return 0.0
    # the left side only approaches t+1 as delta -> 1
    if t + 1 <= target:
        return None
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if repeated_lhs(mid, t) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def all_profiles(n: int):
    return itertools.product((0, 1), repeat=n)
