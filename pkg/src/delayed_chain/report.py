"""Run-level metrics: realized utility, attacker profit against an honest twin."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, replace

from . import economics
from .agents import DoubleSpender, Honest
from .engine import Kind, RosterEntry, SimConfig, SimResult, run

SUMMARY_COLUMNS = ["seed", "k", "d", "gamma0", "delta", "epsilon", "attacker_profit",
                   "honest_mean_utility", "slashed_total"]


def realized_round_utility(result: SimResult, agent: str) -> float:
    """Average per-round utility of ``agent``, each payout valued from its win round.

    Counts the rounds whose rewards have had time to mature, i.e. the first
    ``horizon - k`` rounds; a payout received k rounds after its win is
    weighted by discount**k and the per-round cost likewise.
    """
    p = result.config.params
    window = result.rounds - p.k
    if window <= 0:
        return math.nan
    owned = set(result.agents[agent].identities)
    total = math.fsum(ev.data["amount"] for ev in result.events
                      if ev.kind is Kind.REWARD_MATURED and ev.miner in owned)
    cost = result.agents[agent].mining_cost * p.delta_t
    return p.discount**p.k * (total / window - cost)


def discounted_income(result: SimResult, agent: str) -> float:
    """Discounted rewards and reporter credits, minus mining cost, plus double-spend prizes."""
    owned = set(result.agents[agent].identities)
    disc = result.config.params.discount
    parts = []
    for ev in result.events:
        if ev.kind is Kind.REWARD_MATURED and ev.miner in owned:
            parts.append(ev.data["discounted"])
        elif ev.kind is Kind.SLASHED and ev.data["reporter"] in owned:
            parts.append(disc ** (ev.round - 1) * ev.data["reporter_credit"])
    state = result.agents[agent]
    return math.fsum(parts) + state.external - state.discounted_cost


def attackers(config: SimConfig) -> list[RosterEntry]:
    return [e for e in config.roster if e.strategy.attacks]


def honest_twin(config: SimConfig) -> SimConfig:
    """Same seed and roster with every attacker replaced by an honest miner."""
    roster = [replace(e, strategy=Honest()) if e.strategy.attacks else e
              for e in config.roster]
    return replace(config, roster=roster)


@dataclass
class RunSummary:
    result: SimResult
    twin: SimResult | None
    attacker_profit: float
    honest_mean_utility: float
    slashed_total: float
    epsilon: float

    def row(self) -> dict:
        p = self.result.config.params
        return {
            "seed": self.result.config.seed,
            "k": p.k,
            "d": p.d,
            "gamma0": p.gamma0,
            "delta": p.discount,
            "epsilon": self.epsilon,
            "attacker_profit": self.attacker_profit,
            "honest_mean_utility": self.honest_mean_utility,
            "slashed_total": self.slashed_total,
        }


def summarize(config: SimConfig) -> RunSummary:
    """Run ``config`` and, if it has attackers, its honest twin."""
    result = run(config)
    bad = attackers(config)
    twin = run(honest_twin(config)) if bad else None
    profit = math.nan
    if twin is not None:
        profit = math.fsum(discounted_income(result, e.id) - discounted_income(twin, e.id)
                           for e in bad)
    honest = [e.id for e in config.roster if isinstance(e.strategy, Honest)]
    utils = [realized_round_utility(result, a) for a in honest]
    utils = [u for u in utils if not math.isnan(u)]
    mean_util = statistics.fmean(utils) if utils else math.nan
    slashed = math.fsum(ev.data["slashed_total"] for ev in result.events.of_kind(Kind.SLASHED))
    eps = math.fsum(e.strategy.epsilon for e in bad if isinstance(e.strategy, DoubleSpender))
    return RunSummary(result, twin, profit, mean_util, slashed, eps)


def render_report(summary: RunSummary) -> str:
    result = summary.result
    cfg = result.config
    p = cfg.params
    total = math.fsum(e.power for e in cfg.roster)
    lines = [
        f"mode={cfg.mode} horizon={cfg.horizon} rounds={result.rounds} seed={cfg.seed}",
        "params: " + " ".join(f"{k}={v}" for k, v in p.to_dict().items()),
        f"legacy mode: {'yes' if p.legacy else 'no'}",
        "",
        "per-round utility (realized vs predicted)",
    ]
    for entry in cfg.roster:
        share = entry.power / total
        cost = entry.mining_cost if entry.mining_cost is not None else p.mining_cost
        realized = realized_round_utility(result, entry.id)
        predicted = economics.per_round_utility(p, share, cost)
        rel = (realized - predicted) / predicted if predicted else math.nan
        lines.append(f"  {entry.id:<16} {entry.strategy.spec():<32} p={share:.6g} "
                     f"realized={realized:.6g} predicted={predicted:.6g} rel_err={rel:+.3%}")

    lines.append("")
    bad = attackers(cfg)
    if not bad:
        lines.append("attack: none in roster")
    for entry in bad:
        s = entry.strategy
        share = entry.power / total
        lines.append(f"attack: {entry.id} double-spends eps={s.epsilon:g} at round {s.attack_round}")
        if s.attack_round > p.k:
            threshold = economics.break_even_epsilon(p, share, s.attack_round)
            var0 = economics.value_at_risk(p, share, s.attack_round)
            verdict = "profitable" if economics.is_attack_profitable(s.epsilon, threshold) \
                else "unprofitable"
            lines.append(f"  value at risk={var0:.6g} break-even eps (with expected "
                         f"restart)={threshold:.6g} -> predicted {verdict}")
        else:
            lines.append("  attack round within the first k rounds; no closed-form threshold")
    if bad:
        lines.append(f"  simulated attacker profit vs honest twin: {summary.attacker_profit:.6g}")
    lines.append(f"slashed total: {summary.slashed_total:.6g}")
    lines.append(f"conservation residual: {result.ledger.audit():.3g}")
    return "\n".join(lines) + "\n"
