"""Acceptance criteria. Run with ``pytest -m acceptance``; a PASS/FAIL line per
criterion is printed in the terminal summary."""

import copy
import hashlib
import hmac
import itertools
import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from delayed_chain import economics as eco
from delayed_chain import game
from delayed_chain.agents import DoubleSpender, Honest
from delayed_chain.cli import main
from delayed_chain.engine import (Kind, RosterEntry, SimConfig, poisson_arrivals, run,
                                  sample_startup_rounds, select_winner)
from delayed_chain.fraud import (FraudProof, KeyRing, Transaction, sign_transaction,
                                 verify_fraud_proof)
from delayed_chain.params import ProtocolParams
from delayed_chain.report import realized_round_utility
from delayed_chain.sweep import parse_values, run_sweep

from conftest import attack_config

pytestmark = pytest.mark.acceptance

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
VAR_ORACLE = 0.9**10 + 0.9**11 + 0.9**12


@pytest.fixture
def criterion(record_property):
    def start(n):
        record_property("criterion", n)
        return lambda detail: record_property("detail", detail)
    return start


def test_c1_per_round_utility_matches_simulation(criterion):
    note = criterion(1)
    p = ProtocolParams(k=10, gamma0=0.01, discount=0.99, mining_cost=0.05)
    cfg = SimConfig(p, [RosterEntry("a", 0.6), RosterEntry("b", 0.4)], 100_000, seed=1)
    t0 = time.perf_counter()
    res = run(cfg)
    elapsed = time.perf_counter() - t0
    errs = {}
    for agent, share in (("a", 0.6), ("b", 0.4)):
        predicted = eco.per_round_utility(p, share)
        errs[agent] = (realized_round_utility(res, agent) - predicted) / predicted
    worst = max(abs(e) for e in errs.values())
    note(f"max rel err {worst:.3%} (tol 1%), runtime {elapsed:.2f}s (limit 10s)")
    assert worst < 0.01
    assert elapsed < 10


def _sign_changes(xs, ys):
    return [(i, x0 - y0 * (x1 - x0) / (y1 - y0))
            for i, (x0, x1, y0, y1) in enumerate(zip(xs, xs[1:], ys, ys[1:]))
            if (y0 < 0) != (y1 < 0)]


def test_c2_break_even_epsilon(criterion):
    note = criterion(2)
    base = attack_config(k=3, l=10, discount=0.9, horizon=60)
    var = eco.value_at_risk(base.params, 1.0, 10)
    assert var == pytest.approx(VAR_ORACLE, rel=1e-14)
    eps = parse_values("0.5:1.5:0.05")
    assert len(eps) == 21
    _, means = run_sweep(base, {"epsilon": eps}, seeds=range(32))
    profits = [m["mean_attacker_profit"] for m in sorted(means, key=lambda m: m["epsilon"])]
    changes = _sign_changes(eps, profits)
    note(f"sign change(s) at {[round(c, 5) for _, c in changes]} vs value_at_risk {var:.5f}"
         " (tol 0.05)")
    assert len(changes) == 1
    assert abs(changes[0][1] - var) <= 0.05


def test_c3_startup_cost_monotonicity(criterion):
    note = criterion(3)
    ds = [0.0, 5.0, 20.0, 80.0]
    base = attack_config(k=3, l=10, discount=0.9, horizon=200)
    eps = 1.2 * eco.value_at_risk(base.params, 1.0, 10)
    _, means = run_sweep(base, {"d": ds, "epsilon": [eps]}, seeds=range(32))
    profits = [m["mean_attacker_profit"] for m in sorted(means, key=lambda m: m["d"])]

    predicted = []
    for d in ds:
        p = replace(base.params, d=d)
        r = eco.expected_startup_rounds(d, eco.startup_success_rate(p, 1.0))
        predicted.append(eps - eco.value_at_risk_with_startup(p, 1.0, 10, r))
    first_neg = lambda xs: next((i for i, x in enumerate(xs) if x < 0), len(xs))  # noqa: E731
    sim_idx, pred_idx = first_neg(profits), first_neg(predicted)
    monotone = all(b <= a + 1e-12 for a, b in zip(profits, profits[1:]))
    note(f"profits {[round(x, 4) for x in profits]}; crossing at d index {sim_idx}, "
         f"predicted {pred_idx}; nonincreasing={monotone}")
    assert monotone
    assert sim_idx < len(ds) and abs(sim_idx - pred_idx) <= 1


def test_c4_legacy_regression(criterion):
    note = criterion(4)
    k, horizon, alpha = 100, 1000, 1.5
    p = ProtocolParams(k=k, alpha=alpha, discount=0.95)
    roster = [RosterEntry(n, w) for n, w in (("a", 0.5), ("b", 0.3), ("c", 0.2))]
    res = run(SimConfig(p, roster, horizon, seed=3))
    won = {e.round: e.miner for e in res.events.of_kind(Kind.BLOCK_WON)}
    matured = res.events.of_kind(Kind.REWARD_MATURED)
    mismatches = sum(1 for e in matured
                     if won.get(e.data["created_round"]) != e.miner
                     or e.round - e.data["created_round"] != k
                     or e.data["amount"] != alpha or e.data["decay_factor"] != 1.0)
    in_flight = sum(len(m.pending) for m in res.ledger.miners.values())
    paid = math.fsum(m.paid_balance for m in res.ledger.miners.values())
    note(f"{len(matured)} payouts, {mismatches} mismatches, in-flight {in_flight}, "
         f"paid {paid!r} vs {(horizon - in_flight) * alpha!r}")
    assert len(won) == horizon and mismatches == 0
    assert in_flight == k and len(matured) == horizon - k
    assert paid == (horizon - in_flight) * alpha


def _slash_oracle(events, accused, k, l, gamma0):
    """Value of the accused's wins in (l-k, l], decayed once per locked round up to the slash."""
    total = []
    rounds = []
    for e in events:
        if e.kind is Kind.BLOCK_WON and e.miner == accused and l - k < e.round <= l:
            c = e.round
            ticks = sum(1 for t in range(c, l + 2) if c + k > t)
            total.append(math.exp(-gamma0 * ticks))
            rounds.append(c)
    return math.fsum(total), rounds


def test_c5_slashing_exactness(criterion):
    note = criterion(5)
    k, l, gamma0, rho = 6, 30, 0.03, 0.3
    worst, checked = 0.0, 0
    for seed in range(20):
        cfg = attack_config(eps=2.0, l=l, k=k, gamma0=gamma0, rho=rho, power=0.5,
                            others=(("h1", 0.3), ("h2", 0.2)), horizon=60, seed=seed)
        res = run(cfg)
        [sl] = res.events.of_kind(Kind.SLASHED)
        oracle, rounds = _slash_oracle(res.events, "attacker/0", k, l, gamma0)
        assert sl.data["created_rounds"] == rounds
        assert all(l - k < c <= l for c in sl.data["created_rounds"])
        worst = max(worst, abs(sl.data["slashed_total"] - oracle))
        assert sl.data["reporter_credit"] == rho * sl.data["slashed_total"]
        assert sl.data["burned"] == pytest.approx((1 - rho) * sl.data["slashed_total"],
                                                  abs=1e-15)
        rep = sl.data["reporter"]
        twin_rep = run(replace(cfg, params=replace(cfg.params, reporter_share=0.0)))
        extra = res.ledger.miners[rep].paid_balance - twin_rep.ledger.miners[rep].paid_balance
        assert extra == pytest.approx(rho * sl.data["slashed_total"], abs=1e-12)
        checked += 1
    note(f"{checked} slashes, max |slashed_total - oracle| = {worst:.2e} (tol 1e-12)")
    assert worst <= 1e-12


# -- independent game oracle --------------------------------------------------------------

def _oracle_payoffs(profile, alpha, beta):
    ones = [i for i, a in enumerate(profile) if a == 1]
    if not ones:
        return [alpha] * len(profile)
    if len(ones) == 2:
        return [beta if a == 1 else 0.0 for a in profile]
    return [0.0] * len(profile)


def _oracle_resilient(profile, alpha, beta, k):
    """Scan every alternative profile; D is the set of players whose action changes."""
    n = len(profile)
    base = _oracle_payoffs(profile, alpha, beta)
    for dev in itertools.product((0, 1), repeat=n):
        changed = [i for i in range(n) if dev[i] != profile[i]]
        if not changed or len(changed) > k:
            continue
        u = _oracle_payoffs(dev, alpha, beta)
        gainers = [i for i in range(n) if u[i] > base[i]]
        if any(i in changed for i in gainers):
            return False
        # a non-moving gainer can join the coalition if there is room
        if gainers and len(changed) < k:
            return False
    return True


def _oracle_min_discount(alpha, beta, k, t, grid):
    target = 2 * beta / (alpha * k)
    lhs = np.zeros_like(grid)
    term = np.ones_like(grid)
    for _ in range(t + 1):
        lhs += term
        term = term * grid
    ok = np.nonzero(lhs >= target)[0]
    return None if len(ok) == 0 else float(grid[ok[0]])


def test_c6_game_oracles(criterion):
    note = criterion(6)
    disagreements, cases = 0, 0
    for n in range(2, 7):
        for alpha, beta in ((1, 2), (2, 1), (1, 1)):
            g = game.CoordinationGame(n, alpha, beta)
            for profile in itertools.product((0, 1), repeat=n):
                nash = _oracle_resilient(profile, alpha, beta, 1)
                disagreements += game.is_nash(g, profile) != nash
                cases += 1
                for k in range(1, n + 1):
                    disagreements += (game.is_k_resilient(g, profile, k)
                                      != _oracle_resilient(profile, alpha, beta, k))
                    cases += 1

    rng = np.random.default_rng(2024)
    grid = np.arange(0, 1_000_000) * 1e-6
    worst, infeasible_mismatch = 0.0, 0
    for _ in range(100):
        alpha = float(rng.uniform(0.5, 3))
        beta = float(rng.uniform(0.25, 6))
        k = int(rng.integers(1, 7))
        t = int(rng.integers(0, 13))
        got = game.min_discount(alpha, beta, k, t)
        want = _oracle_min_discount(alpha, beta, k, t, grid)
        if (got is None) != (want is None):
            infeasible_mismatch += 1
        elif got is not None:
            worst = max(worst, abs(got - want))
    note(f"{disagreements} disagreements over {cases} checks; min_discount max err "
         f"{worst:.2e} (tol 1e-5), {infeasible_mismatch} feasibility mismatches")
    assert disagreements == 0 and infeasible_mismatch == 0 and worst <= 1e-5


def test_c7_stochastic_calibration(criterion):
    note = criterion(7)
    rng = np.random.default_rng(7)
    powers = [0.1, 0.2, 0.3, 0.4]
    n = 100_000
    counts = np.bincount([select_winner(powers, rng) for _ in range(n)], minlength=4)
    z_win = max(abs(c - n * p) / math.sqrt(n * p * (1 - p)) for c, p in zip(counts, powers))

    z_poi = []
    for lam, horizon in ((1.0, 10_000.0), (2.5, 4_000.0), (0.3, 50_000.0)):
        c = len(poisson_arrivals(lam, horizon, rng))
        z_poi.append(abs(c - lam * horizon) / math.sqrt(lam * horizon))

    z_start = []
    base = ProtocolParams(discount=0.9)
    for d, p_v, lam in ((5, 0.5, 1.0), (2.5, 0.2, 1.0), (12, 0.05, 4.0)):
        params = replace(base, lam=lam)
        q = eco.startup_success_rate(params, p_v)
        draws = np.array([sample_startup_rounds(d, p_v, params, rng) for _ in range(10_000)])
        se = draws.std(ddof=1) / math.sqrt(len(draws))
        z_start.append(abs(draws.mean() - math.ceil(d) / q) / se)
    note(f"max |z|: winners {z_win:.2f}, arrivals {max(z_poi):.2f}, "
         f"startup {max(z_start):.2f} (limit 3)")
    assert z_win < 3 and max(z_poi) < 3 and max(z_start) < 3


def test_c8_determinism(criterion, tmp_path):
    note = criterion(8)
    files = {}
    for sub in ("a", "b"):
        out = tmp_path / sub
        assert main(["run", "--scenario", str(SCENARIOS / "churn.json"), "--out",
                     str(out / "run")]) == 0
        assert main(["sweep", "--scenario", str(SCENARIOS / "churn.json"), "--grid",
                     "epsilon=1,3", "--grid", "d=0,4", "--seeds", "3", "--horizon", "150",
                     "--out", str(out / "sweep")]) == 0
        files[sub] = {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*"))
                      if p.is_file()}
    same = files["a"] == files["b"]
    note(f"{len(files['a'])} output files compared, byte-identical={same}")
    assert len(files["a"]) == 5 and same


# -- fraud-proof soundness ------------------------------------------------------------------

def _oracle_accepts(proof, issued):
    a, b = proof.tx_a, proof.tx_b
    if not (isinstance(a, Transaction) and isinstance(b, Transaction)):
        return False
    if a not in issued or b not in issued:
        return False
    return (a.signer == b.signer == proof.accused and a.spent_output == b.spent_output
            and a.tx_id != b.tx_id)


def _mutate(proof, rng, pool, ids, seeds):
    kind = int(rng.integers(0, 10))
    pick = lambda: pool[int(rng.integers(len(pool)))]  # noqa: E731
    which = "tx_a" if rng.random() < 0.5 else "tx_b"
    tx = getattr(proof, which)
    if kind == 0:
        return replace(proof, tx_a=pick(), tx_b=pick())
    if kind == 1:
        return replace(proof, accused=ids[int(rng.integers(len(ids)))])
    if kind == 2:
        field = ["tx_id", "signer", "spent_output", "signature"][int(rng.integers(4))]
        value = getattr(tx, field)
        pos = int(rng.integers(len(value)))
        value = value[:pos] + chr((ord(value[pos]) + 1) % 128 or 48) + value[pos + 1:]
        return replace(proof, **{which: replace(tx, **{field: value})})
    if kind == 3:
        return replace(proof, **{which: replace(tx, amount=tx.amount * (1 + rng.random()))})
    if kind == 4:
        return replace(proof, tx_b=proof.tx_a)
    if kind == 5:
        # forge: a tag made with some other identity's key
        other = ids[int(rng.integers(len(ids)))]
        body = f"{tx.signer}|{tx.spent_output}|{tx.amount!r}|{tx.tx_id}".encode()
        sig = hmac.new(seeds[other], body, hashlib.sha256).hexdigest()
        return replace(proof, **{which: replace(tx, signature=sig)})
    if kind == 6:
        return replace(proof, **{which: replace(tx, signer=ids[int(rng.integers(len(ids)))])})
    if kind == 7:
        return replace(proof, **{which: None if rng.random() < 0.5 else tx.to_record()})
    if kind == 8:
        return replace(proof, tx_a=proof.tx_b, tx_b=proof.tx_a)
    bad = copy.copy(tx)
    object.__setattr__(bad, "amount", "NaN?")
    return replace(proof, **{which: bad})


def test_c9_fraud_proof_soundness(criterion):
    note = criterion(9)
    rng = np.random.default_rng(99)
    keys = KeyRing()
    ids = [f"m{i}" for i in range(6)] + ["ghost"]
    seeds = {i: hashlib.sha256(i.encode()).digest() for i in ids}
    for i in ids[:-1]:
        keys.register(i, seeds[i])
    pool = []
    for i in ids[:-1]:
        for out in range(3):
            for nonce in range(2 if out == 0 else 1):
                pool.append(sign_transaction(keys, seeds[i], i, f"{i}:o{out}", 1.0 + out,
                                             nonce))
        pool.append(sign_transaction(keys, seeds[i], i, "shared", 2.0))
    issued = set(pool)
    valid = [FraudProof(a, b, a.signer, None, 1) for a in pool for b in pool
             if a.signer == b.signer and a.spent_output == b.spent_output and a != b]
    assert valid and all(verify_fraud_proof(p, keys) for p in valid)

    false_accepts = false_rejects = 0
    for _ in range(10_000):
        proof = _mutate(valid[int(rng.integers(len(valid)))], rng, pool, ids, seeds)
        got = verify_fraud_proof(proof, keys)
        want = _oracle_accepts(proof, issued)
        false_accepts += got and not want
        false_rejects += want and not got

    # every simulated double spend: one verifying proof, one slash
    spends = reports = 0
    for seed in range(10):
        roster = [RosterEntry("x", 0.3, DoubleSpender(15 + seed, 1.0)),
                  RosterEntry("y", 0.2, DoubleSpender(40, 0.5)),
                  RosterEntry("h", 0.5, Honest())]
        p = ProtocolParams(k=5, d=2, gamma0=0.01, discount=0.9, reporter_share=0.5)
        res = run(SimConfig(p, roster, 80, seed=seed))
        for ds in res.events.of_kind(Kind.DOUBLE_SPEND):
            spends += 1
            fr = [e for e in res.events.of_kind(Kind.FRAUD_REPORTED) if e.miner == ds.miner]
            sl = [e for e in res.events.of_kind(Kind.SLASHED) if e.miner == ds.miner]
            assert len(fr) == 1 and len(sl) == 1
            proof = FraudProof.from_record({k: v for k, v in fr[0].data.items()
                                            if k != "valid"})
            assert verify_fraud_proof(proof, res.ledger.keys)
            reports += 1
        assert len(res.events.of_kind(Kind.SLASHED)) == len(res.events.of_kind(Kind.DOUBLE_SPEND))
    note(f"10000 mutations: {false_accepts} false accepts, {false_rejects} false rejects; "
         f"{spends} double spends, {reports} verified proofs and slashes")
    assert false_accepts == 0 and false_rejects == 0 and spends == reports == 20
