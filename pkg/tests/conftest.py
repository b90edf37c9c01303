import pytest

from delayed_chain.agents import DoubleSpender, Honest
from delayed_chain.engine import RosterEntry, SimConfig
from delayed_chain.params import ProtocolParams


@pytest.fixture
def params():
    return ProtocolParams(k=3, discount=0.9)


def attack_config(eps=1.0, l=10, k=3, d=0.0, gamma0=0.0, discount=0.9, rho=0.0,
                  power=1.0, horizon=100, seed=0, others=(("watcher", 0.0),), **extra):
    p = ProtocolParams(k=k, d=d, gamma0=gamma0, discount=discount, reporter_share=rho,
                       **extra)
    roster = [RosterEntry("attacker", power, DoubleSpender(l, eps))]
    roster += [RosterEntry(name, pw, Honest()) for name, pw in others]
    return SimConfig(p, roster, horizon, seed=seed)


# one PASS/FAIL line per acceptance criterion, printed after the run
_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    n = props["criterion"]
    if report.when == "call" or (report.when == "setup" and report.failed):
        verdict = "PASS" if report.passed else "FAIL"
        _CRITERIA[n] = (verdict, str(props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        verdict, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {verdict}  {detail}".rstrip())
