import warnings

import pytest

from impact_qlbs import (
    MarketParams,
    assemble_dataset,
    build_knots,
    portfolio_recursion,
    propagate_impact,
    rewards,
    sample_impact,
    sample_strategy,
    simulate_unaffected,
    state_variables,
)
from impact_qlbs.fqi import FitConfig, fit


class Run:
    """Every intermediate of one small pipeline pass, for poking at in tests."""

    def __init__(self, seed, T=2, n_mc=50, n_basis=4, lam=0.001, ridge=1.0, bounds=(-1.0, 1.0), u_range=(-1.0, 1.0)):
        p = MarketParams(T=T, n_mc=n_mc)
        self.params = p
        self.unaffected = simulate_unaffected(p, seed)
        self.strategy = sample_strategy(*u_range, n_mc, T, seed)
        self.impact = sample_impact(n_mc, T, (0.0, 1.0), (0.01, 0.03), seed)
        self.quoted = propagate_impact(self.unaffected, self.strategy, self.impact)
        self.states = state_variables(self.quoted, p.F_prev)
        self.portfolio = portfolio_recursion(self.quoted, self.strategy, p)
        self.rewards = rewards(self.quoted, self.strategy, self.portfolio, p, lam)
        self.data = assemble_dataset(
            self.quoted, self.strategy, self.rewards, self.impact, self.states, self.portfolio
        )
        self.knots = build_knots(self.states, n_basis)
        self.config = FitConfig(p.gamma, lam, ridge, bounds)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            self.model = fit(self.data, self.knots, self.config)


@pytest.fixture
def make_run():
    return Run


# -- acceptance report --------------------------------------------------------

ACCEPTANCE: list = []


@pytest.fixture
def criterion():
    """Record one acceptance line, then assert it."""

    def record(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
