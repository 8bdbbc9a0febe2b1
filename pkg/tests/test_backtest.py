import math

import numpy as np
import pytest

from conftest import synthetic_mmm_series
from gmwb.backtest import (
    SCENARIOS,
    SUMMARY_COLUMNS,
    BacktestReport,
    ContractTerms,
    ScenarioSpec,
    StaticPolicy,
    cross_matrix,
    emit_report,
    prepare,
    read_report,
    run_scenario,
    walk_accounts,
)
from gmwb.contract import ContractSpec

EST = ("1950-01-01", "1961-12-31")
CON = ("1962-01-01", "1966-12-31")
TERMS = ContractTerms(initial_wealth=1e6, years=4, penalty=0.1)
GRID = dict(n_wealth=81, n_guarantee=41, n_risk=100, risk_range=(0.2, 5.0))


@pytest.fixture(scope="module")
def reports(synthetic_series):
    return cross_matrix(synthetic_series, EST, CON, TERMS, GRID)


def test_estimation_strictly_precedes_contract(synthetic_series):
    ctx = prepare(synthetic_series, EST, ("1961-06-01", CON[1]), TERMS, GRID)
    assert ctx.estimation.dates[-1] < ctx.contract.dates[0]
    with pytest.raises(ValueError, match="estimation window"):
        ScenarioSpec("BSM", "BSM", ("1950-01-01", "1963-01-01"), CON)


def test_event_dates_are_anniversaries(synthetic_series):
    ctx = prepare(synthetic_series, EST, CON, TERMS, GRID)
    ev = ctx.contract.dates[list(ctx.event_positions)]
    assert [str(d)[:7] for d in ev] == ["1963-01", "1964-01", "1965-01", "1966-01"]
    assert ctx.contract.dates[-1] == ev[-1]
    assert ctx.spec.n_events == 4 and ctx.spec.withdrawals == (250000.0,) * 4


def test_scenario_validation():
    with pytest.raises(ValueError, match="provider"):
        ScenarioSpec("static", "BSM", EST, CON)
    with pytest.raises(ValueError, match="policyholder"):
        ScenarioSpec("BSM", "greedy", EST, CON)
    assert ScenarioSpec("MMM", "static", EST, CON).name == "MMM/static"


def test_five_scenarios_in_order(reports):
    assert [(r.provider, r.policyholder) for r in reports] == list(SCENARIOS)
    # same provider, same price
    assert reports[0].v0 == reports[1].v0 == reports[2].v0
    assert reports[3].v0 == reports[4].v0


def test_static_policyholder_withdraws_uniformly(reports):
    rep = reports[1]
    w = rep.withdrawals[rep.withdrawals > 0]
    assert np.allclose(w[:-1], 250000.0, rtol=0, atol=1e-6)


def test_totals_are_exact_sums(reports):
    for rep in reports:
        assert rep.total_withdrawals == math.fsum(rep.withdrawals)
        assert rep.residual == rep.ledger.terminal_residual
        assert rep.terminal_value == rep.cash_flows[-1]


def test_backtest_ledgers_are_self_financing(reports):
    for rep in reports:
        assert rep.ledger.self_financing_gap() <= 1e-12 * rep.v0


def test_path_starts_at_price_and_reserve_pays_flows(reports):
    for rep in reports:
        assert rep.contract_value[0] == rep.v0 == rep.reserve[0]
        assert rep.wealth[0] == TERMS.initial_wealth and rep.guarantee[0] == TERMS.initial_wealth
        assert np.array_equal(rep.ledger.cash_flows_paid, rep.cash_flows)


def test_report_round_trip(reports, tmp_path):
    for rep in reports:
        out = emit_report(rep, tmp_path / rep.scenario.replace("/", "-"))
        back = read_report(out)
        for name in ("scenario", "provider", "policyholder", "v0", "residual", "terminal_value"):
            assert getattr(back, name) == getattr(rep, name)
        for name in ("dates", "times", "index", "contract_value", "reserve", "wealth", "guarantee",
                     "withdrawals", "cash_flows"):
            assert np.array_equal(getattr(back, name), getattr(rep, name)), name
        assert np.array_equal(back.ledger.units, rep.ledger.units)


def test_summary_residual_is_ledger_residual(reports, tmp_path):
    rep = reports[2]
    emit_report(rep, tmp_path)
    row = (tmp_path / "summary.csv").read_text().splitlines()
    assert row[0] == ",".join(SUMMARY_COLUMNS)
    assert float(row[1].split(",")[SUMMARY_COLUMNS.index("residual")]) == rep.ledger.terminal_residual


def test_empty_report_writes_headers_only(tmp_path):
    emit_report(BacktestReport.empty(), tmp_path)
    for name in ("summary.csv", "contract_reserve.csv", "wealth.csv", "guarantee.csv", "withdrawals.csv",
                 "ledger.csv"):
        lines = (tmp_path / name).read_text().splitlines()
        assert len(lines) == 1 and lines[0]
    assert read_report(tmp_path).dates.size == 0


def test_single_event_contract_leaves_no_choice(synthetic_series):
    terms = ContractTerms(initial_wealth=1.0, years=1)
    reps = cross_matrix(synthetic_series, EST, CON, terms, GRID)
    for rep in reps[1:]:
        assert np.array_equal(rep.cash_flows, reps[0].cash_flows)
        assert rep.total_withdrawals == reps[0].total_withdrawals
    assert reps[0].residual == reps[1].residual == reps[2].residual
    assert reps[3].residual == reps[4].residual
    # the two providers differ only through their hedge
    assert abs(reps[0].residual - reps[3].residual) < 0.05


def test_walk_accounts_static_arithmetic():
    spec = ContractSpec((0.0, 1.0, 2.0), (0.5, 0.5), 0.1)
    times = np.array([0.0, 0.5, 1.0, 1.5, 2.0])
    index = np.array([1.0, 1.2, 0.8, 0.9, 1.1])
    acc = walk_accounts(spec, times, index, [2, 4], StaticPolicy((0.5,)))
    assert acc.wealth_pre[2] == pytest.approx(0.8)
    assert acc.wealth_post[2] == pytest.approx(0.3) and acc.guarantee_post[2] == 0.5
    assert acc.wealth_pre[4] == pytest.approx(0.3 * 1.1 / 0.8)
    assert acc.withdrawals[4] == 0.5  # liquidation takes max(W, A)
    assert acc.cash_flows[2] == 0.5 and acc.cash_flows[4] == 0.5
    assert acc.wealth_post[4] == 0.0


def test_run_scenario_needs_data():
    with pytest.raises(ValueError, match="series"):
        run_scenario(ScenarioSpec("BSM", "BSM", EST, CON))


def test_context_y0_uses_estimation_trend():
    series = synthetic_mmm_series(seed=5, y0=1.0)
    ctx = prepare(series, EST, CON, TERMS, GRID)
    fit = ctx.mmm_fit.params
    assert fit.eta > 0
    assert 0.2 < ctx.y0 < 5.0
