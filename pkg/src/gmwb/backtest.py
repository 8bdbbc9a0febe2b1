"""Historical backtests: price on one window, live through the next.

A scenario fixes who prices the contract (the *provider*, which also hedges
it) and how the policyholder withdraws: optimally under BSM, optimally under
MMM, or with the static schedule ``A0 / N``.  Each scenario produces time
series of the contract value, the hedge reserve and the nominal accounts.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .contract import AccountState, ContractSpec, cash_flow
from .dp_pricer import DYNAMIC, GridSpec, price
from .hedging import ReserveLedger, read_ledger_csv, run_reserve
from .market_models import ModelKind, estimate_bsm, estimate_mmm, mmm_normalize
from .series import PriceSeries, load_series, year_fraction

__all__ = [
    "BacktestReport",
    "ContractTerms",
    "OptimalPolicy",
    "ScenarioSpec",
    "StaticPolicy",
    "cross_matrix",
    "emit_report",
    "load_series",
    "prepare",
    "read_report",
    "run_scenario",
    "walk_accounts",
]

POLICYHOLDERS = ("BSM", "MMM", "static")
SCENARIOS = (("BSM", "BSM"), ("BSM", "static"), ("BSM", "MMM"), ("MMM", "BSM"), ("MMM", "MMM"))


# -- withdrawal behaviour -----------------------------------------------------


@dataclass(frozen=True)
class StaticPolicy:
    gammas: tuple

    def __call__(self, n, t, index_level, wealth, guarantee):
        return min(self.gammas[n - 1], guarantee)


@dataclass(frozen=True)
class OptimalPolicy:
    """Withdraw what a given pricing result deems optimal at the realized state.

    ``to_risk(t, index_level)`` maps the path to the result's risk factor.
    """

    result: object
    to_risk: object

    def __call__(self, n, t, index_level, wealth, guarantee):
        gamma, _ = self.result.best_withdrawal(n, self.to_risk(t, index_level), wealth, guarantee)
        return gamma


@dataclass(frozen=True)
class AccountPath:
    """Nominal accounts on each date; balances before and after that date's withdrawal."""

    wealth_pre: np.ndarray
    guarantee_pre: np.ndarray
    wealth_post: np.ndarray
    guarantee_post: np.ndarray
    withdrawals: np.ndarray
    cash_flows: np.ndarray


def walk_accounts(spec, times, index, event_positions, policy):
    """Carry the wealth and guarantee accounts along an index path.

    ``event_positions[n - 1]`` is the position in ``times`` of event ``n``; the
    last one is maturity, where the account is liquidated.
    """
    times = np.asarray(times, dtype=float)
    index = np.asarray(index, dtype=float)
    k_dates = times.size
    ev = {int(p): n for n, p in enumerate(event_positions, start=1)}
    if len(ev) != spec.n_events or max(ev) != k_dates - 1:
        raise ValueError("event positions must be distinct and end on the last date")
    out = {k: np.zeros(k_dates) for k in ("wp", "ap", "wq", "aq", "gm", "cf")}
    w, a = spec.initial_wealth, spec.initial_guarantee
    for k in range(k_dates):
        if k > 0:
            w *= index[k] / index[k - 1] * math.exp(-spec.fee_total * (times[k] - times[k - 1]))
        out["wp"][k], out["ap"][k] = w, a
        n = ev.get(k)
        if n is not None:
            state = AccountState(w, a, times[k])
            gamma = max(w, a) if n == spec.n_events else policy(n, times[k], index[k], w, a)
            out["gm"][k] = gamma
            out["cf"][k] = cash_flow(spec, state, gamma, n)
            if n == spec.n_events:
                w, a = 0.0, 0.0
            else:
                w, a = max(w - gamma, 0.0), max(a - gamma, 0.0)
        out["wq"][k], out["aq"][k] = w, a
    return AccountPath(out["wp"], out["ap"], out["wq"], out["aq"], out["gm"], out["cf"])


# -- scenarios ----------------------------------------------------------------


@dataclass(frozen=True)
class ContractTerms:
    """Contract terms that are laid onto the data calendar at run time."""

    initial_wealth: float = 1e6
    years: int = 30
    penalty: float = 0.1
    fee_ins: float = 0.0
    fee_mgmt: float = 0.0


@dataclass(frozen=True)
class ScenarioSpec:
    provider: str
    policyholder: str
    estimation_window: tuple
    contract_window: tuple
    terms: ContractTerms = ContractTerms()
    grid_options: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.provider not in ("BSM", "MMM"):
            raise ValueError(f"provider must be BSM or MMM, got {self.provider!r}")
        if self.policyholder not in POLICYHOLDERS:
            raise ValueError(f"policyholder must be one of {POLICYHOLDERS}, got {self.policyholder!r}")
        est_end = np.datetime64(self.estimation_window[1], "D")
        start = np.datetime64(self.contract_window[0], "D")
        if est_end > start:
            raise ValueError("estimation window must end no later than the contract start")

    @property
    def name(self):
        return f"{self.provider}/{self.policyholder}"


@dataclass
class BacktestContext:
    """Everything shared by scenarios over the same windows: fits, calendar, pricings."""

    series: PriceSeries
    estimation: PriceSeries
    contract: PriceSeries
    spec: ContractSpec
    event_positions: tuple
    bsm: object
    mmm_fit: object
    mmm_offset: float
    grid_options: dict
    results: dict = field(default_factory=dict)

    @property
    def y0(self):
        return float(self.to_risk(ModelKind.MMM)(0.0, self.contract.levels[0]))

    def to_risk(self, kind):
        if kind is ModelKind.BSM:
            return lambda t, s: s
        params, offset = self.mmm_fit.params, self.mmm_offset
        return lambda t, s: mmm_normalize(params, s, offset + t)

    def model(self, kind):
        return self.bsm if kind is ModelKind.BSM else self.mmm_fit.params

    def pricing(self, kind):
        """Dynamic pricing under ``kind``, computed once and cached."""
        if kind not in self.results:
            model = self.model(kind)
            y0 = self.y0 if kind is ModelKind.MMM else 1.0
            opts = dict(self.grid_options)
            if kind is ModelKind.MMM:
                lo, hi = opts.pop("risk_range", (0.01, 20.0))
                opts["risk_range"] = (min(lo, y0 / 5), max(hi, 5 * y0))
            else:
                opts.pop("risk_range", None)
                opts.pop("n_risk", None)
            grid = GridSpec.default(model, self.spec, y0, **opts)
            # BSM providers price under the risk-neutral measure, MMM under the real-world one
            measure = "risk-neutral" if kind is ModelKind.BSM else "real-world"
            self.results[kind] = price(model, self.spec, grid, DYNAMIC, initial_risk=y0, measure=measure)
        return self.results[kind]


def _anniversaries(start, years):
    y, m, d = (int(x) for x in str(np.datetime64(start, "D")).split("-"))
    out = []
    for n in range(1, years + 1):
        day = d
        while True:
            try:
                out.append(np.datetime64(f"{y + n:04d}-{m:02d}-{day:02d}", "D"))
                break
            except ValueError:
                day -= 1
    return out


def prepare(series, estimation_window, contract_window, terms=ContractTerms(), grid_options=None):
    """Fit both models on the estimation window and lay the contract onto the data dates.

    Estimation uses observations strictly before the contract start.  Event
    dates are the anniversaries of the first contract date, each moved to the
    nearest observation.
    """
    c_start, c_end = contract_window
    estimation = series.window(estimation_window[0], estimation_window[1], before=c_start)
    window = series.window(c_start, c_end)
    if len(window) < terms.years + 1:
        raise ValueError("contract window has fewer observations than event dates")
    positions = []
    for d in _anniversaries(window.dates[0], terms.years):
        positions.append(window.index_of(d))
    if len(set(positions)) != len(positions) or positions[0] == 0:
        raise ValueError("contract window does not cover distinct anniversaries")
    last = positions[-1]
    contract = PriceSeries.from_dates(window.dates[: last + 1], window.levels[: last + 1], **window.metadata)
    event_times = (0.0,) + tuple(float(contract.times[p]) for p in positions)
    g = terms.initial_wealth / terms.years
    spec = ContractSpec(
        event_times, (g,) * terms.years, terms.penalty, terms.fee_ins, terms.fee_mgmt, terms.initial_wealth
    )
    fit = estimate_mmm(estimation)
    offset = float(year_fraction(estimation.dates[0], contract.dates[0]))
    return BacktestContext(
        series, estimation, contract, spec, tuple(positions), estimate_bsm(estimation), fit, offset,
        dict(grid_options or {}),
    )


@dataclass
class BacktestReport:
    scenario: str
    provider: str
    policyholder: str
    v0: float
    dates: np.ndarray
    times: np.ndarray
    index: np.ndarray
    contract_value: np.ndarray
    reserve: np.ndarray
    wealth: np.ndarray
    guarantee: np.ndarray
    withdrawals: np.ndarray
    cash_flows: np.ndarray
    ledger: ReserveLedger | None = None

    @property
    def terminal_value(self):
        return float(self.contract_value[-1]) if self.contract_value.size else math.nan

    @property
    def residual(self):
        return float(self.reserve[-1]) if self.reserve.size else math.nan

    @property
    def total_withdrawals(self):
        return float(math.fsum(self.withdrawals))

    @classmethod
    def empty(cls, scenario="", provider="", policyholder=""):
        z = np.zeros(0)
        return cls(scenario, provider, policyholder, math.nan, np.array([], dtype="datetime64[D]"),
                   z, z, z, z, z, z, z, z, None)


def _contract_value_path(result, spec, times, index, risk, acc, positions):
    """Provider's value along the path, before any withdrawal on event dates."""
    ev = set(positions)
    out = np.empty(times.size)
    out[0] = result.value
    for k in range(1, times.size):
        if k == times.size - 1:
            out[k] = acc.cash_flows[k]
        elif k in ev:
            out[k] = result.value_at(times[k], risk[k], acc.wealth_pre[k], acc.guarantee_pre[k], side="pre")
        else:
            out[k] = result.value_at(times[k], risk[k], acc.wealth_post[k], acc.guarantee_post[k])
    return out


def run_scenario(scenario, series=None, context=None):
    """Run one provider/policyholder pairing and return its :class:`BacktestReport`."""
    if context is None:
        if series is None:
            raise ValueError("need a price series or a prepared context")
        context = prepare(series, scenario.estimation_window, scenario.contract_window, scenario.terms,
                          scenario.grid_options)
    spec = context.spec
    provider = ModelKind(scenario.provider)
    result = context.pricing(provider)
    if scenario.policyholder == "static":
        policy = StaticPolicy((spec.initial_guarantee / spec.n_events,) * (spec.n_events - 1))
    else:
        holder = ModelKind(scenario.policyholder)
        policy = OptimalPolicy(context.pricing(holder), context.to_risk(holder))
    c = context.contract
    acc = walk_accounts(spec, c.times, c.levels, context.event_positions, policy)
    risk = np.asarray(context.to_risk(provider)(c.times, c.levels), dtype=float)
    ledger = run_reserve(result, c.times, c.levels, risk, acc.wealth_post, acc.guarantee_post, acc.cash_flows,
                         dates=c.dates)
    value = _contract_value_path(result, spec, c.times, c.levels, risk, acc, context.event_positions)
    return BacktestReport(
        scenario.name, scenario.provider, scenario.policyholder, float(result.value), c.dates, c.times, c.levels,
        value, ledger.reserve, acc.wealth_pre, acc.guarantee_pre, acc.withdrawals, acc.cash_flows, ledger,
    )


def cross_matrix(series, estimation_window, contract_window, terms=ContractTerms(), grid_options=None):
    """The five provider/policyholder pairings over one pair of windows."""
    context = prepare(series, estimation_window, contract_window, terms, grid_options)
    reports = []
    for prov, holder in SCENARIOS:
        spec = ScenarioSpec(prov, holder, estimation_window, contract_window, terms)
        reports.append(run_scenario(spec, context=context))
    return reports


# -- file output --------------------------------------------------------------

SUMMARY_COLUMNS = ("scenario", "provider", "policyholder", "V0", "terminal_value", "residual", "total_withdrawals")
_SERIES_FILES = {
    "contract_reserve.csv": ("date", "time", "index", "contract_value", "reserve"),
    "wealth.csv": ("date", "wealth"),
    "guarantee.csv": ("date", "guarantee"),
    "withdrawals.csv": ("date", "withdrawal", "cash_flow"),
}
_FIELD = {"time": "times", "index": "index", "contract_value": "contract_value", "reserve": "reserve",
          "wealth": "wealth", "guarantee": "guarantee", "withdrawal": "withdrawals", "cash_flow": "cash_flows"}


def _write(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def emit_report(report, out_dir):
    """Write a report as CSV files under ``out_dir`` (created if needed).

    An empty report produces header-only files.  Floats are written with
    ``repr`` so :func:`read_report` restores them exactly.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    empty = report.dates.size == 0
    summary = [] if empty else [[
        report.scenario, report.provider, report.policyholder, repr(report.v0), repr(report.terminal_value),
        repr(report.residual), repr(report.total_withdrawals),
    ]]
    _write(out / "summary.csv", SUMMARY_COLUMNS, summary)
    for name, cols in _SERIES_FILES.items():
        rows = []
        for k in range(report.dates.size):
            rows.append([str(report.dates[k])] + [repr(float(getattr(report, _FIELD[c])[k])) for c in cols[1:]])
        _write(out / name, cols, rows)
    if report.ledger is not None and not empty:
        report.ledger.write_csv(out / "ledger.csv")
    else:
        _write(out / "ledger.csv", ("date", "index", "reserve", "units", "cash", "cash_flow_paid"), [])
    return out


def read_report(out_dir):
    """Inverse of :func:`emit_report`."""
    out = Path(out_dir)
    with (out / "summary.csv").open(newline="") as fh:
        summary = list(csv.DictReader(fh))
    cols = {}
    dates = None
    for name, header in _SERIES_FILES.items():
        with (out / name).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        if dates is None:
            dates = np.array([r["date"] for r in rows], dtype="datetime64[D]")
        for c in header[1:]:
            cols[_FIELD[c]] = np.array([float(r[c]) for r in rows])
    if not summary:
        return BacktestReport.empty()
    s = summary[0]
    ledger = read_ledger_csv(out / "ledger.csv")
    ledger = ReserveLedger(dates, ledger.index, ledger.reserve, ledger.units, ledger.cash,
                           ledger.cash_flows_paid, float(s["residual"]))
    return BacktestReport(s["scenario"], s["provider"], s["policyholder"], float(s["V0"]), dates,
                          ledger=ledger, **cols)
