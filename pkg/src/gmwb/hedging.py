"""Delta hedging of the provider's liability along a realized index path.

The provider sells the rider at its model value ``V0`` and holds ``units`` of
the discounted index plus discounted cash.  Positions are rebalanced on every
data date, withdrawal cash flows are paid out of the reserve on event dates,
and whatever is left after the maturity payment is the hedging residual.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .market_models import ModelKind

BUMP = 1e-4

LEDGER_COLUMNS = ("date", "index", "reserve", "units", "cash", "cash_flow_paid")


def compute_delta(result, t, index_level, risk, wealth, guarantee, eps=BUMP):
    """Sensitivity of the contract value to the discounted index level.

    Central difference with relative bump ``eps``.  A move of the index by a
    factor ``1 + h`` moves the wealth account by the same factor and, under
    MMM, the normalized index too.  The value is taken after any withdrawal
    at ``t``.
    """
    up, dn = 1.0 + eps, 1.0 - eps
    mmm = result.model.kind is ModelKind.MMM
    v_up = result.value_at(t, risk * up if mmm else risk, wealth * up, guarantee)
    v_dn = result.value_at(t, risk * dn if mmm else risk, wealth * dn, guarantee)
    return (v_up - v_dn) / (2.0 * eps * index_level)


@dataclass(frozen=True)
class ReserveLedger:
    """Positions on each rebalancing date, after the payment due on that date.

    ``reserve[k] = units[k] * index[k] + cash[k]``; ``cash_flows_paid[k]`` is
    the cash flow paid at date ``k`` (zero off event dates).
    """

    dates: np.ndarray
    index: np.ndarray
    reserve: np.ndarray
    units: np.ndarray
    cash: np.ndarray
    cash_flows_paid: np.ndarray
    terminal_residual: float

    def __len__(self):
        return self.index.size

    def self_financing_gap(self):
        """Largest ``|R_{k+1} - R_k - u_k (S_{k+1} - S_k) + C_{k+1}|``."""
        if len(self) < 2:
            return 0.0
        pnl = self.units[:-1] * np.diff(self.index)
        gap = self.reserve[1:] - self.reserve[:-1] - pnl + self.cash_flows_paid[1:]
        return float(np.max(np.abs(gap)))

    def write_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LEDGER_COLUMNS)
            for k in range(len(self)):
                w.writerow([
                    str(self.dates[k]), repr(float(self.index[k])), repr(float(self.reserve[k])),
                    repr(float(self.units[k])), repr(float(self.cash[k])), repr(float(self.cash_flows_paid[k])),
                ])


def read_ledger_csv(path, terminal_residual=None):
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    cols = {c: np.array([float(r[c]) for r in rows]) for c in LEDGER_COLUMNS[1:]}
    dates = np.array([r["date"] for r in rows], dtype=object)
    if terminal_residual is None:
        terminal_residual = float(cols["reserve"][-1]) if rows else math.nan
    return ReserveLedger(
        dates, cols["index"], cols["reserve"], cols["units"], cols["cash"], cols["cash_flow_paid"],
        terminal_residual,
    )


def run_reserve(result, times, index, risk, wealth_post, guarantee_post, cash_flows, dates=None, initial_reserve=None):
    """Replay the hedge of a priced contract along one path.

    Parameters
    ----------
    result : PricingResult
        Provider's pricing, used for the deltas.
    times, index, risk : array_like
        Contract-clock times, discounted index levels and the provider's risk
        factor on each rebalancing date.  ``times[0]`` must be 0 and the last
        time the maturity.
    wealth_post, guarantee_post : array_like
        Nominal account balances after any withdrawal on each date.
    cash_flows : array_like
        Net cash flow paid to the policyholder on each date.
    initial_reserve : float, optional
        Premium collected at inception; defaults to the model value ``V0``.

    Returns
    -------
    ReserveLedger
    """
    times = np.asarray(times, dtype=float)
    index = np.asarray(index, dtype=float)
    risk = np.asarray(risk, dtype=float)
    wealth_post = np.asarray(wealth_post, dtype=float)
    guarantee_post = np.asarray(guarantee_post, dtype=float)
    paid = np.asarray(cash_flows, dtype=float)
    k_dates = times.size
    if not (index.size == risk.size == wealth_post.size == guarantee_post.size == paid.size == k_dates):
        raise ValueError("path arrays must all have one entry per rebalancing date")
    if k_dates < 2 or times[0] != 0.0 or not math.isclose(times[-1], result.spec.maturity, abs_tol=1e-9):
        raise ValueError("rebalancing dates must run from 0 to the contract maturity")
    if dates is None:
        dates = times

    reserve = np.empty(k_dates)
    units = np.zeros(k_dates)
    reserve[0] = result.value if initial_reserve is None else float(initial_reserve)
    for k in range(k_dates):
        if k > 0:
            reserve[k] = reserve[k - 1] + units[k - 1] * (index[k] - index[k - 1]) - paid[k]
        if k < k_dates - 1:
            units[k] = compute_delta(result, times[k], index[k], risk[k], wealth_post[k], guarantee_post[k])
    cash = reserve - units * index
    return ReserveLedger(np.asarray(dates), index, reserve, units, cash, paid, float(reserve[-1]))
