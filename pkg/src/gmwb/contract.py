"""GMWB contract terms, withdrawal cash flows and nominal account mechanics."""

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .market_models import index_ratio


class AdmissibilityError(ValueError):
    """Withdrawal larger than the guarantee balance."""


class SequencingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ContractSpec:
    """Terms of a GMWB rider.

    ``event_dates`` are years from inception and include ``t_0 = 0``;
    ``withdrawals[n-1]`` is the contractual amount G_n due at ``event_dates[n]``.
    """

    event_dates: tuple
    withdrawals: tuple
    penalty: float = 0.1
    fee_ins: float = 0.0
    fee_mgmt: float = 0.0
    initial_wealth: float = 1.0
    initial_guarantee: float | None = None

    def __post_init__(self):
        dates = tuple(float(t) for t in self.event_dates)
        g = tuple(float(x) for x in self.withdrawals)
        object.__setattr__(self, "event_dates", dates)
        object.__setattr__(self, "withdrawals", g)
        if self.initial_guarantee is None:
            object.__setattr__(self, "initial_guarantee", float(self.initial_wealth))
        if len(dates) < 2 or dates[0] != 0.0 or np.any(np.diff(dates) <= 0):
            raise ValueError("event_dates must be strictly increasing and start at 0")
        if len(g) != len(dates) - 1:
            raise ValueError("need one contractual withdrawal per event date after t_0")
        if any(x < 0 for x in g):
            raise ValueError("contractual withdrawals must be nonnegative")
        if not 0.0 <= self.penalty <= 1.0:
            raise ValueError("penalty must lie in [0, 1]")
        if self.fee_ins < 0 or self.fee_mgmt < 0:
            raise ValueError("fee rates must be nonnegative")
        if not self.initial_wealth > 0:
            raise ValueError("initial wealth must be positive")
        if not 0 <= self.initial_guarantee:
            raise ValueError("initial guarantee must be nonnegative")
        if self.initial_guarantee > self.initial_wealth * (1 + 1e-12):
            raise ValueError("initial guarantee cannot exceed initial wealth")
        if self.initial_guarantee < self.initial_wealth * (1 - 1e-12):
            warnings.warn("initial guarantee below initial wealth", stacklevel=3)

    @classmethod
    def annual(cls, years, initial_wealth=1.0, penalty=0.1, **kw):
        """Equal annual withdrawals that return the initial investment over ``years``."""
        g = initial_wealth / years
        return cls(tuple(range(years + 1)), (g,) * years, penalty, initial_wealth=initial_wealth, **kw)

    @property
    def n_events(self):
        return len(self.event_dates) - 1

    @property
    def maturity(self):
        return self.event_dates[-1]

    @property
    def fee_total(self):
        return self.fee_ins + self.fee_mgmt

    def contractual(self, n):
        return self.withdrawals[n - 1]

    def with_guarantee(self, a0):
        return replace(self, initial_guarantee=a0)


@dataclass(frozen=True)
class AccountState:
    wealth: float
    guarantee: float
    time: float = 0.0

    def __post_init__(self):
        if self.wealth < 0 or self.guarantee < 0:
            raise ValueError("account balances must be nonnegative")


@dataclass(frozen=True)
class Withdrawal:
    gamma: float
    net_cash_flow: float
    date_index: int


def cash_flow(spec, state, gamma, n):
    """Net cash flow to the policyholder at event ``n``.

    Before maturity the excess over G_n is penalized at rate beta.  At maturity
    the balance ``max(W, A)`` is paid, with the penalty on ``A - G_N``.
    """
    if not 1 <= n <= spec.n_events:
        raise ValueError(f"event index {n} outside 1..{spec.n_events}")
    g = spec.contractual(n)
    if n == spec.n_events:
        return max(state.wealth, state.guarantee) - spec.penalty * max(state.guarantee - g, 0.0)
    if gamma < 0 or gamma > state.guarantee * (1 + 1e-12):
        raise AdmissibilityError(f"withdrawal {gamma} not in [0, A={state.guarantee}] at event {n}")
    return gamma - spec.penalty * max(gamma - g, 0.0)


def cash_flow_array(gamma, g, beta):
    """Vectorized pre-maturity cash flow ``gamma - beta * max(gamma - g, 0)``."""
    gamma = np.asarray(gamma, dtype=float)
    return gamma - beta * np.maximum(gamma - g, 0.0)


def terminal_cash_flow_array(wealth, guarantee, g, beta):
    return np.maximum(wealth, guarantee) - beta * np.maximum(guarantee - g, 0.0)


def apply_withdrawal(state, gamma):
    if gamma < 0 or gamma > state.guarantee * (1 + 1e-12):
        raise AdmissibilityError(f"withdrawal {gamma} exceeds guarantee {state.guarantee}")
    return AccountState(max(state.wealth - gamma, 0.0), max(state.guarantee - gamma, 0.0), state.time)


def evolve_wealth(spec, model, state, rf_t, rf_u):
    """Carry the wealth account from ``rf_t.time`` to ``rf_u.time`` along the index."""
    if not math.isclose(rf_t.time, state.time, abs_tol=1e-12):
        raise ValueError("account state and risk factor are at different times")
    dt = rf_u.time - rf_t.time
    if not dt > 0:
        raise ValueError("evolve_wealth needs rf_u.time > rf_t.time")
    if state.wealth == 0:
        return AccountState(0.0, state.guarantee, rf_u.time)
    ratio = float(index_ratio(model, rf_t.value, rf_u.value, dt))
    return AccountState(state.wealth * ratio * math.exp(-spec.fee_total * dt), state.guarantee, rf_u.time)


def terminal_liquidation(spec, state):
    if not math.isclose(state.time, spec.maturity, abs_tol=1e-9):
        raise SequencingError(f"liquidation at t={state.time} before maturity T={spec.maturity}")
    gamma = max(state.wealth, state.guarantee)
    return Withdrawal(gamma, cash_flow(spec, state, gamma, spec.n_events), spec.n_events)


def check_static_schedule(spec, gammas):
    """Validate a static withdrawal schedule (one amount per pre-maturity date)."""
    gammas = tuple(float(x) for x in gammas)
    if len(gammas) != spec.n_events - 1:
        raise ValueError(f"static schedule needs {spec.n_events - 1} amounts, got {len(gammas)}")
    a = spec.initial_guarantee
    for n, gm in enumerate(gammas, start=1):
        if gm < 0 or gm > a * (1 + 1e-12):
            raise AdmissibilityError(
                f"static withdrawal {gm} at event {n} (t={spec.event_dates[n]}) exceeds guarantee {a}"
            )
        a = max(a - gm, 0.0)
    return gammas

