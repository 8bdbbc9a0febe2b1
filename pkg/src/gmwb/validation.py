"""Independent Monte Carlo checks of the lattice pricer.

``mc_static_price`` values a fixed withdrawal schedule by plain simulation.
``exhaustive_small_dp`` values the dynamic contract for very short contracts
by nested simulation with a brute-force search over a fine withdrawal grid;
it shares no code with the lattice recursion apart from the contract's cash
flow formulas.
"""

import math
from dataclasses import dataclass

import numpy as np

from .contract import ContractSpec, cash_flow_array, check_static_schedule, terminal_cash_flow_array
from .market_models import BsmParams, MmmParams, ModelKind


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_paths: int

    def within(self, value, rel=0.005, n_se=3.0):
        """``|value - mean| <= max(n_se * stderr, rel * |mean|)``."""
        return abs(value - self.mean) <= max(n_se * self.stderr, rel * abs(self.mean))


def _step(model, rng, x, dt):
    """One exact transition of the risk factor for every entry of ``x``.

    Returns ``(x_next, discount, ratio)`` with the pricing kernel
    ``S(t)/S(u)`` and the index ratio ``S(u)/S(t)``.
    """
    if model.kind is ModelKind.BSM:
        v = model.sigma**2 * dt
        ratio = np.exp(0.5 * v + math.sqrt(v) * rng.standard_normal(x.shape))
        return x * ratio, 1.0 / ratio, ratio
    decay = math.exp(-model.eta * dt)
    scale = -math.expm1(-model.eta * dt) / 4.0
    zeta = decay * x / scale
    z = rng.standard_normal((4,) + x.shape)
    y = scale * ((z[0] + np.sqrt(zeta)) ** 2 + (z[1:] ** 2).sum(axis=0))
    return y, decay * x / y, y / (decay * x)


def _estimate(samples):
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    mean = math.fsum(samples) / n
    sd = math.sqrt(math.fsum((samples - mean) ** 2) / (n - 1)) if n > 1 else math.inf
    return McEstimate(mean, sd / math.sqrt(n), n)


def mc_static_price(model, spec, gammas, n_paths=200_000, seed=0, initial_risk=1.0):
    """Monte Carlo value of the static schedule ``gammas`` (one per pre-maturity date)."""
    gammas = check_static_schedule(spec, gammas)
    rng = np.random.default_rng(seed)
    x = np.full(n_paths, initial_risk if model.kind is ModelKind.MMM else 1.0, dtype=float)
    wealth = np.full(n_paths, spec.initial_wealth)
    a = spec.initial_guarantee
    disc = np.ones(n_paths)
    total = np.zeros(n_paths)
    dates = spec.event_dates
    for n in range(1, spec.n_events + 1):
        dt = dates[n] - dates[n - 1]
        x, d, ratio = _step(model, rng, x, dt)
        disc = disc * d
        wealth = wealth * ratio * math.exp(-spec.fee_total * dt)
        g = spec.contractual(n)
        if n == spec.n_events:
            total += disc * terminal_cash_flow_array(wealth, a, g, spec.penalty)
        else:
            gm = gammas[n - 1]
            total += disc * float(cash_flow_array(gm, g, spec.penalty))
            wealth = np.maximum(wealth - gm, 0.0)
            a = max(a - gm, 0.0)
    return _estimate(total)


def _value_pre(model, spec, rng, n, x, w, a, n_gamma, n_inner, chunk):
    """Pre-withdrawal value at event ``n`` for each state in ``(x, w, a)`` (1-d arrays)."""
    g = spec.contractual(n)
    if n == spec.n_events:
        return terminal_cash_flow_array(w, a, g, spec.penalty)
    dt = spec.event_dates[n + 1] - spec.event_dates[n]
    out = np.empty(x.size)
    frac = np.linspace(0.0, 1.0, n_gamma)
    fee = math.exp(-spec.fee_total * dt)
    for lo in range(0, x.size, chunk):
        sl = slice(lo, lo + chunk)
        m = x[sl].size
        gm = a[sl, None] * frac[None, :]  # (m, n_gamma)
        wp = np.maximum(w[sl, None] - gm, 0.0)
        ap = a[sl, None] - gm
        # common inner draws across withdrawal candidates of the same state
        xs = np.repeat(x[sl], n_inner)
        x1, d, ratio = _step(model, rng, xs, dt)
        x1, d, ratio = (v.reshape(m, n_inner) for v in (x1, d, ratio))
        w1 = wp[:, :, None] * (ratio * fee)[:, None, :]  # (m, n_gamma, n_inner)
        a1 = np.broadcast_to(ap[:, :, None], w1.shape)
        x1b = np.broadcast_to(x1[:, None, :], w1.shape)
        nxt = _value_pre(model, spec, rng, n + 1, x1b.ravel(), w1.ravel(), np.ascontiguousarray(a1).ravel(),
                         n_gamma, n_inner, max(1, chunk // (n_gamma * n_inner)))
        cont = (nxt.reshape(w1.shape) * d[:, None, :]).mean(axis=2)
        out[sl] = (cash_flow_array(gm, g, spec.penalty) + cont).max(axis=1)
    return out


def exhaustive_small_dp(model, spec, n_outer=2000, n_inner=256, n_gamma=1001, seed=0, initial_risk=1.0,
                        chunk=16):
    """Dynamic contract value by nested simulation for N <= 3.

    Every decision searches ``n_gamma`` equally spaced withdrawals in
    ``[0, A]``; continuation values average ``n_inner`` fresh inner draws per
    state, shared by its candidates.  The cost grows like
    ``n_outer * (n_gamma * n_inner) ** (N - 1)``, so N = 3 needs small inner
    settings.  The max over a noisy continuation biases the estimate upward by
    roughly the inner standard error.
    """
    if spec.n_events > 3:
        raise ValueError("exhaustive search is limited to N <= 3 event dates")
    rng = np.random.default_rng(seed)
    x0 = initial_risk if model.kind is ModelKind.MMM else 1.0
    dt = spec.event_dates[1]
    x1, d, ratio = _step(model, rng, np.full(n_outer, x0, dtype=float), dt)
    w1 = spec.initial_wealth * ratio * math.exp(-spec.fee_total * dt)
    a1 = np.full(n_outer, spec.initial_guarantee)
    v1 = _value_pre(model, spec, rng, 1, x1, w1, a1, n_gamma, n_inner, chunk)
    return _estimate(d * v1)


# -- toy corpus ---------------------------------------------------------------


@dataclass(frozen=True)
class ToyInstance:
    name: str
    model: object
    spec: ContractSpec
    initial_risk: float
    seed: int


def _toy(name, model, dates, g, beta, seed, y0=1.0, **kw):
    spec = ContractSpec(dates, g, beta, **kw)
    return ToyInstance(name, model, spec, y0, seed)


TOY_CORPUS = (
    _toy("bsm-base", BsmParams(0.2), (0, 1, 2), (0.5, 0.5), 0.1, 101),
    _toy("bsm-lowvol", BsmParams(0.1), (0, 1, 2), (0.5, 0.5), 0.05, 102),
    _toy("bsm-highvol-fee", BsmParams(0.35), (0, 1, 2), (0.5, 0.5), 0.2, 103, fee_mgmt=0.01),
    _toy("bsm-full-penalty", BsmParams(0.2), (0, 1, 2), (0.5, 0.5), 1.0, 104),
    _toy("bsm-uneven", BsmParams(0.25), (0, 0.5, 2), (0.4, 0.6), 0.1, 105),
    _toy("mmm-base", MmmParams(0.05, 0.0435), (0, 1, 2), (0.5, 0.5), 0.1, 201),
    _toy("mmm-low-y", MmmParams(0.05, 0.0435), (0, 1, 2), (0.5, 0.5), 0.1, 202, y0=0.5),
    _toy("mmm-high-y", MmmParams(0.05, 0.0435), (0, 1, 2), (0.5, 0.5), 0.1, 203, y0=2.0),
    _toy("mmm-fast", MmmParams(0.05, 0.1), (0, 1, 2), (0.5, 0.5), 0.2, 204, fee_ins=0.005),
    _toy("mmm-long", MmmParams(0.05, 0.0435), (0, 2, 4), (0.5, 0.5), 0.1, 205, y0=0.8),
)
