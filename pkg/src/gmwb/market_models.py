"""Equity index models: Black-Scholes and the minimal market model (MMM).

All prices are in units of the savings account.  Under MMM the Markov risk
factor is the normalized index ``Y(t) = eta S(t) / (alpha0 exp(eta t))`` whose
transition law is a scaled noncentral chi-squared with four degrees of
freedom.  Under BSM it is the index level itself.

In both models the pricing kernel over ``(t, u)`` is ``S(t) / S(u)``.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .series import PriceSeries
from .special import ncx2_dim0_pdf, ncx2_pdf


class ModelKind(enum.Enum):
    BSM = "BSM"
    MMM = "MMM"


class EstimationError(ValueError):
    pass


class SingularDiscountError(ZeroDivisionError):
    """Discount factor requested at a zero destination index level."""


@dataclass(frozen=True)
class MmmParams:
    alpha0: float
    eta: float

    kind = ModelKind.MMM

    def __post_init__(self):
        if not (self.alpha0 > 0 and self.eta > 0):
            raise ValueError(f"MMM needs alpha0 > 0 and eta > 0, got {self.alpha0}, {self.eta}")


@dataclass(frozen=True)
class BsmParams:
    # sigma == 0 is allowed as the deterministic limit (e.g. fitted to a noise-free series)
    sigma: float

    kind = ModelKind.BSM

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"BSM needs sigma >= 0, got {self.sigma}")


ModelParams = MmmParams | BsmParams


@dataclass(frozen=True)
class RiskFactorState:
    """Markov risk factor: normalized index Y for MMM, discounted index S for BSM."""

    kind: ModelKind
    value: float
    time: float

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError("risk factor value must be nonnegative")


def _horizon(t, u):
    if not u > t:
        raise ValueError(f"transition needs u > t, got t={t}, u={u}")
    return u - t


class MmmTransition:
    """Law of ``Y(u)`` given ``Y(t) = y_t``: ``c * chi2_4(zeta)``."""

    def __init__(self, params, y_t, t, u):
        if y_t < 0:
            raise ValueError("y_t must be nonnegative")
        self.params = params
        self.y_t = float(y_t)
        self.horizon = _horizon(t, u)
        self.decay = math.exp(-params.eta * self.horizon)
        self.scale = -math.expm1(-params.eta * self.horizon) / 4.0
        self.zeta = self.decay * self.y_t / self.scale
        self.support = (0.0, math.inf)

    @property
    def mean(self):
        return 1.0 - self.decay + self.decay * self.y_t

    @property
    def variance(self):
        return self.scale**2 * (8.0 + 4.0 * self.zeta)

    def density(self, y):
        y = np.asarray(y, dtype=float)
        return ncx2_pdf(self.zeta, y / self.scale) / self.scale

    def _dist(self):
        if self.zeta == 0:
            return stats.chi2(4)
        return stats.ncx2(4, self.zeta)

    def cdf(self, y):
        return self._dist().cdf(np.asarray(y, dtype=float) / self.scale)

    def sf(self, y):
        return self._dist().sf(np.asarray(y, dtype=float) / self.scale)

    def ppf(self, q):
        return self._dist().ppf(q) * self.scale

    # -- measure weighted by the pricing kernel Y(t) exp(-eta D) / Y(u) ----------
    def discounted_density(self, y):
        """``sdf * density``; finite at ``y -> 0`` (zero-dimensional chi-squared)."""
        y = np.asarray(y, dtype=float)
        return ncx2_dim0_pdf(self.zeta, y / self.scale) / self.scale

    @property
    def discounted_mass(self):
        """``E_t[S(t)/S(u)] = 1 - exp(-zeta/2)`` (< 1: strict supermartingale)."""
        return -math.expm1(-0.5 * self.zeta)

    def discounted_sf(self, y):
        """``E_t[S(t)/S(u); Y(u) > y]`` via the order-0 Marcum Q function."""
        x = np.asarray(y, dtype=float) / self.scale
        if self.zeta == 0:
            return np.zeros_like(x)
        s = np.sqrt(self.zeta * x)
        q1 = stats.ncx2.sf(x, 2, self.zeta)
        out = q1 - np.exp(-0.5 * (self.zeta + x) + s) * special.i0e(s)
        return np.clip(out, 0.0, None)

    def discounted_cdf(self, y):
        return np.clip(self.discounted_mass - self.discounted_sf(y), 0.0, None)

    def sample(self, rng, size):
        z = rng.standard_normal((4,) + tuple(np.atleast_1d(size)))
        chi = (z[0] + math.sqrt(self.zeta)) ** 2 + (z[1:] ** 2).sum(axis=0)
        return self.scale * chi


class BsmTransition:
    """Law of ``S(u) = s_t exp(sigma^2 D / 2 + sigma sqrt(D) Z)`` under the real-world measure."""

    def __init__(self, params, s_t, t, u):
        if not s_t > 0:
            raise ValueError("s_t must be positive")
        self.params = params
        self.s_t = float(s_t)
        self.horizon = _horizon(t, u)
        self.log_var = params.sigma**2 * self.horizon
        self.support = (0.0, math.inf)

    @property
    def mean(self):
        return self.s_t * math.exp(self.log_var)

    @property
    def median(self):
        return self.s_t * math.exp(0.5 * self.log_var)

    @property
    def variance(self):
        return self.s_t**2 * math.exp(2 * self.log_var) * math.expm1(self.log_var)

    def density(self, s):
        s = np.asarray(s, dtype=float)
        sd = math.sqrt(self.log_var)
        return stats.lognorm.pdf(s, sd, scale=self.median)

    def sample(self, rng, size):
        z = rng.standard_normal(size)
        return self.s_t * np.exp(0.5 * self.log_var + math.sqrt(self.log_var) * z)


TransitionLaw = MmmTransition | BsmTransition


def mmm_transition(params, y_t, t, u):
    return MmmTransition(params, y_t, t, u)


def bsm_transition(params, s_t, t, u):
    return BsmTransition(params, s_t, t, u)


def transition(model, value, t, u):
    if model.kind is ModelKind.MMM:
        return MmmTransition(model, value, t, u)
    return BsmTransition(model, value, t, u)


def sdf(model, state_t, state_u):
    """Realized discount factor ``S(t)/S(u)`` expressed in the model's risk factor."""
    dt = state_u.time - state_t.time
    if dt < 0:
        raise ValueError("discount factor needs state_u.time >= state_t.time")
    if state_u.value == 0:
        raise SingularDiscountError("discount factor is singular at a zero index level")
    ratio = state_t.value / state_u.value
    if model.kind is ModelKind.MMM:
        return math.exp(-model.eta * dt) * ratio
    return ratio


def index_ratio(model, value_t, value_u, dt):
    """``S(u)/S(t)`` from risk-factor values (vectorized)."""
    value_t = np.asarray(value_t, dtype=float)
    value_u = np.asarray(value_u, dtype=float)
    if model.kind is ModelKind.MMM:
        return np.exp(model.eta * dt) * value_u / value_t
    return value_u / value_t


def mmm_index_level(params, y, t):
    """Discounted index ``S(t) = alpha0 exp(eta t) Y(t) / eta``."""
    return params.alpha0 * np.exp(params.eta * np.asarray(t)) * np.asarray(y) / params.eta


def mmm_normalize(params, s, t):
    """Normalized index ``Y(t) = eta S(t) / (alpha0 exp(eta t))``."""
    return params.eta * np.asarray(s) / (params.alpha0 * np.exp(params.eta * np.asarray(t)))


# -- estimation ---------------------------------------------------------------


@dataclass(frozen=True)
class MmmFit:
    params: MmmParams
    intercept: float
    normalized: np.ndarray
    origin: np.datetime64 | None = None

    def normalize(self, levels, times):
        return mmm_normalize(self.params, levels, times)


def _check_series(series):
    if len(series) < 3:
        raise EstimationError(f"need at least 3 observations, got {len(series)}")
    if np.any(series.levels <= 0):
        raise EstimationError("nonpositive index level")


def estimate_mmm(series: PriceSeries) -> MmmFit:
    """Fit the exponential trend ``log S = c + eta t`` by least squares."""
    _check_series(series)
    t = series.times - series.times[0]
    eta, c = np.polyfit(t, np.log(series.levels), 1)
    if not eta > 0:
        raise EstimationError(f"fitted growth rate eta={eta:.6g} is not positive")
    params = MmmParams(alpha0=float(eta * math.exp(c)), eta=float(eta))
    origin = series.dates[0] if series.dates is not None else None
    return MmmFit(params, float(c), mmm_normalize(params, series.levels, t), origin)


def estimate_bsm(series: PriceSeries) -> BsmParams:
    """Gaussian maximum likelihood volatility with a fitted drift.

    Each log-return ``r_i`` over ``dt_i`` years contributes
    ``(r_i - m dt_i)^2 / dt_i`` with ``m = sum(r) / sum(dt)``; the variance
    denominator is the number of returns.
    """
    _check_series(series)
    r = np.diff(np.log(series.levels))
    dt = np.diff(series.times)
    m = r.sum() / dt.sum()
    var = np.mean((r - m * dt) ** 2 / dt)
    return BsmParams(sigma=float(math.sqrt(var)))


# -- simulation ---------------------------------------------------------------


def simulate_paths(model, initial: RiskFactorState, dates, n_paths, seed):
    """Exact-law sample paths of the risk factor.

    Returns an array of shape ``(n_paths, len(dates) + 1)``; column 0 is the
    initial value.
    """
    dates = np.asarray(dates, dtype=float)
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    grid = np.concatenate([[initial.time], dates])
    if np.any(np.diff(grid) <= 0):
        raise ValueError("dates must be strictly increasing from the initial time")
    rng = np.random.default_rng(seed)
    out = np.empty((n_paths, grid.size))
    out[:, 0] = initial.value
    for k, dt in enumerate(np.diff(grid), start=1):
        prev = out[:, k - 1]
        if model.kind is ModelKind.MMM:
            decay = math.exp(-model.eta * dt)
            scale = -math.expm1(-model.eta * dt) / 4.0
            zeta = decay * prev / scale
            z = rng.standard_normal((4, n_paths))
            out[:, k] = scale * ((z[0] + np.sqrt(zeta)) ** 2 + (z[1:] ** 2).sum(axis=0))
        else:
            v = model.sigma**2 * dt
            out[:, k] = prev * np.exp(0.5 * v + math.sqrt(v) * rng.standard_normal(n_paths))
    return out
