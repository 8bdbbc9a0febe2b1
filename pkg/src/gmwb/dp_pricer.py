"""Backward induction for the GMWB value function on a (risk factor, W, A) lattice.

The value function is stepped back from maturity one event date at a time:

* at an event date the withdrawal is chosen (dynamic) or fixed (static) and
  the cash flow is added to the post-withdrawal value;
* between event dates the value is the conditional expectation of the
  discounted next pre-withdrawal value, computed with a linear transition
  operator built from the model's transition law and pricing kernel.

Under BSM the transition of the wealth ratio does not depend on the index
level, so the risk-factor axis has length one.  Under MMM the normalized
index ``Y`` is a genuine state variable.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from numpy.polynomial.hermite_e import hermegauss
from scipy import sparse
from scipy.special import ndtr

from .contract import AdmissibilityError, cash_flow_array, check_static_schedule, terminal_cash_flow_array
from .market_models import MmmTransition, ModelKind

log = logging.getLogger(__name__)


class QuadratureTruncationError(RuntimeError):
    """Quadrature weights miss more probability mass than tolerated."""


# -- strategies ---------------------------------------------------------------


@dataclass(frozen=True)
class Dynamic:
    """Value-maximizing withdrawals."""


@dataclass(frozen=True)
class Static:
    """Fixed withdrawal amounts, one per event date before maturity."""

    gammas: tuple


DYNAMIC = Dynamic()


# -- grids --------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Lattice and quadrature settings.

    ``risk_nodes`` is ``None`` for BSM.  The guarantee axis must be uniform so
    every candidate withdrawal lands the post-withdrawal guarantee on a node.
    ``bsm_method`` is ``"exact"`` (closed-form expectation of the piecewise
    linear interpolant) or ``"gauss-hermite"``.
    """

    wealth_nodes: np.ndarray
    guarantee_nodes: np.ndarray
    risk_nodes: np.ndarray | None = None
    bsm_method: str = "exact"
    gh_nodes: int = 64
    local_nodes: int = 400
    mass_tolerance: float = 1e-6
    prune: float = 1e-15

    def __post_init__(self):
        w = np.asarray(self.wealth_nodes, dtype=float)
        a = np.asarray(self.guarantee_nodes, dtype=float)
        object.__setattr__(self, "wealth_nodes", w)
        object.__setattr__(self, "guarantee_nodes", a)
        if w[0] != 0 or np.any(np.diff(w) <= 0):
            raise ValueError("wealth nodes must start at 0 and be strictly increasing")
        if a[0] != 0 or np.any(np.diff(a) <= 0):
            raise ValueError("guarantee nodes must start at 0 and be strictly increasing")
        if a.size > 1 and not np.allclose(np.diff(a), a[1] - a[0], rtol=1e-9, atol=0):
            raise ValueError("guarantee nodes must be uniformly spaced")
        if self.risk_nodes is not None:
            y = np.asarray(self.risk_nodes, dtype=float)
            if y[0] <= 0 or np.any(np.diff(y) <= 0):
                raise ValueError("risk-factor nodes must be positive and strictly increasing")
            object.__setattr__(self, "risk_nodes", y)
        if self.bsm_method not in ("exact", "gauss-hermite"):
            raise ValueError(f"unknown bsm_method {self.bsm_method!r}")

    @classmethod
    def default(
        cls,
        model,
        spec,
        y0=None,
        n_wealth=201,
        n_guarantee=121,
        n_risk=200,
        wealth_span=1e3,
        risk_range=(0.01, 20.0),
        **kw,
    ):
        w0, a0 = spec.initial_wealth, spec.initial_guarantee
        wealth = np.concatenate([[0.0], np.geomspace(w0 / wealth_span, w0 * wealth_span, n_wealth)])
        guarantee = np.linspace(0.0, a0, n_guarantee) if a0 > 0 else np.array([0.0])
        risk = None
        if model.kind is ModelKind.MMM:
            lo, hi = risk_range
            if y0 is not None:
                lo, hi = min(lo, y0 / 2), max(hi, 2 * y0)
            risk = np.geomspace(lo, hi, n_risk)
        return cls(wealth, guarantee, risk, **kw)

    def refined(self, factor=2):
        """Same bounds with (roughly) ``factor`` times as many intervals per axis."""

        def refine(x, geometric):
            n = (x.size - 1) * factor + 1
            return np.geomspace(x[0], x[-1], n) if geometric else np.linspace(x[0], x[-1], n)

        w = np.concatenate([[0.0], refine(self.wealth_nodes[1:], True)])
        a = refine(self.guarantee_nodes, False) if self.guarantee_nodes.size > 1 else self.guarantee_nodes
        y = refine(self.risk_nodes, True) if self.risk_nodes is not None else None
        return GridSpec(w, a, y, self.bsm_method, self.gh_nodes, self.local_nodes, self.mass_tolerance, self.prune)

    @property
    def shape(self):
        n_r = 1 if self.risk_nodes is None else self.risk_nodes.size
        return (n_r, self.wealth_nodes.size, self.guarantee_nodes.size)

    @property
    def guarantee_step(self):
        a = self.guarantee_nodes
        return a[1] - a[0] if a.size > 1 else math.inf


@dataclass(frozen=True)
class ValueGrid:
    """Value function (and withdrawal policy) at one event date.

    ``side`` is ``"pre"`` for V(t_n, .) and ``"post"`` for V(t_n+, .).
    """

    date_index: int
    time: float
    values: np.ndarray
    grid: GridSpec
    side: str
    # dynamic policy as guarantee-lattice steps (int16 keeps MMM grids small)
    policy_steps: np.ndarray | None = None
    static_gamma: float | None = None
    liquidation: bool = False

    @property
    def policy(self):
        """Withdrawal amount at every node (``None`` for post-withdrawal grids)."""
        g = self.grid
        if self.liquidation:
            w = g.wealth_nodes[:, None]
            a = g.guarantee_nodes[None, :]
            return np.broadcast_to(np.maximum(w, a), g.shape).copy()
        if self.static_gamma is not None:
            gm = np.minimum(self.static_gamma, g.guarantee_nodes)
            return np.broadcast_to(gm, g.shape).copy()
        if self.policy_steps is None:
            return None
        return self.policy_steps * (g.guarantee_step if g.guarantee_nodes.size > 1 else 0.0)


# -- interpolation ------------------------------------------------------------


def _bracket(nodes, x, extrapolate_upper=False):
    """Lower node index and linear weight of the upper node for each ``x``.

    Points outside the node range are clamped, except above the top node when
    ``extrapolate_upper`` is set (the last segment is extended linearly).
    Returns ``(lo, frac, clamped_mask)``.
    """
    x = np.asarray(x, dtype=float)
    if nodes.size == 1:
        return np.zeros(x.shape, dtype=int), np.zeros(x.shape), x != nodes[0]
    below = x < nodes[0]
    above = x > nodes[-1]
    xc = np.clip(x, nodes[0], np.inf if extrapolate_upper else nodes[-1])
    lo = np.clip(np.searchsorted(nodes, xc, side="right") - 1, 0, nodes.size - 2)
    frac = (xc - nodes[lo]) / (nodes[lo + 1] - nodes[lo])
    clamped = below | (above & (not extrapolate_upper))
    return lo, frac, clamped


def _interp_axis(values, axis, lo, frac):
    """Linear interpolation of ``values`` along ``axis`` at pre-bracketed points."""
    v0 = np.take(values, lo, axis=axis)
    if values.shape[axis] == 1:
        return v0
    v1 = np.take(values, lo + 1, axis=axis)
    return v0 + (v1 - v0) * frac


def interpolate_value(grid: ValueGrid, risk, wealth, guarantee, diagnostics=None, extrapolate_wealth=False):
    """Multilinear interpolation of a value grid at arbitrary (vectorized) states.

    States outside the lattice are clamped to its boundary; each clamped
    coordinate is counted in ``diagnostics`` when a ``Counter`` is passed.
    """
    g = grid.grid
    risk, wealth, guarantee = np.broadcast_arrays(
        np.asarray(risk, dtype=float), np.asarray(wealth, dtype=float), np.asarray(guarantee, dtype=float)
    )
    shape = wealth.shape
    r, w, a = risk.ravel(), wealth.ravel(), guarantee.ravel()
    v = grid.values
    if g.risk_nodes is None:
        rl, rf, rc = np.zeros(r.size, dtype=int), np.zeros(r.size), np.zeros(r.size, dtype=bool)
    else:
        rl, rf, rc = _bracket(g.risk_nodes, r)
    wl, wf, wc = _bracket(g.wealth_nodes, w, extrapolate_upper=extrapolate_wealth)
    al, af, ac = _bracket(g.guarantee_nodes, a)
    if diagnostics is not None:
        diagnostics["clamped_risk"] += int(rc.sum())
        diagnostics["clamped_wealth"] += int(wc.sum())
        diagnostics["clamped_guarantee"] += int(ac.sum())
        if rc.any() or wc.any() or ac.any():
            log.debug("interpolation clamped %d states", int((rc | wc | ac).sum()))
    nr, nw, na = v.shape
    out = np.zeros(r.size)
    for dr, cr in ((0, 1 - rf), (1, rf)):
        if nr == 1 and dr:
            continue
        cr = np.ones(r.size) if nr == 1 else cr
        for dw, cw in ((0, 1 - wf), (1, wf)):
            for da, ca in ((0, 1 - af), (1, af)):
                if na == 1 and da:
                    continue
                ca = np.ones(a.size) if na == 1 else ca
                out += cr * cw * ca * v[rl + dr * (nr > 1), wl + dw, al + da * (na > 1)]
    return out.reshape(shape) if shape else float(out[0])


# -- BSM transition -----------------------------------------------------------


def _slope_operator(nodes):
    """Matrix mapping node values to segment slopes (shape ``(M, M+1)``)."""
    m = nodes.size - 1
    h = np.diff(nodes)
    s = np.zeros((m, m + 1))
    s[np.arange(m), np.arange(m)] = -1.0 / h
    s[np.arange(m), np.arange(1, m + 1)] = 1.0 / h
    return s


def _option_terms(x, strikes, v, measure):
    """``E[D (x R - K)^+]`` and ``E[D (K - x R)^+]`` for lognormal R with log-variance ``v``.

    ``real-world``: log R ~ N(v/2, v) with kernel D = 1/R.
    ``risk-neutral``: log R ~ N(-v/2, v) with D = 1.  Both give the same
    numbers, but are evaluated from their own formulas so they can be compared.
    """
    x = x[:, None]
    k = strikes[None, :]
    sd = math.sqrt(v)
    with np.errstate(divide="ignore"):
        lk = np.log(k / x)
    if measure == "real-world":
        # P(R > K/x) and E[1/R; R > K/x] under the real-world law
        hi, lo = (0.5 * v - lk) / sd, (-0.5 * v - lk) / sd
        return x * ndtr(hi) - k * ndtr(lo), k * ndtr(-lo) - x * ndtr(-hi)
    if measure == "risk-neutral":
        d1 = (-lk + 0.5 * v) / sd
        d2 = d1 - sd
        return x * ndtr(d1) - k * ndtr(d2), k * ndtr(-d2) - x * ndtr(-d1)
    raise ValueError(f"unknown measure {measure!r}")


def _interp_matrix(nodes, points, extrapolate_upper=True):
    lo, frac, _ = _bracket(nodes, points, extrapolate_upper=extrapolate_upper)
    m = np.zeros((points.size, nodes.size))
    rows = np.arange(points.size)
    np.add.at(m, (rows, lo), 1 - frac)
    np.add.at(m, (rows, lo + 1), frac)
    return m


def bsm_operator(wealth_nodes, sources, sigma, dt, fee=0.0, method="exact", measure="real-world", gh_nodes=64):
    """Linear map from next-date values on ``wealth_nodes`` to current values at ``sources``.

    Row ``j`` gives the weights of ``E_t[D(t,u) f(W_j R exp(-fee dt))]`` on the
    node values of ``f`` (linear interpolation, extended linearly above the
    top node).
    """
    nodes = np.asarray(wealth_nodes, dtype=float)
    x = np.asarray(sources, dtype=float) * math.exp(-fee * dt)
    v = sigma**2 * dt
    if v == 0:
        return _interp_matrix(nodes, x)
    if method == "gauss-hermite":
        z, w = hermegauss(gh_nodes)
        w = w / w.sum()
        sd = math.sqrt(v)
        if measure == "real-world":
            ratio = np.exp(0.5 * v + sd * z)
            weight = w / ratio
        elif measure == "risk-neutral":
            ratio = np.exp(-0.5 * v + sd * z)
            weight = w
        else:
            raise ValueError(f"unknown measure {measure!r}")
        pts = (x[:, None] * ratio[None, :]).ravel()
        m = _interp_matrix(nodes, pts).reshape(x.size, z.size, nodes.size)
        return np.einsum("k,jkm->jm", weight, m)
    # Around the segment holding x: f(y) = f_lin(y) + sum_{m above} k_m (y - y_m)^+
    # + sum_{m below} k_m (y_m - y)^+, with k_m the slope change at node m.  Only
    # out-of-the-money options appear, so nothing large cancels, and
    # E[D f_lin(xR)] = f_lin(x) because E[D] = E[D R] = 1.
    slopes = _slope_operator(nodes)
    kinks = slopes[1:] - slopes[:-1]  # row i belongs to node i + 1
    op = _interp_matrix(nodes, x)
    lo, _, _ = _bracket(nodes, x, extrapolate_upper=True)
    pos = x > 0
    if pos.any():
        strikes = nodes[1:-1]
        calls, puts = _option_terms(x[pos], strikes, v, measure)
        above = np.arange(1, nodes.size - 1)[None, :] > lo[pos][:, None]
        op[pos] += np.where(above, calls, puts) @ kinks
    return op


# -- MMM transition -----------------------------------------------------------


def _log_trapezoid_weights(y):
    """Trapezoid weights in ``log y`` expressed as ``dy`` weights (positive nodes)."""
    h = np.diff(np.log(y))
    w = np.zeros_like(y)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w * y


@dataclass(frozen=True)
class MmmKernel:
    """Discounted one-step weights from ``y_src`` to the nodes ``y_dst``.

    ``omega[i, q]`` are trapezoid weights on the interior of the node range.
    The discounted mass beyond either end node, ``tail_mass[i, 0 | 1]``, is lumped
    onto that end node in the risk-factor coordinate but carries its wealth
    image at ``tail_level[i, .]``, the level with
    ``E[D; tail] * e^{eta dt} tail_level / y_src = P(tail)``.  Because
    ``D * S(u)/S(t) = 1`` pathwise, this keeps the wealth identity exact for
    values linear in W.
    """

    omega: np.ndarray
    tail_mass: np.ndarray
    tail_level: np.ndarray

    def total(self):
        return self.omega.sum(axis=1) + self.tail_mass.sum(axis=1)


def _match_moments(raw, y, mass, moment):
    """Tilt ``raw`` by ``1 + a + b (y - mean)`` to hit ``sum = mass`` and ``sum * y = moment``.

    Falls back to plain rescaling when the tilt would make a weight negative
    or the weights sit on a single node.
    """
    s0 = raw.sum()
    mean = (raw * y).sum() / s0
    var = (raw * (y - mean) ** 2).sum() / s0
    a = mass / s0
    if var <= 0:
        return raw * a
    b = (moment - a * s0 * mean) / (s0 * var)
    tilt = a + b * (y - mean)
    if np.any(tilt[raw > 0] < 0):
        return raw * a
    return raw * tilt


def mmm_kernel_weights(params, y_src, y_dst, dt, diagnostics=None, tolerance=None):
    """Discounted transition weights for ``E[S(t)/S(u) g(Y(u)) | Y(t) = y_src[i]]``.

    Trapezoid rule in ``log y`` on the discounted density, with the interior
    weights tilted so that both the interior mass and the interior index
    moment are exact; the total then equals ``1 - exp(-zeta/2)`` and
    payoffs linear in wealth are integrated without error.  The raw trapezoid deficit is checked against
    ``tolerance`` only for sources whose law stays inside the node range
    (lumped tails below ``tolerance``); the others are counted as
    ``boundary_sources``.  Returns an :class:`MmmKernel`.
    """
    y_src = np.atleast_1d(np.asarray(y_src, dtype=float))
    h = _log_trapezoid_weights(y_dst)
    omega = np.zeros((y_src.size, y_dst.size))
    tail_mass = np.zeros((y_src.size, 2))
    tail_level = np.tile([y_dst[0], y_dst[-1]], (y_src.size, 1)).astype(float)
    worst = 0.0
    boundary = 0
    growth = math.exp(params.eta * dt)
    for i, y0 in enumerate(y_src):
        law = MmmTransition(params, y0, 0.0, dt)
        raw = h * law.discounted_density(y_dst)
        lower = float(law.discounted_cdf(y_dst[0]))
        upper = float(law.discounted_sf(y_dst[-1]))
        interior = max(law.discounted_mass - lower - upper, 0.0)
        total = raw.sum()
        if tolerance is not None and lower + upper > tolerance:
            boundary += 1
        else:
            worst = max(worst, abs(total - interior))
        p_lower, p_upper = float(law.cdf(y_dst[0])), float(law.sf(y_dst[-1]))
        if total > 0:
            raw = _match_moments(raw, y_dst, interior, max(1.0 - p_lower - p_upper, 0.0) * y0 / growth)
        omega[i] = raw
        tail_mass[i] = lower, upper
        if lower > 0:
            tail_level[i, 0] = p_lower * y0 / (growth * lower)
        if upper > 0:
            tail_level[i, 1] = max(p_upper * y0 / (growth * upper), y_dst[-1])
    if diagnostics is not None:
        diagnostics["max_mass_deficit"] = max(diagnostics.get("max_mass_deficit", 0.0), worst)
        diagnostics["boundary_sources"] += boundary
    if tolerance is not None and worst > tolerance:
        raise QuadratureTruncationError(
            f"trapezoid mass deficit {worst:.3g} exceeds {tolerance:.3g} (dt={dt}); refine the risk-factor grid"
        )
    return MmmKernel(omega, tail_mass, tail_level)


def _kernel_pairs(kernel, y_dst):
    """Flatten a kernel into ``(src, dst, weight, destination level)`` entries."""
    n_src, n_dst = kernel.omega.shape
    src, dst = np.nonzero(kernel.omega > 0)
    wt = kernel.omega[src, dst]
    level = y_dst[dst]
    t_src, t_side = np.nonzero(kernel.tail_mass > 0)
    t_dst = np.where(t_side == 0, 0, n_dst - 1)
    return (
        np.concatenate([src, t_src]),
        np.concatenate([dst, t_dst]),
        np.concatenate([wt, kernel.tail_mass[t_src, t_side]]),
        np.concatenate([level, kernel.tail_level[t_src, t_side]]),
    )


def mmm_operator(params, grid, dt, fee=0.0, diagnostics=None):
    """Sparse operator on flattened ``(Y, W)`` node values for one step of length ``dt``."""
    y, w = grid.risk_nodes, grid.wealth_nodes
    ny, nw = y.size, w.size
    kernel = mmm_kernel_weights(params, y, y, dt, diagnostics, grid.mass_tolerance)
    src, dst, wt, level = _kernel_pairs(kernel, y)
    keep = wt > grid.prune * kernel.total()[src]
    src, dst, wt, level = src[keep], dst[keep], wt[keep], level[keep]
    growth = math.exp((params.eta - fee) * dt) * level / y[src]
    targets = w[None, :] * growth[:, None]  # (pairs, nw)
    lo, frac, _ = _bracket(w, targets, extrapolate_upper=True)
    rows = (src[:, None] * nw + np.arange(nw)[None, :]).ravel()
    base = np.repeat(dst * nw, nw)
    wt_rep = np.repeat(wt, nw)
    lo, frac = lo.ravel(), frac.ravel()
    data = np.concatenate([wt_rep * (1 - frac), wt_rep * frac])
    cols = np.concatenate([base + lo, base + lo + 1])
    op = sparse.csr_matrix((data, (np.concatenate([rows, rows]), cols)), shape=(ny * nw, ny * nw))
    op.sum_duplicates()
    return op


# -- pricing steps ------------------------------------------------------------


def terminal_condition(spec, grid):
    """Pre-withdrawal value at maturity: the liquidation cash flow at every node."""
    w = grid.wealth_nodes[:, None]
    a = grid.guarantee_nodes[None, :]
    flow = terminal_cash_flow_array(w, a, spec.contractual(spec.n_events), spec.penalty)
    values = np.broadcast_to(flow, grid.shape).copy()
    return ValueGrid(spec.n_events, spec.maturity, values, grid, "pre", liquidation=True)


def backward_step(model, spec, grid, value_next, n, measure="real-world", diagnostics=None):
    """Expectation step from the pre-withdrawal grid at ``t_n`` to ``t_{n-1}+``."""
    if value_next.side != "pre" or value_next.date_index != n:
        raise ValueError("backward_step needs the pre-withdrawal grid at t_n")
    dt = spec.event_dates[n] - spec.event_dates[n - 1]
    v = value_next.values
    if model.kind is ModelKind.BSM:
        op = bsm_operator(
            grid.wealth_nodes, grid.wealth_nodes, model.sigma, dt, spec.fee_total,
            grid.bsm_method, measure, grid.gh_nodes,
        )
        out = (op @ v[0])[None]
    else:
        if measure != "real-world":
            raise ValueError("MMM admits no equivalent risk-neutral measure")
        op = mmm_operator(model, grid, dt, spec.fee_total, diagnostics)
        nr, nw, na = v.shape
        out = (op @ v.reshape(nr * nw, na)).reshape(nr, nw, na)
    return ValueGrid(n - 1, spec.event_dates[n - 1], out, grid, "post")


def _wealth_after(wealth_nodes, gamma):
    """Bracketing of ``max(W - gamma, 0)`` on the wealth axis."""
    lo, frac, _ = _bracket(wealth_nodes, np.maximum(wealth_nodes - gamma, 0.0))
    return lo, frac


@njit(cache=True)
def _optimize_kernel(v, w_nodes, a_nodes, g, beta, tol, best, steps):
    nr, nw, na = v.shape
    for d in range(1, na):
        gamma = a_nodes[d]
        flow = gamma - beta * max(gamma - g, 0.0)
        for j in range(nw):
            x = max(w_nodes[j] - gamma, 0.0)
            lo = np.searchsorted(w_nodes, x, side="right") - 1
            lo = min(max(lo, 0), nw - 2)
            f = (x - w_nodes[lo]) / (w_nodes[lo + 1] - w_nodes[lo])
            for r in range(nr):
                for k in range(na - d):
                    c = v[r, lo, k] * (1.0 - f) + v[r, lo + 1, k] * f + flow
                    t = best[r, j, k + d]
                    if c > t + tol * max(abs(t), 1.0):
                        best[r, j, k + d] = c
                        steps[r, j, k + d] = d


def optimize_grid(spec, value_post, n, tie_tolerance=1e-12, diagnostics=None):
    """Dynamic withdrawal at every lattice node of event ``n`` (``0 < n < N``).

    Candidates are ``gamma = d * dA`` for ``d = 0..a`` (post-withdrawal guarantee
    on a node); this contains 0, the full balance and G_n snapped to the lattice.
    Ties go to the smallest gamma.
    """
    grid = value_post.grid
    v = np.ascontiguousarray(value_post.values)
    na = grid.guarantee_nodes.size
    g, beta = spec.contractual(n), spec.penalty
    best = v.copy()  # gamma = 0
    steps = np.zeros(v.shape, dtype=np.int16)
    if diagnostics is not None and na > 1:
        da = grid.guarantee_step
        snap = abs(round(g / da) * da - g)
        diagnostics["max_snap_distance"] = max(diagnostics.get("max_snap_distance", 0.0), snap)
    if na > 1:
        _optimize_kernel(v, grid.wealth_nodes, grid.guarantee_nodes, g, beta, tie_tolerance, best, steps)
    return ValueGrid(n, value_post.time, best, grid, "pre", policy_steps=steps)


def apply_static(spec, value_post, n, gamma):
    """Pre-withdrawal grid for a fixed withdrawal (capped at the node's guarantee)."""
    grid = value_post.grid
    w = grid.wealth_nodes[:, None]
    a = grid.guarantee_nodes[None, :]
    gm = np.minimum(gamma, a) + 0 * w
    w_post = np.maximum(w - gm, 0.0)
    a_post = np.maximum(a - gm, 0.0)
    nr = grid.shape[0]
    values = np.empty(grid.shape)
    for r in range(nr):
        risk = grid.risk_nodes[r] if grid.risk_nodes is not None else 0.0
        values[r] = interpolate_value(value_post, risk, w_post, a_post)
    values += cash_flow_array(gm, spec.contractual(n), spec.penalty)[None]
    return ValueGrid(n, value_post.time, values, grid, "pre", static_gamma=float(gamma))


def _candidates(grid, g, guarantee):
    """Sorted withdrawal candidates at guarantee balance ``guarantee``."""
    a_nodes = grid.guarantee_nodes
    lattice = guarantee - a_nodes[a_nodes <= guarantee * (1 + 1e-12)]
    cands = np.concatenate([[0.0, guarantee, min(g, guarantee)], lattice])
    return np.unique(np.clip(cands, 0.0, guarantee))


def optimize_withdrawal(spec, value_post, n, risk, wealth, guarantee, tie_tolerance=1e-12):
    """Best withdrawal at a single (possibly off-lattice) state.

    Returns ``(gamma, value_before_withdrawal)``.
    """
    cands = _candidates(value_post.grid, spec.contractual(n), guarantee)
    cont = interpolate_value(value_post, risk, np.maximum(wealth - cands, 0.0), guarantee - cands)
    total = cont + cash_flow_array(cands, spec.contractual(n), spec.penalty)
    top = total.max()
    k = int(np.argmax(total >= top - tie_tolerance * max(abs(top), 1.0)))
    return float(cands[k]), float(total[k])


# -- single-state evaluation --------------------------------------------------


def value_from_next(model, spec, pre_next: ValueGrid, t, risk, wealth, guarantee, measure="real-world"):
    """``V(t, X)`` for ``t`` before the event date of ``pre_next`` by direct quadrature.

    ``risk`` is a scalar; ``wealth`` and ``guarantee`` may be equal-shape arrays
    (they share one transition law).
    """
    grid = pre_next.grid
    dt = pre_next.time - t
    wealth, guarantee = np.broadcast_arrays(np.asarray(wealth, dtype=float), np.asarray(guarantee, dtype=float))
    scalar = wealth.ndim == 0
    w, a = wealth.ravel(), guarantee.ravel()
    if dt < -1e-12:
        raise ValueError("evaluation time after the grid date")
    if dt <= 1e-12:
        out = interpolate_value(pre_next, risk, w, a)
    elif model.kind is ModelKind.BSM:
        al, af, _ = _bracket(grid.guarantee_nodes, a)
        cols = _interp_axis(pre_next.values[0], 1, al, af[None, :])  # (nW, k)
        rows = bsm_operator(grid.wealth_nodes, w, model.sigma, dt, spec.fee_total, grid.bsm_method, measure, grid.gh_nodes)
        out = np.einsum("km,mk->k", rows, cols)
    else:
        law = MmmTransition(model, risk, 0.0, dt)
        lo_q = max(float(law.ppf(1e-12)), 1e-10)
        hi_q = max(float(law.ppf(1 - 1e-12)), 2 * lo_q)
        y_dst = np.geomspace(lo_q, hi_q, grid.local_nodes)
        kernel = mmm_kernel_weights(model, [risk], y_dst, dt)
        _, dst, wt, level = _kernel_pairs(kernel, y_dst)
        growth = math.exp((model.eta - spec.fee_total) * dt) * level / risk
        vals = interpolate_value(
            pre_next, y_dst[dst][None, :], w[:, None] * growth[None, :], a[:, None], extrapolate_wealth=True
        )
        out = vals @ wt
    return float(out[0]) if scalar else out.reshape(wealth.shape)


# -- full recursion -----------------------------------------------------------


@dataclass
class PricingResult:
    value: float
    model: object
    spec: object
    grid: GridSpec
    strategy: object
    pre: dict
    post: dict
    initial_risk: float
    diagnostics: Counter = field(default_factory=Counter)
    measure: str = "real-world"

    def value_at(self, t, risk, wealth, guarantee, side="post"):
        """Contract value at time ``t`` along a path.

        At an event date ``side="pre"`` returns the value before the
        withdrawal; otherwise the value of the remaining cash flows.
        """
        dates = self.spec.event_dates
        n = int(np.searchsorted(dates, t - 1e-12, side="left"))
        on_event = n < len(dates) and abs(dates[n] - t) <= 1e-9
        if on_event and (side == "pre" or n == self.spec.n_events):
            if n == 0:
                return self.value_at(t, risk, wealth, guarantee, side="post")
            return interpolate_value(self.pre[n], risk, wealth, guarantee)
        nxt = n + 1 if on_event else n
        return value_from_next(self.model, self.spec, self.pre[nxt], t, risk, wealth, guarantee, self.measure)

    def best_withdrawal(self, n, risk, wealth, guarantee, tie_tolerance=1e-12):
        """Value-maximizing withdrawal at event ``n < N`` from a realized state.

        Continuation values come from direct quadrature against the next
        pre-withdrawal grid; candidates are the same lattice withdrawals as on
        the grid plus ``{0, G_n, A}``.  Returns ``(gamma, value_before)``.
        """
        spec = self.spec
        if not 0 < n < spec.n_events:
            raise ValueError("withdrawal choice only exists at 0 < n < N")
        cands = _candidates(self.grid, spec.contractual(n), guarantee)
        cont = value_from_next(
            self.model, spec, self.pre[n + 1], spec.event_dates[n], risk,
            np.maximum(wealth - cands, 0.0), guarantee - cands, self.measure,
        )
        total = cont + cash_flow_array(cands, spec.contractual(n), spec.penalty)
        top = total.max()
        k = int(np.argmax(total >= top - tie_tolerance * max(abs(top), 1.0)))
        return float(cands[k]), float(total[k])


def price(model, spec, grid, strategy=DYNAMIC, initial_risk=1.0, measure="real-world", keep_post=False):
    """Run the recursion from maturity back to inception.

    ``initial_risk`` is Y(0) under MMM (ignored under BSM).  Returns a
    :class:`PricingResult` holding V(0, X(0)) and the pre-withdrawal grid of
    every event date; post-withdrawal grids are kept only with ``keep_post``.
    """
    n_ev = spec.n_events
    if isinstance(strategy, Static):
        gammas = check_static_schedule(spec, strategy.gammas)
    elif not isinstance(strategy, Dynamic):
        raise TypeError(f"unknown strategy {strategy!r}")
    diag = Counter()
    pre = {n_ev: terminal_condition(spec, grid)}
    post = {}
    for n in range(n_ev, 0, -1):
        if n < n_ev:
            if isinstance(strategy, Static):
                pre[n] = apply_static(spec, post[n], n, gammas[n - 1])
            else:
                pre[n] = optimize_grid(spec, post[n], n, diagnostics=diag)
        post[n - 1] = backward_step(model, spec, grid, pre[n], n, measure, diag)
        if not keep_post and n < n_ev:
            del post[n]
    y0 = initial_risk if model.kind is ModelKind.MMM else 0.0
    v0 = value_from_next(model, spec, pre[1], 0.0, y0, spec.initial_wealth, spec.initial_guarantee, measure)
    return PricingResult(v0, model, spec, grid, strategy, pre, post, y0, diag, measure)


def static_uniform(spec):
    """Static schedule withdrawing ``A0 / N`` at each pre-maturity date."""
    return Static((spec.initial_guarantee / spec.n_events,) * (spec.n_events - 1))


__all__ = [
    "AdmissibilityError",
    "DYNAMIC",
    "Dynamic",
    "GridSpec",
    "PricingResult",
    "QuadratureTruncationError",
    "Static",
    "ValueGrid",
    "backward_step",
    "bsm_operator",
    "interpolate_value",
    "mmm_kernel_weights",
    "mmm_operator",
    "optimize_grid",
    "optimize_withdrawal",
    "price",
    "static_uniform",
    "terminal_condition",
    "value_from_next",
]
