"""Flat ``key = value`` configuration for the command-line engine.

Blank lines and ``#`` comments are ignored.  Every key has a default except
the data path (needed by ``estimate`` and ``backtest``) and the contract
terms ``initial_wealth`` and ``years`` (needed by ``price`` and ``backtest``).
"""

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    pass


def _date(s):
    try:
        return str(np.datetime64(s.strip(), "D"))
    except ValueError:
        raise ConfigError(f"not an ISO date: {s!r}") from None


def _choice(*options):
    def parse(s):
        s = s.strip()
        if s not in options:
            raise ConfigError(f"expected one of {', '.join(options)}, got {s!r}")
        return s
    return parse


def _bool(s):
    s = s.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _opt_float(s):
    s = s.strip()
    return None if s.lower() in ("", "none", "auto") else float(s)


@dataclass(frozen=True)
class EngineConfig:
    # data and windows
    data_path: str | None = None
    data_format: str = "prediscounted"
    estimation_start: str = "1871-01-01"
    estimation_end: str = "1988-01-31"
    contract_start: str = "1988-02-01"
    contract_end: str = "2018-02-28"
    # contract terms
    initial_wealth: float | None = None
    years: int | None = None
    initial_guarantee: float | None = None
    penalty: float = 0.1
    fee_ins: float = 0.0
    fee_mgmt: float = 0.0
    # pricing
    model: str = "BSM"
    measure: str = "auto"
    sigma: float | None = None
    alpha0: float | None = None
    eta: float | None = None
    y0: float | None = None
    compare_static: bool = True
    export_grids: str = "first"
    # grid
    n_wealth: int = 201
    n_guarantee: int = 121
    n_risk: int = 200
    wealth_span: float = 1e3
    risk_min: float = 0.01
    risk_max: float = 20.0
    bsm_method: str = "exact"
    # validation
    mc_paths: int = 200_000
    oracle_outer: int = 2000
    oracle_inner: int = 256
    oracle_gammas: int = 1001
    tolerance_rel: float = 0.005
    tolerance_se: float = 3.0
    # run control
    out_dir: str = "out"
    seed: int = 0
    scenario: str = "all"
    source: str | None = field(default=None, compare=False)

    def contract_terms_given(self):
        return self.initial_wealth is not None and self.years is not None

    def grid_options(self):
        return dict(
            n_wealth=self.n_wealth, n_guarantee=self.n_guarantee, n_risk=self.n_risk,
            wealth_span=self.wealth_span, risk_range=(self.risk_min, self.risk_max),
        )


_PARSERS = {
    "data_path": lambda s: s.strip() or None,
    "data_format": _choice("prediscounted", "raw"),
    "estimation_start": _date,
    "estimation_end": _date,
    "contract_start": _date,
    "contract_end": _date,
    "initial_wealth": float,
    "years": int,
    "initial_guarantee": _opt_float,
    "penalty": float,
    "fee_ins": float,
    "fee_mgmt": float,
    "model": _choice("BSM", "MMM"),
    "measure": _choice("auto", "real-world", "risk-neutral"),
    "sigma": _opt_float,
    "alpha0": _opt_float,
    "eta": _opt_float,
    "y0": _opt_float,
    "compare_static": _bool,
    "export_grids": _choice("none", "first", "all"),
    "n_wealth": int,
    "n_guarantee": int,
    "n_risk": int,
    "wealth_span": float,
    "risk_min": float,
    "risk_max": float,
    "bsm_method": _choice("exact", "gauss-hermite"),
    "mc_paths": int,
    "oracle_outer": int,
    "oracle_inner": int,
    "oracle_gammas": int,
    "tolerance_rel": float,
    "tolerance_se": float,
    "out_dir": str.strip,
    "seed": int,
    "scenario": str.strip,
}

# (low, high) inclusive ranges for numeric keys
_RANGES = {
    "initial_wealth": (0, math.inf),
    "years": (1, 1000),
    "initial_guarantee": (0, math.inf),
    "penalty": (0, 1),
    "fee_ins": (0, 1),
    "fee_mgmt": (0, 1),
    "sigma": (0, 10),
    "alpha0": (0, math.inf),
    "eta": (0, 10),
    "y0": (0, math.inf),
    "n_wealth": (3, 100_000),
    "n_guarantee": (1, 100_000),
    "n_risk": (3, 100_000),
    "wealth_span": (1, math.inf),
    "risk_min": (0, math.inf),
    "risk_max": (0, math.inf),
    "mc_paths": (2, 10**9),
    "oracle_outer": (2, 10**8),
    "oracle_inner": (1, 10**8),
    "oracle_gammas": (2, 10**6),
    "tolerance_rel": (0, 1),
    "tolerance_se": (0, 100),
    "seed": (0, 2**63 - 1),
}


def parse_config(text, source=None, base_dir=None):
    """Parse configuration text into an :class:`EngineConfig`."""
    values = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source or 'config'}:{line_no}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"{source or 'config'}:{line_no}: unknown key {key!r}")
        try:
            values[key] = _PARSERS[key](value)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"{source or 'config'}:{line_no}: {key}: {exc}") from None
    if values.get("data_path") and base_dir is not None and not Path(values["data_path"]).is_absolute():
        values["data_path"] = str(Path(base_dir) / values["data_path"])
    cfg = EngineConfig(source=source, **values)
    check_config(cfg)
    return cfg


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), source=str(path), base_dir=path.parent)


def check_config(cfg):
    for f in fields(cfg):
        lim = _RANGES.get(f.name)
        v = getattr(cfg, f.name)
        if lim is None or v is None:
            continue
        lo, hi = lim
        if not (lo <= v <= hi) or (isinstance(v, float) and math.isnan(v)):
            raise ConfigError(f"{f.name}={v} outside [{lo}, {hi}]")
    if cfg.initial_wealth is not None and not cfg.initial_wealth > 0:
        raise ConfigError("initial_wealth must be positive")
    if cfg.risk_min >= cfg.risk_max or cfg.risk_min <= 0:
        raise ConfigError("need 0 < risk_min < risk_max")
    for a, b in (("estimation_start", "estimation_end"), ("contract_start", "contract_end")):
        if getattr(cfg, a) >= getattr(cfg, b):
            raise ConfigError(f"{a} must precede {b}")
    if cfg.estimation_end >= cfg.contract_start:
        raise ConfigError("estimation window must end before the contract window starts")
    return cfg


def override(cfg, **kw):
    """Copy with command-line overrides applied (``None`` values are skipped)."""
    kw = {k: v for k, v in kw.items() if v is not None}
    return check_config(replace(cfg, **kw)) if kw else cfg
