"""Command-line engine: ``estimate``, ``price``, ``backtest`` and ``validate``.

Usage::

    gmwb COMMAND --config PATH [--out DIR] [--seed N] [--scenario NAME]

Exit codes: 0 success, 1 configuration error, 2 data error, 3 validation
failure.
"""

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .backtest import SCENARIOS, ContractTerms, ScenarioSpec, emit_report, prepare, run_scenario
from .config import ConfigError, EngineConfig, load_config, override
from .contract import ContractSpec
from .dp_pricer import DYNAMIC, GridSpec, QuadratureTruncationError, price, static_uniform
from .market_models import BsmParams, EstimationError, MmmParams, ModelKind, estimate_bsm, estimate_mmm
from .series import SeriesFormatError, load_series, year_fraction
from .validation import TOY_CORPUS, exhaustive_small_dp, mc_static_price

log = logging.getLogger("gmwb")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_VALIDATION = 0, 1, 2, 3


class DataError(RuntimeError):
    pass


# -- helpers ------------------------------------------------------------------


def _series(cfg):
    if not cfg.data_path:
        raise ConfigError("data_path is required for this command")
    path = Path(cfg.data_path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    try:
        return load_series(path, cfg.data_format)
    except SeriesFormatError as exc:
        raise DataError(str(exc)) from None


def _estimation(cfg, series):
    est = series.window(cfg.estimation_start, cfg.estimation_end, before=cfg.contract_start)
    try:
        return est, estimate_mmm(est), estimate_bsm(est)
    except EstimationError as exc:
        raise DataError(f"estimation on {cfg.estimation_start}..{cfg.estimation_end}: {exc}") from None


def _write_rows(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _contract(cfg):
    if not cfg.contract_terms_given():
        raise ConfigError("contract terms initial_wealth and years are required")
    extra = {} if cfg.initial_guarantee is None else {"initial_guarantee": cfg.initial_guarantee}
    try:
        return ContractSpec.annual(
            cfg.years, cfg.initial_wealth, cfg.penalty, fee_ins=cfg.fee_ins, fee_mgmt=cfg.fee_mgmt, **extra
        )
    except ValueError as exc:
        raise ConfigError(f"contract terms: {exc}") from None


# -- commands -----------------------------------------------------------------


def cmd_estimate(cfg):
    """Fit both models on the estimation window and write ``params.csv``."""
    series = _series(cfg)
    est, fit, bsm = _estimation(cfg, series)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = fit.params
    _write_rows(out / "params.csv", ("model", "alpha0", "eta", "sigma"), [
        ("MMM", repr(p.alpha0), repr(p.eta), ""),
        ("BSM", "", "", repr(bsm.sigma)),
    ])
    print(f"estimation window {est.dates[0]} .. {est.dates[-1]} ({len(est)} observations)")
    print(f"MMM  alpha0 = {p.alpha0:.6g}  eta = {p.eta:.6g}")
    print(f"BSM  sigma  = {bsm.sigma:.6g}")
    return {"alpha0": p.alpha0, "eta": p.eta, "sigma": bsm.sigma}


def _pricing_model(cfg):
    """Model parameters, taken from the config when given, else estimated; plus Y(0)."""
    kind = ModelKind(cfg.model)
    if kind is ModelKind.BSM and cfg.sigma is not None:
        return BsmParams(cfg.sigma), 1.0
    if kind is ModelKind.MMM and cfg.alpha0 is not None and cfg.eta is not None:
        return MmmParams(cfg.alpha0, cfg.eta), (1.0 if cfg.y0 is None else cfg.y0)
    series = _series(cfg)
    est, fit, bsm = _estimation(cfg, series)
    if kind is ModelKind.BSM:
        return bsm, 1.0
    if cfg.y0 is not None:
        return fit.params, cfg.y0
    start = series.index_of(cfg.contract_start)
    t = float(year_fraction(est.dates[0], series.dates[start]))
    return fit.params, float(fit.normalize(series.levels[start], t))


def _export_grid(path, vg):
    g = vg.grid
    r = g.risk_nodes if g.risk_nodes is not None else np.array([np.nan])
    rr, ww, aa = np.meshgrid(r, g.wealth_nodes, g.guarantee_nodes, indexing="ij")
    pol = vg.policy
    pol = np.full(vg.values.shape, np.nan) if pol is None else pol
    table = np.column_stack([rr.ravel(), ww.ravel(), aa.ravel(), vg.values.ravel(), pol.ravel()])
    np.savetxt(path, table, delimiter=",", header="risk,wealth,guarantee,value,policy", comments="", fmt="%.17g")


def cmd_price(cfg):
    """Price the contract; write ``price.csv`` and the requested value grids."""
    spec = _contract(cfg)
    model, y0 = _pricing_model(cfg)
    measure = cfg.measure
    if measure == "auto":
        measure = "risk-neutral" if model.kind is ModelKind.BSM else "real-world"
    try:
        grid = GridSpec.default(model, spec, y0, bsm_method=cfg.bsm_method, **cfg.grid_options())
        t0 = time.perf_counter()
        dyn = price(model, spec, grid, DYNAMIC, y0, measure)
        elapsed = time.perf_counter() - t0
        stat = price(model, spec, grid, static_uniform(spec), y0, measure) if cfg.compare_static else None
    except ValueError as exc:
        raise ConfigError(f"pricing setup: {exc}") from None
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    v_static = stat.value if stat is not None else float("nan")
    ordered = stat is None or dyn.value >= stat.value * (1 - 1e-9)
    _write_rows(out / "price.csv", ("model", "measure", "V0", "V0_static", "dynamic_ge_static", "seconds"), [
        (model.kind.value, measure, repr(dyn.value), repr(v_static), str(ordered).lower(), f"{elapsed:.3f}"),
    ])
    if cfg.export_grids != "none":
        events = sorted(dyn.pre) if cfg.export_grids == "all" else [min(dyn.pre)]
        for n in events:
            _export_grid(out / f"grid_pre_{n:03d}.csv", dyn.pre[n])
    print(f"{model.kind.value} ({measure}) V0 = {dyn.value:.6f}" + (
        f"  static = {v_static:.6f}  dynamic >= static: {ordered}" if stat is not None else ""))
    return {"V0": dyn.value, "V0_static": v_static, "dynamic_ge_static": ordered}


def _selected_scenarios(cfg):
    names = {f"{p}/{h}": (p, h) for p, h in SCENARIOS}
    if cfg.scenario == "all":
        return list(names.values())
    key = cfg.scenario.replace("-", "/")
    if key not in names:
        raise ConfigError(f"unknown scenario {cfg.scenario!r}; choose from {', '.join(names)} or all")
    return [names[key]]


def cmd_backtest(cfg):
    """Run the provider/policyholder scenarios; one output directory per scenario."""
    if not cfg.contract_terms_given():
        raise ConfigError("contract terms initial_wealth and years are required")
    chosen = _selected_scenarios(cfg)
    series = _series(cfg)
    terms = ContractTerms(cfg.initial_wealth, cfg.years, cfg.penalty, cfg.fee_ins, cfg.fee_mgmt)
    est_window = (cfg.estimation_start, cfg.estimation_end)
    con_window = (cfg.contract_start, cfg.contract_end)
    try:
        context = prepare(series, est_window, con_window, terms, cfg.grid_options())
    except EstimationError as exc:
        raise DataError(str(exc)) from None
    except ValueError as exc:
        raise DataError(f"windows/data: {exc}") from None
    out = Path(cfg.out_dir)
    rows = []
    reports = []
    for prov, holder in chosen:
        rep = run_scenario(ScenarioSpec(prov, holder, est_window, con_window, terms), context=context)
        emit_report(rep, out / f"{prov}-{holder}")
        rows.append((rep.scenario, rep.provider, rep.policyholder, repr(rep.v0), repr(rep.terminal_value),
                     repr(rep.residual), repr(rep.total_withdrawals)))
        print(f"{rep.scenario:12s} V0 {rep.v0:14.2f}  residual {rep.residual:14.2f}  "
              f"withdrawals {rep.total_withdrawals:14.2f}")
        reports.append(rep)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "summary.csv",
                ("scenario", "provider", "policyholder", "V0", "terminal_value", "residual", "total_withdrawals"),
                rows)
    return reports


def cmd_validate(cfg):
    """Check the lattice pricer against the Monte Carlo oracles on the toy corpus."""
    rows, failures = [], []
    for inst in TOY_CORPUS:
        seed = inst.seed + cfg.seed
        grid = GridSpec.default(inst.model, inst.spec, inst.initial_risk, n_wealth=cfg.n_wealth,
                                n_guarantee=cfg.n_guarantee, n_risk=cfg.n_risk, wealth_span=cfg.wealth_span,
                                risk_range=(cfg.risk_min, cfg.risk_max))
        static = static_uniform(inst.spec)
        dp_static = price(inst.model, inst.spec, grid, static, inst.initial_risk).value
        dp_dyn = price(inst.model, inst.spec, grid, DYNAMIC, inst.initial_risk).value
        mc = mc_static_price(inst.model, inst.spec, static.gammas, cfg.mc_paths, seed, inst.initial_risk)
        ex = exhaustive_small_dp(inst.model, inst.spec, cfg.oracle_outer, cfg.oracle_inner, cfg.oracle_gammas,
                                 seed, inst.initial_risk)
        for kind, dp, est in (("static", dp_static, mc), ("dynamic", dp_dyn, ex)):
            ok = est.within(dp, rel=cfg.tolerance_rel, n_se=cfg.tolerance_se)
            tol = max(cfg.tolerance_se * est.stderr, cfg.tolerance_rel * abs(est.mean))
            rows.append((inst.name, kind, repr(dp), repr(est.mean), repr(est.stderr), repr(tol),
                         "pass" if ok else "fail"))
            print(f"{inst.name:18s} {kind:8s} dp {dp:.6f}  oracle {est.mean:.6f} +- {est.stderr:.6f}  "
                  f"{'pass' if ok else 'FAIL'}")
            if not ok:
                failures.append(f"{inst.name} ({kind})")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "validation.csv", ("instance", "strategy", "dp_value", "oracle_mean", "oracle_stderr",
                                         "tolerance", "result"), rows)
    if failures:
        print("validation failed: " + ", ".join(failures), file=sys.stderr)
    return failures


COMMANDS = {"estimate": cmd_estimate, "price": cmd_price, "backtest": cmd_backtest, "validate": cmd_validate}


def build_parser():
    p = argparse.ArgumentParser(prog="gmwb", description="GMWB pricing, hedging backtests and validation.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", metavar="PATH", help="key = value configuration file")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides out_dir)")
    p.add_argument("--seed", type=int, metavar="N", help="random seed (overrides seed)")
    p.add_argument("--scenario", metavar="NAME", help="single backtest scenario, e.g. BSM/MMM")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config) if args.config else EngineConfig()
        cfg = override(cfg, out_dir=args.out, seed=args.seed, scenario=args.scenario)
        if args.command == "backtest":
            _selected_scenarios(cfg)
        result = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QuadratureTruncationError as exc:
        print(f"config error: grid too coarse: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if args.command == "validate" and result:
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
