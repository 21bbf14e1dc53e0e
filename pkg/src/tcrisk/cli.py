"""End-to-end pipeline: ingest -> fit -> diagnose -> fit tail -> risk tables.

Subcommands:
  simulate    write a synthetic daily price file from given coefficients
  fit         fit the loss model and the residual tail, emit diagnostics
  risk-table  evaluate the risk measures on the (horizon, level) grid
  verify      run the Monte Carlo checks against every closed form

Exit codes: 0 ok, 1 usage, 2 data error, 3 fit failure, 4 verification
failure.  Every emitted number is reproducible from the input file and the
flags alone; a manifest JSON records both.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .evt import (
    StandardNormalNoise,
    TailModel,
    GpdParams,
    build_spliced_noise,
    fit_gpd,
    gpd_quantile,
    mean_excess_curve,
    select_threshold,
)
from .garch import GarchParams, filter as garch_filter, fit_qmle, forecast_sigma_next, simulate
from .oracle import axioms_check, composed_avar_sq_check, composed_var_check, inconsistency_demo
from .riskcore import RiskQuery, build_risk_table, one_day_var, sqrt_scaling, tc_var_aggregate
from .timeseries import ljung_box, load_prices, sample_acf, to_losses

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FIT, EXIT_VERIFY = 0, 1, 2, 3, 4

DEFAULT_ALPHAS = (0.975, 0.98, 0.985, 0.99)

_MEASURE_SLUGS = {
    "tcVaR": "tcvar",
    "tcAVaR-upper": "avar_upper",
    "tcAVaR-lower": "avar_lower",
    "tcAVaR-mc": "avar_mc",
    "tcAVaR-squared": "avar_squared",
}


class _FitFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; the contract wants 1
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _alphas(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad alpha list {text!r}") from exc
    if not vals or any(not 0.0 < a < 1.0 for a in vals):
        raise argparse.ArgumentTypeError("alphas must lie in (0, 1)")
    return vals


def _measures(text: str) -> tuple[str, ...]:
    vals = tuple(tok.strip() for tok in text.split(",") if tok.strip())
    for v in vals:
        if v not in _MEASURE_SLUGS:
            raise argparse.ArgumentTypeError(
                f"unknown measure {v!r}; choose from {sorted(_MEASURE_SLUGS)}"
            )
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tcrisk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"tcrisk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="write a synthetic daily price CSV")
    p_sim.add_argument("--a0", type=float, required=True)
    p_sim.add_argument("--a1", type=float, required=True)
    p_sim.add_argument("--b", type=float, required=True)
    p_sim.add_argument("--n", type=int, default=5000, help="number of losses")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--sigma0-sq", type=float, default=None,
                       help="initial variance (default: unconditional)")
    p_sim.add_argument("--start-price", type=float, default=100.0)
    p_sim.add_argument("--out-dir", type=Path, required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="fit the loss model and the residual tail")
    p_fit.add_argument("--input", type=Path, required=True)
    p_fit.add_argument("--column", default=1,
                       help="price column name or 0-based index (default 1); the file "
                            "format does not say whether prices are raw or adjusted "
                            "closes, so choose explicitly")
    p_fit.add_argument("--date-column", default=None)
    p_fit.add_argument("--delimiter", default=",")
    p_fit.add_argument("--threshold-q", type=float, default=0.92)
    p_fit.add_argument("--noise", choices=("spliced", "normal"), default="spliced")
    p_fit.add_argument("--init", choices=("unconditional", "sample-variance"),
                       default="unconditional")
    p_fit.add_argument("--init-fixed", type=float, default=None,
                       help="fixed initial variance (overrides --init)")
    p_fit.add_argument("--out-dir", type=Path, required=True)
    p_fit.set_defaults(func=cmd_fit)

    p_tab = sub.add_parser("risk-table", help="evaluate risk measures on the grid")
    p_tab.add_argument("--bundle", type=Path, required=True,
                       help="output directory of a previous fit")
    p_tab.add_argument("--alphas", type=_alphas, default=DEFAULT_ALPHAS)
    p_tab.add_argument("--m-max", type=int, default=10)
    p_tab.add_argument("--measures", type=_measures,
                       default=("tcVaR", "tcAVaR-upper", "tcAVaR-lower"))
    p_tab.add_argument("--sigma-next", type=float, default=None,
                       help="override the fitted one-step volatility")
    p_tab.add_argument("--seed", type=int, default=0)
    p_tab.add_argument("--draws", type=int, default=100_000)
    p_tab.add_argument("--format", choices=("csv", "json"), default="csv")
    p_tab.add_argument("--out-dir", type=Path, required=True)
    p_tab.set_defaults(func=cmd_risk_table)

    p_ver = sub.add_parser("verify", help="Monte Carlo checks of every closed form")
    p_ver.add_argument("--bundle", type=Path, required=True)
    p_ver.add_argument("--alphas", type=_alphas, default=(0.975, 0.99))
    p_ver.add_argument("--sigma-next", type=float, default=None)
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--draws", type=int, default=200_000)
    p_ver.add_argument("--out-dir", type=Path, required=True)
    p_ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.func(args)
    except _FitFailure as exc:
        print(f"fit failure: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    params = GarchParams(args.a0, args.a1, args.b)
    sigma0_sq = args.sigma0_sq
    if sigma0_sq is None:
        if not params.is_covariance_stationary:
            raise ValueError("a1 + b >= 1: pass --sigma0-sq explicitly")
        sigma0_sq = params.unconditional_variance
    losses, _ = simulate(params, StandardNormalNoise(), args.n, args.seed, sigma0_sq)
    prices = args.start_price * np.exp(-np.concatenate([[0.0], np.cumsum(losses)]))
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "prices.csv", "w") as fh:
        fh.write("date,price\n")
        for i, p in enumerate(prices):
            fh.write(f"{i},{p:.12g}\n")
    _write_manifest(out, "simulate", {
        "a0": args.a0, "a1": args.a1, "b": args.b, "n": args.n,
        "seed": args.seed, "sigma0_sq": sigma0_sq, "start_price": args.start_price,
    })
    print(f"wrote {args.n + 1} prices to {out / 'prices.csv'}")
    return EXIT_OK


def cmd_fit(args) -> int:
    prices = load_prices(args.input, column=_column(args.column),
                         delimiter=args.delimiter,
                         date_column=_column(args.date_column))
    losses = to_losses(prices)
    init = args.init_fixed if args.init_fixed is not None else args.init

    fit = fit_qmle(losses, init=init)
    if not fit.converged:
        raise _FitFailure(
            f"QMLE did not converge (best loglik {fit.loglik:.6f} at "
            f"a0={fit.params.a0:.3e}, a1={fit.params.a1:.4f}, b={fit.params.b:.4f})"
        )
    path = garch_filter(losses, fit.params, init)
    residuals = path.residuals
    sigma_next = forecast_sigma_next(losses, fit.params, init)

    u, fu = select_threshold(residuals, args.threshold_q)
    excesses = residuals[residuals > u] - u
    gfit = fit_gpd(excesses)
    if not gfit.converged:
        raise _FitFailure("GPD tail fit did not converge")
    tail = TailModel(u, fu, gfit.params)
    if args.noise == "spliced":
        build_spliced_noise(residuals, tail)  # validates splice consistency

    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "garch.json", fit.to_json_dict())
    _dump_json(out / "tail.json", tail.to_json_dict(
        ci_xi=list(gfit.ci_xi) if gfit.ci_xi else None,
        ci_beta=list(gfit.ci_beta) if gfit.ci_beta else None,
        n_exceedances=int(excesses.size),
        loglik=gfit.loglik,
    ))
    _dump_json(out / "model.json", {
        "sigma_next": sigma_next,
        "noise": args.noise,
        "threshold_q": args.threshold_q,
        "init_rule": init if isinstance(init, str) else float(init),
        "n_obs": int(len(losses)),
        "version": __version__,
    })
    with open(out / "residuals.csv", "w") as fh:
        fh.write("residual\n")
        for z in residuals:
            fh.write(f"{z:.12g}\n")

    _write_diagnostics(out, losses.values, residuals, tail)
    _write_manifest(out, "fit", {
        "input": str(args.input), "column": args.column,
        "date_column": args.date_column, "delimiter": args.delimiter,
        "threshold_q": args.threshold_q, "noise": args.noise,
        "init": init if isinstance(init, str) else float(init),
    })
    print(f"a0={fit.params.a0:.4e}  a1={fit.params.a1:.4f}  b={fit.params.b:.4f}  "
          f"loglik={fit.loglik:.2f}")
    print(f"tail: u={u:.4f}  Fu={fu:.4f}  xi={gfit.params.xi:.4f}  "
          f"beta={gfit.params.beta:.4f}  ({excesses.size} exceedances)")
    print(f"sigma_next={sigma_next:.6g}; bundle written to {out}")
    return EXIT_OK


def cmd_risk_table(args) -> int:
    params, tail, model, residuals = _load_bundle(args.bundle)
    noise = _rebuild_noise(model["noise"], residuals, tail)
    sigma_next = args.sigma_next if args.sigma_next is not None else model["sigma_next"]
    if sigma_next <= 0.0:
        raise ValueError("sigma_next must be positive")

    tables = build_risk_table(
        args.alphas, args.m_max, sigma_next, params, noise,
        measures=args.measures, mc_draws=args.draws, seed=args.seed,
    )
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)

    if args.format == "csv":
        for meas, table in tables.items():
            slug = _MEASURE_SLUGS[meas]
            _write_grid_csv(out / f"{slug}_single.csv", table.alphas, table.horizons, table.single)
            if table.aggregate is not None:
                agg_name = "avar_weak_lower_aggregate" if meas == "tcAVaR-lower" else f"{slug}_aggregate"
                _write_grid_csv(out / f"{agg_name}.csv", table.alphas, table.horizons, table.aggregate)
            if table.stderr is not None:
                _write_grid_csv(out / f"{slug}_stderr.csv", table.alphas, table.horizons, table.stderr)

    comparison = []
    for alpha in args.alphas:
        q1 = RiskQuery(alpha, 1, sigma_next, params, noise)
        var1 = one_day_var(q1)
        scaled = sqrt_scaling(var1, args.m_max)
        agg = tc_var_aggregate(RiskQuery(alpha, args.m_max, sigma_next, params, noise))
        comparison.append({
            "alpha": alpha, "var_1day": var1,
            f"sqrt_scaling_m{args.m_max}": scaled,
            f"tc_var_aggregate_m{args.m_max}": agg,
            "ratio": agg / scaled,
        })
    if args.format == "csv":
        with open(out / "comparison.csv", "w") as fh:
            fh.write(f"alpha,var_1day,sqrt_scaling_m{args.m_max},tc_var_aggregate_m{args.m_max},ratio\n")
            for row in comparison:
                fh.write(
                    f"{row['alpha']:g},{row['var_1day']:.4f},"
                    f"{row[f'sqrt_scaling_m{args.m_max}']:.4f},"
                    f"{row[f'tc_var_aggregate_m{args.m_max}']:.4f},{row['ratio']:.2f}\n"
                )

    _dump_json(out / "risk_tables.json", {
        "provenance": {
            "garch": {"a0": params.a0, "a1": params.a1, "b": params.b},
            "tail": tail.to_json_dict() if tail is not None else None,
            "sigma_next": sigma_next,
            "noise": model["noise"],
            "seed": args.seed,
            "draws": args.draws,
            "version": __version__,
        },
        "tables": {meas: t.to_json_dict() for meas, t in tables.items()},
        "comparison": comparison,
    })
    _write_manifest(out, "risk-table", {
        "bundle": str(args.bundle), "alphas": list(args.alphas),
        "m_max": args.m_max, "measures": list(args.measures),
        "sigma_next": sigma_next, "seed": args.seed, "draws": args.draws,
        "format": args.format,
    })
    print(f"risk tables for {len(args.alphas)} levels x {args.m_max} horizons "
          f"written to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    params, tail, model, residuals = _load_bundle(args.bundle)
    noise = _rebuild_noise(model["noise"], residuals, tail)
    sigma_next = args.sigma_next if args.sigma_next is not None else model["sigma_next"]
    if sigma_next <= 0.0:
        raise ValueError("sigma_next must be positive")

    entries = []
    gate_failed = False
    for i, alpha in enumerate(args.alphas):
        rep = composed_var_check(params, sigma_next, alpha, args.draws, args.seed ^ (101 + i), noise)
        entries.append(rep.to_json_dict(name=f"composed_var alpha={alpha:g}"))
        rep2 = composed_avar_sq_check(params, sigma_next, alpha, args.draws, args.seed ^ (201 + i), noise)
        entries.append(rep2.to_json_dict(name=f"composed_avar_sq alpha={alpha:g}"))

    demo = inconsistency_demo(params, sigma_next, args.alphas[0], args.draws, args.seed ^ 301, noise)
    entries.append({
        "check": f"inconsistency_gap alpha={args.alphas[0]:g}",
        "estimate": demo.m_star_star.estimate,
        "stderr": demo.m_star_star.stderr,
        "target": demo.m_star,
        "z": None,  # the gap is expected to be large; it is not an agreement check
        "gap": demo.gap,
        "pass": bool(demo.gap > 3.0 * demo.m_star_star.stderr),
    })

    sample = noise.sample(50_000, args.seed ^ 401)
    ax = axioms_check(sample, args.alphas[0], c=0.5, seed=args.seed ^ 402)
    entries.append({
        "check": "estimator_axioms",
        "estimate": None, "stderr": None, "target": None, "z": None,
        "pass": ax.passed,
    })

    for entry in entries:
        z = entry.get("z")
        if z is not None and abs(z) >= 4.0:
            entry["pass"] = False
            gate_failed = True
        if entry.get("pass") is False:
            gate_failed = True
        ztxt = f"z={z:+.2f}" if z is not None else "     "
        print(f"{'PASS' if entry.get('pass') else 'FAIL'}  {entry['check']:<36} {ztxt}")

    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "verification.json", {"checks": entries, "version": __version__})
    _write_manifest(out, "verify", {
        "bundle": str(args.bundle), "alphas": list(args.alphas),
        "sigma_next": sigma_next, "seed": args.seed, "draws": args.draws,
    })
    return EXIT_VERIFY if gate_failed else EXIT_OK


# ---------------------------------------------------------------------------
# bundle and file plumbing
# ---------------------------------------------------------------------------


def _column(spec):
    if spec is None:
        return None
    if isinstance(spec, int):
        return spec
    try:
        return int(spec)
    except (TypeError, ValueError):
        return spec


def _load_bundle(bundle: Path):
    for name in ("garch.json", "tail.json", "model.json"):
        if not (bundle / name).exists():
            raise ValueError(f"bundle {bundle} is missing {name}")
    garch = json.loads((bundle / "garch.json").read_text())
    tail_d = json.loads((bundle / "tail.json").read_text())
    model = json.loads((bundle / "model.json").read_text())
    params = GarchParams(garch["a0"], garch["a1"], garch["b"])  # validates positivity
    tail = TailModel(tail_d["u"], tail_d["Fu"], GpdParams(tail_d["xi"], tail_d["beta"]))
    if model.get("sigma_next", 0.0) <= 0.0:
        raise ValueError("bundle has a non-positive sigma_next")
    residuals = None
    res_path = bundle / "residuals.csv"
    if res_path.exists():
        residuals = np.loadtxt(res_path, skiprows=1)
    return params, tail, model, residuals


def _rebuild_noise(kind: str, residuals, tail):
    if kind == "normal":
        return StandardNormalNoise()
    if kind == "spliced":
        if residuals is None:
            raise ValueError("spliced noise needs residuals.csv in the bundle")
        return build_spliced_noise(residuals, tail)
    raise ValueError(f"unknown noise kind {kind!r}")


def _write_grid_csv(path: Path, alphas, horizons, grid):
    with open(path, "w") as fh:
        fh.write("m," + ",".join(f"{a:g}" for a in alphas) + "\n")
        for i, m in enumerate(horizons):
            fh.write(f"{m}," + ",".join(f"{v:.4f}" for v in grid[i]) + "\n")


def _write_curve_csv(path: Path, header: str, rows):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.10g}" for v in row) + "\n")


def _write_diagnostics(out: Path, losses: np.ndarray, residuals: np.ndarray, tail: TailModel):
    max_lag = min(20, losses.size - 1)
    for name, series in (
        ("acf_losses", losses),
        ("acf_residuals", residuals),
        ("acf_sq_residuals", residuals**2),
    ):
        acf = sample_acf(series, max_lag)
        _write_curve_csv(out / f"{name}.csv", "lag,acf",
                         [(k, acf[k]) for k in range(max_lag + 1)])

    with open(out / "ljung_box.csv", "w") as fh:
        fh.write("series,lags,statistic,p_value\n")
        for label, series in (("residuals", residuals), ("sq_residuals", residuals**2)):
            for h in (5, 10, 15, 20):
                if series.size > h:
                    q, p = ljung_box(series, h)
                    fh.write(f"{label},{h},{q:.10g},{p:.10g}\n")

    nonneg = residuals[residuals >= 0.0]
    qs = np.quantile(nonneg, np.arange(0.50, 0.985, 0.02))
    curve = mean_excess_curve(nonneg, qs)
    _write_curve_csv(out / "mean_excess.csv", "threshold,mean_excess,count", curve)

    exceed = np.sort(residuals[residuals > tail.u] - tail.u)
    if exceed.size:
        pp = (np.arange(1, exceed.size + 1) - 0.5) / exceed.size
        fitted = gpd_quantile(pp, tail.gpd)
        _write_curve_csv(out / "qq_gpd.csv", "empirical,fitted",
                         np.column_stack([exceed, fitted]))


def _dump_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_manifest(out: Path, command: str, config: dict):
    _dump_json(out / "manifest.json", {
        "command": command,
        "config": config,
        "version": __version__,
    })


if __name__ == "__main__":
    sys.exit(main())
