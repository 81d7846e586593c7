"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from .diagnostics import gelman_rubin, interval_coverage, mape, posterior_predictive_check
from .errors import (ConfigError, DataError, MissingColumn, ParseError, RCBayesError,
                     ZeroWithinVariance)
from .forecast import forecast, future_inputs, hvac_hold, terminal_state
from .io import (DriverSpec, FitArtifact, RunConfig, f_to_c, generate_synthetic, load_csv,
                 transfer_priors, write_csv)
from .thermal_models import ModelKind, ThermalParams
from .workflow import run_fit

CONFIG_HELP = """\
Config file (YAML).  Keys and defaults:

  model: Ti                    # Ti | TiTe | TiTeTh
  data: path/to/data.csv       # columns time,y,ta,phi_h,phi_s
  take: null                   # keep only the first N rows
  dt: null                     # expected step in hours (checked)
  unit: c                      # c | f (Fahrenheit converted on load)
  binary_hvac: false           # phi_h is an on/off signal scaled by phi_h_scale
  seed: 0
  output: rcbayes-out
  priors:
    regime: uninformed         # uninformed | informed | hyper | transferred
    informed: null             # audit R-values, e.g. {R_ia: 5.0}
    metadata: default          # hyper: mixture JSON ("default" = bundled)
    transferred: null          # transferred: prior JSON from `rcbayes transfer`
    overrides: {}              # name -> {family: gamma, shape: .., rate: ..}
    fixed: {}                  # name -> value held fixed
    delta: 0.001               # shape and rate of the broad gamma priors
    r_upper: 70.0              # upper bound on resistances
    informed_sd: 1.0           # sd of informed and hyper resistance priors
  inference:
    backend: nuts              # nuts | advi | mle | map
    formulation: auto          # auto | marginalized | latent_states
                               # (auto: latent for advi, marginalized otherwise)
    init: map                  # map | origin
    draws: 1000                # ADVI draws kept
    nuts: {chains: 4, warmup: 5000, draws: 5000, target_accept: 0.8,
           max_tree_depth: 10, mass: diagonal}
    advi: {max_iter: 180000, eval_every: 500, eval_samples: 100,
           window: 100, tol: 1e-4, eta: 0.1}
    optimizer: {max_iter: 500, gtol: 1e-6}
  forecast: {horizon: 144, n_draws: 1000, band: minmax}
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _kv(text):
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise ConfigError(f"expected name=value, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = float(v)
    return out


def build_parser():
    p = _Parser(prog="rcbayes", description="Bayesian grey-box thermal models of buildings.",
                epilog=CONFIG_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit a model; writes artifact.json, draws.csv, summary.json",
                       epilog=CONFIG_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    f.add_argument("--config", required=True)
    f.add_argument("--data", help="override the data path")
    f.add_argument("--backend", choices=("nuts", "advi", "mle", "map"))
    f.add_argument("--take", type=int, help="use only the first N rows")
    f.add_argument("--seed", type=int)
    f.add_argument("--out", help="output directory")

    fc = sub.add_parser("forecast", help="Monte-Carlo forecast from a fit artifact")
    fc.add_argument("--artifact", required=True)
    fc.add_argument("--data", required=True, help="history CSV used to locate the last state")
    fc.add_argument("--future", required=True,
                    help="CSV with time,ta,phi_s and optionally phi_h and y")
    fc.add_argument("--horizon", type=int, help="steps to forecast (default: all future rows)")
    fc.add_argument("--n-draws", type=int, default=1000)
    fc.add_argument("--band", default="minmax", help="minmax or quantile(alpha)")
    fc.add_argument("--seed", type=int, default=0)
    fc.add_argument("--unit", default="c")
    fc.add_argument("--out", default="forecast.csv")

    s = sub.add_parser("simulate", help="write a synthetic dataset CSV")
    s.add_argument("--model", default="Ti")
    s.add_argument("--params", required=True,
                   help="comma-separated name=value, e.g. R_ia=5.3,C_i=25,A_w=7.9,"
                        "sigma_i=0.05,sigma_obs=0.05")
    s.add_argument("--n", type=int, default=2000)
    s.add_argument("--dt", type=float, default=0.5, help="step in hours")
    s.add_argument("--season", choices=("heating", "cooling"), default="heating")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    d = sub.add_parser("diagnose", help="R-hat and posterior predictive report for an artifact")
    d.add_argument("--artifact", required=True)
    d.add_argument("--data", help="dataset for the predictive check")
    d.add_argument("--n-rep", type=int, default=200)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", help="write the JSON report here instead of stdout")

    t = sub.add_parser("transfer", help="turn an artifact's posterior into a prior file")
    t.add_argument("--artifact", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--inflate", type=float, default=1.0, help="scale applied to each sd")
    return p


def cmd_fit(args):
    cfg = RunConfig.load(args.config)
    raw = cfg.raw
    if args.data:
        raw["data"] = args.data
    if args.backend:
        raw["inference"]["backend"] = args.backend
    if args.take is not None:
        raw["take"] = args.take
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out:
        raw["output"] = args.out
    cfg = RunConfig(raw)
    art = run_fit(cfg)
    out = raw["output"]
    art.save(out)
    with open(os.path.join(out, "summary.json"), "w") as fh:
        fh.write(art.summary.to_json())
    print(art.summary.to_json())
    return 0


def cmd_forecast(args):
    art = FitArtifact.load(args.artifact)
    kind = ModelKind.parse(art.kind)
    if art.samples is None:
        raise ConfigError("forecasting needs posterior draws; refit with nuts or advi")
    hist = load_csv(args.data, unit=args.unit,
                    binary_hvac=bool(art.config.get("binary_hvac", False)))
    fut = _load_future(args.future, args.unit)
    K = args.horizon or len(fut["ta"])
    if K > len(fut["ta"]):
        raise DataError(f"horizon {K} exceeds the {len(fut['ta'])} future rows")
    phi_h = fut["phi_h"][:K] if "phi_h" in fut else hvac_hold(hist, K)
    exo = future_inputs(fut["ta"][:K], phi_h, fut["phi_s"][:K])
    last = [f"x[{len(hist) - 1}].{st}" for st in kind.states]
    if all(n in art.samples for n in last):
        # latent-state fit: each parameter draw carries its own final state
        x_T = np.column_stack([art.samples.param(n) for n in last])
    else:
        x_T = terminal_state(kind, art.samples, hist, art.fixed)
    res = forecast(kind, art.samples, x_T, exo, hist.dt, n_draws=args.n_draws,
                   band_mode=args.band, seed=args.seed, fixed=art.fixed,
                   hold_mode=None if "phi_h" in fut else "last-known")
    res.to_csv(args.out)
    report = {"horizon": K, "band": res.band_mode, "out": args.out}
    if "y" in fut:
        y = fut["y"][:K]
        report["mape"] = mape(y, res.mean)
        report["coverage_percent"] = interval_coverage(y, res.low, res.high)
    print(json.dumps(report, indent=2))
    return 0


def _load_future(path, unit):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in reader.fieldnames or []]
        reader.fieldnames = header
        for col in ("ta", "phi_s"):
            if col not in header:
                raise MissingColumn(col)
        rows = list(reader)
    out = {}
    for col in ("ta", "phi_s", "phi_h", "y"):
        if col in header:
            try:
                out[col] = np.array([float(r[col]) for r in rows])
            except ValueError as exc:
                raise ParseError(f"{path}: column {col!r}: {exc}") from None
    if unit.lower() == "f":
        for col in ("ta", "y"):
            if col in out:
                out[col] = f_to_c(out[col])
    return out


def cmd_simulate(args):
    kind = ModelKind.parse(args.model)
    params = ThermalParams.from_flat(kind, _kv(args.params))
    data, _ = generate_synthetic(kind, params, args.n, args.dt, seed=args.seed,
                                 drivers=DriverSpec(season=args.season))
    write_csv(data, args.out)
    print(f"wrote {len(data)} rows to {args.out}")
    return 0


def cmd_diagnose(args):
    art = FitArtifact.load(args.artifact)
    if art.samples is None:
        raise ConfigError("artifact holds no draws")
    s = art.samples
    report = {"divergences": art.summary.divergences, "rhat": {}}
    for name in s.names:
        if name.startswith("x["):
            continue
        try:
            report["rhat"][name] = gelman_rubin(s.chains(name)) if s.n_chains > 1 else None
        except ZeroWithinVariance:
            report["rhat"][name] = None
    if args.data:
        data = load_csv(args.data)
        report["ppc"] = posterior_predictive_check(art.kind, s, data, n_rep=args.n_rep,
                                                   seed=args.seed, fixed=art.fixed)
    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text)
    return 0


def cmd_transfer(args):
    art = FitArtifact.load(args.artifact)
    doc = transfer_priors(art, args.inflate)
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=2)
    print(f"wrote priors for {', '.join(doc['priors'])} to {args.out}")
    return 0


COMMANDS = {"fit": cmd_fit, "forecast": cmd_forecast, "simulate": cmd_simulate,
            "diagnose": cmd_diagnose, "transfer": cmd_transfer}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except RCBayesError as exc:
        print(f"rcbayes {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"rcbayes {args.command}: file not found: {exc.filename}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
