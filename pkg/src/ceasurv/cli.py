"""Command-line interface: fit, rmst, cea, and simulate subcommands.

Input CSV files come in two shapes.  "records" files carry one counting-
process row per risk interval (entry, exit, event, stratum, optional delay).
"subjects" files carry one row per subject (followup time, death indicator,
final group, switch delay) and are split into records on ingest.  The shape
is auto-detected from the header unless forced with --shape.

With --out PREFIX, each command writes PREFIX.txt (human table) and
PREFIX.jsonl (versioned line-delimited records); the cea and simulate
commands additionally write delimited series files and matplotlib figures
next to them.  Without --out the report is printed to stdout.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import plotting
from .cea import Z_95, CostSpec, cost_effectiveness, inb_curve
from .cox import CoxError, FitConfig, fit
from .data_model import (CovariateProfile, Dataset, DelaySpec, RawSubject,
                         SubjectRecord, split_switcher_history, validate)
from .report import Report, emit_report
from .rmst import UnsupportedVariance, rmst_dly, rmst_dst, rmst_strt
from .simlab import Scenario, SimDesign, run_study

DEFAULT_COLUMNS = {
    "entry": "entry", "exit": "exit", "event": "event", "stratum": "stratum",
    "delay": "delay", "time": "time", "group": "group", "id": "id",
}

_TRUE = {"1", "true", "t", "yes"}
_FALSE = {"0", "false", "f", "no", ""}


def _parse_bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ValueError(f"cannot interpret {raw!r} as an event indicator")


def ingest_csv(path: str, eta: float, covariates: list[str],
               columns: dict | None = None, shape: str = "auto") -> Dataset:
    """Load a CSV file into a Dataset, splitting subject histories if needed."""
    cols = dict(DEFAULT_COLUMNS)
    cols.update(columns or {})
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        header = reader.fieldnames or []
    if not rows:
        raise ValueError(f"{path}: no data rows")
    missing_cov = [c for c in covariates if c not in header]
    if missing_cov:
        raise ValueError(f"{path}: covariate columns not found: {missing_cov}")
    if shape == "auto":
        shape = "records" if cols["entry"] in header and cols["exit"] in header \
            else "subjects"
    records: list[SubjectRecord] = []
    if shape == "records":
        needed = [cols["entry"], cols["exit"], cols["event"], cols["stratum"]]
        absent = [c for c in needed if c not in header]
        if absent:
            raise ValueError(f"{path}: missing columns for records shape:"
                             f" {absent}")
        for i, row in enumerate(rows):
            records.append(SubjectRecord(
                subject_id=int(row[cols["id"]]) if cols["id"] in header else i,
                entry=float(row[cols["entry"]]),
                exit=float(row[cols["exit"]]),
                event=_parse_bool(row[cols["event"]]),
                stratum=int(row[cols["stratum"]]),
                covariates=tuple(float(row[c]) for c in covariates),
                delay=float(row[cols["delay"]]) if cols["delay"] in header
                else float(row[cols["entry"]])))
    elif shape == "subjects":
        needed = [cols["time"], cols["event"], cols["group"]]
        absent = [c for c in needed if c not in header]
        if absent:
            raise ValueError(f"{path}: missing columns for subjects shape:"
                             f" {absent}")
        for i, row in enumerate(rows):
            group = int(row[cols["group"]])
            delay = float(row[cols["delay"]]) if cols["delay"] in header else 0.0
            raw = RawSubject(
                subject_id=int(row[cols["id"]]) if cols["id"] in header else i,
                followup_end=float(row[cols["time"]]),
                died=_parse_bool(row[cols["event"]]),
                covariates=tuple(float(row[c]) for c in covariates),
                switch_to=group if group != 1 else None,
                switch_time=delay if group != 1 else None)
            records.extend(split_switcher_history(raw))
    else:
        raise ValueError(f"unknown input shape {shape!r}")
    return Dataset(records, eta=eta)


def _parse_profile(text: str) -> CovariateProfile:
    if text == "observed":
        return CovariateProfile.observed()
    if text.startswith("fixed:"):
        vals = [float(v) for v in text[len("fixed:"):].split(",") if v != ""]
        return CovariateProfile.fixed(vals)
    raise argparse.ArgumentTypeError(
        f"profile must be 'observed' or 'fixed:v1,v2,...', got {text!r}")


def _parse_delays(text: str) -> DelaySpec:
    if text == "empirical":
        return DelaySpec.empirical()
    if text.startswith("fixed:"):
        return DelaySpec.fixed(float(text[len("fixed:"):]))
    if text.startswith("mixexp:"):
        w0, rate = text[len("mixexp:"):].split(":")
        return DelaySpec.mixture_exp(float(w0), float(rate))
    atoms = []
    for part in text.split(","):
        d, w = part.split(":")
        atoms.append((float(w), float(d)))
    return DelaySpec.discrete(atoms)


def _parse_costs(text: str) -> dict[int, float]:
    vals = [float(v) for v in text.split(",")]
    return {j + 1: v for j, v in enumerate(vals)}


def _parse_grid(text: str) -> np.ndarray:
    lo, hi, num = text.split(":")
    return np.linspace(float(lo), float(hi), int(num))


def _columns_from_args(args) -> dict:
    out = {}
    for key in DEFAULT_COLUMNS:
        val = getattr(args, f"col_{key}", None)
        if val:
            out[key] = val
    return out


def _add_input_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--input", required=True, help="input CSV path")
    sub.add_argument("--eta", type=float, required=True,
                     help="analysis horizon")
    sub.add_argument("--covariates", default="",
                     help="comma-separated covariate column names")
    sub.add_argument("--shape", choices=["auto", "records", "subjects"],
                     default="auto")
    for key in DEFAULT_COLUMNS:
        sub.add_argument(f"--col-{key}", dest=f"col_{key}", default=None,
                         help=f"column name for '{key}'")
    sub.add_argument("--ridge", type=float, default=0.0)
    sub.add_argument("--format", choices=["table", "jsonl"], default="table")
    sub.add_argument("--out", default=None,
                     help="output path prefix (writes .txt/.jsonl and figures)")


def _add_scenario_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--scenario", choices=["strt", "dly", "dst"],
                     required=True)
    sub.add_argument("--r", type=float, default=None,
                     help="initiation time (strt)")
    sub.add_argument("--a", type=float, default=None, help="delay (dly)")
    sub.add_argument("--delays", type=_parse_delays, default=None,
                     help="delay distribution (dst): 'empirical', 'fixed:A',"
                          " 'mixexp:W0:RATE', or 'd1:w1,d2:w2,...'")
    sub.add_argument("--stratum", type=int, default=2,
                     help="comparison stratum (default 2)")
    sub.add_argument("--profile", type=_parse_profile, default="observed",
                     help="'observed' or 'fixed:v1,v2,...'")
    sub.add_argument("--wedge", choices=["min", "max"], default="min")


def _load_and_fit(args, parser):
    covariates = [c for c in args.covariates.split(",") if c]
    try:
        dataset = ingest_csv(args.input, args.eta, covariates,
                             _columns_from_args(args), args.shape)
    except (OSError, ValueError, KeyError) as exc:
        parser.error(str(exc))
    problems = validate(dataset)
    hard = [d for d in problems if d.code in
            ("EntryNotBeforeExit", "NegativeEntry",
             "CovariateDimensionMismatch", "EmptyStratum", "BadStratum",
             "HorizonBelowDelayFloor")]
    if hard:
        for d in hard:
            print(f"error: {d.code}: {d.message}", file=sys.stderr)
        sys.exit(1)
    warnings = [f"{d.code}: {d.message}" for d in problems]
    fitres = fit(dataset, FitConfig(ridge=args.ridge))
    return dataset, fitres, covariates, warnings


def _coefficient_rows(fitres, covariates) -> list[dict]:
    rows = []
    ses = fitres.beta_se()
    for k in range(fitres.p):
        name = covariates[k] if k < len(covariates) else f"x{k}"
        b, s = float(fitres.beta[k]), float(ses[k])
        rows.append({"name": name, "estimate": b, "se": s,
                     "z": b / s if s else None,
                     "lo": b - Z_95 * s, "hi": b + Z_95 * s})
    return rows


def _model_rows(fitres) -> list[dict]:
    row = {"loglik": fitres.loglik, "iterations": fitres.iterations,
           "converged": fitres.converged, "n_subjects": fitres.n_subjects}
    for j in fitres.strata:
        row[f"n_stratum_{j}"] = fitres.n_per_stratum[j]
    return [row]


def _scenario_estimates(args, fitres, dataset, parser):
    prof = args.profile if isinstance(args.profile, CovariateProfile) \
        else _parse_profile(args.profile)
    j = args.stratum
    if args.scenario == "strt":
        if args.r is None or args.a is not None or args.delays is not None:
            parser.error("scenario 'strt' needs --r (and neither --a nor"
                         " --delays)")
        if args.r <= dataset.delta_floor() and dataset.delta_floor() > 0:
            parser.error(f"--r must exceed the observed delay floor "
                         f"{dataset.delta_floor():g}")
        e1 = rmst_strt(fitres, 1, prof, args.r, args.eta, dataset,
                       wedge=args.wedge)
        ej = rmst_strt(fitres, j, prof, args.r, args.eta, dataset,
                       wedge=args.wedge)
    elif args.scenario == "dly":
        if args.a is None or args.r is not None or args.delays is not None:
            parser.error("scenario 'dly' needs --a (and neither --r nor"
                         " --delays)")
        e1 = rmst_dly(fitres, 1, prof, args.a, args.eta, dataset,
                      wedge=args.wedge)
        ej = rmst_dly(fitres, j, prof, args.a, args.eta, dataset,
                      wedge=args.wedge)
    else:
        if args.delays is None or args.r is not None or args.a is not None:
            parser.error("scenario 'dst' needs --delays (and neither --r nor"
                         " --a)")
        compute_var = args.delays.is_discrete
        e1 = rmst_dst(fitres, 1, prof, args.delays, args.eta, dataset,
                      wedge=args.wedge, compute_variance=compute_var)
        ej = rmst_dst(fitres, j, prof, args.delays, args.eta, dataset,
                      wedge=args.wedge, compute_variance=compute_var)
    return e1, ej


def _rmst_rows(estimates) -> list[dict]:
    rows = []
    for e in estimates:
        rows.append({
            "scenario": e.scenario, "stratum": e.stratum, "value": e.value,
            "se": e.se,
            "lo": None if e.se is None else e.value - Z_95 * e.se,
            "hi": None if e.se is None else e.value + Z_95 * e.se,
            "value_tail": e.value_tail, "se_tail": e.se_tail})
    return rows


def _cea_rows(rep) -> list[dict]:
    row = {"scenario": rep.scenario, "stratum": rep.stratum, "eta": rep.eta,
           "theta": rep.costs.theta}
    if rep.icer is not None:
        row.update(icer=rep.icer.value, icer_se=rep.icer.se,
                   icer_lo=rep.icer.lo, icer_hi=rep.icer.hi)
    else:
        row.update(icer=None, icer_se=None, icer_lo=None, icer_hi=None)
    row.update(inb=rep.inb.value, inb_se=rep.inb.se, inb_lo=rep.inb.lo,
               inb_hi=rep.inb.hi)
    return [row]


def _write_outputs(report: Report, args, series: dict[str, list[dict]] | None
                   = None, figures: dict[str, tuple] | None = None) -> None:
    if args.out:
        parent = os.path.dirname(args.out)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(args.out + ".txt", "w") as fh:
            fh.write(emit_report(report, "table"))
        with open(args.out + ".jsonl", "w") as fh:
            fh.write(emit_report(report, "jsonl"))
        for name, rows in (series or {}).items():
            path = f"{args.out}_{name}.csv"
            with open(path, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
                writer.writeheader()
                for row in rows:
                    writer.writerow({k: ("" if v is None else format(v, ".10g")
                                         if isinstance(v, float) else v)
                                     for k, v in row.items()})
        for name, (func, rows, kwargs) in (figures or {}).items():
            func(rows, f"{args.out}_{name}.png", **kwargs)
    else:
        sys.stdout.write(emit_report(report, args.format))


def _cmd_fit(args, parser) -> None:
    dataset, fitres, covariates, warnings = _load_and_fit(args, parser)
    report = Report("fit", {"input": args.input, "eta": args.eta,
                            "covariates": covariates})
    report.add("coefficients", _coefficient_rows(fitres, covariates))
    report.add("model", _model_rows(fitres))
    report.warnings = warnings
    _write_outputs(report, args)


def _cmd_rmst(args, parser) -> None:
    dataset, fitres, covariates, warnings = _load_and_fit(args, parser)
    try:
        e1, ej = _scenario_estimates(args, fitres, dataset, parser)
    except (ValueError, UnsupportedVariance) as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(1)
    report = Report("rmst", {"input": args.input, "eta": args.eta,
                             "scenario": args.scenario,
                             "covariates": covariates})
    report.add("coefficients", _coefficient_rows(fitres, covariates))
    report.add("rmst", _rmst_rows([e1, ej]))
    report.warnings = warnings + e1.warnings \
        + [w for w in ej.warnings if w not in e1.warnings]
    _write_outputs(report, args)


def _cmd_cea(args, parser) -> None:
    dataset, fitres, covariates, warnings = _load_and_fit(args, parser)
    costs = CostSpec(_parse_costs(args.costs), args.theta)
    if 1 not in costs.cost_per_time or args.stratum not in costs.cost_per_time:
        parser.error("--costs must provide a cost for stratum 1 and the"
                     " comparison stratum")
    try:
        e1, ej = _scenario_estimates(args, fitres, dataset, parser)
        rep = cost_effectiveness(fitres, e1, ej, costs, args.eta)
    except (ValueError, UnsupportedVariance, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(1)
    report = Report("cea", {"input": args.input, "eta": args.eta,
                            "scenario": args.scenario, "theta": args.theta,
                            "costs": {str(k): v for k, v in
                                      costs.cost_per_time.items()}})
    report.add("coefficients", _coefficient_rows(fitres, covariates))
    report.add("rmst", _rmst_rows([e1, ej]))
    report.add("cea", _cea_rows(rep))
    series: dict[str, list[dict]] = {}
    figures: dict[str, tuple] = {}
    if args.theta_grid is not None:
        rows = inb_curve(rep, args.theta_grid)
        report.add("inb_curve", rows)
        series["inb_curve"] = rows
        figures["inb_curve"] = (plotting.plot_inb_curve, rows,
                                {"icer": None if rep.icer is None
                                 else rep.icer.value})
    if args.eta_grid is not None:
        rows = []
        for eta in args.eta_grid:
            try:
                f1, fj = _scenario_estimates_at_eta(args, fitres, dataset, eta)
                r2 = cost_effectiveness(fitres, f1, fj, costs, eta)
            except (ValueError, ZeroDivisionError):
                continue
            if r2.icer is None:
                continue
            rows.append({"eta": float(eta), "icer": r2.icer.value,
                         "se": r2.icer.se, "lo": r2.icer.lo,
                         "hi": r2.icer.hi})
        report.add("icer_vs_eta", rows)
        if rows:
            series["icer_vs_eta"] = rows
            figures["icer_vs_eta"] = (plotting.plot_icer_vs_eta, rows, {})
    report.warnings = warnings + rep.warnings
    _write_outputs(report, args, series, figures)


def _scenario_estimates_at_eta(args, fitres, dataset, eta):
    sub = argparse.Namespace(**vars(args))
    sub.eta = float(eta)
    return _scenario_estimates(sub, fitres, dataset,
                               argparse.ArgumentParser())


def _cmd_simulate(args, parser) -> None:
    design = SimDesign(n=args.n, baseline_rate_1=args.baseline1,
                       baseline_rate_2=args.baseline2, log_hr=args.log_hr,
                       covariate_prob=args.covariate_prob,
                       censor_rate=args.censor_rate, eta=args.eta,
                       delay_fraction=args.delay_fraction,
                       cost_1=args.cost1, cost_2=args.cost2,
                       theta=args.theta, seed=args.seed)
    scenarios = []
    for token in args.scenarios.split(","):
        token = token.strip()
        if token == "none":
            scenarios.append(Scenario("none"))
        elif token.startswith("strt@"):
            scenarios.append(Scenario("strt", r=float(token[5:])))
        elif token.startswith("dly@"):
            scenarios.append(Scenario("dly", a=float(token[4:])))
        elif token.startswith("dst@"):
            scenarios.append(Scenario("dst",
                                      delays=_parse_delays(token[4:])))
        else:
            parser.error(f"unknown scenario token {token!r}")
    result = run_study(design, scenarios, args.replicates,
                       workers=args.workers)
    report = Report("simulate", {
        "n": design.n, "replicates": args.replicates, "seed": design.seed,
        "baseline_rate_1": design.baseline_rate_1,
        "baseline_rate_2": design.baseline_rate_2, "log_hr": design.log_hr,
        "censor_rate": design.censor_rate, "eta": design.eta,
        "delay_fraction": design.delay_fraction,
        "scenarios": args.scenarios})
    report.add("study", result.rows)
    report.add("diagnostics", [dict(result.diagnostics,
                                    failures=result.failures)])
    series = {"study": result.rows} if result.rows else None
    figures = {"bias": (plotting.plot_study_bias, result.rows, {})} \
        if result.rows else None
    _write_outputs(report, args, series, figures)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ceasurv",
        description="Cost-effectiveness analysis for survival data with"
                    " treatment-initiation delays")
    subs = parser.add_subparsers(dest="command", required=True)

    p_fit = subs.add_parser("fit", help="fit the stratified hazards model")
    _add_input_args(p_fit)
    p_fit.set_defaults(func=_cmd_fit)

    p_rmst = subs.add_parser("rmst", help="restricted-mean survival estimates")
    _add_input_args(p_rmst)
    _add_scenario_args(p_rmst)
    p_rmst.set_defaults(func=_cmd_rmst)

    p_cea = subs.add_parser("cea", help="ICER and INB estimates")
    _add_input_args(p_cea)
    _add_scenario_args(p_cea)
    p_cea.add_argument("--costs", required=True,
                       help="per-time costs by stratum, e.g. '115,330'")
    p_cea.add_argument("--theta", type=float, required=True,
                       help="willingness to pay per unit of survival time")
    p_cea.add_argument("--theta-grid", type=_parse_grid, default=None,
                       help="'lo:hi:n' grid for the INB curve")
    p_cea.add_argument("--eta-grid", type=_parse_grid, default=None,
                       help="'lo:hi:n' grid for ICER vs horizon")
    p_cea.set_defaults(func=_cmd_cea)

    p_sim = subs.add_parser("simulate", help="Monte Carlo bias/coverage study")
    p_sim.add_argument("--n", type=int, default=1000)
    p_sim.add_argument("--replicates", type=int, default=200)
    p_sim.add_argument("--seed", type=int, default=20260826)
    p_sim.add_argument("--baseline1", type=float, default=1.0)
    p_sim.add_argument("--baseline2", type=float, default=0.5)
    p_sim.add_argument("--log-hr", type=float, default=-2.0)
    p_sim.add_argument("--covariate-prob", type=float, default=0.9)
    p_sim.add_argument("--censor-rate", type=float, default=0.01)
    p_sim.add_argument("--eta", type=float, default=10.0)
    p_sim.add_argument("--delay-fraction", type=float, default=0.5)
    p_sim.add_argument("--cost1", type=float, default=115.0)
    p_sim.add_argument("--cost2", type=float, default=330.0)
    p_sim.add_argument("--theta", type=float, default=1352.0)
    p_sim.add_argument("--workers", type=int, default=None,
                       help="override CEASURV_WORKERS")
    p_sim.add_argument("--scenarios", default="none,dly@0.5",
                       help="comma list: none, strt@R, dly@A, dst@SPEC")
    p_sim.add_argument("--format", choices=["table", "jsonl"],
                       default="table")
    p_sim.add_argument("--out", default=None)
    p_sim.set_defaults(func=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args, parser)
    except CoxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
