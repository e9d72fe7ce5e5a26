"""Synthetic-data generator and Monte Carlo study harness.

Data-generating process: subjects carry a Bernoulli covariate with
multiplicative effect exp(beta * X) on the hazard.  Group-1 subjects stay on
the reference treatment (constant baseline rate lambda_1).  Group-2 subjects
switch to the comparison treatment after a delay delta (0 for immediate
switchers), following a piecewise-exponential hazard: lambda_1 * exp(beta X)
on [0, delta), lambda_2 * exp(beta X) afterwards.  Follow-up is cut by an
exponential censoring time capped administratively at eta.

Replicates use a counter-based generator (Philox) keyed on (seed, replicate),
so any replicate can be regenerated independently and results do not depend
on how replicates are scheduled across workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cea import Z_95, CostSpec, cost_effectiveness
from .cox import FitConfig, fit
from .data_model import (CovariateProfile, Dataset, DelaySpec, RawSubject,
                         split_switcher_history)
from .rmst import rmst_dly, rmst_dst, rmst_strt

__all__ = [
    "SimDesign",
    "Scenario",
    "StudyResult",
    "generate_dataset",
    "theoretical_values",
    "limiting_icer",
    "run_study",
]


@dataclass(frozen=True)
class SimDesign:
    n: int = 1000
    baseline_rate_1: float = 1.0
    baseline_rate_2: float = 0.5
    log_hr: float = -2.0
    covariate_prob: float = 0.9
    censor_rate: float = 0.01
    eta: float = 10.0
    delay_fraction: float = 0.5
    delay_sampler: DelaySpec | str = "uniform01"
    cost_1: float = 115.0
    cost_2: float = 330.0
    theta: float = 1352.0
    seed: int = 20260826

    def costs(self) -> CostSpec:
        return CostSpec({1: self.cost_1, 2: self.cost_2}, self.theta)


@dataclass(frozen=True)
class Scenario:
    """Analysis scenario evaluated on each replicate."""

    kind: str                      # "none", "strt", "dly", or "dst"
    r: float | None = None
    a: float | None = None
    delays: DelaySpec | None = None

    @property
    def label(self) -> str:
        if self.kind == "strt":
            return f"strt@{self.r:g}"
        if self.kind == "dly":
            return f"dly@{self.a:g}"
        return self.kind


def _replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(seed << 64) + replicate))


def _sample_delays(design: SimDesign, rng: np.random.Generator,
                   size: int) -> np.ndarray:
    sampler = design.delay_sampler
    if sampler == "uniform01":
        return rng.random(size)
    if isinstance(sampler, DelaySpec):
        if sampler.is_discrete:
            atoms = sampler.resolve_atoms()
            w = np.array([a[0] for a in atoms])
            d = np.array([a[1] for a in atoms])
            return d[rng.choice(len(d), size=size, p=w / w.sum())]
        out = np.where(rng.random(size) < sampler.point_mass_at_zero, 0.0,
                       rng.exponential(1.0 / sampler.rate, size))
        return out
    raise ValueError(f"unknown delay sampler {sampler!r}")


def generate_dataset(design: SimDesign,
                     replicate: int = 0) -> tuple[Dataset, dict]:
    """Generate one synthetic dataset plus observed-data diagnostics."""
    rng = _replicate_rng(design.seed, replicate)
    n = design.n
    X = (rng.random(n) < design.covariate_prob).astype(float)
    group2 = rng.random(n) < 0.5
    delta = np.zeros(n)
    delayed = group2 & (rng.random(n) < design.delay_fraction)
    delta[delayed] = _sample_delays(design, rng, int(delayed.sum()))

    rel = np.exp(design.log_hr * X)
    rate1 = design.baseline_rate_1 * rel
    rate2 = design.baseline_rate_2 * rel
    E = rng.exponential(1.0, n)
    T = np.where(~group2 | (E < rate1 * delta),
                 E / rate1,
                 delta + (E - rate1 * delta) / rate2)
    if design.censor_rate > 0:
        C = np.minimum(rng.exponential(1.0 / design.censor_rate, n), design.eta)
    else:
        C = np.full(n, design.eta)
    followup = np.minimum(T, C)
    died = T <= C

    records = []
    for i in range(n):
        switched = bool(group2[i]) and followup[i] > delta[i]
        raw = RawSubject(subject_id=i, followup_end=float(followup[i]),
                         died=bool(died[i]), covariates=(float(X[i]),),
                         switch_to=2 if switched else None,
                         switch_time=float(delta[i]) if switched else None)
        records.extend(split_switcher_history(raw))
    dataset = Dataset(records, eta=design.eta)

    n2 = max(int(group2.sum()), 1)
    n1 = max(int((~group2).sum()), 1)
    diagnostics = {
        "censor_rate_1": float(np.sum(~group2 & ~died)) / n1,
        "censor_rate_2": float(np.sum(group2 & ~died)) / n2,
        "missing_treatment_2": float(np.sum(group2 & (followup <= delta)
                                            & (delta > 0))) / n2,
        "n_group_1": int((~group2).sum()),
        "n_group_2": int(group2.sum()),
    }
    return dataset, diagnostics


def _true_profile(design: SimDesign) -> list[tuple[float, float]]:
    p1 = design.covariate_prob
    return [(1.0 - p1, 0.0), (p1, 1.0)]


def _mu_strt(design: SimDesign, stratum: int, r: float) -> float:
    lam = design.baseline_rate_1 if stratum == 1 else design.baseline_rate_2
    total = 0.0
    for w, x in _true_profile(design):
        rate = lam * math.exp(design.log_hr * x)
        total += w * (1.0 - math.exp(-rate * (design.eta - r))) / rate
    return total


def _mu_dly_parts(design: SimDesign, stratum: int, a: float) -> tuple[float, float]:
    """(head, tail) of the delayed-initiation mean for one stratum."""
    lam1 = design.baseline_rate_1
    lamj = design.baseline_rate_1 if stratum == 1 else design.baseline_rate_2
    head = 0.0
    tail = 0.0
    for w, x in _true_profile(design):
        rel = math.exp(design.log_hr * x)
        r1 = lam1 * rel
        rj = lamj * rel
        head += w * (1.0 - math.exp(-r1 * a)) / r1
        tail += w * math.exp(-r1 * a) \
            * (1.0 - math.exp(-rj * (design.eta - a))) / rj
    return head, tail


def limiting_icer(design: SimDesign) -> float:
    """Closed-form ICER limit as the horizon grows (exponential hazards)."""
    l1, l2 = design.baseline_rate_1, design.baseline_rate_2
    return (design.cost_2 * l1 - design.cost_1 * l2) / (l1 - l2)


def theoretical_values(design: SimDesign, scenario: Scenario) -> dict:
    """True scenario means, tails, ICER, and INB under the generating model."""
    if scenario.kind in ("none", "strt"):
        r = scenario.r or 0.0
        mu1 = _mu_strt(design, 1, r)
        mu2 = _mu_strt(design, 2, r)
        t1, t2 = mu1, mu2
    elif scenario.kind == "dly":
        h1, t1 = _mu_dly_parts(design, 1, scenario.a)
        h2, t2 = _mu_dly_parts(design, 2, scenario.a)
        mu1, mu2 = h1 + t1, h2 + t2
    elif scenario.kind == "dst":
        atoms = scenario.delays.resolve_atoms()
        mu1 = mu2 = t1 = t2 = 0.0
        for w, d in atoms:
            h1d, t1d = _mu_dly_parts(design, 1, d)
            h2d, t2d = _mu_dly_parts(design, 2, d)
            mu1 += w * (h1d + t1d)
            mu2 += w * (h2d + t2d)
            t1 += w * t1d
            t2 += w * t2d
    else:
        raise ValueError(f"unknown scenario kind {scenario.kind!r}")
    c1, c2 = design.cost_1, design.cost_2
    out = {
        "mu1": mu1, "mu2": mu2, "tail1": t1, "tail2": t2,
        "icer": (c2 * t2 - c1 * t1) / (t2 - t1),
        "inb": design.theta * (t2 - t1) - (c2 * t2 - c1 * t1),
    }
    return out


def _scenario_estimates(fitres, dataset, scenario: Scenario, design: SimDesign):
    profile = CovariateProfile.observed()
    if scenario.kind in ("none", "strt"):
        r = scenario.r or 0.0
        e1 = rmst_strt(fitres, 1, profile, r, design.eta, dataset)
        e2 = rmst_strt(fitres, 2, profile, r, design.eta, dataset)
    elif scenario.kind == "dly":
        e1 = rmst_dly(fitres, 1, profile, scenario.a, design.eta, dataset)
        e2 = rmst_dly(fitres, 2, profile, scenario.a, design.eta, dataset)
    elif scenario.kind == "dst":
        e1 = rmst_dst(fitres, 1, profile, scenario.delays, design.eta, dataset)
        e2 = rmst_dst(fitres, 2, profile, scenario.delays, design.eta, dataset)
    else:
        raise ValueError(f"unknown scenario kind {scenario.kind!r}")
    return e1, e2


def _run_replicate(args) -> dict:
    design, scenarios, replicate = args
    dataset, diagnostics = generate_dataset(design, replicate)
    try:
        fitres = fit(dataset, FitConfig())
    except Exception as exc:  # noqa: BLE001 - replicate failures are counted
        return {"replicate": replicate, "failed": repr(exc),
                "diagnostics": diagnostics}
    out = {"replicate": replicate, "failed": None, "diagnostics": diagnostics,
           "scenarios": {}}
    for sc in scenarios:
        try:
            e1, e2 = _scenario_estimates(fitres, dataset, sc, design)
            report = cost_effectiveness(fitres, e1, e2, design.costs(),
                                        design.eta)
            out["scenarios"][sc.label] = {
                "mu1": (e1.value, e1.se),
                "mu2": (e2.value, e2.se),
                "icer": (None, None) if report.icer is None
                else (report.icer.value, report.icer.se),
                "inb": (report.inb.value, report.inb.se),
            }
        except Exception as exc:  # noqa: BLE001
            out["scenarios"][sc.label] = {"failed": repr(exc)}
    return out


@dataclass
class StudyResult:
    design: SimDesign
    scenarios: list[Scenario]
    replicates: int
    failures: int
    rows: list[dict]
    diagnostics: dict
    truths: dict = field(default_factory=dict)


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("CEASURV_WORKERS", "1")))
    except ValueError:
        return 1


def run_study(design: SimDesign, scenarios: list[Scenario], replicates: int,
              workers: int | None = None) -> StudyResult:
    """Run a Monte Carlo study and summarise bias/coverage per estimand.

    Output is independent of worker count: replicates are keyed streams and
    the reduction runs in replicate order.
    """
    workers = workers if workers is not None else _default_workers()
    tasks = [(design, scenarios, rep) for rep in range(replicates)]
    if workers <= 1:
        results = [_run_replicate(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_replicate, tasks, chunksize=8))
    results.sort(key=lambda r: r["replicate"])

    failures = sum(1 for r in results if r["failed"] is not None)
    ok = [r for r in results if r["failed"] is None]
    diag_keys = ("censor_rate_1", "censor_rate_2", "missing_treatment_2")
    diagnostics = {k: float(np.mean([r["diagnostics"][k] for r in results]))
                   for k in diag_keys}

    rows: list[dict] = []
    truths: dict = {}
    for sc in scenarios:
        truth = theoretical_values(design, sc)
        truths[sc.label] = truth
        true_by_q = {"mu1": truth["mu1"], "mu2": truth["mu2"],
                     "icer": truth["icer"], "inb": truth["inb"]}
        for q, true_val in true_by_q.items():
            vals, ses = [], []
            for r in ok:
                cell = r["scenarios"].get(sc.label, {})
                if "failed" in cell or cell.get(q, (None,))[0] is None:
                    continue
                v, s = cell[q]
                vals.append(v)
                ses.append(s)
            if not vals:
                continue
            vals_a = np.array(vals)
            ses_a = np.array([s for s in ses if s is not None]) \
                if all(s is not None for s in ses) else None
            mean = float(np.mean(vals_a))
            sd = float(np.std(vals_a, ddof=1)) if len(vals_a) > 1 else float("nan")
            row = {
                "scenario": sc.label,
                "quantity": q,
                "true": true_val,
                "mean": mean,
                "sd": sd,
                "n_used": len(vals_a),
                "rel_bias_pct": 100.0 * (mean - true_val) / true_val,
                "rel_bias_mc_se_pct": 100.0 * sd / math.sqrt(len(vals_a))
                / abs(true_val),
            }
            if ses_a is not None:
                lo = vals_a - Z_95 * ses_a
                hi = vals_a + Z_95 * ses_a
                row["mean_se"] = float(np.mean(ses_a))
                row["se_over_sd"] = float(np.mean(ses_a) / sd) if sd else None
                row["coverage"] = float(np.mean((lo <= true_val)
                                                & (true_val <= hi)))
            rows.append(row)
    return StudyResult(design=design, scenarios=list(scenarios),
                       replicates=replicates, failures=failures, rows=rows,
                       diagnostics=diagnostics, truths=truths)
