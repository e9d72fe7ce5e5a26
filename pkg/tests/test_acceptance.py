"""End-to-end acceptance gate.

Each test prints one `[acceptance] <name>: PASS/FAIL` line (run pytest with
`-s` to see them) and then asserts, so a red test always comes with its
one-line verdict in the log.
"""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from ceasurv.cea import icer, icer_gradient, inb
from ceasurv.cox import fit, partial_likelihood
from ceasurv.data_model import CovariateProfile, DelaySpec
from ceasurv.rmst import rmst_dly, rmst_dst, rmst_strt
from ceasurv.simlab import (Scenario, SimDesign, generate_dataset,
                            limiting_icer, run_study, theoretical_values)

from conftest import naive_partial_loglik, random_two_stratum_dataset

ROOT = Path(__file__).resolve().parent.parent


def verdict(name: str, ok: bool, detail: str) -> None:
    print(f"[acceptance] {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


def test_limiting_icer_closed_form():
    """Criterion 1: limiting ICER hits 383.75 / 545 / 1190 exactly."""
    worst = 0.0
    for lam2, expected in ((0.2, 383.75), (0.5, 545.0), (0.8, 1190.0)):
        got = limiting_icer(SimDesign(baseline_rate_2=lam2))
        worst = max(worst, abs(got - expected))
    verdict("limiting-icer", worst <= 1e-9, f"max abs error {worst:.3g}")


def test_closed_form_consistency_large_n():
    """Criterion 2: one n=100,000 no-delay replicate recovers the closed-form
    restricted means within 0.5% and the ICER within 2%, in under 60 s."""
    t0 = time.time()
    design = SimDesign(n=100_000, delay_fraction=0.0)
    truth = theoretical_values(design, Scenario("none"))
    ds, _ = generate_dataset(design, replicate=0)
    f = fit(ds)
    prof = CovariateProfile.observed()
    e1 = rmst_strt(f, 1, prof, 0.0, design.eta, ds)
    e2 = rmst_strt(f, 2, prof, 0.0, design.eta, ds)
    icer_hat = icer(e1.value, e2.value, design.cost_1, design.cost_2)
    r1 = abs(e1.value / truth["mu1"] - 1)
    r2 = abs(e2.value / truth["mu2"] - 1)
    ri = abs(icer_hat / truth["icer"] - 1)
    elapsed = time.time() - t0
    ok = r1 <= 0.005 and r2 <= 0.005 and ri <= 0.02 and elapsed < 60
    verdict("closed-form-consistency",
            ok, f"rmst rel err {r1:.2e}/{r2:.2e}, icer rel err {ri:.2e},"
                f" {elapsed:.1f}s")


def test_bias_and_coverage():
    """Criterion 3: 200 replicates at n=1000 for scenarios {immediate,
    truncation r=0.5, delay a=0.5} under treatment hazard ratios 0.2 and 0.5:
    RMST relative bias within 1%, 95% CI coverage in [0.90, 0.98] for the
    restricted means and the INB."""
    scenarios = [Scenario("none"), Scenario("strt", r=0.5),
                 Scenario("dly", a=0.5)]
    problems = []
    for lam2 in (0.2, 0.5):
        res = run_study(SimDesign(n=1000, baseline_rate_2=lam2, seed=314),
                        scenarios, replicates=200, workers=1)
        for row in res.rows:
            tag = f"hr={lam2} {row['scenario']}/{row['quantity']}"
            if row["quantity"] in ("mu1", "mu2") \
                    and abs(row["rel_bias_pct"]) > 1.0:
                problems.append(f"{tag} bias {row['rel_bias_pct']:.2f}%")
            if row["quantity"] in ("mu1", "mu2", "inb") \
                    and not 0.90 <= row["coverage"] <= 0.98:
                problems.append(f"{tag} coverage {row['coverage']:.3f}")
    verdict("bias-and-coverage", not problems,
            "; ".join(problems) or "all bias <= 1%, coverage in [0.90, 0.98]")


def test_single_atom_delay_distribution_degenerates():
    """Criterion 4: a one-atom delay distribution reproduces the fixed-delay
    estimate and variance to 1e-12 relative on arbitrary fits."""
    worst = 0.0
    for seed in (3, 17, 92):
        rng = np.random.default_rng(seed)
        ds = random_two_stratum_dataset(rng, n=60)
        f = fit(ds)
        prof = [(1.0, np.array([float(rng.normal())]))]
        a = float(rng.uniform(0.2, 1.0))
        for stratum in (1, 2):
            dst = rmst_dst(f, stratum, prof, DelaySpec.discrete([(1.0, a)]),
                           ds.eta)
            dly = rmst_dly(f, stratum, prof, a, ds.eta)
            for x, y in ((dst.value, dly.value),
                         (dst.variance, dly.variance),
                         (dst.value_tail, dly.value_tail),
                         (dst.variance_tail, dly.variance_tail)):
                worst = max(worst, abs(x / y - 1))
    verdict("dst-degenerate-equivalence", worst <= 1e-12,
            f"max rel diff {worst:.3g}")


def test_fixed_covariate_identities():
    """Criterion 5: at a fixed covariate value, the delayed-start ICER equals
    the truncation ICER at r=a, and the delayed INB equals the stratum-1
    survival at a times the truncation INB; 100 randomized instances."""
    c1, c2, theta = 115.0, 330.0, 1352.0
    worst = 0.0
    count = 0
    for seed in range(10):
        rng = np.random.default_rng(1000 + seed)
        ds = random_two_stratum_dataset(rng, n=80)
        f = fit(ds)
        for _ in range(10):
            x = np.array([float(rng.normal(0, 0.8))])
            a = float(rng.uniform(0.2, ds.eta * 0.6))
            prof = [(1.0, x)]
            s1 = rmst_strt(f, 1, prof, a, ds.eta)
            s2 = rmst_strt(f, 2, prof, a, ds.eta)
            d1 = rmst_dly(f, 1, prof, a, ds.eta)
            d2 = rmst_dly(f, 2, prof, a, ds.eta)
            icer_s = icer(s1.value, s2.value, c1, c2)
            icer_d = icer(d1.value_tail, d2.value_tail, c1, c2)
            inb_s = inb(s1.value, s2.value, c1, c2, theta)
            inb_d = inb(d1.value_tail, d2.value_tail, c1, c2, theta)
            surv_a = f.survival(1, x, a)
            worst = max(worst, abs(icer_d / icer_s - 1),
                        abs(inb_d / (surv_a * inb_s) - 1))
            count += 1
    verdict("fixed-x-identities", count == 100 and worst <= 1e-9,
            f"{count} instances, max rel diff {worst:.3g}")


def test_small_instance_oracles(three_subject_dataset, small_cov_dataset):
    """Criterion 6: coefficient vs grid-search oracle (1e-4), baseline hazard
    vs the hand Nelson-Aalen jumps, variance pieces vs hand-expanded sums."""
    # grid-search oracle on a 3-record dataset (n <= 8)
    f = fit(small_cov_dataset)
    grid = np.linspace(-5, 5, 2001)
    lls = [naive_partial_loglik(small_cov_dataset, [b]) for b in grid]
    b0 = grid[int(np.argmax(lls))]
    fine = np.linspace(b0 - 0.01, b0 + 0.01, 2001)
    lls = [naive_partial_loglik(small_cov_dataset, [b]) for b in fine]
    beta_oracle = fine[int(np.argmax(lls))]
    err_beta = abs(float(f.beta[0]) - beta_oracle)

    # Breslow jumps at beta=0 are the Nelson-Aalen increments 1/3 and 1/2
    f0 = fit(three_subject_dataset)
    lam = f0.cumhaz(1, np.array([1.0, 2.0]))
    err_na = max(abs(lam[0] - 1 / 3), abs(lam[1] - 1 / 3 - 1 / 2))

    # hand-expanded double sum for the two-event dataset
    est = rmst_strt(f0, 1, [(1.0, np.zeros(0))], 0.0, 3.0)
    hand = (1 / 9) * math.exp(-2 / 3) + (2 / 9) * math.exp(-7 / 6) \
        + (13 / 36) * math.exp(-5 / 3)
    err_var = abs(est.variance / hand - 1)

    ok = err_beta <= 1e-4 and err_na <= 1e-14 and err_var <= 1e-12
    verdict("small-instance-oracles", ok,
            f"beta err {err_beta:.2e}, nelson-aalen err {err_na:.2e},"
            f" variance rel err {err_var:.2e}")


def test_derivative_suite():
    """Criterion 7: likelihood score/Hessian and the ICER gradient match
    central finite differences within 1e-5 relative at randomized points."""
    rng = np.random.default_rng(77)
    ds = random_two_stratum_dataset(rng, n=60, p=2)
    h = 1e-6
    worst = 0.0
    for _ in range(5):
        beta = rng.normal(0, 0.5, 2)
        _, score, info = partial_likelihood(ds, beta)
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            lu, su, _ = partial_likelihood(ds, beta + e)
            ld, sd, _ = partial_likelihood(ds, beta - e)
            worst = max(worst, abs(score[k] / ((lu - ld) / (2 * h)) - 1))
            for m in range(2):
                fd = (su[m] - sd[m]) / (2 * h)
                worst = max(worst, abs(-info[k, m] / fd - 1))
    for _ in range(5):
        mu1, muj = rng.uniform(2, 6, 2)
        if abs(muj - mu1) < 0.2:
            continue
        g = icer_gradient(mu1, muj, 115.0, 330.0)
        fd1 = (icer(mu1 + h, muj, 115.0, 330.0)
               - icer(mu1 - h, muj, 115.0, 330.0)) / (2 * h)
        fdj = (icer(mu1, muj + h, 115.0, 330.0)
               - icer(mu1, muj - h, 115.0, 330.0)) / (2 * h)
        worst = max(worst, abs(g[0] / fd1 - 1), abs(g[1] / fdj - 1))
    verdict("derivative-suite", worst <= 1e-5, f"max rel err {worst:.3g}")


def test_se_calibration():
    """Criterion 8: mean estimated SE over Monte Carlo SD within [0.85, 1.15]
    for every scenario over 500 replicates at n=1000, hazard ratio 0.5."""
    scenarios = [Scenario("none"), Scenario("strt", r=0.5),
                 Scenario("dly", a=0.5),
                 Scenario("dst", delays=DelaySpec.discrete(
                     [(0.2, d) for d in (0.1, 0.3, 0.5, 0.7, 0.9)]))]
    res = run_study(SimDesign(n=1000, seed=2718), scenarios,
                    replicates=500, workers=1)
    problems = []
    ratios = []
    for row in res.rows:
        if row["quantity"] not in ("mu1", "mu2", "inb"):
            continue
        ratio = row["se_over_sd"]
        ratios.append(f"{row['scenario']}/{row['quantity']}={ratio:.3f}")
        if not 0.85 <= ratio <= 1.15:
            problems.append(ratios[-1])
    verdict("se-calibration", not problems,
            "; ".join(problems) or "; ".join(ratios))


def test_diagnostics_reproduction():
    """Criterion 9: generated censoring rates and share of group-2 subjects
    dying before treatment start match the published unit-baseline grid
    within 0.03, plus 0.005 for the grid values being rounded to two
    decimals."""
    # (delay fraction, hazard ratio) -> (censor j=1, censor j=2, % missing)
    published = {
        (0.0, 0.2): (0.26, 0.71, 0.00), (0.0, 0.5): (0.26, 0.48, 0.00),
        (0.0, 0.8): (0.26, 0.33, 0.00),
        (0.1, 0.2): (0.26, 0.71, 0.01), (0.1, 0.5): (0.26, 0.48, 0.01),
        (0.1, 0.8): (0.26, 0.33, 0.02),
        (0.5, 0.2): (0.26, 0.71, 0.03), (0.5, 0.5): (0.26, 0.48, 0.05),
        (0.5, 0.8): (0.26, 0.33, 0.08),
    }
    tol = 0.03 + 0.005
    problems = []
    for (frac, lam2), (c1, c2, miss) in published.items():
        design = SimDesign(n=10_000, baseline_rate_2=lam2,
                           delay_fraction=frac, seed=6021)
        _, diag = generate_dataset(design, replicate=0)
        for key, target in (("censor_rate_1", c1), ("censor_rate_2", c2),
                            ("missing_treatment_2", miss)):
            gap = abs(diag[key] - target)
            if gap > tol:
                problems.append(f"delay={frac} hr={lam2} {key}:"
                                f" {diag[key]:.3f} vs {target} (gap {gap:.3f})")
    verdict("diagnostics-reproduction", not problems,
            "; ".join(problems) or f"all cells within {tol}")


def test_simulation_determinism(tmp_path):
    """Criterion 10: the simulation command writes byte-identical structured
    reports across repeated runs and across 1 vs 8 worker processes."""
    args = [sys.executable, "-m", "ceasurv.cli", "simulate", "--n", "200",
            "--replicates", "8", "--seed", "12345", "--scenarios",
            "none,dly@0.5"]
    outs = {}
    for name, workers in (("a", 1), ("b", 1), ("c", 8)):
        out = tmp_path / name
        proc = subprocess.run(args + ["--workers", str(workers),
                                      "--out", str(out)],
                              capture_output=True, text=True, cwd=ROOT)
        assert proc.returncode == 0, proc.stderr
        outs[name] = (out.with_suffix(".jsonl").read_bytes(),
                      out.with_suffix(".txt").read_bytes())
    ok = outs["a"] == outs["b"] == outs["c"]
    verdict("simulation-determinism", ok,
            "same bytes across reruns and 1 vs 8 workers" if ok
            else "outputs differ")
