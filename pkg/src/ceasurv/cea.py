"""Incremental cost-effectiveness ratio and incremental net benefit.

Both measures are built from the post-delay ("tail") restricted means of the
reference group (stratum 1) and a comparison group j, since only post-
initiation person-time accrues the comparison treatment's cost:

    ICER = (c_j * mu_j - c_1 * mu_1) / (mu_j - mu_1)
    INB(theta) = theta * (mu_j - mu_1) - (c_j * mu_j - c_1 * mu_1)

with c the per-unit-time costs and theta the willingness-to-pay rate.  The
ICER standard error comes from the delta method with the analytic gradient;
the INB is linear, so its variance is exact given the 2 x 2 covariance of
(mu_1, mu_j).  INB(theta) is affine in theta and crosses zero at the ICER.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cox import CoxFit
from .rmst import RmstEstimate, tail_covariance

__all__ = [
    "Z_95",
    "CostSpec",
    "CeInterval",
    "CeReport",
    "icer",
    "icer_gradient",
    "icer_variance",
    "inb",
    "inb_variance",
    "inb_curve",
    "cost_effectiveness",
]

Z_95 = 1.959964
DENOM_FLOOR = 1e-9


@dataclass(frozen=True)
class CostSpec:
    """Per-unit-time treatment costs by stratum and willingness to pay."""

    cost_per_time: dict[int, float]
    theta: float
    currency: str = "USD"

    def cost(self, stratum: int) -> float:
        return float(self.cost_per_time[stratum])


@dataclass(frozen=True)
class CeInterval:
    value: float
    se: float | None

    @property
    def lo(self) -> float | None:
        return None if self.se is None else self.value - Z_95 * self.se

    @property
    def hi(self) -> float | None:
        return None if self.se is None else self.value + Z_95 * self.se


def icer(mu_1: float, mu_j: float, c_1: float, c_j: float,
         denom_floor: float = DENOM_FLOOR) -> float:
    denom = mu_j - mu_1
    if abs(denom) < denom_floor:
        raise ZeroDivisionError(
            f"restricted-mean difference {denom:.3g} below floor {denom_floor:g}")
    return (c_j * mu_j - c_1 * mu_1) / denom


def icer_gradient(mu_1: float, mu_j: float, c_1: float, c_j: float) -> np.ndarray:
    """d(ICER)/d(mu_1, mu_j)."""
    denom = mu_j - mu_1
    num = c_j * mu_j - c_1 * mu_1
    return np.array([(-c_1 * denom + num) / denom ** 2,
                     (c_j * denom - num) / denom ** 2])


def icer_variance(mu_1: float, mu_j: float, cov: np.ndarray, c_1: float,
                  c_j: float) -> float:
    g = icer_gradient(mu_1, mu_j, c_1, c_j)
    return float(g @ cov @ g)


def inb(mu_1: float, mu_j: float, c_1: float, c_j: float, theta: float) -> float:
    return theta * (mu_j - mu_1) - (c_j * mu_j - c_1 * mu_1)


def inb_variance(cov: np.ndarray, c_1: float, c_j: float, theta: float) -> float:
    """Exact variance of the linear INB: coefficients (c_1 - theta, theta - c_j)."""
    g = np.array([c_1 - theta, theta - c_j])
    return float(g @ cov @ g)


@dataclass
class CeReport:
    """Cost-effectiveness contrast between stratum 1 and a comparison group."""

    scenario: str
    stratum: int
    eta: float
    costs: CostSpec
    mu_1: CeInterval
    mu_j: CeInterval
    mu_tail_1: CeInterval
    mu_tail_j: CeInterval
    tail_cov: np.ndarray            # 2 x 2 covariance of (mu_tail_1, mu_tail_j)
    icer: CeInterval | None
    inb: CeInterval | None
    warnings: list[str] = field(default_factory=list)


def cost_effectiveness(fit: CoxFit, est_1: RmstEstimate, est_j: RmstEstimate,
                       costs: CostSpec, eta: float,
                       denom_floor: float = DENOM_FLOOR) -> CeReport:
    """Assemble the ICER/INB report from the two groups' estimates."""
    if est_1.stratum != 1:
        raise ValueError("the reference estimate must be for stratum 1")
    c_1 = costs.cost(1)
    c_j = costs.cost(est_j.stratum)
    warnings = list(est_1.warnings) + [w for w in est_j.warnings
                                       if w not in est_1.warnings]
    have_var = est_1.variance_tail is not None and est_j.variance_tail is not None
    if have_var:
        cov_1j = tail_covariance(fit, est_1, est_j)
        cov = np.array([[est_1.variance_tail, cov_1j],
                        [cov_1j, est_j.variance_tail]])
    else:
        cov = np.full((2, 2), np.nan)
        warnings.append("variances unavailable; intervals omitted")
    t1, tj = est_1.value_tail, est_j.value_tail
    icer_entry = None
    try:
        val = icer(t1, tj, c_1, c_j, denom_floor)
        se = np.sqrt(icer_variance(t1, tj, cov, c_1, c_j)) if have_var else None
        icer_entry = CeInterval(val, None if se is None else float(se))
    except ZeroDivisionError as exc:
        warnings.append(f"ICER undefined: {exc}")
    inb_val = inb(t1, tj, c_1, c_j, costs.theta)
    inb_se = np.sqrt(inb_variance(cov, c_1, c_j, costs.theta)) if have_var else None
    return CeReport(
        scenario=est_j.scenario, stratum=est_j.stratum, eta=eta, costs=costs,
        mu_1=CeInterval(est_1.value, est_1.se),
        mu_j=CeInterval(est_j.value, est_j.se),
        mu_tail_1=CeInterval(t1, est_1.se_tail),
        mu_tail_j=CeInterval(tj, est_j.se_tail),
        tail_cov=cov,
        icer=icer_entry,
        inb=CeInterval(inb_val, None if inb_se is None else float(inb_se)),
        warnings=warnings)


def inb_curve(report: CeReport, thetas) -> list[dict]:
    """INB and its interval across willingness-to-pay values."""
    c_1 = report.costs.cost(1)
    c_j = report.costs.cost(report.stratum)
    t1, tj = report.mu_tail_1.value, report.mu_tail_j.value
    rows = []
    for theta in np.asarray(thetas, dtype=float):
        val = inb(t1, tj, c_1, c_j, theta)
        if np.all(np.isfinite(report.tail_cov)):
            se = float(np.sqrt(inb_variance(report.tail_cov, c_1, c_j, theta)))
            lo, hi = val - Z_95 * se, val + Z_95 * se
        else:
            se = lo = hi = None
        rows.append({"theta": float(theta), "inb": val, "se": se,
                     "lo": lo, "hi": hi})
    return rows
