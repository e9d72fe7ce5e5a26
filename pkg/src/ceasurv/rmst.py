"""Restricted-mean survival time under treatment-timing scenarios.

All integrals use the exact quadrature for step survival curves: the curve is
constant between event times, so the integral over a window is a finite sum
of survival values at the interval left endpoints times the interval widths.

Scenarios
---------
"strt": survival measured from an initiation time r, conditional on being
alive at r; the estimate integrates the conditional curve over [r, eta].

"dly": a subject follows the stratum-1 curve until the delay a, then (if
alive) the stratum-j curve conditionally from a.  The estimate is the head
integral of the stratum-1 curve over [0, a] plus the tail integral of the
spliced curve over [a, eta]; the tail is the component entering
cost-effectiveness contrasts.

"dst": the delay-averaged scenario, a weighted mixture of "dly" estimates
over a delay distribution.  Discrete distributions get exact variances via
pairwise covariances; continuous mixtures are integrated by Gauss-Legendre
quadrature and carry no variance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre

from .asymptotics import (Component, beta_cov, build_component, mg_cov,
                          mg_point_cov, point_kernel)
from .cox import CoxFit
from .data_model import CovariateProfile, Dataset, DelaySpec, resolve_profile

__all__ = [
    "RmstEstimate",
    "UnsupportedVariance",
    "rmst_strt",
    "rmst_dly",
    "rmst_dst",
    "cov_dly_pair",
    "tail_covariance",
    "full_covariance",
]


class UnsupportedVariance(Exception):
    pass


@dataclass
class RmstEstimate:
    """Point estimate with variance and the kernels needed for covariances.

    value/variance describe the full scenario mean; value_tail/variance_tail
    describe the post-delay component used by cost contrasts (for "strt" the
    two coincide).  psi/psi_tail are exact beta-gradients; components holds
    the windowed integral pieces for martingale covariances.
    """

    scenario: str
    stratum: int
    value: float
    variance: float | None
    value_tail: float
    variance_tail: float | None
    psi: np.ndarray
    psi_tail: np.ndarray
    window: tuple[float, float]
    components: dict = field(default_factory=dict, repr=False)
    atoms: list = field(default_factory=list, repr=False)  # (w, dly-estimate)
    warnings: list[str] = field(default_factory=list)

    @property
    def se(self) -> float | None:
        return None if self.variance is None else float(np.sqrt(self.variance))

    @property
    def se_tail(self) -> float | None:
        return None if self.variance_tail is None \
            else float(np.sqrt(self.variance_tail))


def _atoms(fit: CoxFit, profile, dataset: Dataset | None):
    if isinstance(profile, CovariateProfile):
        if dataset is None:
            raise ValueError("resolving this profile requires the dataset")
        return resolve_profile(profile, dataset)
    return list(profile)  # already (weight, x) pairs


def rmst_strt(fit: CoxFit, stratum: int, profile, r: float, eta: float,
              dataset: Dataset | None = None, wedge: str = "min") -> RmstEstimate:
    """Mean survival over [r, eta] starting treatment at r, given alive at r."""
    if not 0.0 <= r < eta:
        raise ValueError("need 0 <= r < eta")
    atoms = _atoms(fit, profile, dataset)
    comp = build_component(fit, stratum, atoms, r, eta, kind="plain", cond=r)
    var = mg_cov(fit, comp, comp, wedge) + beta_cov(fit, comp.psi, comp.psi)
    warnings = []
    if comp.n_events == 0:
        warnings.append(f"no stratum-{stratum} events inside ({r}, {eta})")
    return RmstEstimate(scenario="strt", stratum=stratum, value=comp.value,
                        variance=var, value_tail=comp.value, variance_tail=var,
                        psi=comp.psi, psi_tail=comp.psi, window=(r, eta),
                        components={"main": comp}, warnings=warnings)


def rmst_dly(fit: CoxFit, stratum: int, profile, a: float, eta: float,
             dataset: Dataset | None = None, wedge: str = "min") -> RmstEstimate:
    """Mean survival over [0, eta] with treatment initiation delayed to a."""
    if not 0.0 <= a < eta:
        raise ValueError("need 0 <= a < eta")
    atoms = _atoms(fit, profile, dataset)
    if stratum == 1:
        full = build_component(fit, 1, atoms, 0.0, eta, kind="plain", cond=0.0)
        tail = build_component(fit, 1, atoms, a, eta, kind="plain", cond=0.0)
        var = mg_cov(fit, full, full, wedge) + beta_cov(fit, full.psi, full.psi)
        var_tail = mg_cov(fit, tail, tail, wedge) \
            + beta_cov(fit, tail.psi, tail.psi)
        return RmstEstimate(scenario="dly", stratum=1, value=full.value,
                            variance=var, value_tail=tail.value,
                            variance_tail=var_tail, psi=full.psi,
                            psi_tail=tail.psi, window=(0.0, eta),
                            components={"full": full, "tail": tail})
    head = build_component(fit, 1, atoms, 0.0, a, kind="plain", cond=0.0)
    tail = build_component(fit, stratum, atoms, a, eta, kind="spliced", cond=a)
    psi = head.psi + tail.psi
    # The spliced tail depends on the stratum-1 baseline only through its
    # cumulative hazard at a, with sensitivity equal to the tail's own
    # gamma-mass; this couples the tail with the pre-delay head through the
    # stratum-1 martingale and adds a point-mass variance of its own.
    mass = _tail_mass(tail)
    point = point_kernel(fit, 1, a)
    mg_tail = mg_cov(fit, tail, tail, wedge) + mass * mass * point
    var = mg_cov(fit, head, head, wedge) + mg_tail \
        + 2.0 * mass * mg_point_cov(fit, head, a, wedge) \
        + beta_cov(fit, psi, psi)
    var_tail = mg_tail + beta_cov(fit, tail.psi, tail.psi)
    warnings = []
    if tail.n_events == 0:
        warnings.append(f"no stratum-{stratum} events inside ({a}, {eta})")
    return RmstEstimate(scenario="dly", stratum=stratum,
                        value=head.value + tail.value, variance=var,
                        value_tail=tail.value, variance_tail=var_tail,
                        psi=psi, psi_tail=tail.psi, window=(0.0, eta),
                        components={"head": head, "tail": tail},
                        warnings=warnings)


def _tail_mass(tail: Component) -> float:
    """Sensitivity of a spliced tail to the stratum-1 cumulative hazard at
    the delay: the tail's gamma-mass."""
    return float(tail.gamma @ tail.widths)


def cov_dly_pair(fit: CoxFit, est_l: RmstEstimate, est_h: RmstEstimate,
                 profile=None, dataset: Dataset | None = None,
                 wedge: str = "min") -> tuple[float, float]:
    """(full, tail) covariance of two same-stratum delayed estimates.

    The head (pre-delay) martingale contribution is the double sum truncated
    to events before the earlier delay; the tail contribution combines the
    post-delay stratum-j martingale with the point-mass coupling both tails
    carry through the stratum-1 cumulative hazard at their delays.
    """
    if est_l.stratum != est_h.stratum:
        raise ValueError("cov_dly_pair is for a single stratum")
    beta_full = beta_cov(fit, est_l.psi, est_h.psi)
    beta_tail = beta_cov(fit, est_l.psi_tail, est_h.psi_tail)
    if est_l.stratum == 1:
        tail_l, tail_h = est_l.components["tail"], est_h.components["tail"]
        mg_tail = mg_cov(fit, tail_l, tail_h, wedge)
        full_l, full_h = est_l.components["full"], est_h.components["full"]
        return (mg_cov(fit, full_l, full_h, wedge) + beta_full,
                mg_tail + beta_tail)
    head_l, head_h = est_l.components["head"], est_h.components["head"]
    tail_l, tail_h = est_l.components["tail"], est_h.components["tail"]
    a_l, a_h = tail_l.lo, tail_h.lo
    if head_l.hi == head_h.hi:
        mg_head = mg_cov(fit, head_l, head_h, wedge)
    else:
        atoms = _atoms(fit, profile, dataset)
        a_min = min(head_l.hi, head_h.hi)
        head_min = build_component(fit, 1, atoms, 0.0, a_min, kind="plain",
                                   cond=0.0)
        mg_head = mg_cov(fit, head_min, head_min, wedge)
    mass_l, mass_h = _tail_mass(tail_l), _tail_mass(tail_h)
    a_pair = min(a_l, a_h) if wedge == "min" else max(a_l, a_h)
    point = mass_l * mass_h * point_kernel(fit, 1, a_pair)
    mg_tail = mg_cov(fit, tail_l, tail_h, wedge) + point
    coupling = mass_h * mg_point_cov(fit, head_l, a_h, wedge) \
        + mass_l * mg_point_cov(fit, head_h, a_l, wedge)
    return mg_head + mg_tail + coupling + beta_full, mg_tail + beta_tail


def _gauss_legendre_atoms(spec: DelaySpec, eta: float) -> list[tuple[float, float]]:
    """Quadrature atoms for a zero-inflated exponential delay on [0, eta]."""
    w0 = spec.point_mass_at_zero
    rate = spec.rate
    if not (w0 is not None and 0.0 <= w0 <= 1.0) or not (rate and rate > 0):
        raise ValueError("mixture_exp needs 0 <= point mass <= 1 and rate > 0")
    nodes, weights = legendre.leggauss(64)
    t = 0.5 * eta * (nodes + 1.0)
    w = 0.5 * eta * weights * rate * np.exp(-rate * t) * (1.0 - w0)
    atoms = [(w0, 0.0)] if w0 > 0 else []
    atoms += list(zip(w.tolist(), t.tolist()))
    return atoms


def rmst_dst(fit: CoxFit, stratum: int, profile, delays: DelaySpec, eta: float,
             dataset: Dataset | None = None, wedge: str = "min",
             compute_variance: bool = True) -> RmstEstimate:
    """Delay-distribution-averaged mean survival for one stratum."""
    atoms = _atoms(fit, profile, dataset)
    warnings: list[str] = []
    if delays.is_discrete:
        d_atoms = delays.resolve_atoms(dataset, stratum)
        variance_ok = compute_variance
    else:
        d_atoms = _gauss_legendre_atoms(delays, eta)
        tail_mass = (1.0 - (delays.point_mass_at_zero or 0.0)) \
            * float(np.exp(-delays.rate * eta))
        warnings.append(f"delay mass {tail_mass:.3g} beyond eta ignored")
        if compute_variance:
            raise UnsupportedVariance(
                "continuous delay mixtures support point estimates only")
        variance_ok = False
    parts = [(w, rmst_dly(fit, stratum, atoms, d, eta, wedge=wedge))
             for w, d in d_atoms]
    ws = np.array([w for w, _ in parts])
    value = float(sum(w * e.value for w, e in parts))
    value_tail = float(sum(w * e.value_tail for w, e in parts))
    psi = sum((w * e.psi for w, e in parts),
              start=np.zeros(fit.p))
    psi_tail = sum((w * e.psi_tail for w, e in parts), start=np.zeros(fit.p))
    variance = variance_tail = None
    if variance_ok:
        mg_full = 0.0
        mg_tail = 0.0
        for i, (wl, el) in enumerate(parts):
            for k, (wh, eh) in enumerate(parts):
                if i == k:
                    cf = el.variance - beta_cov(fit, el.psi, el.psi)
                    ct = el.variance_tail - beta_cov(fit, el.psi_tail,
                                                     el.psi_tail)
                else:
                    cf, ct = cov_dly_pair(fit, el, eh, atoms, wedge=wedge)
                    cf -= beta_cov(fit, el.psi, eh.psi)
                    ct -= beta_cov(fit, el.psi_tail, eh.psi_tail)
                mg_full += wl * wh * cf
                mg_tail += wl * wh * ct
        variance = mg_full + beta_cov(fit, psi, psi)
        variance_tail = mg_tail + beta_cov(fit, psi_tail, psi_tail)
    for _, e in parts:
        warnings.extend(w for w in e.warnings if w not in warnings)
    return RmstEstimate(scenario="dst", stratum=stratum, value=value,
                        variance=variance, value_tail=value_tail,
                        variance_tail=variance_tail, psi=psi, psi_tail=psi_tail,
                        window=(0.0, eta), atoms=parts, warnings=warnings)


def _weighted_parts(est: RmstEstimate, name: str) -> list[tuple[float, Component]]:
    """(weight, component) pairs of one kind across an estimate's atoms."""
    if est.scenario in ("dly",):
        comp = est.components.get(name)
        return [(1.0, comp)] if comp is not None else []
    if est.scenario == "dst":
        out = []
        for w, e in est.atoms:
            comp = e.components.get(name)
            if comp is not None:
                out.append((w, comp))
        return out
    return []


def tail_covariance(fit: CoxFit, est_1: RmstEstimate, est_j: RmstEstimate,
                    wedge: str = "min") -> float:
    """Covariance of the two groups' tail components.

    The post-delay martingales of the two strata are independent, so the
    coefficient term dominates; under delayed scenarios both tails also load
    on the stratum-1 cumulative hazard (group 1's tail through its own
    survival curve, group j's through the splice point), adding a
    point-coupling martingale term.
    """
    if est_1.stratum == est_j.stratum:
        raise ValueError("tail_covariance expects estimates from two strata")
    cov = beta_cov(fit, est_1.psi_tail, est_j.psi_tail)
    ref, cmp_ = (est_1, est_j) if est_1.stratum == 1 else (est_j, est_1)
    for w1, tail_1 in _weighted_parts(ref, "tail"):
        for wj, tail_j in _weighted_parts(cmp_, "tail"):
            if tail_1.mg_stratum == 1 and tail_j.mg_stratum != 1:
                cov += w1 * wj * _tail_mass(tail_j) \
                    * mg_point_cov(fit, tail_1, tail_j.lo, wedge)
    return cov


def full_covariance(fit: CoxFit, est_1: RmstEstimate, est_j: RmstEstimate,
                    wedge: str = "min") -> float:
    """Covariance of the two groups' full scenario means.

    For delayed scenarios the stratum-1 curve enters both estimates (group 1
    in full, group j through its pre-delay head), adding a martingale cross
    term on top of the coefficient term.
    """
    if est_1.stratum == est_j.stratum:
        raise ValueError("full_covariance expects estimates from two strata")
    cov = beta_cov(fit, est_1.psi, est_j.psi)
    comp_1 = est_1.components.get("full") or est_1.components.get("main")
    if comp_1 is None and est_1.atoms:
        comp_1 = est_1.atoms[0][1].components.get("full")

    def heads(est):
        if est.scenario == "dly":
            head = est.components.get("head")
            return [(1.0, head)] if head is not None else []
        if est.scenario == "dst":
            out = []
            for w, e in est.atoms:
                head = e.components.get("head")
                if head is not None:
                    out.append((w, head))
            return out
        return []

    if comp_1 is not None:
        for w, head in heads(est_j):
            cov += w * mg_cov(fit, comp_1, head, wedge)
        for w, tail_j in _weighted_parts(est_j, "tail"):
            if tail_j.mg_stratum != 1:
                cov += w * _tail_mass(tail_j) \
                    * mg_point_cov(fit, comp_1, tail_j.lo, wedge)
    return cov
