"""Large-sample variance machinery for restricted-mean survival estimates.

Each estimand decomposes into "components": integrals of a profile-averaged
survival curve over a window [lo, hi] of one stratum's time axis.  For a
component the influence of the estimated regression coefficients enters
through the exact gradient psi = d(value)/d(beta), and the influence of the
baseline hazard enters through a martingale term whose covariance kernel is

    v(t) = sum over event times T_p <= t of  d_p / S0(T_p)^2 ,

optionally started at a conditioning time.  The covariance of two components
driven by the same stratum's martingale is the double Riemann sum

    sum_p sum_q v(min(L_p, L_q)) gamma_A(L_p) gamma_B(L_q) D_p D_q

over the left endpoints of the two integration grids, evaluated in O(m log m)
by prefix sums.  The coefficient covariance between two components is
psi_A' I^{-1} psi_B with I the raw observed information.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cox import CoxFit

__all__ = [
    "Component",
    "build_component",
    "mg_cov",
    "mg_point_cov",
    "point_kernel",
    "beta_cov",
    "dedupe_atoms",
]


@dataclass
class Component:
    """One windowed survival integral with its variance ingredients.

    kind is "plain" (survival conditioned at `cond`; cond = 0 gives the
    unconditional curve) or "spliced" (post-delay curve spliced onto the
    stratum-1 curve at the delay `cond`, used by delayed-initiation tails).
    mg_stratum names the stratum whose martingale drives the component and
    v_start the left end of its covariance kernel window.
    """

    stratum: int
    mg_stratum: int
    lo: float
    hi: float
    grid_left: np.ndarray   # left endpoints L_p of the integration intervals
    widths: np.ndarray      # D_p = L_{p+1} - L_p (last one ends at hi)
    sbar: np.ndarray        # profile-averaged survival at L_p
    gamma: np.ndarray       # profile average of exp(lp) * survival at L_p
    phi: np.ndarray         # (m, p) same with covariate weight
    psi: np.ndarray         # (p,) exact gradient of value w.r.t. beta
    v_start: float
    n_events: int

    @property
    def value(self) -> float:
        return float(self.sbar @ self.widths)


def dedupe_atoms(atoms) -> tuple[np.ndarray, np.ndarray]:
    """Collapse duplicate covariate vectors, summing weights.

    Returns (weights (k,), X (k, p)).
    """
    w = np.array([a[0] for a in atoms], dtype=float)
    X = np.array([np.atleast_1d(a[1]) for a in atoms], dtype=float)
    if len(atoms) > 1:
        Xu, inverse = np.unique(X, axis=0, return_inverse=True)
        wu = np.bincount(inverse, weights=w, minlength=len(Xu))
        return wu, Xu
    return w, X


def build_component(fit: CoxFit, stratum: int, atoms, lo: float, hi: float,
                    kind: str = "plain", cond: float = 0.0) -> Component:
    """Assemble a component for the window [lo, hi] of one stratum.

    kind "plain": survival exp{-e^lp (Lam_j(t) - Lam_j(cond))}; the
    martingale kernel starts at cond (0 for unconditional curves).
    kind "spliced": survival exp{-e^lp (Lam_1(cond) - Lam_j(cond) + Lam_j(t))}
    for t >= cond, the post-delay continuation of the stratum-1 curve; its
    stratum-j martingale kernel starts at cond.
    """
    if hi < lo:
        raise ValueError("window must satisfy lo <= hi")
    w, X = dedupe_atoms(atoms)
    p = fit.p
    ker = fit.kernels[stratum]
    interior = ker.times[(ker.times > lo) & (ker.times < hi)]
    grid = np.concatenate(([lo], interior, [hi]))
    L = grid[:-1]
    D = np.diff(grid)
    if hi == lo:
        L = np.zeros(0)
        D = np.zeros(0)

    lp = X @ fit.beta if p else np.zeros(len(X))
    rel = np.exp(lp)                      # (k,)
    lam_j = ker.lam(L) if L.size else np.zeros(0)

    if kind == "plain":
        lam_adj = lam_j - ker.lam(cond)
        # coefficient arrays for psi: windowed h and lam starting at cond
        h_win = ker.windowed(ker.h_cum, cond, L) if L.size else np.zeros((0, p))
        lam_coef = ker.windowed(ker.lam_cum, cond, L) if L.size else np.zeros(0)
        v_start = cond
    elif kind == "spliced":
        ker1 = fit.kernels[1]
        offset = ker1.lam(cond) - ker.lam(cond)
        lam_adj = offset + lam_j
        h1_at = ker1.windowed(ker1.h_cum, 0.0, np.array([cond]))[0] if p else \
            np.zeros(0)
        hj_at = ker.windowed(ker.h_cum, 0.0, np.array([cond]))[0] if p else \
            np.zeros(0)
        h_tail = ker.windowed(ker.h_cum, 0.0, L) if L.size else np.zeros((0, p))
        h_win = (h1_at - hj_at) + h_tail
        lam_coef = lam_adj
        v_start = cond
    else:
        raise ValueError(f"unknown component kind {kind!r}")

    surv = np.exp(-np.outer(rel, lam_adj))           # (k, m)
    sbar = w @ surv
    gamma = (w * rel) @ surv
    if p:
        phi = ((w * rel)[:, None] * X).T @ surv      # (p, m)
        phi = phi.T                                  # (m, p)
        psi = ((gamma[:, None] * h_win - lam_coef[:, None] * phi)
               * D[:, None]).sum(axis=0)
    else:
        phi = np.zeros((len(L), 0))
        psi = np.zeros(0)

    return Component(stratum=stratum, mg_stratum=stratum,
                     lo=lo, hi=hi, grid_left=L, widths=D, sbar=sbar, gamma=gamma,
                     phi=phi, psi=psi, v_start=v_start, n_events=len(interior))


def beta_cov(fit: CoxFit, psi_a: np.ndarray, psi_b: np.ndarray) -> float:
    """Coefficient-uncertainty covariance contribution psi_a' I^{-1} psi_b."""
    if fit.p == 0:
        return 0.0
    return float(psi_a @ fit.info_inv @ psi_b)


def point_kernel(fit: CoxFit, stratum: int, t: float,
                 start: float = 0.0) -> float:
    """Martingale covariance kernel v of one stratum evaluated at a point.

    This is the variance weight of the estimated cumulative hazard at t; a
    functional that depends on the baseline only through its value at t (the
    spliced post-delay curve depends on the pre-delay hazard exactly this
    way) contributes (sensitivity)^2 * point_kernel to the variance.
    """
    ker = fit.kernels[stratum]
    return float(np.maximum(ker.windowed(ker.v_cum, start,
                                         np.array([t]))[0], 0.0))


def mg_point_cov(fit: CoxFit, comp: Component, t: float,
                 wedge: str = "min") -> float:
    """Martingale covariance of a component with a unit point sensitivity.

    Returns sum_p v(wedge(L_p, t)) gamma(L_p) D_p over the component's grid,
    the cross term between a windowed survival integral and a functional
    whose baseline dependence is concentrated at the single time t (scale by
    that functional's sensitivity).  Both share the component's kernel start.
    """
    if comp.grid_left.size == 0:
        return 0.0
    ker = fit.kernels[comp.mg_stratum]
    pts = np.minimum(comp.grid_left, t) if wedge == "min" \
        else np.maximum(comp.grid_left, t)
    v = np.maximum(ker.windowed(ker.v_cum, comp.v_start, pts), 0.0)
    return float(np.sum(v * comp.gamma * comp.widths))


def mg_cov(fit: CoxFit, a: Component, b: Component, wedge: str = "min") -> float:
    """Martingale covariance of two components (0 if strata differ).

    wedge selects how the kernel is evaluated on pairs of grid points:
    "min" uses v(min(L_p, L_q)) (the martingale covariance), "max" uses
    v(max(L_p, L_q)) and is provided for comparison only.
    """
    if a.mg_stratum != b.mg_stratum or a.grid_left.size == 0 \
            or b.grid_left.size == 0:
        return 0.0
    ker = fit.kernels[a.mg_stratum]
    v0 = max(a.v_start, b.v_start)
    va = np.maximum(ker.windowed(ker.v_cum, v0, a.grid_left), 0.0)
    vb = np.maximum(ker.windowed(ker.v_cum, v0, b.grid_left), 0.0)
    ca = a.gamma * a.widths
    cb = b.gamma * b.widths
    # Same-grid fast path: v(min(L_p, L_q)) with an ascending grid only
    # depends on the earlier index.
    if a.grid_left.shape == b.grid_left.shape \
            and np.array_equal(a.grid_left, b.grid_left):
        v = va
        if wedge == "min":
            suffix_b = np.concatenate((np.cumsum(cb[::-1])[::-1], [0.0]))[1:]
            suffix_a = np.concatenate((np.cumsum(ca[::-1])[::-1], [0.0]))[1:]
            return float(np.sum(v * (ca * cb + ca * suffix_b + cb * suffix_a)))
        prefix_b = np.concatenate(([0.0], np.cumsum(cb)))[:-1]
        prefix_a = np.concatenate(([0.0], np.cumsum(ca)))[:-1]
        return float(np.sum(v * (ca * cb + ca * prefix_b + cb * prefix_a)))
    # Cross-grid: for each left point of grid A, split grid B at that point.
    idx = np.searchsorted(b.grid_left, a.grid_left, side="right")
    cum_vb = np.concatenate(([0.0], np.cumsum(vb * cb)))
    cum_b = np.concatenate(([0.0], np.cumsum(cb)))
    if wedge == "min":
        inner = cum_vb[idx] + va * (cum_b[-1] - cum_b[idx])
    elif wedge == "max":
        inner = va * cum_b[idx] + (cum_vb[-1] - cum_vb[idx])
    else:
        raise ValueError("wedge must be 'min' or 'max'")
    return float(np.sum(ca * inner))
