"""Stratified proportional-hazards fitting for counting-process records.

The partial likelihood handles delayed entry through the (entry, exit] risk
rule and resolves tied event times by giving every tied event the full
risk-set denominator.  Newton iteration starts at beta = 0 and backtracks by
step halving whenever a step fails to improve the partial log-likelihood.
After convergence the per-stratum baseline cumulative hazards are computed by
the profile (Breslow) plug-in, together with the cumulative event-time
kernels reused by the variance machinery:

    lam_cum(t) = sum_{T_p <= t} d_p / S0(T_p)
    v_cum(t)   = sum_{T_p <= t} d_p / S0(T_p)^2
    h_cum(t)   = sum_{T_p <= t} d_p * S1(T_p) / S0(T_p)^2

where S0/S1 are the raw risk-set sums of exp(beta'X) and X exp(beta'X).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data_model import Dataset

__all__ = [
    "CoxError",
    "Diverged",
    "SingularInformation",
    "FitConfig",
    "StepFunction",
    "BaselineHazard",
    "CoxFit",
    "fit",
    "partial_likelihood",
]


class CoxError(Exception):
    pass


class Diverged(CoxError):
    def __init__(self, message: str, beta: np.ndarray):
        super().__init__(message)
        self.beta = beta


class SingularInformation(CoxError):
    pass


@dataclass(frozen=True)
class FitConfig:
    max_iter: int = 50
    tol_score: float = 1e-8
    tol_beta: float = 1e-10
    max_halvings: int = 30
    ridge: float = 0.0


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function: value is `values[k]` on [knots[k], knots[k+1])."""

    knots: np.ndarray
    values: np.ndarray
    initial: float = 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.knots, t, side="right")
        padded = np.concatenate(([self.initial], self.values))
        out = padded[idx]
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class BaselineHazard:
    """Breslow baseline cumulative hazard for one stratum at covariates = 0."""

    stratum: int
    times: np.ndarray      # distinct event times, ascending
    jumps: np.ndarray      # d_p / S0(T_p)
    cum: np.ndarray        # cumulative sums of jumps

    def cumhaz(self, t):
        return _step_eval(self.times, self.cum, t)

    def as_step_function(self) -> StepFunction:
        return StepFunction(self.times, self.cum, 0.0)


def _step_eval(times: np.ndarray, cum: np.ndarray, t):
    """Evaluate a cumulative-sum step function (right-continuous) at t."""
    t = np.asarray(t, dtype=float)
    idx = np.searchsorted(times, t, side="right")
    padded = np.concatenate(([0.0], cum))
    out = padded[idx]
    return out if out.ndim else float(out)


class _StratumWork:
    """Sorted views of one stratum's records for fast risk-set sums."""

    def __init__(self, entry, exit_, event, X):
        self.entry = entry
        self.exit = exit_
        self.event = event
        self.X = X
        self.order_exit = np.argsort(exit_, kind="stable")
        self.order_entry = np.argsort(entry, kind="stable")
        self.exit_sorted = exit_[self.order_exit]
        self.entry_sorted = entry[self.order_entry]
        times, counts = np.unique(exit_[event], return_counts=True)
        self.event_times = times
        self.d = counts.astype(float)
        # searchsorted positions of the event times into both sorted axes
        self.pos_exit = np.searchsorted(self.exit_sorted, times, side="left")
        self.pos_entry = np.searchsorted(self.entry_sorted, times, side="left")

    def _suffix(self, col_sorted: np.ndarray, pos: np.ndarray) -> np.ndarray:
        """Sum of col_sorted[k] for k >= pos, for each pos."""
        suf = np.concatenate((np.cumsum(col_sorted[::-1])[::-1], [0.0]))
        return suf[pos]

    def risk_sums(self, w: np.ndarray, X: np.ndarray, order: int):
        """Raw risk-set sums at the stratum event times.

        order 0 returns S0; order 1 adds S1 (m, p); order 2 adds S2 (m, p, p).
        A record is at risk at t when entry < t <= exit.
        """
        m = len(self.event_times)
        p = X.shape[1]
        S0 = (self._suffix(w[self.order_exit], self.pos_exit)
              - self._suffix(w[self.order_entry], self.pos_entry))
        if order == 0:
            return S0
        wX = w[:, None] * X
        S1 = np.empty((m, p))
        for k in range(p):
            S1[:, k] = (self._suffix(wX[self.order_exit, k], self.pos_exit)
                        - self._suffix(wX[self.order_entry, k], self.pos_entry))
        if order == 1:
            return S0, S1
        S2 = np.empty((m, p, p))
        for k in range(p):
            for l in range(k, p):
                col = wX[:, k] * X[:, l]
                s = (self._suffix(col[self.order_exit], self.pos_exit)
                     - self._suffix(col[self.order_entry], self.pos_entry))
                S2[:, k, l] = s
                S2[:, l, k] = s
        return S0, S1, S2


def _stratum_works(dataset: Dataset, X: np.ndarray) -> dict[int, _StratumWork]:
    works = {}
    for j in dataset.strata:
        mask = dataset.stratum == j
        works[j] = _StratumWork(dataset.entry[mask], dataset.exit[mask],
                                dataset.event[mask], X[mask])
    return works


def _loglik_score_info(works: dict[int, _StratumWork], X_by: dict[int, np.ndarray],
                       beta: np.ndarray, order: int = 2):
    """Partial log-likelihood and derivatives summed over strata."""
    p = beta.size
    loglik = 0.0
    score = np.zeros(p)
    info = np.zeros((p, p))
    for j, wk in works.items():
        Xj = X_by[j]
        lp = Xj @ beta if p else np.zeros(len(Xj))
        w = np.exp(lp)
        if order == 0:
            S0 = wk.risk_sums(w, Xj, 0)
            loglik += float(np.sum(lp[wk.event]) - np.sum(wk.d * np.log(S0)))
            continue
        S0, S1, S2 = wk.risk_sums(w, Xj, 2)
        loglik += float(np.sum(lp[wk.event]) - np.sum(wk.d * np.log(S0)))
        Ebar = S1 / S0[:, None]
        score += Xj[wk.event].sum(axis=0) - (wk.d[:, None] * Ebar).sum(axis=0)
        info += np.einsum("m,mkl->kl", wk.d, S2 / S0[:, None, None])
        info -= np.einsum("m,mk,ml->kl", wk.d, Ebar, Ebar)
    return loglik, score, info


def partial_likelihood(dataset: Dataset, beta) -> tuple[float, np.ndarray, np.ndarray]:
    """Evaluate (log-likelihood, score, observed information) at beta."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    works = _stratum_works(dataset, dataset.covariates)
    X_by = {j: works[j].X for j in works}
    return _loglik_score_info(works, X_by, beta)


@dataclass
class _StratumKernels:
    """Per-stratum cumulative event-time kernels at the fitted beta."""

    times: np.ndarray
    d: np.ndarray
    lam_cum: np.ndarray
    v_cum: np.ndarray
    h_cum: np.ndarray  # (m, p)

    def lam(self, t):
        return _step_eval(self.times, self.lam_cum, t)

    def windowed(self, cum: np.ndarray, start: float, t):
        """Sum of jumps over event times T with start < T <= t.

        Works for 1-d cumulative arrays (lam, v) and 2-d ones (h); the result
        broadcasts over an array of query times t.
        """
        i0 = np.searchsorted(self.times, start, side="right")
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right")
        if cum.ndim == 1:
            padded = np.concatenate(([0.0], cum))
            base = cum[i0 - 1] if i0 > 0 else 0.0
        else:
            padded = np.vstack((np.zeros((1, cum.shape[1])), cum))
            base = cum[i0 - 1] if i0 > 0 else np.zeros(cum.shape[1])
        out = padded[idx] - base
        return out


@dataclass
class CoxFit:
    """Fitted stratified proportional-hazards model."""

    beta: np.ndarray
    loglik: float
    score: np.ndarray
    info: np.ndarray        # raw observed information at beta-hat
    info_inv: np.ndarray    # inverse (pseudo-inverse never used; p x p)
    converged: bool
    iterations: int
    n_subjects: int
    n_per_stratum: dict[int, int]
    strata: tuple[int, ...]
    baselines: dict[int, BaselineHazard]
    kernels: dict[int, _StratumKernels] = field(repr=False, default_factory=dict)
    eta: float = np.inf

    @property
    def p(self) -> int:
        return self.beta.size

    def beta_se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.info_inv)) if self.p else np.zeros(0)

    def linear_predictor(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return float(x @ self.beta) if self.p else 0.0

    def cumhaz(self, stratum: int, t):
        return self.baselines[stratum].cumhaz(t)

    def survival(self, stratum: int, x, t, condition_from: float = 0.0):
        """Profile survival S_j(t | x) = exp{-e^{beta'x} Lam_j(t)}, optionally
        conditioned on being alive at `condition_from`."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < condition_from):
            raise ValueError("survival requested before the conditioning time")
        rel = np.exp(self.linear_predictor(x))
        base = self.cumhaz(stratum, condition_from) if condition_from > 0 else 0.0
        out = np.exp(-rel * (self.cumhaz(stratum, t_arr) - base))
        return out if np.ndim(out) else float(out)

    def event_times(self, stratum: int) -> np.ndarray:
        return self.kernels[stratum].times


def fit(dataset: Dataset, config: FitConfig | None = None,
        at_beta=None) -> CoxFit:
    """Fit the stratified model; `at_beta` skips the Newton solve and builds
    the fit object (baselines, kernels, information) at a supplied beta."""
    config = config or FitConfig()
    p = dataset.p
    X = dataset.covariates
    center = X.mean(axis=0) if p else np.zeros(0)
    Xc = X - center
    works = _stratum_works(dataset, Xc)
    X_by = {j: works[j].X for j in works}

    if at_beta is not None:
        beta = np.atleast_1d(np.asarray(at_beta, dtype=float))
        loglik, score, info = _loglik_score_info(works, X_by, beta)
        converged, iterations = True, 0
    elif p == 0:
        beta = np.zeros(0)
        loglik, score, info = _loglik_score_info(works, X_by, beta)
        converged, iterations = True, 0
    else:
        beta = np.zeros(p)
        loglik, score, info = _loglik_score_info(works, X_by, beta)
        converged = False
        iterations = 0
        for iterations in range(1, config.max_iter + 1):
            info_r = info + config.ridge * np.eye(p)
            try:
                step = np.linalg.solve(info_r, score)
            except np.linalg.LinAlgError:
                raise SingularInformation(
                    "observed information is singular; consider a ridge penalty")
            if not np.all(np.isfinite(step)) or np.linalg.cond(info_r) > 1e12:
                raise SingularInformation(
                    "observed information is numerically singular")
            new_beta = beta + step
            new_ll, new_score, new_info = _loglik_score_info(works, X_by, new_beta)
            halvings = 0
            while (not np.isfinite(new_ll) or new_ll < loglik) \
                    and halvings < config.max_halvings:
                step *= 0.5
                halvings += 1
                new_beta = beta + step
                new_ll, new_score, new_info = _loglik_score_info(works, X_by, new_beta)
            if not np.isfinite(new_ll) or new_ll < loglik - 1e-12:
                raise Diverged("partial likelihood failed to improve after "
                               f"{halvings} halvings", beta.copy())
            delta = np.max(np.abs(new_beta - beta))
            beta, loglik, score, info = new_beta, new_ll, new_score, new_info
            if np.max(np.abs(beta)) > 15:
                raise Diverged("coefficients escaping to infinity (monotone "
                               "likelihood / separation)", beta.copy())
            if np.max(np.abs(score)) < config.tol_score or delta < config.tol_beta:
                converged = True
                break
        if not converged:
            raise Diverged(f"no convergence in {config.max_iter} iterations", beta)

    # Information is invariant to covariate centering; invert once.
    if p:
        info_r = info + config.ridge * np.eye(p)
        try:
            info_inv = np.linalg.inv(info_r)
        except np.linalg.LinAlgError:
            raise SingularInformation("information singular at the solution")
    else:
        info_inv = np.zeros((0, 0))

    # Baselines and variance kernels at covariates = 0 (uncentered).
    baselines: dict[int, BaselineHazard] = {}
    kernels: dict[int, _StratumKernels] = {}
    for j in dataset.strata:
        wk = works[j]
        mask = dataset.stratum == j
        Xj = X[mask]
        lp = Xj @ beta if p else np.zeros(int(mask.sum()))
        w = np.exp(lp)
        if p:
            S0, S1 = wk.risk_sums(w, Xj, 1)
        else:
            S0 = wk.risk_sums(w, Xj, 0)
            S1 = np.zeros((len(wk.event_times), 0))
        jumps = wk.d / S0
        baselines[j] = BaselineHazard(j, wk.event_times, jumps, np.cumsum(jumps))
        kernels[j] = _StratumKernels(
            times=wk.event_times,
            d=wk.d,
            lam_cum=np.cumsum(wk.d / S0),
            v_cum=np.cumsum(wk.d / S0 ** 2),
            h_cum=np.cumsum(wk.d[:, None] * S1 / (S0 ** 2)[:, None], axis=0),
        )

    return CoxFit(beta=beta, loglik=loglik, score=score, info=info,
                  info_inv=info_inv, converged=converged, iterations=iterations,
                  n_subjects=dataset.n_subjects,
                  n_per_stratum=dict(dataset.n_per_stratum),
                  strata=dataset.strata, baselines=baselines, kernels=kernels,
                  eta=dataset.eta)
