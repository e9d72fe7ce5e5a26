"""Shared fixtures and independent oracle implementations for the tests."""

import math

import numpy as np
import pytest

from ceasurv.data_model import Dataset, SubjectRecord


def make_record(i, entry, exit_, event, stratum, x=(), delay=None):
    cov = tuple(np.atleast_1d(x)) if np.ndim(x) else (float(x),)
    if x == ():
        cov = ()
    return SubjectRecord(subject_id=i, entry=float(entry), exit=float(exit_),
                         event=bool(event), stratum=int(stratum),
                         covariates=cov,
                         delay=float(entry) if delay is None else float(delay))


def naive_partial_loglik(dataset: Dataset, beta) -> float:
    """Loop-based partial log-likelihood, written independently of the
    package's vectorised version (full risk-set denominator for ties)."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    total = 0.0
    for j in dataset.strata:
        idx = [i for i in range(len(dataset.records)) if dataset.stratum[i] == j]
        times = sorted({dataset.exit[i] for i in idx if dataset.event[i]})
        for t in times:
            deaths = [i for i in idx if dataset.event[i] and dataset.exit[i] == t]
            risk = [i for i in idx
                    if dataset.entry[i] < t <= dataset.exit[i]]
            denom = sum(math.exp(float(dataset.covariates[i] @ beta))
                        for i in risk)
            for i in deaths:
                total += float(dataset.covariates[i] @ beta) - math.log(denom)
    return total


@pytest.fixture
def three_subject_dataset():
    """Events at t=1 and t=2, censoring at t=3; no covariates.

    Hand Nelson-Aalen: jumps 1/3 at t=1 and 1/2 at t=2.
    """
    recs = [make_record(0, 0, 1, True, 1),
            make_record(1, 0, 2, True, 1),
            make_record(2, 0, 3, False, 1)]
    return Dataset(recs, eta=3.0)


@pytest.fixture
def small_cov_dataset():
    """Three stratum-1 records with a binary covariate (events at 1 and 2)."""
    recs = [make_record(0, 0, 1, True, 1, 1.0),
            make_record(1, 0, 2, True, 1, 0.0),
            make_record(2, 0, 3, False, 1, 1.0)]
    return Dataset(recs, eta=3.0)


def random_two_stratum_dataset(rng, n=40, p=1, eta=6.0):
    """Small random dataset with delayed entry in stratum 2."""
    recs = []
    for i in range(n):
        x = tuple(rng.normal(0, 0.7, p))
        if rng.random() < 0.5:
            t = min(rng.exponential(2.0), eta)
            recs.append(SubjectRecord(i, 0.0, max(t, 1e-3), bool(t < eta), 1,
                                      x, 0.0))
        else:
            d = rng.uniform(0, 1)
            end = d + min(rng.exponential(3.0), eta - d)
            end = min(max(end, d + 1e-3), eta)
            recs.append(SubjectRecord(i, 0.0, d, False, 1, x, 0.0))
            recs.append(SubjectRecord(i, d, end, bool(end < eta), 2, x, d))
    return Dataset(recs, eta=eta)
