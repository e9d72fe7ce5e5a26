"""Counting-process data structures for treatment-switching survival data.

Subjects contribute one record per treatment stratum they pass through.  A
record covers the half-open risk interval (entry, exit]: the subject is at
risk at analysis time t whenever entry < t <= exit.  Switchers are split into
a pre-switch record in stratum 1 and a post-switch record in their final
stratum, carrying the switch delay.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SubjectRecord",
    "RawSubject",
    "Dataset",
    "CovariateProfile",
    "DelaySpec",
    "Diagnostic",
    "split_switcher_history",
    "validate",
    "resolve_profile",
]


@dataclass(frozen=True)
class SubjectRecord:
    """One stratum-specific risk interval (entry, exit] for a subject."""

    subject_id: int
    entry: float
    exit: float
    event: bool
    stratum: int
    covariates: tuple[float, ...] = ()
    delay: float = 0.0


@dataclass(frozen=True)
class RawSubject:
    """Subject-level follow-up history before record splitting."""

    subject_id: int
    followup_end: float
    died: bool
    covariates: tuple[float, ...] = ()
    switch_to: int | None = None
    switch_time: float | None = None


def split_switcher_history(raw: RawSubject) -> list[SubjectRecord]:
    """Convert a subject history into counting-process records.

    Non-switchers yield a single stratum-1 record over (0, followup_end].
    Switchers yield a censored stratum-1 record over (0, switch_time] plus a
    delayed-entry record in the destination stratum; a zero-length pre-switch
    interval (immediate switch) is dropped.
    """
    if raw.followup_end <= 0:
        raise ValueError(f"subject {raw.subject_id}: follow-up end must be positive")
    if raw.switch_to is None:
        return [
            SubjectRecord(raw.subject_id, 0.0, raw.followup_end, raw.died, 1,
                          raw.covariates)
        ]
    if raw.switch_to == 1:
        raise ValueError(f"subject {raw.subject_id}: cannot switch into stratum 1")
    if raw.switch_time is None or raw.switch_time < 0:
        raise ValueError(f"subject {raw.subject_id}: switcher needs a delay >= 0")
    delta = raw.switch_time
    if delta >= raw.followup_end:
        raise ValueError(
            f"subject {raw.subject_id}: switch at {delta} is not before "
            f"follow-up end {raw.followup_end}")
    records = []
    if delta > 0.0:
        records.append(SubjectRecord(raw.subject_id, 0.0, delta, False, 1,
                                     raw.covariates, 0.0))
    records.append(SubjectRecord(raw.subject_id, delta, raw.followup_end, raw.died,
                                 raw.switch_to, raw.covariates, delta))
    return records


class Dataset:
    """Immutable record collection with cached array views."""

    def __init__(self, records: list[SubjectRecord], eta: float):
        if not records:
            raise ValueError("dataset needs at least one record")
        if eta <= 0:
            raise ValueError("eta must be positive")
        self.records = tuple(records)
        self.eta = float(eta)
        self.entry = np.array([r.entry for r in records], dtype=float)
        self.exit = np.array([r.exit for r in records], dtype=float)
        self.event = np.array([r.event for r in records], dtype=bool)
        self.stratum = np.array([r.stratum for r in records], dtype=int)
        self.delay = np.array([r.delay for r in records], dtype=float)
        p = len(records[0].covariates)
        self.covariates = np.array([r.covariates for r in records],
                                   dtype=float).reshape(len(records), p)
        self.p = p
        self.strata = tuple(sorted(set(self.stratum.tolist())))
        self.n_per_stratum = {j: int(np.sum(self.stratum == j)) for j in self.strata}
        # One covariate row per distinct subject (first record wins).
        seen: dict[int, int] = {}
        for i, r in enumerate(records):
            seen.setdefault(r.subject_id, i)
        self._subject_rows = np.array(sorted(seen.values()), dtype=int)
        self.n_subjects = len(self._subject_rows)

    def subject_covariates(self) -> np.ndarray:
        return self.covariates[self._subject_rows]

    def delta_floor(self) -> float:
        """Largest over strata of the smallest delay observed in the stratum."""
        floors = [float(np.min(self.delay[self.stratum == j])) for j in self.strata]
        return max(floors)

    def stratum_delays(self, j: int) -> np.ndarray:
        return self.delay[self.stratum == j]


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    record_index: int | None = None


def validate(dataset: Dataset) -> list[Diagnostic]:
    """Return structured diagnostics; an empty list means the dataset is clean."""
    out: list[Diagnostic] = []
    for i, r in enumerate(dataset.records):
        if not r.entry < r.exit:
            out.append(Diagnostic("EntryNotBeforeExit",
                                  f"record {i}: entry {r.entry} !< exit {r.exit}", i))
        if r.entry < 0:
            out.append(Diagnostic("NegativeEntry",
                                  f"record {i}: entry {r.entry} < 0", i))
        if len(r.covariates) != dataset.p:
            out.append(Diagnostic("CovariateDimensionMismatch",
                                  f"record {i}: expected {dataset.p} covariates", i))
        if r.stratum < 1:
            out.append(Diagnostic("BadStratum",
                                  f"record {i}: stratum {r.stratum} < 1", i))
    for j in range(1, max(dataset.strata) + 1):
        if j not in dataset.n_per_stratum:
            out.append(Diagnostic("EmptyStratum", f"no records in stratum {j}"))
        elif not np.any(dataset.event[dataset.stratum == j]):
            out.append(Diagnostic("NoEventsInStratum",
                                  f"stratum {j} has no observed events"))
    if dataset.eta <= dataset.delta_floor():
        out.append(Diagnostic("HorizonBelowDelayFloor",
                              f"eta {dataset.eta} must exceed the delay floor "
                              f"{dataset.delta_floor()}"))
    if np.any(dataset.exit > dataset.eta):
        out.append(Diagnostic("ExitBeyondHorizon",
                              "some records end after the analysis horizon eta"))
    return out


@dataclass(frozen=True)
class CovariateProfile:
    """Target covariate distribution for profile-averaged survival.

    kind is one of "observed" (empirical distribution of the subjects),
    "fixed" (a single covariate vector), or "weighted" (explicit atoms).
    """

    kind: str
    x: tuple[float, ...] | None = None
    atoms: tuple[tuple[float, tuple[float, ...]], ...] | None = None

    @classmethod
    def observed(cls) -> "CovariateProfile":
        return cls("observed")

    @classmethod
    def fixed(cls, x) -> "CovariateProfile":
        return cls("fixed", x=tuple(float(v) for v in np.atleast_1d(x)))

    @classmethod
    def weighted(cls, atoms) -> "CovariateProfile":
        return cls("weighted", atoms=tuple(
            (float(w), tuple(float(v) for v in np.atleast_1d(x))) for w, x in atoms))


def resolve_profile(profile: CovariateProfile,
                    dataset: Dataset) -> list[tuple[float, np.ndarray]]:
    """Expand a profile to explicit (weight, covariate-vector) atoms.

    Weights are validated to be positive and to sum to 1 within 1e-12.
    """
    if profile.kind == "observed":
        X = dataset.subject_covariates()
        w = 1.0 / len(X)
        return [(w, X[i].copy()) for i in range(len(X))]
    if profile.kind == "fixed":
        x = np.asarray(profile.x, dtype=float)
        if x.shape != (dataset.p,):
            raise ValueError(f"fixed profile has {x.size} coordinates, "
                             f"dataset has {dataset.p} covariates")
        return [(1.0, x)]
    if profile.kind == "weighted":
        atoms = [(float(w), np.asarray(x, dtype=float)) for w, x in profile.atoms]
        if not atoms:
            raise ValueError("weighted profile needs at least one atom")
        for w, x in atoms:
            if w <= 0:
                raise ValueError("profile weights must be positive")
            if x.shape != (dataset.p,):
                raise ValueError("profile atom dimension mismatch")
        total = sum(w for w, _ in atoms)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"profile weights sum to {total}, expected 1")
        return atoms
    raise ValueError(f"unknown profile kind {profile.kind!r}")


@dataclass(frozen=True)
class DelaySpec:
    """Delay distribution used by delay-averaged (DST) estimands.

    kind: "fixed" (single delay a), "discrete" (explicit atoms),
    "empirical" (observed post-switch delays of a stratum), or
    "mixture_exp" (point mass at zero plus an exponential tail, handled by
    Gauss-Legendre quadrature; no closed-form variance).
    """

    kind: str
    a: float | None = None
    atoms: tuple[tuple[float, float], ...] | None = None  # (weight, delta)
    point_mass_at_zero: float | None = None
    rate: float | None = None

    @classmethod
    def fixed(cls, a: float) -> "DelaySpec":
        return cls("fixed", a=float(a))

    @classmethod
    def discrete(cls, atoms) -> "DelaySpec":
        return cls("discrete", atoms=tuple((float(w), float(d)) for w, d in atoms))

    @classmethod
    def empirical(cls) -> "DelaySpec":
        return cls("empirical")

    @classmethod
    def mixture_exp(cls, point_mass_at_zero: float, rate: float) -> "DelaySpec":
        return cls("mixture_exp", point_mass_at_zero=float(point_mass_at_zero),
                   rate=float(rate))

    @property
    def is_discrete(self) -> bool:
        return self.kind in ("fixed", "discrete", "empirical")

    def resolve_atoms(self, dataset: Dataset | None = None,
                      stratum: int | None = None) -> list[tuple[float, float]]:
        """Return (weight, delay) atoms for the discrete kinds."""
        if self.kind == "fixed":
            if self.a is None or self.a < 0:
                raise ValueError("fixed delay must be >= 0")
            return [(1.0, self.a)]
        if self.kind == "discrete":
            atoms = list(self.atoms or ())
            if not atoms:
                raise ValueError("discrete delay spec needs atoms")
            total = sum(w for w, _ in atoms)
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"delay weights sum to {total}, expected 1")
            if any(w <= 0 or d < 0 for w, d in atoms):
                raise ValueError("delay atoms need positive weight, delay >= 0")
            merged: dict[float, float] = {}
            for w, d in atoms:
                merged[d] = merged.get(d, 0.0) + w
            return sorted(((w, d) for d, w in merged.items()), key=lambda t: t[1])
        if self.kind == "empirical":
            if dataset is None or stratum is None:
                raise ValueError("empirical delay spec needs a dataset and stratum")
            delays = dataset.stratum_delays(stratum)
            if delays.size == 0:
                raise ValueError(f"no stratum-{stratum} records to take delays from")
            w = 1.0 / delays.size
            merged = {}
            for d in delays.tolist():
                merged[d] = merged.get(d, 0.0) + w
            return sorted(((w, d) for d, w in merged.items()), key=lambda t: t[1])
        raise ValueError(f"{self.kind!r} delay spec has no discrete atoms")
