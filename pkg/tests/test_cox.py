import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ceasurv.cox import (Diverged, FitConfig, SingularInformation,
                         StepFunction, fit, partial_likelihood)
from ceasurv.data_model import Dataset

from conftest import (make_record, naive_partial_loglik,
                      random_two_stratum_dataset)


class TestStepFunction:
    def test_right_continuity_and_initial_value(self):
        f = StepFunction(np.array([1.0, 2.0]), np.array([0.5, 0.8]), initial=0.0)
        assert f(0.5) == 0.0
        assert f(1.0) == 0.5       # value jumps at the knot
        assert f(1.5) == 0.5
        assert f(2.0) == 0.8
        assert f(10.0) == 0.8

    def test_vectorised_evaluation(self):
        f = StepFunction(np.array([1.0]), np.array([2.0]), initial=1.0)
        np.testing.assert_allclose(f(np.array([0.0, 1.0, 3.0])),
                                   [1.0, 2.0, 2.0])


class TestBaseline:
    def test_matches_hand_nelson_aalen(self, three_subject_dataset):
        """With no covariates the baseline is the Nelson-Aalen estimator:
        jumps 1/3 (3 at risk at t=1) and 1/2 (2 at risk at t=2)."""
        f = fit(three_subject_dataset)
        assert f.cumhaz(1, 0.5) == 0.0
        assert f.cumhaz(1, 1.0) == pytest.approx(1 / 3, abs=0)
        assert f.cumhaz(1, 2.5) == pytest.approx(1 / 3 + 1 / 2, abs=0)
        assert f.cumhaz(1, 3.0) == pytest.approx(5 / 6)

    def test_delayed_entry_shrinks_risk_set(self):
        """A subject entering at 1.5 is not at risk for the t=1 event."""
        recs = [make_record(0, 0, 1, True, 1),
                make_record(1, 0, 3, False, 1),
                make_record(2, 1.5, 2, True, 1, delay=1.5)]
        f = fit(Dataset(recs, eta=3.0))
        assert f.cumhaz(1, 1.0) == pytest.approx(1 / 2)   # two at risk at t=1
        assert f.cumhaz(1, 2.0) == pytest.approx(1 / 2 + 1 / 2)

    def test_tied_events_share_full_denominator(self):
        recs = [make_record(0, 0, 1, True, 1),
                make_record(1, 0, 1, True, 1),
                make_record(2, 0, 2, False, 1)]
        f = fit(Dataset(recs, eta=2.0))
        assert f.cumhaz(1, 1.0) == pytest.approx(2 / 3)

    def test_exit_exactly_at_event_time_is_at_risk(self):
        recs = [make_record(0, 0, 1, True, 1),
                make_record(1, 0, 1, False, 1)]
        f = fit(Dataset(recs, eta=2.0))
        assert f.cumhaz(1, 1.0) == pytest.approx(1 / 2)


class TestFit:
    def test_grid_search_oracle_small_dataset(self):
        """Newton solution matches an independent grid-search maximiser."""
        recs = [make_record(0, 0, 0.5, True, 1, 1.0),
                make_record(1, 0, 1.1, True, 1, 0.0),
                make_record(2, 0, 1.7, False, 1, 1.0),
                make_record(3, 0, 2.3, True, 1, 0.0),
                make_record(4, 0, 0.8, True, 2, 1.0),
                make_record(5, 0, 1.9, True, 2, 0.0),
                make_record(6, 0, 2.8, False, 2, 1.0),
                make_record(7, 0, 2.9, True, 2, 1.0)]
        ds = Dataset(recs, eta=3.0)
        grid = np.linspace(-5, 5, 2001)
        lls = [naive_partial_loglik(ds, b) for b in grid]
        best = grid[int(np.argmax(lls))]
        fine = np.linspace(best - 0.01, best + 0.01, 2001)
        lls = [naive_partial_loglik(ds, b) for b in fine]
        oracle = fine[int(np.argmax(lls))]
        f = fit(ds)
        assert f.converged
        assert f.beta[0] == pytest.approx(oracle, abs=1e-4)

    def test_loglik_matches_naive_implementation(self):
        rng = np.random.default_rng(11)
        ds = random_two_stratum_dataset(rng, n=30)
        for beta in (-0.5, 0.0, 0.8):
            ll, _, _ = partial_likelihood(ds, [beta])
            assert ll == pytest.approx(naive_partial_loglik(ds, [beta]),
                                       rel=1e-12)

    def test_score_and_information_match_finite_differences(self):
        rng = np.random.default_rng(5)
        ds = random_two_stratum_dataset(rng, n=35, p=2)
        beta = np.array([0.3, -0.4])
        ll, score, info = partial_likelihood(ds, beta)
        h = 1e-6
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            lp, sp, _ = partial_likelihood(ds, beta + e)
            lm, sm, _ = partial_likelihood(ds, beta - e)
            assert score[k] == pytest.approx((lp - lm) / (2 * h), rel=1e-5)
            np.testing.assert_allclose(-info[:, k], (sp - sm) / (2 * h),
                                       rtol=1e-4, atol=1e-8)

    def test_covariate_location_shift_invariance(self):
        rng = np.random.default_rng(3)
        ds = random_two_stratum_dataset(rng, n=50)
        shifted = Dataset([type(r)(r.subject_id, r.entry, r.exit, r.event,
                                   r.stratum,
                                   tuple(c + 7.5 for c in r.covariates),
                                   r.delay)
                           for r in ds.records], eta=ds.eta)
        f0, f1 = fit(ds), fit(shifted)
        assert f1.beta[0] == pytest.approx(f0.beta[0], rel=1e-8)
        # survival at corresponding covariate values agrees
        t = np.array([1.0, 2.5])
        np.testing.assert_allclose(f1.survival(1, [7.5], t),
                                   f0.survival(1, [0.0], t), rtol=1e-8)

    def test_constant_covariate_raises_singular(self):
        recs = [make_record(i, 0, 1.0 + i, i < 3, 1, 1.0) for i in range(4)]
        with pytest.raises(SingularInformation):
            fit(Dataset(recs, eta=5.0))

    def test_ridge_rescues_singular_information(self):
        recs = [make_record(i, 0, 1.0 + i, i < 3, 1, 1.0) for i in range(4)]
        f = fit(Dataset(recs, eta=5.0), FitConfig(ridge=1e-4))
        assert f.converged

    def test_monotone_likelihood_diverges(self):
        """Perfectly separated covariate has no finite maximiser."""
        recs = [make_record(0, 0, 1, True, 1, 1.0),
                make_record(1, 0, 2, True, 1, 1.0),
                make_record(2, 0, 3, True, 1, 0.0),
                make_record(3, 0, 4, True, 1, 0.0)]
        with pytest.raises((Diverged, SingularInformation)):
            fit(Dataset(recs, eta=5.0), FitConfig(max_iter=50))

    def test_at_beta_skips_newton(self, small_cov_dataset):
        f = fit(small_cov_dataset, at_beta=[0.5])
        assert f.beta[0] == 0.5
        assert f.iterations == 0

    def test_fit_reports_sample_sizes(self):
        rng = np.random.default_rng(1)
        ds = random_two_stratum_dataset(rng, n=20)
        f = fit(ds)
        assert f.n_per_stratum == ds.n_per_stratum
        assert f.n_subjects == ds.n_subjects


class TestSurvival:
    def test_survival_is_exp_of_minus_cumhaz(self, small_cov_dataset):
        f = fit(small_cov_dataset, at_beta=[0.3])
        t = 2.4
        expected = np.exp(-np.exp(0.3) * f.cumhaz(1, t))
        assert f.survival(1, [1.0], t) == pytest.approx(expected, rel=1e-14)

    def test_conditional_survival_ratio(self, small_cov_dataset):
        f = fit(small_cov_dataset, at_beta=[0.3])
        s_cond = f.survival(1, [1.0], 2.5, condition_from=1.5)
        assert s_cond == pytest.approx(
            f.survival(1, [1.0], 2.5) / f.survival(1, [1.0], 1.5), rel=1e-12)

    def test_survival_before_conditioning_time_rejected(self, small_cov_dataset):
        f = fit(small_cov_dataset)
        with pytest.raises(ValueError):
            f.survival(1, [0.0], 0.5, condition_from=1.0)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_survival_monotone_and_bounded(self, seed):
        rng = np.random.default_rng(seed)
        ds = random_two_stratum_dataset(rng, n=25)
        try:
            f = fit(ds)
        except (Diverged, SingularInformation):
            return
        t = np.linspace(0, ds.eta, 40)
        for j in ds.strata:
            s = f.survival(j, [0.4], t)
            assert np.all(s <= 1.0 + 1e-12) and np.all(s > 0)
            assert np.all(np.diff(s) <= 1e-12)
