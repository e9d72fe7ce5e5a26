"""Cost-effectiveness analysis for left-truncated censored survival data."""

from .cea import (CeInterval, CeReport, CostSpec, cost_effectiveness, icer,
                  inb, inb_curve)
from .cox import (BaselineHazard, CoxError, CoxFit, Diverged, FitConfig,
                  SingularInformation, StepFunction, fit, partial_likelihood)
from .data_model import (CovariateProfile, Dataset, DelaySpec, Diagnostic,
                         RawSubject, SubjectRecord, resolve_profile,
                         split_switcher_history, validate)
from .report import Report, emit_report, parse_report
from .rmst import (RmstEstimate, UnsupportedVariance, cov_dly_pair,
                   full_covariance, rmst_dly, rmst_dst, rmst_strt,
                   tail_covariance)
from .simlab import (Scenario, SimDesign, StudyResult, generate_dataset,
                     limiting_icer, run_study, theoretical_values)

__version__ = "0.1.0"
