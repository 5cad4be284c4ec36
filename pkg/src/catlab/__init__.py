"""catlab: a simulation laboratory for heavy-tailed moving averages.

The package simulates multivariate moving averages driven by zero-mean
regularly varying noise and measures how their rare window-sum events behave:
which single noise vector causes them, where it sits in the window, how long
the event persists as the window slides, and how several equivalent
descriptions of the event probability converge to each other.
"""

from .cluster_stats import (ClusterRecord, cluster_records_from_csv,
                            cluster_records_to_csv, compute_cluster_extent,
                            dominant_value_cdf, exceedance_count,
                            extract_dominant_point)
from .errors import (AcceptanceTooRare, AllocationBudgetExceeded, CatlabError,
                     ConfigError, EmptyResult, EmptySample,
                     NoAtomReachesFailureSet, NonInvertibleTransform,
                     NotAbsolutelySummable, ScanRangeTooShort,
                     SetTouchesOrigin, SingularAggregate, WindowTooShort,
                     ZeroDenominator)
from .experiments import (ExperimentConfig, ResultRow, emit_report, parse_csv,
                          run_experiment, summarize)
from .failure_sets import FailureSet, mu_overlap
from .moving_average import (CoefficientFamily, ModelReport, ModelSpec,
                             WindowPath, assemble_window_path, operator_norm,
                             simulate_window_sums, validate_model,
                             window_weight, window_weight_stack)
from .rare_event import (ConditionedSample, EquivalenceReport, IndexSet,
                         WindowKit, condition_by_rejection,
                         estimate_equivalents, plant_single_jump,
                         single_vector_event_prob, symmetric_difference_ratio,
                         two_jump_ratio, window_event_prob_mc)
from .rng import substream
from .stat_tests import (Ecdf, bernoulli_ci, kolmogorov_survival,
                         ks_one_sample, ks_two_sample, norm_ppf,
                         prokhorov_bound)
from .tail_noise import (NoiseModel, SpectralMeasure, TailSetQuery,
                         noise_norm_tail_prob, sample_noise,
                         sample_noise_batch, tail_measure)

__version__ = "0.1.0"
